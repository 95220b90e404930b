"""Interface-fitted finite elements for two-phase flow with surface tension."""
