"""Experiment protocols, sweeps, reports and the command line."""
