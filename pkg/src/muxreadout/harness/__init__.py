"""Experiment driver and command-line interface."""
