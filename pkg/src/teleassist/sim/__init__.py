"""Deterministic fixed-timestep simulator, scenario loading, and CLI."""
