"""Experiment configuration, runners and result serialization."""
