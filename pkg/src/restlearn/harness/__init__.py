"""Experiment harness: data synthesis, configuration, metrics, CLI."""
