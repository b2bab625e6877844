"""Dissynth: data-driven synthesis of dissipative state-feedback controllers."""

__version__ = "0.1.0"
