"""Decentralized output-feedback LQG on multitree DAGs."""

__version__ = "0.1.0"
