"""Cooperative herding with abstracted-state Q-learning and Q-table fusion."""

__version__ = "0.1.0"
