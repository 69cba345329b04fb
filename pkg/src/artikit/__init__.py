"""Articulated CAD assembly kernel.

Declarative assembly plans with connector frames, deterministic assembly of a
kinematic tree, rule-based verification, a rollback-aware agent pipeline, an
experience store, evaluation metrics and URDF export.
"""

__version__ = "0.1.0"
