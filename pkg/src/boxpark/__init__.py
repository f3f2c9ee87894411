"""Desk-scale multi-task RL: reference-guided imitation + goal-driven generalization
on a planar box-parkour environment, with an assistive-wrench curriculum, asymmetric
actor-critic PPO, and a rule-based skill composer."""

__version__ = "0.1.0"
