"""Simulated laser-to-fiber coupling workbench.

A four-axis Gaussian coupling surface driven by imprecise stepper motors,
an episodic POMDP environment on top of it, from-scratch off-policy
actor-critic agents (SAC, TQC, CrossQ, optionally TD3/DDPG), a training and
evaluation harness, and a WebSocket bridge for human play.
"""

__version__ = "0.1.0"
