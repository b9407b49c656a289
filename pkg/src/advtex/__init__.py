"""Adversarial 3D texture optimization against a differentiable policy.

A dual-renderer compositing pipeline carries gradients from an
action-space loss back to per-vertex object colors, and latent-dynamics
frame weighting concentrates the attack on behaviorally critical
timesteps of a scripted manipulation trajectory.
"""

__version__ = "0.1.0"
