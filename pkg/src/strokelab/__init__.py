"""Striking-primitive learning toolkit.

Learns joint-space striking primitives from demonstrations, conditions them
through limit-clipped inverse kinematics to intercept a tracked ballistic
target, and refines them from scalar human feedback via weighted-likelihood EM.
Everything runs against a deterministic desk-scale simulator.
"""

__version__ = "0.1.0"
