"""gaitmpc: contact-explicit hierarchical locomotion stack.

Receding-horizon inverse-dynamics ILQR MPC with online per-foot flight-phase
injection, a desk-scale physics world, an MDP harness, a parallel environment
cluster with a newline-JSON TCP protocol, and baseline policies (scripted
gaits plus a CEM trainer).
"""

__version__ = "0.1.0"
