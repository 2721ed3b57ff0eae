"""Preference-based auto-tuning of MPC controllers on simulated plants.

The package wires together an active preference-learning global optimizer
(RBF surrogate fitted from pairwise comparisons, inverse-distance
exploration, particle-swarm acquisition search), a linear time-varying MPC
with condensed QP formulation, two simulated plants (an exothermic CSTR and
a kinematic bicycle), closed-loop calibration scenarios, a small HTTP
service for human-in-the-loop sessions, and a command line front end.
"""

__version__ = "0.1.0"
