"""daggerlab: active imitation learning with gated expert interventions.

Desk-scale environments, behavioral cloning, and the DAgger family of
expert-gating strategies (DAgger, Lazy, Ensemble, HG, and distillation-based
out-of-distribution gating with a minimal-expert-time dwell).
"""

__version__ = "0.1.0"
