"""Multi-robot grid path finding: footprint-aware D* Lite guidance plus a
rule-guided multi-agent PPO real-time planner."""

__version__ = "0.1.0"
