"""Threshold-policy actor-critic learning for MDPs and restless bandits."""

__version__ = "0.1.0"
