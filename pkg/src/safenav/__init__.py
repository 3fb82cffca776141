"""Planar UAV navigation: TD3 training with shaped rewards and a CLF-CBF-QP safety filter."""

__version__ = "0.1.0"
