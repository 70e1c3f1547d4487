"""Belief-propagation SLAM over multipath radio features with bias estimation
and crowdsourced map fusion."""

__version__ = "0.1.0"
