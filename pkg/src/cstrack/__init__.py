"""Tracking rule-compliant agents on uncertain semantic maps.

Pipeline: build raster layers of spatial-relation statistics from noisy
vector maps, evaluate a probabilistic rule program over them, and feed the
resulting compliance likelihood, blended by a calibrated trust ratio, into
a particle filter's belief update.
"""

__version__ = "0.1.0"
