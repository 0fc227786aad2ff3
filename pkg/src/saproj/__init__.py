"""Simulation and numerics for synthetic-aperture projection mapping.

Light-transport construction for projector arrays, merged and per-projector
blur compensation, structured-light calibration, occlusion analysis and
image-quality metrics.
"""

__version__ = "0.1.0"
