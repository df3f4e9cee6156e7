"""Radar preprocessing, guided depth interpolation, ordinal depth coding and
depth evaluation for radar-assisted monocular depth estimation."""

__version__ = "0.1.0"
