"""Porovox - volumetric porosity analysis for X-CT scans.

Heuristic pore labeling, patch-based anomaly scoring, surface suppression of
anomaly scores, classifier evaluation, CT degradation simulation and the
cross-validation harness tying them together.
"""

__version__ = "0.3.0"
__author__ = "Porovox Team"
