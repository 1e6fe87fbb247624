"""Losses and metrics for voxel-wise pore classification."""
