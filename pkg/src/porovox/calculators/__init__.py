"""Pipeline stages: pore labeling, patch plumbing, scoring, post-processing and degradation."""
