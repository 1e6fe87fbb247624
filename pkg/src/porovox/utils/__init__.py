"""Provenance hashing and console formatting helpers."""
