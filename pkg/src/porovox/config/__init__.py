"""Configuration management for Porovox."""
