"""Bundled sweep configurations for the figure presets."""
