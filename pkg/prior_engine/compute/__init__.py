"""Geometry: rotation representations, trajectory encoding and samplers."""
