"""Procedural articulated objects, depth rendering and the kinematic contact engine."""
