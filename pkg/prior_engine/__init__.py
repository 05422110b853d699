"""Interaction-for-perception engine for articulated-object manipulation priors."""

__version__ = "0.1.0"
