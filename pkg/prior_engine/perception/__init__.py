"""Actionability, trajectory-proposal and trajectory-scoring networks."""
