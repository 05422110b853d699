"""Command-line driver: pipeline stages, evaluation and visual artifacts."""
