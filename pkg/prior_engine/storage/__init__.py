"""Record stores, point-cloud files, manifests, splits and checkpoints."""
