"""Rule-based manipulation heuristics using ground-truth joints and handle annotations."""
