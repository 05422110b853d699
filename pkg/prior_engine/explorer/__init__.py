"""TD3 explorer with hindsight relabeling and an optional curiosity term."""
