"""Classification metrics, trajectory coverage and downstream manipulation success."""
