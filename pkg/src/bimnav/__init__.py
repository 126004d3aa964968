"""Safety-aware grid path planning with potential-field heuristics."""

__version__ = "0.1.0"
