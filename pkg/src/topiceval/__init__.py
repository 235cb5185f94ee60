"""Topic classification and topic-based evaluation metrics for conversational bots."""

__version__ = "0.1.0"

PHATIC = "Phatic"
