"""Feature-augmented BiLSTM-CRF tagging of drug-related entities in clinical text."""

__version__ = "0.1.0"
