"""segrt: real-time word segmentation with a character-level neural boundary
classifier, trained from whitespace-segmented corpora."""

__version__ = "0.1.0"
