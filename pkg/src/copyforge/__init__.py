"""Model-agnostic copies of hard-label classifiers."""
__version__ = "0.1.0"
