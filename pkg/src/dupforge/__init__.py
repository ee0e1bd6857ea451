"""dupforge: generate polluted duplicate-detection test data with a gold standard."""

__version__ = "0.1.0"
