"""Type-I error inflation from optional extra observations under re-testing."""

__version__ = "0.1.0"
