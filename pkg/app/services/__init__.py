"""Service package for scenario execution, randomized suites and report writers."""

__all__ = ["suites", "runner", "reports"]
