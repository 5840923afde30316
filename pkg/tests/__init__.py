"""Test suite for the operator calculus lab."""
