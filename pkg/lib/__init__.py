"""Timed non-repudiation analysis library modules."""
