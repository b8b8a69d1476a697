"""Tests for the TILT solver."""
