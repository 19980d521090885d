"""Tests for the atomsqueeze package."""
