"""Tests for the blindpdp package."""
