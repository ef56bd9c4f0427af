"""Tests package for epinet."""
