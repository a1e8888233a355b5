"""Procedural generation of geometry figure / caption datasets."""
