"""Retrieval-grounded drafting engine for objection advice letters."""

__version__ = "0.1.0"
