"""Simulation lab for excursion clouds, loop soups, free-field level sets and
Loewner-chain interfaces on the unit disk."""

__version__ = "0.1.0"
