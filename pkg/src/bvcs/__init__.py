"""Validate a calculation implementation against spreadsheet calculation specifications."""

__version__ = "0.1.0"
