"""Numerical toolkit for boundary-concentrated measures, fractional
trace/extension operators and the fractional p-Laplacian on desk-scale
domains in one and two dimensions."""

__version__ = "0.1.0"
