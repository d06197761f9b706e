"""Batch figure rendering for scheduling-reduction artifacts.

Reads the study's CSV/JSON files and writes static images; it never
imports the producing library and never mutates its inputs.
"""

__version__ = "0.1.0"

from .figures import FIGURE_KINDS, FigureSpec, SchemaError, render

__all__ = ["FIGURE_KINDS", "FigureSpec", "SchemaError", "render", "__version__"]
