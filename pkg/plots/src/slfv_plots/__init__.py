"""Figure rendering for slfvsim CSV experiment artifacts."""

from .render import KINDS, FigureJob, SchemaError, render

__all__ = ["KINDS", "FigureJob", "SchemaError", "render"]
