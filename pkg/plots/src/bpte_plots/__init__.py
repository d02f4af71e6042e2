"""Chart rendering for the traffic-engineering simulator's CSV outputs."""

from .render import FIGURE_KINDS, FigureSpec, RenderError, pearson_r, render

__all__ = ["FIGURE_KINDS", "FigureSpec", "RenderError", "pearson_r", "render"]
