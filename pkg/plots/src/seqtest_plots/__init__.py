from .render import FIGURE_IDS, FigureSpec, RenderResult, SchemaError, render

__all__ = ["FIGURE_IDS", "FigureSpec", "RenderResult", "SchemaError", "render"]
