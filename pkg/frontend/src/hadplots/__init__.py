"""Figure rendering for hadspec comparison runs."""

__version__ = "0.1.0"

from .figures import FigureSpec, RenderError, render, render_grid
