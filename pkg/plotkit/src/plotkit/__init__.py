"""Figure rendering for formation-run trajectory files."""

from .io import PlotError, RunData, load_run
from .render import KINDS, PlotJob, decimate_indices, render

__version__ = "0.1.0"

__all__ = ["PlotError", "RunData", "load_run", "KINDS", "PlotJob",
           "decimate_indices", "render", "__version__"]
