"""Figure renderer for fluence-map optimization benchmark outputs."""

from .render import (
    PlotSpec,
    SchemaError,
    discover_traces,
    read_dvh,
    read_goals,
    read_trace,
    render_convergence,
    render_dvh,
)

__version__ = "0.1.0"
