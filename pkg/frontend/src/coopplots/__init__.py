"""Offline figure generation from coopdrive CSV files."""
from .plots import SchemaError, plot_convergence, plot_trajectories

__all__ = ["SchemaError", "plot_convergence", "plot_trajectories"]
