"""CSV-driven figures for flow densities, training metrics, and dynamics."""

from .figures import SchemaError, plot_density_force, plot_energy_trace, plot_metrics

__version__ = "0.1.0"
