"""Static figures from scanmix harness result files."""

from .figures import PlotSpec, load_records, plot_hitting, plot_profiles, plot_scaling, render

__version__ = "0.1.0"
