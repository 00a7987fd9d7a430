"""Short-term voltage stability assessment from post-disturbance PMU series."""

__version__ = "0.1.0"

from .core import Dataset, Label, NormStats, ScenarioParams, TimeSeriesInstance  # noqa: E402

__all__ = ["Dataset", "Label", "NormStats", "ScenarioParams", "TimeSeriesInstance", "__version__"]
