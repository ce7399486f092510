"""plantbus: plant-data integration middleware and simulation harness."""

__version__ = "0.1.0"
