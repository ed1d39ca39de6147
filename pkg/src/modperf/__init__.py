"""modperf: synthetic modular-system workbench for performance-influence
modeling, quantifying modeling hardness and the opportunity created by
structural knowledge."""

__version__ = "0.1.0"
