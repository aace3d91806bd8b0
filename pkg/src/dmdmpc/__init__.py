"""Reduced-order data-driven control of 2D thermal fields.

The package identifies a low-dimensional linear model from high-dimensional
field snapshots, embeds it in a constrained receding-horizon controller, and
provides a diffusion plant plus an experiment harness for closed-loop studies.
"""

__version__ = "0.1.0"
