"""Offline plotting for dmdmpc run directories.

The package reads only the documented on-disk formats (DMDMAT01 matrices,
metrics/summary CSV files, run.json metadata) and renders the figure families
of the closed-loop study: field heatmaps, 3D surfaces with constraint planes,
input trajectories, tracking-error curves, ablation grids, and
controller-comparison panels.
"""

__version__ = "0.1.0"
