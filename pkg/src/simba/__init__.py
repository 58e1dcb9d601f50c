"""Spatio-temporal graph models for fault detection in 5G radio access networks.

The package bundles a numpy reverse-mode autodiff engine, a synthetic 7-cell
KPI generator with injected faults, preprocessing, the Simba model and two
baselines (GNN_RCA, MTGNN), training, evaluation and a CLI.
"""

__version__ = "0.1.0"
