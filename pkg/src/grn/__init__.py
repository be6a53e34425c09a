"""Graph-reasoning rectification of noisy pseudo-labels for human parsing,
with a self-learning retraining pipeline and a desk-scale synthetic corpus."""

__version__ = "0.1.0"
