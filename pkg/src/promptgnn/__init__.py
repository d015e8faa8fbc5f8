"""Contrastive pre-training and few-shot prompt tuning for graph encoders."""

__version__ = "0.1.0"
