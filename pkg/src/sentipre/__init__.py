"""Desk-scale two-stage sentiment-aware pre-training pipeline."""

__version__ = "0.1.0"
