"""Grasp stability prediction at holding poses: synthetic data, features, a numpy BiLSTM, and evaluation."""

__version__ = "0.1.0"
