"""Opponent-strategy recognition in bilateral negotiation.

Simulates alternating-offers sessions between a nice tit-for-tat detector and
a labelled pool of opponent strategies, turns the traces into time-series
features (frequency-model utilities plus move categories), and trains a
from-scratch LSTM classifier to recognize which strategy the opponent runs.
"""

__version__ = "0.1.0"
