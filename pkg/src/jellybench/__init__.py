"""Jellyfish species classification benchmark: CNN backbones as feature extractors for
softmax, classical and feedforward classifiers."""

__version__ = "0.1.0"
