"""Synthesizer and step-level evaluator for joint logical-numerical reasoning tasks."""

__version__ = "0.1.0"
