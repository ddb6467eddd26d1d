"""Sequence-labeling toolkit: recurrent taggers with label-embedding feedback."""

__version__ = "0.1.0"
