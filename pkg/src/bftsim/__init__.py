"""Deterministic simulator and trace checker for a pipelined BFT protocol
that resists tail-forking."""

__version__ = "0.1.0"
