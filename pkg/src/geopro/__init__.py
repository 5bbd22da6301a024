"""Motif-conditioned joint protein backbone/sequence design at desk scale."""

__version__ = "0.1.0"
