"""Spectral point-cloud registration: LB eigenmaps plus robust (sliced) Wasserstein distances."""

__version__ = "1.0.0"
