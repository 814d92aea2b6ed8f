"""Massive MIMO downlink that beamforms to CSI terminals and broadcasts in the
estimated-channel nullspace: rate engine, Monte Carlo oracle and power solver."""

__version__ = "0.1.0"
