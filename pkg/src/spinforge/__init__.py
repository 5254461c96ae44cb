"""Spin-chain dynamics: OAT mapping, Bell correlations, probe-qubit readout."""
__version__ = "0.1.0"
