"""Multi-biometric fuzzy vault: feature fusion, vault locking, list decoding and evaluation."""

__version__ = "0.1.0"
