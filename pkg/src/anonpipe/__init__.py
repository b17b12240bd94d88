"""Privacy-preserving collection pipeline: client encoding with nested
encryption, oblivious stash shuffling, crowd thresholding (plain or
blinded), and analyzer-side reconstruction and release."""

__version__ = "0.1.0"
