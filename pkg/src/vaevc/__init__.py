"""Spectral voice conversion with a speaker-conditioned variational autoencoder.

Everything is plain numpy: the network, its training loop, an STFT
analysis/synthesis front end, DTW alignment, an exemplar NMF baseline and
mel-cepstral distortion scoring.
"""

from .errors import VCError

__version__ = "0.1.0"
__all__ = ["VCError", "__version__"]
