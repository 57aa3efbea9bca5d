"""Exemplar-based NMF conversion with paired source/target dictionaries.

There is no training: the dictionary is a random sample of aligned frame
pairs. A source frame is explained as a nonnegative mix of source
exemplars and the same mix of the paired target exemplars is the output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

FLOOR = 1e-12


@dataclass
class EnmfDictionary:
    src_basis: np.ndarray  # (dims, K)
    tgt_basis: np.ndarray  # (dims, K)

    def __post_init__(self):
        self.src_basis = np.asarray(self.src_basis, dtype=np.float64)
        self.tgt_basis = np.asarray(self.tgt_basis, dtype=np.float64)
        if self.src_basis.ndim != 2 or self.src_basis.shape != self.tgt_basis.shape:
            raise ShapeError("source and target bases must have the same (dims, K) shape")
        if np.any(self.src_basis < 0) or np.any(self.tgt_basis < 0):
            raise ValueError("dictionary entries must be nonnegative")

    @property
    def K(self) -> int:
        return self.src_basis.shape[1]


def build_dictionary(src_frames, tgt_frames, K: int, seed: int = 0) -> EnmfDictionary:
    """Sample ``K`` aligned pairs without replacement. Rows are frames."""
    src_frames = np.asarray(src_frames, dtype=np.float64)
    tgt_frames = np.asarray(tgt_frames, dtype=np.float64)
    if src_frames.shape != tgt_frames.shape:
        raise ShapeError("aligned source/target frame sets must match in shape")
    if K < 1 or K > src_frames.shape[0]:
        raise ConfigError(f"need {K} aligned pairs, only {src_frames.shape[0]} available")
    idx = np.random.default_rng(seed).choice(src_frames.shape[0], size=K, replace=False)
    return EnmfDictionary(src_frames[idx].T, tgt_frames[idx].T)


def kl_divergence(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Generalized KL divergence D(x || y) per column."""
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(x > 0, x * np.log(x / np.maximum(y, FLOOR)), 0.0)
    return np.sum(t - x + y, axis=0)


def euclidean(x, y) -> np.ndarray:
    return 0.5 * np.sum((np.asarray(x) - np.asarray(y)) ** 2, axis=0)


def solve_activation(
    dictionary: EnmfDictionary,
    x,
    iterations: int = 100,
    divergence: str = "kl",
    return_history: bool = False,
):
    """Multiplicative updates for ``h >= 0`` with the source basis held fixed.

    ``x`` is a single frame ``(dims,)`` or a matrix of frames ``(dims, T)``.
    Activations start uniform at ``1/K``. With ``return_history`` the
    objective before the first update and after each update is returned too.
    """
    W = dictionary.src_basis
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[:, None] if single else x
    if X.shape[0] != W.shape[0]:
        raise ShapeError(f"frame dim {X.shape[0]} != dictionary dim {W.shape[0]}")
    if np.any(X < 0):
        raise ValueError("frames must be nonnegative")
    if divergence not in ("kl", "euclidean"):
        raise ConfigError(f"unknown divergence {divergence!r}")
    objective = kl_divergence if divergence == "kl" else euclidean
    H = np.full((W.shape[1], X.shape[1]), 1.0 / W.shape[1])
    col = W.sum(axis=0)[:, None]
    WtW = W.T @ W if divergence == "euclidean" else None
    history = [objective(X, W @ H)] if return_history else None
    for _ in range(iterations):
        if divergence == "kl":
            H *= (W.T @ (X / np.maximum(W @ H, FLOOR))) / np.maximum(col, FLOOR)
        else:
            H *= (W.T @ X) / np.maximum(WtW @ H, FLOOR)
        if history is not None:
            history.append(objective(X, W @ H))
    h = H[:, 0] if single else H
    if return_history:
        hist = np.array(history)
        return h, (hist[:, 0] if single else hist)
    return h


def enmf_convert(dictionary: EnmfDictionary, frames, iterations: int = 100, divergence: str = "kl"):
    """Convert unit-sum source frames (rows) to unit-sum target frames."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise ShapeError("frames must be (frames, dims)")
    if frames.shape[0] == 0:
        return frames.copy()
    H = solve_activation(dictionary, frames.T, iterations, divergence)
    out = (dictionary.tgt_basis @ H).T
    sums = out.sum(axis=1, keepdims=True)
    dead = sums[:, 0] <= FLOOR
    out = out / np.where(sums > FLOOR, sums, 1.0)
    out[dead] = 1.0 / out.shape[1]
    return out
