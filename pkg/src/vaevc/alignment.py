"""Energy VAD and dynamic time warping for parallel utterance pairs."""

from __future__ import annotations

import csv
import math
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ContractError, ShapeError

Path_ = List[Tuple[int, int]]


def vad(energy, margin_db: float = 40.0) -> np.ndarray:
    """Speech mask: frames whose energy is within ``margin_db`` of the loudest.

    ``energy`` is the natural log of each frame's magnitude sum, so the
    margin is converted with the amplitude convention (20 log10).
    """
    energy = np.asarray(energy, dtype=np.float64)
    if energy.size == 0:
        raise ShapeError("empty energy track")
    margin = margin_db * math.log(10.0) / 20.0
    return energy > energy.max() - margin


def distance_matrix(src: np.ndarray, tgt: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance between every source and target frame."""
    diff = src[:, None, :] - tgt[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def dtw(src, tgt) -> Tuple[Path_, float]:
    """Minimum-cost monotonic alignment under steps (1,0), (0,1), (1,1).

    Cost is the sum of squared Euclidean frame distances over every cell
    on the path. On ties the backtrace prefers the diagonal, then the
    source-only step, then the target-only step. Returns ``(path, cost)``.
    """
    src = np.atleast_2d(np.asarray(src, dtype=np.float64))
    tgt = np.atleast_2d(np.asarray(tgt, dtype=np.float64))
    if src.shape[0] == 0 or tgt.shape[0] == 0 or src.size == 0 or tgt.size == 0:
        raise ShapeError("dtw needs two nonempty sequences")
    if src.shape[1] != tgt.shape[1]:
        raise ShapeError(f"feature dims differ: {src.shape[1]} vs {tgt.shape[1]}")
    n, m = src.shape[0], tgt.shape[0]
    cost = distance_matrix(src, tgt).tolist()
    inf = math.inf
    acc = [[inf] * m for _ in range(n)]
    acc[0][0] = cost[0][0]
    row0 = acc[0]
    for j in range(1, m):
        row0[j] = row0[j - 1] + cost[0][j]
    for i in range(1, n):
        prev, cur, c = acc[i - 1], acc[i], cost[i]
        cur[0] = prev[0] + c[0]
        for j in range(1, m):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = best + c[j]

    path = [(n - 1, m - 1)]
    i, j = n - 1, m - 1
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            d, s, t = acc[i - 1][j - 1], acc[i - 1][j], acc[i][j - 1]
            if d <= s and d <= t:
                i, j = i - 1, j - 1
            elif s <= t:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    path.reverse()
    return path, acc[n - 1][m - 1]


def path_cost(path: Sequence[Tuple[int, int]], src, tgt) -> float:
    cost = distance_matrix(np.atleast_2d(src), np.atleast_2d(tgt))
    total = 0.0
    for i, j in path:
        total += cost[i, j]
    return total


def validate_path(path: Sequence[Tuple[int, int]], n_src: int, n_tgt: int) -> None:
    if not path or tuple(path[0]) != (0, 0) or tuple(path[-1]) != (n_src - 1, n_tgt - 1):
        raise ContractError("path must run from (0, 0) to the last frame pair")
    for (i0, j0), (i1, j1) in zip(path[:-1], path[1:]):
        di, dj = i1 - i0, j1 - j0
        if di not in (0, 1) or dj not in (0, 1) or di == dj == 0:
            raise ContractError(f"illegal step ({di}, {dj}) at ({i0}, {j0})")


def apply_alignment(path, src_frames, tgt_frames):
    """Keep every source frame once, paired with its first matched target frame."""
    src_frames = np.asarray(src_frames)
    tgt_frames = np.asarray(tgt_frames)
    validate_path(path, src_frames.shape[0], tgt_frames.shape[0])
    first = {}
    for i, j in path:
        first.setdefault(i, j)
    idx = np.array([first[i] for i in range(src_frames.shape[0])], dtype=np.int64)
    return src_frames, tgt_frames[idx]


def write_alignment_csv(path, alignment: Sequence[Tuple[int, int]]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["src_index", "tgt_index"])
        w.writerows(alignment)


def read_alignment_csv(path) -> Path_:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return [(int(a), int(b)) for a, b in rows[1:]]
