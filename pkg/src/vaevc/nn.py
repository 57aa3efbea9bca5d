"""Dense feed-forward networks with hand-written backprop and ADAM.

Matrices are plain float64 ``numpy`` arrays. Batches are row-major:
``(batch, features)``. Layer weights are stored as ``(fan_in, fan_out)``
so a forward pass is ``x @ W + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import NumericError, ShapeError

ACTIVATIONS = ("relu", "linear")


@dataclass
class Dense:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "linear"

    @property
    def fan_in(self) -> int:
        return self.weight.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weight.shape[1]


@dataclass
class MlpParams:
    """Ordered stack of affine layers, each followed by its activation."""

    layers: List[Dense]

    def __post_init__(self):
        for i, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"layer {i}: unknown activation {layer.activation!r}")
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.weight.shape[1],):
                raise ShapeError(
                    f"layer {i}: weight {layer.weight.shape} incompatible with bias {layer.bias.shape}"
                )
            if i and self.layers[i - 1].fan_out != layer.fan_in:
                raise ShapeError(
                    f"layer {i}: fan_in {layer.fan_in} != previous fan_out {self.layers[i - 1].fan_out}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def out_dim(self) -> int:
        return self.layers[-1].fan_out

    def tensors(self) -> List[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def named_tensors(self, prefix: str = "") -> List[Tuple[str, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.layers):
            out.append((f"{prefix}layer{i}.weight", layer.weight))
            out.append((f"{prefix}layer{i}.bias", layer.bias))
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(
            [Dense(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )


def init_mlp(
    sizes: Sequence[int],
    rng: np.random.Generator,
    hidden_activation: str = "relu",
    output_activation: str = "linear",
) -> MlpParams:
    """Glorot-uniform weights, zero biases.

    ``sizes`` lists every width including input and output, so
    ``[513, 512, 512, 64]`` builds three layers.
    """
    if len(sizes) < 2:
        raise ValueError("need at least an input and an output size")
    layers = []
    n = len(sizes) - 1
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        act = output_activation if i == n - 1 else hidden_activation
        layers.append(Dense(w, np.zeros(fan_out), act))
    return MlpParams(layers)


@dataclass
class Tape:
    """Per-layer inputs and pre-activations recorded by :func:`mlp_forward`."""

    inputs: List[np.ndarray] = field(default_factory=list)
    pre: List[np.ndarray] = field(default_factory=list)


def mlp_forward(params: MlpParams, x: np.ndarray) -> Tuple[np.ndarray, Tape]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ShapeError(f"input shape {x.shape} does not match in_dim {params.in_dim}")
    tape = Tape()
    h = x
    for layer in params.layers:
        tape.inputs.append(h)
        a = h @ layer.weight + layer.bias
        tape.pre.append(a)
        h = np.maximum(a, 0.0) if layer.activation == "relu" else a
    return h, tape


@dataclass
class GradientSet:
    """Gradients for each layer of an :class:`MlpParams`, plus d(loss)/d(input)."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    input: np.ndarray

    def tensors(self) -> List[np.ndarray]:
        out = []
        for gw, gb in zip(self.weights, self.biases):
            out.extend((gw, gb))
        return out


def mlp_backward(params: MlpParams, tape: Tape, output_grad: np.ndarray) -> GradientSet:
    """Reverse-mode pass. ReLU's derivative at exactly 0 is taken as 0."""
    if len(tape.pre) != len(params.layers):
        raise ShapeError(
            f"tape has {len(tape.pre)} layers, params have {len(params.layers)}"
        )
    g = np.asarray(output_grad, dtype=np.float64)
    if g.shape != tape.pre[-1].shape:
        raise ShapeError(f"output_grad shape {g.shape} != output shape {tape.pre[-1].shape}")
    gws: List[np.ndarray] = [None] * len(params.layers)  # type: ignore[list-item]
    gbs: List[np.ndarray] = [None] * len(params.layers)  # type: ignore[list-item]
    for i in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[i]
        if tape.inputs[i].shape[1] != layer.fan_in:
            raise ShapeError(f"tape layer {i} does not match params")
        if layer.activation == "relu":
            g = g * (tape.pre[i] > 0.0)
        gws[i] = tape.inputs[i].T @ g
        gbs[i] = g.sum(axis=0)
        g = g @ layer.weight.T
    return GradientSet(gws, gbs, g)


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.step < 0:
            raise ValueError("step must be >= 0")

    @classmethod
    def for_params(cls, tensors: Sequence[np.ndarray], **hyper) -> "AdamState":
        return cls(
            m=[np.zeros_like(t) for t in tensors],
            v=[np.zeros_like(t) for t in tensors],
            **hyper,
        )


def _as_tensors(obj) -> List[np.ndarray]:
    return obj.tensors() if hasattr(obj, "tensors") else list(obj)


def adam_step(params, grads, state: AdamState, names: Optional[Sequence[str]] = None) -> None:
    """One ADAM update, in place on ``params`` and ``state``.

    ``params``/``grads`` are :class:`MlpParams`/:class:`GradientSet` or
    matching sequences of arrays. The update descends the gradient, so pass
    gradients of the loss being minimized.
    """
    ps = _as_tensors(params)
    gs = _as_tensors(grads)
    if names is None:
        names = (
            [n for n, _ in params.named_tensors()]
            if hasattr(params, "named_tensors")
            else [f"tensor{i}" for i in range(len(ps))]
        )
    if len(ps) != len(gs) or len(ps) != len(state.m):
        raise ShapeError(
            f"{len(ps)} params, {len(gs)} grads, {len(state.m)} moment buffers"
        )
    for name, p, g, m in zip(names, ps, gs, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"{name}: param {p.shape}, grad {g.shape}, moment {m.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(ps, gs, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_tensor: Optional[str]
    worst_index: Optional[Tuple[int, ...]]
    checked: int
    tolerance: float
    kinks: int = 0
    entries: List[Tuple[str, Tuple[int, ...], float, float, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradient_check(
    tensors: Sequence[np.ndarray],
    loss_and_grad: Callable[[], Tuple[float, Sequence[np.ndarray]]],
    tolerance: float = 1e-4,
    h: float = 1e-5,
    samples: Optional[int] = None,
    seed: int = 0,
    names: Optional[Sequence[str]] = None,
    floor: float = 1e-8,
    kink_tol: float = 1e-2,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``loss_and_grad`` must read the current values of ``tensors`` (they are
    perturbed in place and restored). With ``samples`` set, that many
    coordinates are checked, spread round-robin over the tensors; otherwise
    every coordinate is checked.

    A coordinate whose forward and backward one-sided differences disagree
    by more than ``kink_tol`` (relative) straddles a ReLU kink inside
    ``[-h, h]``; the central difference is meaningless there, so it is
    counted in ``kinks`` and, when sampling, replaced by a fresh draw.
    """
    tensors = list(tensors)
    names = list(names) if names is not None else [f"tensor{i}" for i in range(len(tensors))]
    report = GradCheckReport(0.0, None, None, 0, tolerance)
    nonempty = [k for k, t in enumerate(tensors) if t.size]
    if not nonempty:
        return report
    base, grads = loss_and_grad()
    grads = [np.array(g, dtype=np.float64, copy=True) for g in grads]

    def coords():
        if samples is None:
            for k in nonempty:
                for idx in np.ndindex(tensors[k].shape):
                    yield k, idx
            return
        rng = np.random.default_rng(seed)
        s = 0
        while True:
            k = nonempty[s % len(nonempty)]
            yield k, np.unravel_index(int(rng.integers(tensors[k].size)), tensors[k].shape)
            s += 1

    budget = None if samples is None else 10 * samples + 100
    for k, idx in coords():
        if samples is not None and (report.checked >= samples or budget <= 0):
            break
        if budget is not None:
            budget -= 1
        t = tensors[k]
        orig = t[idx]
        t[idx] = orig + h
        lp, _ = loss_and_grad()
        t[idx] = orig - h
        lm, _ = loss_and_grad()
        t[idx] = orig
        fwd, bwd = (lp - base) / h, (base - lm) / h
        if relative_error(fwd, bwd, floor) > kink_tol:
            report.kinks += 1
            continue
        numeric = (lp - lm) / (2.0 * h)
        analytic = float(grads[k][idx])
        err = relative_error(analytic, numeric, floor)
        index = tuple(int(i) for i in idx)
        report.entries.append((names[k], index, analytic, numeric, err))
        report.checked += 1
        if err >= report.max_rel_error:
            report.max_rel_error = err
            report.worst_tensor = names[k]
            report.worst_index = index
    return report
