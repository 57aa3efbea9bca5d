"""Speaker-conditioned variational auto-encoder for spectral conversion.

The encoder maps a log-spectral frame to a diagonal Gaussian over a
speaker-independent latent code; the decoder maps ``[z, one_hot(speaker)]``
back to a frame. Conversion encodes with the source frame and decodes with
the target speaker's code.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .nn import AdamState, MlpParams, adam_step, init_mlp, mlp_backward, mlp_forward

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class VaeModel:
    """Encoder trunk with two linear heads, plus the mean decoder.

    ``enc_mu``/``enc_logsig`` both sit on top of the shared ``encoder``
    hidden stack. The decoder only predicts the mean; its variance is fixed
    to one. ``feature_mean``/``feature_std`` are frozen per-bin statistics:
    the encoder sees standardized frames and the decoder output is mapped
    back to the feature domain, where the likelihood is evaluated.
    """

    encoder: MlpParams
    enc_mu: MlpParams
    enc_logsig: MlpParams
    decoder: MlpParams
    speakers: Tuple[str, ...] = ()
    feature_mean: Optional[np.ndarray] = None
    feature_std: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.feature_mean is None:
            self.feature_mean = np.zeros(self.encoder.in_dim)
        if self.feature_std is None:
            self.feature_std = np.ones(self.encoder.in_dim)
        self.feature_mean = np.asarray(self.feature_mean, dtype=np.float64)
        self.feature_std = np.asarray(self.feature_std, dtype=np.float64)
        if self.feature_mean.shape != (self.input_dim,) or self.feature_std.shape != (self.input_dim,):
            raise ShapeError("feature statistics must have input_dim entries")
        if np.any(self.feature_std <= 0):
            raise ShapeError("feature_std must be positive")
        h = self.encoder.out_dim
        if self.enc_mu.in_dim != h or self.enc_logsig.in_dim != h:
            raise ShapeError("encoder heads must take the trunk output")
        if self.enc_mu.out_dim != self.enc_logsig.out_dim:
            raise ShapeError("z_mu and z_logsig heads must have equal width")
        for head in (self.enc_mu, self.enc_logsig, self.decoder):
            if head.layers[-1].activation != "linear":
                raise ShapeError("output layers must be linear")
        if self.decoder.in_dim <= self.latent_dim:
            raise ShapeError("decoder input must be latent_dim + speaker_dim")
        if self.decoder.out_dim != self.input_dim:
            raise ShapeError("decoder output must match input_dim")
        if self.speakers and len(self.speakers) != self.speaker_dim:
            raise ShapeError("speaker list length must equal speaker_dim")

    @property
    def input_dim(self) -> int:
        return self.encoder.in_dim

    @property
    def latent_dim(self) -> int:
        return self.enc_mu.out_dim

    @property
    def speaker_dim(self) -> int:
        return self.decoder.in_dim - self.latent_dim

    @property
    def hidden(self) -> Tuple[int, ...]:
        return tuple(l.fan_out for l in self.encoder.layers)

    def parts(self) -> List[Tuple[str, MlpParams]]:
        return [
            ("encoder", self.encoder),
            ("enc_mu", self.enc_mu),
            ("enc_logsig", self.enc_logsig),
            ("decoder", self.decoder),
        ]

    def tensors(self) -> List[np.ndarray]:
        return [t for _, p in self.parts() for t in p.tensors()]

    def named_tensors(self) -> List[Tuple[str, np.ndarray]]:
        return [nt for name, p in self.parts() for nt in p.named_tensors(name + ".")]

    def copy(self) -> "VaeModel":
        return VaeModel(
            self.encoder.copy(),
            self.enc_mu.copy(),
            self.enc_logsig.copy(),
            self.decoder.copy(),
            self.speakers,
            self.feature_mean.copy(),
            self.feature_std.copy(),
        )


def init_vae(
    input_dim: int,
    speaker_dim: int,
    latent_dim: int = 64,
    hidden: Sequence[int] = (512, 512),
    seed: int = 0,
    speakers: Sequence[str] = (),
) -> VaeModel:
    if not hidden:
        raise ConfigError("at least one hidden layer is required")
    if speaker_dim < 1 or latent_dim < 1 or input_dim < 1:
        raise ConfigError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    hidden = list(hidden)
    encoder = init_mlp([input_dim] + hidden, rng, output_activation="relu")
    enc_mu = init_mlp([hidden[-1], latent_dim], rng)
    enc_logsig = init_mlp([hidden[-1], latent_dim], rng)
    decoder = init_mlp([latent_dim + speaker_dim] + hidden[::-1] + [input_dim], rng)
    return VaeModel(encoder, enc_mu, enc_logsig, decoder, tuple(speakers))


def fit_feature_stats(model: VaeModel, frames, min_std: float = 1e-3) -> VaeModel:
    """Return a copy of ``model`` with standardization fitted to ``frames``."""
    frames = _check_frames(model, frames)
    out = model.copy()
    out.feature_mean = frames.mean(axis=0)
    out.feature_std = np.maximum(frames.std(axis=0), min_std)
    return out


def one_hot(index: Union[int, Sequence[int], np.ndarray], dim: int) -> np.ndarray:
    idx = np.asarray(index, dtype=np.int64)
    if np.any(idx < 0) or np.any(idx >= dim):
        raise ShapeError(f"speaker index out of range [0, {dim})")
    out = np.zeros(idx.shape + (dim,))
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


def _speaker_code(y, dim: int) -> np.ndarray:
    if np.isscalar(y) or np.ndim(y) == 0:
        return one_hot(int(y), dim)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (dim,):
        raise ShapeError(f"speaker code has shape {y.shape}, expected ({dim},)")
    if np.count_nonzero(y == 1.0) != 1 or np.count_nonzero(y) != 1:
        raise ShapeError("speaker code must be one-hot")
    return y


def _check_frames(model: VaeModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ShapeError(f"frames shape {x.shape} does not match input_dim {model.input_dim}")
    return x


def encode(model: VaeModel, x) -> Tuple[np.ndarray, np.ndarray]:
    x = _check_frames(model, x)
    h, _ = mlp_forward(model.encoder, (x - model.feature_mean) / model.feature_std)
    z_mu, _ = mlp_forward(model.enc_mu, h)
    z_logsig, _ = mlp_forward(model.enc_logsig, h)
    return z_mu, z_logsig


def decode(model: VaeModel, z: np.ndarray, codes: np.ndarray) -> np.ndarray:
    out, _ = mlp_forward(model.decoder, np.concatenate([z, codes], axis=1))
    return out * model.feature_std + model.feature_mean


@dataclass
class LatentSample:
    z_mu: np.ndarray
    z_logsig: np.ndarray
    z_hat: np.ndarray
    epsilon: np.ndarray


def reparameterize(
    z_mu: np.ndarray,
    z_logsig: np.ndarray,
    rng: Union[int, np.random.Generator, None] = None,
    epsilon: Optional[np.ndarray] = None,
) -> LatentSample:
    """Draw one sample ``z_mu + eps * exp(z_logsig)`` with ``eps ~ N(0, I)``.

    Pass ``epsilon`` to freeze the noise.
    """
    z_mu = np.asarray(z_mu, dtype=np.float64)
    z_logsig = np.asarray(z_logsig, dtype=np.float64)
    if z_mu.shape != z_logsig.shape:
        raise ShapeError(f"z_mu {z_mu.shape} vs z_logsig {z_logsig.shape}")
    if epsilon is None:
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        epsilon = rng.standard_normal(z_mu.shape)
    elif epsilon.shape != z_mu.shape:
        raise ShapeError(f"epsilon shape {epsilon.shape} vs {z_mu.shape}")
    return LatentSample(z_mu, z_logsig, z_mu + epsilon * np.exp(z_logsig), epsilon)


def kld_gaussian(z_mu, z_logsig):
    """KL(N(z_mu, exp(z_logsig)^2) || N(0, I)), summed over the last axis."""
    z_mu = np.asarray(z_mu, dtype=np.float64)
    z_logsig = np.asarray(z_logsig, dtype=np.float64)
    if z_mu.shape != z_logsig.shape:
        raise ShapeError(f"z_mu {z_mu.shape} vs z_logsig {z_logsig.shape}")
    if not (np.all(np.isfinite(z_mu)) and np.all(np.isfinite(z_logsig))):
        raise NumericError("non-finite latent parameters")
    # expm1(t) - t >= 0 for every t, so the sum is nonnegative term by term
    t = 2.0 * z_logsig
    return 0.5 * np.sum(z_mu**2 + (np.expm1(t) - t), axis=-1)


def gaussian_loglik(x, x_mu, log_sigma=0.0):
    """log N(x; x_mu, diag(exp(log_sigma)^2)), summed over the last axis."""
    x = np.asarray(x, dtype=np.float64)
    x_mu = np.asarray(x_mu, dtype=np.float64)
    if x.shape != x_mu.shape:
        raise ShapeError(f"x {x.shape} vs x_mu {x_mu.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x_mu))):
        raise NumericError("non-finite input to gaussian_loglik")
    log_sigma = np.asarray(log_sigma, dtype=np.float64)
    var = np.exp(2.0 * log_sigma)
    return -0.5 * np.sum(LOG_2PI + 2.0 * log_sigma + (x - x_mu) ** 2 / var, axis=-1)


@dataclass
class ElboBreakdown:
    kld: float
    loglik: float
    elbo: float

    @classmethod
    def from_terms(cls, kld: float, loglik: float) -> "ElboBreakdown":
        return cls(float(kld), float(loglik), float(loglik) - float(kld))


@dataclass
class TrainingSet:
    """Frames from every speaker pooled together, with per-frame speaker index."""

    frames: np.ndarray
    speakers: np.ndarray
    speaker_dim: int

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.speakers = np.asarray(self.speakers, dtype=np.int64)
        if self.frames.ndim != 2:
            raise ShapeError("frames must be a 2-D matrix")
        if self.speakers.shape != (self.frames.shape[0],):
            raise ShapeError("need exactly one speaker index per frame")
        if self.speakers.size and (
            self.speakers.min() < 0 or self.speakers.max() >= self.speaker_dim
        ):
            raise ShapeError(f"speaker index out of range [0, {self.speaker_dim})")

    def __len__(self) -> int:
        return self.frames.shape[0]


def _as_codes(model: VaeModel, codes, n: int) -> np.ndarray:
    codes = np.asarray(codes)
    if codes.ndim == 1:
        if codes.shape != (n,):
            raise ShapeError("one speaker index per frame required")
        return one_hot(codes, model.speaker_dim)
    if codes.shape != (n, model.speaker_dim):
        raise ShapeError(f"codes shape {codes.shape}, expected ({n}, {model.speaker_dim})")
    return codes.astype(np.float64)


def loss_and_grads(
    model: VaeModel, x: np.ndarray, codes: np.ndarray, epsilon: np.ndarray
) -> Tuple[float, List[np.ndarray], ElboBreakdown]:
    """Mean negative lower bound over the batch and its gradients.

    ``epsilon`` is the frozen reparameterization noise, shape
    ``(batch, latent_dim)``. Gradients follow ``model.tensors()`` order.
    """
    x = _check_frames(model, x)
    n = x.shape[0]
    y = _as_codes(model, codes, n)

    h, tape_h = mlp_forward(model.encoder, (x - model.feature_mean) / model.feature_std)
    z_mu, tape_mu = mlp_forward(model.enc_mu, h)
    z_logsig, tape_ls = mlp_forward(model.enc_logsig, h)
    sample = reparameterize(z_mu, z_logsig, epsilon=epsilon)
    out, tape_dec = mlp_forward(model.decoder, np.concatenate([sample.z_hat, y], axis=1))
    x_mu = out * model.feature_std + model.feature_mean

    kld = kld_gaussian(z_mu, z_logsig)
    loglik = gaussian_loglik(x, x_mu)
    breakdown = ElboBreakdown.from_terms(kld.mean(), loglik.mean())
    loss = -breakdown.elbo

    # d(loss)/d(x_mu) for the mean over frames of -loglik
    g_dec = mlp_backward(model.decoder, tape_dec, (x_mu - x) * model.feature_std / n)
    g_z = g_dec.input[:, : model.latent_dim]
    sigma = np.exp(z_logsig)
    g_mu = g_z + z_mu / n
    g_ls = g_z * epsilon * sigma + np.expm1(2.0 * z_logsig) / n
    g_head_mu = mlp_backward(model.enc_mu, tape_mu, g_mu)
    g_head_ls = mlp_backward(model.enc_logsig, tape_ls, g_ls)
    g_enc = mlp_backward(model.encoder, tape_h, g_head_mu.input + g_head_ls.input)

    grads = g_enc.tensors() + g_head_mu.tensors() + g_head_ls.tensors() + g_dec.tensors()
    return loss, grads, breakdown


def elbo_batch(
    model: VaeModel,
    frames,
    codes,
    rng: Union[int, np.random.Generator, None] = 0,
    epsilon: Optional[np.ndarray] = None,
) -> ElboBreakdown:
    """Mean per-frame KLD, log-likelihood and lower bound for one batch."""
    x = _check_frames(model, frames)
    y = _as_codes(model, codes, x.shape[0])
    z_mu, z_logsig = encode(model, x)
    sample = reparameterize(z_mu, z_logsig, rng=rng, epsilon=epsilon)
    x_mu = decode(model, sample.z_hat, y)
    kld = kld_gaussian(z_mu, z_logsig)
    loglik = gaussian_loglik(x, x_mu)
    return ElboBreakdown.from_terms(kld.mean(), loglik.mean())


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 128
    lr: float = 1e-4
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    samples: int = 1


@dataclass
class TrainResult:
    model: VaeModel
    history: List[ElboBreakdown]
    best_epoch: int
    diverged: bool = False
    final_model: Optional[VaeModel] = field(default=None, repr=False)


def train(model: VaeModel, data: TrainingSet, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Maximize the lower bound over shuffled mini-batches of the pooled set.

    Each history entry is the frame-weighted mean of the batch objectives
    seen during that epoch. The returned model is the checkpoint taken at
    the end of the epoch with the highest such value; the model as of the
    last epoch is kept in ``final_model``. ``model`` itself is not mutated.
    """
    if len(data) == 0:
        raise ConfigError("training set is empty")
    if data.frames.shape[1] != model.input_dim:
        raise ConfigError(
            f"training frames have dim {data.frames.shape[1]}, model expects {model.input_dim}"
        )
    if data.speaker_dim != model.speaker_dim:
        raise ConfigError("training set speaker_dim does not match the model")
    if config.epochs < 1 or config.batch_size < 1 or config.samples < 1:
        raise ConfigError("epochs, batch_size and samples must be positive")

    work = model.copy()
    params = work.tensors()
    names = [n for n, _ in work.named_tensors()]
    state = AdamState.for_params(
        params, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps
    )
    rng = np.random.default_rng(config.seed)
    n = len(data)
    L = config.samples

    history: List[ElboBreakdown] = []
    best = model.copy()
    best_elbo = -np.inf
    best_epoch = 0
    diverged = False
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        kld_sum = loglik_sum = 0.0
        ok = True
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            x = data.frames[idx]
            y = data.speakers[idx]
            if L > 1:
                x = np.tile(x, (L, 1))
                y = np.tile(y, L)
            eps = rng.standard_normal((x.shape[0], work.latent_dim))
            try:
                loss, grads, bd = loss_and_grads(work, x, y, eps)
                if not np.isfinite(loss):
                    raise NumericError("non-finite loss")
                adam_step(params, grads, state, names)
            except NumericError as exc:
                log.warning("epoch %d: %s", epoch + 1, exc)
                ok = False
                break
            kld_sum += bd.kld * len(idx)
            loglik_sum += bd.loglik * len(idx)
        if not ok or not all(np.all(np.isfinite(p)) for p in params):
            log.warning("training diverged in epoch %d; keeping epoch %d", epoch + 1, best_epoch)
            diverged = True
            break
        bd = ElboBreakdown.from_terms(kld_sum / n, loglik_sum / n)
        history.append(bd)
        log.info("epoch %d: kld %.4f loglik %.4f elbo %.4f", epoch + 1, bd.kld, bd.loglik, bd.elbo)
        if bd.elbo > best_elbo:
            best_elbo = bd.elbo
            best_epoch = epoch + 1
            best = work.copy()
    return TrainResult(best, history, best_epoch, diverged, None if diverged else work)


def convert_frame(model: VaeModel, x, y_target) -> np.ndarray:
    """Decode the frame's latent mean with the target speaker's code. No sampling."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise ShapeError(f"frame shape {x.shape}, expected ({model.input_dim},)")
    return convert_utterance(model, x[None, :], y_target)[0]


def convert_utterance(model: VaeModel, frames, y_target) -> np.ndarray:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != model.input_dim:
        raise ShapeError(f"frames shape {frames.shape} does not match input_dim {model.input_dim}")
    code = _speaker_code(y_target, model.speaker_dim)
    if frames.shape[0] == 0:
        return np.zeros((0, model.input_dim))
    z_mu, _ = encode(model, frames)
    return decode(model, z_mu, np.broadcast_to(code, (frames.shape[0], model.speaker_dim)))
