"""Learned scheduling reduction: tanh encoder with an affine decoder.

A small fully-connected network maps operating points to a low-dimensional
scheduling vector; a final affine layer maps that vector back to the
vectorized model matrices.  Training minimizes the mean squared
reconstruction error of the (normalized) variations with Adam, l2 weight
regularization and early stopping on a validation split.  Because the
decoder is affine, folding the output normalization into its weights
yields a reduced model in the same affine-LPV format as the PCA route.

Everything here is plain numpy: forward, backprop and the optimizer are
written out so the gradients can be checked against finite differences.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .lpv import AffineLpvModel, VariationDataset
from .models import FactorizedModel, widen_degenerate
from .pca import Normalizer, fit_normalizer

log = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "MlpNetwork",
    "DnnReduction",
    "feature_map",
    "feature_dim",
    "adam_step",
    "AdamState",
    "train",
]


# ---------------------------------------------------------------------------
# Feature map
# ---------------------------------------------------------------------------


def feature_dim(model: FactorizedModel) -> int:
    return model.n_x + len(model.angle_indices) + model.n_u


def feature_map(model: FactorizedModel, X: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Network input features for operating points.

    Angular state coordinates are replaced by their sine/cosine pair
    (sines first, then cosines, inserted where the angle block sits); the
    remaining coordinates and the input pass through unchanged.  Models
    without angular states get the plain ``[x, u]`` stacking.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    U = np.atleast_2d(np.asarray(U, dtype=float))
    angles = model.angle_indices
    if not angles:
        return np.concatenate([X, U], axis=1)
    first = angles[0]
    rest = [i for i in range(model.n_x) if i not in angles]
    before = [i for i in rest if i < first]
    after = [i for i in rest if i > first]
    ang = X[:, list(angles)]
    return np.concatenate([X[:, before], np.sin(ang), np.cos(ang), X[:, after], U], axis=1)


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    """Training hyperparameters (defaults follow the reference setup)."""

    learning_rate: float = 1e-5
    batch_size: int = 128
    epochs: int = 200
    l2_weight: float = 1e-4
    seed: int = 0
    patience: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    hidden: tuple = (64, 64, 64, 64)
    bypass: bool = False
    normalization: str = "minmax"

    def __post_init__(self):
        if min(self.learning_rate, self.batch_size, self.epochs, self.patience) <= 0:
            raise ValueError("learning rate, batch size, epochs and patience must be positive")
        if self.l2_weight < 0:
            raise ValueError("l2 weight must be nonnegative")


class MlpNetwork:
    """Tanh multilayer perceptron with an affine decoding layer.

    The encoder is a stack of tanh layers whose final (bottleneck) width
    is the reduced scheduling dimension; the decoder is a single affine
    layer.  An optional linear bypass adds a trainable map from the input
    features directly onto the decoder output.
    """

    def __init__(self, n_in: int, hidden: Sequence[int], n_latent: int, n_out: int,
                 bypass: bool = False, rng: Optional[np.random.Generator] = None):
        rng = rng or np.random.default_rng(0)
        widths = [n_in, *hidden, n_latent]
        self.n_in, self.n_latent, self.n_out = n_in, n_latent, n_out
        self.Ws, self.bs = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            self.Ws.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            self.bs.append(np.zeros(fan_out))
        bound = np.sqrt(6.0 / (n_latent + n_out))
        self.W_gamma = rng.uniform(-bound, bound, size=(n_out, n_latent))
        self.b_gamma = np.zeros(n_out)
        self.W_bypass = np.zeros((n_out, n_in)) if bypass else None

    # -- parameter plumbing ---------------------------------------------

    def parameters(self) -> list:
        params = []
        for W, b in zip(self.Ws, self.bs):
            params += [W, b]
        params += [self.W_gamma, self.b_gamma]
        if self.W_bypass is not None:
            params.append(self.W_bypass)
        return params

    def set_parameters(self, params: Sequence[np.ndarray]):
        flat = self.parameters()
        if len(flat) != len(params):
            raise ValueError("parameter count mismatch")
        for dst, src in zip(flat, params):
            dst[...] = src

    def copy_parameters(self) -> list:
        return [p.copy() for p in self.parameters()]

    # -- forward / backward ----------------------------------------------

    def forward(self, F: np.ndarray, with_cache: bool = False):
        """Returns ``(theta, gamma)`` for features ``F`` of shape (N, n_in)."""
        F = np.atleast_2d(np.asarray(F, dtype=float))
        if F.shape[1] != self.n_in:
            raise ValueError(f"expected {self.n_in} input features, got {F.shape[1]}")
        a = F
        acts = [a]
        for W, b in zip(self.Ws, self.bs):
            a = np.tanh(a @ W.T + b)
            acts.append(a)
        theta = a
        gamma = theta @ self.W_gamma.T + self.b_gamma
        if self.W_bypass is not None:
            gamma = gamma + F @ self.W_bypass.T
        if with_cache:
            return theta, gamma, acts
        return theta, gamma

    def decode(self, theta: np.ndarray, features: Optional[np.ndarray] = None) -> np.ndarray:
        """Affine decode of scheduling values; bypass uses the fixed features."""
        theta = np.asarray(theta, dtype=float)
        single = theta.ndim == 1
        gamma = np.atleast_2d(theta) @ self.W_gamma.T + self.b_gamma
        if self.W_bypass is not None and features is not None:
            gamma = gamma + np.atleast_2d(np.asarray(features, dtype=float)) @ self.W_bypass.T
        return gamma[0] if single else gamma

    def loss_and_gradients(self, F: np.ndarray, targets: np.ndarray, l2_weight: float = 0.0):
        """Mean squared reconstruction loss and gradients for all parameters.

        The l2 penalty applies to weight matrices only, not biases.
        """
        targets = np.atleast_2d(np.asarray(targets, dtype=float))
        _, gamma, acts = self.forward(F, with_cache=True)
        B = gamma.shape[0]
        resid = gamma - targets
        loss = float(np.sum(resid**2) / B)

        d_gamma = (2.0 / B) * resid
        grads = {}
        grads["W_gamma"] = d_gamma.T @ acts[-1]
        grads["b_gamma"] = d_gamma.sum(axis=0)
        if self.W_bypass is not None:
            grads["W_bypass"] = d_gamma.T @ acts[0]
        d_a = d_gamma @ self.W_gamma
        for i in reversed(range(len(self.Ws))):
            d_z = d_a * (1.0 - acts[i + 1] ** 2)
            grads[f"W{i}"] = d_z.T @ acts[i]
            grads[f"b{i}"] = d_z.sum(axis=0)
            if i:
                d_a = d_z @ self.Ws[i]

        if l2_weight:
            for i, W in enumerate(self.Ws):
                loss += l2_weight * float(np.sum(W**2))
                grads[f"W{i}"] += 2.0 * l2_weight * W
            loss += l2_weight * float(np.sum(self.W_gamma**2))
            grads["W_gamma"] += 2.0 * l2_weight * self.W_gamma
            if self.W_bypass is not None:
                loss += l2_weight * float(np.sum(self.W_bypass**2))
                grads["W_bypass"] += 2.0 * l2_weight * self.W_bypass
        return loss, self._grad_list(grads)

    def _grad_list(self, grads: dict) -> list:
        out = []
        for i in range(len(self.Ws)):
            out += [grads[f"W{i}"], grads[f"b{i}"]]
        out += [grads["W_gamma"], grads["b_gamma"]]
        if self.W_bypass is not None:
            out.append(grads["W_bypass"])
        return out

    def loss(self, F: np.ndarray, targets: np.ndarray, l2_weight: float = 0.0) -> float:
        targets = np.atleast_2d(np.asarray(targets, dtype=float))
        _, gamma = self.forward(F)
        loss = float(np.sum((gamma - targets) ** 2) / gamma.shape[0])
        if l2_weight:
            loss += l2_weight * float(sum(np.sum(W**2) for W in self.Ws))
            loss += l2_weight * float(np.sum(self.W_gamma**2))
            if self.W_bypass is not None:
                loss += l2_weight * float(np.sum(self.W_bypass**2))
        return loss


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One bias-corrected Adam update, applied to the parameters in place."""
    state.t += 1
    t = state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


# ---------------------------------------------------------------------------
# Trained reduction
# ---------------------------------------------------------------------------


@dataclass
class DnnReduction:
    """A trained encoder/decoder pair exposed through the reduction API."""

    net: MlpNetwork
    input_normalizer: Normalizer
    output_normalizer: Normalizer
    layout: object
    model_name: str
    lpv: AffineLpvModel
    config: TrainConfig
    history: dict = field(default_factory=dict)

    @property
    def n_theta(self) -> int:
        return self.net.n_latent

    def features(self, model: FactorizedModel, X, U) -> np.ndarray:
        F = feature_map(model, X, U)
        return self.input_normalizer.normalize(F.T).T

    def encode(self, model: FactorizedModel, X, U) -> np.ndarray:
        """Reduced scheduling values at operating points, shape (N, n_latent)."""
        theta, _ = self.net.forward(self.features(model, X, U))
        return theta

    def scheduling_fn(self, model: FactorizedModel) -> Callable:
        return lambda X, U, W=None: self.encode(model, X, U)

    def predict_pi(self, model: FactorizedModel, samples) -> np.ndarray:
        """Network reconstruction of the variation matrix (denormalized)."""
        _, gamma = self.net.forward(self.features(model, samples.X, samples.U))
        return self.output_normalizer.denormalize(gamma.T)


def _export_affine(net: MlpNetwork, out_norm: Normalizer, layout, model_name: str,
                   normalization: str, theta_train: np.ndarray) -> AffineLpvModel:
    # Decoder weights in physical units: gamma = S^-1 (W theta + b) + center.
    M0 = layout.unvec(net.b_gamma / out_norm.scale + out_norm.center)
    coeffs = np.stack([layout.unvec(net.W_gamma[:, i] / out_norm.scale) for i in range(net.n_latent)])
    lo, hi = widen_degenerate(theta_train.min(axis=0), theta_train.max(axis=0))
    return AffineLpvModel(M0=M0, coeffs=coeffs, layout=layout, model_name=model_name,
                          method="dnn", normalization=normalization,
                          region_lo=lo, region_hi=hi,
                          extras={"n_latent": net.n_latent, "bypass": net.W_bypass is not None})


def train(
    model: FactorizedModel,
    variation_train: VariationDataset,
    variation_val: VariationDataset,
    n_latent: int,
    cfg: TrainConfig,
) -> DnnReduction:
    """Train the scheduling encoder/decoder on a variation dataset.

    Inputs are feature-mapped and normalized; targets are the normalized
    variation rows.  The returned reduction carries the parameters of the
    best validation epoch, the loss history, and the exported affine model
    (decoder only; an enabled bypass contributes to ``predict_pi`` but not
    to the exported affine model).
    """
    if n_latent < 1:
        raise ValueError("reduced scheduling dimension must be >= 1")
    if variation_train.samples is None or variation_val.samples is None:
        raise ValueError("variation datasets must carry their sample sets")

    rng = np.random.default_rng(cfg.seed)
    F_train = feature_map(model, variation_train.samples.X, variation_train.samples.U)
    F_val = feature_map(model, variation_val.samples.X, variation_val.samples.U)
    in_norm = fit_normalizer(F_train.T, cfg.normalization)
    out_norm = fit_normalizer(variation_train.Pi, cfg.normalization)
    Fn_train = in_norm.normalize(F_train.T).T
    Fn_val = in_norm.normalize(F_val.T).T
    G_train = out_norm.normalize(variation_train.Pi).T
    G_val = out_norm.normalize(variation_val.Pi).T

    net = MlpNetwork(F_train.shape[1], cfg.hidden, n_latent, variation_train.n_pi,
                     bypass=cfg.bypass, rng=rng)
    opt = AdamState.for_params(net.parameters())

    n = Fn_train.shape[0]
    history = {"train_loss": [], "val_loss": []}
    best_val = np.inf
    best_params = net.copy_parameters()
    best_epoch = -1
    stale = 0

    history["train_loss"].append(net.loss(Fn_train, G_train, cfg.l2_weight))
    history["val_loss"].append(net.loss(Fn_val, G_val))

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = net.loss_and_gradients(Fn_train[idx], G_train[idx], cfg.l2_weight)
            if not np.isfinite(loss):
                raise RuntimeError(f"non-finite training loss at epoch {epoch}; "
                                   "lower the learning rate or check the data scaling")
            adam_step(net.parameters(), grads, opt, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)

        history["train_loss"].append(net.loss(Fn_train, G_train, cfg.l2_weight))
        val_loss = net.loss(Fn_val, G_val)
        history["val_loss"].append(val_loss)

        if val_loss < best_val:
            best_val = val_loss
            best_params = net.copy_parameters()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                log.info("early stop at epoch %d (best %d, val %.3e)", epoch, best_epoch, best_val)
                break

    net.set_parameters(best_params)
    history["best_epoch"] = best_epoch
    history["best_val_loss"] = float(best_val)

    theta_train, _ = net.forward(Fn_train)
    lpv = _export_affine(net, out_norm, variation_train.layout, model.name,
                         cfg.normalization, theta_train)
    return DnnReduction(net=net, input_normalizer=in_norm, output_normalizer=out_norm,
                        layout=variation_train.layout, model_name=model.name,
                        lpv=lpv, config=replace(cfg), history=history)
