"""Principal-component reduction of the scheduling dimension.

The variation matrix is centered and scaled row-wise, decomposed with an
SVD, and truncated to the leading left singular directions.  Projection of
normalized variations onto those directions is the reduced scheduling map;
folding the inverse normalization into the singular directions yields an
affine reconstruction of the model matrices, so the reduced model stays in
the same affine-LPV format as the full-order embedding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .lpv import AffineLpvModel, BlockLayout, VariationDataset
from .models import FactorizedModel, widen_degenerate

__all__ = [
    "Normalizer",
    "fit_normalizer",
    "PcaReduction",
    "fit_pca",
    "numerical_rank",
]

_DEGENERATE_SPREAD = 1e-300  # rows are degenerate when their spread underflows


@dataclass(frozen=True)
class Normalizer:
    """Row-wise affine normalization ``z = scale * (value - center)``.

    Degenerate rows (zero spread) keep ``scale = 1`` so that the inverse
    map reproduces constants exactly.
    """

    mode: str
    center: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        if np.any(self.scale <= 0) or not np.all(np.isfinite(self.scale)):
            raise ValueError("normalizer scales must be positive and finite")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def normalize(self, values: np.ndarray) -> np.ndarray:
        """Apply to a matrix with one row per variable (columns = samples)."""
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            return self.scale * (values - self.center)
        return self.scale[:, None] * (values - self.center[:, None])

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            return values / self.scale + self.center
        return values / self.scale[:, None] + self.center[:, None]

    @classmethod
    def identity(cls, dim: int) -> "Normalizer":
        return cls(mode="none", center=np.zeros(dim), scale=np.ones(dim))


def fit_normalizer(Pi: Union[np.ndarray, VariationDataset], mode: str) -> Normalizer:
    """Fit a row-wise normalizer on a data matrix (rows = variables).

    ``std`` divides by the sample standard deviation (N-1 denominator),
    ``minmax`` by the row range, ``none`` only centers with unit scale.
    """
    if isinstance(Pi, VariationDataset):
        Pi = Pi.Pi
    Pi = np.asarray(Pi, dtype=float)
    if Pi.ndim != 2 or Pi.shape[1] < 2:
        raise ValueError("need a matrix with at least two sample columns")
    center = Pi.mean(axis=1)
    if mode == "std":
        spread = Pi.std(axis=1, ddof=1)
    elif mode == "minmax":
        spread = Pi.max(axis=1) - Pi.min(axis=1)
    elif mode == "none":
        spread = np.ones(Pi.shape[0])
    else:
        raise ValueError(f"unknown normalization mode {mode!r}")
    scale = np.where(spread > _DEGENERATE_SPREAD, 1.0 / np.maximum(spread, _DEGENERATE_SPREAD), 1.0)
    return Normalizer(mode=mode, center=center, scale=scale)


def numerical_rank(singular_values: np.ndarray, shape: tuple) -> int:
    """Count singular values above ``max(shape) * eps * s_max``."""
    s = np.asarray(singular_values, dtype=float)
    if s.size == 0 or s[0] == 0.0:
        return 0
    cutoff = max(shape) * np.finfo(float).eps * s[0]
    return int(np.sum(s > cutoff))


def _fix_signs(U: np.ndarray) -> np.ndarray:
    """Force the largest-magnitude entry of each column positive."""
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


@dataclass
class PcaReduction:
    """Truncated-SVD scheduling reduction with affine reconstruction."""

    normalizer: Normalizer
    U_s: np.ndarray
    singular_values: np.ndarray
    n_s: int
    layout: BlockLayout
    model_name: str
    lpv: AffineLpvModel

    @property
    def n_theta(self) -> int:
        return self.n_s

    def project(self, Pi: np.ndarray) -> np.ndarray:
        """Reduced scheduling values for variation columns, shape (n_s, N)."""
        return self.U_s.T @ self.normalizer.normalize(Pi)

    def reduced_theta(self, model: FactorizedModel, X, U, W=None) -> np.ndarray:
        """Reduced scheduling map evaluated at operating points, shape (N, n_s)."""
        A, Bu, Bw = model.blocks(X, U, W)
        if self.layout.mode == "ab":
            M = self.layout.stack(A, Bu)
        else:
            M = self.layout.stack(A, Bu, Bw)
        gamma = self.layout.vec(M)
        single = gamma.ndim == 1
        if single:
            gamma = gamma[:, None]
        theta = self.project(gamma).T
        return theta[0] if single else theta

    def reconstruct_gamma(self, theta: np.ndarray) -> np.ndarray:
        """Approximate variation vector(s) from reduced scheduling values."""
        theta = np.asarray(theta, dtype=float)
        single = theta.ndim == 1
        Z = self.U_s @ (theta[:, None] if single else np.atleast_2d(theta).T)
        out = self.normalizer.denormalize(Z)
        return out[:, 0] if single else out

    def reconstruct_pi(self, Pi: np.ndarray) -> np.ndarray:
        """Rank-``n_s`` approximation of a variation matrix."""
        return self.reconstruct_gamma(self.project(Pi).T)

    def scheduling_fn(self, model: FactorizedModel):
        """The reduced scheduling map as a plain ``(X, U) -> theta`` callable."""
        return lambda X, U, W=None: self.reduced_theta(model, X, U, W)

    def predict_pi(self, model: FactorizedModel, samples) -> np.ndarray:
        """Reconstructed variation matrix at the given samples."""
        theta = self.reduced_theta(model, samples.X, samples.U)
        return self.reconstruct_gamma(theta)


def fit_pca(
    variation: Union[VariationDataset, np.ndarray],
    normalizer_or_mode: Union[Normalizer, str],
    n_s: int,
    gram_threshold: int = 100_000,
) -> PcaReduction:
    """Fit the truncated-SVD reduction on a variation dataset.

    Column counts beyond ``gram_threshold`` switch to an eigendecomposition
    of the (small) row Gram matrix, which is exact for the left singular
    directions and avoids forming a huge SVD.  Column signs are fixed so
    artifacts are reproducible bit-for-bit.
    """
    if not isinstance(variation, VariationDataset):
        variation = VariationDataset.from_matrix(np.asarray(variation, dtype=float))
    Pi = variation.Pi
    layout = variation.layout
    model_name = variation.model_name

    n_pi, N = Pi.shape
    if not 1 <= n_s <= min(n_pi, N):
        raise ValueError(f"n_s must be within [1, {min(n_pi, N)}], got {n_s}")
    normalizer = (fit_normalizer(Pi, normalizer_or_mode)
                  if isinstance(normalizer_or_mode, str) else normalizer_or_mode)
    Pn = normalizer.normalize(Pi)

    if N > gram_threshold and n_pi < N:
        evals, evecs = np.linalg.eigh(Pn @ Pn.T)
        order = np.argsort(evals)[::-1]
        s = np.sqrt(np.clip(evals[order], 0.0, None))
        U = evecs[:, order]
    else:
        U, s, _ = np.linalg.svd(Pn, full_matrices=False)
    U = _fix_signs(U)
    U_s = U[:, :n_s]

    M0 = layout.unvec(normalizer.center)
    coeffs = np.stack([layout.unvec(U_s[:, i] / normalizer.scale) for i in range(n_s)])

    theta_train = U_s.T @ Pn
    lo, hi = widen_degenerate(theta_train.min(axis=1), theta_train.max(axis=1))
    lpv = AffineLpvModel(
        M0=M0, coeffs=coeffs, layout=layout, model_name=model_name,
        method="pca", normalization=normalizer.mode,
        region_lo=lo, region_hi=hi,
        extras={"n_s": n_s, "singular_values": s.tolist()},
    )
    return PcaReduction(
        normalizer=normalizer, U_s=U_s, singular_values=s, n_s=n_s,
        layout=layout, model_name=model_name, lpv=lpv,
    )
