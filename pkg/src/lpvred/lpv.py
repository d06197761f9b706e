"""Affine parameter-varying models and variation datasets.

The varying model matrices at a sampled operating point are flattened
column-major into a vector ``gamma``; stacking those vectors over a
dataset gives the variation matrix ``Pi`` (one column per sample) on which
the reduction methods operate.  Two stacking modes exist:

* ``"ab"``   -- only ``[A  Bu]`` (the default; disturbance and output
  blocks are dropped, matching the wind-free reduction setting),
* ``"full"`` -- all six blocks ``[[A, Bu, Bw], [C, Du, Dw]]``.

:class:`AffineLpvModel` holds a base matrix and one coefficient matrix per
scheduling component; it is the serializable artifact shared by the
full-order embedding and every reduction method.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .models import DimensionError, FactorizedModel
from .simulate import SampleSet

log = logging.getLogger(__name__)

__all__ = [
    "BlockLayout",
    "vec_gamma",
    "unvec_gamma",
    "VariationDataset",
    "build_variation_dataset",
    "AffineLpvModel",
    "full_order_lpv",
    "ab_entry_indices",
]


@dataclass(frozen=True)
class BlockLayout:
    """Shape bookkeeping for the stacked block matrix and its vectorization."""

    n_x: int
    n_u: int
    n_w: int
    n_y: int
    mode: str = "ab"

    def __post_init__(self):
        if self.mode not in ("ab", "full"):
            raise ValueError(f"unknown layout mode {self.mode!r}")

    @classmethod
    def for_model(cls, model: FactorizedModel, mode: str = "ab") -> "BlockLayout":
        return cls(model.n_x, model.n_u, model.n_w, model.n_y, mode)

    @property
    def rows(self) -> int:
        return self.n_x if self.mode == "ab" else self.n_x + self.n_y

    @property
    def cols(self) -> int:
        return self.n_x + self.n_u if self.mode == "ab" else self.n_x + self.n_u + self.n_w

    @property
    def n_pi(self) -> int:
        return self.rows * self.cols

    def block_offset(self, block: str) -> tuple:
        """(row, col) offset of a named block inside the stacked matrix."""
        col = {"A": 0, "Bu": self.n_x, "Bw": self.n_x + self.n_u}
        if block in col:
            if self.mode == "ab" and block == "Bw":
                raise KeyError("Bw is not part of the 'ab' layout")
            return 0, col[block]
        if self.mode == "ab":
            raise KeyError(f"{block} is not part of the 'ab' layout")
        col = {"C": 0, "Du": self.n_x, "Dw": self.n_x + self.n_u}
        return self.n_x, col[block]

    def vec_position(self, block: str, row: int, col: int) -> int:
        r0, c0 = self.block_offset(block)
        return (c0 + col) * self.rows + (r0 + row)

    def stack(self, A, Bu, Bw=None, C=None, Du=None, Dw=None) -> np.ndarray:
        """Assemble the stacked block matrix, batched over a leading axis."""
        A = np.asarray(A, dtype=float)
        single = A.ndim == 2
        A = A[None] if single else A
        n = A.shape[0]

        def prep(M, r, c):
            if M is None:
                return np.zeros((n, r, c))
            M = np.asarray(M, dtype=float)
            return M[None] if M.ndim == 2 else M

        Bu = prep(Bu, self.n_x, self.n_u)
        top = [A, Bu]
        if self.mode == "full":
            top.append(prep(Bw, self.n_x, self.n_w))
        M = np.concatenate(top, axis=2)
        if self.mode == "full" and self.n_y:
            if C is None:
                C = np.broadcast_to(np.eye(self.n_y, self.n_x), (n, self.n_y, self.n_x))
            bottom = [prep(C, self.n_y, self.n_x), prep(Du, self.n_y, self.n_u), prep(Dw, self.n_y, self.n_w)]
            M = np.concatenate([M, np.concatenate(bottom, axis=2)], axis=1)
        return M[0] if single else M

    def split(self, M: np.ndarray) -> dict:
        """Inverse of :meth:`stack`; returns the named blocks."""
        M = np.asarray(M, dtype=float)
        single = M.ndim == 2
        M = M[None] if single else M
        if M.shape[-2:] != (self.rows, self.cols):
            raise DimensionError(f"expected {(self.rows, self.cols)} matrix, got {M.shape[-2:]}")
        out = {"A": M[:, : self.n_x, : self.n_x], "Bu": M[:, : self.n_x, self.n_x : self.n_x + self.n_u]}
        if self.mode == "full":
            out["Bw"] = M[:, : self.n_x, self.n_x + self.n_u :]
            out["C"] = M[:, self.n_x :, : self.n_x]
            out["Du"] = M[:, self.n_x :, self.n_x : self.n_x + self.n_u]
            out["Dw"] = M[:, self.n_x :, self.n_x + self.n_u :]
        return {k: (v[0] if single else v) for k, v in out.items()}

    def vec(self, M: np.ndarray) -> np.ndarray:
        """Column-major flatten; batched input gives one column per sample."""
        M = np.asarray(M, dtype=float)
        if M.ndim == 2:
            return M.reshape(-1, order="F")
        return M.transpose(0, 2, 1).reshape(M.shape[0], -1).T

    def unvec(self, g: np.ndarray) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        if g.ndim == 1:
            if g.size != self.n_pi:
                raise DimensionError(f"expected vector of length {self.n_pi}, got {g.size}")
            return g.reshape(self.rows, self.cols, order="F")
        return g.T.reshape(-1, self.cols, self.rows).transpose(0, 2, 1)


def vec_gamma(A, Bu=None, Bw=None, C=None, Du=None, Dw=None) -> np.ndarray:
    """Column-major vectorization of the stacked block matrix.

    Blocks may be ``None`` or zero-width; the layout is inferred from the
    given shapes.  ``unvec_gamma`` inverts the operation exactly.
    """
    A = np.asarray(A, dtype=float)
    n_x = A.shape[0]
    n_u = 0 if Bu is None else np.asarray(Bu).shape[1]
    n_w = 0 if Bw is None else np.asarray(Bw).shape[1]
    n_y = 0 if C is None else np.asarray(C).shape[0]
    layout = BlockLayout(n_x, n_u, n_w, n_y, mode="full")
    C = np.zeros((n_y, n_x)) if C is None else C
    return layout.vec(layout.stack(A, Bu, Bw, C, Du, Dw))


def unvec_gamma(g: np.ndarray, n_x: int, n_u: int = 0, n_w: int = 0, n_y: int = 0) -> np.ndarray:
    """Rebuild the stacked block matrix from its column-major vector."""
    return BlockLayout(n_x, n_u, n_w, n_y, mode="full").unvec(g)


# ---------------------------------------------------------------------------
# Variation dataset
# ---------------------------------------------------------------------------


@dataclass
class VariationDataset:
    """Vectorized model variations over a sample set, one column per sample."""

    Pi: np.ndarray
    layout: BlockLayout
    model_name: str
    samples: Optional[SampleSet] = None
    n_skipped: int = 0

    @property
    def n_pi(self) -> int:
        return self.Pi.shape[0]

    @property
    def n_samples(self) -> int:
        return self.Pi.shape[1]

    def varying_rows(self, tol: float = 0.0) -> np.ndarray:
        """Mask of rows that actually vary across the dataset."""
        spread = self.Pi.max(axis=1) - self.Pi.min(axis=1)
        return spread > tol

    @classmethod
    def from_matrix(cls, Pi: np.ndarray, model_name: str = "raw") -> "VariationDataset":
        """Wrap a bare matrix (rows = variables) with a single-row layout."""
        Pi = np.asarray(Pi, dtype=float)
        n_pi = Pi.shape[0]
        layout = BlockLayout(n_x=1, n_u=n_pi - 1, n_w=0, n_y=0, mode="ab")
        return cls(Pi=Pi, layout=layout, model_name=model_name)


def build_variation_dataset(
    model: FactorizedModel,
    samples: SampleSet,
    mode: str = "ab",
) -> VariationDataset:
    """Evaluate the factorized matrices over the samples and vectorize them.

    Samples at which the evaluation is non-finite are skipped with a
    logged count.  Constant matrix entries are kept as (constant) rows;
    centering removes them downstream.
    """
    layout = BlockLayout.for_model(model, mode)
    W = samples.W if model.n_w else None
    A, Bu, Bw = model.blocks(samples.X, samples.U, W)
    if mode == "ab":
        M = layout.stack(A, Bu)
    else:
        M = layout.stack(A, Bu, Bw)
    Pi = layout.vec(M)
    good = np.all(np.isfinite(Pi), axis=0)
    n_skipped = int(np.sum(~good))
    if n_skipped:
        log.warning("skipped %d samples with non-finite matrix evaluations", n_skipped)
        Pi = Pi[:, good]
        samples = samples._take(np.flatnonzero(good))
    return VariationDataset(Pi=Pi, layout=layout, model_name=model.name,
                            samples=samples, n_skipped=n_skipped)


# ---------------------------------------------------------------------------
# Affine LPV model
# ---------------------------------------------------------------------------


@dataclass
class AffineLpvModel:
    """``M(theta) = M0 + sum_i theta_i * Mi`` with a scheduling region box.

    ``coeffs`` has shape ``(n_theta, rows, cols)``.  The optional region is
    an axis box in (possibly rotated) scheduling coordinates: a value is
    inside when ``lo <= Q^T theta <= hi``.  Evaluation outside the region
    is allowed (the box is a conservative superset) but logged.
    """

    M0: np.ndarray
    coeffs: np.ndarray
    layout: BlockLayout
    model_name: str = ""
    method: str = "full-order"
    normalization: str = "none"
    region_lo: Optional[np.ndarray] = None
    region_hi: Optional[np.ndarray] = None
    region_rot: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.M0 = np.asarray(self.M0, dtype=float)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        shape = (self.layout.rows, self.layout.cols)
        if self.M0.shape != shape:
            raise DimensionError(f"M0 shape {self.M0.shape} != layout {shape}")
        if self.coeffs.ndim != 3 or self.coeffs.shape[1:] != shape:
            raise DimensionError(f"coefficient stack shape {self.coeffs.shape} inconsistent with {shape}")

    @property
    def n_theta(self) -> int:
        return self.coeffs.shape[0]

    def matrices(self, theta: np.ndarray) -> np.ndarray:
        """Stacked block matrix at the given scheduling values (batched)."""
        theta = np.asarray(theta, dtype=float)
        single = theta.ndim == 1
        theta = np.atleast_2d(theta)
        if theta.shape[1] != self.n_theta:
            raise DimensionError(f"expected scheduling dimension {self.n_theta}, got {theta.shape[1]}")
        M = self.M0[None] + np.einsum("nt,trc->nrc", theta, self.coeffs)
        return M[0] if single else M

    def _warn_outside(self, theta: np.ndarray):
        if self.region_lo is None:
            return
        z = theta if self.region_rot is None else theta @ self.region_rot
        margin = 1e-9 * (1.0 + np.abs(self.region_hi - self.region_lo))
        outside = np.any((z < self.region_lo - margin) | (z > self.region_hi + margin), axis=1)
        n = int(np.sum(outside))
        if n:
            log.warning("%d scheduling points outside the region box (conservative evaluation)", n)

    def evaluate(self, theta, x, u, w=None):
        """LPV dynamics ``(xdot, y)`` at scheduling values ``theta``."""
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        u = np.atleast_2d(np.asarray(u, dtype=float))
        self._warn_outside(theta)
        M = self.matrices(theta)
        if M.ndim == 2:
            M = M[None]
        blocks = self.layout.split(M)
        xdot = np.einsum("nij,nj->ni", blocks["A"], x) + np.einsum("nij,nj->ni", blocks["Bu"], u)
        if self.layout.mode == "full":
            w = np.zeros((x.shape[0], self.layout.n_w)) if w is None else np.atleast_2d(np.asarray(w, dtype=float))
            if self.layout.n_w:
                xdot += np.einsum("nij,nj->ni", blocks["Bw"], w)
            y = np.einsum("nij,nj->ni", blocks["C"], x) + np.einsum("nij,nj->ni", blocks["Du"], u)
            if self.layout.n_w:
                y += np.einsum("nij,nj->ni", blocks["Dw"], w)
        else:
            y = x  # output blocks not modeled: full-state output
        return (xdot[0], y[0]) if single else (xdot, y)

    def a_bu(self, theta: np.ndarray):
        """Convenience split returning only ``(A(theta), Bu(theta))``."""
        M = self.matrices(theta)
        blocks = self.layout.split(M)
        return blocks["A"], blocks["Bu"]


def ab_entry_indices(model: FactorizedModel) -> np.ndarray:
    """Indices of scheduling entries that live in the A or Bu blocks."""
    return np.array([k for k, e in enumerate(model.entries) if e.block in ("A", "Bu")], dtype=int)


class LpvDynamics:
    """Adapts an affine LPV model plus scheduling map to the integrator.

    The scheduling map is evaluated along the simulated state, so the
    wrapped pair behaves like an ordinary vector field ``f(x, u, w)``.
    Wind is not part of the reduced dynamics ('ab' layouts); scheduling
    values falling outside the region box are counted, not warned per
    step.
    """

    def __init__(self, lpv: AffineLpvModel, scheduling_fn, name: str = ""):
        self.lpv = lpv
        self.scheduling_fn = scheduling_fn
        self.name = name or f"lpv-{lpv.method}"
        self.n_x = lpv.layout.n_x
        self.n_u = lpv.layout.n_u
        self.n_w = lpv.layout.n_w if lpv.layout.mode == "full" else 0
        self.outside_region = 0

    def f(self, X, U, W=None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = np.atleast_2d(np.asarray(U, dtype=float))
        theta = np.atleast_2d(self.scheduling_fn(X, U))
        if self.lpv.region_lo is not None:
            z = theta if self.lpv.region_rot is None else theta @ self.lpv.region_rot
            self.outside_region += int(np.sum(np.any(
                (z < self.lpv.region_lo - 1e-9) | (z > self.lpv.region_hi + 1e-9), axis=1)))
        M = self.lpv.matrices(theta)
        blocks = self.lpv.layout.split(M if M.ndim == 3 else M[None])
        xdot = np.einsum("nij,nj->ni", blocks["A"], X) + np.einsum("nij,nj->ni", blocks["Bu"], U)
        if self.lpv.layout.mode == "full" and self.n_w and W is not None:
            xdot += np.einsum("nij,nj->ni", blocks["Bw"], np.atleast_2d(W))
        return xdot


class FullOrderReduction:
    """The identity 'reduction': full-order embedding behind the reduction API.

    Useful as the exactness baseline in error reports and trajectory
    comparisons.
    """

    def __init__(self, model: FactorizedModel, mode: str = "ab"):
        self.lpv = full_order_lpv(model, mode)
        self._mode = mode
        self._idx = ab_entry_indices(model) if mode == "ab" else np.arange(model.n_theta)

    @property
    def n_theta(self) -> int:
        return self._idx.size

    def scheduling_fn(self, model: FactorizedModel):
        idx = self._idx

        def fn(X, U, W=None):
            theta = model.psi(X, U, W)
            return theta[..., idx]

        return fn

    def predict_pi(self, model: FactorizedModel, samples) -> np.ndarray:
        theta = np.atleast_2d(self.scheduling_fn(model)(samples.X, samples.U))
        return self.lpv.layout.vec(self.lpv.matrices(theta))


def full_order_lpv(model: FactorizedModel, mode: str = "ab") -> AffineLpvModel:
    """Exact full-order affine embedding of a factorized model.

    Every scheduling entry within the layout's blocks contributes one
    indicator coefficient matrix; evaluating at ``theta = psi(x, u, w)``
    reproduces the factorized matrices entrywise.
    """
    layout = BlockLayout.for_model(model, mode)
    if mode == "ab":
        entries = [model.entries[k] for k in ab_entry_indices(model)]
    else:
        entries = list(model.entries)
    if mode == "ab":
        M0 = layout.stack(model.const_A, model.const_Bu)
    else:
        M0 = layout.stack(model.const_A, model.const_Bu, model.const_Bw,
                          C=np.eye(model.n_y, model.n_x))
    coeffs = np.zeros((len(entries), layout.rows, layout.cols))
    for k, e in enumerate(entries):
        r0, c0 = layout.block_offset(e.block)
        coeffs[k, r0 + e.row, c0 + e.col] = 1.0
    return AffineLpvModel(M0=M0, coeffs=coeffs, layout=layout, model_name=model.name,
                          method="full-order", extras={"entry_names": [e.name for e in entries]})
