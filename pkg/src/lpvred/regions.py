"""Scheduling-region construction and conservatism estimation.

A scheduling region is an axis box in (optionally rotated) coordinates
that is guaranteed to contain every scheduling value encountered in the
data.  Constructions:

* :func:`axis_aligned_box` -- componentwise extremes,
* :func:`kabsch_box` -- rotated box (dimension 2 or 3) aligned by the
  Kabsch optimal rotation onto the cloud's principal axes; in 2-D the
  convex-hull edge orientations are also tried, and the identity frame is
  always a candidate, so the result never beats the axis-aligned volume,
* :func:`min_volume_ellipsoid` -- Khachiyan's barycentric ascent with a
  duality-gap stopping certificate,
* :func:`min_enclosing_sphere` -- exact randomized incremental smallest
  ball (dimension <= 3),
* :func:`ellipsoid_to_box` -- principal-axes bounding box of an ellipsoid.

Conservatism of a box is the unused-to-used volume ratio against the
convex hull of the data, estimated by uniform Monte Carlo sampling.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .models import widen_degenerate

log = logging.getLogger(__name__)

__all__ = [
    "BoxRegion",
    "Ellipsoid",
    "axis_aligned_box",
    "kabsch_rotation",
    "kabsch_box",
    "min_volume_ellipsoid",
    "min_enclosing_sphere",
    "ellipsoid_to_box",
    "conservatism_ratio",
    "ConservatismEstimate",
    "region_from_points",
]


@dataclass(frozen=True)
class BoxRegion:
    """Axis box in rotated coordinates: ``lo <= Q^T theta <= hi``.

    ``rotation`` (orthonormal, det +1) maps box coordinates to scheduling
    coordinates; ``None`` means axis-aligned.
    """

    lo: np.ndarray
    hi: np.ndarray
    rotation: Optional[np.ndarray] = None

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if np.any(lo > hi):
            raise ValueError("box has lo > hi")
        if self.rotation is not None:
            Q = np.asarray(self.rotation, dtype=float)
            object.__setattr__(self, "rotation", Q)
            if np.abs(Q.T @ Q - np.eye(Q.shape[0])).max() > 1e-10:
                raise ValueError("rotation is not orthonormal")

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def box_coords(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return points if self.rotation is None else points @ self.rotation

    def contains(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        z = self.box_coords(points)
        margin = tol * (1.0 + np.abs(self.hi - self.lo))
        return np.all((z >= self.lo - margin) & (z <= self.hi + margin), axis=1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = self.lo + rng.random((n, self.dim)) * (self.hi - self.lo)
        return z if self.rotation is None else z @ self.rotation.T

    def to_dict(self) -> dict:
        return {
            "lo": self.lo.tolist(),
            "hi": self.hi.tolist(),
            "rotation": None if self.rotation is None else self.rotation.tolist(),
            "volume": self.volume,
        }


@dataclass(frozen=True)
class Ellipsoid:
    """Region ``(x - center)^T shape (x - center) <= 1`` with SPD shape."""

    center: np.ndarray
    shape: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        E = np.asarray(self.shape, dtype=float)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "shape", E)
        if np.abs(E - E.T).max() > 1e-12 * max(1.0, np.abs(E).max()):
            raise ValueError("shape matrix is not symmetric")
        if np.any(np.linalg.eigvalsh(0.5 * (E + E.T)) <= 0):
            raise ValueError("shape matrix is not positive definite")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def quadform(self, points: np.ndarray) -> np.ndarray:
        d = np.atleast_2d(np.asarray(points, dtype=float)) - self.center
        return np.einsum("ni,ij,nj->n", d, self.shape, d)

    def contains(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        return self.quadform(points) <= 1.0 + tol

    @property
    def volume(self) -> float:
        d = self.dim
        unit = math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)
        return float(unit / np.sqrt(np.linalg.det(self.shape)))

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "shape": self.shape.tolist(), "volume": self.volume}


# ---------------------------------------------------------------------------
# Boxes
# ---------------------------------------------------------------------------


def _as_cloud(points: np.ndarray) -> np.ndarray:
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[0] == 0:
        raise ValueError("empty point set")
    return P


def axis_aligned_box(points: np.ndarray) -> BoxRegion:
    """Componentwise extreme-value box (degenerate axes widened)."""
    P = _as_cloud(points)
    lo, hi = widen_degenerate(P.min(axis=0), P.max(axis=0))
    return BoxRegion(lo=lo, hi=hi)


def kabsch_rotation(source: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Rotation minimizing ``sum ||R s_i - r_i||^2`` (proper, det +1)."""
    S = np.atleast_2d(np.asarray(source, dtype=float))
    T = np.atleast_2d(np.asarray(reference, dtype=float))
    if S.shape != T.shape:
        raise ValueError("source and reference clouds must have equal shape")
    H = S.T @ T
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    D = np.eye(S.shape[1])
    D[-1, -1] = d if d != 0 else 1.0
    return Vt.T @ D @ U.T


def _hull_edge_frames(P: np.ndarray) -> list:
    """Candidate 2-D frames aligned with convex-hull edges."""
    try:
        hull = ConvexHull(P)
    except QhullError:
        return []
    frames = []
    verts = P[hull.vertices]
    for a, b in zip(verts, np.roll(verts, -1, axis=0)):
        e = b - a
        n = np.linalg.norm(e)
        if n < 1e-14:
            continue
        c, s = e[0] / n, e[1] / n
        # columns are the edge direction and its normal
        frames.append(np.array([[c, -s], [s, c]]))
    return frames


def kabsch_box(points: np.ndarray) -> BoxRegion:
    """Minimum-volume rotated box among aligned candidate frames (dim 2-3).

    Candidates: the identity frame, the Kabsch alignment onto the cloud's
    principal axes, and (2-D) every hull-edge orientation.  Picking the
    best candidate guarantees the volume never exceeds the axis-aligned
    box.  Rank-deficient clouds fall back to the axis-aligned box.
    """
    P = _as_cloud(points)
    d = P.shape[1]
    if d not in (2, 3):
        raise ValueError("rotated boxes are built only in dimension 2 or 3")
    if P.shape[0] < d + 1:
        raise ValueError(f"need at least {d + 1} points in dimension {d}")
    c = P.mean(axis=0)
    Xc = P - c
    cov = Xc.T @ Xc
    evals, evecs = np.linalg.eigh(cov)
    if evals[-1] <= 0 or evals[0] < 1e-12 * evals[-1]:
        log.warning("rank-deficient cloud; falling back to the axis-aligned box")
        return axis_aligned_box(points)

    frame = evecs[:, ::-1]  # principal axes, descending variance
    reference = Xc @ frame
    R = kabsch_rotation(Xc, reference)
    candidates = [None, R.T]
    if d == 2:
        candidates.extend(_hull_edge_frames(P))

    best = None
    for Q in candidates:
        z = P if Q is None else P @ Q
        lo, hi = widen_degenerate(z.min(axis=0), z.max(axis=0))
        vol = float(np.prod(hi - lo))
        if best is None or vol < best[0] * (1.0 - 1e-12):
            if Q is not None and np.linalg.det(Q) < 0:
                Q = Q.copy()
                Q[:, -1] = -Q[:, -1]
                lo = lo.copy()
                hi = hi.copy()
                lo[-1], hi[-1] = -hi[-1], -lo[-1]
            best = (vol, BoxRegion(lo=lo, hi=hi, rotation=Q))
    return best[1]


# ---------------------------------------------------------------------------
# Minimum-volume ellipsoid (Khachiyan ascent)
# ---------------------------------------------------------------------------


def _khachiyan(P: np.ndarray, tolerance: float, max_iter: int):
    """Barycentric-coordinate ascent with away (drop) steps.

    Stops on the primal certificate ``max_i M_i <= (1 + tol)(d + 1)``;
    away steps remove weight from interior points, which avoids the slow
    tail of the plain ascent.
    """
    N, d = P.shape
    Q = np.column_stack([P, np.ones(N)]).T  # (d+1, N)
    u = np.full(N, 1.0 / N)
    gap = np.inf
    for _ in range(max_iter):
        V = (Q * u) @ Q.T
        M = np.einsum("in,in->n", Q, np.linalg.solve(V, Q))
        j_add = int(np.argmax(M))
        kappa_add = M[j_add]
        gap = kappa_add / (d + 1.0) - 1.0
        if gap <= tolerance:
            break
        support = np.flatnonzero(u > 0)
        j_drop = support[int(np.argmin(M[support]))]
        kappa_drop = M[j_drop]
        if kappa_add - (d + 1.0) >= (d + 1.0) - kappa_drop:
            j, kappa = j_add, kappa_add
            beta = (kappa - d - 1.0) / ((d + 1.0) * (kappa - 1.0))
        else:
            j, kappa = j_drop, kappa_drop
            beta = (kappa - d - 1.0) / ((d + 1.0) * (kappa - 1.0))
            beta = max(beta, -u[j] / (1.0 - u[j]))
        u *= 1.0 - beta
        u[j] += beta
    center = P.T @ u
    cov = (P.T * u) @ P - np.outer(center, center)
    E = np.linalg.inv(cov) / d
    return center, E, gap


def min_volume_ellipsoid(points: np.ndarray, tolerance: float = 1e-6,
                         max_iter: int = 200_000) -> Ellipsoid:
    """Minimum-volume enclosing ellipsoid via Khachiyan's algorithm.

    Stops when the duality gap drops below ``tolerance``; the returned
    shape matrix is rescaled so that every input point satisfies the
    membership inequality exactly (within floating-point error).
    Rank-deficient clouds are solved in their affine span and lifted back
    with a hair-width extent in the null directions.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    P = _as_cloud(points)
    N, d = P.shape
    if N < d + 1:
        raise ValueError(f"need at least {d + 1} points in dimension {d}")

    mean = P.mean(axis=0)
    Xc = P - mean
    svals = np.linalg.svd(Xc, compute_uv=False)
    rank = int(np.sum(svals > 1e-12 * max(svals[0], 1.0)))
    if rank < d:
        log.warning("rank-deficient cloud (rank %d < %d); solving in the affine span", rank, d)
        _, _, Vt = np.linalg.svd(Xc, full_matrices=True)
        B = Vt[:rank].T       # span directions
        Nul = Vt[rank:].T     # null directions
        if rank == 0:
            return Ellipsoid(center=mean, shape=np.eye(d) / (0.5 * 1e-6) ** 2)
        # null directions get a hair width relative to the cloud extent;
        # much narrower and the dense shape matrix would lose the in-plane
        # quadratic form to rounding
        halfw = 1e-3 * max(svals[0], 1e-6)
        inner = min_volume_ellipsoid(Xc @ B, tolerance, max_iter)
        E = B @ inner.shape @ B.T + Nul @ Nul.T / halfw**2
        return Ellipsoid(center=mean + B @ inner.center, shape=0.5 * (E + E.T))

    # the optimum is supported on hull vertices; reducing first keeps the
    # ascent cheap for large clouds
    if d <= 4 and N > 2 * (d + 1):
        try:
            P = P[ConvexHull(P).vertices]
        except QhullError:
            pass

    center, E, gap = _khachiyan(P, tolerance, max_iter)
    if gap > tolerance:
        log.warning("ellipsoid ascent stopped at duality gap %.3e > %.3e", gap, tolerance)
    ell = Ellipsoid(center=center, shape=0.5 * (E + E.T))
    worst = float(ell.quadform(points).max())
    if worst > 1.0:
        ell = Ellipsoid(center=center, shape=ell.shape / worst)
    return ell


# ---------------------------------------------------------------------------
# Exact smallest enclosing sphere (dim <= 3)
# ---------------------------------------------------------------------------


def _circumball(B: np.ndarray):
    """Smallest ball with every point of B on its boundary.

    The center is the circumcenter inside the affine hull of B.
    """
    B = np.atleast_2d(B)
    p0 = B[0]
    if B.shape[0] == 1:
        return p0.copy(), 0.0
    D = B[1:] - p0
    G = 2.0 * D @ D.T
    rhs = np.sum(D * D, axis=1)
    try:
        y = np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        y, *_ = np.linalg.lstsq(G, rhs, rcond=None)
    offset = D.T @ y
    return p0 + offset, float(np.linalg.norm(offset))


def min_enclosing_sphere(points: np.ndarray, seed: int = 0) -> Ellipsoid:
    """Exact smallest enclosing ball by randomized incremental insertion.

    Classical move-to-front scheme: a point found outside the current ball
    must lie on the boundary of the ball for the points seen so far.
    """
    P = _as_cloud(points)
    d = P.shape[1]
    if d > 3:
        raise ValueError("the sphere construction is implemented for dimension <= 3")
    if P.shape[0] > 4 * (d + 1):
        try:
            P = P[ConvexHull(P).vertices]
        except QhullError:
            pass
    P = P[np.random.default_rng(seed).permutation(P.shape[0])]
    eps = 1e-12

    def outside(c, r, p):
        return np.linalg.norm(p - c) > r * (1.0 + 1e-12) + eps

    def ball_with(prefix, boundary):
        c, r = _circumball(np.array(boundary))
        if len(boundary) == d + 1:
            return c, r
        for i in range(len(prefix)):
            if outside(c, r, prefix[i]):
                c, r = ball_with(prefix[:i], boundary + [prefix[i]])
        return c, r

    c, r = P[0].copy(), 0.0
    for i in range(1, P.shape[0]):
        if outside(c, r, P[i]):
            c, r = ball_with(P[:i], [P[i]])
    # sphere as an ellipsoid; a zero radius degenerates to the hair width
    r = max(r, 0.5 * 1e-6)
    return Ellipsoid(center=c, shape=np.eye(d) / r**2)


def ellipsoid_to_box(ell: Ellipsoid) -> BoxRegion:
    """Principal-axes bounding box of an ellipsoid (contains it exactly)."""
    evals, evecs = np.linalg.eigh(ell.shape)
    half = 1.0 / np.sqrt(evals)
    Q = evecs
    if np.linalg.det(Q) < 0:
        Q = Q.copy()
        Q[:, -1] = -Q[:, -1]
    zc = Q.T @ ell.center
    return BoxRegion(lo=zc - half, hi=zc + half, rotation=Q)


# ---------------------------------------------------------------------------
# Conservatism
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConservatismEstimate:
    """Monte Carlo estimate of the unused-to-used volume ratio of a box."""

    ratio: float
    std_error: float
    inside_fraction: float
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "ratio": self.ratio,
            "std_error": self.std_error,
            "inside_fraction": self.inside_fraction,
            "n_samples": self.n_samples,
        }


def _hull_membership(points: np.ndarray, queries: np.ndarray, tol: float) -> np.ndarray:
    d = points.shape[1]
    if d == 1:
        lo, hi = points.min(), points.max()
        return (queries[:, 0] >= lo - tol) & (queries[:, 0] <= hi + tol)
    if d <= 3:
        hull = ConvexHull(points)
        Aeq = hull.equations[:, :-1]
        beq = hull.equations[:, -1]
        scale = tol * (1.0 + np.abs(beq))
        inside = np.ones(queries.shape[0], dtype=bool)
        for start in range(0, queries.shape[0], 200_000):
            q = queries[start:start + 200_000]
            inside[start:start + 200_000] = np.all(q @ Aeq.T + beq <= scale, axis=1)
        return inside
    # higher dimensions: feasibility LP per query (slow; intended for small
    # sample counts)
    from scipy.optimize import linprog

    n = points.shape[0]
    A_eq = np.vstack([points.T, np.ones(n)])
    inside = np.zeros(queries.shape[0], dtype=bool)
    for i, q in enumerate(queries):
        b_eq = np.append(q, 1.0)
        res = linprog(np.zeros(n), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * n, method="highs")
        inside[i] = res.status == 0
    return inside


def conservatism_ratio(points: np.ndarray, box: BoxRegion, mc_samples: int = 1_000_000,
                       seed: int = 0) -> ConservatismEstimate:
    """Unused-to-used volume ratio of a box against the data's convex hull.

    Samples uniformly inside the box and classifies against the hull; the
    ratio is ``(1 - p) / p`` for inside fraction ``p``, with a delta-method
    standard error.  An entirely-outside sample yields an infinite ratio.
    """
    P = _as_cloud(points)
    if not np.all(box.contains(P, tol=1e-9)):
        raise ValueError("box does not contain all points")
    rng = np.random.default_rng(seed)
    samples = box.sample(int(mc_samples), rng)
    try:
        inside = _hull_membership(P, samples, tol=1e-9)
    except QhullError:
        log.warning("degenerate hull; conservatism ratio reported as infinite")
        return ConservatismEstimate(np.inf, np.inf, 0.0, int(mc_samples))
    p = float(np.mean(inside))
    if p == 0.0:
        log.warning("no samples fell inside the hull; ratio is infinite")
        return ConservatismEstimate(np.inf, np.inf, 0.0, int(mc_samples))
    se_p = math.sqrt(p * (1.0 - p) / mc_samples)
    return ConservatismEstimate(
        ratio=(1.0 - p) / p,
        std_error=se_p / p**2,
        inside_fraction=p,
        n_samples=int(mc_samples),
    )


def region_from_points(points: np.ndarray, method: str = "auto",
                       tolerance: float = 1e-6, seed: int = 0) -> BoxRegion:
    """Build a scheduling-region box with the requested construction.

    ``auto`` picks the rotated box for dimension <= 3 and the
    ellipsoid-derived box above; ``sphere`` uses the smallest enclosing
    ball (dimension <= 3).
    """
    P = _as_cloud(points)
    d = P.shape[1]
    if method == "auto":
        method = "kabsch" if 2 <= d <= 3 else ("aabb" if d == 1 else "ellipsoid")
    if method == "aabb":
        return axis_aligned_box(P)
    if method == "kabsch":
        return kabsch_box(P)
    if method == "ellipsoid":
        return ellipsoid_to_box(min_volume_ellipsoid(P, tolerance))
    if method == "sphere":
        return ellipsoid_to_box(min_enclosing_sphere(P, seed))
    raise ValueError(f"unknown region method {method!r}")
