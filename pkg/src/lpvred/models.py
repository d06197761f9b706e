"""Nonlinear benchmark models in factorized state-space form.

Each model implements a vector field ``xdot = f(x, u, w)`` together with an
exact factorization

    f(x, u, w) = A(x, u, w) x + Bu(x, u, w) u + Bw(x, u, w) w

in which every nonconstant entry of the matrix functions is exposed as a
scalar scheduling signal ``theta_i = psi_i(x, u, w)``.  Substituting the
scheduling vector back into the affine entry template reproduces the matrix
functions entrywise, so the induced parameter-varying model is an exact
embedding of the nonlinear dynamics.

Two built-in models are provided:

* :class:`AnalyticBenchmarkModel` -- a 3-state system with two independent
  nonlinearities whose variation data has centered rank exactly 2 by
  construction (useful as a truncation-rank oracle).
* :class:`ParafoilModel` -- a 12-state rigid-body descent vehicle with
  polynomial aerodynamic coefficients of physically plausible magnitude.
  The coefficient set is defined in :class:`ParafoilParams`; it is a
  surrogate, not a calibrated vehicle database.

All evaluation routines accept batches: states ``X`` of shape ``(N, n_x)``,
inputs ``U`` of shape ``(N, n_u)`` and disturbances ``W`` of shape
``(N, n_w)``.  Single points may be passed as 1-D arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "DimensionError",
    "StateSpacePoint",
    "SchedulingEntry",
    "FactorizedModel",
    "AnalyticBenchmarkModel",
    "ParafoilModel",
    "ParafoilParams",
    "get_model",
    "full_scheduling_region",
    "sinc",
    "rotation_matrix",
    "euler_rate_matrix",
]

# Width given to a scheduling interval that collapses below 1e-12, so that
# downstream region boxes never have zero volume.
DEGENERATE_WIDTH = 1e-6
DEGENERATE_EPS = 1e-12


class DimensionError(ValueError):
    """Raised when a state/input/disturbance has the wrong length."""


def sinc(z: np.ndarray) -> np.ndarray:
    """Unnormalized sinc, ``sin(z)/z`` with value 1 at ``z = 0``."""
    return np.sinc(np.asarray(z) / np.pi)


def rotation_matrix(eta: np.ndarray) -> np.ndarray:
    """Body-to-inertial rotation for Euler angles (roll, pitch, yaw).

    Parameters
    ----------
    eta : array, shape (N, 3) or (3,)
        Euler angles in radians, ZYX convention.

    Returns
    -------
    array, shape (N, 3, 3) or (3, 3)
    """
    eta = np.asarray(eta, dtype=float)
    single = eta.ndim == 1
    eta = np.atleast_2d(eta)
    sphi, cphi = np.sin(eta[:, 0]), np.cos(eta[:, 0])
    sth, cth = np.sin(eta[:, 1]), np.cos(eta[:, 1])
    spsi, cpsi = np.sin(eta[:, 2]), np.cos(eta[:, 2])
    R = np.empty((eta.shape[0], 3, 3))
    R[:, 0, 0] = cpsi * cth
    R[:, 0, 1] = cpsi * sth * sphi - spsi * cphi
    R[:, 0, 2] = cpsi * sth * cphi + spsi * sphi
    R[:, 1, 0] = spsi * cth
    R[:, 1, 1] = spsi * sth * sphi + cpsi * cphi
    R[:, 1, 2] = spsi * sth * cphi - cpsi * sphi
    R[:, 2, 0] = -sth
    R[:, 2, 1] = cth * sphi
    R[:, 2, 2] = cth * cphi
    return R[0] if single else R


def euler_rate_matrix(eta: np.ndarray) -> np.ndarray:
    """Map from body angular rates to Euler angle rates.

    Singular at pitch +-pi/2; the parafoil operating region keeps pitch
    away from the singularity.
    """
    eta = np.asarray(eta, dtype=float)
    single = eta.ndim == 1
    eta = np.atleast_2d(eta)
    sphi, cphi = np.sin(eta[:, 0]), np.cos(eta[:, 0])
    tth = np.tan(eta[:, 1])
    sec = 1.0 / np.cos(eta[:, 1])
    J = np.zeros((eta.shape[0], 3, 3))
    J[:, 0, 0] = 1.0
    J[:, 0, 1] = sphi * tth
    J[:, 0, 2] = cphi * tth
    J[:, 1, 1] = cphi
    J[:, 1, 2] = -sphi
    J[:, 2, 1] = sphi * sec
    J[:, 2, 2] = cphi * sec
    return J[0] if single else J


def _skew(w: np.ndarray) -> np.ndarray:
    """Cross-product matrices for a batch of 3-vectors, shape (N, 3, 3)."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    S = np.zeros((w.shape[0], 3, 3))
    S[:, 0, 1] = -w[:, 2]
    S[:, 0, 2] = w[:, 1]
    S[:, 1, 0] = w[:, 2]
    S[:, 1, 2] = -w[:, 0]
    S[:, 2, 0] = -w[:, 1]
    S[:, 2, 1] = w[:, 0]
    return S


@dataclass(frozen=True)
class StateSpacePoint:
    """One operating point (x, u, w) of a model."""

    x: np.ndarray
    u: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        for name in ("x", "u", "w"):
            arr = np.asarray(getattr(self, name), dtype=float).ravel()
            object.__setattr__(self, name, arr)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite entries in {name}")


@dataclass(frozen=True)
class SchedulingEntry:
    """A nonconstant matrix entry promoted to a scheduling signal.

    ``func(X, U, W)`` returns the entry value for a batch of points, shape
    ``(N,)``.  ``block`` is one of ``"A"``, ``"Bu"``, ``"Bw"``.
    """

    name: str
    block: str
    row: int
    col: int
    func: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


# Canonical block order used for scheduling indices and vectorized layouts.
BLOCK_ORDER = ("A", "Bu", "Bw")


class FactorizedModel:
    """A nonlinear model with an exact entrywise LPV factorization.

    Parameters
    ----------
    name : str
        Identifier used in serialized artifacts.
    n_x, n_u, n_w : int
        State, input and disturbance dimensions.  The output is the full
        state (C = I, Du = Dw = 0).
    const_A, const_Bu, const_Bw : arrays
        Constant parts of the factorized matrices.  Positions owned by a
        scheduling entry must be zero here.
    entries : sequence of SchedulingEntry
        The nonconstant entries.  They are re-sorted into the canonical
        order: block A, then Bu, then Bw, column-major inside each block.
    x_bounds, u_bounds, w_bounds : arrays, shape (dim, 2)
        Per-coordinate operating region bounds.
    angle_indices : tuple of int
        State coordinates that are angles (used by feature maps that
        expand angles into sine/cosine pairs).
    metadata : dict, optional
        Free-form extras (e.g. known variation rank for benchmarks).
    """

    def __init__(
        self,
        name: str,
        n_x: int,
        n_u: int,
        n_w: int,
        const_A: np.ndarray,
        const_Bu: np.ndarray,
        const_Bw: np.ndarray,
        entries: Sequence[SchedulingEntry],
        x_bounds: np.ndarray,
        u_bounds: np.ndarray,
        w_bounds: np.ndarray,
        angle_indices: tuple = (),
        metadata: Optional[dict] = None,
    ):
        self.name = name
        self.n_x = int(n_x)
        self.n_u = int(n_u)
        self.n_w = int(n_w)
        self.n_y = int(n_x)
        self.const_A = np.asarray(const_A, dtype=float).reshape(n_x, n_x)
        self.const_Bu = np.asarray(const_Bu, dtype=float).reshape(n_x, n_u)
        self.const_Bw = np.asarray(const_Bw, dtype=float).reshape(n_x, max(n_w, 0))
        key = lambda e: (BLOCK_ORDER.index(e.block), e.col, e.row)
        self.entries = tuple(sorted(entries, key=key))
        self.x_bounds = np.asarray(x_bounds, dtype=float).reshape(n_x, 2)
        self.u_bounds = np.asarray(u_bounds, dtype=float).reshape(n_u, 2)
        self.w_bounds = np.asarray(w_bounds, dtype=float).reshape(max(n_w, 0), 2)
        self.angle_indices = tuple(angle_indices)
        self.metadata = dict(metadata or {})
        self._check_entries()

    @property
    def n_theta(self) -> int:
        return len(self.entries)

    def _check_entries(self):
        shapes = {"A": self.const_A.shape, "Bu": self.const_Bu.shape, "Bw": self.const_Bw.shape}
        consts = {"A": self.const_A, "Bu": self.const_Bu, "Bw": self.const_Bw}
        seen = set()
        for e in self.entries:
            nr, nc = shapes[e.block]
            if not (0 <= e.row < nr and 0 <= e.col < nc):
                raise ValueError(f"entry {e.name}: ({e.row},{e.col}) outside {e.block} {shapes[e.block]}")
            pos = (e.block, e.row, e.col)
            if pos in seen:
                raise ValueError(f"duplicate scheduling entry at {pos}")
            seen.add(pos)
            if consts[e.block][e.row, e.col] != 0.0:
                raise ValueError(f"constant part nonzero under scheduled entry {pos}")

    # -- batching helpers ---------------------------------------------------

    def _as_batch(self, X, U, W):
        X = np.asarray(X, dtype=float)
        U = np.asarray(U, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        U = np.atleast_2d(U)
        if W is None:
            W = np.zeros((X.shape[0], self.n_w))
        else:
            W = np.asarray(W, dtype=float)
            if self.n_w == 0:
                W = W.reshape(X.shape[0], 0) if W.size == 0 else W
            W = np.atleast_2d(W)
        if X.shape[1] != self.n_x:
            raise DimensionError(f"{self.name}: expected n_x={self.n_x}, got state width {X.shape[1]}")
        if U.shape[1] != self.n_u:
            raise DimensionError(f"{self.name}: expected n_u={self.n_u}, got input width {U.shape[1]}")
        if W.shape[1] != self.n_w:
            raise DimensionError(f"{self.name}: expected n_w={self.n_w}, got disturbance width {W.shape[1]}")
        if not (X.shape[0] == U.shape[0] == W.shape[0]):
            raise DimensionError("batch sizes of x, u, w differ")
        return X, U, W, single

    # -- evaluation ---------------------------------------------------------

    def f(self, X, U, W=None) -> np.ndarray:
        """Vector field ``f(x, u, w)``, evaluated directly from the physics."""
        X, U, W, single = self._as_batch(X, U, W)
        out = self._f_physics(X, U, W)
        return out[0] if single else out

    def _f_physics(self, X, U, W) -> np.ndarray:
        # Default: fall back to the factorized product.  Built-ins override
        # this with an independent closed-form evaluation.
        return self._f_factorized_batch(X, U, W)

    def blocks(self, X, U, W=None):
        """Factorized matrices ``(A, Bu, Bw)`` stacked over the batch."""
        X, U, W, single = self._as_batch(X, U, W)
        n = X.shape[0]
        A = np.broadcast_to(self.const_A, (n, self.n_x, self.n_x)).copy()
        Bu = np.broadcast_to(self.const_Bu, (n, self.n_x, self.n_u)).copy()
        Bw = np.broadcast_to(self.const_Bw, (n, self.n_x, self.n_w)).copy()
        blocks = {"A": A, "Bu": Bu, "Bw": Bw}
        for e in self.entries:
            blocks[e.block][:, e.row, e.col] = e.func(X, U, W)
        if single:
            return A[0], Bu[0], Bw[0]
        return A, Bu, Bw

    def _f_factorized_batch(self, X, U, W) -> np.ndarray:
        A, Bu, Bw = self.blocks(X, U, W)
        if A.ndim == 2:
            A, Bu, Bw = A[None], Bu[None], Bw[None]
        out = np.einsum("nij,nj->ni", A, X) + np.einsum("nij,nj->ni", Bu, U)
        if self.n_w:
            out += np.einsum("nij,nj->ni", Bw, W)
        return out

    def f_factorized(self, X, U, W=None) -> np.ndarray:
        """``A(x,u,w) x + Bu(x,u,w) u + Bw(x,u,w) w`` from the factorization."""
        X, U, W, single = self._as_batch(X, U, W)
        out = self._f_factorized_batch(X, U, W)
        return out[0] if single else out

    def psi(self, X, U, W=None) -> np.ndarray:
        """Full scheduling map, shape ``(N, n_theta)``."""
        X, U, W, single = self._as_batch(X, U, W)
        out = np.empty((X.shape[0], self.n_theta))
        for k, e in enumerate(self.entries):
            out[:, k] = e.func(X, U, W)
        return out[0] if single else out

    def blocks_from_theta(self, theta: np.ndarray):
        """Affine entry template: rebuild ``(A, Bu, Bw)`` from scheduling values."""
        theta = np.asarray(theta, dtype=float)
        single = theta.ndim == 1
        theta = np.atleast_2d(theta)
        if theta.shape[1] != self.n_theta:
            raise DimensionError(f"expected n_theta={self.n_theta}, got {theta.shape[1]}")
        n = theta.shape[0]
        A = np.broadcast_to(self.const_A, (n, self.n_x, self.n_x)).copy()
        Bu = np.broadcast_to(self.const_Bu, (n, self.n_x, self.n_u)).copy()
        Bw = np.broadcast_to(self.const_Bw, (n, self.n_x, self.n_w)).copy()
        blocks = {"A": A, "Bu": Bu, "Bw": Bw}
        for k, e in enumerate(self.entries):
            blocks[e.block][:, e.row, e.col] = theta[:, k]
        if single:
            return A[0], Bu[0], Bw[0]
        return A, Bu, Bw

    # -- spec-facing single-point operations --------------------------------

    def evaluate_f(self, pt: StateSpacePoint) -> np.ndarray:
        """State derivative at one operating point."""
        out = self.f(pt.x, pt.u, pt.w)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError(f"{self.name}: non-finite derivative; point far outside region?")
        return out

    def extract_full_scheduling(self, pt: StateSpacePoint) -> np.ndarray:
        """Scheduling vector ``theta = psi(x, u, w)`` at one point."""
        return self.psi(pt.x, pt.u, pt.w)

    def in_region(self, X, U, W=None) -> np.ndarray:
        """Boolean mask of points lying inside the declared operating region."""
        X, U, W, single = self._as_batch(X, U, W)
        ok = np.all((X >= self.x_bounds[:, 0]) & (X <= self.x_bounds[:, 1]), axis=1)
        ok &= np.all((U >= self.u_bounds[:, 0]) & (U <= self.u_bounds[:, 1]), axis=1)
        if self.n_w:
            ok &= np.all((W >= self.w_bounds[:, 0]) & (W <= self.w_bounds[:, 1]), axis=1)
        return bool(ok[0]) if single else ok

    def region_center(self):
        xc = self.x_bounds.mean(axis=1)
        uc = self.u_bounds.mean(axis=1)
        wc = self.w_bounds.mean(axis=1) if self.n_w else np.zeros(0)
        return xc, uc, wc

    def describe(self) -> dict:
        """Model metadata as a JSON-friendly dict (dimensions, bounds, entries)."""
        return {
            "name": self.name,
            "n_x": self.n_x,
            "n_u": self.n_u,
            "n_w": self.n_w,
            "n_y": self.n_y,
            "n_theta": self.n_theta,
            "angle_indices": list(self.angle_indices),
            "x_bounds": self.x_bounds.tolist(),
            "u_bounds": self.u_bounds.tolist(),
            "w_bounds": self.w_bounds.tolist(),
            "entries": [
                {"index": k, "name": e.name, "block": e.block, "row": e.row, "col": e.col}
                for k, e in enumerate(self.entries)
            ],
            "metadata": {k: v for k, v in self.metadata.items() if not isinstance(v, np.ndarray)},
        }


# ---------------------------------------------------------------------------
# Analytic benchmark
# ---------------------------------------------------------------------------


class AnalyticBenchmarkModel(FactorizedModel):
    """3-state benchmark with a known minimal scheduling dimension.

    Dynamics::

        x1' = x2
        x2' = -sinc(x1) * x1 + cos(x1) * u      (= -sin(x1) + cos(x1) u)
        x3' = -x3 + sinc(x1) * x2

    Extraction yields three scheduling entries (-sinc, sinc, cos), but the
    first two are collinear after centering, so the variation data matrix
    has rank exactly 2.  That rank is recorded in ``metadata`` and serves
    as the oracle for truncation tests.
    """

    def __init__(self):
        entries = [
            SchedulingEntry("A[1,0] = -sinc(x1)", "A", 1, 0, lambda X, U, W: -sinc(X[:, 0])),
            SchedulingEntry("A[2,1] = sinc(x1)", "A", 2, 1, lambda X, U, W: sinc(X[:, 0])),
            SchedulingEntry("Bu[1,0] = cos(x1)", "Bu", 1, 0, lambda X, U, W: np.cos(X[:, 0])),
        ]
        const_A = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, -1.0]])
        super().__init__(
            name="analytic-benchmark",
            n_x=3,
            n_u=1,
            n_w=0,
            const_A=const_A,
            const_Bu=np.zeros((3, 1)),
            const_Bw=np.zeros((3, 0)),
            entries=entries,
            x_bounds=[[-np.pi, np.pi], [-2.0, 2.0], [-2.0, 2.0]],
            u_bounds=[[-1.0, 1.0]],
            w_bounds=np.zeros((0, 2)),
            angle_indices=(),
            metadata={"variation_rank": 2},
        )

    def _f_physics(self, X, U, W):
        x1, x2, x3 = X[:, 0], X[:, 1], X[:, 2]
        out = np.empty_like(X)
        out[:, 0] = x2
        out[:, 1] = -np.sin(x1) + np.cos(x1) * U[:, 0]
        out[:, 2] = -x3 + sinc(x1) * x2
        return out


# ---------------------------------------------------------------------------
# Parafoil descent vehicle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParafoilParams:
    """Coefficient set of the rigid-body parafoil surrogate.

    The aerodynamic coefficient functions are low-order polynomials in the
    body velocity with magnitudes chosen so that open-loop descent stays
    inside the operating region: drag balances weight near 40 m/s, attitude
    is pendulum-stable with strong rate damping, and brake deflections
    steer gently.  Values are surrogate choices, not vehicle data.
    """

    mass: float = 320.0                      # kg
    inertia: tuple = (450.0, 420.0, 380.0)   # kg m^2, diagonal
    mu_gravity: float = 3.986004418e14       # m^3/s^2
    rho: float = 0.74                        # kg/m^3 at mission altitude
    area: float = 24.0                       # m^2 canopy reference area
    span: float = 7.0                        # m
    v_ref: float = 15.0                      # m/s coefficient scaling speed

    # drag/lift: force = -q0 (c_d0 + c_d2 |v|^2 / v_ref^2) L_drag v_air
    c_d0: float = 0.55
    c_d2: float = 0.85
    # rate coupling into force: q0 span (c_l0 + c_l1 vx / v_ref) L_rate w
    c_l0: float = 0.25
    c_l1: float = 0.10
    # brake force: q0 (c_b0 + c_b2 vx^2 / v_ref^2) P_force delta
    c_b0: float = 0.35
    c_b2: float = 0.15
    # moment from velocity: q0 span (c_m0 + c_m1 vx / v_ref) L_mom v_air
    c_m0: float = 0.020
    c_m1: float = 0.008
    # rate damping moment: -q0 span^2 (c_q0 + c_q2 |v|^2 / v_ref^2) L_damp w
    c_q0: float = 0.85
    c_q2: float = 0.20
    # brake moment: q0 span (c_n0 + c_n2 vx^2 / v_ref^2) P_mom delta
    c_n0: float = 0.25
    c_n2: float = 0.10
    # roll/pitch pendulum restoring torque coefficient (N m / rad)
    k_pend: float = 130.0

    @property
    def q0(self) -> float:
        return 0.5 * self.rho * self.area


# Constant aerodynamic shape matrices of the surrogate.  The sparsity
# patterns decide which matrix entries become scheduling signals.
_L_DRAG = np.array([[1.0, 0.0, -0.85], [0.0, 1.15, 0.0], [0.85, 0.0, 1.4]])
_L_RATE = np.array([[0.0, 0.4, 0.0], [-0.4, 0.0, 0.3], [0.0, -0.5, 0.0]])
_P_FORCE = np.array([[-0.8, -0.8], [0.5, -0.5], [-0.3, -0.3]])
_L_MOM = np.array([[0.0, 0.20, 0.0], [0.15, 0.0, -0.55], [0.0, 0.25, 0.0]])
_L_DAMP = np.diag([1.0, 0.85, 0.6])
_P_MOM = np.array([[0.22, -0.22], [-0.16, -0.16], [0.55, -0.55]])

EARTH_RADIUS = 6.371e6  # m


class ParafoilModel(FactorizedModel):
    """12-state rigid-body parafoil descent model.

    State ``x = [r, eta, v, omega]`` with position ``r`` in an
    Earth-centered inertial frame, Euler angles ``eta = (roll, pitch,
    yaw)``, and translational/angular velocity in the body frame.  Input
    ``u = delta in [0,1]^2`` is the left/right brake pair; ``w`` is wind
    velocity in the inertial frame.

    Dynamics::

        r'     = R(eta) v
        eta'   = J(eta) omega
        v'     = -omega x v + (f_aero + f_grav) / m
        omega' = -I^-1 (omega x I omega) + I^-1 m_aero

    Gravity is the inverse-square central field, factorized with respect
    to ``r``; aerodynamic forces and moments are polynomial in the body
    velocity and factorized with respect to ``v``, ``omega``, ``delta``
    and (through the airspeed) ``w``.  Pitch is bounded away from the
    Euler-kinematics singularity so that every scheduling signal stays
    bounded on the operating region.

    The default coefficient set yields 79 scheduling entries (49 in A, 12
    in Bu, 18 in Bw), recorded in ``metadata["n_theta"]``.
    """

    def __init__(self, params: Optional[ParafoilParams] = None):
        p = params or ParafoilParams()
        self.params = p
        inertia = np.asarray(p.inertia, dtype=float)
        entries = self._build_entries(p, inertia)

        x_bounds = np.array(
            [[-3e3, 3e3], [-3e3, 3e3], [6.3e6, 6.4e6]]
            + [[-np.pi, np.pi], [-1.0, 1.0], [-np.pi, np.pi]]
            + [[-50.0, 50.0]] * 3
            + [[-0.1, 0.1]] * 3
        )
        super().__init__(
            name="parafoil",
            n_x=12,
            n_u=2,
            n_w=3,
            const_A=self._const_A(),
            const_Bu=np.zeros((12, 2)),
            const_Bw=np.zeros((12, 3)),
            entries=entries,
            x_bounds=x_bounds,
            u_bounds=[[0.0, 1.0], [0.0, 1.0]],
            w_bounds=[[-18.0, 18.0]] * 3,
            angle_indices=(3, 4, 5),
            metadata={"n_theta": len(entries), "params": {k: getattr(p, k) for k in ParafoilParams.__dataclass_fields__}},
        )

    @staticmethod
    def _const_A() -> np.ndarray:
        A0 = np.zeros((12, 12))
        A0[3, 9] = 1.0  # J[0,0] of the Euler-rate map is identically 1
        return A0

    # Scalar coefficient polynomials (batched).
    @staticmethod
    def _cd(p, V):
        return p.c_d0 + p.c_d2 * np.sum(V * V, axis=1) / p.v_ref**2

    @staticmethod
    def _cl(p, V):
        return p.c_l0 + p.c_l1 * V[:, 0] / p.v_ref

    @staticmethod
    def _cb(p, V):
        return p.c_b0 + p.c_b2 * V[:, 0] ** 2 / p.v_ref**2

    @staticmethod
    def _cm(p, V):
        return p.c_m0 + p.c_m1 * V[:, 0] / p.v_ref

    @staticmethod
    def _cq(p, V):
        return p.c_q0 + p.c_q2 * np.sum(V * V, axis=1) / p.v_ref**2

    @staticmethod
    def _cn(p, V):
        return p.c_n0 + p.c_n2 * V[:, 0] ** 2 / p.v_ref**2

    def _build_entries(self, p: ParafoilParams, inertia: np.ndarray) -> list:
        m = p.mass
        q0 = p.q0
        b = p.span
        I1, I2, I3 = inertia
        entries = []

        # r' = R(eta) v  ->  A[0:3, 6:9]
        for i in range(3):
            for j in range(3):
                entries.append(SchedulingEntry(
                    f"A[{i},{6 + j}] rotation", "A", i, 6 + j,
                    lambda X, U, W, i=i, j=j: rotation_matrix(X[:, 3:6])[:, i, j],
                ))

        # eta' = J(eta) omega  ->  A[3:6, 9:12], J[0,0] stays constant
        for i in range(3):
            for j in range(3):
                if j == 0:
                    continue  # first column is constant (1, 0, 0)
                entries.append(SchedulingEntry(
                    f"A[{3 + i},{9 + j}] euler-rate", "A", 3 + i, 9 + j,
                    lambda X, U, W, i=i, j=j: euler_rate_matrix(X[:, 3:6])[:, i, j],
                ))

        # gravity: v' += -(mu/|r|^3) R(eta)^T r  ->  A[6:9, 0:3]
        def grav_entry(X, U, W, i=0, j=0):
            r = X[:, 0:3]
            scale = p.mu_gravity / np.linalg.norm(r, axis=1) ** 3
            return -scale * rotation_matrix(X[:, 3:6])[:, j, i]  # transpose

        for i in range(3):
            for j in range(3):
                entries.append(SchedulingEntry(
                    f"A[{6 + i},{j}] gravity", "A", 6 + i, j,
                    lambda X, U, W, i=i, j=j: grav_entry(X, U, W, i, j),
                ))

        # v' velocity block: -skew(omega) - (q0/m) cd(v) L_drag
        sgn = {(0, 1): (2, 1.0), (0, 2): (1, -1.0), (1, 0): (2, -1.0),
               (1, 2): (0, 1.0), (2, 0): (1, 1.0), (2, 1): (0, -1.0)}

        def vel_entry(X, U, W, i=0, j=0):
            val = -(q0 / m) * self._cd(p, X[:, 6:9]) * _L_DRAG[i, j]
            if (i, j) in sgn:
                k, s = sgn[(i, j)]
                val = val + s * X[:, 9 + k]
            return val

        for i in range(3):
            for j in range(3):
                if _L_DRAG[i, j] == 0.0 and (i, j) not in sgn:
                    continue
                entries.append(SchedulingEntry(
                    f"A[{6 + i},{6 + j}] coriolis+drag", "A", 6 + i, 6 + j,
                    lambda X, U, W, i=i, j=j: vel_entry(X, U, W, i, j),
                ))

        # v' rate-coupling block: (q0 b / m) cl(v) L_RATE  ->  A[6:9, 9:12]
        for i in range(3):
            for j in range(3):
                if _L_RATE[i, j] == 0.0:
                    continue
                entries.append(SchedulingEntry(
                    f"A[{6 + i},{9 + j}] rate coupling", "A", 6 + i, 9 + j,
                    lambda X, U, W, i=i, j=j: (q0 * b / m) * self._cl(p, X[:, 6:9]) * _L_RATE[i, j],
                ))

        # omega' from velocity: I^-1 q0 b cm(v) L_MOM  ->  A[9:12, 6:9]
        for i in range(3):
            for j in range(3):
                if _L_MOM[i, j] == 0.0:
                    continue
                entries.append(SchedulingEntry(
                    f"A[{9 + i},{6 + j}] aero moment", "A", 9 + i, 6 + j,
                    lambda X, U, W, i=i, j=j: (q0 * b / inertia[i]) * self._cm(p, X[:, 6:9]) * _L_MOM[i, j],
                ))

        # omega' rate block: gyroscopic terms plus damping diagonal.
        # omega x I omega is factorized toward the higher-index rate column.
        def damp_entry(X, U, W, i=0):
            return -(q0 * b * b / inertia[i]) * self._cq(p, X[:, 6:9]) * _L_DAMP[i, i]

        for i in range(3):
            entries.append(SchedulingEntry(
                f"A[{9 + i},{9 + i}] rate damping", "A", 9 + i, 9 + i,
                lambda X, U, W, i=i: damp_entry(X, U, W, i),
            ))
        entries.append(SchedulingEntry(
            "A[9,11] gyroscopic", "A", 9, 11,
            lambda X, U, W: -((I3 - I2) / I1) * X[:, 10],
        ))
        entries.append(SchedulingEntry(
            "A[10,11] gyroscopic", "A", 10, 11,
            lambda X, U, W: -((I1 - I3) / I2) * X[:, 9],
        ))
        entries.append(SchedulingEntry(
            "A[11,10] gyroscopic", "A", 11, 10,
            lambda X, U, W: -((I2 - I1) / I3) * X[:, 9],
        ))

        # pendulum restoring torque, factorized w.r.t. roll/pitch angles
        entries.append(SchedulingEntry(
            "A[9,3] pendulum roll", "A", 9, 3,
            lambda X, U, W: -(p.k_pend / I1) * sinc(X[:, 3]),
        ))
        entries.append(SchedulingEntry(
            "A[10,4] pendulum pitch", "A", 10, 4,
            lambda X, U, W: -(p.k_pend / I2) * sinc(X[:, 4]),
        ))

        # brake force: (q0/m) cb(v) P_FORCE  ->  Bu[6:9, :]
        for i in range(3):
            for j in range(2):
                entries.append(SchedulingEntry(
                    f"Bu[{6 + i},{j}] brake force", "Bu", 6 + i, j,
                    lambda X, U, W, i=i, j=j: (q0 / m) * self._cb(p, X[:, 6:9]) * _P_FORCE[i, j],
                ))

        # brake moment: I^-1 q0 b cn(v) P_MOM  ->  Bu[9:12, :]
        for i in range(3):
            for j in range(2):
                entries.append(SchedulingEntry(
                    f"Bu[{9 + i},{j}] brake moment", "Bu", 9 + i, j,
                    lambda X, U, W, i=i, j=j: (q0 * b / inertia[i]) * self._cn(p, X[:, 6:9]) * _P_MOM[i, j],
                ))

        # wind columns: the airspeed v_air = v - R^T w pushes the drag and
        # moment terms into Bw with opposite sign.
        def wind_force_entry(X, U, W, i=0, j=0):
            RT = np.transpose(rotation_matrix(X[:, 3:6]), (0, 2, 1))
            mat = np.einsum("ik,nkj->nij", _L_DRAG, RT)
            return (q0 / m) * self._cd(p, X[:, 6:9]) * mat[:, i, j]

        def wind_moment_entry(X, U, W, i=0, j=0):
            RT = np.transpose(rotation_matrix(X[:, 3:6]), (0, 2, 1))
            mat = np.einsum("ik,nkj->nij", _L_MOM, RT)
            return -(q0 * b / inertia[i]) * self._cm(p, X[:, 6:9]) * mat[:, i, j]

        for i in range(3):
            for j in range(3):
                entries.append(SchedulingEntry(
                    f"Bw[{6 + i},{j}] wind force", "Bw", 6 + i, j,
                    lambda X, U, W, i=i, j=j: wind_force_entry(X, U, W, i, j),
                ))
        for i in range(3):
            for j in range(3):
                entries.append(SchedulingEntry(
                    f"Bw[{9 + i},{j}] wind moment", "Bw", 9 + i, j,
                    lambda X, U, W, i=i, j=j: wind_moment_entry(X, U, W, i, j),
                ))
        return entries

    def _f_physics(self, X, U, W):
        p = self.params
        inertia = np.asarray(p.inertia)
        r, eta = X[:, 0:3], X[:, 3:6]
        v, omega = X[:, 6:9], X[:, 9:12]
        R = rotation_matrix(eta)
        J = euler_rate_matrix(eta)

        rdot = np.einsum("nij,nj->ni", R, v)
        etadot = np.einsum("nij,nj->ni", J, omega)

        v_air = v - np.einsum("nji,nj->ni", R, W)  # R^T w
        q0, b = p.q0, p.span
        f_aero = (
            -q0 * self._cd(p, v)[:, None] * np.einsum("ij,nj->ni", _L_DRAG, v_air)
            + q0 * b * self._cl(p, v)[:, None] * np.einsum("ij,nj->ni", _L_RATE, omega)
            + q0 * self._cb(p, v)[:, None] * np.einsum("ij,nj->ni", _P_FORCE, U)
        )
        scale = p.mu_gravity / np.linalg.norm(r, axis=1) ** 3
        f_grav = -p.mass * scale[:, None] * np.einsum("nji,nj->ni", R, r)
        vdot = -np.cross(omega, v) + (f_aero + f_grav) / p.mass

        pend = np.zeros_like(omega)
        pend[:, 0] = np.sin(eta[:, 0])
        pend[:, 1] = np.sin(eta[:, 1])
        m_aero = (
            q0 * b * self._cm(p, v)[:, None] * np.einsum("ij,nj->ni", _L_MOM, v_air)
            - q0 * b * b * self._cq(p, v)[:, None] * np.einsum("ij,nj->ni", _L_DAMP, omega)
            + q0 * b * self._cn(p, v)[:, None] * np.einsum("ij,nj->ni", _P_MOM, U)
            - p.k_pend * pend
        )
        gyro = -np.cross(omega, omega * inertia)
        omegadot = (gyro + m_aero) / inertia
        return np.concatenate([rdot, etadot, vdot, omegadot], axis=1)

    def level_flight_state(self, altitude: float = 5.5e3, speed: float = 14.0,
                           sink: float = -6.0) -> np.ndarray:
        """A representative descent initial condition at the given altitude."""
        x0 = np.zeros(12)
        x0[2] = EARTH_RADIUS + altitude
        x0[6] = speed
        x0[8] = sink
        return x0


def get_model(name: str, **kwargs) -> FactorizedModel:
    """Construct a built-in model by name."""
    table = {
        "analytic-benchmark": AnalyticBenchmarkModel,
        "parafoil": ParafoilModel,
    }
    try:
        return table[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(table)}") from None


# ---------------------------------------------------------------------------
# Scheduling region of the full-order map
# ---------------------------------------------------------------------------


def widen_degenerate(lo: np.ndarray, hi: np.ndarray):
    """Symmetrically widen intervals narrower than 1e-12 to width 1e-6."""
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    narrow = (hi - lo) < DEGENERATE_EPS
    lo[narrow] -= 0.5 * DEGENERATE_WIDTH
    hi[narrow] += 0.5 * DEGENERATE_WIDTH
    return lo, hi


def _region_probe_points(model: FactorizedModel, grid_density: int, seed: int):
    """Deterministic, density-nested probe points covering the region.

    The point set for density g is a subset of the set for any g' > g, so
    the resulting extreme-value box can only grow with the density.
    """
    bounds = [model.x_bounds, model.u_bounds]
    if model.n_w:
        bounds.append(model.w_bounds)
    B = np.vstack(bounds)
    dim = B.shape[0]
    lo, hi = B[:, 0], B[:, 1]
    center = 0.5 * (lo + hi)

    pts = [center[None, :]]
    # corners (capped for very high dimension; cap deterministic)
    if dim <= 17:
        masks = (np.arange(2**dim)[:, None] >> np.arange(dim)) & 1
        pts.append(np.where(masks.astype(bool), hi, lo))
    # cumulative per-axis sweeps: union of linspaces of every density <= g
    for g in range(2, grid_density + 1):
        ticks = np.linspace(0.0, 1.0, g)
        for ax in range(dim):
            sweep = np.tile(center, (g, 1))
            sweep[:, ax] = lo[ax] + ticks * (hi[ax] - lo[ax])
            pts.append(sweep)
    # nested random fill, prefix-stable in the density
    rng = np.random.default_rng(seed)
    n_rand = 512 * grid_density
    pts.append(lo + rng.random((n_rand, dim)) * (hi - lo))
    P = np.vstack(pts)
    nx, nu = model.n_x, model.n_u
    return P[:, :nx], P[:, nx:nx + nu], P[:, nx + nu:]


def full_scheduling_region(model: FactorizedModel, grid_density: int, seed: int = 0):
    """Componentwise extreme-value box of the full scheduling map.

    Evaluates ``psi`` on a deterministic grid-plus-random probe of the
    operating region and returns per-component ``(lo, hi)`` arrays.
    Degenerate components are widened to a small positive width.
    """
    if grid_density < 2:
        raise ValueError("grid_density must be >= 2")
    X, U, W = _region_probe_points(model, int(grid_density), seed)
    theta = model.psi(X, U, W if model.n_w else None)
    if not np.all(np.isfinite(theta)):
        raise FloatingPointError("scheduling map not finite on the operating region probe")
    return widen_degenerate(theta.min(axis=0), theta.max(axis=0))
