"""Fixed-step simulation and trajectory-data generation.

The integrator is the classical fourth-order Runge-Kutta scheme on a
uniform time grid.  Scenario batches are integrated simultaneously (the
vector field is vectorized over a batch axis), which keeps dataset
generation fast at a 400 Hz step.  Diverging trajectories are truncated at
the last finite state and flagged, never silently dropped.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .models import FactorizedModel

log = logging.getLogger(__name__)

__all__ = [
    "InputSignal",
    "ConstantSignal",
    "PiecewiseConstantSignal",
    "Scenario",
    "Trajectory",
    "SampleSet",
    "integrate_rk4",
    "integrate_scenarios",
    "generate_dataset",
    "subsample_trajectories",
    "default_scenarios",
    "random_brake_schedule",
]


class InputSignal:
    """Time signal interface: ``sample(times) -> (len(times), dim)``."""

    dim: int

    def sample(self, times: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantSignal(InputSignal):
    value: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "value", np.atleast_1d(np.asarray(self.value, dtype=float)))

    @property
    def dim(self) -> int:
        return self.value.shape[0]

    def sample(self, times: np.ndarray) -> np.ndarray:
        return np.tile(self.value, (len(times), 1))


@dataclass(frozen=True)
class PiecewiseConstantSignal(InputSignal):
    """Holds ``values[k]`` on ``[breaks[k], breaks[k+1])``; clamps outside."""

    breaks: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breaks, dtype=float)
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if len(b) != v.shape[0]:
            raise ValueError("need one value row per breakpoint")
        if np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def sample(self, times: np.ndarray) -> np.ndarray:
        idx = np.clip(np.searchsorted(self.breaks, times, side="right") - 1, 0, len(self.breaks) - 1)
        return self.values[idx]


@dataclass(frozen=True)
class Scenario:
    """Initial condition plus open-loop input (and optional wind) signals."""

    x0: np.ndarray
    inputs: InputSignal
    wind: Optional[InputSignal] = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).ravel())


@dataclass
class Trajectory:
    """A simulated trajectory on a uniform time grid.

    ``n_valid`` is the number of valid samples; if the integration
    diverged it is smaller than ``len(t)`` and ``diverged`` is set.
    Arrays keep their full length with NaN past the valid range.
    """

    t: np.ndarray
    X: np.ndarray
    U: np.ndarray
    W: np.ndarray
    h: float
    model_name: str
    label: str = ""
    diverged: bool = False
    n_valid: int = 0

    def __post_init__(self):
        if self.n_valid == 0:
            self.n_valid = len(self.t)
        if len(self.t) < 2:
            raise ValueError("trajectory needs at least two samples")

    @property
    def valid_slice(self) -> slice:
        return slice(0, self.n_valid)


def _stage_inputs(signal: Optional[InputSignal], half_times: np.ndarray, dim: int) -> np.ndarray:
    if signal is None:
        return np.zeros((len(half_times), dim))
    out = signal.sample(half_times)
    if out.shape[1] != dim:
        raise ValueError(f"signal dimension {out.shape[1]} does not match expected {dim}")
    return out


def integrate_scenarios(
    model: FactorizedModel,
    scenarios: Sequence[Scenario],
    h: float,
    T: float,
) -> list[Trajectory]:
    """Integrate a batch of scenarios with classical RK4.

    All scenarios share the step ``h`` and horizon ``T`` and advance in
    lockstep; a scenario whose state goes non-finite is frozen at its last
    finite sample and flagged as diverged.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    if T < h:
        raise ValueError("horizon must cover at least one step")
    n_steps = int(round(T / h))
    B = len(scenarios)
    if B == 0:
        raise ValueError("no scenarios given")

    half_times = 0.5 * h * np.arange(2 * n_steps + 1)
    Uh = np.stack([_stage_inputs(s.inputs, half_times, model.n_u) for s in scenarios], axis=1)
    Wh = np.stack([_stage_inputs(s.wind, half_times, model.n_w) for s in scenarios], axis=1)

    X = np.full((n_steps + 1, B, model.n_x), np.nan)
    X[0] = np.stack([s.x0 for s in scenarios])
    alive = np.ones(B, dtype=bool)
    n_valid = np.full(B, n_steps + 1, dtype=int)

    x = X[0].copy()
    for k in range(n_steps):
        u0, um, u1 = Uh[2 * k], Uh[2 * k + 1], Uh[2 * k + 2]
        w0, wm, w1 = Wh[2 * k], Wh[2 * k + 1], Wh[2 * k + 2]
        k1 = model.f(x, u0, w0)
        k2 = model.f(x + 0.5 * h * k1, um, wm)
        k3 = model.f(x + 0.5 * h * k2, um, wm)
        k4 = model.f(x + h * k3, u1, w1)
        x_next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        bad = alive & ~np.all(np.isfinite(x_next), axis=1)
        if np.any(bad):
            n_valid[bad] = k + 1
            alive[bad] = False
            for b in np.flatnonzero(bad):
                log.warning("scenario %r diverged at t=%.4f; truncating", scenarios[b].label, (k + 1) * h)
        x = np.where(alive[:, None], x_next, x)
        X[k + 1, alive] = x[alive]

    t = h * np.arange(n_steps + 1)
    out = []
    for b, s in enumerate(scenarios):
        out.append(Trajectory(
            t=t.copy(),
            X=X[:, b, :].copy(),
            U=Uh[::2, b, :].copy(),
            W=Wh[::2, b, :].copy(),
            h=h,
            model_name=model.name,
            label=s.label,
            diverged=not alive[b],
            n_valid=int(n_valid[b]),
        ))
    return out


def integrate_rk4(
    model: FactorizedModel,
    x0: np.ndarray,
    input_signal: InputSignal,
    h: float,
    T: float,
    wind_signal: Optional[InputSignal] = None,
) -> Trajectory:
    """Integrate one trajectory; see :func:`integrate_scenarios`."""
    (traj,) = integrate_scenarios(model, [Scenario(x0, input_signal, wind_signal)], h, T)
    return traj


# ---------------------------------------------------------------------------
# Scenario libraries
# ---------------------------------------------------------------------------


def random_brake_schedule(model: FactorizedModel, duration: float, rng: np.random.Generator,
                          dwell: tuple = (1.0, 5.0)) -> PiecewiseConstantSignal:
    """Piecewise-constant input with random levels and 1-5 s dwell times."""
    breaks = [0.0]
    while breaks[-1] < duration:
        breaks.append(breaks[-1] + rng.uniform(*dwell))
    breaks = np.asarray(breaks[:-1]) if len(breaks) > 1 else np.array([0.0])
    lo, hi = model.u_bounds[:, 0], model.u_bounds[:, 1]
    values = lo + rng.random((len(breaks), model.n_u)) * (hi - lo)
    return PiecewiseConstantSignal(breaks, values)


def _parafoil_maneuvers(model, duration: float) -> list:
    z = np.zeros(2)
    profiles = {
        "glide": ConstantSignal(z),
        "symmetric-brake": ConstantSignal(np.array([0.5, 0.5])),
        "left-turn": ConstantSignal(np.array([0.7, 0.1])),
        "right-turn": ConstantSignal(np.array([0.1, 0.7])),
        "s-turn": PiecewiseConstantSignal(
            np.arange(0.0, duration, max(duration / 4, 1.0)),
            np.array([[0.6, 0.1], [0.1, 0.6], [0.6, 0.1], [0.1, 0.6]])[: len(np.arange(0.0, duration, max(duration / 4, 1.0)))],
        ),
    }
    return list(profiles.items())


def default_scenarios(model: FactorizedModel, count: int, duration: float, seed: int) -> list[Scenario]:
    """Open-loop excitation scenarios covering the input box.

    For the parafoil: a small library of fixed maneuvers plus randomized
    brake schedules, started from perturbed descent conditions.  For other
    models: random piecewise-constant inputs from random in-region states.
    """
    rng = np.random.default_rng(seed)
    scenarios = []
    if model.name == "parafoil":
        maneuvers = _parafoil_maneuvers(model, duration)
        for i in range(count):
            x0 = model.level_flight_state(
                altitude=rng.uniform(4.5e3, 6.0e3),
                speed=rng.uniform(10.0, 18.0),
                sink=rng.uniform(-9.0, -4.0),
            )
            x0[3:6] = rng.uniform(-0.15, 0.15, size=3)
            x0[9:12] = rng.uniform(-0.02, 0.02, size=3)
            if i < len(maneuvers):
                name, sig = maneuvers[i]
            else:
                name, sig = f"random-{i}", random_brake_schedule(model, duration, rng)
            scenarios.append(Scenario(x0, sig, label=name))
    else:
        lo, hi = model.x_bounds[:, 0], model.x_bounds[:, 1]
        mid, halfspan = 0.5 * (lo + hi), 0.35 * (hi - lo)
        for i in range(count):
            x0 = mid + rng.uniform(-1.0, 1.0, size=model.n_x) * halfspan
            scenarios.append(Scenario(x0, random_brake_schedule(model, duration, rng), label=f"random-{i}"))
    return scenarios


# ---------------------------------------------------------------------------
# Sampled datasets
# ---------------------------------------------------------------------------


@dataclass
class SampleSet:
    """Sampled operating points with provenance into their trajectories."""

    X: np.ndarray
    U: np.ndarray
    W: np.ndarray
    traj_id: np.ndarray
    time_idx: np.ndarray
    seed: int
    model_name: str
    in_region: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.in_region is None:
            self.in_region = np.ones(len(self.X), dtype=bool)
        if len(self.X) == 0:
            raise ValueError("empty sample set")

    def __len__(self) -> int:
        return self.X.shape[0]

    def split(self, validation_fraction: float, seed: int) -> tuple["SampleSet", "SampleSet"]:
        """Disjoint train/validation split, reproducible from the seed."""
        if not 0.0 < validation_fraction < 1.0:
            raise ValueError("validation fraction must be in (0, 1)")
        n = len(self)
        n_val = max(1, int(round(validation_fraction * n)))
        if n_val >= n:
            raise ValueError("split leaves no training data")
        rng = np.random.default_rng(seed)
        idx = rng.permutation(n)
        val_idx = np.sort(idx[:n_val])
        train_idx = np.sort(idx[n_val:])
        return self._take(train_idx), self._take(val_idx)

    def subsample(self, n: int, seed: int) -> "SampleSet":
        """Uniform subsample without replacement, in stable order."""
        if not 0 < n <= len(self):
            raise ValueError(f"subsample size must be in [1, {len(self)}]")
        rng = np.random.default_rng(seed)
        return self._take(np.sort(rng.choice(len(self), size=n, replace=False)))

    def _take(self, idx: np.ndarray) -> "SampleSet":
        return SampleSet(
            X=self.X[idx], U=self.U[idx], W=self.W[idx],
            traj_id=self.traj_id[idx], time_idx=self.time_idx[idx],
            seed=self.seed, model_name=self.model_name, in_region=self.in_region[idx],
        )


def generate_dataset(
    model: FactorizedModel,
    scenarios: Sequence[Scenario],
    h: float,
    T: float,
    n_samples: int,
    seed: int,
) -> SampleSet:
    """Simulate the scenarios and subsample ``n_samples`` points uniformly."""
    trajectories = integrate_scenarios(model, scenarios, h, T)
    return subsample_trajectories(model, trajectories, n_samples, seed)


def subsample_trajectories(
    model: FactorizedModel,
    trajectories: Sequence[Trajectory],
    n_samples: int,
    seed: int,
) -> SampleSet:
    """Uniform subsample without replacement over the pooled valid points.

    The subsample is drawn with a seeded generator and returned in
    (trajectory, time) order, so the result is reproducible and
    independent of how the integration was parallelized.  Points past a
    divergence are excluded; points outside the operating region are kept
    but flagged.
    """
    if all(tr.diverged and tr.n_valid <= 1 for tr in trajectories):
        raise RuntimeError("all scenarios diverged immediately; no data available")

    xs, us, ws, tid, kidx = [], [], [], [], []
    for i, tr in enumerate(trajectories):
        s = tr.valid_slice
        xs.append(tr.X[s])
        us.append(tr.U[s])
        ws.append(tr.W[s])
        tid.append(np.full(tr.n_valid, i))
        kidx.append(np.arange(tr.n_valid))
    X = np.concatenate(xs)
    total = X.shape[0]
    if n_samples > total:
        raise ValueError(f"requested {n_samples} samples but only {total} points available")

    rng = np.random.default_rng(seed)
    seed = int(seed)
    pick = np.sort(rng.choice(total, size=n_samples, replace=False))
    U = np.concatenate(us)[pick]
    W = np.concatenate(ws)[pick]
    X = X[pick]
    sample = SampleSet(
        X=X, U=U, W=W,
        traj_id=np.concatenate(tid)[pick].astype(int),
        time_idx=np.concatenate(kidx)[pick].astype(int),
        seed=seed, model_name=model.name,
    )
    sample.in_region = model.in_region(X, U, W if model.n_w else None)
    n_out = int(np.sum(~sample.in_region))
    if n_out:
        log.info("%d/%d samples outside the declared operating region (flagged)", n_out, len(sample))
    return sample
