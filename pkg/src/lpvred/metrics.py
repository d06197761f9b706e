"""Reduction-quality measures and open-loop trajectory comparison.

Two error families quantify how well a reduced scheduling map reproduces
the embedded model:

* variation error: row-wise ``||Pi_i - Pihat_i||_2 / ||Pi_i||_inf`` over a
  dataset (one value per vectorized matrix entry),
* derivative error: the same normalized measure applied to the stacked
  state derivatives ``A x + Bu u`` versus the reduced model's prediction.

Aggregation uses the maximum and the root of the summed squares (no
division by the count); the conventional mean-square variant is available
behind a flag for sanity comparisons.  Both measures scale with the number
of samples, so every report carries its sample count.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from .lpv import AffineLpvModel, LpvDynamics, VariationDataset, build_variation_dataset
from .models import FactorizedModel
from .simulate import InputSignal, SampleSet, Scenario, Trajectory, integrate_scenarios

log = logging.getLogger(__name__)

__all__ = [
    "ErrorReport",
    "error_pi",
    "error_xdot",
    "aggregate",
    "evaluate_reduction",
    "TrajectoryComparison",
    "compare_trajectories",
]


def error_pi(Pi: np.ndarray, Pi_hat: np.ndarray):
    """Row-wise normalized reconstruction error of a variation matrix.

    Rows whose infinity norm is zero use denominator 1 and are returned in
    the flagged-row list.
    """
    Pi = np.asarray(Pi, dtype=float)
    Pi_hat = np.asarray(Pi_hat, dtype=float)
    if Pi.shape != Pi_hat.shape:
        raise ValueError(f"shape mismatch {Pi.shape} vs {Pi_hat.shape}")
    num = np.linalg.norm(Pi - Pi_hat, axis=1)
    den = np.abs(Pi).max(axis=1) if Pi.size else np.zeros(0)
    flagged = np.flatnonzero(den == 0.0)
    if flagged.size:
        log.debug("%d zero rows in the variation matrix; unit denominator used", flagged.size)
    den = np.where(den == 0.0, 1.0, den)
    return num / den, flagged


def error_xdot(
    model: FactorizedModel,
    lpv: AffineLpvModel,
    scheduling_fn,
    samples: SampleSet,
):
    """Per-state normalized error between embedded and reduced derivatives.

    Both sides are evaluated with zero wind.  Samples with non-finite
    evaluations are skipped with a logged count.
    """
    f_true = model.f_factorized(samples.X, samples.U, None).T  # (n_x, N)
    theta = np.atleast_2d(scheduling_fn(samples.X, samples.U))
    A, Bu = lpv.a_bu(theta)
    f_hat = (np.einsum("nij,nj->ni", A, samples.X) + np.einsum("nij,nj->ni", Bu, samples.U)).T
    good = np.all(np.isfinite(f_true), axis=0) & np.all(np.isfinite(f_hat), axis=0)
    n_skipped = int(np.sum(~good))
    if n_skipped:
        log.warning("skipped %d samples with non-finite derivatives", n_skipped)
        f_true, f_hat = f_true[:, good], f_hat[:, good]
    num = np.linalg.norm(f_true - f_hat, axis=1)
    den = np.abs(f_true).max(axis=1)
    flagged = np.flatnonzero(den == 0.0)
    den = np.where(den == 0.0, 1.0, den)
    return num / den, flagged


def aggregate(values: np.ndarray, conventional_rms: bool = False):
    """``(max, rms)`` of an error vector.

    The rms here is the root of the summed squares; pass
    ``conventional_rms=True`` for the mean-square variant.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot aggregate an empty vector")
    sumsq = float(np.sum(values**2))
    rms = np.sqrt(sumsq / values.size) if conventional_rms else np.sqrt(sumsq)
    return float(values.max()), float(rms)


@dataclass
class ErrorReport:
    """Error measures of one reduction on one dataset."""

    e_pi: np.ndarray
    e_xdot: np.ndarray
    n_theta_hat: int
    method: str
    normalization: str
    dataset_tag: str
    n_samples: int
    flagged_pi_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    flagged_xdot_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        for name in ("e_pi", "e_xdot"):
            v = np.asarray(getattr(self, name), dtype=float)
            if np.any(v < 0) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be finite and nonnegative")
            setattr(self, name, v)

    @property
    def max_e_pi(self) -> float:
        return aggregate(self.e_pi)[0]

    @property
    def rms_e_pi(self) -> float:
        return aggregate(self.e_pi)[1]

    @property
    def max_e_xdot(self) -> float:
        return aggregate(self.e_xdot)[0]

    @property
    def rms_e_xdot(self) -> float:
        return aggregate(self.e_xdot)[1]

    def summary(self) -> dict:
        return {
            "method": self.method,
            "normalization": self.normalization,
            "n_theta_hat": self.n_theta_hat,
            "dataset": self.dataset_tag,
            "n_samples": self.n_samples,
            "max_e_pi": self.max_e_pi,
            "rms_e_pi": self.rms_e_pi,
            "max_e_xdot": self.max_e_xdot,
            "rms_e_xdot": self.rms_e_xdot,
        }


def evaluate_reduction(
    model: FactorizedModel,
    reduction,
    samples: SampleSet,
    variation: Optional[VariationDataset] = None,
    dataset_tag: str = "validation",
) -> ErrorReport:
    """Full error report of a reduction (PCA or network) on a sample set.

    ``reduction`` must expose ``lpv``, ``scheduling_fn(model)`` and
    ``predict_pi(model, samples)``; the variation matrix is rebuilt from
    the samples when not supplied.
    """
    if variation is None:
        variation = build_variation_dataset(model, samples, mode=reduction.lpv.layout.mode)
    Pi_hat = reduction.predict_pi(model, samples)
    e_pi, flag_pi = error_pi(variation.Pi, Pi_hat)
    e_xd, flag_xd = error_xdot(model, reduction.lpv, reduction.scheduling_fn(model), samples)
    return ErrorReport(
        e_pi=e_pi, e_xdot=e_xd,
        n_theta_hat=reduction.n_theta,
        method=reduction.lpv.method,
        normalization=reduction.lpv.normalization,
        dataset_tag=dataset_tag,
        n_samples=len(samples),
        flagged_pi_rows=flag_pi, flagged_xdot_rows=flag_xd,
    )


# ---------------------------------------------------------------------------
# Open-loop trajectory comparison
# ---------------------------------------------------------------------------


@dataclass
class TrajectoryComparison:
    """Aligned open-loop runs of the nonlinear model and reduced models."""

    reference: Trajectory
    reduced: Dict[str, Trajectory]
    outside_region_counts: Dict[str, int]

    def state_error(self, label: str) -> np.ndarray:
        """Pointwise max-abs state deviation from the reference over time."""
        tr = self.reduced[label]
        n = min(tr.n_valid, self.reference.n_valid)
        return np.abs(tr.X[:n] - self.reference.X[:n]).max(axis=1)

    def drift_summary(self) -> dict:
        out = {}
        for label, tr in self.reduced.items():
            err = self.state_error(label)
            out[label] = {
                "final_error": float(err[-1]),
                "max_error": float(err.max()),
                "diverged": tr.diverged,
                "n_valid": tr.n_valid,
                "outside_region": self.outside_region_counts.get(label, 0),
            }
        return out


def compare_trajectories(
    model: FactorizedModel,
    reductions: Dict[str, object],
    x0: np.ndarray,
    input_signal: InputSignal,
    h: float,
    T: float,
) -> TrajectoryComparison:
    """Integrate the nonlinear model and each reduced model open-loop.

    Each reduced model evaluates its scheduling map along its *own* state;
    the nonlinear reference uses the physics path.  All runs share the
    input signal and initial condition, with zero wind.
    """
    reference = integrate_scenarios(model, [Scenario(x0, input_signal, label="reference")], h, T)[0]
    reduced, outside = {}, {}
    for label, red in reductions.items():
        dyn = LpvDynamics(red.lpv, red.scheduling_fn(model), name=label)
        traj = integrate_scenarios(dyn, [Scenario(x0, input_signal, label=label)], h, T)[0]
        traj.model_name = model.name
        reduced[label] = traj
        outside[label] = dyn.outside_region
    return TrajectoryComparison(reference=reference, reduced=reduced, outside_region_counts=outside)
