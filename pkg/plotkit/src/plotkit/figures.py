"""Figure builders: one renderer per artifact kind.

Every renderer validates the columns it needs and raises
:class:`SchemaError` naming what is missing, reads the artifact
read-only, and writes a single image file.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["FIGURE_KINDS", "FigureSpec", "SchemaError", "render"]

# reproducible image bytes: no timestamps or host-specific metadata
_SAVE_KWARGS = {"metadata": {"Software": None}}


class SchemaError(ValueError):
    """An input artifact does not carry the expected columns/fields."""


@dataclass(frozen=True)
class FigureSpec:
    """What to render: artifact inputs, figure kind, output image path."""

    kind: str
    inputs: Sequence[Path]
    output: Path
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; choose from {sorted(FIGURE_KINDS)}")
        object.__setattr__(self, "inputs", tuple(Path(p) for p in self.inputs))
        object.__setattr__(self, "output", Path(self.output))
        for p in self.inputs:
            if not p.exists():
                raise SchemaError(f"input artifact {p} does not exist")


def _read_csv(path: Path, required: Sequence[str]) -> Dict[str, List[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {missing}; found {header}")
    idx = {c: header.index(c) for c in header}
    return {c: [r[idx[c]] for r in body] for c in header}


def _floats(values: List[str]) -> np.ndarray:
    return np.array([float(v) for v in values])


def _save(fig, spec: FigureSpec):
    spec.output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.output, dpi=spec.options.get("dpi", 150), **_SAVE_KWARGS)
    plt.close(fig)


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------


def _render_spectrum(spec: FigureSpec):
    table = _read_csv(spec.inputs[0], required=["index", "singular_value"])
    idx = _floats(table["index"])
    sv = _floats(table["singular_value"])
    label = table.get("normalization", ["singular values"])[0]

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    positive = sv > 0
    ax.semilogy(idx[positive], sv[positive], "o-", ms=3.5, lw=1.0, label=label)
    if np.any(~positive):
        ax.plot(idx[~positive], np.full(np.sum(~positive), np.min(sv[positive])), "x", ms=4)
    ax.set_xlabel("component index")
    ax.set_ylabel("singular value")
    ax.set_title(spec.options.get("title", "Singular values of the variation data"))
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="upper right", fontsize=8)
    _save(fig, spec)


# ---------------------------------------------------------------------------
# error-curves
# ---------------------------------------------------------------------------

_MEASURES = ["max_e_pi", "rms_e_pi", "max_e_xdot", "rms_e_xdot"]
_MEASURE_LABEL = {
    "max_e_pi": "max variation error",
    "rms_e_pi": "rms variation error",
    "max_e_xdot": "max derivative error",
    "rms_e_xdot": "rms derivative error",
}
_NORM_COLORS = {"minmax": "tab:blue", "std": "tab:red", "none": "tab:gray"}
_METHOD_STYLE = {"pca": "-", "dnn": "--"}


def _render_error_curves(spec: FigureSpec):
    table = _read_csv(spec.inputs[0],
                      required=["method", "normalization", "n_theta_hat", "measure", "value"])
    rows = list(zip(table["method"], table["normalization"],
                    _floats(table["n_theta_hat"]), table["measure"], _floats(table["value"])))
    series: Dict[tuple, List[tuple]] = {}
    for method, norm, n, measure, value in rows:
        if method not in _METHOD_STYLE:
            continue  # baselines such as the full-order row
        series.setdefault((method, norm, measure), []).append((n, value))
    if not series:
        raise SchemaError(f"{spec.inputs[0]}: no pca/dnn rows to plot")

    fig, axes = plt.subplots(2, 2, figsize=(9.0, 6.5), sharex=True)
    for ax, measure in zip(axes.ravel(), _MEASURES):
        for (method, norm, m), pts in sorted(series.items()):
            if m != measure:
                continue
            pts = sorted(pts)
            ax.semilogy([p[0] for p in pts], [max(p[1], 1e-300) for p in pts],
                        _METHOD_STYLE[method], color=_NORM_COLORS.get(norm, "tab:green"),
                        marker="o", ms=3, lw=1.2, label=f"{method} / {norm}")
        ax.set_title(_MEASURE_LABEL[measure], fontsize=10)
        ax.grid(True, which="both", alpha=0.3)
    for ax in axes[1]:
        ax.set_xlabel("reduced scheduling dimension")
    handles, labels = axes[0, 0].get_legend_handles_labels()
    if not handles:
        for ax in axes.ravel():
            handles, labels = ax.get_legend_handles_labels()
            if handles:
                break
    fig.legend(handles, labels, loc="lower center", ncol=min(4, max(1, len(labels))),
               fontsize=8, frameon=False)
    fig.suptitle(spec.options.get("title", "Reduction error vs scheduling dimension"))
    fig.tight_layout(rect=(0, 0.06, 1, 1))
    _save(fig, spec)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


def _render_trajectories(spec: FigureSpec):
    table = _read_csv(spec.inputs[0], required=["t"])
    ref_cols = sorted((c for c in table if c.startswith("ref_x")),
                      key=lambda c: int(c.split("x")[-1]))
    if not ref_cols:
        raise SchemaError(f"{spec.inputs[0]}: missing reference columns 'ref_x*'")
    labels = sorted({c.rsplit("_x", 1)[0] for c in table
                     if "_x" in c and not c.startswith("ref_x")})
    t = _floats(table["t"])
    n_x = len(ref_cols)
    ncols = 3 if n_x > 4 else (2 if n_x > 1 else 1)
    nrows = int(np.ceil(n_x / ncols))
    fig, axes = plt.subplots(nrows, ncols, figsize=(3.4 * ncols, 2.2 * nrows),
                             sharex=True, squeeze=False)
    for i, col in enumerate(ref_cols):
        ax = axes[i // ncols][i % ncols]
        ax.plot(t, _floats(table[col]), "k-", lw=1.4, label="nonlinear")
        for j, lbl in enumerate(labels):
            key = f"{lbl}_x{i}"
            if key in table:
                ax.plot(t, _floats(table[key]), "--", lw=1.0, color=f"C{j}", label=lbl)
        ax.set_title(f"state {i}", fontsize=9)
        ax.grid(alpha=0.3)
    for ax in axes[-1]:
        ax.set_xlabel("time [s]")
    for k in range(n_x, nrows * ncols):
        axes[k // ncols][k % ncols].set_visible(False)
    handles, leg_labels = axes[0][0].get_legend_handles_labels()
    fig.legend(handles, leg_labels, loc="lower center", ncol=len(leg_labels),
               fontsize=8, frameon=False)
    fig.suptitle(spec.options.get("title", "Open-loop trajectories"))
    fig.tight_layout(rect=(0, 0.05, 1, 1))
    _save(fig, spec)


# ---------------------------------------------------------------------------
# region3d
# ---------------------------------------------------------------------------


def _box_corner_segments(lo, hi, rotation):
    lo, hi = np.asarray(lo), np.asarray(hi)
    d = lo.size
    corners = np.array([[lo[k] if (i >> k) & 1 == 0 else hi[k] for k in range(d)]
                        for i in range(2**d)])
    if rotation is not None:
        corners = corners @ np.asarray(rotation).T
    segments = []
    for i in range(2**d):
        for k in range(d):
            j = i | (1 << k)
            if j != i:
                segments.append((corners[i], corners[j]))
    return segments


def _ellipsoid_surface(center, shape, n=24):
    center = np.asarray(center)
    evals, evecs = np.linalg.eigh(np.asarray(shape))
    radii = 1.0 / np.sqrt(evals)
    u = np.linspace(0, 2 * np.pi, n)
    v = np.linspace(0, np.pi, n)
    sphere = np.stack([np.outer(np.cos(u), np.sin(v)),
                       np.outer(np.sin(u), np.sin(v)),
                       np.outer(np.ones_like(u), np.cos(v))], axis=-1)
    pts = center + (sphere * radii) @ evecs.T
    return pts[..., 0], pts[..., 1], pts[..., 2]


def _render_region3d(spec: FigureSpec):
    with open(spec.inputs[0]) as fh:
        region = json.load(fh)
    for key in ("box",):
        if key not in region:
            raise SchemaError(f"{spec.inputs[0]}: missing field {key!r}")
    box = region["box"]
    if "lo" not in box or "hi" not in box:
        raise SchemaError(f"{spec.inputs[0]}: box must carry 'lo' and 'hi'")

    if len(spec.inputs) > 1:
        points_path = spec.inputs[1]
    elif "points_csv" in region:
        points_path = spec.inputs[0].parent / region["points_csv"]
    else:
        points_path = None
    points = None
    if points_path is not None and Path(points_path).exists():
        table = _read_csv(Path(points_path), required=["theta0"])
        cols = sorted((c for c in table if c.startswith("theta")),
                      key=lambda c: int(c.replace("theta", "")))
        points = np.column_stack([_floats(table[c]) for c in cols])

    d = len(box["lo"])
    fig = plt.figure(figsize=(6.0, 5.5))
    if d == 3:
        ax = fig.add_subplot(projection="3d")
        if points is not None:
            step = max(1, points.shape[0] // 4000)
            ax.scatter(*points[::step].T, s=2.0, color="tab:blue", alpha=0.5, label="data")
        if "ellipsoid" in region:
            X, Y, Z = _ellipsoid_surface(region["ellipsoid"]["center"], region["ellipsoid"]["shape"])
            ax.plot_wireframe(X, Y, Z, color="green", lw=0.4, alpha=0.6)
        for a, b in _box_corner_segments(box["lo"], box["hi"], box.get("rotation")):
            ax.plot(*np.stack([a, b]).T, color="red", lw=1.0)
        ax.set_xlabel("theta 1")
        ax.set_ylabel("theta 2")
        ax.set_zlabel("theta 3")
    elif d == 2:
        ax = fig.add_subplot()
        if points is not None:
            ax.scatter(points[:, 0], points[:, 1], s=3.0, color="tab:blue", alpha=0.5, label="data")
        if "ellipsoid" in region:
            evals, evecs = np.linalg.eigh(np.asarray(region["ellipsoid"]["shape"]))
            angles = np.linspace(0, 2 * np.pi, 200)
            circle = np.column_stack([np.cos(angles), np.sin(angles)]) / np.sqrt(evals)
            ring = np.asarray(region["ellipsoid"]["center"]) + circle @ evecs.T
            ax.plot(ring[:, 0], ring[:, 1], "g-", lw=1.2)
        for a, b in _box_corner_segments(box["lo"], box["hi"], box.get("rotation")):
            ax.plot([a[0], b[0]], [a[1], b[1]], "r-", lw=1.2)
        ax.set_xlabel("theta 1")
        ax.set_ylabel("theta 2")
        ax.set_aspect("equal")
        ax.grid(alpha=0.3)
    else:
        raise SchemaError(f"{spec.inputs[0]}: region rendering supports dimension 2 or 3, got {d}")
    ax.set_title(spec.options.get("title", f"Scheduling region ({region.get('method', 'box')})"))
    _save(fig, spec)


FIGURE_KINDS = {
    "spectrum": _render_spectrum,
    "error-curves": _render_error_curves,
    "trajectories": _render_trajectories,
    "region3d": _render_region3d,
}


def render(spec: FigureSpec) -> Path:
    """Render one figure and return the written image path."""
    FIGURE_KINDS[spec.kind](spec)
    return spec.output
