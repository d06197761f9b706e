"""Artifact files: binary containers, CSV tables, JSON reports, manifests.

One self-describing binary container format serves datasets, affine LPV
models, reductions and network checkpoints: a magic string, a JSON header
describing metadata and the array table, then raw C-order array payloads.
All writers are byte-deterministic for identical inputs (sorted keys, no
timestamps), which makes pipeline manifests hash-stable.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from .lpv import AffineLpvModel, BlockLayout
from .metrics import ErrorReport, TrajectoryComparison
from .nnet import DnnReduction, MlpNetwork, TrainConfig
from .pca import Normalizer, PcaReduction
from .simulate import SampleSet, Trajectory

MAGIC = b"LPVBIN\x00\x01"

__all__ = [
    "write_container",
    "read_container",
    "save_sample_set",
    "load_sample_set",
    "save_trajectory",
    "load_trajectory",
    "trajectory_to_csv",
    "save_lpv",
    "load_lpv",
    "lpv_summary",
    "save_pca",
    "load_pca",
    "save_dnn",
    "load_dnn",
    "write_csv",
    "spectrum_to_csv",
    "error_reports_to_csv",
    "comparison_to_csv",
    "training_curve_to_csv",
    "write_json",
    "file_sha256",
    "write_manifest",
]


# ---------------------------------------------------------------------------
# Container format
# ---------------------------------------------------------------------------


def _align(n: int, a: int = 8) -> int:
    return (n + a - 1) // a * a


def write_container(path, kind: str, meta: dict, arrays: Dict[str, np.ndarray]) -> None:
    """Write a binary container (JSON header + raw little-endian arrays)."""
    path = Path(path)
    entries = []
    offset = 0
    payloads = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        offset = _align(offset)
        entries.append({
            "name": name,
            "dtype": arr.dtype.str,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": arr.nbytes,
        })
        payloads.append((offset, arr))
        offset += arr.nbytes
    header = json.dumps({"kind": kind, "meta": meta, "arrays": entries},
                        sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        base = _align(fh.tell())
        fh.write(b"\x00" * (base - fh.tell()))
        for off, arr in payloads:
            fh.seek(base + off)
            fh.write(arr.tobytes())


def read_container(path, expect_kind: Optional[str] = None):
    """Read a container; returns ``(kind, meta, arrays)``."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path} is not a container file (bad magic)")
        hlen = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(hlen).decode())
        base = _align(fh.tell())
        arrays = {}
        for entry in header["arrays"]:
            fh.seek(base + entry["offset"])
            buf = fh.read(entry["nbytes"])
            arr = np.frombuffer(buf, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
            arrays[entry["name"]] = arr.copy()
    kind = header["kind"]
    if expect_kind is not None and kind != expect_kind:
        raise ValueError(f"{path}: expected a {expect_kind!r} container, found {kind!r}")
    return kind, header["meta"], arrays


# ---------------------------------------------------------------------------
# Datasets and trajectories
# ---------------------------------------------------------------------------


def save_sample_set(path, ds: SampleSet) -> None:
    write_container(path, "sample-set",
                    {"model": ds.model_name, "seed": ds.seed, "n": len(ds)},
                    {"X": ds.X, "U": ds.U, "W": ds.W,
                     "traj_id": ds.traj_id.astype(np.int64),
                     "time_idx": ds.time_idx.astype(np.int64),
                     "in_region": ds.in_region.astype(np.uint8)})


def load_sample_set(path) -> SampleSet:
    _, meta, arrays = read_container(path, "sample-set")
    return SampleSet(X=arrays["X"], U=arrays["U"], W=arrays["W"],
                     traj_id=arrays["traj_id"].astype(int),
                     time_idx=arrays["time_idx"].astype(int),
                     seed=int(meta["seed"]), model_name=meta["model"],
                     in_region=arrays["in_region"].astype(bool))


def save_trajectory(path, tr: Trajectory) -> None:
    write_container(path, "trajectory",
                    {"model": tr.model_name, "label": tr.label, "h": tr.h,
                     "diverged": tr.diverged, "n_valid": tr.n_valid},
                    {"t": tr.t, "X": tr.X, "U": tr.U, "W": tr.W})


def load_trajectory(path) -> Trajectory:
    _, meta, arrays = read_container(path, "trajectory")
    return Trajectory(t=arrays["t"], X=arrays["X"], U=arrays["U"], W=arrays["W"],
                      h=float(meta["h"]), model_name=meta["model"], label=meta["label"],
                      diverged=bool(meta["diverged"]), n_valid=int(meta["n_valid"]))


def trajectory_to_csv(path, tr: Trajectory) -> None:
    n_x, n_u = tr.X.shape[1], tr.U.shape[1]
    header = ["t"] + [f"x{i}" for i in range(n_x)] + [f"u{i}" for i in range(n_u)]
    rows = ([tr.t[k], *tr.X[k], *tr.U[k]] for k in range(tr.n_valid))
    write_csv(path, header, rows)


# ---------------------------------------------------------------------------
# Affine LPV models and reductions
# ---------------------------------------------------------------------------


def _layout_meta(layout: BlockLayout) -> dict:
    return {"n_x": layout.n_x, "n_u": layout.n_u, "n_w": layout.n_w,
            "n_y": layout.n_y, "mode": layout.mode}


def _layout_from_meta(meta: dict) -> BlockLayout:
    return BlockLayout(meta["n_x"], meta["n_u"], meta["n_w"], meta["n_y"], meta["mode"])


def _lpv_arrays(lpv: AffineLpvModel, prefix: str = "") -> dict:
    arrays = {f"{prefix}M0": lpv.M0, f"{prefix}coeffs": lpv.coeffs}
    if lpv.region_lo is not None:
        arrays[f"{prefix}region_lo"] = lpv.region_lo
        arrays[f"{prefix}region_hi"] = lpv.region_hi
    if lpv.region_rot is not None:
        arrays[f"{prefix}region_rot"] = lpv.region_rot
    return arrays


def _lpv_meta(lpv: AffineLpvModel) -> dict:
    extras = {k: v for k, v in lpv.extras.items()
              if isinstance(v, (int, float, str, bool, list, dict, type(None)))}
    return {"layout": _layout_meta(lpv.layout), "model": lpv.model_name,
            "method": lpv.method, "normalization": lpv.normalization, "extras": extras}


def _lpv_from(meta: dict, arrays: dict, prefix: str = "") -> AffineLpvModel:
    return AffineLpvModel(
        M0=arrays[f"{prefix}M0"], coeffs=arrays[f"{prefix}coeffs"],
        layout=_layout_from_meta(meta["layout"]), model_name=meta["model"],
        method=meta["method"], normalization=meta["normalization"],
        region_lo=arrays.get(f"{prefix}region_lo"), region_hi=arrays.get(f"{prefix}region_hi"),
        region_rot=arrays.get(f"{prefix}region_rot"), extras=dict(meta.get("extras", {})),
    )


def save_lpv(path, lpv: AffineLpvModel) -> None:
    write_container(path, "affine-lpv", _lpv_meta(lpv), _lpv_arrays(lpv))


def load_lpv(path) -> AffineLpvModel:
    _, meta, arrays = read_container(path, "affine-lpv")
    return _lpv_from(meta, arrays)


def lpv_summary(lpv: AffineLpvModel) -> dict:
    out = _lpv_meta(lpv)
    out["n_theta"] = lpv.n_theta
    out["shape"] = [lpv.layout.rows, lpv.layout.cols]
    if lpv.region_lo is not None:
        out["region"] = {"lo": lpv.region_lo.tolist(), "hi": lpv.region_hi.tolist(),
                         "rotated": lpv.region_rot is not None}
    return out


def _normalizer_arrays(norm: Normalizer, prefix: str) -> dict:
    return {f"{prefix}center": norm.center, f"{prefix}scale": norm.scale}


def _normalizer_from(arrays: dict, mode: str, prefix: str) -> Normalizer:
    return Normalizer(mode=mode, center=arrays[f"{prefix}center"], scale=arrays[f"{prefix}scale"])


def save_pca(path, red: PcaReduction) -> None:
    meta = _lpv_meta(red.lpv)
    meta.update({"n_s": red.n_s, "norm_mode": red.normalizer.mode})
    arrays = _lpv_arrays(red.lpv)
    arrays.update(_normalizer_arrays(red.normalizer, "norm_"))
    arrays["U_s"] = red.U_s
    arrays["singular_values"] = red.singular_values
    write_container(path, "pca-reduction", meta, arrays)


def load_pca(path) -> PcaReduction:
    _, meta, arrays = read_container(path, "pca-reduction")
    lpv = _lpv_from(meta, arrays)
    return PcaReduction(
        normalizer=_normalizer_from(arrays, meta["norm_mode"], "norm_"),
        U_s=arrays["U_s"], singular_values=arrays["singular_values"],
        n_s=int(meta["n_s"]), layout=lpv.layout, model_name=meta["model"], lpv=lpv,
    )


def save_dnn(path, red: DnnReduction) -> None:
    net = red.net
    cfg = red.config
    meta = _lpv_meta(red.lpv)
    meta.update({
        "in_mode": red.input_normalizer.mode,
        "out_mode": red.output_normalizer.mode,
        "n_in": net.n_in, "n_latent": net.n_latent, "n_out": net.n_out,
        "n_layers": len(net.Ws),
        "bypass": net.W_bypass is not None,
        "config": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in cfg.__dict__.items()},
        "history": {"best_epoch": red.history.get("best_epoch", -1),
                    "best_val_loss": red.history.get("best_val_loss", float("nan"))},
    })
    arrays = _lpv_arrays(red.lpv)
    arrays.update(_normalizer_arrays(red.input_normalizer, "in_"))
    arrays.update(_normalizer_arrays(red.output_normalizer, "out_"))
    for i, (W, b) in enumerate(zip(net.Ws, net.bs)):
        arrays[f"W{i}"] = W
        arrays[f"b{i}"] = b
    arrays["W_gamma"] = net.W_gamma
    arrays["b_gamma"] = net.b_gamma
    if net.W_bypass is not None:
        arrays["W_bypass"] = net.W_bypass
    arrays["train_loss"] = np.asarray(red.history.get("train_loss", []), dtype=float)
    arrays["val_loss"] = np.asarray(red.history.get("val_loss", []), dtype=float)
    write_container(path, "dnn-reduction", meta, arrays)


def load_dnn(path) -> DnnReduction:
    _, meta, arrays = read_container(path, "dnn-reduction")
    lpv = _lpv_from(meta, arrays)
    n_layers = int(meta["n_layers"])
    hidden = [arrays[f"W{i}"].shape[0] for i in range(n_layers - 1)]
    net = MlpNetwork(int(meta["n_in"]), hidden, int(meta["n_latent"]), int(meta["n_out"]),
                     bypass=bool(meta["bypass"]))
    for i in range(n_layers):
        net.Ws[i][...] = arrays[f"W{i}"]
        net.bs[i][...] = arrays[f"b{i}"]
    net.W_gamma[...] = arrays["W_gamma"]
    net.b_gamma[...] = arrays["b_gamma"]
    if net.W_bypass is not None:
        net.W_bypass[...] = arrays["W_bypass"]
    cfg_dict = dict(meta["config"])
    cfg_dict["hidden"] = tuple(cfg_dict.get("hidden", ()))
    cfg = TrainConfig(**cfg_dict)
    history = {"train_loss": arrays["train_loss"].tolist(),
               "val_loss": arrays["val_loss"].tolist(),
               "best_epoch": int(meta["history"]["best_epoch"]),
               "best_val_loss": float(meta["history"]["best_val_loss"])}
    return DnnReduction(net=net, input_normalizer=_normalizer_from(arrays, meta["in_mode"], "in_"),
                        output_normalizer=_normalizer_from(arrays, meta["out_mode"], "out_"),
                        layout=lpv.layout, model_name=meta["model"], lpv=lpv,
                        config=cfg, history=history)


# ---------------------------------------------------------------------------
# CSV / JSON
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def spectrum_to_csv(path, singular_values: np.ndarray, normalization: str) -> None:
    rows = ([i + 1, s, normalization] for i, s in enumerate(np.asarray(singular_values, dtype=float)))
    write_csv(path, ["index", "singular_value", "normalization"], rows)


def error_reports_to_csv(path, reports) -> None:
    """Tidy error table: one row per (method, normalization, n, measure)."""
    rows = []
    for rep in reports:
        s = rep.summary()
        for measure in ("max_e_pi", "rms_e_pi", "max_e_xdot", "rms_e_xdot"):
            rows.append([s["method"], s["normalization"], s["n_theta_hat"],
                         s["dataset"], s["n_samples"], measure, s[measure]])
    write_csv(path, ["method", "normalization", "n_theta_hat", "dataset", "n_samples",
                     "measure", "value"], rows)


def comparison_to_csv(path, cmp: TrajectoryComparison) -> None:
    """Wide time-series table: reference states then one block per model."""
    ref = cmp.reference
    labels = sorted(cmp.reduced)
    n = min([ref.n_valid] + [cmp.reduced[k].n_valid for k in labels])
    n_x = ref.X.shape[1]
    header = ["t"] + [f"ref_x{i}" for i in range(n_x)]
    for lbl in labels:
        header += [f"{lbl}_x{i}" for i in range(n_x)]
    def rows():
        for k in range(n):
            row = [ref.t[k], *ref.X[k]]
            for lbl in labels:
                row.extend(cmp.reduced[lbl].X[k])
            yield row
    write_csv(path, header, rows())


def training_curve_to_csv(path, history: dict) -> None:
    tl, vl = history.get("train_loss", []), history.get("val_loss", [])
    rows = ([i, t, v] for i, (t, v) in enumerate(zip(tl, vl)))
    write_csv(path, ["epoch", "train_loss", "val_loss"], rows)


def write_json(path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, out_dir, files, tool_version: str, config_hash: str) -> dict:
    """Manifest with per-file hashes; deterministic for identical artifacts."""
    out_dir = Path(out_dir)
    table = []
    for f in sorted(str(Path(f).relative_to(out_dir)) for f in files):
        full = out_dir / f
        table.append({"path": f, "sha256": file_sha256(full), "size": full.stat().st_size})
    payload = {"tool_version": tool_version, "config_hash": config_hash, "files": table}
    write_json(path, payload)
    return payload
