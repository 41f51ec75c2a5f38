"""On-disk formats.

Raw fields: 16-byte header with the two dimensions as little-endian int64,
followed by the entries in column-major order as little-endian float64.
Reduced models: a directory of raw fields plus ``manifest.json``.
"""
from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .grid import GridSpec
from .pod_deim import ReducedBasis, ReducedOperators, SampledField

MANIFEST = "manifest.json"
FORMAT_VERSION = 1


class ArtifactError(OSError):
    pass


def write_field(path, X) -> None:
    X = np.asarray(X, dtype="<f8")
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError("only matrices can be written")
    with open(path, "wb") as fh:
        fh.write(np.asarray(X.shape, dtype="<i8").tobytes())
        fh.write(X.tobytes(order="F"))


def read_field(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise ArtifactError(f"{path}: truncated header")
    m, n = np.frombuffer(raw[:16], dtype="<i8")
    if m < 0 or n < 0 or len(raw) != 16 + 8 * m * n:
        raise ArtifactError(f"{path}: size does not match header {m}x{n}")
    return np.frombuffer(raw[16:], dtype="<f8").reshape((m, n), order="F").copy()


def write_matrix_csv(path, X) -> None:
    np.savetxt(path, np.atleast_2d(X), delimiter=",", fmt="%.17g")


def write_rows_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def read_rows_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _safe(name: str) -> str:
    return name.replace("/", "_") + ".bin"


_BASIS_ARRAYS = ("U_l", "U_r", "V_l", "V_r", "P_l", "P_r", "Phi_U_l", "Phi_U_r", "Phi_V_l", "Phi_V_r")
_INDEX_ARRAYS = ("idx_U_l", "idx_U_r", "idx_V_l", "idx_V_r")


def save_reduced(directory, basis: ReducedBasis, rops: ReducedOperators, extra: dict | None = None) -> dict:
    """Write bases, reduced operators and the manifest; returns the manifest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {}
    for name in _BASIS_ARRAYS:
        fn = "basis." + _safe(name)
        write_field(d / fn, getattr(basis, name))
        files["basis." + name] = fn
    for name, arr in rops.arrays().items():
        fn = "rops." + _safe(name)
        write_field(d / fn, arr)
        files["rops." + name] = fn
    g = rops.grid
    manifest = {
        "format": FORMAT_VERSION,
        "grid": {"n_x": g.n_x, "n_y": g.n_y, "b_x": g.b_x, "b_y": g.b_y, "r": g.r},
        "ranks": basis.ranks(),
        "tolerances": basis.tolerances or {"tol": basis.tol},
        "deim_indices": {k: [int(i) for i in getattr(basis, k)] for k in _INDEX_ARRAYS},
        "deim_condition": rops.deim_cond,
        "gamma_up": rops.gamma_up,
        "n_shapes": len(rops.shapes),
        "sampled_fields": {"U": sorted(rops.samples_U), "V": sorted(rops.samples_V)},
        "sample_sources": {**{f"U.{k}": v.source for k, v in rops.samples_U.items()},
                           **{f"V.{k}": v.source for k, v in rops.samples_V.items()}},
        "files": files,
    }
    if extra:
        manifest["extra"] = extra
    tmp = d / (MANIFEST + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    os.replace(tmp, d / MANIFEST)
    return manifest


def load_manifest(directory) -> dict:
    p = Path(directory) / MANIFEST
    if not p.exists():
        raise ArtifactError(f"missing artifacts: {p} not found")
    return json.loads(p.read_text())


def load_reduced(directory):
    """Inverse of :func:`save_reduced`; returns ``(basis, rops, manifest)``."""
    d = Path(directory)
    man = load_manifest(d)
    if man.get("format") != FORMAT_VERSION:
        raise ArtifactError(f"unsupported artifact format {man.get('format')}")
    files = man["files"]

    def get(key):
        if key not in files:
            raise ArtifactError(f"manifest lists no file for {key}")
        return read_field(d / files[key])

    b = {name: get("basis." + name) for name in _BASIS_ARRAYS}
    idx = {k: np.asarray(v, dtype=int) for k, v in man["deim_indices"].items()}
    tol = man["tolerances"]
    basis = ReducedBasis(**b, **idx, tol=tol.get("tol", 0.0), tolerances=tol)
    g = GridSpec(**man["grid"])

    plain = {}
    for key in files:
        if key.startswith("rops.") and "." not in key[5:]:
            plain[key[5:]] = get(key)
    for name in ("P_row0_l", "P_row0_r", "P_ones_l", "P_ones_r"):
        plain[name] = plain[name].reshape(-1)
    samples = {}
    for side, prefix in (("U", "sU"), ("V", "sV")):
        samples[side] = {}
        for name in man["sampled_fields"][side]:
            parts = {p: get(f"rops.{prefix}.{name}.{p}") for p in ("left", "right", "K0", "K1")}
            samples[side][name] = SampledField(source=man["sample_sources"][f"{side}.{name}"], **parts)
    shapes = [(get(f"rops.shape{i}.u"), get(f"rops.shape{i}.v")) for i in range(man["n_shapes"])]
    f_u = plain.pop("f_u", None)
    f_v = plain.pop("f_v", None)
    rops = ReducedOperators(grid=g, ranks=man["ranks"], samples_U=samples["U"], samples_V=samples["V"],
                            shapes=shapes, f_u=f_u, f_v=f_v, gamma_up=man["gamma_up"],
                            deim_cond=man["deim_condition"], **plain)
    return basis, rops, man
