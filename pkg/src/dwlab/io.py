"""File formats: Matrix Market input, CSV and JSON exports.

Floats are written with ``repr`` so that identical runs produce byte-identical
files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np
import scipy.io

from .errors import InvalidInputError


def read_matrix_market(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"matrix file not found: {path}")
    try:
        mat = scipy.io.mmread(str(path))
    except (ValueError, OSError) as exc:
        raise InvalidInputError(f"cannot parse Matrix Market file {path}: {exc}") from exc
    if hasattr(mat, "toarray"):
        mat = mat.toarray()
    mat = np.asarray(mat)
    if np.iscomplexobj(mat):
        raise InvalidInputError("laplacian must be real")
    return mat.astype(float)


def write_matrix_market(path, matrix) -> None:
    scipy.io.mmwrite(str(path), np.asarray(matrix, dtype=float), symmetry="general")


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        val = float(obj)
        return val if np.isfinite(val) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# module-specific exports


def write_spectrum_csv(path, spectrum) -> Path:
    tau = spectrum.eigenvalues
    flags = spectrum.cond_flags
    rows = ((i, t.real, t.imag, -t.imag, flags[i]) for i, t in enumerate(tau))
    return write_csv(path, ["index", "re_tau", "im_tau", "neg_im", "cond_flag"], rows)


def read_spectrum_csv(path) -> np.ndarray:
    rows = read_csv(path)
    required = {"re_tau", "im_tau"}
    if rows and not required <= set(rows[0]):
        raise InvalidInputError(f"spectrum CSV {path} lacks columns {sorted(required)}")
    return np.array([float(r["re_tau"]) + 1j * float(r["im_tau"]) for r in rows], dtype=complex)


def write_diagnostics_json(path, report) -> Path:
    return write_json(path, report.to_dict())


def write_pressure_table(path, estimates) -> Path:
    rows = []
    for est in estimates:
        rows.append((est.method, est.params.get("eps", ""), est.params.get("T", ""), est.value, est.error_bar))
    return write_csv(path, ["method", "eps", "T", "value", "error_bar"], rows)


def write_energy_csv(path, series) -> Path:
    rows = ((t, e, series.method) for t, e in zip(series.times, series.energies))
    return write_csv(path, ["t", "energy", "method"], rows)


def write_trajectory_csv(path, samples) -> Path:
    """Trajectory dump with columns ``sample_id,t,x...,xi...,birkhoff_sum``.

    ``samples`` is a sequence of TrajectorySample objects carrying ``path``
    rows ``(t, x..., xi...)``.
    """
    samples = list(samples)
    if not samples:
        raise InvalidInputError("no trajectories to write")
    first = samples[0].path
    ncoord = (first.shape[1] - 1) // 2
    header = ["sample_id", "t"] + [f"x{i}" for i in range(ncoord)] + [f"xi{i}" for i in range(ncoord)]
    header.append("birkhoff_sum")
    rows = []
    for sid, s in enumerate(samples):
        for row in s.path:
            rows.append([sid, *row, s.birkhoff_sum])
    return write_csv(path, header, rows)
