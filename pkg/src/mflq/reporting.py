"""Report emission: deterministic CSV/JSON artifacts plus a run manifest.

Numbers are written with 17 significant digits (lossless for doubles),
so identical inputs produce byte-identical artifact files.  Reports
containing non-finite values are refused.  Every run writes a manifest
listing the emitted files with content checksums; the manifest carries
timestamps and is the only non-reproducible output.
"""
from __future__ import annotations

import datetime
import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import NumericalOutputError, OutputFailure

from . import __version__ as _version


def fmt(x) -> str:
    """Full-precision decimal rendering of one number."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    v = float(x)
    if not np.isfinite(v):
        raise NumericalOutputError(f"non-finite value {v!r} in report")
    return format(v, ".17g")


def _check_finite(obj, where="report"):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{where}.{k}")
    elif isinstance(obj, (list, tuple)):
        for idx, v in enumerate(obj):
            _check_finite(v, f"{where}[{idx}]")
    elif isinstance(obj, (float, np.floating)):
        if not np.isfinite(obj):
            raise NumericalOutputError(f"non-finite value at {where}")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, obj):
    """Serialise a report dict deterministically; refuse NaN/inf."""
    data = _plain(obj)
    _check_finite(data)
    try:
        with open(path, "w") as fh:
            json.dump(data, fh, sort_keys=True, indent=1, allow_nan=False)
            fh.write("\n")
    except OSError as exc:
        raise OutputFailure(f"cannot write {path}: {exc}") from exc
    return path


def write_csv(path, header, rows):
    """Write rows of numbers (or strings) with full-precision formatting."""
    try:
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(
                    cell if isinstance(cell, str) else fmt(cell) for cell in row
                ) + "\n")
    except OSError as exc:
        raise OutputFailure(f"cannot write {path}: {exc}") from exc
    return path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    scenario_hash: str
    toolkit_version: str
    seed: int
    subcommand: str
    started_at: str
    finished_at: str
    outputs: tuple  # of (filename, sha256)

    def to_dict(self):
        return {
            "scenario_hash": self.scenario_hash,
            "toolkit_version": self.toolkit_version,
            "seed": self.seed,
            "subcommand": self.subcommand,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "outputs": [{"file": f, "sha256": s} for f, s in self.outputs],
        }


class ReportWriter:
    """Collects artifacts for one run and finishes with a manifest."""

    def __init__(self, out_dir, scenario, subcommand, seed):
        self.out_dir = out_dir
        self.scenario = scenario
        self.subcommand = subcommand
        self.seed = seed
        self.started_at = datetime.datetime.now(datetime.timezone.utc).isoformat()
        self.files = []
        try:
            os.makedirs(out_dir, exist_ok=True)
        except OSError as exc:
            raise OutputFailure(f"cannot create {out_dir}: {exc}") from exc

    def path_for(self, kind, ext) -> str:
        tag = self.scenario.content_hash[:8] or "nohash"
        name = f"{self.scenario.name}_{self.subcommand}"
        if kind:
            name += f"_{kind}"
        return os.path.join(self.out_dir, f"{name}_{tag}.{ext}")

    def add_json(self, kind, obj) -> str:
        path = write_json(self.path_for(kind, "json"), obj)
        self.files.append(path)
        return path

    def add_csv(self, kind, header, rows) -> str:
        path = write_csv(self.path_for(kind, "csv"), header, rows)
        self.files.append(path)
        return path

    def add_text(self, kind, ext, text) -> str:
        path = self.path_for(kind, ext)
        try:
            with open(path, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise OutputFailure(f"cannot write {path}: {exc}") from exc
        self.files.append(path)
        return path

    def finish(self) -> str:
        manifest = RunManifest(
            scenario_hash=self.scenario.content_hash,
            toolkit_version=_version,
            seed=self.seed,
            subcommand=self.subcommand,
            started_at=self.started_at,
            finished_at=datetime.datetime.now(datetime.timezone.utc).isoformat(),
            outputs=tuple(
                (os.path.basename(f), sha256_file(f)) for f in self.files
            ),
        )
        path = self.path_for("manifest", "json")
        return write_json(path, manifest.to_dict())


def riccati_rows(sol):
    """CSV rows (t, regime, k, row, col, value) for the value matrices."""
    n = sol.P.shape[-1]
    for j, t in enumerate(sol.times):
        for k in range(2):
            for i in range(sol.P.shape[2]):
                for r in range(n):
                    for c in range(n):
                        yield (t, i, k + 1, r, c, sol.P[j, k, i, r, c])


def gain_rows(sol):
    m = sol.theta.shape[-2]
    n = sol.theta.shape[-1]
    for j, t in enumerate(sol.times):
        for k in range(2):
            for i in range(sol.theta.shape[2]):
                for r in range(m):
                    for c in range(n):
                        yield (t, i, k + 1, r, c, sol.theta[j, k, i, r, c])


def feedforward_rows(ff):
    """CSV rows (t, regime, component, value) for offsets and controls."""
    n = ff.eta2.shape[-1]
    m = ff.v1.shape[-1]
    for j, t in enumerate(ff.times):
        for i in range(ff.eta2.shape[1]):
            for c in range(n):
                yield (t, i, f"eta2_{c}", ff.eta2[j, i, c])
            for c in range(m):
                yield (t, i, f"v1_{c}", ff.v1[j, i, c])
            for c in range(m):
                yield (t, i, f"v2_{c}", ff.v2[j, i, c])


def path_rows(bundles):
    """CSV rows (path_id, t, regime, X components, u components)."""
    for pid, b in enumerate(bundles):
        X, u = b.X1 + b.X2, b.u1 + b.u2
        regs = b.regime_path.regime_at(b.times)
        for j, t in enumerate(b.times):
            yield (pid, t, int(regs[j]), *X[j], *u[j])


def turnpike_rows(report):
    """CSV rows (T, t, delta_x, se_x, delta_u, se_u)."""
    for curve in report.curves:
        for l, t in enumerate(curve.checkpoint_times):
            yield (curve.horizon, t, curve.gap_x[l], curve.gap_x_se[l],
                   curve.gap_u[l], curve.gap_u_se[l])


PLOT_SCRIPT = """\
#!/usr/bin/env python3
# Render log-gap curves from the companion turnpike CSV.
# Usage: python3 {script} [csv_path]
import sys

import matplotlib.pyplot as plt
import numpy as np

path = sys.argv[1] if len(sys.argv) > 1 else {csv_name!r}
data = np.genfromtxt(path, delimiter=",", names=True)
fig, ax = plt.subplots(figsize=(7, 4.5))
for T in np.unique(data["T"]):
    sel = data["T"] == T
    t = data["t"][sel]
    gap = np.maximum(data["delta_x"][sel], 1e-300)
    ax.semilogy(t, gap, marker="o", ms=2.5, label=f"T = {{T:g}}")
ax.set_xlabel("t")
ax.set_ylabel("state gap (mean squared)")
ax.set_title("Finite- vs infinite-horizon optimal state gap")
ax.legend()
fig.tight_layout()
out = path.rsplit(".", 1)[0] + ".png"
fig.savefig(out, dpi=150)
print("wrote", out)
"""


def plot_script_text(csv_name) -> str:
    return PLOT_SCRIPT.format(script="plot_gaps.py", csv_name=csv_name)
