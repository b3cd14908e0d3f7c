"""CSV/JSON artifact writers and the per-command output manifest."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .design import DesignTables
from .simulate import TrajectoryBundle

__all__ = [
    "ManifestWriter",
    "write_matrix_series",
    "write_kernel_table",
    "write_correlation_plane",
    "write_trace",
    "write_costs",
    "export_design",
]


class ManifestWriter:
    """Collects written files and emits manifest.json with checksums."""

    def __init__(self, outdir: Path, command: str):
        self.outdir = Path(outdir)
        self.outdir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.entries = []

    def path(self, name: str) -> Path:
        return self.outdir / name

    def register(self, path: Path) -> Path:
        data = Path(path).read_bytes()
        self.entries.append({
            "path": Path(path).name,
            "sha256": hashlib.sha256(data).hexdigest(),
            "bytes": len(data),
        })
        return path

    def write_json(self, name: str, payload) -> Path:
        path = self.path(name)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return self.register(path)

    def finalize(self) -> Path:
        path = self.path("manifest.json")
        payload = {"command": self.command, "files": sorted(self.entries,
                                                            key=lambda e: e["path"])}
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path


def _flat_header(prefix: str, rows: int, cols: int) -> list:
    if rows == 1 and cols == 1:
        return [prefix]
    return [f"{prefix}_{r}{c}" for r in range(rows) for c in range(cols)]


def write_matrix_series(path, times: np.ndarray, series: np.ndarray,
                        name: str = "value") -> Path:
    """Node-indexed series of matrices, flattened row-major."""
    series = np.asarray(series)
    rows, cols = series.shape[1], series.shape[2]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "t"] + _flat_header(name, rows, cols))
        for j, t in enumerate(times):
            writer.writerow([j, repr(float(t))] + [repr(float(v))
                                                   for v in series[j].ravel()])
    return Path(path)


def write_kernel_table(path, times: np.ndarray, thetas: np.ndarray,
                       table: np.ndarray, name: str = "value") -> Path:
    """Kernel on the (t, theta) grid with explicit coordinate columns."""
    table = np.asarray(table)
    rows, cols = table.shape[2], table.shape[3]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "theta"] + _flat_header(name, rows, cols))
        for j, t in enumerate(times):
            for d, th in enumerate(thetas):
                writer.writerow([repr(float(t)), repr(float(th))]
                                + [repr(float(v)) for v in table[j, d].ravel()])
    return Path(path)


def write_correlation_plane(path, times, thetas, plane, name: str = "value") -> Path:
    """Second-order kernel restricted to the zero plane of its last lag."""
    plane = np.asarray(plane)
    rows, cols = plane.shape[2], plane.shape[3]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "theta", "tau"] + _flat_header(name, rows, cols))
        for j, t in enumerate(times):
            for d, th in enumerate(thetas):
                writer.writerow([repr(float(t)), repr(float(th)), "0.0"]
                                + [repr(float(v)) for v in plane[j, d].ravel()])
    return Path(path)


def write_trace(path, traj: TrajectoryBundle, pidx: int) -> Path:
    """Per-step trace of one realization: t, x, zbar, xhat, u0, u1, psi0, alpha."""
    N = traj.times.shape[0] - 1

    def flat(arr, j):
        return [repr(float(v)) for v in np.atleast_1d(arr[pidx, j]).ravel()]

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        n = traj.x.shape[2]
        m = traj.u0.shape[2]
        k = traj.zbar.shape[2]
        head = (["t"] + _flat_header("x", n, 1) + _flat_header("zbar", k, 1)
                + _flat_header("xhat", n, 1) + _flat_header("u0", m, 1)
                + _flat_header("u1", m, 1) + _flat_header("psi0", n, 1)
                + _flat_header("alpha_hat", n, 1))
        writer.writerow(head)
        for j in range(N + 1):
            zb = (traj.zbar[pidx, j] if j < N
                  else np.zeros(traj.zbar.shape[2]))
            row = ([repr(float(traj.times[j]))] + flat(traj.x, j)
                   + [repr(float(v)) for v in np.atleast_1d(zb).ravel()]
                   + flat(traj.xhat, j) + flat(traj.u0, j) + flat(traj.u1, j)
                   + flat(traj.psi0, j) + flat(traj.alpha_hat, j))
            writer.writerow(row)
    return Path(path)


def write_costs(path, costs: np.ndarray) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "cost"])
        for pidx, c in enumerate(np.asarray(costs).ravel()):
            writer.writerow([pidx, repr(float(c))])
    return Path(path)


def export_design(manifest: ManifestWriter, design: DesignTables,
                  dump_kernels: bool = False) -> None:
    """Write the design tables (and optionally every kernel table) as CSV."""
    grid = design.grid
    times, thetas = grid.times, grid.thetas
    manifest.register(write_matrix_series(manifest.path("gain_K.csv"), times, design.K, "K"))
    manifest.register(write_matrix_series(
        manifest.path("propagator_steps.csv"), times[:-1],
        design.propagators.steps, "U"))
    manifest.register(write_matrix_series(manifest.path("cov_P.csv"), times,
                                          design.P, "P"))
    sol = design.kernels
    manifest.register(write_kernel_table(manifest.path("kernel_Q.csv"), times, thetas,
                                         sol.kernels.Q, "Q"))
    manifest.register(write_correlation_plane(
        manifest.path("kernel_R_tau0.csv"), times, thetas, sol.correlations.r0, "R"))
    if sol.kernels.M is not None:
        manifest.register(write_kernel_table(manifest.path("kernel_M.csv"), times,
                                             thetas, sol.kernels.M, "M"))
        manifest.register(write_correlation_plane(
            manifest.path("kernel_N_sigma0.csv"), times, thetas,
            sol.correlations.n0, "N"))
        manifest.register(write_correlation_plane(
            manifest.path("kernel_S_alpha0.csv"), times, thetas,
            sol.correlations.s0, "S"))
    manifest.register(write_kernel_table(manifest.path("stats_psi.csv"), times, thetas,
                                         design.stats.psi, "psi"))
    manifest.register(write_kernel_table(manifest.path("stats_sigma.csv"), times,
                                         thetas, design.stats.sigma, "sigma"))
    if dump_kernels and design.stats.psi2 is not None:
        manifest.register(write_kernel_table(manifest.path("stats_psi2.csv"), times,
                                             thetas, design.stats.psi2, "psi2"))
        manifest.register(write_kernel_table(
            manifest.path("stats_sigma12.csv"), times, thetas,
            design.stats.sigma12, "sigma12"))
