"""JSON problem configuration.

Schema (all matrices row-major nested lists):

    {
      "A": [[...]], "B": [[...]], "C": [[...]],
      "F": [[...]], "G": [[...]], "H": [[...]],
      "T": 1.0,
      "initial_cov": [[...]],
      "initial_mean": [...],            # optional, defaults to zero
      "noise_model": {
        "case": 1 | 2 | 3,
        # case 1: "eps", "lam"
        # case 2: "eps", "lam11", "lam22", "lam12"
        # case 3: "D", "schedule"
      },
      "grid": {"N": 256, "rho": 8}      # optional defaults
    }

Kernel objects: {"kind": "zero"} | {"kind": "triangular", "sigma": s}
| {"kind": "table", "theta": [...], "values": [...]}      (stationary profile)
| {"kind": "csv", "path": "kernel.csv"}                    (columns t, theta, value)
Schedule objects: {"kind": "constant_lag", "eps": e}
| {"kind": "proportional", "c": c} | {"kind": "closing_approach", "c": c, "eps": e}
| {"kind": "tabulated", "t": [...], "values": [...]}
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .problem import (
    Case1Noise,
    Case2Noise,
    Case3Noise,
    DelaySchedule,
    KernelSpec,
    ProblemSpec,
    TimeGrid,
    build_problem,
    make_grid,
)

__all__ = ["load_config", "load_config_dict", "kernel_from_csv", "canonical_config"]


def _kernel(obj, base: Path) -> KernelSpec:
    if obj is None:
        return KernelSpec.zero()
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError("kernel entries must be objects with a 'kind'")
    kind = obj["kind"]
    if kind == "zero":
        return KernelSpec.zero()
    if kind == "triangular":
        return KernelSpec.triangular(float(obj["sigma"]))
    if kind == "table":
        theta = np.asarray(obj["theta"], dtype=float)
        values = np.asarray(obj["values"], dtype=float)
        return _profile_spec(theta, values)
    if kind == "csv":
        return kernel_from_csv(base / obj["path"])
    raise ConfigError(f"unknown kernel kind {kind!r}")


def _profile_spec(theta: np.ndarray, values: np.ndarray) -> KernelSpec:
    """Stationary lag profile by linear interpolation over |theta|."""
    order = np.argsort(np.abs(theta))
    lag = np.abs(theta)[order]
    val = np.atleast_1d(values)[order]

    def fn(t, th):
        return np.array([[np.interp(abs(th), lag, val, right=0.0)]])

    return KernelSpec.from_callable(fn, shape=(1, 1))


def kernel_from_csv(path) -> KernelSpec:
    """Stationary scalar kernel from a CSV with columns t, theta, value
    (a constant or absent t column denotes stationarity)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"kernel file not found: {path}")
    thetas, values = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = [c.strip() for c in reader.fieldnames or []]
        if "theta" not in cols or "value" not in cols:
            raise ConfigError("kernel CSV needs 'theta' and 'value' columns")
        for row in reader:
            thetas.append(float(row["theta"]))
            values.append(float(row["value"]))
    if not thetas:
        raise ConfigError(f"kernel CSV {path} is empty")
    return _profile_spec(np.asarray(thetas), np.asarray(values))


def _schedule(obj) -> DelaySchedule:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError("schedule must be an object with a 'kind'")
    kind = obj["kind"]
    if kind == "constant_lag":
        return DelaySchedule.constant_lag(float(obj["eps"]))
    if kind == "proportional":
        return DelaySchedule.proportional(float(obj["c"]))
    if kind == "closing_approach":
        return DelaySchedule.closing_approach(float(obj["c"]), float(obj["eps"]))
    if kind == "tabulated":
        return DelaySchedule.tabulated(np.asarray(obj["t"], dtype=float),
                                       np.asarray(obj["values"], dtype=float))
    raise ConfigError(f"unknown schedule kind {kind!r}")


def load_config_dict(cfg: dict, base: Path = Path(".")) -> tuple:
    """Build (ProblemSpec, TimeGrid) from a parsed configuration mapping."""
    try:
        nm_obj = cfg["noise_model"]
        case = int(nm_obj["case"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"missing or malformed noise_model: {exc}") from exc
    if case == 1:
        nm = Case1Noise(lam=_kernel(nm_obj.get("lam"), base), eps=float(nm_obj["eps"]))
    elif case == 2:
        nm = Case2Noise(
            lam11=_kernel(nm_obj.get("lam11"), base),
            lam22=_kernel(nm_obj.get("lam22"), base),
            lam12=_kernel(nm_obj.get("lam12"), base),
            eps=float(nm_obj["eps"]),
        )
    elif case == 3:
        nm = Case3Noise(D=np.asarray(nm_obj["D"], dtype=float),
                        schedule=_schedule(nm_obj.get("schedule")))
    else:
        raise ConfigError(f"noise_model.case must be 1, 2 or 3, got {case}")

    missing = [key for key in ("A", "B", "C", "F", "G", "H", "T", "initial_cov")
               if key not in cfg]
    if missing:
        raise ConfigError(f"config is missing keys: {', '.join(missing)}")
    spec = build_problem(
        A=cfg["A"], B=cfg["B"], C=cfg["C"], F=cfg["F"], G=cfg["G"], H=cfg["H"],
        T=float(cfg["T"]), initial_cov=cfg["initial_cov"], noise_model=nm,
        initial_mean=cfg.get("initial_mean"),
    )
    grid_cfg = cfg.get("grid", {})
    grid = make_grid(spec, int(grid_cfg.get("N", 256)), int(grid_cfg.get("rho", 8)))
    return spec, grid


def load_config(path) -> tuple:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return load_config_dict(cfg, base=path.parent)


def canonical_config(source: str, N: int = None, rho: int = None) -> str:
    """Stable string identifying a problem source plus grid overrides (used
    as the design-cache key)."""
    return json.dumps({"source": source, "N": N, "rho": rho}, sort_keys=True)
