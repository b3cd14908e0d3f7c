"""Noise synthesis: covariance kernels, relaxing functions and sample paths.

The discrete contract ties everything together: a wide-band noise sampled on
the time grid has cov(phi_{t_j}, phi_{t_j'}) equal to the kernel table at
(t_j', (j - j') dt) for 0 <= j - j' < L and zero beyond, with phi_0 = 0.  A
relaxing function is any lag-banded weight table Phi such that the moving
average over master Wiener increments reproduces that covariance; the filter
equations are exact for this law, so generation and design stay consistent.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    FactorizationMismatch,
    NotPSD,
    ScheduleOutOfRange,
    UnsupportedCross,
)
from .problem import Case1Noise, Case2Noise, Case3Noise, KernelSpec, ProblemSpec, TimeGrid

__all__ = [
    "CovarianceKernel",
    "RelaxingFunction",
    "NoisePathBundle",
    "sample_kernel",
    "stacked_case2_kernel",
    "factor_covariance",
    "relaxing_from_profile",
    "smooth_obs_factor",
    "generate_bn",
    "generate_delayed_wn",
    "make_noise",
    "zero_noise",
    "empirical_autocov",
]

GRAM_TOL = 1e-8


# ---------------------------------------------------------------------------
# Gridded kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CovarianceKernel:
    """Kernel values on the (t, lag) grid: values[j, d] = Lambda(t_j, d*dt).

    values has shape (N+1, L+1, p, q); lag d runs over whole grid steps so the
    support ends exactly at the band edge (values at lag L must vanish for an
    admissible compactly correlated kernel).
    """

    values: np.ndarray
    kind: str  # auto1 | auto2 | cross | stacked
    stationary: bool

    @property
    def p(self) -> int:
        return self.values.shape[2]

    @property
    def q(self) -> int:
        return self.values.shape[3]

    @property
    def scale(self) -> float:
        return float(np.abs(self.values).max()) if self.values.size else 0.0


def sample_kernel(kspec: KernelSpec, grid: TimeGrid, kind: str = "auto1") -> CovarianceKernel:
    """Evaluate a kernel descriptor on the grid."""
    N, L, dt = grid.N, grid.L, grid.dt
    if kspec.kind == "zero":
        p, q = kspec.shape
        vals = np.zeros((N + 1, L + 1, p, q))
        return CovarianceKernel(values=_ro(vals), kind=kind, stationary=True)
    if kspec.kind == "triangular":
        lags = np.arange(L + 1) * dt
        prof = kspec.scale * kspec.sigma**2 * np.clip(grid.eps - lags, 0.0, None)
        vals = np.broadcast_to(prof[None, :, None, None], (N + 1, L + 1, 1, 1)).copy()
        return CovarianceKernel(values=_ro(vals), kind=kind, stationary=True)
    if kspec.kind in ("ma_auto", "ma_cross"):
        wl = np.stack([np.atleast_2d(kspec.profile(-i * dt)) for i in range(1, L + 1)])
        wr = wl if kspec.kind == "ma_auto" else np.stack(
            [np.atleast_2d(kspec.profile_right(-i * dt)) for i in range(1, L + 1)]
        )
        p, q = wl.shape[1], wr.shape[1]
        prof = np.zeros((L + 1, p, q))
        for d in range(L):
            if L - d > 0:
                prof[d] = dt * np.einsum("ipl,iql->pq", wl[d:], wr[: L - d])
        prof *= kspec.scale
        vals = np.broadcast_to(prof[None], (N + 1, L + 1, p, q)).copy()
        return CovarianceKernel(values=_ro(vals), kind=kind, stationary=True)
    if kspec.kind == "table":
        tab = np.asarray(kspec.table, dtype=float)
        if tab.ndim == 1:
            tab = tab[:, None, None]
        if tab.ndim == 3:  # stationary lag profile
            if tab.shape[0] != L + 1:
                raise DimensionMismatch(
                    f"kernel lag profile has {tab.shape[0]} nodes, grid wants {L + 1}"
                )
            vals = np.broadcast_to(tab[None], (N + 1,) + tab.shape).copy() * kspec.scale
            return CovarianceKernel(values=_ro(vals), kind=kind, stationary=True)
        if tab.ndim == 4:
            if tab.shape[:2] != (N + 1, L + 1):
                raise DimensionMismatch(
                    f"kernel table shape {tab.shape[:2]} does not match grid ({N + 1}, {L + 1})"
                )
            return CovarianceKernel(values=_ro(tab * kspec.scale), kind=kind, stationary=False)
        raise DimensionMismatch("kernel table must have 1, 3 or 4 dimensions")
    if kspec.kind == "callable":
        p, q = kspec.shape
        vals = np.empty((N + 1, L + 1, p, q))
        for j in range(N + 1):
            for d in range(L + 1):
                vals[j, d] = np.atleast_2d(kspec.fn(j * dt, d * dt))
        return CovarianceKernel(values=_ro(vals * kspec.scale), kind=kind, stationary=False)
    raise DimensionMismatch(f"unknown kernel kind {kspec.kind!r}")


def stacked_case2_kernel(nm: Case2Noise, grid: TimeGrid, n: int, k: int) -> CovarianceKernel:
    """Joint kernel of the stacked pair (state BN, observation BN).

    The reversed-direction cross block is the transpose of lam12 at the same
    lag (lag-symmetric cross covariance), which is the restriction the filter
    equations consume.
    """
    k11 = sample_kernel(nm.lam11, grid, "auto1")
    k22 = sample_kernel(nm.lam22, grid, "auto2")
    k12 = sample_kernel(nm.lam12, grid, "cross")
    if k11.p != n or k11.q != n:
        raise DimensionMismatch("lam11 block must be n x n")
    if k22.p != k or k22.q != k:
        raise DimensionMismatch("lam22 block must be k x k")
    if k12.p != n or k12.q != k:
        raise DimensionMismatch("lam12 block must be n x k")
    N, L = grid.N, grid.L
    vals = np.zeros((N + 1, L + 1, n + k, n + k))
    vals[:, :, :n, :n] = k11.values
    vals[:, :, n:, n:] = k22.values
    vals[:, :, :n, n:] = k12.values
    vals[:, :, n:, :n] = np.swapaxes(k12.values, 2, 3)
    stat = k11.stationary and k22.stationary and k12.stationary
    return CovarianceKernel(values=_ro(vals), kind="stacked", stationary=stat)


# ---------------------------------------------------------------------------
# Relaxing functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RelaxingFunction:
    """Moving-average weights on the (t, lag) grid.

    values[j, i] (a p x l block) weights the master increment over
    [t_{j-i}, t_{j-i+1}) in the sample at t_j; entries vanish for i = 0,
    i > L and i > j.  variant is one of lower-factor / upper-factor /
    analytic; smooth_obs marks an observation block vanishing at the band
    edge.
    """

    values: np.ndarray
    variant: str
    smooth_obs: bool = False

    @property
    def p(self) -> int:
        return self.values.shape[2]

    @property
    def l(self) -> int:
        return self.values.shape[3]


def _ro(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def _reproduced_gram(values: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Overlap quadrature of Phi Phi^T: rep[j, d] approximates Lambda(t_j, d dt)."""
    N, L, dt = grid.N, grid.L, grid.dt
    p = values.shape[2]
    rep = np.zeros((N + 1, L + 1, p, p))
    for d in range(L):
        for i in range(1, L - d + 1):
            # pairs (base j, lagged j+d) sharing the cell j-i
            js = np.arange(max(1, i), N + 1 - d)
            if js.size == 0:
                continue
            rep[js, d] += dt * np.einsum(
                "jpl,jql->jpq", values[js + d, i + d], values[js, i]
            )
    return rep


def check_gram(phi: RelaxingFunction, kernel: CovarianceKernel, grid: TimeGrid,
               rows: str = "all") -> float:
    """Max abs deviation of the reproduced Gram from the kernel table.

    rows="all" checks every base time from the first sample on;
    rows="stationary" restricts to full-window rows (used for analytic
    stationary factors, whose startup covariance ramps by construction).
    """
    rep = _reproduced_gram(phi.values, grid)
    N, L = grid.N, grid.L
    j0 = 1 if rows == "all" else L
    err = 0.0
    for d in range(L + 1):
        hi = N + 1 - d
        if hi <= j0:
            continue
        err = max(err, float(np.abs(rep[j0:hi, d] - kernel.values[j0:hi, d]).max()))
    return err


def factor_covariance(kernel: CovarianceKernel, grid: TimeGrid,
                      variant: str = "lower") -> RelaxingFunction:
    """Factor an auto (or stacked) kernel into a relaxing function.

    Assembles the banded sample covariance over the whole horizon and takes
    its banded Cholesky; the rows become the (t, lag) weight table, which
    reproduces the kernel at every grid pair to round-off.  variant
    "upper-factor" flips the sign of every other master increment column, a
    distinct weight table generating the identical Gram.  Raises NotPSD when
    the assembled covariance has an eigenvalue below -1e-8 * scale, and
    UnsupportedCross for a bare cross kernel.
    """
    if kernel.kind == "cross":
        raise UnsupportedCross("a cross kernel alone cannot be factored")
    p = kernel.p
    if kernel.q != p:
        raise UnsupportedCross("kernel blocks must be square to factor")
    N, L, dt = grid.N, grid.L, grid.dt
    scale = kernel.scale
    if scale == 0.0:
        vals = np.zeros((N + 1, L + 1, p, p))
        return RelaxingFunction(values=_ro(vals), variant=_variant_name(variant))

    dim = N * p
    bw = L * p - 1  # block lags 0 .. L-1
    ab = np.zeros((bw + 1, dim))
    lam = kernel.values
    for d in range(L):
        base = np.arange(1, N + 1 - d)  # earlier sample index j'
        for r in range(p):
            for s in range(p):
                off = d * p + r - s
                if off < 0 or off > bw:
                    continue
                cols = (base - 1) * p + s
                ab[off, cols] = lam[base, d, r, s]

    try:
        lb = scipy.linalg.cholesky_banded(ab, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError:
        lb = _clipped_banded_factor(ab, bw, dim, scale, kernel.kind)

    # rows -> weight table: Phi[j, i] = block(j-1, j-1-(i-1)) / sqrt(dt)
    vals = np.zeros((N + 1, L + 1, p, p))
    inv = 1.0 / np.sqrt(dt)
    for i in range(1, L + 1):
        jmin = i
        js = np.arange(jmin, N + 1)
        if js.size == 0:
            continue
        for r in range(p):
            for s in range(p):
                off = (i - 1) * p + r - s
                if off < 0 or off > bw:
                    continue
                cols = (js - i) * p + s
                vals[js, i, r, s] = lb[off, cols] * inv

    if _variant_name(variant) == "upper-factor":
        cell = np.arange(N + 1)
        signs = np.where(((cell[:, None] - np.arange(L + 1)[None, :]) % 2) == 0, 1.0, -1.0)
        vals = vals * signs[:, :, None, None]

    phi = RelaxingFunction(values=_ro(vals), variant=_variant_name(variant))
    err = check_gram(phi, kernel, grid, rows="all")
    if err > GRAM_TOL * scale:
        raise FactorizationMismatch(
            f"factor fails Gram reproduction: max error {err:.3e} "
            f"(tolerance {GRAM_TOL * scale:.3e}); check kernel support at lag eps"
        )
    return phi


def _variant_name(variant: str) -> str:
    v = variant.replace("_", "-")
    if v in ("lower", "lower-factor"):
        return "lower-factor"
    if v in ("upper", "upper-factor"):
        return "upper-factor"
    if v == "analytic":
        return "analytic"
    raise DimensionMismatch(f"unknown relaxing-function variant {variant!r}")


def _clipped_banded_factor(ab, bw, dim, scale, kind):
    """Eigen-clip tiny negative modes, then refactor (dense fallback)."""
    if dim > 6000:
        raise NotPSD(kind)
    dense = np.zeros((dim, dim))
    for off in range(bw + 1):
        idx = np.arange(dim - off)
        dense[idx + off, idx] = ab[off, : dim - off]
        dense[idx, idx + off] = ab[off, : dim - off]
    w, v = np.linalg.eigh(dense)
    if w.min() < -GRAM_TOL * scale:
        raise NotPSD(kind, float(w.min()))
    w = np.clip(w, 0.0, None)
    dense = (v * w) @ v.T
    dense[np.diag_indices(dim)] += 1e-14 * scale
    lfull = np.linalg.cholesky(dense)
    lb = np.zeros((bw + 1, dim))
    for off in range(bw + 1):
        idx = np.arange(dim - off)
        lb[off, : dim - off] = lfull[idx + off, idx]
    return lb


def relaxing_from_profile(profile, grid: TimeGrid, l: int = 1,
                          smooth_obs: bool = False) -> RelaxingFunction:
    """Analytic stationary weights, truncated at the start of the horizon."""
    N, L = grid.N, grid.L
    w = np.stack([np.atleast_2d(profile(-i * grid.dt)) for i in range(1, L + 1)])
    p = w.shape[1]
    if w.shape[2] != l:
        raise DimensionMismatch("profile width does not match master dimension")
    vals = np.zeros((N + 1, L + 1, p, l))
    for j in range(1, N + 1):
        top = min(L, j)
        vals[j, 1 : top + 1] = w[:top]
    return RelaxingFunction(values=_ro(vals), variant="analytic", smooth_obs=smooth_obs)


def smooth_obs_factor(phi: RelaxingFunction, grid: TimeGrid, n: int, k: int,
                      sharpness: float = 1.0):
    """Multiply the observation block of a stacked factor by a C^1 window
    vanishing at the band edge; returns (windowed factor, report).

    The window is a smoothstep in (theta + eps) / (sharpness * eps); smaller
    sharpness concentrates the change near -eps and shrinks the perturbation.
    The report carries the re-derived observation/cross kernel tables and the
    perturbation norms.
    """
    if phi.p != n + k:
        raise DimensionMismatch("expected a stacked state+observation factor")
    L, dt, eps = grid.L, grid.dt, grid.eps
    theta = -np.arange(L + 1) * dt
    u = np.clip((theta + eps) / (max(sharpness, 1e-12) * eps), 0.0, 1.0)
    win = u * u * (3.0 - 2.0 * u)
    win[L] = 0.0  # exact zero at -eps

    vals = np.array(phi.values)
    old_obs = vals[:, :, n:, :].copy()
    vals[:, :, n:, :] *= win[None, :, None, None]

    out = RelaxingFunction(values=_ro(vals), variant=phi.variant, smooth_obs=True)
    rep = _reproduced_gram(vals, grid)
    report = {
        "lam22": rep[:, :, n:, n:].copy(),
        "lam12": rep[:, :, :n, n:].copy(),
        "phi2_perturbation": float(np.abs(vals[:, :, n:, :] - old_obs).max()),
    }
    return out, report


# ---------------------------------------------------------------------------
# Path bundles
# ---------------------------------------------------------------------------


@dataclass
class NoisePathBundle:
    """Sampled driving noise for a batch of closed-loop realizations.

    master_w holds increments on the refined grid (rho*N steps, variance
    dt/rho each); w_dt aggregates them per coarse step.  phi are wide-band
    noise samples at the grid nodes (cases 1-2); family are the look-back
    slices phi~(t, theta) when requested.  delayed are the pointwise
    difference-quotient samples D w'(max(0, lambda_t)) and
    state_noise_increments the integrated state drive per step (case 3).
    """

    seed: int
    M: int
    case: int
    master_w: np.ndarray
    w_dt: np.ndarray
    xi_std: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None
    family: Optional[np.ndarray] = None
    delayed: Optional[np.ndarray] = None
    state_noise_increments: Optional[np.ndarray] = None
    delayed_w_increments: Optional[np.ndarray] = None
    checksums: Optional[np.ndarray] = None

    def obs_increments(self) -> np.ndarray:
        """Wiener increments entering the observation equation."""
        return self.w_dt if self.case == 3 else self.v


def _path_rngs(seed: int, M: int):
    for pidx in range(M):
        yield np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), pidx]))


def _draw_paths(seed: int, M: int, n_xi: int, n_master: int, l: int, n_obs: int,
                k: int, master_std: float, obs_std: float):
    """Per-path counter-keyed streams; draw order is xi, master, observation."""
    xi = np.empty((M, n_xi))
    master = np.empty((M, n_master, l))
    v = np.empty((M, n_obs, k)) if n_obs else None
    checks = np.empty(M, dtype=np.uint32)
    for pidx, rng in enumerate(_path_rngs(seed, M)):
        xi[pidx] = rng.standard_normal(n_xi)
        master[pidx] = rng.standard_normal((n_master, l)) * master_std
        crc = zlib.crc32(xi[pidx].tobytes())
        crc = zlib.crc32(master[pidx].tobytes(), crc)
        if n_obs:
            v[pidx] = rng.standard_normal((n_obs, k)) * obs_std
            crc = zlib.crc32(v[pidx].tobytes(), crc)
        checks[pidx] = crc & 0xFFFFFFFF
    return xi, master, v, checks


def _family_slice(out: np.ndarray, w_dt: np.ndarray, vals: np.ndarray,
                  a: int, N: int, L: int) -> None:
    """Accumulate phi~(t, -a*dt) into out[:, j] for all grid times."""
    for i in range(1, L - a + 1):
        jhi = N - a
        if jhi < i:
            continue
        js = np.arange(i, jhi + 1)
        out[:, js, :] += np.einsum("mjl,jpl->mjp", w_dt[:, js - i], vals[js + a, i + a])


def generate_bn(phi: RelaxingFunction, grid: TimeGrid, seed: int, M: int = 1,
                obs_dim: int = 0, with_family: bool = False,
                case: int = 1) -> NoisePathBundle:
    """Generate wide-band noise paths phi_t (and the look-back family).

    phi_t sums the master increments over (max(0, t - eps), t] weighted by
    the relaxing function; family slices use the shifted weight rows of the
    same table, so the zero-lag slice is the path itself, summed identically.
    """
    N, L, rho = grid.N, grid.L, grid.rho
    l, p = phi.l, phi.p
    n_xi = p - obs_dim if case == 2 else p
    xi, master, v, checks = _draw_paths(
        seed, M, n_xi, rho * N, l, N if obs_dim else 0, obs_dim,
        np.sqrt(grid.master_dt), np.sqrt(grid.dt),
    )
    w_dt = master.reshape(M, N, rho, l).sum(axis=2)

    vals = phi.values
    phi_paths = np.zeros((M, N + 1, p))
    _family_slice(phi_paths, w_dt, vals, 0, N, L)
    family = None
    if with_family:
        family = np.zeros((M, N + 1, L + 1, p))
        for a in range(L + 1):
            _family_slice(family[:, :, a, :], w_dt, vals, a, N, L)
    bundle = NoisePathBundle(
        seed=int(seed), M=M, case=case, master_w=master, w_dt=w_dt, xi_std=xi,
        v=v, phi=phi_paths, family=family, checksums=checks,
    )
    return bundle


def generate_delayed_wn(D: np.ndarray, schedule, master_w: np.ndarray,
                        grid: TimeGrid) -> tuple:
    """Case-3 signal noise from the master path.

    Returns (samples, increments): samples[m, j] is the pointwise
    difference-quotient read D (w(max(0, lambda_t)+delta) - w(max(0,
    lambda_t))) / delta at t_j; increments[m, j] is the integrated state
    drive over [t_j, t_{j+1}), which vanishes while lambda_t < 0 (the delayed
    clock has not started) and realizes the time-changed Wiener integral.
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    M, n_master, k = master_w.shape
    N, rho, dt = grid.N, grid.rho, grid.dt
    if n_master != rho * N:
        raise DimensionMismatch("master path length does not match the grid")
    delta = grid.master_dt
    times = grid.times
    lam_t = np.asarray(schedule.lambda_(times), dtype=float)
    if lam_t[-1] > grid.T + 1e-12 * max(grid.T, 1.0):
        raise ScheduleOutOfRange("lambda(T) exceeds the horizon")

    # pointwise difference-quotient samples (diagnostic read)
    cells = np.clip(np.round(np.maximum(0.0, lam_t) / delta).astype(int), 0, rho * N - 1)
    samples = master_w[:, cells, :] @ D.T / delta  # (M, N+1, n)

    # integrated drive: sub-step reads, zero while the delayed clock is negative
    gather = np.zeros((M, N, k))
    sub = np.arange(rho) * delta
    for i in range(rho):
        s = times[:N] + sub[i]
        lam_s = np.asarray(schedule.lambda_(s), dtype=float)
        active = lam_s >= 0.0
        if not np.any(active):
            continue
        c = np.clip(np.round(lam_s / delta).astype(int), 0, rho * N - 1)
        gather += master_w[:, c, :] * active[None, :, None]
    return samples, gather @ D.T, gather


def make_noise(spec: ProblemSpec, grid: TimeGrid, M: int, seed: int,
               variant: str = "lower", with_family: bool = False,
               phi_override: RelaxingFunction = None) -> NoisePathBundle:
    """Sample a complete noise bundle for a problem instance."""
    nm = spec.noise_model
    if isinstance(nm, Case1Noise):
        kern = sample_kernel(nm.lam, grid, "auto1")
        phi = phi_override or factor_covariance(kern, grid, variant)
        return generate_bn(phi, grid, seed, M, obs_dim=spec.k, with_family=with_family)
    if isinstance(nm, Case2Noise):
        kern = stacked_case2_kernel(nm, grid, spec.n, spec.k)
        phi = phi_override or factor_covariance(kern, grid, variant)
        return generate_bn(phi, grid, seed, M, obs_dim=spec.k,
                           with_family=with_family, case=2)
    if isinstance(nm, Case3Noise):
        xi, master, _, checks = _draw_paths(
            seed, M, spec.n, grid.rho * grid.N, spec.k, 0, 0,
            np.sqrt(grid.master_dt), 0.0,
        )
        w_dt = master.reshape(M, grid.N, grid.rho, spec.k).sum(axis=2)
        samples, increments, gather = generate_delayed_wn(nm.D, nm.schedule, master, grid)
        return NoisePathBundle(
            seed=int(seed), M=M, case=3, master_w=master, w_dt=w_dt, xi_std=xi,
            delayed=samples, state_noise_increments=increments,
            delayed_w_increments=gather, checksums=checks,
        )
    raise DimensionMismatch("unknown noise model")


def zero_noise(spec: ProblemSpec, grid: TimeGrid, M: int = 1) -> NoisePathBundle:
    """All-zero bundle: deterministic closed loop (stderr-free oracle runs)."""
    N, rho = grid.N, grid.rho
    l = spec.k if spec.case == 3 else (spec.n + (spec.k if spec.case == 2 else 0))
    bundle = NoisePathBundle(
        seed=0, M=M, case=spec.case,
        master_w=np.zeros((M, rho * N, l)), w_dt=np.zeros((M, N, l)),
        xi_std=np.zeros((M, spec.n)),
        checksums=np.zeros(M, dtype=np.uint32),
    )
    if spec.case == 3:
        bundle.delayed = np.zeros((M, N + 1, spec.n))
        bundle.state_noise_increments = np.zeros((M, N, spec.n))
        bundle.delayed_w_increments = np.zeros((M, N, spec.k))
    else:
        bundle.v = np.zeros((M, N, spec.k))
        p = spec.n + (spec.k if spec.case == 2 else 0)
        bundle.phi = np.zeros((M, N + 1, p))
    return bundle


# ---------------------------------------------------------------------------
# Empirical statistics
# ---------------------------------------------------------------------------


def empirical_autocov(paths: np.ndarray, base_index: int, lag_steps) -> tuple:
    """Across-path covariance estimates cov(x_{j0+d}, x_{j0}) with stderr.

    paths has shape (M, N+1) (scalar series).  Returns (estimates, stderrs)
    aligned with lag_steps; stderr is the sample std of the per-path products
    over sqrt(M).
    """
    paths = np.asarray(paths)
    M = paths.shape[0]
    base = paths[:, base_index]
    base = base - base.mean()
    est, se = [], []
    for d in lag_steps:
        lead = paths[:, base_index + d]
        lead = lead - lead.mean()
        prod = lead * base
        est.append(float(prod.mean()))
        se.append(float(prod.std(ddof=1) / np.sqrt(M)))
    return np.array(est), np.array(se)
