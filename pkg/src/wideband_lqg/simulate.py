"""Closed-loop simulation of one batch of realizations.

Plant and filter advance together (Euler-Maruyama at the grid step, on the
same Wiener increments); look-back slices of the estimate-feed noise advect
one lag cell per step with the case-specific gain kernel applied to the
innovation increment; the anticipating correction is a left-endpoint
quadrature of look-ahead propagators against the current slice.  All updates
are vectorized across the path axis, and a realization is a pure function of
(noise bundle, policy), so repeated runs are bitwise identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .design import DesignTables
from .errors import DimensionMismatch, GridMismatch
from .noise import NoisePathBundle
from .problem import ProblemSpec, TimeGrid

__all__ = [
    "Policy",
    "FilterState",
    "ControlDecomposition",
    "TrajectoryBundle",
    "DiagnosticsRecord",
    "simulate_closed_loop",
    "accumulate_cost",
    "lemma_diagnostics",
    "innovative_noise",
    "innovative_noise_increments",
]


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Policy:
    """Feedback law evaluated on (estimate, anticipating correction).

    kinds: optimal | gain-scaled (factor gamma on the certainty-equivalence
    gain) | drop-alpha (anticipating term forced to zero) | zero | custom
    (fn(t, xhat, alpha_hat) -> u, batched).
    """

    kind: str = "optimal"
    gamma: float = 1.0
    fn: Optional[Callable] = None

    @staticmethod
    def optimal() -> "Policy":
        return Policy(kind="optimal")

    @staticmethod
    def gain_scaled(gamma: float) -> "Policy":
        return Policy(kind="gain-scaled", gamma=float(gamma))

    @staticmethod
    def drop_alpha() -> "Policy":
        return Policy(kind="drop-alpha")

    @staticmethod
    def zero() -> "Policy":
        return Policy(kind="zero")

    @staticmethod
    def custom(fn) -> "Policy":
        return Policy(kind="custom", fn=fn)

    @staticmethod
    def parse(text: str) -> "Policy":
        text = text.strip()
        if text == "optimal":
            return Policy.optimal()
        if text in ("drop-alpha", "drop_alpha"):
            return Policy.drop_alpha()
        if text == "zero":
            return Policy.zero()
        if text.startswith("gain-scaled"):
            _, _, arg = text.partition(":")
            return Policy.gain_scaled(float(arg or "1.0"))
        raise DimensionMismatch(f"unknown policy {text!r}")

    @property
    def name(self) -> str:
        if self.kind == "gain-scaled":
            return f"gain-scaled:{self.gamma:g}"
        return self.kind


# ---------------------------------------------------------------------------
# Result containers
# ---------------------------------------------------------------------------


@dataclass
class FilterState:
    """Terminal filter state of a batch (estimate, look-back slices,
    anticipating correction, last innovation increment)."""

    xhat: np.ndarray
    psi_slice: np.ndarray
    alpha_hat: np.ndarray
    innovation: np.ndarray
    psi2_slice: Optional[np.ndarray] = None


@dataclass
class ControlDecomposition:
    """u0 is the certainty-equivalence term, u1 the anticipating term; the
    stored u is computed once as their sum."""

    u0: np.ndarray
    u1: np.ndarray
    u: np.ndarray


@dataclass
class TrajectoryBundle:
    """One batch of closed-loop realizations (path axis first)."""

    case: int
    seed: int
    policy: str
    times: np.ndarray
    x: np.ndarray            # (M, N+1, n)
    xhat: np.ndarray         # (M, N+1, n)
    u0: np.ndarray           # (M, N+1, m)
    u1: np.ndarray
    u: np.ndarray
    psi0: np.ndarray         # (M, N+1, n): estimate-feed noise at lag 0
    alpha_hat: np.ndarray    # (M, N+1, n)
    dz: np.ndarray           # (M, N, k) raw observation increments
    zbar: np.ndarray         # (M, N, k) innovation increments
    cost_integrand: np.ndarray  # (M, N+1)
    checksums: np.ndarray
    final_state: FilterState
    psi_slices: Optional[np.ndarray] = None   # (M, N+1, L+1, n) when recorded
    psi2_slices: Optional[np.ndarray] = None

    @property
    def control(self) -> ControlDecomposition:
        return ControlDecomposition(u0=self.u0, u1=self.u1, u=self.u)


@dataclass
class DiagnosticsRecord:
    """Pathwise optimality-lemma quantities at selected interior times.

    y is the backward cost-adjoint quadrature, alpha the anticipating
    process (its quadrature reads the noise on [t, T]), r = y + K x + alpha
    the residual whose conditional expectation vanishes under optimality.
    """

    time_indices: np.ndarray
    y: np.ndarray          # (M, nt, n)
    alpha: np.ndarray      # (M, nt, n)
    r: np.ndarray          # (M, nt, n)
    r_terminal: np.ndarray  # (M, n)
    z_at_half: np.ndarray  # (M, nt, k): observation path at tau = t/2


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


def _policy_terms(policy: Policy, j: int, t: float, xhat: np.ndarray,
                  alpha: np.ndarray, fb: np.ndarray, gibt: np.ndarray):
    m = fb.shape[0]
    M = xhat.shape[0]
    if policy.kind == "zero":
        z = np.zeros((M, m))
        return z, z.copy()
    if policy.kind == "custom":
        u = np.atleast_2d(policy.fn(t, xhat, alpha))
        return u, np.zeros_like(u)
    u0 = -(xhat @ fb.T)
    if policy.kind == "gain-scaled":
        u0 = policy.gamma * u0
    if policy.kind == "drop-alpha":
        u1 = np.zeros_like(u0)
    else:
        u1 = -(alpha @ gibt.T)
    return u0, u1


def simulate_closed_loop(spec: ProblemSpec, grid: TimeGrid, design: DesignTables,
                         noise: NoisePathBundle, policy: Policy = Policy.optimal(),
                         record_psi: bool = False) -> TrajectoryBundle:
    """Advance plant and filter over the horizon for every path in the bundle."""
    if design.grid is not grid and (design.grid.N != grid.N or design.grid.L != grid.L
                                    or abs(design.grid.dt - grid.dt) > 1e-15):
        raise GridMismatch("design tables were built on a different grid")
    if noise.case != spec.case:
        raise GridMismatch("noise bundle case does not match the problem")
    N, L, dt = grid.N, grid.L, grid.dt
    n, m, k = spec.n, spec.m, spec.k
    M = noise.M
    case = spec.case

    A, B, C, F, G = spec.A, spec.B, spec.C, spec.F, spec.G
    gibt = spec.ginv_bt()
    fb = np.einsum("ab,jbc->jac", gibt, design.K)  # (N+1, m, n)
    gh = design.filter_gain
    psi_gain = design.psi_gain
    psi2_gain = design.psi2_gain
    aw = design.alpha_weights
    boundary = design.boundary
    D = spec.noise_model.D if case == 3 else None

    # initial state draw: mean + sqrt(initial_cov) @ std normals
    sqrt_cov = _psd_sqrt(spec.initial_cov)
    if noise.xi_std is None or noise.xi_std.shape != (M, n):
        raise DimensionMismatch("noise bundle lacks initial-state draws")
    x = spec.initial_mean[None, :] + noise.xi_std @ sqrt_cov.T
    xhat = np.broadcast_to(spec.initial_mean, (M, n)).copy()

    psi = np.zeros((M, L + 1, n))
    psi2 = np.zeros((M, L + 1, k)) if case == 2 else None

    xs = np.empty((M, N + 1, n))
    xhs = np.empty((M, N + 1, n))
    u0s = np.empty((M, N + 1, m))
    u1s = np.empty((M, N + 1, m))
    us = np.empty((M, N + 1, m))
    psi0s = np.empty((M, N + 1, n))
    alphas = np.empty((M, N + 1, n))
    dzs = np.empty((M, N, k))
    zbars = np.empty((M, N, k))
    lint = np.empty((M, N + 1))
    psi_h = np.empty((M, N + 1, L + 1, n)) if record_psi else None
    psi2_h = np.empty((M, N + 1, L + 1, k)) if (record_psi and case == 2) else None

    if case == 2:
        phi1 = noise.phi[:, :, :n]
        phi2 = noise.phi[:, :, n:]
    elif case == 1:
        phi1 = noise.phi
        phi2 = None
    else:
        phi1 = phi2 = None

    white_psi = None
    sub_nodes = sub_active = None
    if case == 3:
        # the estimate drift reads the innovation path at the delayed clock
        # (master resolution); precompute which coarse node each delayed
        # sub-time falls in, for the C (x - xhat) part of the innovation
        white_psi = np.zeros((M, L + 1, n))
        sched = spec.noise_model.schedule
        delta = grid.master_dt
        sub_nodes = np.empty((N, grid.rho), dtype=int)
        sub_active = np.empty((N, grid.rho), dtype=bool)
        for i in range(grid.rho):
            s = np.arange(N) * dt + i * delta
            lam_s = np.asarray(sched.lambda_(s), dtype=float)
            sub_active[:, i] = lam_s >= 0.0
            sub_nodes[:, i] = np.clip(np.floor(lam_s / dt + 1e-12).astype(int), 0, N - 1)

    dzbar = np.zeros((M, k))
    for j in range(N + 1):
        alpha = np.einsum("iab,mib->ma", aw[j], psi[:, :L, :])
        u0, u1 = _policy_terms(policy, j, j * dt, xhat, alpha, fb[j], gibt)
        u = u0 + u1

        xs[:, j] = x
        xhs[:, j] = xhat
        u0s[:, j] = u0
        u1s[:, j] = u1
        us[:, j] = u
        alphas[:, j] = alpha
        lint[:, j] = (np.einsum("ma,ab,mb->m", x, F, x)
                      + np.einsum("ma,ab,mb->m", u, G, u))
        if record_psi:
            psi_h[:, j] = psi
            if psi2_h is not None:
                psi2_h[:, j] = psi2

        if case == 3 and j < N:
            # time-changed innovation read over [lambda(t_j), lambda(t_{j+1})]
            err_sum = np.zeros((M, n))
            for i in range(grid.rho):
                if sub_active[j, i]:
                    node = sub_nodes[j, i]
                    err_sum += xs[:, node, :] - xhs[:, node, :]
            feed = noise.delayed_w_increments[:, j] + grid.master_dt * (err_sum @ C.T)
            psi0_feed = psi[:, 0, :] - white_psi[:, 0, :] + (feed @ D.T) / dt
        else:
            psi0_feed = psi[:, 0, :]
        psi0s[:, j] = psi0_feed
        if j == N:
            break

        # observation increment and innovation
        dz = dt * (x @ C.T)
        if case == 2:
            dz = dz + dt * phi2[:, j]
        dz = dz + (noise.w_dt[:, j] if case == 3 else noise.v[:, j])
        dzbar = dz - dt * (xhat @ C.T)
        if case == 2:
            dzbar = dzbar - dt * psi2[:, 0, :]
        dzs[:, j] = dz
        zbars[:, j] = dzbar

        # plant
        drift = x @ A.T + u @ B.T
        if case == 3:
            x = x + dt * drift + noise.state_noise_increments[:, j]
        else:
            x = x + dt * (drift + phi1[:, j])

        # filter
        xhat = (xhat + dt * (xhat @ A.T + u @ B.T + psi0_feed)
                + dzbar @ gh[j].T)

        # look-back slices: shift one cell deeper, source at the departed cell
        new_psi = np.zeros_like(psi)
        new_psi[:, :L, :] = psi[:, 1:, :] + np.einsum("mk,dak->mda", dzbar, psi_gain[j, 1:])
        if case == 2:
            new_psi2 = np.zeros_like(psi2)
            new_psi2[:, :L, :] = psi2[:, 1:, :] + np.einsum(
                "mk,dak->mda", dzbar, psi2_gain[j, 1:]
            )
            psi2 = new_psi2
        if case == 3:
            new_white = np.zeros_like(white_psi)
            new_white[:, :L, :] = white_psi[:, 1:, :]
            b_new = int(boundary[j + 1])
            fill_lo = min(int(boundary[j]), b_new)
            inj = (dzbar / dt) @ D.T
            for d in range(fill_lo, b_new + 1):
                new_psi[:, d, :] = inj
                new_white[:, d, :] = inj
            if b_new < L:
                new_psi[:, b_new + 1 :, :] = 0.0
                new_white[:, b_new + 1 :, :] = 0.0
            white_psi = new_white
        psi = new_psi

    final = FilterState(
        xhat=xhat, psi_slice=psi, alpha_hat=alphas[:, N],
        innovation=dzbar, psi2_slice=psi2,
    )
    return TrajectoryBundle(
        case=case, seed=noise.seed, policy=policy.name, times=grid.times,
        x=xs, xhat=xhs, u0=u0s, u1=u1s, u=us, psi0=psi0s, alpha_hat=alphas,
        dz=dzs, zbar=zbars, cost_integrand=lint, checksums=noise.checksums,
        final_state=final, psi_slices=psi_h, psi2_slices=psi2_h,
    )


def _psd_sqrt(P: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(P)
    return v @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ v.T


def accumulate_cost(traj: TrajectoryBundle, spec: ProblemSpec, grid: TimeGrid) -> np.ndarray:
    """Realized quadratic cost per path: trapezoidal running term + terminal."""
    dt = grid.dt
    li = traj.cost_integrand
    running = dt * (0.5 * li[:, 0] + li[:, 1:-1].sum(axis=1) + 0.5 * li[:, -1])
    xT = traj.x[:, -1, :]
    return running + np.einsum("ma,ab,mb->m", xT, spec.H, xT)


# ---------------------------------------------------------------------------
# Optimality-lemma diagnostics
# ---------------------------------------------------------------------------


def lemma_diagnostics(traj: TrajectoryBundle, noise: NoisePathBundle,
                      design: DesignTables, time_indices=None) -> DiagnosticsRecord:
    """Backward quadratures of the adjoint y and the anticipating alpha.

    alpha is anticipating: its recursion consumes the state-side noise on
    [t, T] (the wide-band path in cases 1-2, the integrated delayed drive in
    case 3).  The residual r = y + K x + alpha vanishes identically at T and
    has zero conditional mean under optimality.
    """
    spec, grid = design.spec, design.grid
    N, dt = grid.N, grid.dt
    n = spec.n
    M = traj.x.shape[0]
    if time_indices is None:
        time_indices = [N // 4, N // 2, (3 * N) // 4]
    time_indices = np.asarray(sorted(set(int(i) for i in time_indices)))
    if time_indices.size and (time_indices[0] < 0 or time_indices[-1] > N):
        raise DimensionMismatch("diagnostic times outside the grid")

    expAdt = scipy.linalg.expm(spec.A * dt)
    K = design.K
    steps = design.propagators.steps

    if spec.case == 3:
        noise_inc = noise.state_noise_increments  # K_s phi_s ds realized as K_s dI_s
    else:
        phi1 = noise.phi[:, :, :n]
        noise_inc = dt * phi1[:, :N, :]

    y = -(traj.x[:, N, :] @ spec.H)
    alpha = np.zeros((M, n))
    r_term = y + traj.x[:, N, :] @ K[N] + alpha

    nt = time_indices.size
    y_at = np.empty((M, nt, n))
    a_at = np.empty((M, nt, n))
    r_at = np.empty((M, nt, n))
    pos = nt - 1
    for j in range(N, -1, -1):
        if j < N:
            y = y @ expAdt - dt * (traj.x[:, j, :] @ spec.F)
            alpha = alpha @ steps[j] + noise_inc[:, j] @ K[j]
        while pos >= 0 and time_indices[pos] == j:
            y_at[:, pos] = y
            a_at[:, pos] = alpha
            r_at[:, pos] = y + traj.x[:, j, :] @ K[j] + alpha
            pos -= 1

    z_path = np.cumsum(traj.dz, axis=1)  # z at nodes 1..N
    z_half = np.empty((M, nt, traj.dz.shape[2]))
    for i, j in enumerate(time_indices):
        half = j // 2
        z_half[:, i] = z_path[:, half - 1] if half >= 1 else 0.0

    return DiagnosticsRecord(
        time_indices=time_indices, y=y_at, alpha=a_at, r=r_at,
        r_terminal=r_term, z_at_half=z_half,
    )


# ---------------------------------------------------------------------------
# Innovative noise
# ---------------------------------------------------------------------------


def innovative_noise_increments(phi_dt: np.ndarray, alpha_hat: np.ndarray,
                                S: np.ndarray, dt: float,
                                dw: np.ndarray = None) -> np.ndarray:
    """Increments of the causality-restoring noise:
    (phi - B G^-1 B^T alpha_hat) dt + dw."""
    out = phi_dt - dt * (alpha_hat @ S)
    if dw is not None:
        out = out + dw
    return out


def innovative_noise(traj: TrajectoryBundle, noise: NoisePathBundle,
                     design: DesignTables, dw: np.ndarray = None) -> np.ndarray:
    """Case-specific increments of the modified state noise that makes the
    loop causal; the anticipating correction is read from the trajectory."""
    spec, grid = design.spec, design.grid
    N, dt = grid.N, grid.dt
    S = spec.B @ spec.ginv_bt()
    if spec.case == 3:
        phi_dt = noise.state_noise_increments
    else:
        phi_dt = dt * noise.phi[:, :N, : spec.n]
    return innovative_noise_increments(phi_dt, traj.alpha_hat[:, :N, :], S, dt, dw)
