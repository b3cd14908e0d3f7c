"""Transport solvers for the filter kernels and the derived noise statistics.

The kernels live on characteristic-aligned (t, lag) grids: one time step
shifts every lag cell one slot deeper, so advection is exact and the only
error is the left-endpoint quadrature of the source terms (first order).
Depth d indexes theta = -d*dt; depth 0 is the current edge, depth L the band
edge.  Mild-solution semantics (the integral equations along characteristics)
are the defining contract; the grid stepping below unrolls exactly those
integrals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch
from .noise import CovarianceKernel, sample_kernel, stacked_case2_kernel
from .problem import Case1Noise, Case2Noise, Case3Noise, ProblemSpec, TimeGrid
from .riccati import ForwardCovarianceTable, step_forward_P

__all__ = [
    "KernelTable",
    "CorrelationTable",
    "DerivedNoiseStats",
    "Case1Kernels",
    "Case2Kernels",
    "Case3Kernels",
    "solve_kernels_case1",
    "solve_kernels_case2",
    "solve_kernels_case3",
    "derive_noise_stats",
    "case3_boundary_depths",
]


def _ro(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class KernelTable:
    """First-order kernels on the (t, lag) grid: Q (state block) and, in case
    2, M (observation block).  Values are exactly zero outside the stated
    support (initial plane, band edge, beyond the case-3 moving boundary)."""

    Q: np.ndarray                 # (N+1, L+1, n, n)
    M: Optional[np.ndarray] = None  # (N+1, L+1, k, n)


@dataclass(frozen=True)
class CorrelationTable:
    """Second-order kernels.  The zero-lag planes are kept for the whole
    horizon (these feed the first-order equations and the derived
    autocovariances); the full in-band tables are stored on request.

    r0[j, d] = R(t_j, -d dt, 0); n0, s0 likewise; s_theta0[j, d] = S(t_j, 0, -d dt).
    """

    r0: np.ndarray                       # (N+1, L+1, n, n)
    n0: Optional[np.ndarray] = None      # (N+1, L+1, k, k)
    s0: Optional[np.ndarray] = None      # (N+1, L+1, n, k)
    s_theta0: Optional[np.ndarray] = None  # (N+1, L+1, n, k)
    full_R: Optional[np.ndarray] = None  # (N+1, L+1, L+1, n, n)
    full_N: Optional[np.ndarray] = None
    full_S: Optional[np.ndarray] = None


@dataclass(frozen=True)
class DerivedNoiseStats:
    """Relaxing functions and autocovariances of the estimate-feed noise.

    psi1 is reported under both published index conventions (they coincide
    for stationary kernels): convention "a" reads the cross kernel at the
    current time, convention "b" at the shifted time.
    """

    sigma: np.ndarray                       # autocovariance of psi(t, 0)
    psi: np.ndarray                         # relaxing function of psi(t, 0)
    psi_alt: Optional[np.ndarray] = None    # shifted-index convention
    sigma22: Optional[np.ndarray] = None
    sigma12: Optional[np.ndarray] = None
    psi2: Optional[np.ndarray] = None
    psi2_alt: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Case1Kernels:
    P: ForwardCovarianceTable
    kernels: KernelTable
    correlations: CorrelationTable
    lam: CovarianceKernel


@dataclass(frozen=True)
class Case2Kernels:
    P: ForwardCovarianceTable
    kernels: KernelTable
    correlations: CorrelationTable
    lam11: CovarianceKernel
    lam22: CovarianceKernel
    lam12: CovarianceKernel
    # per-step gain kernels shared by the psi updates and the simulation:
    # bracket_q = Q C^T + Lam12 - S(.,0), bracket_m = M C^T + Lam22 - N(.,0)
    bracket_q: np.ndarray = None   # (N+1, L+1, n, k)
    bracket_m: np.ndarray = None   # (N+1, L+1, k, k)


@dataclass(frozen=True)
class Case3Kernels:
    P: ForwardCovarianceTable
    kernels: KernelTable
    correlations: CorrelationTable
    boundary: np.ndarray  # (N+1,) int, active depth of the moving boundary


def solve_kernels_case1(spec: ProblemSpec, grid: TimeGrid,
                        lam: CovarianceKernel = None,
                        store_full: bool = False) -> Case1Kernels:
    """Co-advance P, Q, R for a state-side wide-band noise."""
    if not isinstance(spec.noise_model, Case1Noise) and lam is None:
        raise DimensionMismatch("case-1 solver needs a case-1 noise model or a kernel")
    if lam is None:
        lam = sample_kernel(spec.noise_model.lam, grid, "auto1")
    A, C = spec.A, spec.C
    n = spec.n
    N, L, dt = grid.N, grid.L, grid.dt
    lam_v = lam.values
    if lam_v.shape[:2] != (N + 1, L + 1) or lam_v.shape[2:] != (n, n):
        raise DimensionMismatch("kernel table does not match the grid or state dim")

    P = np.empty((N + 1, n, n))
    Qh = np.zeros((N + 1, L + 1, n, n))
    r0 = np.zeros((N + 1, L + 1, n, n))
    fullR = np.zeros((N + 1, L + 1, L + 1, n, n)) if store_full else None

    P[0] = spec.initial_cov
    Q = np.zeros((L + 1, n, n))
    R = np.zeros((L + 1, L + 1, n, n))
    CtC = C.T @ C
    for j in range(N):
        W = CtC @ P[j]
        src_q = (np.einsum("dab,bc->dac", Q, A.T) + lam_v[j]
                 - R[:, 0] - np.einsum("dab,bc->dac", Q, W))
        X = np.einsum("dab,cb->dac", Q, C)           # Q C^T, (L+1, n, k)
        src_r = np.einsum("dak,ebk->deab", X, X)     # (Q C^T)(Q C^T)^T

        Qn = np.zeros_like(Q)
        Qn[:L] = Q[1:] + dt * src_q[1:]
        Rn = np.zeros_like(R)
        Rn[:L, :L] = R[1:, 1:] + dt * src_r[1:, 1:]

        P[j + 1] = step_forward_P(1, P[j], dt, A, C, Q[0])
        Q, R = Qn, Rn
        Qh[j + 1] = Q
        r0[j + 1] = R[:, 0]
        if store_full:
            fullR[j + 1] = R

    return Case1Kernels(
        P=ForwardCovarianceTable(P=_ro(P)),
        kernels=KernelTable(Q=_ro(Qh)),
        correlations=CorrelationTable(r0=_ro(r0), full_R=_ro(fullR) if store_full else None),
        lam=lam,
    )


def solve_kernels_case2(spec: ProblemSpec, grid: TimeGrid,
                        store_full: bool = False) -> Case2Kernels:
    """Co-advance the six-table system for correlated state/observation noise.

    The gain factor (C P + M(.,0)) is shared by the Q and M updates; the two
    bracket kernels are formed once per step and reused by every second-order
    source.  The observation-block sources read the transposed cross kernel
    (the model restricts the cross covariance to be lag symmetric, which also
    fixes the block shapes in the matrix case)."""
    nm = spec.noise_model
    if not isinstance(nm, Case2Noise):
        raise DimensionMismatch("case-2 solver needs a case-2 noise model")
    A, C = spec.A, spec.C
    n, k = spec.n, spec.k
    N, L, dt = grid.N, grid.L, grid.dt
    l11 = sample_kernel(nm.lam11, grid, "auto1").values
    l22 = sample_kernel(nm.lam22, grid, "auto2").values
    l12 = sample_kernel(nm.lam12, grid, "cross").values
    if l11.shape[2:] != (n, n) or l22.shape[2:] != (k, k) or l12.shape[2:] != (n, k):
        raise DimensionMismatch("case-2 kernel blocks have wrong shapes")

    P = np.empty((N + 1, n, n))
    Qh = np.zeros((N + 1, L + 1, n, n))
    Mh = np.zeros((N + 1, L + 1, k, n))
    r0 = np.zeros((N + 1, L + 1, n, n))
    n0 = np.zeros((N + 1, L + 1, k, k))
    s0 = np.zeros((N + 1, L + 1, n, k))
    st0 = np.zeros((N + 1, L + 1, n, k))
    br_q_h = np.zeros((N + 1, L + 1, n, k))
    br_m_h = np.zeros((N + 1, L + 1, k, k))
    fullR = np.zeros((N + 1, L + 1, L + 1, n, n)) if store_full else None
    fullN = np.zeros((N + 1, L + 1, L + 1, k, k)) if store_full else None
    fullS = np.zeros((N + 1, L + 1, L + 1, n, k)) if store_full else None

    P[0] = spec.initial_cov
    Q = np.zeros((L + 1, n, n))
    Mk = np.zeros((L + 1, k, n))
    R = np.zeros((L + 1, L + 1, n, n))
    Nc = np.zeros((L + 1, L + 1, k, k))
    S = np.zeros((L + 1, L + 1, n, k))

    def brackets(j):
        br_q = np.einsum("dab,cb->dac", Q, C) + l12[j] - S[:, 0]
        br_m = np.einsum("dab,cb->dac", Mk, C) + l22[j] - Nc[:, 0]
        return br_q, br_m

    br_q_h[0], br_m_h[0] = brackets(0)
    for j in range(N):
        br_q, br_m = brackets(j)
        gain = C @ P[j] + Mk[0]  # (k, n)

        src_q = (np.einsum("dab,bc->dac", Q, A.T) + l11[j] - R[:, 0]
                 - np.einsum("dak,kb->dab", br_q, gain))
        src_m = (np.einsum("dab,bc->dac", Mk, A.T)
                 + np.swapaxes(l12[j], 1, 2) - np.swapaxes(S[0], 1, 2)
                 - np.einsum("dak,kb->dab", br_m, gain))
        src_r = np.einsum("dak,ebk->deab", br_q, br_q)
        src_n = np.einsum("dak,ebk->deab", br_m, br_m)
        src_s = np.einsum("dak,ebk->deab", br_q, br_m)

        Qn = np.zeros_like(Q)
        Qn[:L] = Q[1:] + dt * src_q[1:]
        Mn = np.zeros_like(Mk)
        Mn[:L] = Mk[1:] + dt * src_m[1:]
        Rn = np.zeros_like(R)
        Rn[:L, :L] = R[1:, 1:] + dt * src_r[1:, 1:]
        Ncn = np.zeros_like(Nc)
        Ncn[:L, :L] = Nc[1:, 1:] + dt * src_n[1:, 1:]
        Sn = np.zeros_like(S)
        Sn[:L, :L] = S[1:, 1:] + dt * src_s[1:, 1:]

        P[j + 1] = step_forward_P(2, P[j], dt, A, C, Q[0], Mk[0])
        Q, Mk, R, Nc, S = Qn, Mn, Rn, Ncn, Sn
        Qh[j + 1] = Q
        Mh[j + 1] = Mk
        r0[j + 1] = R[:, 0]
        n0[j + 1] = Nc[:, 0]
        s0[j + 1] = S[:, 0]
        st0[j + 1] = S[0]  # S(t, 0, .) plane, indexed by the second slot
        br_q_h[j + 1], br_m_h[j + 1] = brackets(j + 1)
        if store_full:
            fullR[j + 1] = R
            fullN[j + 1] = Nc
            fullS[j + 1] = S

    lam11 = CovarianceKernel(values=_ro(l11), kind="auto1", stationary=True)
    lam22 = CovarianceKernel(values=_ro(l22), kind="auto2", stationary=True)
    lam12 = CovarianceKernel(values=_ro(l12), kind="cross", stationary=True)
    return Case2Kernels(
        P=ForwardCovarianceTable(P=_ro(P)),
        kernels=KernelTable(Q=_ro(Qh), M=_ro(Mh)),
        correlations=CorrelationTable(
            r0=_ro(r0), n0=_ro(n0), s0=_ro(s0), s_theta0=_ro(st0),
            full_R=_ro(fullR) if store_full else None,
            full_N=_ro(fullN) if store_full else None,
            full_S=_ro(fullS) if store_full else None,
        ),
        lam11=lam11, lam22=lam22, lam12=lam12,
        bracket_q=_ro(br_q_h), bracket_m=_ro(br_m_h),
    )


def case3_boundary_depths(spec: ProblemSpec, grid: TimeGrid) -> np.ndarray:
    """Nearest-node depth of the moving boundary theta_b(t) = t - lambda^-1(t)."""
    sched = spec.noise_model.schedule
    times = grid.times
    depth = (np.asarray(sched.lambda_inv(times), dtype=float) - times) / grid.dt
    return np.clip(np.round(depth).astype(int), 0, grid.L)


def solve_kernels_case3(spec: ProblemSpec, grid: TimeGrid,
                        store_full: bool = False) -> Case3Kernels:
    """Transport solve with a moving lower boundary for delayed white noise.

    Boundary values (-D C P on the first-order kernel, the D C Q^T /
    Q C^T D^T rows on the second-order one) are injected at the deepest
    active cell each step (nearest-node placement, first-order accurate);
    cells beyond the boundary stay exactly zero."""
    nm = spec.noise_model
    if not isinstance(nm, Case3Noise):
        raise DimensionMismatch("case-3 solver needs a case-3 noise model")
    A, C, D = spec.A, spec.C, nm.D
    n = spec.n
    N, L, dt = grid.N, grid.L, grid.dt
    bidx = case3_boundary_depths(spec, grid)

    P = np.empty((N + 1, n, n))
    Qh = np.zeros((N + 1, L + 1, n, n))
    r0 = np.zeros((N + 1, L + 1, n, n))
    fullR = np.zeros((N + 1, L + 1, L + 1, n, n)) if store_full else None

    P[0] = spec.initial_cov
    Q = np.zeros((L + 1, n, n))
    R = np.zeros((L + 1, L + 1, n, n))
    CtC = C.T @ C
    DC = D @ C
    for j in range(N):
        W = CtC @ P[j]
        src_q = (np.einsum("dab,bc->dac", Q, A.T) - R[:, 0]
                 - np.einsum("dab,bc->dac", Q, W))
        X = np.einsum("dab,cb->dac", Q, C)
        src_r = np.einsum("dak,ebk->deab", X, X)

        Qn = np.zeros_like(Q)
        Qn[:L] = Q[1:] + dt * src_q[1:]
        Rn = np.zeros_like(R)
        Rn[:L, :L] = R[1:, 1:] + dt * src_r[1:, 1:]

        P[j + 1] = step_forward_P(1, P[j], dt, A, C, Q[0])

        b_new = bidx[j + 1]
        fill_lo = min(bidx[j], b_new)
        bound_val = -DC @ P[j + 1]
        for d in range(fill_lo, b_new + 1):
            Qn[d] = bound_val
        if b_new < L:
            Qn[b_new + 1 :] = 0.0
        # second-order boundary rows use the updated first-order kernel
        act = slice(0, b_new + 1)
        for d in range(fill_lo, b_new + 1):
            Rn[d, act] = np.einsum("ab,ecb->eac", DC, Qn[act])
            Rn[act, d] = np.einsum("eab,cb->eac", Qn[act], DC)
        if b_new < L:
            Rn[b_new + 1 :, :] = 0.0
            Rn[:, b_new + 1 :] = 0.0

        Q, R = Qn, Rn
        Qh[j + 1] = Q
        r0[j + 1] = R[:, 0]
        if store_full:
            fullR[j + 1] = R

    bidx = np.ascontiguousarray(bidx)
    bidx.setflags(write=False)
    return Case3Kernels(
        P=ForwardCovarianceTable(P=_ro(P)),
        kernels=KernelTable(Q=_ro(Qh)),
        correlations=CorrelationTable(r0=_ro(r0), full_R=_ro(fullR) if store_full else None),
        boundary=bidx,
    )


def derive_noise_stats(case: int, solution, grid: TimeGrid, C: np.ndarray) -> DerivedNoiseStats:
    """Assemble the derived statistics by pure indexing on stored kernels.

    psi[j, d] reads the first-order kernel at the shifted time t_j - d dt
    (the exact relaxing function of the estimate-feed noise); sigma[j, d]
    reads the zero-lag plane of the second-order kernel.
    """
    N, L = grid.N, grid.L
    Q = solution.kernels.Q
    n = Q.shape[2]
    k = C.shape[0]

    psi = np.zeros((N + 1, L + 1, n, k))
    for d in range(L + 1):
        js = np.arange(d, N + 1)
        psi[js, d] = np.einsum("jab,cb->jac", Q[js - d, d], C)

    if case in (1, 3):
        return DerivedNoiseStats(sigma=_ro(solution.correlations.r0.copy()), psi=_ro(psi))

    # case 2: both published index conventions for the cross-kernel shift
    l12 = solution.lam12.values
    l22 = solution.lam22.values
    s0 = solution.correlations.s0
    n0 = solution.correlations.n0
    M = solution.kernels.M

    psi1_a = psi + (l12 - s0)
    psi1_b = psi - s0
    psi2_mc = np.zeros((N + 1, L + 1, k, k))
    for d in range(L + 1):
        js = np.arange(d, N + 1)
        psi2_mc[js, d] = np.einsum("jab,cb->jac", M[js - d, d], C)
    psi2_a = psi2_mc + (l22 - n0)
    psi2_b = psi2_mc - n0
    js = np.arange(N + 1)
    for d in range(L + 1):
        shifted = np.minimum(js + d, N)  # cross kernel at t - theta, clamped at T
        psi1_b[js, d] += l12[shifted, d]
        psi2_b[js, d] += l22[shifted, d]

    return DerivedNoiseStats(
        sigma=_ro(solution.correlations.r0.copy()),
        psi=_ro(psi1_a), psi_alt=_ro(psi1_b),
        sigma22=_ro(n0.copy()), sigma12=_ro(s0.copy()),
        psi2=_ro(psi2_a), psi2_alt=_ro(psi2_b),
    )
