"""Backward control Riccati equation, closed-loop propagators and the forward
covariance stepping primitive shared with the kernel solvers.

All integrations use the classical 4th-order one-step scheme with
re-symmetrization after every step; finite escape is detected and raised
rather than returning NaN tables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlowUp, DimensionMismatch
from .problem import ProblemSpec, TimeGrid

__all__ = [
    "BackwardGainTable",
    "PropagatorTable",
    "ForwardCovarianceTable",
    "solve_backward_riccati",
    "build_propagators",
    "propagator_band",
    "step_forward_P",
]

BLOWUP_LIMIT = 1e12


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _check_finite(name: str, m: np.ndarray) -> None:
    if not np.all(np.isfinite(m)) or np.abs(m).max() > BLOWUP_LIMIT:
        raise BlowUp(f"{name} exceeded {BLOWUP_LIMIT:.0e} (finite-escape or invalid data)")


def _ro(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BackwardGainTable:
    """K at the grid nodes plus half-step nodes (needed for 4th-order
    propagator integration); K[N] equals the terminal weight exactly."""

    K: np.ndarray        # (N+1, n, n)
    K_half: np.ndarray   # (N, n, n), K at t_j + dt/2

    @property
    def n(self) -> int:
        return self.K.shape[1]


@dataclass(frozen=True)
class PropagatorTable:
    """Per-step transition matrices of the closed-loop drift A - B G^-1 B^T K.

    steps[j] maps the state at t_j to t_{j+1}; longer-range propagators are
    exact products of the per-step factors.
    """

    steps: np.ndarray  # (N, n, n)

    @property
    def n(self) -> int:
        return self.steps.shape[1]

    def compose(self, j_to: int, j_from: int) -> np.ndarray:
        """U(t_{j_to}, t_{j_from}) for j_from <= j_to."""
        if j_to < j_from:
            raise DimensionMismatch("compose requires j_to >= j_from")
        out = np.eye(self.n)
        for j in range(j_from, j_to):
            out = self.steps[j] @ out
        return out


@dataclass(frozen=True)
class ForwardCovarianceTable:
    P: np.ndarray  # (N+1, n, n)

    @property
    def n(self) -> int:
        return self.P.shape[1]


def _riccati_rhs(K: np.ndarray, A: np.ndarray, F: np.ndarray, S: np.ndarray) -> np.ndarray:
    return K @ A + A.T @ K + F - K @ S @ K


def _rk4(f, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def solve_backward_riccati(spec: ProblemSpec, grid: TimeGrid) -> BackwardGainTable:
    """Integrate the control Riccati equation backward from K(T) = H."""
    A, F, H = spec.A, spec.F, spec.H
    S = spec.B @ spec.ginv_bt()
    N, dt = grid.N, grid.dt
    n = spec.n
    K = np.empty((N + 1, n, n))
    K_half = np.empty((N, n, n))
    K[N] = H

    def f(Km):
        return _riccati_rhs(Km, A, F, S)

    cur = H.copy()
    for j in range(N - 1, -1, -1):
        half = _sym(_rk4(f, cur, 0.5 * dt))  # value at t_j + dt/2
        cur = _sym(_rk4(f, half, 0.5 * dt))
        _check_finite("K", cur)
        K_half[j] = half
        K[j] = cur
    return BackwardGainTable(K=_ro(K), K_half=_ro(K_half))


def build_propagators(spec: ProblemSpec, gains: BackwardGainTable,
                      grid: TimeGrid) -> PropagatorTable:
    """Per-step transition matrices by 4th-order integration of U' = (A - S K) U."""
    A = spec.A
    S = spec.B @ spec.ginv_bt()
    N, dt = grid.N, grid.dt
    n = spec.n
    if gains.K.shape[0] != N + 1:
        raise DimensionMismatch("gain table does not match the grid")
    steps = np.empty((N, n, n))
    eye = np.eye(n)
    for j in range(N):
        A0 = A - S @ gains.K[j]
        Am = A - S @ gains.K_half[j]
        A1 = A - S @ gains.K[j + 1]
        k1 = A0 @ eye
        k2 = Am @ (eye + 0.5 * dt * k1)
        k3 = Am @ (eye + 0.5 * dt * k2)
        k4 = A1 @ (eye + dt * k3)
        steps[j] = eye + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_finite("U", steps[j])
    return PropagatorTable(steps=_ro(steps))


def propagator_band(ptable: PropagatorTable, grid: TimeGrid) -> np.ndarray:
    """band[j, i] = U(t_{j+i}, t_j) for i = 0..L, identity-padded past T.

    This is the look-ahead range the anticipating correction integrates over;
    at most L compositions are ever chained.
    """
    N, L = grid.N, grid.L
    n = ptable.n
    band = np.empty((N + 1, L + 1, n, n))
    band[:, 0] = np.eye(n)
    for i in range(1, L + 1):
        js = np.arange(0, N + 1 - i)
        band[js, i] = np.einsum("jab,jbc->jac", ptable.steps[js + i - 1], band[js, i - 1])
        if N + 1 - i <= N:
            band[N + 1 - i :, i] = np.eye(n)
    return band


def step_forward_P(case: int, P: np.ndarray, dt: float, A: np.ndarray, C: np.ndarray,
                   Q0: np.ndarray, M0: np.ndarray = None) -> np.ndarray:
    """One 4th-order step of the forward filter covariance.

    The kernel sources Q(t, 0) (and M(t, 0) in case 2) are held at their
    start-of-step values; the P-dependent terms are integrated at full order.
    Exposed as a primitive so the kernel solvers can co-advance P with the
    transported tables.
    """
    src = Q0 + Q0.T

    if case == 2:
        if M0 is None:
            raise DimensionMismatch("case 2 needs the M(t, 0) slice")

        def f(Pm):
            gain = C @ Pm + M0
            return A @ Pm + Pm @ A.T + src - (Pm @ C.T + M0.T) @ gain

    else:

        def f(Pm):
            return A @ Pm + Pm @ A.T + src - Pm @ C.T @ C @ Pm

    out = _sym(_rk4(f, P, dt))
    _check_finite("P", out)
    return out
