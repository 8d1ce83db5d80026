"""Fully digital energy-efficiency maximisation.

Dinkelbach's method turns the EE ratio into a sequence of parametric
subproblems ``max B_w sum(R_k) - rho P_total``; each one is solved by a
WMMSE block-coordinate loop whose precoder step has a closed form plus a
bisection on the power-budget multiplier.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .metrics import rate_upper_bound
from .model import ChannelState, SystemConfig, noise_power, total_power

log = logging.getLogger(__name__)

LN2 = math.log(2.0)


class SolverError(RuntimeError):
    """A numerical routine could not produce a valid iterate."""


@dataclass
class WmmseState:
    u: np.ndarray
    omega: np.ndarray
    b: np.ndarray
    multiplier: float = 0.0
    iterations: int = 0
    converged: bool = False
    objective_trace: list = field(default_factory=list)


@dataclass
class DinkelbachTrace:
    rho: list = field(default_factory=list)
    f_value: list = field(default_factory=list)
    radiated_power: list = field(default_factory=list)
    sum_rate: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    final_ee: float = 0.0
    inner_states: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "rho", "f_value", "radiated_power_w", "sum_rate_bit_per_hz"])
            for n, row in enumerate(zip(self.rho, self.f_value, self.radiated_power, self.sum_rate)):
                w.writerow([n, *(repr(float(x)) for x in row)])


def matched_filter_init(ch: ChannelState, power_budget: float) -> np.ndarray:
    """Columns ``sqrt(P/K) v_k``, each carrying an equal share of the budget."""
    return np.sqrt(power_budget / ch.k_users) * ch.v


def _gains(b, ch):
    # |v_k^H b_i|^2 gamma_k, rows indexed by user k
    return np.abs(ch.v.conj().T @ b) ** 2 * ch.gamma[:, None]


def mse(u: np.ndarray, b: np.ndarray, ch: ChannelState, n0: float) -> np.ndarray:
    """Per-user mean-square error of the linear receiver ``u_k``."""
    proj = ch.v.conj().T @ b
    direct = np.sqrt(ch.gamma) * np.diag(proj)
    g = _gains(b, ch)
    interf = g.sum(axis=1) - np.diag(g)
    au2 = np.abs(u) ** 2
    return np.abs(u * direct - 1.0) ** 2 + au2 * interf + n0 * au2


def wmmse_objective(u, omega, b, ch: ChannelState, cfg: SystemConfig, rho: float, p_static: float = 0.0) -> float:
    """``B_w sum(omega e - ln omega) + rho P_total`` (natural-log units)."""
    e = mse(u, b, ch, noise_power(cfg))
    return float(cfg.bandwidth_hz * np.sum(omega * e - np.log(omega))
                 + rho * total_power(b, cfg.xi, p_static))


def wmmse_update_u(b: np.ndarray, ch: ChannelState, n0: float) -> np.ndarray:
    """MMSE receiver for the error ``|u d - 1|^2 + ...`` used in :func:`mse`.

    The minimiser carries the conjugate of the direct gain ``d``; along the
    matched-filter path ``d`` stays real and the conjugate is invisible.
    """
    direct = np.sqrt(ch.gamma) * np.diag(ch.v.conj().T @ b)
    return direct.conj() / (_gains(b, ch).sum(axis=1) + n0)


def wmmse_update_omega(u: np.ndarray, b: np.ndarray, ch: ChannelState, n0: float) -> np.ndarray:
    e = mse(u, b, ch, n0)
    if np.any(e <= 0):
        raise SolverError("non-positive MSE; noise power must be positive")
    return 1.0 / e


def _power_curve(coef2, eig, mu):
    return float(np.sum(coef2 / (eig + mu) ** 2))


def wmmse_update_b(u: np.ndarray, omega: np.ndarray, ch: ChannelState, cfg: SystemConfig,
                   rho: float, *, rtol: float = 1e-8, max_doublings: int = 60,
                   return_multiplier: bool = False):
    """Closed-form precoder for fixed receivers and weights.

    Solves ``(B_w S + (rho xi + a) I) b_k = B_w omega_k sqrt(gamma_k) u_k^* v_k``
    with ``S = sum_l omega_l |u_l|^2 gamma_l v_l v_l^H``. The multiplier
    ``a`` is zero when that already meets the budget, otherwise it is found
    by bisection so the budget holds with equality.

    A single eigendecomposition of ``S`` serves every right-hand side and
    every trial value of ``a``.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    bw = cfg.bandwidth_hz
    P = cfg.power_budget_w
    # every b_k lies in span{v_l}; work in that K-dimensional basis
    q_v, r_v = ch.span_basis
    s = omega * np.abs(u) ** 2 * ch.gamma
    eig, y = np.linalg.eigh((r_v * s) @ r_v.conj().T)
    eig = np.clip(eig, 0.0, None)
    Q = q_v @ y
    coef = y.conj().T @ (r_v * (omega * np.sqrt(ch.gamma) * u.conj()))
    coef2 = np.sum(np.abs(coef) ** 2, axis=1)

    # scaled shift mu = (rho xi + a) / B_w
    mu0 = rho * cfg.xi / bw
    tiny = 1e-12 * max(eig.max(initial=0.0), 1e-300)

    def solve(mu):
        denom = eig + mu
        if mu > 0:
            inv = 1.0 / denom
        else:
            inv = np.where(denom > tiny, 1.0 / np.where(denom > tiny, denom, 1.0), 0.0)
        return Q @ (coef * inv[:, None])

    def power(mu):
        if mu > 0:
            return _power_curve(coef2, eig, mu)
        keep = eig > tiny
        return _power_curve(coef2[keep], eig[keep], 0.0)

    a = 0.0
    if power(mu0) > P * (1.0 + rtol):
        lo, hi = 0.0, 1.0
        for _ in range(max_doublings):
            if power(mu0 + hi / bw) < P:
                break
            lo, hi = hi, 2.0 * hi
        else:
            raise SolverError("could not bracket the power-budget multiplier")
        # bisect to float resolution; the feasible end is kept
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if power(mu0 + mid / bw) > P:
                lo = mid
            else:
                hi = mid
        a = hi
    b = solve(mu0 + a / bw)
    if return_multiplier:
        return b, a
    return b


def wmmse_solve(ch: ChannelState, cfg: SystemConfig, rho: float, init_b: np.ndarray,
                eps2: float = 1e-10, max_iter: int = 1000, p_static: float = 0.0,
                track: bool = False) -> WmmseState:
    """Block-coordinate descent on the weighted-MSE reformulation.

    ``rho`` is in natural-log units (multiply a bit-based Dinkelbach
    parameter by ln 2). With ``track`` the objective is recorded after every
    block update.
    """
    n0 = noise_power(cfg)
    b = init_b
    omega_prev = None
    state = WmmseState(u=np.zeros(ch.k_users, complex), omega=np.ones(ch.k_users), b=b)
    for it in range(1, max_iter + 1):
        u = wmmse_update_u(b, ch, n0)
        if track:
            state.objective_trace.append(wmmse_objective(u, state.omega, b, ch, cfg, rho, p_static))
        omega = wmmse_update_omega(u, b, ch, n0)
        if track:
            state.objective_trace.append(wmmse_objective(u, omega, b, ch, cfg, rho, p_static))
        b, a = wmmse_update_b(u, omega, ch, cfg, rho, return_multiplier=True)
        if track:
            state.objective_trace.append(wmmse_objective(u, omega, b, ch, cfg, rho, p_static))
        state.u, state.omega, state.b, state.multiplier, state.iterations = u, omega, b, a, it
        if omega_prev is not None and abs(np.sum(np.log(omega)) - np.sum(np.log(omega_prev))) < eps2:
            state.converged = True
            break
        omega_prev = omega
    if not state.converged:
        log.warning("WMMSE hit the iteration cap (%d) before convergence", max_iter)
    return state


def default_eps1(cfg: SystemConfig) -> float:
    return 1e-3 * cfg.bandwidth_hz / 1e6


def dinkelbach_solve(ch: ChannelState, cfg: SystemConfig, p_static: float,
                     eps1: float | None = None, eps2: float = 1e-10,
                     max_outer: int = 50, max_inner: int = 1000,
                     track: bool = False):
    """Maximise bounded-rate EE over the digital precoder.

    The first subproblem uses ``rho = 0`` from the matched-filter start;
    later subproblems are warm-started from the previous precoder, which
    keeps every ``F(rho_n) >= 0`` and hence ``rho_n`` non-decreasing.

    Returns
    -------
    b : ndarray (N_t, K)
    trace : DinkelbachTrace
    """
    if eps1 is None:
        eps1 = default_eps1(cfg)
    n0 = noise_power(cfg)
    bw = cfg.bandwidth_hz
    b = matched_filter_init(ch, cfg.power_budget_w)
    rho = 0.0
    trace = DinkelbachTrace()
    for n in range(max_outer):
        state = wmmse_solve(ch, cfg, rho * LN2, b, eps2=eps2, max_iter=max_inner,
                            p_static=p_static, track=track)
        b = state.b
        sum_rate = float(rate_upper_bound(b, ch, n0).sum())
        p_tot = total_power(b, cfg.xi, p_static)
        f = bw * sum_rate - rho * p_tot
        trace.rho.append(rho)
        trace.f_value.append(f)
        trace.radiated_power.append(float(np.sum(np.abs(b) ** 2)))
        trace.sum_rate.append(sum_rate)
        trace.inner_iterations.append(state.iterations)
        if track:
            trace.inner_states.append(state)
        trace.iterations = n + 1
        trace.final_ee = bw * sum_rate / p_tot
        if f <= eps1:
            trace.converged = True
            break
        rho = bw * sum_rate / p_tot
    if not trace.converged:
        log.warning("Dinkelbach hit the outer iteration cap (%d)", max_outer)
    return b, trace


def kkt_stationarity_residual(b, u, omega, ch: ChannelState, cfg: SystemConfig, rho: float, a: float) -> float:
    """Norm of the Lagrangian gradient of the precoder subproblem at ``b``."""
    s = omega * np.abs(u) ** 2 * ch.gamma
    S = (ch.v * s) @ ch.v.conj().T
    rhs = ch.v * (omega * np.sqrt(ch.gamma) * u.conj())
    grad = cfg.bandwidth_hz * (S @ b - rhs) + (rho * cfg.xi + a) * b
    return float(np.linalg.norm(grad))
