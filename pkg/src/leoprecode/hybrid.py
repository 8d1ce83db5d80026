"""Hybrid analog/digital factorisation ``B ~ V W`` under phase-shifter constraints.

The analog step relaxes the phase-shifter set to its convex hull and
subtracts a growing penalty ``eta ||V||^2`` so that minimisers are pushed
to hull vertices. Each majorisation step is solved inexactly with one
accelerated projected-gradient move.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .model import Architecture
from .feasible import (AnalogPrecoder, PhaseShifterSpec, assemble_blockdiag, npp_analog_update,
                       project_hull_matrix, project_hull_scalar, round_to_feasible, stack_blocks,
                       support_mask)


@dataclass(frozen=True)
class MmSchedule:
    eta0: float = 0.01
    growth: float = 5.0
    inner_budget: int = 400
    inner_tol: float = 1e-5
    eta_upper: float = 200.0

    def __post_init__(self):
        if not (self.eta0 > 0 and self.growth > 1 and self.inner_budget >= 1
                and self.eta_upper > self.eta0 and self.inner_tol > 0):
            raise ValueError(f"invalid MM schedule {self}")


@dataclass
class HybridPrecoder:
    analog: AnalogPrecoder
    digital: np.ndarray
    residual_trace: list = field(default_factory=list)
    rounding_perturbation: float = 0.0

    @property
    def v(self) -> np.ndarray:
        return self.analog.v

    @property
    def w(self) -> np.ndarray:
        return self.digital

    @property
    def product(self) -> np.ndarray:
        return self.analog.v @ self.digital

    def residual(self, b_target: np.ndarray) -> float:
        return float(np.linalg.norm(b_target - self.product))


def write_trace_csv(rows: list, path) -> None:
    """Dump per-iteration MM records collected through the ``trace`` argument."""
    cols = ["outer_iter", "inner_iter", "eta", "beta", "residual", "objective"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in rows:
            w.writerow({c: row.get(c, "") for c in cols})


def apg_weights(n: int) -> list:
    """Extrapolation weights ``zeta_0 .. zeta_{n-1}`` of the alpha recursion."""
    alpha_prev, out = 0.0, []
    for _ in range(n):
        alpha = (1.0 + np.sqrt(1.0 + 4.0 * alpha_prev**2)) / 2.0
        out.append((alpha_prev - 1.0) / alpha)
        alpha_prev = alpha
    return out


def _inner(x, y):
    return float(np.real(np.vdot(x, y)))


def _inexact_mm(x0, value_grad, project, objective_rounded, lipschitz, sched: MmSchedule,
                *, trace=None, outer_iter=0, on_iterate=None):
    """Penalised inexact MM with one APG step per majorisation.

    Minimises ``f(x) - eta ||x||^2`` over the hull, escalating ``eta``
    every ``inner_budget`` steps or when consecutive iterates are closer
    than ``inner_tol``, until ``eta`` exceeds ``eta_upper``. The schedule's
    penalties are relative: the applied penalty is ``eta * lipschitz / 2``,
    i.e. measured against the curvature of ``f``.

    ``value_grad(x)`` returns ``(f(x), grad f(x))``. ``objective_rounded``
    maps an iterate to ``(rounded_x, objective)``; it is evaluated at every
    penalty escalation and the best rounded point is returned together with
    the final hull iterate.
    """
    scale = max(lipschitz / 2.0, 1e-300)
    eta_rel = sched.eta0
    eta = eta_rel * scale
    x_prev = x = project(x0)
    beta = max(lipschitz, 1e-12 * scale)
    beta_floor = 1e-6 * scale
    alpha_prev = 0.0
    streak = 0
    since_escalation = 0
    n = 0
    # the rounded start is a candidate too; from the LS start it is the NPP point
    best_x, best_obj = objective_rounded(x0)
    rx, obj = objective_rounded(x)
    if obj < best_obj:
        best_x, best_obj = rx, obj
    betas = []
    fx, gx = value_grad(x)
    nx = _inner(x, x)
    while eta_rel <= sched.eta_upper:
        alpha = (1.0 + np.sqrt(1.0 + 4.0 * alpha_prev**2)) / 2.0
        zeta = (alpha_prev - 1.0) / alpha
        if zeta != 0.0:
            z = x + zeta * (x - x_prev)
            fz, gz = value_grad(z)
        else:
            z, fz, gz = x, fx, gx
        # the penalty is linearised at the current iterate, not at z
        g = gz - (2.0 * eta) * x
        while True:
            x_new = project(z - g / beta)
            d = x_new - z
            f_new, g_new = value_grad(x_new)
            if f_new <= fz + _inner(gz, d) + 0.5 * beta * _inner(d, d) + 1e-12 * abs(fz):
                break
            beta *= 2.0
            streak = 0
        betas.append(beta)
        streak += 1
        if streak >= 5:
            beta = max(beta / 2.0, beta_floor)
            streak = 0
        n_new = _inner(x_new, x_new)
        # momentum restart when the penalised objective goes up
        restart = f_new - eta * n_new > fx - eta * nx and zeta != 0.0
        if restart:
            alpha_prev = 0.0
            x_new = project(x - (gx - 2.0 * eta * x) / max(beta, lipschitz))
            f_new, g_new = value_grad(x_new)
            n_new = _inner(x_new, x_new)
        else:
            alpha_prev = alpha
        step = np.linalg.norm(x_new - x)
        x_prev = x_new if restart else x
        x, fx, gx, nx = x_new, f_new, g_new, n_new
        n += 1
        since_escalation += 1
        if on_iterate is not None:
            on_iterate(x, eta, beta)
        if trace is not None:
            trace.append(dict(outer_iter=outer_iter, inner_iter=n, eta=eta, beta=beta,
                              residual=fx, objective=fx - eta * nx))
        if since_escalation >= sched.inner_budget or step < sched.inner_tol:
            rx, obj = objective_rounded(x)
            if obj < best_obj:
                best_x, best_obj = rx, obj
            eta_rel *= sched.growth
            eta = eta_rel * scale
            since_escalation = 0
            alpha_prev = 0.0
            x_prev = x
    return x, best_x, best_obj, betas


def ls_digital_step(b_target: np.ndarray, v) -> np.ndarray:
    """Least-squares digital precoder ``(V^H V)^{-1} V^H B``."""
    v = v.v if isinstance(v, AnalogPrecoder) else v
    g = v.conj().T @ v
    m = g.shape[0]
    if np.linalg.cond(g) > 1e12:
        g = g + 1e-10 * np.trace(g).real / m * np.eye(m)
    return np.linalg.solve(g, v.conj().T @ b_target)


def _fro2(x):
    return float(np.real(np.vdot(x, x)))


def mm_analog_fully(b_target: np.ndarray, w: np.ndarray, spec: PhaseShifterSpec,
                    sched: MmSchedule | None = None, v0: np.ndarray | None = None,
                    *, trace=None, outer_iter=0, on_iterate=None, stats=None) -> AnalogPrecoder:
    """Analog step of the fully connected factorisation for a fixed W.

    Starts from ``v0`` (default: hull projection of the unconstrained
    least-squares V) and returns the best rounded feasible point visited.
    """
    sched = sched or MmSchedule()
    wwh = w @ w.conj().T
    bwh = b_target @ w.conj().T
    b2 = _fro2(b_target)
    norm_wwh = float(np.linalg.norm(wwh, 2))

    def smooth(v):
        return b2 - 2.0 * _inner(v, bwh) + _inner(v, v @ wwh)

    def value_grad(v):
        vg = v @ wwh
        return b2 + _inner(v, vg - 2.0 * bwh), 2.0 * (vg - bwh)

    def proj(v):
        return project_hull_matrix(v, spec)

    def rounded(v):
        r = round_to_feasible(v, spec)
        return r, smooth(r.v)

    if v0 is None:
        m = w.shape[0]
        g = wwh
        if np.linalg.cond(g) > 1e12:
            g = g + 1e-10 * np.trace(g).real / m * np.eye(m)
        v0 = np.linalg.solve(g.T, bwh.T).T
    x, best, best_obj, betas = _inexact_mm(v0, value_grad, proj, rounded, 2.0 * norm_wwh, sched,
                                           trace=trace, outer_iter=outer_iter, on_iterate=on_iterate)
    if stats is not None:
        stats["betas"] = betas
        stats["lipschitz_bound"] = norm_wwh
        stats["final_hull_iterate"] = x
        stats["rounding_perturbation"] = float(np.linalg.norm(round_to_feasible(x, spec).v - x))
    return best


def initial_analog(b_target: np.ndarray, m_rf: int, spec: PhaseShifterSpec) -> AnalogPrecoder:
    """Phases of ``B``'s columns, padded with phases of its left null-space basis.

    Precoders built from steering vectors are nearly constant-modulus, so
    their phases already make a good analog starting point.
    """
    k = b_target.shape[1]
    cols = b_target[:, :m_rf]
    if m_rf > k:
        u, _, _ = np.linalg.svd(b_target, full_matrices=True)
        cols = np.hstack([cols, u[:, k:m_rf]])
    return round_to_feasible(np.exp(1j * np.angle(cols)), spec)


def aim_adp(b_target: np.ndarray, spec: PhaseShifterSpec, m_rf: int, sched: MmSchedule | None = None,
            outer_tol: float = 1e-4, outer_cap: int = 50, v0: AnalogPrecoder | None = None,
            *, trace=None, on_iterate=None) -> HybridPrecoder:
    """Alternating LS digital / inexact-MM analog factorisation (fully connected)."""
    if spec.partial:
        raise ValueError("aim_adp handles the fully connected architecture")
    sched = sched or MmSchedule()
    analog = v0 if v0 is not None else initial_analog(b_target, m_rf, spec)
    w = ls_digital_step(b_target, analog)
    b_norm = np.linalg.norm(b_target)
    res = np.linalg.norm(b_target - analog.v @ w)
    residuals = [float(res)]
    stats = {}
    for t in range(outer_cap):
        cand = mm_analog_fully(b_target, w, spec, sched, v0=analog.v, trace=trace,
                               outer_iter=t, on_iterate=on_iterate, stats=stats)
        # keep the incumbent when the rounded candidate is worse for this W
        if np.linalg.norm(b_target - cand.v @ w) <= np.linalg.norm(b_target - analog.v @ w):
            analog = cand
        w = ls_digital_step(b_target, analog)
        new = float(np.linalg.norm(b_target - analog.v @ w))
        residuals.append(new)
        if abs(res - new) <= outer_tol * b_norm:
            break
        res = new
    w = _normalize(b_target, analog.v, w)
    return HybridPrecoder(analog, w, residuals, stats.get("rounding_perturbation", 0.0))


def _normalize(b_target, v, w):
    prod = np.linalg.norm(v @ w)
    return w if prod == 0 else w * (np.linalg.norm(b_target) / prod)


def vp_digital_partial(b_target: np.ndarray, v) -> np.ndarray:
    """Closed-form digital precoder for a block-diagonal V with the norm constraint."""
    v = v.v if isinstance(v, AnalogPrecoder) else v
    n_t, m = v.shape
    beta = _fro2(b_target) * m / n_t
    vb = v.conj().T @ b_target
    nrm = np.linalg.norm(vb)
    if nrm == 0:
        raise ValueError("V^H B vanishes; the digital precoder is undefined")
    return np.sqrt(beta) * vb / nrm


def build_blockdiag_quadratic(b_target: np.ndarray, m_rf: int):
    """Return ``(A, D)`` with ``D[i]`` the i-th diagonal block of ``B B^H``."""
    n_t = b_target.shape[0]
    if n_t % m_rf:
        raise ValueError(f"M_t={m_rf} must divide N_t={n_t}")
    sub = n_t // m_rf
    c = b_target @ b_target.conj().T
    blocks = np.stack([c[i * sub:(i + 1) * sub, i * sub:(i + 1) * sub] for i in range(m_rf)])
    a = np.zeros_like(c)
    for i in range(m_rf):
        a[i * sub:(i + 1) * sub, i * sub:(i + 1) * sub] = blocks[i]
    return a, blocks


def _principal_phases(blocks: np.ndarray) -> np.ndarray:
    _, vecs = np.linalg.eigh(blocks)
    top = vecs[:, :, -1]
    return np.exp(1j * np.angle(top)).reshape(-1)


def mm_analog_partial(a_mat: np.ndarray, spec: PhaseShifterSpec, m_rf: int,
                      sched: MmSchedule | None = None, r0: np.ndarray | None = None,
                      *, trace=None, on_iterate=None, stats=None) -> AnalogPrecoder:
    """Maximise ``r^H A r`` over stacked subarray phases ``r``.

    ``r0`` defaults to the phases of each block's principal eigenvector.
    """
    sched = sched or MmSchedule()
    n_t = a_mat.shape[0]
    sub = n_t // m_rf
    elem = PhaseShifterSpec(Architecture.FULLY_CONNECTED, spec.bits)

    def smooth(r):
        return -_inner(r, a_mat @ r)

    def value_grad(r):
        ar = a_mat @ r
        return -_inner(r, ar), -2.0 * ar

    def proj(r):
        return project_hull_scalar(r, elem)

    def rounded(r):
        rr = round_to_feasible(r[:, None], elem).v[:, 0]
        return rr, smooth(rr)

    if r0 is None:
        blocks = np.stack([a_mat[i * sub:(i + 1) * sub, i * sub:(i + 1) * sub] for i in range(m_rf)])
        r0 = _principal_phases(blocks)
    lip = 2.0 * float(np.linalg.norm(a_mat, 2))
    x, best, best_obj, betas = _inexact_mm(r0, value_grad, proj, rounded, lip, sched,
                                           trace=trace, on_iterate=on_iterate)
    if stats is not None:
        stats["betas"] = betas
        stats["rounding_perturbation"] = float(np.linalg.norm(rounded(x)[0] - x))
    return AnalogPrecoder(assemble_blockdiag(best, m_rf), spec)


def avpim_adp(b_target: np.ndarray, spec: PhaseShifterSpec, m_rf: int,
              sched: MmSchedule | None = None, *, trace=None, on_iterate=None) -> HybridPrecoder:
    """Variable-projection factorisation for the partially connected array."""
    if not spec.partial:
        raise ValueError("avpim_adp handles the partially connected architecture")
    a, _ = build_blockdiag_quadratic(b_target, m_rf)
    stats = {}
    analog = mm_analog_partial(a, spec, m_rf, sched, trace=trace, on_iterate=on_iterate, stats=stats)
    w = vp_digital_partial(b_target, analog)
    w = _normalize(b_target, analog.v, w)
    res = float(np.linalg.norm(b_target - analog.v @ w))
    return HybridPrecoder(analog, w, [res], stats.get("rounding_perturbation", 0.0))


def npp_hybrid(b_target: np.ndarray, spec: PhaseShifterSpec, m_rf: int, outer_tol: float = 1e-4,
               outer_cap: int = 50, v0: AnalogPrecoder | None = None) -> HybridPrecoder:
    """Baseline: alternate the digital step with nearest-point-projected LS analog updates."""
    if v0 is not None:
        analog = v0
    elif spec.partial:
        a, blocks = build_blockdiag_quadratic(b_target, m_rf)
        analog = round_to_feasible(assemble_blockdiag(_principal_phases(blocks), m_rf), spec)
    else:
        analog = initial_analog(b_target, m_rf, spec)
    digital = vp_digital_partial if spec.partial else ls_digital_step
    w = digital(b_target, analog)
    res = float(np.linalg.norm(b_target - analog.v @ w))
    residuals = [res]
    b_norm = np.linalg.norm(b_target)
    for _ in range(outer_cap):
        analog = npp_analog_update(b_target, w, spec)
        w = digital(b_target, analog)
        new = float(np.linalg.norm(b_target - analog.v @ w))
        residuals.append(new)
        if abs(res - new) <= outer_tol * b_norm:
            break
        res = new
    w = _normalize(b_target, analog.v, w)
    return HybridPrecoder(analog, w, residuals)


def factorize(b_target: np.ndarray, spec: PhaseShifterSpec, m_rf: int, method: str = "proposed",
              sched: MmSchedule | None = None) -> HybridPrecoder:
    """Dispatch to the architecture-matched proposed solver or the NPP baseline."""
    if method == "npp":
        return npp_hybrid(b_target, spec, m_rf)
    if spec.partial:
        return avpim_adp(b_target, spec, m_rf, sched)
    return aim_adp(b_target, spec, m_rf, sched)
