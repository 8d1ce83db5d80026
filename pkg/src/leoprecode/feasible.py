"""Phase-shifter feasible sets, their convex hulls and the associated projections.

Continuous phase shifters (CPS) allow any unit-modulus entry; discrete
ones (DPS) with ``bits`` of resolution take the ``L = 2**bits`` points
``exp(j(2 pi m / L + pi / L))``. The convex hull is the unit disc for CPS
and the regular L-gon spanned by the constellation for DPS.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Architecture

_ZERO_TOL = 1e-12
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class PhaseShifterSpec:
    architecture: Architecture = Architecture.FULLY_CONNECTED
    bits: int | None = None  # None means continuous

    def __post_init__(self):
        object.__setattr__(self, "architecture", Architecture(self.architecture))
        if self.architecture == Architecture.FULLY_DIGITAL:
            raise ValueError("phase shifters only exist in hybrid architectures")
        if self.bits is not None and self.bits < 1:
            raise ValueError("bits must be >= 1")

    @classmethod
    def from_resolution(cls, architecture, resolution) -> "PhaseShifterSpec":
        bits = None if resolution is None or np.isinf(float(resolution)) else int(resolution)
        return cls(Architecture(architecture), bits)

    @property
    def continuous(self) -> bool:
        return self.bits is None

    @property
    def levels(self) -> int | None:
        return None if self.bits is None else 2**self.bits

    @property
    def resolution(self) -> float:
        return np.inf if self.bits is None else float(self.bits)

    @property
    def partial(self) -> bool:
        return self.architecture == Architecture.PARTIALLY_CONNECTED

    def constellation(self) -> np.ndarray:
        L = self.levels
        return np.exp(1j * (2 * np.pi * np.arange(L) / L + np.pi / L))


@dataclass(frozen=True)
class AnalogPrecoder:
    v: np.ndarray
    spec: PhaseShifterSpec

    def is_feasible(self, atol: float = 1e-9) -> bool:
        v = self.v
        mask = support_mask(v.shape[0], v.shape[1], self.spec)
        on = v[mask]
        if not np.allclose(np.abs(on), 1.0, atol=atol):
            return False
        if np.any(v[~mask] != 0):
            return False
        if not self.spec.continuous:
            pts = self.spec.constellation()
            if np.abs(on[:, None] - pts[None, :]).min(axis=1).max(initial=0.0) > atol:
                return False
        if self.spec.partial:
            m = v.shape[1]
            gram = v.conj().T @ v
            if not np.allclose(gram, v.shape[0] / m * np.eye(m), atol=atol):
                return False
        return True


def support_mask(n_t: int, m_rf: int, spec: PhaseShifterSpec) -> np.ndarray:
    """Boolean N_t x M_t pattern of connected (antenna, RF chain) pairs."""
    if not spec.partial:
        return np.ones((n_t, m_rf), dtype=bool)
    if n_t % m_rf:
        raise ValueError(f"M_t={m_rf} must divide N_t={n_t}")
    sub = n_t // m_rf
    return np.arange(n_t)[:, None] // sub == np.arange(m_rf)[None, :]


def stack_blocks(v: np.ndarray) -> np.ndarray:
    """Stacked subarray vector ``r = [p_1; ...; p_M]`` of a block-diagonal V."""
    n_t, m = v.shape
    sub = n_t // m
    return np.concatenate([v[i * sub:(i + 1) * sub, i] for i in range(m)])


def assemble_blockdiag(r: np.ndarray, m_rf: int) -> np.ndarray:
    n_t = r.shape[0]
    sub = n_t // m_rf
    v = np.zeros((n_t, m_rf), dtype=complex)
    for i in range(m_rf):
        v[i * sub:(i + 1) * sub, i] = r[i * sub:(i + 1) * sub]
    return v


def project_hull_cps(v):
    """Radial projection onto the closed unit disc."""
    v = np.asarray(v, dtype=complex)
    mag = np.abs(v)
    return v / np.maximum(mag, 1.0)


def project_hull_dps(v, L: int):
    """Euclidean projection onto the L-gon whose vertices are the DPS points.

    The angular sector of ``v`` selects the facing edge; after rotating that
    edge to the vertical line ``Re = cos(pi/L)`` the projection is a box clamp.
    """
    if L < 2:
        raise ValueError("L must be >= 2")
    v = np.asarray(v, dtype=complex)
    step = 2 * np.pi / L
    m = np.floor((np.angle(v) + np.pi / L) / step)
    rot = np.exp(1j * step * m)
    vt = v * rot.conj()
    re = np.clip(vt.real, 0.0, np.cos(np.pi / L))
    im = np.clip(vt.imag, -np.sin(np.pi / L), np.sin(np.pi / L))
    return rot * (re + 1j * im)


def project_hull_scalar(v, spec: PhaseShifterSpec):
    if spec.continuous:
        return project_hull_cps(v)
    return project_hull_dps(v, spec.levels)


def project_hull_matrix(v: np.ndarray, spec: PhaseShifterSpec) -> np.ndarray:
    """Entrywise hull projection; entries off the partial-connection support become 0."""
    out = project_hull_scalar(v, spec)
    if spec.partial:
        out = np.where(support_mask(*v.shape, spec), out, 0.0)
    return out


def nearest_constellation_index(v, L: int) -> np.ndarray:
    """Index m of the closest DPS point; equidistant pairs resolve to the smaller m."""
    v = np.asarray(v, dtype=complex)
    step = 2 * np.pi / L
    t = np.mod((np.angle(v) - np.pi / L) / step, L)
    lo = np.floor(t)
    frac = t - lo
    lo = lo.astype(int) % L
    hi = (lo + 1) % L
    pick = np.where(frac < 0.5, lo, hi)
    tie = np.abs(frac - 0.5) <= _TIE_TOL
    return np.where(tie, np.minimum(lo, hi), pick)


def round_to_feasible(v: np.ndarray, spec: PhaseShifterSpec) -> AnalogPrecoder:
    """Map every supported entry to the nearest feasible phase-shifter value."""
    v = np.asarray(v, dtype=complex)
    if spec.continuous:
        mag = np.abs(v)
        out = np.where(mag < _ZERO_TOL, 1.0 + 0j, v / np.where(mag < _ZERO_TOL, 1.0, mag))
    else:
        out = spec.constellation()[nearest_constellation_index(v, spec.levels)]
    if spec.partial:
        out = np.where(support_mask(*v.shape, spec), out, 0.0)
    return AnalogPrecoder(out.astype(complex), spec)


def _ridge_inverse(g: np.ndarray) -> np.ndarray:
    m = g.shape[0]
    if np.linalg.cond(g) > 1e12:
        g = g + 1e-10 * np.trace(g).real / m * np.eye(m)
    return np.linalg.inv(g)


def npp_analog_update(b_target: np.ndarray, w: np.ndarray, spec: PhaseShifterSpec) -> AnalogPrecoder:
    """Nearest-point-projection baseline.

    Solves the unconstrained least-squares problem for V over its support
    (the full matrix, or one entry per antenna row for the partially
    connected array) and rounds every entry to the feasible set.
    """
    n_t, m = b_target.shape[0], w.shape[0]
    if spec.partial:
        mask = support_mask(n_t, m, spec)
        col = np.argmax(mask, axis=1)
        wn = np.sum(np.abs(w) ** 2, axis=1)
        wn = np.where(wn > 0, wn, 1.0)
        vals = np.einsum("ik,ik->i", b_target, w[col].conj()) / wn[col]
        v_ls = np.zeros((n_t, m), dtype=complex)
        v_ls[np.arange(n_t), col] = vals
    else:
        v_ls = b_target @ w.conj().T @ _ridge_inverse(w @ w.conj().T)
    return round_to_feasible(v_ls, spec)
