"""Scenario configuration, UPA channel model, link budget and power models.

All quantities are linear scale and SI units once a config object exists;
dB and mW inputs are converted at load time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from enum import Enum

import numpy as np

SPEED_OF_LIGHT = 3e8

CONTINUOUS = math.inf


class ConfigError(ValueError):
    """Raised when a scenario violates a configuration invariant."""


class Architecture(str, Enum):
    FULLY_CONNECTED = "fully"
    PARTIALLY_CONNECTED = "partially"
    FULLY_DIGITAL = "digital"


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


def parse_resolution(value) -> float:
    """Map ``2``, ``"4"``, ``"inf"``, ``None`` ... to a resolution key.

    Continuous phase shifters are represented by ``math.inf``.
    """
    if value is None:
        return CONTINUOUS
    if isinstance(value, str):
        v = value.strip().lower()
        if v in ("inf", "infinity", "cps", "continuous", "∞"):
            return CONTINUOUS
        value = v
    res = float(value)
    if math.isinf(res):
        return CONTINUOUS
    if res != int(res) or res < 1:
        raise ConfigError(f"phase-shifter resolution must be a positive integer or inf, got {value!r}")
    return float(int(res))


@dataclass(frozen=True)
class SystemConfig:
    """Scenario constants. Defaults reproduce the reference LEO scenario.

    ``rician_kappa``, ``gain_sat`` and ``gain_ut`` are linear; use
    :meth:`from_mapping` to load ``*_db`` keys.
    """

    n_tx_x: int = 12
    n_tx_y: int = 12
    k_users: int = 9
    m_rf: int = 9
    rician_kappa: float = float(db_to_linear(18.0))
    xi: float = 2.0
    bandwidth_hz: float = 20e6
    carrier_hz: float = 2e9
    gain_sat: float = float(db_to_linear(3.0))
    gain_ut: float = 1.0
    noise_temp_k: float = 300.0
    boltzmann: float = 1.38e-23
    power_budget_w: float = 10.0
    distances_m: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.distances_m is None:
            object.__setattr__(self, "distances_m", (1.0e6,) * self.k_users)
        else:
            object.__setattr__(self, "distances_m", tuple(float(d) for d in self.distances_m))

    @property
    def n_tx(self) -> int:
        return self.n_tx_x * self.n_tx_y

    def validate(self, architecture: Architecture | None = None) -> "SystemConfig":
        """Check every invariant; raise :class:`ConfigError` on the first violation."""
        for name in ("n_tx_x", "n_tx_y", "k_users", "m_rf"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not self.k_users <= self.m_rf <= self.n_tx:
            raise ConfigError(
                f"need K <= M_t <= N_t, got K={self.k_users}, M_t={self.m_rf}, N_t={self.n_tx}")
        if architecture == Architecture.PARTIALLY_CONNECTED and self.n_tx % self.m_rf:
            raise ConfigError(f"M_t={self.m_rf} must divide N_t={self.n_tx} for the partially connected array")
        if self.rician_kappa < 0:
            raise ConfigError("rician_kappa must be nonnegative")
        if self.xi < 1:
            raise ConfigError("xi (inverse amplifier efficiency) must be >= 1")
        for name in ("bandwidth_hz", "carrier_hz", "gain_sat", "gain_ut",
                     "noise_temp_k", "boltzmann", "power_budget_w"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConfigError(f"{name} must be strictly positive, got {value!r}")
        if len(self.distances_m) != self.k_users:
            raise ConfigError(f"distances_m has {len(self.distances_m)} entries, expected K={self.k_users}")
        if any(d <= 0 for d in self.distances_m):
            raise ConfigError("all user distances must be positive")
        return self

    def with_(self, **changes) -> "SystemConfig":
        if "k_users" in changes and "distances_m" not in changes:
            d0 = self.distances_m[0] if self.distances_m else 1.0e6
            changes["distances_m"] = (d0,) * changes["k_users"]
        return replace(self, **changes)

    @classmethod
    def small(cls, **changes) -> "SystemConfig":
        """Desk-scale preset: 4x4 array, 4 users."""
        base = dict(n_tx_x=4, n_tx_y=4, k_users=4, m_rf=4)
        base.update(changes)
        return cls(**base)

    @classmethod
    def from_mapping(cls, data: dict) -> "SystemConfig":
        """Build from flat keys; ``<name>_db`` keys are converted to linear."""
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            if key.endswith("_db") and key[:-3] in known:
                kwargs[key[:-3]] = float(db_to_linear(value))
            elif key == "rician_kappa_db":
                kwargs["rician_kappa"] = float(db_to_linear(value))
            elif key == "power_budget_dbw":
                kwargs["power_budget_w"] = float(db_to_linear(value))
            elif key in known:
                kwargs[key] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class PowerModel:
    """Transmitter hardware power figures in mW (converted to W on use)."""

    p_ps_mw: dict = field(default_factory=lambda: {2.0: 12.0, 3.0: 16.0, 4.0: 20.0, CONTINUOUS: 25.0})
    p_dac_mw: float = 300.0
    p_mixer_mw: float = 19.0
    p_lpf_mw: float = 14.0
    p_bba_mw: float = 5.0
    p_lo_mw: float = 5.0
    p_bb_mw: float = 200.0

    def __post_init__(self):
        object.__setattr__(self, "p_ps_mw", {parse_resolution(k): float(v) for k, v in self.p_ps_mw.items()})

    @property
    def p_rfc_mw(self) -> float:
        return self.p_dac_mw + self.p_mixer_mw + self.p_lpf_mw + self.p_bba_mw

    def validate(self) -> "PowerModel":
        values = [self.p_dac_mw, self.p_mixer_mw, self.p_lpf_mw, self.p_bba_mw,
                  self.p_lo_mw, self.p_bb_mw, *self.p_ps_mw.values()]
        if any(v < 0 for v in values):
            raise ConfigError("power model entries must be nonnegative")
        ordered = [self.p_ps_mw[k] for k in sorted(self.p_ps_mw)]
        if any(b < a for a, b in zip(ordered, ordered[1:])):
            raise ConfigError("phase-shifter power must be nondecreasing in resolution")
        return self

    @classmethod
    def from_mapping(cls, data: dict) -> "PowerModel":
        kwargs = {}
        ps = {}
        for key, value in data.items():
            if key == "p_ps_mw" and isinstance(value, dict):
                ps.update(value)
            elif key.startswith("p_ps_") and key.endswith("_mw"):
                ps[key[len("p_ps_"):-len("_mw")]] = value
            elif key in {f.name for f in fields(cls)}:
                kwargs[key] = float(value)
        if ps:
            merged = dict(cls().p_ps_mw)
            merged.update({parse_resolution(k): float(v) for k, v in ps.items()})
            kwargs["p_ps_mw"] = merged
        return cls(**kwargs)


@dataclass(frozen=True)
class ChannelState:
    """Statistical CSI: unit-norm directions (columns of ``v``) and powers."""

    v: np.ndarray  # N_t x K
    gamma: np.ndarray  # K
    space_angles: np.ndarray | None = None  # K x 2

    @property
    def n_tx(self) -> int:
        return self.v.shape[0]

    @property
    def k_users(self) -> int:
        return self.v.shape[1]

    @cached_property
    def span_basis(self) -> tuple[np.ndarray, np.ndarray]:
        """Thin QR factors ``(Q, R)`` of the direction matrix."""
        return np.linalg.qr(self.v)

    def effective(self, g: np.ndarray) -> np.ndarray:
        """Instantaneous channels ``h_k = v_k g_k``; ``g`` has shape (..., K)."""
        return self.v * np.asarray(g)[..., None, :]


def array_response(theta_x: float, theta_y: float, n_x: int, n_y: int) -> np.ndarray:
    """UPA steering vector ``v_x(theta_x) kron v_y(theta_y)`` with unit norm."""
    ax = np.exp(-1j * np.pi * np.arange(n_x) * theta_x) / np.sqrt(n_x)
    ay = np.exp(-1j * np.pi * np.arange(n_y) * theta_y) / np.sqrt(n_y)
    return np.kron(ax, ay)


def sample_space_angles(rng: np.random.Generator, k: int) -> np.ndarray:
    """Draw K (theta_x, theta_y) pairs i.i.d. uniform on [-1, 1)."""
    return rng.uniform(-1.0, 1.0, size=(k, 2))


def sample_channel_gain(rng: np.random.Generator, kappa: float, gamma, size=None) -> np.ndarray:
    """Rician gain with ``E|g|^2 = gamma`` and K-factor ``kappa``.

    ``gamma`` may be an array (one entry per user); ``size`` is prepended
    to its shape.
    """
    gamma = np.asarray(gamma, dtype=float)
    shape = gamma.shape if size is None else tuple(np.atleast_1d(size)) + gamma.shape
    mean = np.sqrt(kappa * gamma / (2.0 * (kappa + 1.0)))
    std = np.sqrt(gamma / (2.0 * (kappa + 1.0)))
    re = mean + std * rng.standard_normal(shape)
    im = mean + std * rng.standard_normal(shape)
    return re + 1j * im


def link_budget_gamma(cfg: SystemConfig, d_k: float) -> float:
    """Average channel power for a user at distance ``d_k`` metres."""
    if d_k <= 0:
        raise ValueError(f"distance must be positive, got {d_k}")
    fspl = SPEED_OF_LIGHT / (4.0 * np.pi * cfg.carrier_hz * d_k)
    return cfg.gain_sat * cfg.gain_ut * cfg.n_tx * fspl**2


def noise_power(cfg: SystemConfig) -> float:
    return cfg.boltzmann * cfg.bandwidth_hz * cfg.noise_temp_k


def sample_channel(cfg: SystemConfig, rng: np.random.Generator) -> ChannelState:
    """Draw user angles and build the statistical CSI for one drop."""
    angles = sample_space_angles(rng, cfg.k_users)
    v = np.stack([array_response(tx, ty, cfg.n_tx_x, cfg.n_tx_y) for tx, ty in angles], axis=1)
    gamma = np.array([link_budget_gamma(cfg, d) for d in cfg.distances_m])
    return ChannelState(v=v, gamma=gamma, space_angles=angles)


def transmit_power_static(arch: Architecture, m_rf: int, resolution, pm: PowerModel, n_t: int) -> float:
    """Static transmitter consumption in Watts for the given architecture."""
    arch = Architecture(arch)
    if arch == Architecture.FULLY_DIGITAL:
        mw = n_t * pm.p_rfc_mw + pm.p_lo_mw + pm.p_bb_mw
        return mw * 1e-3
    res = parse_resolution(resolution)
    if res not in pm.p_ps_mw:
        raise KeyError(f"no phase-shifter power for resolution {resolution!r}")
    n_ps = n_t * m_rf if arch == Architecture.FULLY_CONNECTED else n_t
    mw = n_ps * pm.p_ps_mw[res] + m_rf * pm.p_rfc_mw + pm.p_lo_mw + pm.p_bb_mw
    return mw * 1e-3


def total_power(b: np.ndarray, xi: float, p_static: float) -> float:
    """Amplifier-scaled radiated power plus static consumption (W)."""
    return xi * float(np.sum(np.abs(b) ** 2)) + p_static
