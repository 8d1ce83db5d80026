"""SINR, ergodic-rate upper bound, Monte Carlo rate estimate and energy efficiency.

Rates are in bits (log base 2). ``b`` is always the N_t x K matrix whose
columns are the per-user precoders.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .model import ChannelState, SystemConfig, noise_power, sample_channel_gain, total_power


@dataclass(frozen=True)
class RateReport:
    per_user_bits_per_sec: list
    sum_bits_per_sec: float
    ee_bits_per_joule: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "RateReport":
        return cls(**json.loads(text))


def is_feasible(b: np.ndarray, power_budget: float, rtol: float = 1e-8) -> bool:
    return float(np.sum(np.abs(b) ** 2)) <= power_budget * (1.0 + rtol)


def instantaneous_sinr(b: np.ndarray, h_k: np.ndarray, k: int, n0: float) -> float:
    gains = np.abs(b.conj().T @ h_k) ** 2
    signal = gains[k]
    interference = gains.sum() - signal
    return float(signal / (interference + n0))


def directional_gains(b: np.ndarray, ch: ChannelState) -> np.ndarray:
    """Matrix ``G[k, l] = |v_k^H b_l|^2``."""
    return np.abs(ch.v.conj().T @ b) ** 2


def rate_upper_bound(b: np.ndarray, ch: ChannelState, n0: float) -> np.ndarray:
    """Per-user rate bound (bit/s/Hz) obtained by replacing |g_k|^2 with its mean."""
    g = directional_gains(b, ch) * ch.gamma[:, None]
    signal = np.diag(g)
    interference = g.sum(axis=1) - signal
    return np.log2(1.0 + signal / (interference + n0))


def monte_carlo_sum_rate(b: np.ndarray, ch: ChannelState, cfg: SystemConfig,
                         rng: np.random.Generator, n_samples: int = 10_000,
                         chunk: int = 4096) -> tuple[float, float]:
    """Estimate ``sum_k E[log2(1 + SINR_k)]`` over Rician gain draws.

    Returns
    -------
    mean, stderr : float
        Sample mean of the per-draw sum rate and its standard error.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    n0 = noise_power(cfg)
    dg = directional_gains(b, ch)
    sig = np.diag(dg)
    intf = dg.sum(axis=1) - sig
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        g2 = np.abs(sample_channel_gain(rng, cfg.rician_kappa, ch.gamma, size=m)) ** 2
        s = np.log2(1.0 + g2 * sig / (g2 * intf + n0)).sum(axis=1)
        total += s.sum()
        total_sq += (s**2).sum()
        done += m
    mean = total / n_samples
    if n_samples == 1:
        return float(mean), 0.0
    var = max(total_sq / n_samples - mean**2, 0.0) * n_samples / (n_samples - 1)
    return float(mean), float(np.sqrt(var / n_samples))


def energy_efficiency(b: np.ndarray, ch: ChannelState, cfg: SystemConfig, p_static: float) -> float:
    """Bandwidth times bounded sum rate over total consumed power (bit/J)."""
    rates = rate_upper_bound(b, ch, noise_power(cfg))
    return float(cfg.bandwidth_hz * rates.sum() / total_power(b, cfg.xi, p_static))


def rate_report(b: np.ndarray, ch: ChannelState, cfg: SystemConfig, p_static: float) -> RateReport:
    per_user = cfg.bandwidth_hz * rate_upper_bound(b, ch, noise_power(cfg))
    s = float(per_user.sum())
    return RateReport(per_user_bits_per_sec=[float(x) for x in per_user],
                      sum_bits_per_sec=s,
                      ee_bits_per_joule=s / total_power(b, cfg.xi, p_static))
