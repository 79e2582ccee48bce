"""Fisher information, CRLB and position error bound.

Parameter order is fixed to ``(|h|, angle(h), doppler, delay, aoa)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .channel import RxGrid, mean_signal
from .core import SceneGeometry, SystemConfig, position_jacobian
from .waveform import SubcarrierPlan, SymbolGrid

PARAM_NAMES = ("amp", "phase", "doppler", "delay", "aoa")
DELAY, AOA = 3, 4


class SingularFisherError(np.linalg.LinAlgError):
    def __init__(self, cond: float):
        super().__init__(f"Fisher information is near-singular (condition number {cond:.3g})")
        self.cond = cond


@dataclass(frozen=True)
class FimParams:
    amp: float
    phase: float
    doppler: float
    delay: float
    aoa: float
    plan: SubcarrierPlan
    symbols: SymbolGrid
    noise_var: float
    symbol_duration: float
    n_rx: int
    amplitude: float = 1.0

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.amp, self.phase, self.doppler, self.delay, self.aoa])

    def with_vector(self, theta) -> "FimParams":
        amp, phase, doppler, delay, aoa = (float(v) for v in theta)
        return FimParams(amp, phase, doppler, delay, aoa, self.plan, self.symbols,
                         self.noise_var, self.symbol_duration, self.n_rx, self.amplitude)

    @classmethod
    def from_config(cls, cfg: SystemConfig, plan: SubcarrierPlan, delay: float, aoa: float,
                    snr_db: float, doppler: float = 0.0,
                    symbols: SymbolGrid | None = None) -> "FimParams":
        """SNR-normalized parameters (``A = |h| = 1``, noise ``10^(-snr/10)``).

        For constant-modulus symbols the information does not depend on the
        symbol values, so an all-ones grid is used by default.
        """
        if symbols is None:
            symbols = SymbolGrid(np.ones((plan.n_active, cfg.symbols), dtype=complex))
        return cls(1.0, 0.0, doppler, delay, aoa, plan, symbols, 10 ** (-snr_db / 10),
                   cfg.symbol_duration, cfg.n_rx)

    @classmethod
    def from_grid(cls, rx: RxGrid, delay: float, aoa: float, gain: complex,
                  doppler: float = 0.0) -> "FimParams":
        return cls(abs(gain), float(np.angle(gain)), doppler, delay, aoa, rx.plan, rx.x,
                   rx.noise_var, rx.symbol_duration, rx.n_rx, rx.amplitude)


def _mean(params: FimParams) -> np.ndarray:
    return mean_signal(params.symbols.values, params.plan.offsets, params.symbol_duration,
                       params.n_rx, params.amplitude, params.amp * np.exp(1j * params.phase),
                       params.delay, params.doppler, params.aoa)


def signal_model(params: FimParams, n: int, k: int, m: int) -> complex:
    """Single element of the noiseless received grid."""
    n_rx, (k_act, m_sym) = params.n_rx, params.symbols.shape
    if not (0 <= n < n_rx and 0 <= k < k_act and 0 <= m < m_sym):
        raise IndexError(f"index ({n}, {k}, {m}) out of range")
    pos = n - (n_rx - 1) / 2
    phase = 2 * np.pi * (m * params.symbol_duration * params.doppler
                         - params.plan.offsets[k] * params.delay)
    h = params.amp * np.exp(1j * params.phase)
    return complex(params.amplitude * h * np.exp(1j * phase)
                   * np.exp(1j * np.pi * pos * np.sin(params.aoa)) * params.symbols.values[k, m])


def signal_partials(params: FimParams) -> np.ndarray:
    """Analytic derivatives of the mean grid, shape ``(5, N_r, K', M)``."""
    unit = _mean(params.with_vector([1.0, *params.vector[1:]]))
    s = params.amp * unit
    m = np.arange(params.symbols.shape[1])
    pos = np.arange(params.n_rx) - (params.n_rx - 1) / 2
    return np.stack([
        unit,
        1j * s,
        2j * np.pi * params.symbol_duration * m[None, None, :] * s,
        -2j * np.pi * params.plan.offsets[None, :, None] * s,
        1j * np.pi * np.cos(params.aoa) * pos[:, None, None] * s,
    ])


def fim(params: FimParams) -> np.ndarray:
    """5x5 real Fisher information of the parameter vector."""
    if params.noise_var <= 0:
        raise ValueError("noise_var must be positive")
    d = signal_partials(params).reshape(5, -1)
    info = 2.0 / params.noise_var * np.real(d.conj() @ d.T)
    return (info + info.T) / 2


def _inverse(info: np.ndarray, max_cond: float = 1e12) -> np.ndarray:
    # equilibrate first: raw entries span ~40 orders of magnitude between delay and angle
    scale = np.sqrt(np.diag(info))
    if np.any(scale <= 0):
        raise SingularFisherError(np.inf)
    normed = info / np.outer(scale, scale)
    cond = np.linalg.cond(normed)
    if not np.isfinite(cond) or cond > max_cond:
        raise SingularFisherError(cond)
    inv = linalg.solve(normed, np.eye(len(info)), assume_a="pos")
    return inv / np.outer(scale, scale)


def crlb(params: FimParams) -> np.ndarray:
    """Variance bounds for the five parameters."""
    return np.diag(_inverse(fim(params))).copy()


def delay_aoa_covariance(params: FimParams) -> np.ndarray:
    return _inverse(fim(params))[DELAY:AOA + 1, DELAY:AOA + 1]


def peb(params: FimParams, scene: SceneGeometry) -> float:
    """Position error bound in metres."""
    jac = position_jacobian(params.delay, params.aoa, scene)
    if abs(np.linalg.det(jac)) < 1e-300:
        raise np.linalg.LinAlgError("singular position Jacobian (target on the baseline)")
    cov = delay_aoa_covariance(params)
    return float(np.sqrt(np.trace(jac @ cov @ jac.T)))
