"""Transmit-side artifacts: QPSK grids, subcarrier plans, sector beamformer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SPEED_OF_LIGHT, ConfigurationError, SystemConfig

QPSK = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / np.sqrt(2)


def steering_vector(n: int, angle):
    """Half-wavelength ULA response referenced to the array centre.

    Element ``i`` is ``exp(j (i - (n-1)/2) pi sin(angle))``. A sequence of
    angles returns an ``(n, len(angle))`` matrix.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    pos = np.arange(n) - (n - 1) / 2
    angle = np.asarray(angle, dtype=float)
    return np.exp(1j * np.pi * np.multiply.outer(pos, np.sin(angle)))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class SymbolGrid:
    values: np.ndarray
    modulation: str = "QPSK"

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2))


def generate_symbols(k_active: int, m_symbols: int, seed=None) -> SymbolGrid:
    """I.i.d. uniform unit-power QPSK symbols, ``k_active x m_symbols``."""
    if k_active < 1 or m_symbols < 1:
        raise ValueError("k_active and m_symbols must be >= 1")
    idx = _rng(seed).integers(0, 4, size=(k_active, m_symbols))
    return SymbolGrid(QPSK[idx])


@dataclass(frozen=True)
class SubcarrierPlan:
    """Active subcarrier selection for one sensing stage.

    ``frequency_offsets`` are absolute offsets from the carrier. The signal
    model uses ``offsets``, the same frequencies re-referenced to the first
    active subcarrier; the constant shift only rotates the channel phase.
    """

    stage: str
    indices: np.ndarray
    subcarrier_spacing: float
    effective_spacing: float
    frequency_offsets: np.ndarray

    @property
    def n_active(self) -> int:
        return len(self.indices)

    @property
    def offsets(self) -> np.ndarray:
        return self.frequency_offsets - self.frequency_offsets[0]

    @property
    def span(self) -> float:
        """Occupied bandwidth, ``K' * effective_spacing``."""
        return self.n_active * self.effective_spacing

    @property
    def unambiguous_range(self) -> float:
        return SPEED_OF_LIGHT / self.effective_spacing

    @property
    def range_resolution(self) -> float:
        return SPEED_OF_LIGHT / self.span

    @property
    def alias_period(self) -> float:
        """Delay period of the subcarrier phase pattern, in seconds."""
        return 1.0 / self.effective_spacing


def make_plan(stage: str, cfg: SystemConfig) -> SubcarrierPlan:
    K, Kp, rho, df = (cfg.total_subcarriers, cfg.active_subcarriers,
                      cfg.bandwidth_ratio, cfg.subcarrier_spacing)
    if rho * Kp > K:
        raise ConfigurationError(f"bandwidth_ratio * K' = {rho * Kp} exceeds K = {K}")
    if stage == "coarse":
        start = K // 2 - Kp // 2
        indices = np.arange(start, start + Kp)
        spacing = df
    elif stage == "fine":
        indices = np.arange(Kp) * rho
        spacing = rho * df
    else:
        raise ValueError(f"stage must be 'coarse' or 'fine', got {stage!r}")
    return SubcarrierPlan(
        stage=stage,
        indices=indices,
        subcarrier_spacing=df,
        effective_spacing=spacing,
        frequency_offsets=(indices - K // 2) * df,
    )


@dataclass(frozen=True)
class Beamformer:
    weights: np.ndarray
    sector: tuple[float, float]

    def pattern(self, angles):
        """Complex array factor ``a(angle)^H w``."""
        n = len(self.weights)
        return steering_vector(n, angles).conj().T @ self.weights


def design_sector_beamformer(n_tx: int, sector, grid_points: int | None = None,
                             edge_margin: float = 1.5) -> Beamformer:
    """Least-squares fit of the array pattern to a flat sector.

    The pattern is fitted to the sector indicator on a uniform grid over
    (-pi/2, pi/2), then the weights are scaled to unit norm. The indicator
    extends ``edge_margin / n_tx`` rad past each sector edge so that the
    roll-off falls outside the sector.
    """
    lo, hi = (float(v) for v in sector)
    if hi < lo:
        raise ValueError(f"empty sector {sector}")
    if lo <= -np.pi / 2 or hi >= np.pi / 2:
        raise ValueError("sector must lie inside (-pi/2, pi/2)")
    if n_tx == 1:
        return Beamformer(np.ones(1, dtype=complex), (lo, hi))
    if hi == lo:
        w = steering_vector(n_tx, lo) / np.sqrt(n_tx)
        return Beamformer(w, (lo, hi))

    if grid_points is None:
        grid_points = 16 * n_tx
    if grid_points < 2 * n_tx:
        raise ValueError("grid_points must be at least 2 * n_tx")
    grid = (np.arange(grid_points) + 0.5) / grid_points * np.pi - np.pi / 2
    margin = edge_margin / n_tx
    target = ((grid >= lo - margin) & (grid <= hi + margin)).astype(float)
    if not target.any():
        # sector narrower than the grid spacing
        w = steering_vector(n_tx, (lo + hi) / 2) / np.sqrt(n_tx)
        return Beamformer(w, (lo, hi))
    A = steering_vector(n_tx, grid).conj().T
    w, *_ = np.linalg.lstsq(A, target, rcond=None)
    return Beamformer(w / np.linalg.norm(w), (lo, hi))
