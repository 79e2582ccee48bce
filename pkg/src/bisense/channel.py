"""Bistatic LoS channel, received grid synthesis and link budget."""

from __future__ import annotations

import functools
import json
import struct
from dataclasses import dataclass

import numpy as np

from .core import (SPEED_OF_LIGHT, BistaticParams, SceneGeometry, SystemConfig,
                   TargetState, forward_geometry)
from .waveform import (Beamformer, SubcarrierPlan, SymbolGrid, _rng, design_sector_beamformer,
                       generate_symbols, make_plan, steering_vector)


def path_loss_tx(rcs: float, r: float) -> float:
    """Tx-to-target gain ``rcs / (4 pi r^2)``."""
    if r <= 0:
        raise ValueError(f"distance must be positive, got {r}")
    return rcs / (4 * np.pi * r ** 2)


def path_loss_rx(f_c: float, gamma: float) -> float:
    """Target-to-Rx gain through an isotropic aperture, ``(c / (4 pi f_c gamma))^2``."""
    if f_c <= 0 or gamma <= 0:
        raise ValueError("f_c and gamma must be positive")
    return (SPEED_OF_LIGHT / (4 * np.pi * f_c * gamma)) ** 2


@dataclass(frozen=True)
class ChannelRealization:
    eps: complex
    h_eff: complex
    beam_gain: complex
    phase0: float
    geometry: BistaticParams
    normalized: bool = False

    @property
    def delay(self) -> float:
        return self.geometry.delay

    @property
    def doppler(self) -> float:
        return self.geometry.doppler

    @property
    def aoa(self) -> float:
        return self.geometry.aoa

    @property
    def aod(self) -> float:
        return self.geometry.aod


def realize_channel(scene: SceneGeometry, target: TargetState, cfg: SystemConfig,
                    w: Beamformer, seed=None, normalized: bool = False) -> ChannelRealization:
    """Draw the Tx/Rx phase offset and build the bistatic channel factor.

    With ``normalized=True`` the magnitude of the channel factor is set to 1.
    """
    geo = forward_geometry(scene, target, cfg.f_c)
    phase0 = float(_rng(seed).uniform(0.0, 2 * np.pi))
    if normalized:
        mag = 1.0
    else:
        mag = np.sqrt(path_loss_tx(target.rcs, geo.r_tx) * path_loss_rx(cfg.f_c, geo.r_rx))
    eps = mag * np.exp(-1j * (2 * np.pi * cfg.f_c * geo.delay + phase0))
    g = complex(w.pattern(geo.aod))
    return ChannelRealization(eps=complex(eps), h_eff=complex(g * eps), beam_gain=g,
                              phase0=phase0, geometry=geo, normalized=normalized)


def mean_signal(x: np.ndarray, offsets: np.ndarray, symbol_duration: float, n_rx: int,
                amplitude: float, gain: complex, delay: float, doppler: float,
                aoa: float) -> np.ndarray:
    """Noiseless received grid ``(n_rx, K', M)``.

    ``s[n, k, m] = A h exp(j 2 pi (m Ts fD - f_k tau)) b_n(theta) x[k, m]``
    """
    m = np.arange(x.shape[1])
    freq = np.exp(-2j * np.pi * offsets * delay)
    time = np.exp(2j * np.pi * m * symbol_duration * doppler)
    b = steering_vector(n_rx, aoa)
    return (amplitude * gain) * b[:, None, None] * (freq[:, None] * time[None, :] * x)[None]


@dataclass(frozen=True)
class RxGrid:
    """Received symbols for one stage, ``y`` shaped ``(N_r, K', M)``.

    ``amplitude`` is the known transmit scaling ``A``; ``gain`` is the
    complex channel multiplier used during synthesis (ground truth, not
    available to a receiver).
    """

    y: np.ndarray
    x: SymbolGrid
    plan: SubcarrierPlan
    noise_var: float
    symbol_duration: float
    amplitude: float = 1.0
    gain: complex = 1.0
    seed: int | None = None

    def __post_init__(self):
        if self.y.ndim != 3:
            raise ValueError(f"y must be (N_r, K', M), got shape {self.y.shape}")
        if self.y.shape[1:] != self.x.values.shape:
            raise ValueError(f"y shape {self.y.shape} inconsistent with symbols {self.x.values.shape}")
        if self.y.shape[1] != self.plan.n_active:
            raise ValueError("y subcarrier axis does not match the plan")
        self.y.setflags(write=False)

    @property
    def n_rx(self) -> int:
        return self.y.shape[0]

    def scaled(self, factor: complex) -> "RxGrid":
        return RxGrid(self.y * factor, self.x, self.plan, self.noise_var * abs(factor) ** 2,
                      self.symbol_duration, self.amplitude, self.gain * factor, self.seed)


def synthesize_rx(cfg: SystemConfig, plan: SubcarrierPlan, x: SymbolGrid,
                  chan: ChannelRealization, snr_db: float | None = None,
                  seed=None) -> RxGrid:
    """Pass the symbol grid through the channel and add white noise.

    ``snr_db=None`` runs the physical link budget: amplitude
    ``sqrt(P_t G_t^a G_r / K')`` and noise variance ``N0 * df``. Since
    ``tx_power_gain`` already carries the array gain toward the target,
    only the phase of the beam response is applied. Otherwise the grid is
    SNR-normalized: ``A = 1``, ``|h| = 1`` and noise variance
    ``10^(-snr_db/10)`` (``snr_db=inf`` gives a noiseless grid).
    """
    if x.values.shape != (plan.n_active, cfg.symbols):
        raise ValueError(f"symbol grid {x.values.shape} does not match "
                         f"(K'={plan.n_active}, M={cfg.symbols})")
    g = chan.beam_gain
    beam_phase = g / abs(g) if abs(g) > 0 else 1.0
    if snr_db is None:
        n_sc = plan.n_active if cfg.snr_subcarriers == "active" else cfg.total_subcarriers
        amplitude = np.sqrt(cfg.tx_power_gain * cfg.rx_element_gain / n_sc)
        gain = chan.eps * beam_phase
        noise_var = cfg.noise_psd * cfg.subcarrier_spacing
    else:
        amplitude = 1.0
        gain = np.exp(1j * np.angle(chan.eps * beam_phase))
        noise_var = 0.0 if np.isinf(snr_db) else 10 ** (-snr_db / 10)

    y = mean_signal(x.values, plan.offsets, cfg.symbol_duration, cfg.n_rx, amplitude,
                    gain, chan.delay, chan.doppler, chan.aoa)
    if noise_var > 0:
        rng = _rng(seed)
        noise = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
        y = y + np.sqrt(noise_var / 2) * noise
    return RxGrid(y=y, x=x, plan=plan, noise_var=float(noise_var),
                  symbol_duration=cfg.symbol_duration, amplitude=float(amplitude),
                  gain=complex(gain), seed=seed if isinstance(seed, int) else None)


def link_snr(cfg: SystemConfig, scene: SceneGeometry, target: TargetState,
             mean_symbol_power: float = 1.0) -> float:
    """Per-element link SNR in dB from the bistatic radar equation."""
    geo = forward_geometry(scene, target, cfg.f_c)
    n_sc = cfg.active_subcarriers if cfg.snr_subcarriers == "active" else cfg.total_subcarriers
    num = mean_symbol_power * cfg.tx_power_gain * cfg.rx_element_gain * target.rcs * SPEED_OF_LIGHT ** 2
    den = ((4 * np.pi) ** 3 * geo.r_tx ** 2 * geo.r_rx ** 2 * cfg.f_c ** 2
           * cfg.noise_psd * n_sc * cfg.subcarrier_spacing)
    if num <= 0:
        return -np.inf
    return float(10 * np.log10(num / den))


_MAGIC = b"BSRX"


def dump_rx_grid(grid: RxGrid, path) -> None:
    """Write an RxGrid as ``magic | u32 header length | JSON header | payload``.

    The payload is ``y`` then the symbol grid, both row-major little-endian
    complex64.
    """
    header = {
        "version": 1,
        "dims": list(grid.y.shape),
        "stage": grid.plan.stage,
        "indices": [int(i) for i in grid.plan.indices],
        "subcarrier_spacing": grid.plan.subcarrier_spacing,
        "effective_spacing": grid.plan.effective_spacing,
        "frequency_offsets": [float(f) for f in grid.plan.frequency_offsets],
        "noise_var": grid.noise_var,
        "symbol_duration": grid.symbol_duration,
        "amplitude": grid.amplitude,
        "seed": grid.seed,
    }
    blob = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(grid.y, dtype="<c8").tobytes())
        fh.write(np.ascontiguousarray(grid.x.values, dtype="<c8").tobytes())


def load_rx_grid(path) -> RxGrid:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not an RxGrid dump")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n))
        dims = tuple(header["dims"])
        y = np.frombuffer(fh.read(8 * int(np.prod(dims))), dtype="<c8").reshape(dims)
        x = np.frombuffer(fh.read(8 * dims[1] * dims[2]), dtype="<c8").reshape(dims[1:])
    plan = SubcarrierPlan(stage=header["stage"], indices=np.array(header["indices"]),
                          subcarrier_spacing=header["subcarrier_spacing"],
                          effective_spacing=header["effective_spacing"],
                          frequency_offsets=np.array(header["frequency_offsets"]))
    return RxGrid(y=y.astype(complex), x=SymbolGrid(x.astype(complex)), plan=plan,
                  noise_var=header["noise_var"], symbol_duration=header["symbol_duration"],
                  amplitude=header["amplitude"], seed=header["seed"])


def default_beamformer(cfg: SystemConfig, scene: SceneGeometry) -> Beamformer:
    """Sector beamformer covering the monitored area as seen from the Tx."""
    return _cached_beamformer(cfg.n_tx, scene.sector("tx"))


@functools.lru_cache(maxsize=32)
def _cached_beamformer(n_tx: int, sector: tuple[float, float]) -> Beamformer:
    return design_sector_beamformer(n_tx, sector)


def simulate_frames(scene: SceneGeometry, target: TargetState, cfg: SystemConfig,
                    streams: dict, snr_db: float | None = None,
                    beamformer: Beamformer | None = None):
    """Coarse and fine received grids for one target, each with its own frame and noise.

    ``streams`` maps the tags of :data:`bisense.streams.STREAM_TAGS` to
    generators. Returns ``(coarse_rx, fine_rx, channel)``.
    """
    w = default_beamformer(cfg, scene) if beamformer is None else beamformer
    chan = realize_channel(scene, target, cfg, w, streams["phase"], normalized=snr_db is not None)
    grids = []
    for stage in ("coarse", "fine"):
        plan = make_plan(stage, cfg)
        x = generate_symbols(plan.n_active, cfg.symbols, streams[f"symbols_{stage}"])
        grids.append(synthesize_rx(cfg, plan, x, chan, snr_db, streams[f"noise_{stage}"]))
    return grids[0], grids[1], chan
