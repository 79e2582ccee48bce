"""GML delay/Doppler/AoA estimation and the two-stage coarse-to-fine localizer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import bounds
from ._validation import check_axis, check_grid_pairs, check_grids, check_rx_grid
from .channel import RxGrid, simulate_frames
from .core import (SPEED_OF_LIGHT, ConfigurationError, DegenerateGeometryError, SceneGeometry,
                   SystemConfig, TargetState, position_from_bistatic)
from .streams import trial_streams
from .waveform import SubcarrierPlan, make_plan, steering_vector

REFINE_MODES = ("none", "parabolic", "local")


@dataclass(frozen=True)
class SearchGrid:
    delay_axis: np.ndarray
    doppler_axis: np.ndarray
    aoa_axis: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "delay_axis", check_axis(self.delay_axis, "delay_axis"))
        object.__setattr__(self, "doppler_axis", check_axis(self.doppler_axis, "doppler_axis"))
        object.__setattr__(self, "aoa_axis", check_axis(self.aoa_axis, "aoa_axis"))

    @property
    def shape(self) -> tuple[int, int, int]:
        return len(self.delay_axis), len(self.doppler_axis), len(self.aoa_axis)

    def check_plan(self, plan: SubcarrierPlan) -> None:
        span = self.delay_axis[-1] - self.delay_axis[0]
        if span > plan.alias_period * (1 + 1e-12):
            raise ValueError(
                f"delay axis spans {span:.4g} s, more than the alias period "
                f"{plan.alias_period:.4g} s of the {plan.stage} plan")


@dataclass
class EstimateResult:
    delay: float
    doppler: float
    aoa: float
    bistatic_range: float
    position: np.ndarray | None
    score: float
    stage: str
    gain: complex = 0j
    window: tuple[float, float] | None = None
    metadata: dict = field(default_factory=dict)


def axis(lo: float, hi: float, max_step: float) -> np.ndarray:
    """Uniform axis covering ``[lo, hi]`` with spacing at most ``max_step``."""
    if hi <= lo:
        return np.array([lo])
    n = int(math.ceil((hi - lo) / max_step - 1e-9)) + 1
    return np.linspace(lo, hi, max(n, 2))


class _Correlator:
    """Matched-filter bank over one received grid.

    ``F(tau, fD, theta) = sum_{n,k,m} b_n*(theta) e^{j2pi(f_k tau - m Ts fD)} x*[k,m] y_n[k,m]``
    and the GML objective is ``|F|^2 / (N_r ||x||^2)``.
    """

    def __init__(self, rx: RxGrid):
        self.rx = rx
        self.prod = rx.x.values.conj()[None] * rx.y
        self.offsets = rx.plan.offsets
        self.pos = np.arange(rx.n_rx) - (rx.n_rx - 1) / 2
        self.m_times = np.arange(rx.x.shape[1]) * rx.symbol_duration
        self.norm = rx.n_rx * rx.x.energy
        self._z = {}

    def z(self, doppler: float) -> np.ndarray:
        key = float(doppler)
        if key not in self._z:
            if key == 0.0:
                self._z[key] = self.prod.sum(axis=2)
            else:
                self._z[key] = self.prod @ np.exp(-2j * np.pi * self.m_times * key)
        return self._z[key]

    def surface(self, search: SearchGrid) -> np.ndarray:
        """Objective over the grid, indexed ``[delay, aoa, doppler]``."""
        bh = steering_vector(self.rx.n_rx, search.aoa_axis).conj().T
        e = np.exp(2j * np.pi * np.multiply.outer(self.offsets, search.delay_axis))
        out = np.empty((len(search.delay_axis), len(search.aoa_axis), len(search.doppler_axis)))
        for i, fd in enumerate(search.doppler_axis):
            F = bh @ self.z(fd) @ e
            out[:, :, i] = (np.abs(F) ** 2).T / self.norm
        return out

    def statistic(self, tau: float, doppler: float, aoa: float) -> complex:
        bc = np.exp(-1j * np.pi * self.pos * np.sin(aoa))
        e = np.exp(2j * np.pi * self.offsets * tau)
        return complex(bc @ self.z(doppler) @ e)

    def value_and_grad(self, tau, doppler, aoa):
        """Objective and its gradient with respect to ``(tau, doppler, aoa)``."""
        bc = np.exp(-1j * np.pi * self.pos * np.sin(aoa))
        e = np.exp(2j * np.pi * self.offsets * tau)
        z = self.z(doppler) if doppler == 0.0 else self.prod @ np.exp(
            -2j * np.pi * self.m_times * doppler)
        ze = z @ e
        F = bc @ ze
        dF_tau = bc @ (z @ (2j * np.pi * self.offsets * e))
        dz_fd = self.prod @ (-2j * np.pi * self.m_times * np.exp(-2j * np.pi * self.m_times * doppler))
        dF_fd = bc @ (dz_fd @ e)
        dF_aoa = (-1j * np.pi * np.cos(aoa) * self.pos * bc) @ ze
        dF = np.array([dF_tau, dF_fd, dF_aoa])
        return abs(F) ** 2 / self.norm, 2 * np.real(np.conj(F) * dF) / self.norm


def gml_objective(rx: RxGrid, tau: float, doppler: float, aoa: float) -> float:
    """Generalized likelihood of a single (delay, Doppler, AoA) hypothesis."""
    corr = _Correlator(check_rx_grid(rx))
    return abs(corr.statistic(tau, doppler, aoa)) ** 2 / corr.norm


def _parabolic_offset(f_minus: float, f0: float, f_plus: float) -> float:
    denom = f_minus - 2 * f0 + f_plus
    if denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (f_minus - f_plus) / denom, -0.5, 0.5))


def _local_refine(corr: _Correlator, start, axes, steps, lower, upper):
    """Bounded continuous maximization of the objective around ``start``.

    Works in step-normalized coordinates; axes with a single point stay fixed.
    """
    free = [i for i, a in enumerate(axes) if len(a) > 1]
    if not free:
        return np.asarray(start, dtype=float)
    start = np.asarray(start, dtype=float)
    steps = np.asarray(steps, dtype=float)
    peak, _ = corr.value_and_grad(*start)
    scale = peak if peak > 0 else 1.0

    def unpack(u):
        p = start.copy()
        p[free] = start[free] + u * steps[free]
        return p

    def fun(u):
        val, grad = corr.value_and_grad(*unpack(u))
        return -val / scale, -grad[free] * steps[free] / scale

    bnds = [((lower[i] - start[i]) / steps[i], (upper[i] - start[i]) / steps[i]) for i in free]
    res = optimize.minimize(fun, np.zeros(len(free)), jac=True, method="L-BFGS-B",
                            bounds=bnds, options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 200})
    best = unpack(res.x)
    return best if -res.fun >= 1.0 - 1e-12 else start


def grid_search(rx: RxGrid, search: SearchGrid, refine: str = "parabolic",
                scene: SceneGeometry | None = None, stage: str | None = None,
                window=None) -> EstimateResult:
    """Exhaustive GML maximization over a Cartesian grid.

    Ties go to the smallest delay, then AoA, then Doppler. ``refine`` picks
    the sub-grid step: ``"none"``, a 3-point parabola per axis
    (``"parabolic"``), or a bounded continuous ascent started from the
    parabolic point (``"local"``).
    """
    if refine not in REFINE_MODES:
        raise ValueError(f"refine must be one of {REFINE_MODES}, got {refine!r}")
    rx = check_rx_grid(rx)
    corr = _Correlator(rx)
    surf = corr.surface(search)
    i_tau, i_aoa, i_fd = np.unravel_index(int(np.argmax(surf)), surf.shape)
    axes = (search.delay_axis, search.doppler_axis, search.aoa_axis)
    idx = [i_tau, i_fd, i_aoa]
    estimate = np.array([axes[j][idx[j]] for j in range(3)])
    steps = np.array([a[1] - a[0] if len(a) > 1 else 1.0 for a in axes])

    if refine in ("parabolic", "local"):
        for j, a in enumerate(axes):
            if len(a) < 3 or idx[j] in (0, len(a) - 1):
                continue
            lo_idx, hi_idx = list(idx), list(idx)
            lo_idx[j] -= 1
            hi_idx[j] += 1
            get = lambda ix: surf[ix[0], ix[2], ix[1]]
            estimate[j] += _parabolic_offset(get(lo_idx), get(idx), get(hi_idx)) * steps[j]
    if refine == "local":
        lower = [max(a[0], estimate[j] - steps[j]) if len(a) > 1 else a[0] for j, a in enumerate(axes)]
        upper = [min(a[-1], estimate[j] + steps[j]) if len(a) > 1 else a[0] for j, a in enumerate(axes)]
        estimate = _local_refine(corr, estimate, axes, steps, lower, upper)

    tau, fd, aoa = (float(v) for v in estimate)
    return _result(corr, tau, fd, aoa, stage or rx.plan.stage, scene, window)


def _result(corr: _Correlator, tau, fd, aoa, stage, scene, window, metadata=None) -> EstimateResult:
    if scene is not None:
        # keep the range strictly outside the degenerate ellipse
        tau = max(tau, scene.baseline * (1 + 1e-12) / SPEED_OF_LIGHT)
    F = corr.statistic(tau, fd, aoa)
    r = tau * SPEED_OF_LIGHT
    position = None
    if scene is not None:
        try:
            position = position_from_bistatic(r, aoa, scene)
        except DegenerateGeometryError:
            position = None
    return EstimateResult(delay=tau, doppler=fd, aoa=aoa, bistatic_range=r, position=position,
                          score=abs(F) ** 2 / corr.norm, stage=stage,
                          gain=F / (corr.rx.amplitude * corr.norm), window=window,
                          metadata=dict(metadata or {}))


def beamwidth(n_rx: int) -> float:
    """Nominal Rx beamwidth in radians, ``2 / N_r``."""
    return 2.0 / n_rx


def doppler_axis_for(cfg: SystemConfig, oversample: int = 4, centre: float = 0.0,
                     half_width: float | None = None) -> np.ndarray:
    """Doppler axis; full unambiguous span ``+-1/(2 Ts)`` unless ``half_width`` is given."""
    res = 1.0 / (cfg.symbols * cfg.symbol_duration)
    if half_width is None:
        half_width = 0.5 / cfg.symbol_duration - res / oversample
    return axis(centre - half_width, centre + half_width, res / oversample)


def coarse_search_grid(scene: SceneGeometry, cfg: SystemConfig, oversample: int = 4,
                       doppler_axis=(0.0,)) -> SearchGrid:
    plan = make_plan("coarse", cfg)
    r_max = scene.max_bistatic_range()
    if r_max >= plan.unambiguous_range:
        raise ConfigurationError(
            f"maximum bistatic range {r_max:.3f} m of the area is not below the coarse "
            f"unambiguous range r_unamb = {plan.unambiguous_range:.3f} m; increase K' "
            f"(B_coarse) or shrink the area")
    c = SPEED_OF_LIGHT
    delays = axis(scene.baseline / c, r_max / c, 1.0 / (cfg.coarse_bandwidth * oversample))
    lo, hi = scene.sector("rx")
    aoas = axis(lo, hi, beamwidth(cfg.n_rx) / oversample)
    return SearchGrid(delays, np.atleast_1d(doppler_axis), aoas)


def coarse_stage(rx: RxGrid, scene: SceneGeometry, cfg: SystemConfig, *, oversample: int = 4,
                 doppler_axis=(0.0,), refine: str = "local") -> EstimateResult:
    """Unambiguous low-resolution localization over the whole area."""
    rx = check_rx_grid(rx, "coarse")
    search = coarse_search_grid(scene, cfg, oversample, doppler_axis)
    search.check_plan(rx.plan)
    return grid_search(rx, search, refine, scene, "coarse")


def fine_window(coarse_peb: float, cfg: SystemConfig, window_sigmas: float = 6.0):
    """Width (m) of the fine bistatic-range window and whether the fallback was used.

    The width is ``2 max(window_sigmas * coarse_peb, 2 c / B_coarse)``, capped
    at 90 % of the fine unambiguous range so no alias fits inside.
    """
    c = SPEED_OF_LIGHT
    floor = 2 * c / cfg.coarse_bandwidth
    cap = 0.9 * c / (cfg.bandwidth_ratio * cfg.subcarrier_spacing)
    fallback = not (np.isfinite(coarse_peb) and coarse_peb >= 0)
    spread = floor if fallback else max(window_sigmas * coarse_peb, floor)
    return min(2 * spread, cap), fallback


def fine_stage(rx: RxGrid, coarse: EstimateResult, coarse_peb: float, scene: SceneGeometry,
               cfg: SystemConfig, *, oversample: int = 4, window_sigmas: float = 6.0,
               doppler_axis=None, refine: str = "local") -> EstimateResult:
    """High-resolution search in a window centred on the coarse estimate."""
    rx = check_rx_grid(rx, "fine")
    c = SPEED_OF_LIGHT
    width, fallback = fine_window(coarse_peb, cfg, window_sigmas)
    r_lo = max(coarse.bistatic_range - width / 2, scene.baseline)
    r_hi = coarse.bistatic_range + width / 2
    delays = axis(r_lo / c, r_hi / c, 1.0 / (cfg.bandwidth * oversample))
    bw = beamwidth(cfg.n_rx)
    aoa_lo = max(coarse.aoa - 3 * bw, -np.pi / 2 + 1e-9)
    aoa_hi = min(coarse.aoa + 3 * bw, np.pi / 2 - 1e-9)
    aoas = axis(aoa_lo, aoa_hi, bw / oversample)
    if doppler_axis is None:
        doppler_axis = (coarse.doppler,)
    search = SearchGrid(delays, np.atleast_1d(doppler_axis), aoas)
    search.check_plan(rx.plan)
    result = grid_search(rx, search, refine, scene, "fine", window=(r_lo, r_hi))
    result.metadata.update(window_fallback=fallback, window_width=width)
    return result


def coarse_bound(rx: RxGrid, coarse: EstimateResult, scene: SceneGeometry) -> float:
    """PEB of the coarse stage evaluated at the coarse estimate (nan if undefined)."""
    try:
        params = bounds.FimParams.from_grid(rx, coarse.delay, coarse.aoa, coarse.gain,
                                            coarse.doppler)
        return bounds.peb(params, scene)
    except (np.linalg.LinAlgError, DegenerateGeometryError, ValueError):
        return float("nan")


class GMLGridEstimator(BaseEstimator):
    """Single-grid GML estimator of (delay, Doppler, AoA).

    Parameters
    ----------
    delay_axis, aoa_axis : array-like
        Search axes in seconds and radians.
    doppler_axis : array-like, default (0.0,)
        Doppler hypotheses in Hz.
    refine : {"none", "parabolic", "local"}
        Sub-grid refinement of the discrete peak.
    """

    def __init__(self, delay_axis=None, aoa_axis=None, doppler_axis=(0.0,), refine="parabolic"):
        self.delay_axis = delay_axis
        self.aoa_axis = aoa_axis
        self.doppler_axis = doppler_axis
        self.refine = refine

    def fit(self, X=None, y=None):
        if self.refine not in REFINE_MODES:
            raise ValueError(f"refine must be one of {REFINE_MODES}, got {self.refine!r}")
        if self.delay_axis is None or self.aoa_axis is None:
            raise ValueError("delay_axis and aoa_axis are required")
        self.search_ = SearchGrid(self.delay_axis, self.doppler_axis, self.aoa_axis)
        return self

    def estimate(self, rx: RxGrid) -> EstimateResult:
        check_is_fitted(self, "search_")
        return grid_search(rx, self.search_, self.refine)

    def predict(self, X) -> np.ndarray:
        """``(n, 3)`` array of ``(delay, doppler, aoa)`` per received grid."""
        check_is_fitted(self, "search_")
        results = [self.estimate(rx) for rx in check_grids(X)]
        return np.array([[r.delay, r.doppler, r.aoa] for r in results])


class TwoStageLocalizer(BaseEstimator):
    """Coarse-to-fine bistatic localizer.

    Consumes ``(coarse_rx, fine_rx)`` pairs: a contiguous sub-band grid that
    is unambiguous over the area, and a strided full-band grid whose range
    ambiguity is removed by windowing around the coarse estimate.

    Parameters
    ----------
    scene : SceneGeometry
    cfg : SystemConfig
    oversample : int, default 4
        Grid points per resolution cell on each axis.
    window_sigmas : float, default 6.0
        Fine window half-width in units of the coarse-stage PEB.
    estimate_doppler : bool, default False
        Search Doppler as well; otherwise the target is taken as static.
    refine : {"none", "parabolic", "local"}, default "local"
    """

    def __init__(self, scene=None, cfg=None, oversample=4, window_sigmas=6.0,
                 estimate_doppler=False, refine="local"):
        self.scene = scene
        self.cfg = cfg
        self.oversample = oversample
        self.window_sigmas = window_sigmas
        self.estimate_doppler = estimate_doppler
        self.refine = refine

    def fit(self, X=None, y=None):
        """Validate the configuration and precompute the coarse search grid."""
        if self.refine not in REFINE_MODES:
            raise ValueError(f"refine must be one of {REFINE_MODES}, got {self.refine!r}")
        if self.oversample < 1:
            raise ValueError("oversample must be >= 1")
        scene = SceneGeometry() if self.scene is None else self.scene
        cfg = SystemConfig() if self.cfg is None else self.cfg
        dopp = doppler_axis_for(cfg, self.oversample) if self.estimate_doppler else (0.0,)
        self.scene_, self.cfg_ = scene, cfg
        self.coarse_search_ = coarse_search_grid(scene, cfg, self.oversample, dopp)
        self.coarse_plan_ = make_plan("coarse", cfg)
        self.fine_plan_ = make_plan("fine", cfg)
        return self

    def estimate(self, coarse_rx: RxGrid, fine_rx: RxGrid) -> EstimateResult:
        check_is_fitted(self, "coarse_search_")
        coarse_rx = check_rx_grid(coarse_rx, "coarse")
        fine_rx = check_rx_grid(fine_rx, "fine")
        self.coarse_search_.check_plan(coarse_rx.plan)
        coarse = grid_search(coarse_rx, self.coarse_search_, self.refine, self.scene_, "coarse")
        c_peb = coarse_bound(coarse_rx, coarse, self.scene_)
        dopp = None
        if self.estimate_doppler:
            res = 1.0 / (self.cfg_.symbols * self.cfg_.symbol_duration)
            dopp = doppler_axis_for(self.cfg_, self.oversample, coarse.doppler, 2 * res)
        fine = fine_stage(fine_rx, coarse, c_peb, self.scene_, self.cfg_,
                          oversample=self.oversample, window_sigmas=self.window_sigmas,
                          doppler_axis=dopp, refine=self.refine)
        fine.stage = "two_stage"
        fine.metadata.update(coarse=coarse, coarse_peb=c_peb)
        return fine

    def predict(self, X) -> np.ndarray:
        """``(n, 2)`` positions for one ``(coarse, fine)`` pair or a sequence of pairs."""
        check_is_fitted(self, "coarse_search_")
        out = []
        for coarse_rx, fine_rx in check_grid_pairs(X):
            pos = self.estimate(coarse_rx, fine_rx).position
            out.append(pos if pos is not None else np.full(2, np.nan))
        return np.array(out)

    def score(self, X, y) -> float:
        """Negative position RMSE against true positions ``y``."""
        err = self.predict(X) - np.atleast_2d(np.asarray(y, dtype=float))
        return -float(np.sqrt(np.mean(np.sum(err ** 2, axis=1))))


def fine_only_estimate(rx: RxGrid, scene: SceneGeometry, cfg: SystemConfig, *,
                       oversample: int = 4, refine: str = "local") -> EstimateResult:
    """Single-stage control: fine grid searched over one full alias period from zero delay."""
    rx = check_rx_grid(rx, "fine")
    period = rx.plan.alias_period
    step = 1.0 / (cfg.bandwidth * oversample)
    delays = np.arange(0.0, period - step / 2, step)
    lo, hi = scene.sector("rx")
    aoas = axis(lo, hi, beamwidth(cfg.n_rx) / oversample)
    result = grid_search(rx, SearchGrid(delays, [0.0], aoas), refine, None, "fine")
    if result.bistatic_range > scene.baseline:
        result.position = position_from_bistatic(result.bistatic_range, result.aoa, scene)
    return result


def two_stage_estimate(scene: SceneGeometry, target: TargetState, cfg: SystemConfig,
                       seeds=0, snr_db: float | None = None, *, trial: int = 0,
                       beamformer=None, **localizer_params) -> EstimateResult:
    """Simulate both transmissions for ``target`` and run the two-stage localizer.

    ``seeds`` is either a base seed (streams derived per ``trial``) or a dict
    of named generators. ``snr_db=None`` uses the physical link budget.
    """
    streams = seeds if isinstance(seeds, dict) else trial_streams(seeds, trial)
    coarse_rx, fine_rx, _ = simulate_frames(scene, target, cfg, streams, snr_db, beamformer)
    loc = TwoStageLocalizer(scene, cfg, **localizer_params).fit()
    return loc.estimate(coarse_rx, fine_rx)
