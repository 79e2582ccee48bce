"""Monte Carlo trials, RMSE/PEB sweeps and the range-ambiguity demonstration."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import bounds
from ..channel import link_snr, simulate_frames
from ..core import (SPEED_OF_LIGHT, ConfigurationError, SceneGeometry, SystemConfig, TargetState,
                    forward_geometry, wrap_angle)
from ..estimator import TwoStageLocalizer, fine_only_estimate
from ..streams import trial_streams
from ..waveform import make_plan
from .config import SweepSpec

CSV_COLUMNS = ("axis", "axis_unit", "trials", "rmse_pos_m", "peb_m", "rmse_range_m",
               "rmse_aoa_rad", "amb_fail_rate")


@dataclass
class TrialRecord:
    seed: int
    trial: int
    snr_db: float | None
    coarse_delay: float = math.nan
    coarse_aoa: float = math.nan
    fine_delay: float = math.nan
    fine_aoa: float = math.nan
    position: list = field(default_factory=lambda: [math.nan, math.nan])
    position_error: float = math.nan
    range_error: float = math.nan
    aoa_error: float = math.nan
    coarse_score: float = math.nan
    fine_score: float = math.nan
    wall_time: float = 0.0
    error: str | None = None

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("wall_time")
        return d


def run_trial(cfg: SystemConfig, scene: SceneGeometry, target: TargetState,
              snr_db: float | None, seed: int, trial: int = 0, *, oversample: int = 4,
              refine: str = "local", estimate_doppler: bool = False) -> TrialRecord:
    """One two-stage run; ``snr_db=None`` uses the physical link budget.

    Failures inside the pipeline are stored on the record rather than raised.
    """
    t0 = time.perf_counter()
    rec = TrialRecord(seed=int(seed), trial=int(trial),
                      snr_db=None if snr_db is None else float(snr_db))
    try:
        truth = forward_geometry(scene, target, cfg.f_c)
        coarse_rx, fine_rx, _ = simulate_frames(scene, target, cfg, trial_streams(seed, trial), snr_db)
        loc = TwoStageLocalizer(scene, cfg, oversample=oversample, refine=refine,
                                estimate_doppler=estimate_doppler).fit()
        est = loc.estimate(coarse_rx, fine_rx)
        coarse = est.metadata["coarse"]
        rec.coarse_delay, rec.coarse_aoa, rec.coarse_score = coarse.delay, coarse.aoa, coarse.score
        rec.fine_delay, rec.fine_aoa, rec.fine_score = est.delay, est.aoa, est.score
        rec.range_error = abs(est.bistatic_range - truth.bistatic_range)
        rec.aoa_error = abs(wrap_angle(est.aoa - truth.aoa))
        if est.position is not None:
            rec.position = [float(v) for v in est.position]
            rec.position_error = float(np.linalg.norm(est.position - target.position))
    except Exception as exc:  # recorded per trial; a sweep must survive bad draws
        rec.error = f"{type(exc).__name__}: {exc}"
    rec.wall_time = time.perf_counter() - t0
    return rec


@dataclass
class SweepPoint:
    axis: float
    axis_unit: str
    snr_db: float
    peb: float
    records: list

    @property
    def trials(self) -> int:
        return len(self.records)

    def _sq(self, attr: str) -> np.ndarray:
        vals = np.array([getattr(r, attr) for r in self.records], dtype=float)
        vals[~np.isfinite(vals)] = np.inf
        return vals ** 2

    def rmse(self, attr: str = "position_error") -> float:
        sq = self._sq(attr)
        return math.sqrt(math.fsum(sq) / len(sq))

    def rmse_stderr(self, attr: str = "position_error") -> float:
        """Delta-method standard error of the RMSE."""
        sq = self._sq(attr)
        if len(sq) < 2 or not np.all(np.isfinite(sq)):
            return math.inf
        rmse = self.rmse(attr)
        return float(np.std(sq, ddof=1) / (2 * rmse * math.sqrt(len(sq)))) if rmse > 0 else 0.0

    def ambiguity_failure_rate(self, cfg: SystemConfig) -> float:
        limit = SPEED_OF_LIGHT / (2 * cfg.bandwidth_ratio * cfg.subcarrier_spacing)
        errs = np.array([r.range_error for r in self.records], dtype=float)
        return float(np.mean(~(errs <= limit)))

    def row(self, cfg: SystemConfig) -> dict:
        return {
            "axis": self.axis,
            "axis_unit": self.axis_unit,
            "trials": self.trials,
            "rmse_pos_m": self.rmse("position_error"),
            "peb_m": self.peb,
            "rmse_range_m": self.rmse("range_error"),
            "rmse_aoa_rad": self.rmse("aoa_error"),
            "amb_fail_rate": self.ambiguity_failure_rate(cfg),
        }


def position_bound(cfg: SystemConfig, scene: SceneGeometry, target: TargetState,
                   snr_db: float, stage: str = "fine") -> float:
    """PEB at the true target for an SNR-normalized grid."""
    truth = forward_geometry(scene, target, cfg.f_c)
    params = bounds.FimParams.from_config(cfg, make_plan(stage, cfg), truth.delay, truth.aoa,
                                          snr_db, truth.doppler)
    return bounds.peb(params, scene)


def _run_trial_args(args):
    return run_trial(*args[:6], **args[6])


def run_sweep(spec: SweepSpec, cfg: SystemConfig, scene: SceneGeometry, target: TargetState,
              n_jobs: int = 1) -> list[SweepPoint]:
    """RMSE and PEB per axis point.

    SNR sweeps run SNR-normalized grids. RCS sweeps first convert each RCS
    value to an SNR through the link budget, then run normalized grids at
    that SNR. ``single_shot`` runs the physical link budget at the target's
    own RCS. Trial ``i`` at axis point ``j`` uses stream index
    ``j * trials + i``, so results do not depend on ``n_jobs``.
    """
    if spec.mode == "ambiguity_demo":
        raise ConfigurationError("ambiguity_demo mode is run through ambiguity_demo()")
    opts = dict(oversample=spec.oversample, refine=spec.refine,
                estimate_doppler=spec.estimate_doppler)
    plan = []
    if spec.mode == "snr_sweep":
        for value in spec.axis:
            plan.append((value, target, value, value))
    elif spec.mode == "rcs_sweep":
        for value in spec.axis:
            tgt = TargetState(target.position, target.speed_vector, value)
            snr = link_snr(cfg, scene, tgt)
            plan.append((value, tgt, snr, snr))
    else:
        snr = link_snr(cfg, scene, target)
        plan.append((target.rcs, target, None, snr))

    jobs = []
    for j, (_, tgt, snr_run, _) in enumerate(plan):
        for i in range(spec.trials):
            jobs.append((cfg, scene, tgt, snr_run, spec.seed, j * spec.trials + i, opts))
    if n_jobs == 1:
        records = [_run_trial_args(a) for a in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            records = list(pool.map(_run_trial_args, jobs, chunksize=8))

    unit = "m2" if spec.mode in ("rcs_sweep", "single_shot") else "dB"
    points = []
    for j, (value, tgt, _, snr_eff) in enumerate(plan):
        recs = records[j * spec.trials:(j + 1) * spec.trials]
        points.append(SweepPoint(value, unit, snr_eff,
                                 position_bound(cfg, scene, tgt, snr_eff), recs))
    return points


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def write_csv(points: list[SweepPoint], cfg: SystemConfig, path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for p in points:
                row = p.row(cfg)
                writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    except OSError as exc:
        raise OSError(f"cannot write sweep output {path}: {exc}") from exc


def ambiguity_demo(cfg: SystemConfig, scene: SceneGeometry, target: TargetState,
                   snr_db: float | None = 0.0, seed: int = 1, trials: int = 1, *,
                   oversample: int = 4) -> dict:
    """Fine-band-only versus two-stage estimation on the same received grids."""
    fine_plan = make_plan("fine", cfg)
    r_unamb = fine_plan.unambiguous_range
    truth = forward_geometry(scene, target, cfg.f_c)
    if cfg.bandwidth_ratio == 1:
        return {"status": "no ambiguity possible", "bandwidth_ratio": 1,
                "fine_unambiguous_range_m": r_unamb}
    if truth.bistatic_range <= r_unamb:
        raise ConfigurationError(
            f"target bistatic range {truth.bistatic_range:.3f} m does not exceed the fine "
            f"unambiguous range {r_unamb:.3f} m; no alias to demonstrate")

    loc = TwoStageLocalizer(scene, cfg, oversample=oversample).fit()
    rows = []
    for i in range(trials):
        coarse_rx, fine_rx, _ = simulate_frames(scene, target, cfg, trial_streams(seed, i), snr_db)
        single = fine_only_estimate(fine_rx, scene, cfg, oversample=oversample)
        both = loc.estimate(coarse_rx, fine_rx)
        offset = truth.bistatic_range - single.bistatic_range
        rows.append({
            "trial": i,
            "single_stage_range_m": single.bistatic_range,
            "single_stage_offset_m": offset,
            "alias_count": int(round(offset / r_unamb)),
            "two_stage_range_m": both.bistatic_range,
            "two_stage_range_error_m": abs(both.bistatic_range - truth.bistatic_range),
            "two_stage_position_error_m": float(np.linalg.norm(both.position - target.position)),
        })
    return {
        "status": "ok",
        "true_bistatic_range_m": truth.bistatic_range,
        "fine_unambiguous_range_m": r_unamb,
        "fine_range_bin_m": SPEED_OF_LIGHT / cfg.bandwidth,
        "snr_db": snr_db,
        "trials": rows,
    }
