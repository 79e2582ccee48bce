import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from bisense.channel import RxGrid, mean_signal, simulate_frames, synthesize_rx
from bisense.core import SPEED_OF_LIGHT, ConfigurationError, SceneGeometry, SystemConfig, \
    TargetState, forward_geometry, position_from_bistatic
from bisense.estimator import (GMLGridEstimator, SearchGrid, TwoStageLocalizer, axis,
                               coarse_search_grid, coarse_stage, fine_only_estimate, fine_stage,
                               fine_window, gml_objective, grid_search, two_stage_estimate)
from bisense.streams import trial_streams
from bisense.waveform import SymbolGrid, generate_symbols, make_plan


def _grid(cfg, stage, delay, aoa, doppler=0.0, snr_db=np.inf, seed=0, gain=np.exp(0.7j),
          symbols=None):
    plan = make_plan(stage, cfg)
    x = symbols or generate_symbols(plan.n_active, cfg.symbols, seed)
    y = mean_signal(x.values, plan.offsets, cfg.symbol_duration, cfg.n_rx, 1.0, gain,
                    delay, doppler, aoa)
    noise_var = 0.0 if np.isinf(snr_db) else 10 ** (-snr_db / 10)
    if noise_var:
        r = np.random.default_rng(seed + 1000)
        y = y + np.sqrt(noise_var / 2) * (r.standard_normal(y.shape) + 1j * r.standard_normal(y.shape))
    return RxGrid(y, x, plan, noise_var, cfg.symbol_duration, 1.0, gain)


def test_objective_peak_at_truth(desk_cfg):
    rx = _grid(desk_cfg, "fine", 50e-9, 0.3, 40.0)
    peak = gml_objective(rx, 50e-9, 40.0, 0.3)
    # noiseless peak: |A h N_r ||x||^2|^2 / (N_r ||x||^2)
    assert peak == pytest.approx(desk_cfg.n_rx * rx.x.energy, rel=1e-12)
    r = np.random.default_rng(0)
    for _ in range(50):
        other = gml_objective(rx, 50e-9 + r.normal(0, 1e-9), 40.0 + r.normal(0, 50),
                              0.3 + r.normal(0, 0.1))
        assert peak >= other


@pytest.mark.parametrize("stage", ["coarse", "fine"])
def test_objective_periodic_in_delay(desk_cfg, stage):
    rx = _grid(desk_cfg, stage, 61e-9, -0.2, snr_db=0.0)
    period = rx.plan.alias_period
    for tau in (10e-9, 61e-9, 83.3e-9):
        a = gml_objective(rx, tau, 0.0, -0.2)
        b = gml_objective(rx, tau + period, 0.0, -0.2)
        assert b == pytest.approx(a, rel=1e-10)


def test_objective_brute_force_dft():
    cfg = SystemConfig(total_subcarriers=40, active_subcarriers=8, symbols=1, n_rx=1, n_tx=1,
                       bandwidth_ratio=5)
    plan = make_plan("fine", cfg)
    x = SymbolGrid(np.ones((8, 1), dtype=complex))
    r = np.random.default_rng(3)
    y = (r.standard_normal((1, 8, 1)) + 1j * r.standard_normal((1, 8, 1)))
    rx = RxGrid(y, x, plan, 1.0, cfg.symbol_duration)
    for tau in np.linspace(0, 40e-9, 7):
        brute = 0j
        for k in range(8):
            brute += y[0, k, 0] * np.exp(2j * np.pi * plan.offsets[k] * tau)
        assert gml_objective(rx, tau, 0.0, 0.0) == pytest.approx(abs(brute) ** 2 / 8, rel=1e-12)


def test_conjugate_symmetry(desk_cfg):
    rx = _grid(desk_cfg, "fine", 44e-9, 0.25, 300.0, snr_db=5.0)
    flipped = RxGrid(np.conj(rx.y), SymbolGrid(np.conj(rx.x.values)), rx.plan, rx.noise_var,
                     rx.symbol_duration)
    for tau, fd, th in [(44e-9, 300.0, 0.25), (10e-9, -90.0, -0.6), (0.0, 0.0, 0.0)]:
        assert gml_objective(flipped, -tau, -fd, -th) == \
            pytest.approx(gml_objective(rx, tau, fd, th), rel=1e-10)


def test_grid_search_exact_on_grid(desk_cfg):
    delays = np.linspace(40e-9, 60e-9, 41)
    aoas = np.linspace(-0.5, 0.5, 21)
    rx = _grid(desk_cfg, "fine", delays[17], aoas[6])
    res = grid_search(rx, SearchGrid(delays, [0.0], aoas), refine="none")
    assert res.delay == delays[17] and res.aoa == aoas[6]


def test_grid_search_mid_bin(desk_cfg):
    step_tau = 1 / (desk_cfg.bandwidth * 4)
    delays = 45e-9 + np.arange(40) * step_tau
    aoas = np.linspace(-0.4, 0.4, 33)
    step_aoa = aoas[1] - aoas[0]
    true_tau = delays[20] + 0.5 * step_tau
    true_aoa = aoas[12] + 0.5 * step_aoa
    rx = _grid(desk_cfg, "fine", true_tau, true_aoa)
    search = SearchGrid(delays, [0.0], aoas)
    plain = grid_search(rx, search, refine="none")
    assert abs(plain.delay - true_tau) <= step_tau / 2 * (1 + 1e-9)
    assert abs(plain.aoa - true_aoa) <= step_aoa / 2 * (1 + 1e-9)
    para = grid_search(rx, search, refine="parabolic")
    assert abs(para.delay - true_tau) <= step_tau / 10
    assert abs(para.aoa - true_aoa) <= step_aoa / 10
    local = grid_search(rx, search, refine="local")
    assert abs(local.delay - true_tau) <= step_tau * 1e-4
    assert abs(local.aoa - true_aoa) <= step_aoa * 1e-4


def test_grid_search_tie_break():
    # one element and one symbol make the objective flat in AoA and Doppler
    cfg = SystemConfig(total_subcarriers=40, active_subcarriers=8, symbols=1, n_rx=1, n_tx=1)
    rx = _grid(cfg, "fine", 50e-9, 0.0)
    search = SearchGrid(np.linspace(40e-9, 60e-9, 81), [-100.0, 0.0, 100.0], [-0.3, 0.0, 0.3])
    res = grid_search(rx, search, refine="none")
    assert res.aoa == -0.3 and res.doppler == -100.0
    # all-zero data ties every cell
    zero = RxGrid(np.zeros_like(rx.y), rx.x, rx.plan, 1.0, rx.symbol_duration)
    res = grid_search(zero, search, refine="none")
    assert (res.delay, res.doppler, res.aoa) == (40e-9, -100.0, -0.3)


def test_grid_search_noise_only_smoke(desk_cfg):
    plan = make_plan("coarse", desk_cfg)
    x = generate_symbols(plan.n_active, desk_cfg.symbols, 1)
    r = np.random.default_rng(9)
    y = r.standard_normal((desk_cfg.n_rx, plan.n_active, desk_cfg.symbols)) + 0j
    rx = RxGrid(y, x, plan, 1.0, desk_cfg.symbol_duration)
    search = SearchGrid(np.linspace(40e-9, 70e-9, 30), [0.0], np.linspace(-0.7, 0.7, 20))
    res = grid_search(rx, search)
    assert search.delay_axis[0] <= res.delay <= search.delay_axis[-1]
    assert np.isfinite(res.score)


@settings(max_examples=25, deadline=None)
@given(mag=st.floats(1e-3, 1e3), ph=st.floats(-np.pi, np.pi))
def test_argmax_scale_invariant(mag, ph):
    cfg = SystemConfig(total_subcarriers=40, active_subcarriers=8, symbols=4, n_rx=4, n_tx=4)
    rx = _grid(cfg, "fine", 52e-9, 0.2, snr_db=0.0, seed=2)
    search = SearchGrid(np.linspace(45e-9, 60e-9, 25), [0.0], np.linspace(-0.6, 0.6, 15))
    a = grid_search(rx, search, refine="none")
    b = grid_search(rx.scaled(mag * np.exp(1j * ph)), search, refine="none")
    assert (a.delay, a.aoa) == (b.delay, b.aoa)
    assert b.score == pytest.approx(a.score * mag ** 2, rel=1e-9)


def test_search_grid_validation(desk_cfg):
    with pytest.raises(ValueError):
        SearchGrid([1e-9, 1e-9], [0.0], [0.0])
    with pytest.raises(ValueError):
        SearchGrid([], [0.0], [0.0])
    plan = make_plan("fine", desk_cfg)
    with pytest.raises(ValueError):
        SearchGrid([0.0, 2 * plan.alias_period], [0.0], [0.0]).check_plan(plan)


def test_coarse_precondition_full(scene, full_cfg):
    plan = make_plan("coarse", full_cfg)
    assert plan.unambiguous_range > scene.max_bistatic_range()
    assert plan.range_resolution == pytest.approx(0.749481145, rel=1e-9)
    grid = coarse_search_grid(scene, full_cfg)
    assert grid.delay_axis[0] == pytest.approx(scene.baseline / SPEED_OF_LIGHT)
    assert grid.delay_axis[-1] == pytest.approx(20.0 / SPEED_OF_LIGHT)
    assert np.diff(grid.delay_axis).max() <= 1 / (4 * full_cfg.coarse_bandwidth) * (1 + 1e-12)
    assert np.diff(grid.aoa_axis).max() <= 2 / full_cfg.n_rx / 4 * (1 + 1e-12)


def test_coarse_precondition_violation(full_cfg):
    big = SceneGeometry(tx_position=[0, 0], rx_position=[30, 30], area=(0, 0, 30, 30))
    with pytest.raises(ConfigurationError, match="r_unamb"):
        coarse_search_grid(big, full_cfg)


def test_coarse_stage_rmse_full(scene, target, full_cfg):
    truth = forward_geometry(scene, target, full_cfg.f_c)
    errs = []
    for t in range(100):
        c, _, _ = simulate_frames(scene, target, full_cfg, trial_streams(21, t), 0.0)
        errs.append(coarse_stage(c, scene, full_cfg).bistatic_range - truth.bistatic_range)
    assert np.sqrt(np.mean(np.square(errs))) < 0.75


def test_fine_resolution_and_window(full_cfg):
    assert SPEED_OF_LIGHT / full_cfg.bandwidth == pytest.approx(0.15, abs=1e-3)
    w, fb = fine_window(0.001, full_cfg)
    assert w == pytest.approx(2 * 2 * SPEED_OF_LIGHT / 400e6) and not fb
    w, fb = fine_window(10.0, full_cfg)
    assert w == pytest.approx(0.9 * SPEED_OF_LIGHT / 31.25e6) and not fb
    w, fb = fine_window(float("nan"), full_cfg)
    assert fb and w == pytest.approx(4 * SPEED_OF_LIGHT / 400e6)


def test_fine_stage_noiseless(scene, target, full_cfg):
    c, f, _ = simulate_frames(scene, target, full_cfg, trial_streams(4), np.inf)
    coarse = coarse_stage(c, scene, full_cfg)
    fine = fine_stage(f, coarse, float("nan"), scene, full_cfg)
    assert fine.stage == "fine"
    assert fine.metadata["window_fallback"]
    assert np.linalg.norm(fine.position - target.position) < 0.015
    lo, hi = fine.window
    assert hi - lo <= f.plan.unambiguous_range


def test_two_stage_zero_noise(scene, target, full_cfg):
    res = two_stage_estimate(scene, target, full_cfg, seeds=5, snr_db=np.inf)
    assert res.stage == "two_stage"
    assert np.linalg.norm(res.position - target.position) < 0.015
    np.testing.assert_allclose(position_from_bistatic(res.bistatic_range, res.aoa, scene),
                               res.position, atol=1e-9)


def test_two_stage_coverage_low_snr(scene, target, desk_cfg):
    r_max = scene.max_bistatic_range()
    for t in range(20):
        res = two_stage_estimate(scene, target, desk_cfg, seeds=8, snr_db=-40.0, trial=t)
        w = res.metadata["window_width"]
        assert scene.baseline <= res.bistatic_range <= r_max + w / 2


def test_two_stage_moving_target_doppler(scene, desk_cfg):
    tgt = TargetState([6.5, 3.0], speed_vector=[0.05, -0.08])
    truth = forward_geometry(scene, tgt, desk_cfg.f_c)
    res = two_stage_estimate(scene, tgt, desk_cfg, seeds=2, snr_db=20.0, estimate_doppler=True)
    doppler_res = 1 / (desk_cfg.symbols * desk_cfg.symbol_duration)
    assert abs(truth.doppler) > 0
    assert abs(res.doppler - truth.doppler) < 0.05 * doppler_res
    assert np.linalg.norm(res.position - tgt.position) < 0.05


def test_fine_only_aliases(scene, target, full_cfg):
    _, f, _ = simulate_frames(scene, target, full_cfg, trial_streams(6), 0.0)
    single = fine_only_estimate(f, scene, full_cfg)
    truth = forward_geometry(scene, target, full_cfg.f_c).bistatic_range
    assert truth - single.bistatic_range == pytest.approx(f.plan.unambiguous_range, abs=0.15)


def test_localizer_sklearn_api(scene, target, desk_cfg):
    loc = TwoStageLocalizer(scene=scene, cfg=desk_cfg, oversample=3)
    params = loc.get_params()
    assert params["oversample"] == 3 and params["refine"] == "local"
    assert clone(loc).get_params()["cfg"] == desk_cfg
    with pytest.raises(NotFittedError):
        loc.predict([])
    pairs, truth = [], []
    for t in range(3):
        c, f, _ = simulate_frames(scene, target, desk_cfg, trial_streams(3, t), 10.0)
        pairs.append((c, f))
        truth.append(target.position)
    loc.fit()
    pos = loc.predict(pairs)
    assert pos.shape == (3, 2)
    assert loc.predict(pairs[0]).shape == (1, 2)
    assert -0.2 < loc.score(pairs, truth) <= 0
    loc.set_params(refine="bogus")
    with pytest.raises(ValueError):
        loc.fit()


def test_localizer_rejects_swapped_pair(scene, target, desk_cfg):
    c, f, _ = simulate_frames(scene, target, desk_cfg, trial_streams(3), 10.0)
    loc = TwoStageLocalizer(scene, desk_cfg).fit()
    with pytest.raises(ValueError):
        loc.predict([(f, c)])
    with pytest.raises(TypeError):
        loc.predict([(c, "not a grid")])


def test_gml_grid_estimator(desk_cfg):
    rx = _grid(desk_cfg, "fine", 50.3e-9, 0.21, snr_db=30.0)
    est = GMLGridEstimator(delay_axis=axis(45e-9, 55e-9, 1e-10),
                           aoa_axis=axis(-0.5, 0.5, 0.05), refine="local").fit()
    out = est.predict([rx, rx])
    assert out.shape == (2, 3)
    assert out[0, 0] == pytest.approx(50.3e-9, abs=5e-12)
    assert out[0, 2] == pytest.approx(0.21, abs=1e-3)
    with pytest.raises(ValueError):
        GMLGridEstimator().fit()
