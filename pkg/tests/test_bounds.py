import numpy as np
import pytest
from dataclasses import replace

from bisense import bounds
from bisense.bounds import FimParams, crlb, fim, peb, signal_model, signal_partials
from bisense.channel import mean_signal, synthesize_rx
from bisense.core import SPEED_OF_LIGHT, TargetState, forward_geometry, position_from_bistatic
from bisense.waveform import SymbolGrid, generate_symbols, make_plan

from .conftest import random_in_area

# per-parameter magnitude used to size finite-difference steps
TYPICAL = {"amp": 1.0, "phase": 1.0, "doppler": 1e3, "delay": 1e-8, "aoa": 1.0}


def _params(cfg, stage="fine", snr_db=0.0, delay=52.7e-9, aoa=0.46, doppler=150.0,
            seed=0, amp=0.8, phase=0.3):
    plan = make_plan(stage, cfg)
    x = generate_symbols(plan.n_active, cfg.symbols, seed)
    return FimParams(amp, phase, doppler, delay, aoa, plan, x, 10 ** (-snr_db / 10),
                     cfg.symbol_duration, cfg.n_rx)


def numeric_partials(p: FimParams, rel=1e-7):
    """Central differences of the mean grid in each parameter."""
    out = []
    for i, name in enumerate(bounds.PARAM_NAMES):
        h = rel * max(abs(p.vector[i]), TYPICAL[name])
        up, dn = p.vector.copy(), p.vector.copy()
        up[i] += h
        dn[i] -= h
        s_up = bounds._mean(p.with_vector(up))
        s_dn = bounds._mean(p.with_vector(dn))
        out.append((s_up - s_dn) / (2 * h))
    return np.stack(out)


def test_signal_model_trivial(desk_cfg):
    p = _params(desk_cfg, delay=0.0, doppler=0.0, aoa=0.0, phase=0.0, amp=0.6)
    for n, k, m in [(0, 0, 0), (3, 5, 7), (7, 15, 9)]:
        assert signal_model(p, n, k, m) == pytest.approx(0.6 * p.symbols.values[k, m])


def test_signal_model_constant_modulus(desk_cfg):
    p = _params(desk_cfg)
    s = bounds._mean(p)
    np.testing.assert_allclose(np.abs(s), p.amplitude * p.amp)
    assert signal_model(p, 2, 3, 4) == pytest.approx(s[2, 3, 4])


def test_signal_model_matches_synthesis(scene, target, desk_cfg):
    from bisense.channel import realize_channel
    from bisense.waveform import design_sector_beamformer
    plan = make_plan("fine", desk_cfg)
    x = generate_symbols(plan.n_active, desk_cfg.symbols, 9)
    w = design_sector_beamformer(desk_cfg.n_tx, scene.sector("tx"))
    chan = realize_channel(scene, TargetState([6, 2], speed_vector=[1, 2]), desk_cfg, w, 3)
    rx = synthesize_rx(replace(desk_cfg, noise_psd=0.0), plan, x, chan, None)
    assert rx.noise_var == 0.0
    p = FimParams(abs(rx.gain), float(np.angle(rx.gain)), chan.doppler, chan.delay, chan.aoa,
                  plan, x, 1.0, desk_cfg.symbol_duration, desk_cfg.n_rx, rx.amplitude)
    np.testing.assert_allclose(bounds._mean(p), rx.y, rtol=1e-10, atol=0)


@pytest.mark.parametrize("stage", ["coarse", "fine"])
def test_partials_match_finite_differences(desk_cfg, stage):
    p = _params(desk_cfg, stage)
    analytic = signal_partials(p)
    numeric = numeric_partials(p)
    for i in range(5):
        err = np.linalg.norm(analytic[i] - numeric[i]) / np.linalg.norm(analytic[i])
        assert err < 1e-6, bounds.PARAM_NAMES[i]


def test_fim_symmetric_psd(desk_cfg):
    I = fim(_params(desk_cfg))
    np.testing.assert_allclose(I, I.T, rtol=1e-10)
    eig = np.linalg.eigvalsh(I / np.outer(np.sqrt(np.diag(I)), np.sqrt(np.diag(I))))
    assert eig.min() >= -1e-10 * eig.sum()


def test_amp_phase_cross_term_vanishes(desk_cfg):
    I = fim(_params(desk_cfg))
    assert abs(I[0, 1]) <= 1e-9 * np.sqrt(I[0, 0] * I[1, 1])


def test_fim_noise_scaling(desk_cfg):
    p = _params(desk_cfg)
    np.testing.assert_allclose(fim(replace(p, noise_var=p.noise_var * 10)), fim(p) / 10,
                               rtol=1e-12)


def test_crlb_more_symbols_never_worse(desk_cfg):
    small = crlb(_params(desk_cfg))
    big_cfg = replace(desk_cfg, symbols=2 * desk_cfg.symbols)
    big = crlb(_params(big_cfg))
    assert np.all(big <= small * (1 + 1e-9))


def test_crlb_fine_beats_coarse_on_delay(desk_cfg):
    for snr in (-20.0, 0.0, 20.0):
        c = crlb(_params(desk_cfg, "coarse", snr))
        f = crlb(_params(desk_cfg, "fine", snr))
        assert f[bounds.DELAY] < c[bounds.DELAY]


def test_crlb_vanishes_at_high_snr(desk_cfg):
    lo = crlb(_params(desk_cfg, snr_db=0.0))
    hi = crlb(_params(desk_cfg, snr_db=200.0))
    np.testing.assert_allclose(hi, lo * 1e-20, rtol=1e-8)
    assert np.all(lo >= 0)


def test_singular_fim_is_reported(desk_cfg):
    p = replace(_params(desk_cfg), amp=0.0)
    with pytest.raises(np.linalg.LinAlgError):
        crlb(p)


def test_peb_scales_inverse_sqrt_snr(scene, target, desk_cfg):
    geo = forward_geometry(scene, target, desk_cfg.f_c)
    plan = make_plan("fine", desk_cfg)
    a = peb(FimParams.from_config(desk_cfg, plan, geo.delay, geo.aoa, 0.0), scene)
    b = peb(FimParams.from_config(desk_cfg, plan, geo.delay, geo.aoa, 20.0), scene)
    assert b == pytest.approx(a / 10, rel=1e-9)


def test_peb_full_profile_minus_10db(scene, target, full_cfg):
    geo = forward_geometry(scene, target, full_cfg.f_c)
    plan = make_plan("fine", full_cfg)
    value = peb(FimParams.from_config(full_cfg, plan, geo.delay, geo.aoa, -10.0), scene)
    # mm-level, frozen regression value
    assert value == pytest.approx(1.97397147e-3, rel=1e-6)


def test_peb_independent_of_symbol_values(scene, target, desk_cfg):
    geo = forward_geometry(scene, target, desk_cfg.f_c)
    plan = make_plan("fine", desk_cfg)
    ref = peb(FimParams.from_config(desk_cfg, plan, geo.delay, geo.aoa, 0.0), scene)
    x = generate_symbols(plan.n_active, desk_cfg.symbols, 11)
    other = peb(FimParams.from_config(desk_cfg, plan, geo.delay, geo.aoa, 0.0, symbols=x), scene)
    assert other == pytest.approx(ref, rel=1e-9)


def _numeric_position_jacobian(delay, aoa, scene, rel=1e-7):
    J = np.empty((2, 2))
    for j, (v, scale) in enumerate([(delay, 1e-8), (aoa, 1.0)]):
        h = rel * max(abs(v), scale)
        args_up = [delay, aoa]
        args_dn = [delay, aoa]
        args_up[j] += h
        args_dn[j] -= h
        up = position_from_bistatic(args_up[0] * SPEED_OF_LIGHT, args_up[1], scene)
        dn = position_from_bistatic(args_dn[0] * SPEED_OF_LIGHT, args_dn[1], scene)
        J[:, j] = (up - dn) / (2 * h)
    return J


def test_position_jacobian_matches_finite_differences(scene, rng):
    from bisense.core import position_jacobian
    for p in random_in_area(rng, scene, 30, margin=0.5):
        geo = forward_geometry(scene, TargetState(p), 3e11)
        J = position_jacobian(geo.delay, geo.aoa, scene)
        num = _numeric_position_jacobian(geo.delay, geo.aoa, scene)
        for j in range(2):
            assert np.linalg.norm(J[:, j] - num[:, j]) / np.linalg.norm(J[:, j]) < 1e-6
