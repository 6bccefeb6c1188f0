import numpy as np
import pytest

from pim_sumrate.scenario import (ConfigError, FixedFloor, Fig2Floor, RngSeed, ScenarioConfig, generate_channels,
                                  parse_rate_floor_mode, snr_config)


def test_channel_shapes():
    ch = generate_channels(ScenarioConfig(2, 4, 4, p_max=1.0), RngSeed(7, 0))
    assert ch.h1.shape == (4, 4)
    assert ch.h2.shape == (2, 4)
    assert ch.dims == (2, 4, 4)


def test_channels_deterministic():
    cfg = ScenarioConfig(2, 4, 4, p_max=1.0)
    a = generate_channels(cfg, RngSeed(7, 0))
    b = generate_channels(cfg, RngSeed(7, 0))
    assert np.array_equal(a.h1, b.h1) and np.array_equal(a.h2, b.h2)
    c = generate_channels(cfg, RngSeed(7, 1))
    assert not np.array_equal(a.h1, c.h1)


def test_realizations_order_independent():
    cfg = ScenarioConfig(2, 3, 3, p_max=1.0)
    forward = [generate_channels(cfg, RngSeed(11, r)).h2 for r in range(5)]
    backward = [generate_channels(cfg, RngSeed(11, r)).h2 for r in reversed(range(5))][::-1]
    for a, b in zip(forward, backward):
        assert np.array_equal(a, b)


def test_streams_are_independent():
    s = RngSeed(3, 2)
    assert s.generator(0).random() != s.generator(1).random()


def test_unit_variance_law():
    cfg = ScenarioConfig(8, 8, 8, p_max=1.0)
    samples = np.concatenate([
        np.concatenate([ch.h1.ravel(), ch.h2.ravel()])
        for ch in (generate_channels(cfg, RngSeed(0, r)) for r in range(10_000))
    ])
    power = np.abs(samples) ** 2
    se = power.std() / np.sqrt(power.size)
    assert abs(power.mean() - 1.0) <= 1.96 * se
    assert abs(power.mean() - 1.0) < 0.05
    # real and imaginary parts each carry half the power
    assert abs(np.mean(samples.real ** 2) - 0.5) < 0.01
    assert abs(np.mean(samples.imag ** 2) - 0.5) < 0.01
    # neighbouring entries uncorrelated
    prod = samples[:-1] * np.conj(samples[1:])
    corr_se = np.sqrt(np.mean(np.abs(prod) ** 2) / prod.size)
    assert abs(prod.mean()) < 3 * corr_se * np.sqrt(2)


def test_snr_config_fig2_rule():
    cfg = snr_config(16, 16, 16, 20.0, "fig2_rule")
    assert cfg.p_max == pytest.approx(100.0)
    assert cfg.noise_power == 1.0
    assert cfg.rate_floors == pytest.approx((np.log2(1 + 100 / 32),) * 16)
    assert cfg.rate_floors[0] == pytest.approx(2.0444, abs=1e-4)


def test_snr_config_fixed():
    cfg = snr_config(3, 3, 3, 0.0, "fixed(0)")
    assert cfg.p_max == 1.0
    assert cfg.rate_floors == (0.0, 0.0, 0.0)
    assert snr_config(16, 16, 16, 20.0, FixedFloor(2)).rate_floors == (2.0,) * 16


@pytest.mark.parametrize("spec, expected", [
    ("fig2_rule", Fig2Floor()), ("fixed(2)", FixedFloor(2.0)), (1.5, FixedFloor(1.5)), ({"fixed": 3}, FixedFloor(3.0)),
])
def test_parse_rate_floor_mode(spec, expected):
    assert parse_rate_floor_mode(spec) == expected


@pytest.mark.parametrize("bad", ["fixed(x)", "nope", None])
def test_parse_rate_floor_mode_rejects(bad):
    with pytest.raises(ConfigError):
        parse_rate_floor_mode(bad)


@pytest.mark.parametrize("kwargs", [
    dict(num_users=3, num_bs_antennas=2, num_pim_units=4, p_max=1.0),
    dict(num_users=3, num_bs_antennas=4, num_pim_units=2, p_max=1.0),
    dict(num_users=2, num_bs_antennas=2, num_pim_units=2, p_max=1.0, noise_power=0.0),
    dict(num_users=2, num_bs_antennas=2, num_pim_units=2, p_max=-1.0),
    dict(num_users=2, num_bs_antennas=2, num_pim_units=2, p_max=1.0, rate_floors=(1.0, -1.0)),
    dict(num_users=2, num_bs_antennas=2, num_pim_units=2, p_max=1.0, rate_floors=(1.0,)),
    dict(num_users=0, num_bs_antennas=2, num_pim_units=2, p_max=1.0),
])
def test_invalid_configs(kwargs):
    with pytest.raises(ConfigError):
        ScenarioConfig(**kwargs)


def test_convergence_study_may_exceed_antennas():
    cfg = ScenarioConfig(16, 8, 16, p_max=100.0, require_zf=False)
    assert generate_channels(cfg, RngSeed(0)).h2.shape == (16, 16)


def test_snr_must_be_finite():
    with pytest.raises(ConfigError):
        snr_config(2, 2, 2, float("inf"))
