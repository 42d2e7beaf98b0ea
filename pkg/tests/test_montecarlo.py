import math

import numpy as np
import pytest

from superradiance.correlations import g2_bic_analytic, g2_spectral
from superradiance.coupling import (
    DecayMatrix,
    FreeSpace,
    IdealDicke,
    SingleModeBIC,
    Tabulated,
    build_matrices,
)
from superradiance.emitters import LatticeSpec, build_square_lattice
from superradiance.montecarlo import (
    DisorderConfig,
    DisorderDistribution,
    FillingMode,
    OrientationMode,
    PositionMode,
    RateCache,
    StatsRow,
    format_stats_table,
    histogram,
    read_stats_table,
    run_disorder,
    sample_rng,
    skew_adjusted_errorbars,
    summary_stats,
)

LAT3 = LatticeSpec(3)


def _config(mode, env=None, n=40, seed=11, lattice=LAT3):
    return DisorderConfig(lattice, env or FreeSpace(), mode, n_samples=n, master_seed=seed)


# -- statistics -------------------------------------------------------------------

@pytest.mark.parametrize("samples,expected", [
    ([1.0, 2.0, 3.0], (2.0, 1.0, 0.0)),
    ([0.0, 0.0, 0.0, 4.0], (1.0, 2.0, 1.0)),
])
def test_summary_stats_fixtures(samples, expected):
    s = summary_stats(samples)
    assert (s.mean, s.std, s.skewness) == pytest.approx(expected, abs=1e-15)


def test_constant_samples():
    s = summary_stats([1.3] * 50)
    assert s.std == 0.0 and math.isnan(s.skewness)
    assert not s.skewness_defined


def test_summary_stats_needs_two():
    with pytest.raises(ValueError):
        summary_stats([1.0])


def test_errorbars_formula():
    bars = skew_adjusted_errorbars(1.457, 0.0186, -0.0742)
    assert bars.lower == pytest.approx(0.0186 * 1.0371, rel=1e-12)
    assert bars.upper == pytest.approx(0.0186 * 0.9629, rel=1e-12)
    assert bars.lower == pytest.approx(0.019290, abs=5e-7)
    assert bars.upper == pytest.approx(0.017910, abs=5e-7)
    assert not bars.degenerate


def test_errorbars_degenerate():
    bars = skew_adjusted_errorbars(1.0, 0.1, 3.0)
    assert bars.lower == 0.0 and bars.upper == pytest.approx(0.25)
    assert bars.degenerate


# -- sampling ---------------------------------------------------------------------

def test_sample_streams_are_independent_of_order():
    a = sample_rng(5, 17).random(4)
    b = sample_rng(5, 17).random(4)
    c = sample_rng(5, 18).random(4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


@pytest.mark.parametrize("mode", [FillingMode(0.6), PositionMode(20.0), OrientationMode(45.0)])
def test_reproducible_across_worker_counts(mode):
    cfg = _config(mode, n=12)
    serial = run_disorder(cfg, workers=1)
    parallel = run_disorder(cfg, workers=3)
    assert np.array_equal(serial.samples, parallel.samples)
    assert serial.config_hash == parallel.config_hash


def test_seed_changes_samples():
    a = run_disorder(_config(FillingMode(0.5), seed=1))
    b = run_disorder(_config(FillingMode(0.5), seed=2))
    assert not np.array_equal(a.samples, b.samples)


@pytest.mark.parametrize("mode", [PositionMode(10.0), OrientationMode(30.0)])
def test_cache_hits_equal_misses(mode):
    cfg = _config(mode, n=30)
    cold = run_disorder(cfg, cache=RateCache(maxsize=0))
    warm_cache = RateCache()
    first = run_disorder(cfg, cache=warm_cache)
    second = run_disorder(cfg, cache=warm_cache)
    assert second.cache_hits > first.cache_hits
    assert np.array_equal(cold.samples, first.samples)
    assert np.array_equal(first.samples, second.samples)


@pytest.mark.parametrize("mode", [PositionMode(15.0), OrientationMode(60.0)])
def test_cached_free_space_matches_direct_build(mode):
    from superradiance.montecarlo import _Sampler
    from superradiance.emitters import apply_orientation_jitter, apply_position_jitter

    cfg = _config(mode, n=5)
    sampler = _Sampler(cfg)
    lattice = build_square_lattice(LAT3)
    for i in range(5):
        rng = sample_rng(cfg.master_seed, i)
        if isinstance(mode, PositionMode):
            arr = apply_position_jitter(lattice, mode.delta_r, mode.steps, rng)
        else:
            arr = apply_orientation_jitter(lattice, mode.delta_theta, mode.steps, rng)
        direct = build_matrices(arr, FreeSpace())[0].rates
        assert np.allclose(sampler.matrix(i).rates, direct, atol=1e-12)


def test_full_filling_is_deterministic():
    dist = run_disorder(_config(FillingMode(1.0), n=5))
    g, _ = build_matrices(build_square_lattice(LAT3), FreeSpace())
    assert np.all(dist.samples == g2_spectral(g).value)


def test_filling_under_bic_model():
    dist = run_disorder(_config(FillingMode(0.5), env=SingleModeBIC(beta=0.8179),
                                lattice=LatticeSpec(11), n=20))
    # every sample keeps round(60.5) = 61 emitters
    assert np.allclose(dist.samples, g2_bic_analytic(61, 0.8179), atol=1e-12)


def test_zero_jitter_collapses():
    for mode in (PositionMode(0.0), OrientationMode(0.0)):
        dist = run_disorder(_config(mode, n=6))
        assert dist.std == 0.0


def test_tabulated_rejects_geometric_modes():
    tab = Tabulated(DecayMatrix(np.eye(9)))
    with pytest.raises(ValueError, match="unsupported combination"):
        _config(PositionMode(10.0), env=tab)
    dist = run_disorder(_config(FillingMode(0.5), env=tab, n=5))
    assert np.allclose(dist.samples, 1 - 1 / 5)


def test_default_sample_counts():
    assert DisorderConfig(LAT3, IdealDicke(), FillingMode(0.5)).n_samples == 10_000
    assert DisorderConfig(LAT3, IdealDicke(), PositionMode(10.0)).n_samples == 1_000


@pytest.mark.parametrize("make", [lambda: FillingMode(1.2), lambda: FillingMode(-0.1),
                                  lambda: PositionMode(-1.0), lambda: OrientationMode(190.0)])
def test_invalid_modes(make):
    with pytest.raises(ValueError):
        make()


def test_too_sparse_filling():
    with pytest.raises(ValueError):
        _config(FillingMode(0.1))


# -- serialisation -----------------------------------------------------------------

def test_distribution_json_round_trip(tmp_path):
    dist = run_disorder(_config(OrientationMode(30.0), n=8))
    path = tmp_path / "d.json"
    dist.to_json(path)
    back = DisorderDistribution.from_json(path)
    assert np.array_equal(back.samples, dist.samples)
    assert back.mean == dist.mean and back.std == dist.std
    assert back.config_hash == dist.config_hash


def test_nan_skew_serialised_as_null():
    dist = DisorderDistribution.from_samples([2.0, 2.0, 2.0])
    assert '"skewness": null' in dist.to_json()
    assert math.isnan(DisorderDistribution.from_json(dist.to_json()).skewness)


def test_histogram_counts():
    h = histogram([0.1, 0.2, 0.2, 0.9], n_bins=4, range=(0.0, 1.0))
    assert h.counts.tolist() == [3, 0, 0, 1]
    assert h.to_csv().splitlines()[0] == "bin_left,bin_right,count"


@pytest.mark.parametrize("kwargs", [dict(samples=[]), dict(samples=[2.0], range=(0, 1)),
                                    dict(samples=[0.5], n_bins=0)])
def test_histogram_errors(kwargs):
    with pytest.raises(ValueError):
        histogram(**kwargs)


def test_reference_table_loads():
    rows = read_stats_table()
    assert len(rows) == 9
    assert rows[0] == StatsRow("eta=0.2", 1.457, 1.86e-2, -0.0742)


def test_stats_table_round_trip():
    rows = read_stats_table()
    assert read_stats_table(format_stats_table(rows)) == rows


def test_stats_table_bad_header():
    with pytest.raises(ValueError):
        read_stats_table("a,b,c,d\n1,2,3,4\n")
