import numpy as np
import pytest
from scipy import special

from mspf.grid import DEFAULT_GRID, Grid, GridDistribution
from mspf.kalman import kalman_filter, kalman_smoother, moments_to_grid
from mspf.metrics import (LagScorer, ParticleScorer, dist, dist_per_time, empirical_cdf,
                          empirical_distribution)
from mspf.particle import RunConfig, run

G = DEFAULT_GRID


class TestEmpiricalCdf:
    def test_all_at_midpoint(self):
        row = empirical_cdf(np.full(10, G.points[3200]), G)
        np.testing.assert_array_equal(row, (np.arange(G.count) >= 3200).astype(float))

    def test_outside_grid(self):
        np.testing.assert_array_equal(empirical_cdf(np.array([-9.0, 9.0]), G), np.full(G.count, 0.5))

    def test_dkw(self):
        xs = np.random.default_rng(0).normal(size=10**5)
        assert np.max(np.abs(empirical_cdf(xs, G) - special.ndtr(G.points))) <= 0.007

    def test_ties_count_at_point(self):
        g = Grid(0.0, 3, 1.0)
        np.testing.assert_array_equal(empirical_cdf([1.0, 1.0, 2.5, -1.0], g), [0.25, 0.75, 0.75])


class TestDist:
    def test_identical(self):
        d = GridDistribution(G, np.random.default_rng(1).random((4, G.count)))
        assert dist(d, d) == 0.0

    def test_constant_difference(self):
        zero = GridDistribution(G, np.zeros((500, G.count)))
        one = GridDistribution(G, np.ones((500, G.count)))
        assert dist(zero, one) == 8000.0

    def test_symmetric(self):
        rng = np.random.default_rng(2)
        a = GridDistribution(G, rng.random((3, G.count)))
        b = GridDistribution(G, rng.random((3, G.count)))
        assert dist(a, b) == dist(b, a) > 0

    def test_per_time(self):
        g = Grid(0.0, 4, 0.5)
        a = GridDistribution(g, [[0, 0, 1, 1], [0, 1, 1, 1]])
        b = GridDistribution(g, [[0, 1, 1, 1], [0, 1, 1, 1]])
        np.testing.assert_array_equal(dist_per_time(a, b), [0.5, 0.0])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            dist(GridDistribution(G, np.zeros((2, G.count))), GridDistribution(G, np.zeros((3, G.count))))

    def test_grid_mismatch(self):
        a = GridDistribution(Grid(0.0, 4, 0.5), np.zeros((1, 4)))
        b = GridDistribution(Grid(0.0, 4, 0.25), np.zeros((1, 4)))
        with pytest.raises(ValueError, match="grid"):
            dist(a, b)


@pytest.fixture(scope="module")
def short_truth(series, gauss_model):
    ys = series[:60]
    lin = gauss_model.linearization()
    pred, filt, _ = kalman_filter(lin, ys)
    return ys, moments_to_grid(filt, G), moments_to_grid(kalman_smoother(lin, pred, filt), G)


def test_particle_scorer_matches_dist(short_truth, cauchy_model, backend):
    ys, filt, _ = short_truth
    scorer = ParticleScorer(filt, backend)
    res = run(cauchy_model, ys, RunConfig(m=200, multiplicity=2, seed=1), on_filter=scorer)
    ref = dist_per_time(filt, empirical_distribution(res.filter_snapshots, G))
    np.testing.assert_allclose(scorer.per_time, ref, rtol=1e-12)
    assert scorer.total == pytest.approx(ref.sum(), rel=1e-12)


def test_lag_scorer_matches_separate_runs(short_truth, cauchy_model, backend):
    ys, _, smooth = short_truth
    max_lag = 8
    lag_scorer = LagScorer(smooth, max_lag, backend)
    base = dict(m=150, multiplicity=3, strategy="stratified", seed=4, replication=2)
    run(cauchy_model, ys, RunConfig(lag=max_lag, **base), keep=False, on_step=lag_scorer)
    per_lag = lag_scorer.per_lag()
    for d in range(max_lag + 1):
        single = ParticleScorer(smooth, backend)
        run(cauchy_model, ys, RunConfig(lag=d, **base), keep=False, on_smoothed=single)
        np.testing.assert_allclose(lag_scorer.err[np.arange(len(ys)), np.minimum(d, len(ys) - 1 - np.arange(len(ys)))],
                                   single.per_time, rtol=1e-12)
        assert per_lag[d] == pytest.approx(single.total, rel=1e-12)
