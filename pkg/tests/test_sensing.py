import numpy as np
import pytest
from scipy import stats

from plumeseek.diffusion import ConcentrationField, build_canonical_chain, mean_concentration_field
from plumeseek.lattice import EnvironmentMap, build_complete_grid
from plumeseek.sensing import (
    CONTROLS,
    PRIMARY,
    SECONDARY,
    Control,
    DetectionMatrix,
    LinkObservation,
    evolve_map,
    execute_control,
    observe_links,
    realise_control,
    sample_count,
)


def _uniform_field(grid, value):
    return ConcentrationField(grid, np.full(len(grid.nodes), float(value)), (0, 0), float(value))


def test_detection_matrix_columns_sum_to_one():
    pi = DetectionMatrix(0.8, 0.1)
    np.testing.assert_allclose(pi.matrix().sum(axis=0), 1.0)
    assert pi.likelihood(1, 1) == 0.8
    assert pi.likelihood(0, 0) == pytest.approx(0.9)


@pytest.mark.parametrize("p_d,p_fa", [(0.5, 0.5), (0.2, 0.3), (1.1, 0.0), (0.9, -0.1)])
def test_detection_matrix_validation(p_d, p_fa):
    with pytest.raises(ValueError):
        DetectionMatrix(p_d, p_fa)


def test_control_vectors():
    assert [c.displacement for c in CONTROLS] == [(0, 0), (0, 1), (1, 0), (0, -1), (-1, 0)]
    assert Control.from_label("left") is Control.LEFT
    assert Control.UP.apply((2, 3)) == (2, 4)


def test_sample_count_moments(grid9):
    rng = np.random.default_rng(0)
    field = _uniform_field(grid9, 12.0)
    draws = np.array([sample_count(field, (0, 0), rng) for _ in range(100_000)])
    assert 11.9 <= draws.mean() <= 12.1
    assert 11.6 <= draws.var() <= 12.4


def test_sample_counts_fit_the_poisson_law(env9):
    field = mean_concentration_field(build_canonical_chain(env9), (0, 7), 12.0)
    theta = field.at((0, 7))
    rng = np.random.default_rng(5)
    draws = np.array([sample_count(field, (0, 7), rng) for _ in range(20_000)])

    lo, hi = int(stats.poisson.ppf(0.001, theta)), int(stats.poisson.ppf(0.999, theta))
    inner = np.arange(lo + 1, hi)
    observed = [np.sum(draws <= lo), *[np.sum(draws == k) for k in inner], np.sum(draws >= hi)]
    probs = [stats.poisson.cdf(lo, theta), *stats.poisson.pmf(inner, theta), stats.poisson.sf(hi - 1, theta)]
    expected = len(draws) * np.array(probs)
    assert stats.chisquare(observed, expected).pvalue > 1e-3


def test_sample_count_on_rim_is_zero(env9):
    field = ConcentrationField(env9.grid, np.zeros(len(env9.grid.nodes)), (0, 7), 12.0)
    assert sample_count(field, (9, -4), seed=1) == 0


def test_perfect_primary_detector_reports_truth(env9):
    obs = observe_links(env9, (0, 0), DetectionMatrix(1.0, 0.0), DetectionMatrix(0.8, 0.1), seed=2)
    assert len(obs) == 8
    for ob in obs:
        assert isinstance(ob, LinkObservation)
        if ob.tier == PRIMARY:
            assert ob.z == int(env9.status[ob.link_id])
    assert [ob.slot for ob in obs] == list(range(8))
    assert {ob.tier for ob in obs} == {PRIMARY, SECONDARY}


def test_secondary_detector_error_rates(grid9):
    env = EnvironmentMap(grid9, np.ones(grid9.L))
    rng = np.random.default_rng(3)
    zs = [
        ob.z
        for _ in range(5000)
        for ob in observe_links(env, (0, 0), DetectionMatrix(1.0, 0.0), DetectionMatrix(0.8, 0.1), rng)
        if ob.tier == SECONDARY
    ]
    assert np.mean(zs) == pytest.approx(0.8, abs=0.01)


def test_realise_control_error_rate():
    rng = np.random.default_rng(4)
    assert all(realise_control(Control.UP, 0.0, rng) is Control.UP for _ in range(200))
    assert all(realise_control(Control.UP, 1.0, rng) is not Control.UP for _ in range(200))
    wrong = np.mean([realise_control(Control.RIGHT, 0.04, rng) is not Control.RIGHT for _ in range(40_000)])
    assert wrong == pytest.approx(0.04, abs=0.005)


def test_blocked_and_off_grid_moves_stay(grid9):
    status = np.ones(grid9.L, dtype=np.uint8)
    status[grid9.link_id((0, 0), (1, 0))] = 0
    env = EnvironmentMap(grid9, status)

    move = execute_control((0, 0), Control.RIGHT, 0.0, env, seed=0)
    assert move.pos == (0, 0) and move.realised is Control.RIGHT
    assert execute_control((0, 0), Control.UP, 0.0, env, seed=0).pos == (0, 1)
    assert execute_control((9, -4), Control.RIGHT, 0.0, env, seed=0).pos == (9, -4)
    with pytest.raises(ValueError):
        execute_control((20, 0), Control.UP, 0.0, env)


def test_evolve_map_without_flips_returns_same_map(env9):
    assert evolve_map(env9, 1.0, seed=0) is env9


def test_evolve_map_flip_rate(env9):
    evolved = evolve_map(env9, 0.9, seed=5)
    flipped = np.mean(evolved.status != env9.status)
    assert flipped == pytest.approx(0.1, abs=0.04)


def test_evolve_map_can_keep_connectivity(env9):
    rng = np.random.default_rng(6)
    env = env9
    for _ in range(20):
        env = evolve_map(env, 0.95, rng, keep_connected=True)
        assert env.is_connected()


def test_evolve_map_validates_probability(env9):
    with pytest.raises(ValueError):
        evolve_map(env9, 0.3)
