import numpy as np
import pytest

from plumeseek.analytic import DomainGeom
from plumeseek.control import (
    VisitHistory,
    admissible_controls,
    believed_blocked,
    moved_searcher,
    bhatt_J,
    bhatt_J_exact,
    expected_reward,
    ideal_future_count,
    reward_from_terms,
    reward_sample,
    round_half_away,
    select_control,
)
from plumeseek.lattice import EnvironmentMap
from plumeseek.rbpf import RaoBlackwellFilter, count_likelihood_I, init_particles
from plumeseek.sensing import CONTROLS, DISPLACEMENTS, Control, DetectionMatrix, observe_links

GEOM = DomainGeom(9)


@pytest.fixture(scope="module")
def moves(grid9):
    return grid9.move_table(DISPLACEMENTS)


def _cluster(grid, centre, N=200, spread=1.5, searcher=(0, 0), seed=0):
    """Particles at *searcher* with sources scattered around *centre*."""
    ps = init_particles(N, searcher, grid, GEOM, seed=seed)
    rng = np.random.default_rng(seed)
    ps.source = np.asarray(centre, dtype=float) + rng.uniform(-spread, spread, size=(N, 2))
    return ps


def test_round_half_away():
    assert round_half_away(2.5) == 3
    assert round_half_away(-0.5) == -1
    assert list(round_half_away(np.array([0.5, 1.49, 3.5]))) == [1, 1, 4]


def test_ideal_future_count(grid9, moves):
    ps = init_particles(1, (0, -1), grid9, GEOM, seed=0)
    ps.source[0] = (0.0, 7.0)
    # deterministic move to the origin: 15 * 0.2513 = 3.77
    assert ideal_future_count(ps, 0, Control.UP, GEOM, moves) == 4


@pytest.mark.parametrize(
    "eta,theta,c,n", [(15, 1, 0.25, 3), (15, 1, 6.9, 100), (40, 0.5, 0.1, 0), (120, 0.1, 1.2, 14)]
)
def test_quadrature_against_closed_form(eta, theta, c, n):
    quad = bhatt_J(eta, theta, c, n)
    assert quad == pytest.approx(bhatt_J_exact(eta, theta, c, n), rel=1e-6)
    assert quad == pytest.approx(bhatt_J(eta, theta, c, n, points=2560), rel=1e-6)


def test_J_bounded_by_root_I():
    rng = np.random.default_rng(0)
    eta = rng.uniform(10, 60, 200)
    theta = rng.uniform(0.05, 2, 200)
    c = rng.uniform(1e-3, 6.9, 200)
    n = rng.integers(0, 40, 200)
    J = bhatt_J(eta, theta, c, n)
    I = count_likelihood_I(eta, theta, c, n)
    assert np.all(J <= np.sqrt(I) * (1 + 1e-9))
    assert np.all(bhatt_J_exact(eta, theta, c, n) <= np.sqrt(I) * (1 + 1e-12))


def test_reward_is_non_negative(grid9, moves):
    rng = np.random.default_rng(1)
    for k in range(100):
        ps = _cluster(grid9, rng.uniform(-4, 4, 2), N=20, spread=rng.uniform(0.1, 3), seed=k)
        ps.eta = rng.uniform(5, 30, 20)
        ps.weights = rng.dirichlet(np.ones(20))
        u = CONTROLS[k % 5]
        assert reward_sample(ps, u, int(rng.integers(0, 20)), GEOM, moves, method="exact") >= 0.0


def test_reward_vanishes_without_uncertainty(grid9, moves):
    ps = init_particles(50, (0, 0), grid9, GEOM, seed=0)
    ps.source[:] = (0.0, 7.0)
    ps.eta[:] = 1e6
    ps.theta[:] = 12.0 / 1e6
    for n in (0, 3, 8):
        assert reward_sample(ps, Control.UP, n, GEOM, moves, method="exact") < 1e-4


def test_reward_from_terms_guards_empty_denominator():
    assert reward_from_terms([0.5, 0.5], [-np.inf, -np.inf], [-np.inf, -np.inf]) == 0.0


def test_mirrored_sources_give_equal_left_right_rewards(grid9, moves):
    half = _cluster(grid9, (3.0, 2.0), N=100, seed=2)
    ps = init_particles(200, (0, 0), grid9, GEOM, seed=2)
    ps.source = np.vstack([half.source, half.source * np.array([-1.0, 1.0])])
    for n in (0, 2, 5):
        left = reward_sample(ps, Control.LEFT, n, GEOM, moves)
        right = reward_sample(ps, Control.RIGHT, n, GEOM, moves)
        assert left == pytest.approx(right, rel=1e-9)


def test_moving_toward_the_sources_is_more_informative(grid9, moves):
    ps = _cluster(grid9, (0.0, 5.0), seed=3)
    up = expected_reward(ps, Control.UP, 400, GEOM, moves, seed=4, method="exact")
    down = expected_reward(ps, Control.DOWN, 400, GEOM, moves, seed=4, method="exact")
    assert up > down


def test_expected_reward_is_seeded_and_method_consistent(grid9, moves):
    ps = _cluster(grid9, (2.0, -3.0), seed=5)
    a = expected_reward(ps, Control.RIGHT, 100, GEOM, moves, seed=6)
    b = expected_reward(ps, Control.RIGHT, 100, GEOM, moves, seed=6)
    exact = expected_reward(ps, Control.RIGHT, 100, GEOM, moves, seed=6, method="exact")
    assert a == b
    assert a == pytest.approx(exact, rel=1e-4)
    with pytest.raises(ValueError):
        expected_reward(ps, Control.RIGHT, 0, GEOM, moves)


def test_admissible_controls_exclude_leaving_the_grid(grid9):
    assert set(admissible_controls(grid9, (9, -4))) == {Control.STAY, Control.UP, Control.LEFT}
    assert len(admissible_controls(grid9, (0, 0))) == 5


def test_visit_history_window():
    history = VisitHistory(window=10, limit=3)
    for _ in range(3):
        history.append((1, 1))
    assert not history.oscillating((1, 1))
    history.append((1, 1))
    assert history.oscillating((1, 1))
    for _ in range(10):
        history.append((0, 0))
    assert history.count((1, 1)) == 0
    assert len(history) == 10


def test_select_control_prefers_the_sources(grid9):
    ps = _cluster(grid9, (0.0, 5.0), seed=7)
    history = VisitHistory()
    history.append((0, 0))
    decision = select_control(ps, history, (0, 0), GEOM, 200, seed=8, method="exact")
    assert not decision.heuristic_triggered
    assert set(decision.rewards) == {"stay", "up", "right", "down", "left"}
    assert decision.rewards["up"] > decision.rewards["down"]
    assert decision.rewards[decision.control.label] == max(decision.rewards.values())


def test_select_control_breaks_oscillation(grid9):
    ps = _cluster(grid9, (0.0, 5.0), searcher=(9, -4), seed=9)
    history = VisitHistory()
    for _ in range(4):
        history.append((9, -4))
    decision = select_control(ps, history, (9, -4), GEOM, 50, seed=10)
    assert decision.heuristic_triggered
    assert decision.rewards == {}
    assert decision.control in admissible_controls(grid9, (9, -4))
    assert decision.to_dict()["heuristic_triggered"] is True


def _dead_end(grid, N=200, seed=11):
    """Searcher at (0, 0) after a perfect reading: only the east link is there."""
    ps = _cluster(grid, (0.0, 5.0), N=N, seed=seed)
    for other in [(-1, 0), (0, 1), (0, -1)]:
        ps.q[:, grid.link_id((0, 0), other)] = 0.0
    ps.q[:, grid.link_id((0, 0), (1, 0))] = 1.0
    return ps


def test_blocked_moves_are_hypothesised_as_staying(grid9, moves):
    ps = _dead_end(grid9)
    assert believed_blocked(ps, Control.UP).all()
    assert not believed_blocked(ps, Control.RIGHT).any()
    assert not believed_blocked(ps, Control.STAY).any()
    assert np.array_equal(moved_searcher(ps, Control.UP, moves), ps.searcher)
    for n in (0, 2, 5):
        assert reward_sample(ps, Control.UP, n, GEOM, moves) == reward_sample(ps, Control.STAY, n, GEOM, moves)
    assert ideal_future_count(ps, 0, Control.UP, GEOM, moves) == ideal_future_count(ps, 0, Control.STAY, GEOM, moves)


def test_admissible_controls_follow_the_believed_map(grid9):
    ps = _dead_end(grid9)
    assert admissible_controls(grid9, (0, 0), ps) == [Control.STAY, Control.RIGHT]
    assert len(admissible_controls(grid9, (0, 0))) == 5


def test_controller_never_commands_a_believed_blocked_move(grid9):
    ps = _dead_end(grid9)
    # the sources lie straight up, behind the missing link
    for seed in range(10):
        decision = select_control(ps, VisitHistory(), (0, 0), GEOM, 50, seed=seed)
        assert decision.control in (Control.STAY, Control.RIGHT)
        assert set(decision.rewards) == {"stay", "right"}

    history = VisitHistory()
    for _ in range(4):
        history.append((0, 0))
    for seed in range(20):
        decision = select_control(ps, history, (0, 0), GEOM, 50, seed=seed)
        assert decision.heuristic_triggered
        assert decision.control in (Control.STAY, Control.RIGHT)


def test_filter_and_controller_escape_a_dead_end(grid9):
    status = np.ones(grid9.L, dtype=np.uint8)
    for other in [(-1, 0), (0, 1), (0, -1)]:
        status[grid9.link_id((0, 0), other)] = 0
    env = EnvironmentMap(grid9, status)
    perfect = DetectionMatrix(1.0, 0.0)
    ps = init_particles(300, (0, 0), grid9, GEOM, seed=12)
    filt = RaoBlackwellFilter(ps, GEOM, p_e=0.0, primary=perfect, secondary=DetectionMatrix(0.8, 0.1), seed=12)
    filt.step(Control.STAY, 1, observe_links(env, (0, 0), perfect, DetectionMatrix(0.8, 0.1), seed=13))
    for seed in range(5):
        decision = select_control(filt.particles, VisitHistory(), (0, 0), GEOM, 50, seed=seed)
        assert decision.control in (Control.STAY, Control.RIGHT)
