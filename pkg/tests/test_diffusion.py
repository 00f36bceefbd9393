import csv
from pathlib import Path

import numpy as np
import pytest

from plumeseek.diffusion import (
    CanonicalChain,
    ChainError,
    build_canonical_chain,
    mean_concentration_field,
    random_walk_oracle,
    write_field_csv,
)
from plumeseek.lattice import EnvironmentMap, build_complete_grid, generate_environment


def _complete(radius, **kwargs):
    grid = build_complete_grid(radius, **kwargs)
    return EnvironmentMap(grid, np.ones(grid.L))


def test_single_transient_node_chain():
    chain = build_canonical_chain(_complete(1, closed_disk=True))
    assert chain.transient_nodes == ((0, 0),)
    assert chain.absorbing_count == 4
    assert chain.Q.shape == (1, 1) and chain.Q[0, 0] == 0
    np.testing.assert_allclose(chain.R[0], [0.25] * 4)

    field = mean_concentration_field(chain, (0, 0), 3.0)
    assert field.at((0, 0)) == pytest.approx(3.0)
    assert field.at((1, 0)) == 0.0


def test_rows_are_stochastic(env9):
    chain = build_canonical_chain(env9)
    rows = np.hstack([chain.R, chain.Q]).sum(axis=1)
    np.testing.assert_allclose(rows, 1.0)
    entries = chain.Q[chain.Q > 0]
    assert np.all(np.isin(np.round(1.0 / entries, 9), [1.0, 2.0, 3.0, 4.0]))


def test_degree_rule_for_three_links():
    env = _complete(3)
    node, other = (0, 0), (1, 0)
    status = np.array(env.status)
    status[env.grid.link_id(node, other)] = 0
    chain = build_canonical_chain(env.with_status(status))
    ti = chain.transient_index(node)
    row = np.concatenate([chain.R[ti], chain.Q[ti]])
    np.testing.assert_allclose(row[row > 0], [1 / 3] * 3)


def test_field_is_zero_on_rim_and_linear_in_rate(env9):
    chain = build_canonical_chain(env9)
    field = mean_concentration_field(chain, (0, 7), 12.0)
    assert np.all(field.values[env9.grid.boundary] == 0.0)
    assert np.all(field.values >= 0)
    assert field.at((0, 7)) >= 12.0  # F_ii >= 1

    doubled = mean_concentration_field(chain, (0, 7), 24.0)
    np.testing.assert_allclose(doubled.values, 2 * field.values, rtol=1e-12)
    np.testing.assert_allclose(field.scaled(24.0).values, doubled.values, rtol=1e-12)


def test_source_on_rim_is_rejected(env9):
    chain = build_canonical_chain(env9)
    with pytest.raises(ChainError):
        mean_concentration_field(chain, (9, -4), 12.0)
    with pytest.raises(ValueError):
        mean_concentration_field(chain, (0, 7), 0.0)


def test_isolated_transient_node_is_an_error():
    env = _complete(3)
    status = np.array(env.status)
    for other in env.grid.neighbours((0, 0)):
        status[env.grid.link_id((0, 0), other)] = 0
    with pytest.raises(ChainError):
        build_canonical_chain(env.with_status(status))


def test_random_walk_oracle_is_seeded():
    env = _complete(2)
    a = random_walk_oracle(env, (0, 0), 2000, seed=4)
    b = random_walk_oracle(env, (0, 0), 2000, seed=4)
    np.testing.assert_array_equal(a, b)


def test_random_walk_oracle_on_single_node_chain():
    env = _complete(1, closed_disk=True)
    visits = random_walk_oracle(env, (0, 0), 100, seed=0)
    assert visits[env.grid.node_index[(0, 0)]] == 1.0


def test_random_walk_oracle_matches_fundamental_matrix():
    env = _complete(3)
    field = mean_concentration_field(build_canonical_chain(env), (0, 0), 1.0)
    visits = random_walk_oracle(env, (0, 0), 200_000, seed=1)
    mask = field.values > 0.2
    rel = np.abs(visits[mask] - field.values[mask]) / field.values[mask]
    assert rel.max() < 0.04


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(5))
def test_oracle_equivalence_on_random_environments(seed):
    grid = build_complete_grid(4)
    env = generate_environment(grid, 0.25, seed=seed)
    source = (0, 0)
    field = mean_concentration_field(build_canonical_chain(env), source, 1.0)
    visits = random_walk_oracle(env, source, 1_000_000, seed=100 + seed)
    mask = field.values > 0.01
    rel = np.abs(visits[mask] - field.values[mask]) / field.values[mask]
    assert rel.max() < 0.02


def test_write_field_csv(tmp_path: Path):
    env = _complete(2, closed_disk=True)
    field = mean_concentration_field(build_canonical_chain(env), (0, 0), 5.0)
    path = write_field_csv(field, tmp_path / "field.csv")
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(env.grid.nodes)
    for row in rows:
        node = (int(row["x"]), int(row["y"]))
        if env.grid.is_boundary(node):
            assert float(row["theta"]) == 0.0
        else:
            assert float(row["theta"]) > 0.0


def test_field_is_independent_of_node_order(env9):
    chain = build_canonical_chain(env9)
    ref = mean_concentration_field(chain, (0, 7), 12.0)

    perm = np.random.default_rng(6).permutation(chain.transient_count)
    transient = tuple(chain.transient_nodes[i] for i in perm)
    r = chain.absorbing_count
    state_of = {n: i for i, n in enumerate(chain.absorbing_nodes)}
    state_of.update({n: r + i for i, n in enumerate(transient)})
    relabelled = CanonicalChain(
        chain.grid,
        chain.absorbing_nodes,
        transient,
        chain.Q[np.ix_(perm, perm)],
        chain.R[perm],
        state_of,
    )
    field = mean_concentration_field(relabelled, (0, 7), 12.0)
    np.testing.assert_allclose(field.values, ref.values, rtol=1e-10, atol=1e-12)
