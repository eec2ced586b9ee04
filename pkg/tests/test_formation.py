import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from formctl.errors import (
    DimensionMismatch,
    NonPositiveGain,
    SpecGraphMismatch,
)
from formctl.formation import (
    ControllerGains,
    FormationSpec,
    augmented_error,
    error_operator,
    formation_error,
    formation_error_rate,
    inverse_error,
    offsets_from_targets,
    random_offsets,
    solve_equilibrium,
    validate_spec,
)
from formctl.graph import build_graph, laplacian_plus_b

from .strategies import comm_graphs


def two_agent_line():
    # n=1 path with only agent 1 seeing the leader
    g = build_graph(2, [(1, 2)], [1, 0])
    spec = FormationSpec(
        n=1,
        offsets={
            (1, 2): np.array([0.5]),
            (2, 1): np.array([-0.5]),
            (1, 0): np.array([0.2]),
        },
    )
    return g, spec


def test_hand_evaluated_errors():
    g, spec = two_agent_line()
    e = formation_error(g, spec, [np.array([1.0]), np.array([0.0])], np.array([0.0]))
    assert np.isclose(e[0][0], 2.7) and np.isclose(e[1][0], -1.5)
    r = formation_error_rate(g, spec, [np.array([1.0]), np.array([0.0])], np.array([0.0]))
    assert np.isclose(r[0][0], 2.0) and np.isclose(r[1][0], -1.0)


def test_zero_error_at_consistent_offsets(paper_graph, rng):
    targets = rng.normal(0, 2, (5, 3))
    leader = rng.normal(0, 1, 3)
    spec = offsets_from_targets(paper_graph, targets, leader)
    e = formation_error(paper_graph, spec, list(targets), leader)
    assert max(np.linalg.norm(v) for v in e) <= 1e-12
    r = formation_error_rate(paper_graph, spec, [np.ones(3)] * 5, np.ones(3))
    assert max(np.linalg.norm(v) for v in r) == 0.0


def _stacked_oracle(g, spec, positions, leader_pos):
    # independent matrix route: kron(L+B, I) on stacked positions plus the
    # affine offset/leader term assembled directly from the definition
    n = spec.n
    H = laplacian_plus_b(g)
    x = np.concatenate(positions)
    affine = np.zeros(g.num_followers * n)
    for i in range(1, g.num_followers + 1):
        s_i = np.zeros(n)
        for j in g.neighbor_sets[i - 1]:
            s_i += spec.offsets[(i, j)]
        if g.has_leader_link(i):
            s_i += spec.offsets[(i, 0)] - leader_pos
        affine[(i - 1) * n : i * n] = s_i
    return np.kron(H, np.eye(n)) @ x + affine


@settings(deadline=None, max_examples=60)
@given(comm_graphs(), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_matrix_form_equivalence(g, n, seed):
    rng = np.random.default_rng(seed)
    spec = random_offsets(g, n, seed)
    positions = [rng.normal(0, 3, n) for _ in range(g.num_followers)]
    leader = rng.normal(0, 3, n)
    stacked = np.concatenate(formation_error(g, spec, positions, leader))
    assert np.max(np.abs(stacked - _stacked_oracle(g, spec, positions, leader))) <= 1e-12


def test_rate_matches_finite_difference(paper_graph, rng):
    spec = random_offsets(paper_graph, 3, 5)
    pos0 = [rng.normal(0, 1, 3) for _ in range(5)]
    vel = [rng.normal(0, 1, 3) for _ in range(5)]
    lp0, lv = rng.normal(0, 1, 3), rng.normal(0, 1, 3)
    h = 1e-6
    rate = formation_error_rate(paper_graph, spec, vel, lv)
    e_plus = formation_error(
        paper_graph, spec, [p + h * v for p, v in zip(pos0, vel)], lp0 + h * lv
    )
    e_minus = formation_error(
        paper_graph, spec, [p - h * v for p, v in zip(pos0, vel)], lp0 - h * lv
    )
    fd = [(ep - em) / (2 * h) for ep, em in zip(e_plus, e_minus)]
    assert max(np.linalg.norm(r - f) for r, f in zip(rate, fd)) <= 1e-8


def test_augmented_error_cases():
    assert np.array_equal(augmented_error(np.zeros(2), np.zeros(2), 1.0), np.zeros(2))
    out = augmented_error(np.array([1.0, 0.0]), np.array([0.0, 2.0]), 3.0)
    assert np.array_equal(out, np.array([3.0, 2.0]))
    e = np.array([0.3, -1.2])
    assert np.allclose(augmented_error(e, e, 1.0), 2 * e, rtol=0, atol=0)
    with pytest.raises(NonPositiveGain):
        augmented_error(e, e, 0.0)


@given(
    st.lists(st.floats(-50, 50, allow_nan=False), min_size=3, max_size=3),
    st.lists(st.floats(-50, 50, allow_nan=False), min_size=3, max_size=3),
    st.floats(0.1, 10),
)
def test_augmented_error_linear(a, b, k1):
    a, b = np.array(a), np.array(b)
    lhs = augmented_error(a + b, 2 * a - b, k1)
    rhs = augmented_error(a, 2 * a, k1) + augmented_error(b, -b, k1)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-9)


def test_inverse_error_cases():
    out = inverse_error(np.array([2.0, 0.0]), 1e-3)
    assert np.array_equal(out, np.array([0.5, 0.0]))
    assert np.array_equal(inverse_error(np.zeros(3), 1e-3), np.zeros(3))
    # just inside the dead zone
    assert np.array_equal(inverse_error(np.array([9e-4, 0.0]), 1e-3), np.zeros(2))


@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=2, max_size=6))
def test_inverse_error_inner_product(vals):
    e2 = np.array(vals)
    eps = 1e-3
    ehat = inverse_error(e2, eps)
    if np.linalg.norm(e2) >= eps:
        assert abs(float(np.dot(e2, ehat)) - 1.0) <= 1e-12
    else:
        assert np.array_equal(ehat, np.zeros_like(e2))


def test_equilibrium_round_trip(paper_graph, rng):
    targets = rng.normal(0, 2, (5, 3))
    leader = rng.normal(0, 1, 3)
    spec = offsets_from_targets(paper_graph, targets, leader)
    sol = solve_equilibrium(paper_graph, spec, leader)
    assert np.max(np.abs(np.array(sol) - targets)) <= 1e-9


def test_equilibrium_single_agent():
    g = build_graph(1, [], [1])
    c = np.array([0.4, -0.7])
    spec = FormationSpec(n=2, offsets={(1, 0): c})
    leader = np.array([1.0, 2.0])
    sol = solve_equilibrium(g, spec, leader)
    assert np.allclose(sol[0], leader - c, atol=1e-12)


@settings(deadline=None, max_examples=40)
@given(comm_graphs(), st.integers(0, 2**32 - 1))
def test_equilibrium_zeroes_error_despite_inconsistent_offsets(g, seed):
    spec = random_offsets(g, 3, seed)
    leader = np.random.default_rng(seed).normal(0, 2, 3)
    sol = solve_equilibrium(g, spec, leader)
    e = formation_error(g, spec, sol, leader)
    assert max(np.linalg.norm(v) for v in e) <= 1e-10


def test_antisymmetric_offsets(paper_graph):
    spec = random_offsets(paper_graph, 3, 123, antisymmetric=True)
    for (i, j), off in spec.offsets.items():
        if j != 0:
            assert np.array_equal(off, -spec.offsets[(j, i)])


def test_spec_validation(paper_graph):
    spec = random_offsets(paper_graph, 3, 1)
    validate_spec(paper_graph, spec)
    missing = FormationSpec(n=3, offsets={k: v for k, v in list(spec.offsets.items())[:-1]})
    with pytest.raises(SpecGraphMismatch):
        validate_spec(paper_graph, missing)
    extra = FormationSpec(n=3, offsets={**spec.offsets, (1, 4): np.zeros(3)})
    with pytest.raises(SpecGraphMismatch):
        validate_spec(paper_graph, extra)
    bad_dim = FormationSpec(n=3, offsets={**spec.offsets, (1, 2): np.zeros(2)})
    with pytest.raises(DimensionMismatch):
        validate_spec(paper_graph, bad_dim)
    with pytest.raises(DimensionMismatch):
        formation_error(paper_graph, spec, [np.zeros(3)] * 4, np.zeros(3))


def test_error_operator_matches_public_route(paper_graph, rng):
    spec = random_offsets(paper_graph, 3, 99)
    H, s, b = error_operator(paper_graph, spec)
    positions = rng.normal(0, 2, (5, 3))
    leader = rng.normal(0, 2, 3)
    fast = H @ positions + s - b[:, None] * leader
    slow = np.array(formation_error(paper_graph, spec, list(positions), leader))
    assert np.max(np.abs(fast - slow)) <= 1e-12


def test_gains_validation():
    g = ControllerGains.uniform(3)
    assert g.k1.shape == (3,) and g.eps == 1e-3
    with pytest.raises(NonPositiveGain):
        ControllerGains.uniform(3, k2=0.0)
    with pytest.raises(NonPositiveGain):
        ControllerGains.uniform(3, eps=-1.0)
    with pytest.raises(NonPositiveGain):
        ControllerGains(
            k1=np.array([1.0, -1.0]),
            k2=np.ones(2),
            mu1=np.ones(2),
            mu2=np.ones(2),
            eps=0.1,
        )
