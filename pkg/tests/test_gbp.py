import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_cluster_graph, random_model, random_tree_model, relative_error
from sgbp.edges import EdgeClass
from sgbp.gbp import (
    GBPError,
    OpCounter,
    Plan,
    belief_messages,
    compute_belief,
    contraction_probe,
    gbp_iterate,
    gbp_update_edge,
    init_messages,
    messages_from_dict,
    messages_to_dict,
    mhat,
    normalize,
    run_to_fixed_point,
    uniform_messages,
    variable_marginals,
)
from sgbp.model import Factor, ModelSpec, build_model
from sgbp.oracle import exact_marginals, reference_belief, reference_update
from sgbp.regions import cluster_region_graph
from sgbp.tables import FactorTable


def _random_messages(rng, plan):
    m = uniform_messages(plan.graph, plan.d)
    for i, t in enumerate(m.tables):
        m.tables[i] = normalize(rng.uniform(0.1, 1.0, t.shape))
    return m


@settings(max_examples=120, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_update_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, int(rng.integers(3, 7)), int(rng.integers(2, 4)))
    plan = Plan.build(model, random_cluster_graph(rng, model))
    m = _random_messages(rng, plan)
    for meta in plan.metas:
        ours = gbp_update_edge(m, meta)
        ref = reference_update(m, meta.edge, plan.graph, model)
        assert relative_error(ours, ref) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_belief_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, int(rng.integers(3, 6)), 2)
    plan = Plan.build(model, random_cluster_graph(rng, model))
    m = _random_messages(rng, plan)
    for r in plan.graph.regions:
        ours = compute_belief(m, r.id, plan.graph, model).values
        assert relative_error(ours, reference_belief(m, r.id, plan.graph, model)) < 1e-12


def test_mhat_on_grid_edge(grid2):
    rng = np.random.default_rng(0)
    m = _random_messages(rng, grid2)
    meta = grid2.meta(("1245", "25"))
    expected = m[("4578", "45")] / m[("45", "5")][None, :]
    assert np.allclose(mhat(m, meta), expected, rtol=1e-14)


def test_belief_message_set_of_separator(grid2):
    assert belief_messages("25", grid2.graph) == [
        ("1245", "25"), ("2356", "25"), ("45", "5"), ("56", "5"), ("58", "5")
    ]


def test_dominant_edge_sum_costs_d_to_the_fourth(grid4):
    c = OpCounter()
    gbp_update_edge(init_messages(grid4), grid4.meta(("1245", "25")), counter=c)
    assert c["sum"] == 4**4


def test_reference_is_fixed_point(grid4, grid4_star):
    out = gbp_iterate(grid4, grid4_star)
    assert np.max(np.abs(out.vector() - grid4_star.vector())) < 1e-10


def test_fixed_point_beliefs_are_consistent(grid4, grid4_star):
    g = grid4.graph
    for p, c in g.edges:
        bp = compute_belief(grid4_star, p, g, grid4.model)
        bc = compute_belief(grid4_star, c, g, grid4.model)
        assert np.allclose(bp.marginalize(g[c].variables).values, bc.values, atol=1e-9)


def test_fixed_point_marginals_are_close_to_exact(grid2, grid2_star):
    approx = variable_marginals(grid2_star, grid2.graph, grid2.model)
    exact = exact_marginals(grid2.model)
    for v in range(grid2.model.n):
        assert np.allclose(approx[v], exact.marginal(v), atol=0.05)


def test_uniform_factors_keep_uniform_messages():
    factors = [Factor.from_flat(f"u{v}", [v], [1, 1, 1], 3) for v in range(4)]
    factors += [Factor(f"p{a}{b}", (a, b), FactorTable((a, b), np.ones((3, 3)))) for a, b in [(0, 1), (1, 2), (2, 3), (0, 3)]]
    model = build_model(ModelSpec(4, 3, tuple(factors)))
    plan = Plan.build(model, cluster_region_graph(model, [(0, 1, 2), (1, 2, 3), (0, 3)]))
    m = uniform_messages(plan.graph, 3)
    out = gbp_iterate(plan, m)
    assert np.allclose(out.vector(), m.vector(), atol=1e-15)


def test_zero_iterations_returns_start(grid2):
    res = run_to_fixed_point(grid2, max_iters=0)
    assert not res.converged and res.iters == 0 and res.residuals == []
    assert np.array_equal(res.messages.vector(), init_messages(grid2).vector())


def test_e1_messages_start_at_their_value():
    rng = np.random.default_rng(5)
    model = random_model(rng, 4, 2, extra=2)
    plan = Plan.build(model, cluster_region_graph(model, [(0, 1, 2), (0, 3)]))
    m = init_messages(plan)
    for e in plan.edges_of(EdgeClass.E1):
        assert np.allclose(gbp_update_edge(m, plan.meta(e)), m[e])


@pytest.mark.parametrize("seed", range(5))
def test_tree_fixed_point_is_exact(seed):
    model, graph = random_tree_model(np.random.default_rng(seed), 6, 3)
    plan = Plan.build(model, graph)
    res = run_to_fixed_point(plan, tol=1e-13, max_iters=500)
    assert res.converged
    approx = variable_marginals(res.messages, graph, model)
    exact = exact_marginals(model)
    for v in range(model.n):
        assert np.allclose(approx[v], exact.marginal(v), atol=1e-10)


def test_async_schedule_reaches_same_beliefs(grid2, grid2_star):
    res = run_to_fixed_point(grid2, tol=1e-12, max_iters=5000, damping=0.5, schedule="async")
    assert res.converged
    for r in grid2.graph.regions:
        a = compute_belief(res.messages, r.id, grid2.graph, grid2.model).values
        b = compute_belief(grid2_star, r.id, grid2.graph, grid2.model).values
        assert np.allclose(a, b, atol=1e-8)


def test_undamped_iteration_does_not_settle(grid4):
    # the linearized update has an eigenvalue near -2 at the fixed point
    assert not run_to_fixed_point(grid4, tol=1e-10, max_iters=300).converged


def test_probe_reports_expansion(grid4, grid4_star):
    assert contraction_probe(grid4, grid4_star, samples=20) > 1.0


def test_bad_arguments(grid2):
    m = init_messages(grid2)
    with pytest.raises(ValueError):
        gbp_iterate(grid2, m, damping=1.0)
    with pytest.raises(ValueError):
        gbp_iterate(grid2, m, schedule="random")
    with pytest.raises(GBPError):
        normalize(np.zeros(3))


def test_floor_keeps_entries_positive():
    out = normalize(np.array([1.0, 0.0]))
    assert out.min() > 0 and out.sum() == pytest.approx(1.0)


def test_messages_roundtrip(grid2, grid2_star):
    data = messages_to_dict(grid2_star)
    back = messages_from_dict(data, grid2.graph, 2)
    assert np.array_equal(back.vector(), grid2_star.vector())
    data["messages"].reverse()
    assert np.array_equal(messages_from_dict(data, grid2.graph, 2).vector(), grid2_star.vector())
    data["messages"].pop()
    with pytest.raises(GBPError):
        messages_from_dict(data, grid2.graph, 2)
