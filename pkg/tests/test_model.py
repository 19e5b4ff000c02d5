import numpy as np
import pytest

from fairweigh.autodiff import Tensor, backward
from fairweigh.data import Column, ColumnarDataset, Encoder
from fairweigh.graph import (
    PathSet,
    counterfactual_path_set,
    indirect_path_set,
    parse_graph,
    total_path_set,
)
from fairweigh.model import ModelError, StructuredModel, condition_mask
from fairweigh.nn import Adam, finite_difference
from fairweigh.synth import generate, parse_scm

from conftest import relative_error

MINIMAL_DOC = """
[nodes]
s categorical 2
y categorical 2
[edges]
s -> y
[roles]
sensitive s
outcome y
"""


def minimal_dataset(m=32, seed=0):
    rng = np.random.default_rng(seed)
    return ColumnarDataset(
        [
            Column("s", "categorical", np.where(rng.random(m) < 0.5, "1", "0")),
            Column("y", "categorical", np.where(rng.random(m) < 0.5, "1", "0")),
        ]
    )


def minimal_model(seed=0, m=32):
    graph = parse_graph(MINIMAL_DOC)
    ds = minimal_dataset(m)
    enc = Encoder().fit(ds)
    model = StructuredModel(graph, enc, total_path_set(graph), seed=seed)
    return model, ds, enc.transform(ds)


def test_sub_networks_exist_only_for_non_roots(bench_small):
    scm, _, _, model = bench_small
    non_roots = {n for n in scm.graph.column_names() if scm.graph.parents(n)}
    assert set(model.sub_network_nodes) == non_roots  # x1, x2 are roots
    assert set(model.params.groups) == non_roots | {"critic"}


def test_fresh_logistic_head_outputs_half():
    graph = parse_graph(MINIMAL_DOC)
    ds = minimal_dataset()
    enc = Encoder().fit(ds)
    model = StructuredModel(graph, enc, total_path_set(graph), seed=0)
    # zero out the y sub-network head: constant 0.5 prediction
    w, b = model.params.group("y")[-1]
    w.data = np.zeros_like(w.data)
    b.data = np.zeros_like(b.data)
    x = enc.transform(ds)
    preds = model.predict_observed(x)
    assert np.allclose(preds["y"][:, 1], 0.5)
    assert np.allclose(model.intervene_total(x, 1), 0.5)


def test_fit_loss_zero_weights_and_linearity():
    model, ds, x = minimal_model()
    assert float(model.fit_loss(x, np.zeros(ds.m)).data) == 0.0
    base = float(model.fit_loss(x, np.ones(ds.m)).data)
    w = np.ones(ds.m)
    w[3] = 2.0
    row_loss = float(model.fit_loss(x[3:4], np.ones(1)).data)
    bumped = float(model.fit_loss(x, w).data)
    assert abs((bumped - base) - row_loss / ds.m) < 1e-12


def test_fit_loss_rejects_negative_weights():
    model, ds, x = minimal_model()
    bad = np.ones(ds.m)
    bad[0] = -0.5
    with pytest.raises(ModelError, match="negative"):
        model.fit_loss(x, bad)


def test_outcome_net_ignoring_sensitive_gives_equal_arms():
    model, ds, x = minimal_model()
    w, _ = model.params.group("y")[0]
    w.data = np.zeros_like(w.data)  # y ignores its only input block (s)
    plus = model.intervene_total(x, 1)
    minus = model.intervene_total(x, 0)
    assert np.array_equal(plus, minus)


def test_null_effect_graph_gives_exactly_zero(no_path_graph):
    rng = np.random.default_rng(1)
    m = 64
    ds = ColumnarDataset(
        [
            Column("a", "continuous", rng.normal(size=m)),
            Column("s", "categorical", np.where(rng.random(m) < 0.5, "1", "0")),
            Column("y", "categorical", np.where(rng.random(m) < 0.4, "1", "0")),
        ]
    )
    enc = Encoder().fit(ds)
    x = enc.transform(ds)
    model = StructuredModel(no_path_graph, enc, total_path_set(no_path_graph), seed=3)
    assert np.array_equal(model.intervene_total(x, 1), model.intervene_total(x, 0))
    cf = StructuredModel(
        no_path_graph,
        enc,
        counterfactual_path_set(no_path_graph, [("a", float(ds.column("a").values[0]))]),
        seed=3,
    )
    plus, mask = cf.intervene_conditioned(ds, x, 1)
    minus, _ = cf.intervene_conditioned(ds, x, 0)
    assert mask.sum() == 1
    assert np.array_equal(plus, minus)


def test_path_specific_collapses_to_total_when_all_edges_selected(bench_small):
    scm, ds, enc, _ = bench_small
    x = enc.transform(ds)
    every_edge = total_path_set(scm.graph).on_pi_edges
    model = StructuredModel(
        scm.graph, enc, PathSet("path_specific", every_edge), seed=11
    )
    lhs = model.intervene_path_specific(x, 1)
    rhs = model.intervene_total(x, 1)
    assert np.array_equal(lhs, rhs)


def test_path_specific_blocks_the_direct_route(diamond_graph):
    """With the mediated route selected, the outcome's direct input from the
    sensitive node stays at the reference clamp even when intervening high."""
    scm_doc = """
[nodes]
a continuous
s categorical 2
b continuous
y categorical 2
[edges]
a -> s
a -> y
s -> b
s -> y
b -> y
[roles]
sensitive s
outcome y
[functions]
a = normal(0, 1)
s = bernoulli(logistic(0.8*a))
b = normal(0.9*s, 0.5)
y = bernoulli(logistic(1.2*s + 0.7*b + 0.4*a))
"""
    scm = parse_scm(scm_doc, seed=2)
    ds = generate(scm, 256)
    enc = Encoder().fit(ds)
    x = enc.transform(ds)
    pi = indirect_path_set(scm.graph)
    assert pi.on_pi_edges == {("s", "b"), ("b", "y")}
    model = StructuredModel(scm.graph, enc, pi, seed=5)

    # cut the mediator's dependence on the sensitive node: nothing can flow
    # along the selected route, so the path-specific pass must equal the
    # total-mode reference pass bitwise
    s_block = enc.block("s")
    b_inputs = model.params.group("b")[0][0]
    parent_cols = []
    offset = 0
    for parent in scm.graph.parents("b"):
        width = enc.block_width(parent)
        if parent == "s":
            parent_cols = list(range(offset, offset + width))
        offset += width
    b_inputs.data[parent_cols, :] = 0.0
    assert np.array_equal(
        model.intervene_path_specific(x, 1), model.intervene_total(x, 0)
    )


def test_conditioned_mode_matches_total_on_full_match(bench_small):
    scm, ds, enc, _ = bench_small
    x = enc.transform(ds)
    # condition satisfied by every row: x2 takes only two levels; pick rows of one level
    cf = StructuredModel(
        scm.graph, enc, counterfactual_path_set(scm.graph, [("x2", "1")]), seed=7
    )
    plus, mask = cf.intervene_conditioned(ds, x, 1)
    assert mask.sum() == (ds.column("x2").values == "1").sum()
    assert np.array_equal(plus, cf.intervene_total(x[mask], 1))


def test_conditioned_mode_errors_on_empty_match(bench_small):
    scm, ds, enc, _ = bench_small
    cf = StructuredModel(
        scm.graph, enc, counterfactual_path_set(scm.graph, [("med", 1e18)]), seed=7
    )
    with pytest.raises(ModelError, match="no rows match"):
        cf.intervene_conditioned(ds, enc.transform(ds), 1)


def test_condition_mask_continuous_tolerance():
    ds = ColumnarDataset(
        [Column("v", "continuous", np.array([1.0, 1.0 + 5e-10, 1.1]))]
    )
    mask = condition_mask(ds, [("v", 1.0)])
    assert mask.tolist() == [True, True, False]


def test_fresh_critic_outputs_zero(bench_small):
    _, ds, enc, model = bench_small
    values = model.critic_values(np.linspace(0, 1, 9))
    assert np.all(values == 0.0)


def test_linear_critic_value():
    from fairweigh.nn import ParamStore, mlp_forward

    store = ParamStore(0)
    store.add_group("lin", [(1, 1)])
    store.group("lin")[0][0].data = np.array([[3.0]])
    out = mlp_forward(store.group("lin"), Tensor(np.array([[0.2]])), "linear")
    assert np.allclose(out.data, 0.6)


def test_gradient_penalty_of_identity_and_doubled_critic():
    model, ds, x = minimal_model()
    rng = np.random.default_rng(0)
    y_plus = rng.uniform(0, 1, 16)
    y_minus = rng.uniform(0, 1, 16)
    model.params.groups["critic"] = [(Tensor(np.array([[1.0]])), Tensor(np.zeros(1)))]
    pen = model.gradient_penalty(y_plus, y_minus, np.random.default_rng(1))
    assert abs(float(pen.data)) < 1e-12
    model.params.groups["critic"] = [(Tensor(np.array([[2.0]])), Tensor(np.zeros(1)))]
    pen2 = model.gradient_penalty(y_plus, y_minus, np.random.default_rng(1))
    assert abs(float(pen2.data) - 1.0) < 1e-12


def test_gradient_penalty_parameter_gradient_matches_fd(bench_small):
    scm, ds, enc, _ = bench_small
    model = StructuredModel(scm.graph, enc, total_path_set(scm.graph), seed=23)
    # random critic (the zero final layer would hide curvature)
    for w, b in model.params.group("critic"):
        w.data = np.random.default_rng(3).normal(0, 0.4, w.data.shape)
    x = enc.transform(ds)[:24]
    y_plus = model.intervene_total(x, 1)
    y_minus = model.intervene_total(x, 0)
    params = model.params.parameters(["critic"])

    def penalty_fn():
        return model.gradient_penalty(y_plus, y_minus, np.random.default_rng(11))

    grads = backward(penalty_fn(), params)
    reference = finite_difference(penalty_fn, params)
    for g, r in zip(grads, reference):
        assert relative_error(g.data, r) < 1e-4


def test_critic_learns_to_separate_clusters():
    model, ds, x = minimal_model(seed=9)
    rng = np.random.default_rng(4)
    low = rng.normal(0.1, 0.01, 256)
    high = rng.normal(0.9, 0.01, 256)
    params = model.params.parameters(["critic"])
    opt = Adam(params, lr=1e-2)
    gp_rng = np.random.default_rng(5)
    for _ in range(200):
        v_high = model.critic_value(high)
        v_low = model.critic_value(low)
        objective = (v_high - v_low).mean()
        loss = -objective + 10.0 * model.gradient_penalty(high, low, gp_rng)
        opt.step(backward(loss, params))
    gap = model.critic_values(high).mean() - model.critic_values(low).mean()
    assert gap >= 0.5


def test_observational_cascade_flag_changes_inputs(bench_small):
    scm, ds, enc, _ = bench_small
    x = enc.transform(ds)
    forced = StructuredModel(scm.graph, enc, total_path_set(scm.graph), seed=31)
    cascaded = StructuredModel(
        scm.graph, enc, total_path_set(scm.graph), seed=31, observational_cascade=True
    )
    # same parameters, different forward semantics: the mediator's prediction
    # feeds the outcome net instead of the observed mediator value
    teacher = forced.predict_observed(x)
    chained = cascaded.predict_observed(x)
    assert np.array_equal(teacher["s"], chained["s"])  # s has only root parents
    assert not np.array_equal(teacher["y"], chained["y"])
    assert float(forced.fit_loss(x, np.ones(ds.m)).data) != float(
        cascaded.fit_loss(x, np.ones(ds.m)).data
    )


def test_parameter_sharing_between_views(bench_small):
    scm, ds, enc, _ = bench_small
    model = StructuredModel(scm.graph, enc, total_path_set(scm.graph), seed=29)
    x = enc.transform(ds)
    before = model.intervene_total(x, 1)
    w, _ = model.params.group("y")[0]
    w.data = w.data + 0.25  # an observational-side update is the same storage
    after = model.intervene_total(x, 1)
    assert not np.array_equal(before, after)


def test_categorical_mediator_propagates_probability_vector():
    doc = """
[nodes]
s categorical 2
c categorical 3
y categorical 2
[edges]
s -> c
c -> y
[roles]
sensitive s
outcome y
"""
    graph = parse_graph(doc)
    rng = np.random.default_rng(6)
    m = 48
    ds = ColumnarDataset(
        [
            Column("s", "categorical", np.where(rng.random(m) < 0.5, "1", "0")),
            Column("c", "categorical", rng.choice(["lo", "mid", "hi"], m)),
            Column("y", "categorical", np.where(rng.random(m) < 0.5, "1", "0")),
        ]
    )
    enc = Encoder().fit(ds)
    model = StructuredModel(graph, enc, total_path_set(graph), seed=1)
    x = enc.transform(ds)
    preds = model.predict_observed(x)
    assert preds["c"].shape == (m, 3)
    assert np.allclose(preds["c"].sum(axis=1), 1.0, atol=1e-9)
    assert np.all(preds["c"] >= 0)
    probs = model.intervene_total(x, 1)
    assert np.all((probs >= 0) & (probs <= 1))


def test_binary_roles_and_cardinality_validated(no_path_graph):
    doc = """
[nodes]
s categorical 2
y categorical 3
[edges]
s -> y
[roles]
sensitive s
outcome y
"""
    graph = parse_graph(doc)
    rng = np.random.default_rng(2)
    ds = ColumnarDataset(
        [
            Column("s", "categorical", np.where(rng.random(30) < 0.5, "1", "0")),
            Column("y", "categorical", rng.choice(["a", "b", "c"], 30)),
        ]
    )
    enc = Encoder().fit(ds)
    with pytest.raises(ModelError, match="binary"):
        StructuredModel(graph, enc, PathSet("total"), seed=0)

    # declared cardinality disagreeing with the data is also rejected
    graph2 = parse_graph(MINIMAL_DOC)
    ds2 = minimal_dataset()
    enc2 = Encoder().fit(ds2, {"y": ["0", "1", "2"]})
    with pytest.raises(ModelError, match="levels"):
        StructuredModel(graph2, enc2, total_path_set(graph2), seed=0)


def test_critic_context_must_be_non_descendant(bench_small):
    scm, ds, enc, _ = bench_small
    mode = total_path_set(scm.graph)
    with pytest.raises(ModelError, match="sensitive"):
        StructuredModel(scm.graph, enc, mode, seed=0, critic_context_nodes=("med",))
    model = StructuredModel(
        scm.graph, enc, mode, seed=0, critic_context_nodes=("x1", "x2")
    )
    x = enc.transform(ds)
    context = model.critic_context(x)
    assert context.shape == (ds.m, enc.block_width("x1") + enc.block_width("x2"))
    values = model.critic_values(model.intervene_total(x, 1), context)
    assert values.shape == (ds.m,)


def test_checkpoint_refuses_other_graph(tmp_path, bench_small, no_path_graph):
    scm, ds, enc, model = bench_small
    path = tmp_path / "ck.npz"
    model.save(path)
    rng = np.random.default_rng(0)
    other_ds = ColumnarDataset(
        [
            Column("a", "continuous", rng.normal(size=16)),
            Column("s", "categorical", np.where(rng.random(16) < 0.5, "1", "0")),
            Column("y", "categorical", np.where(rng.random(16) < 0.5, "1", "0")),
        ]
    )
    other = StructuredModel(
        no_path_graph, Encoder().fit(other_ds), total_path_set(no_path_graph), seed=0
    )
    with pytest.raises(ModelError, match="different graph"):
        other.restore(path)
