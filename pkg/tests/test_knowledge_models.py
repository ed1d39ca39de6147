import numpy as np
import pytest

from modperf.dataset import MeasurementRecord, sample_dataset, training_prefix
from modperf.influence_graph import (
    NodeKind,
    StructuralAspects,
    derive_knowledge,
    generate_graph,
    intermediate,
    option,
    performance,
)
from modperf.knowledge_models import (
    MeanModel,
    SystemShape,
    efficacy_curve,
    efficacy_curves,
    fit_complete,
    fit_ideal,
    fit_null,
    fit_partial,
    fit_practical,
    make_factory,
    prune_parents,
)
from modperf.learners import CVSpec, SearchBudget
from modperf.metrics import acc
from modperf.semantics import PolynomialFunction, SystemSemantics

BUDGET = SearchBudget(evaluations=2, seed=7)
CV = CVSpec(folds=2, shuffle_seed=8)
SPACE = {
    "n_trees": [4],
    "max_depth": [4],
    "min_samples_leaf": [1, 2],
    "feature_subsample": [1.0],
}


def _system(seed=41, option_count=5, module_count=2, p_w=0.9):
    aspects = StructuralAspects(
        option_count=option_count, p_w=p_w, mu_a=0.2, sigma_a=0.05, module_count=module_count
    )
    graph = generate_graph(aspects, seed=seed)
    from modperf.semantics import synthesize_semantics

    semantics = synthesize_semantics(graph, seed=seed + 1)
    dataset = sample_dataset(semantics, seed=seed + 2, n_train=200, n_test=120)
    return graph, derive_knowledge(graph), dataset


def _single_option_effect_dataset(n_train=1000, n_test=500):
    """Noiseless system whose performance equals one option's linear effect."""
    aspects = StructuralAspects(
        option_count=12, p_w=1.0, mu_a=0.01, sigma_a=0.0, module_count=1, iv_per_module=1
    )
    graph = generate_graph(aspects, seed=3, iv_to_iv_p=0.0)
    iv = intermediate(0, 0)
    formula = PolynomialFunction(
        linear_terms={option(0, j): (1.0 if j == 0 else 0.0) for j in range(12)},
        pair_terms={},
    )
    semantics = SystemSemantics(
        graph, {iv: formula}, {performance(0): {iv: 3.0}}, noise_fraction=0.0
    )
    return sample_dataset(semantics, seed=4, n_train=n_train, n_test=n_test)


def test_null_constant_performance():
    _, _, dataset = _system()
    records = [
        MeasurementRecord(r.config, r.iv_values, np.array([42.0])) for r in dataset.train[:60]
    ]
    shape = SystemShape.from_dataset(dataset)
    model = fit_null(records, shape, BUDGET, CV, SPACE, seed=1)
    assert np.allclose(model.predict(dataset.test), 42.0)


def test_null_learns_single_option_effect():
    dataset = _single_option_effect_dataset()
    shape = SystemShape.from_dataset(dataset)
    model = fit_null(training_prefix(dataset, 1000), shape, BUDGET, CV, SPACE, seed=2)
    predictions = model.predict(dataset.test)
    actual = np.array([r.perf_values[0] for r in dataset.test])
    assert np.abs(predictions - actual).max() < 1e-9


def test_null_deterministic_under_fixed_seeds():
    _, _, dataset = _system()
    shape = SystemShape.from_dataset(dataset)
    a = fit_null(dataset.train, shape, BUDGET, CV, SPACE, seed=5).predict(dataset.test)
    b = fit_null(dataset.train, shape, BUDGET, CV, SPACE, seed=5).predict(dataset.test)
    assert np.array_equal(a, b)


def test_null_requires_enough_records():
    _, _, dataset = _system()
    shape = SystemShape.from_dataset(dataset)
    with pytest.raises(ValueError):
        fit_null(dataset.train[:1], shape, BUDGET, CV, SPACE)


def test_partial_inputs_respect_boundaries():
    graph, artifacts, dataset = _system()
    shape = SystemShape.from_dataset(dataset)
    model = fit_partial(dataset.train, artifacts.logical_boundaries, shape, BUDGET, CV, SPACE)
    for iv, iv_model in model.iv_models.items():
        assert all(p.kind is NodeKind.OPTION and p.module == iv.module for p in iv_model.inputs)
    assert model.perf_inputs == shape.ivs
    assert len(model.evaluation_order) == len(shape.ivs)


def test_partial_single_module_matches_null_input_set():
    graph, artifacts, dataset = _system(module_count=1, option_count=9)
    shape = SystemShape.from_dataset(dataset)
    model = fit_partial(dataset.train, artifacts.logical_boundaries, shape, BUDGET, CV, SPACE)
    for iv_model in model.iv_models.values():
        assert iv_model.inputs == shape.options


def test_partial_cascade_deterministic():
    graph, artifacts, dataset = _system()
    shape = SystemShape.from_dataset(dataset)
    a = fit_partial(dataset.train, artifacts.logical_boundaries, shape, BUDGET, CV, SPACE, seed=9)
    b = fit_partial(dataset.train, artifacts.logical_boundaries, shape, BUDGET, CV, SPACE, seed=9)
    assert np.array_equal(a.predict(dataset.test), b.predict(dataset.test))


def test_partial_boundaries_must_cover():
    graph, artifacts, dataset = _system()
    shape = SystemShape.from_dataset(dataset)
    partial_boundaries = {0: artifacts.logical_boundaries[0]}
    with pytest.raises(ValueError):
        fit_partial(dataset.train, partial_boundaries, shape, BUDGET, CV, SPACE)


def test_practical_parents_subset_of_pie():
    graph, artifacts, dataset = _system()
    shape = SystemShape.from_dataset(dataset)
    model = fit_practical(
        dataset.train, artifacts.potential_influence_edges, shape,
        budget=BUDGET, cv=CV, space=SPACE,
    )
    pie_parents = {}
    for src, dst in artifacts.potential_influence_edges:
        pie_parents.setdefault(dst, set()).add(src)
    for iv, iv_model in model.iv_models.items():
        assert set(iv_model.inputs) <= pie_parents.get(iv, set())


def test_complete_parents_subset_of_true_edges():
    graph, artifacts, dataset = _system()
    shape = SystemShape.from_dataset(dataset)
    model = fit_complete(
        dataset.train, artifacts.influence_edges, shape, budget=BUDGET, cv=CV, space=SPACE
    )
    true_parents = {}
    for src, dst in artifacts.influence_edges:
        true_parents.setdefault(dst, set()).add(src)
    assert model.level == "complete"
    for iv, iv_model in model.iv_models.items():
        assert set(iv_model.inputs) <= true_parents.get(iv, set())


def test_practical_fallback_for_parentless_iv():
    # p_w=0 leaves every IV constant zero; pruning must strip all candidates
    graph, artifacts, dataset = _system(p_w=0.0, seed=55)
    shape = SystemShape.from_dataset(dataset)
    model = fit_practical(
        dataset.train, artifacts.potential_influence_edges, shape,
        budget=BUDGET, cv=CV, space=SPACE,
    )
    zero_ivs = [
        iv for iv in shape.ivs
        if all(r.iv_values[shape.iv_col(iv)] == 0.0 for r in dataset.train[:20])
    ]
    assert zero_ivs
    for iv in zero_ivs:
        assert model.iv_models[iv].fallback
        assert isinstance(model.iv_models[iv].model, MeanModel)


def test_decoy_pruned_at_type_one_rate():
    rng = np.random.default_rng(10)
    alpha = 0.05
    resamples = 1000
    n = 200
    shape = SystemShape(options=(option(0, 0), option(0, 1)), ivs=(intermediate(0, 0),))
    candidates = {intermediate(0, 0): (option(0, 0), option(0, 1))}
    pruned_decoy = 0
    for _ in range(resamples):
        strong = rng.integers(0, 2, n).astype(float)
        decoy = rng.integers(0, 2, n).astype(float)
        iv_vals = 0.8 * strong + rng.normal(0, 0.1, n)
        records = [
            MeasurementRecord(
                np.array([strong[i], decoy[i]], dtype=np.uint8),
                np.array([iv_vals[i]]),
                np.array([0.0]),
            )
            for i in range(n)
        ]
        surviving = prune_parents(records, shape, candidates, alpha)[intermediate(0, 0)]
        if option(0, 1) not in surviving:
            pruned_decoy += 1
    rate = pruned_decoy / resamples
    sigma = np.sqrt(alpha * (1 - alpha) / resamples)
    assert rate >= 1 - alpha - 3 * sigma


def test_strong_parent_retained():
    rng = np.random.default_rng(11)
    n = 1000
    shape = SystemShape(options=(option(0, 0),), ivs=(intermediate(0, 0),))
    candidates = {intermediate(0, 0): (option(0, 0),)}
    retained = 0
    resamples = 200
    for _ in range(resamples):
        x = rng.integers(0, 2, n).astype(float)
        iv_vals = 0.5 * x + rng.normal(0, 0.2, n)
        records = [
            MeasurementRecord(np.array([x[i]], dtype=np.uint8), np.array([iv_vals[i]]), np.array([0.0]))
            for i in range(n)
        ]
        if option(0, 0) in prune_parents(records, shape, candidates, 0.05)[intermediate(0, 0)]:
            retained += 1
    assert retained / resamples >= 0.99


def test_prune_parents_agrees_with_scalar_fisher_z():
    from modperf.stats import fisher_z_test

    rng = np.random.default_rng(12)
    n = 150
    options = tuple(option(0, j) for j in range(4))
    shape = SystemShape(options=options, ivs=(intermediate(0, 0),))
    bits = rng.integers(0, 2, (n, 4)).astype(float)
    iv_vals = 0.3 * bits[:, 0] + 0.05 * bits[:, 1] + rng.normal(0, 0.15, n)
    records = [
        MeasurementRecord(bits[i].astype(np.uint8), np.array([iv_vals[i]]), np.array([0.0]))
        for i in range(n)
    ]
    surviving = prune_parents(records, shape, {intermediate(0, 0): options}, 0.05)
    for j, node in enumerate(options):
        scalar = fisher_z_test(bits[:, j], iv_vals, alpha=0.05)
        assert (node in surviving[intermediate(0, 0)]) == (not scalar.independent)


def test_ideal_consumes_true_ivs_and_recovers_linear_perf():
    graph, artifacts, dataset = _system(seed=61)
    shape = SystemShape.from_dataset(dataset)
    model = fit_ideal(training_prefix(dataset, 200), shape, BUDGET, CV, SPACE, seed=6)
    predictions = model.predict(dataset.test)
    actual = np.array([r.perf_values[0] for r in dataset.test])
    assert acc(predictions, actual) > 0.9


def test_ideal_no_signal_when_perf_ignores_ivs():
    _, _, dataset = _system()
    rng = np.random.default_rng(13)
    noise = rng.normal(size=len(dataset.train))
    records = [
        MeasurementRecord(r.config, r.iv_values, np.array([noise[i]]))
        for i, r in enumerate(dataset.train)
    ]
    shape = SystemShape.from_dataset(dataset)
    model = fit_ideal(records, shape, BUDGET, CV, SPACE, seed=7)
    predictions = model.predict(dataset.test)
    assert np.abs(predictions).max() <= np.abs(noise).max() + 1e-9


def test_identical_candidates_across_levels():
    graph, artifacts, dataset = _system()
    shape = SystemShape.from_dataset(dataset)
    null = fit_null(dataset.train, shape, BUDGET, CV, SPACE, seed=1)
    ideal = fit_ideal(dataset.train, shape, BUDGET, CV, SPACE, seed=2)
    partial = fit_partial(
        dataset.train, artifacts.logical_boundaries, shape, BUDGET, CV, SPACE, seed=3
    )
    assert null.search_meta["candidates"] == ideal.search_meta["candidates"]
    assert null.search_meta["candidates"] == partial.search_meta["candidates"]
    assert null.search_meta["budget"] == partial.search_meta["budget"] == BUDGET.evaluations


def test_paper_scale_space_exercises_ranges():
    from modperf.learners import forest_search_space

    _, _, dataset = _system()
    shape = SystemShape.from_dataset(dataset)
    space = forest_search_space(len(shape.options), scale="paper")
    model = fit_null(dataset.train[:60], shape, SearchBudget(evaluations=2, seed=3), CV,
                     space, seed=12)
    chosen = model.search_meta["chosen"]
    assert 50 <= chosen["n_trees"] <= 300
    assert 4 <= chosen["max_depth"] <= 24
    assert np.isfinite(model.predict(dataset.test)).all()


class _Oracle:
    """Predictor that reads the true performance straight off the records."""

    def predict(self, records):
        return np.array([r.perf_values[0] for r in records])


class _Constant:
    def predict(self, records):
        return np.full(len(records), 5.0)


def test_efficacy_curve_perfect_predictor():
    _, _, dataset = _system()
    points = efficacy_curve(lambda recs: _Oracle(), dataset, "scc", (20, 50, 100))
    assert [p for _, p in points] == [pytest.approx(1.0)] * 3


def test_efficacy_curve_constant_predictor_degenerate_scc():
    _, _, dataset = _system()
    points = efficacy_curve(lambda recs: _Constant(), dataset, "scc", (20, 50))
    assert [p for _, p in points] == [0.0, 0.0]


def test_efficacy_curves_isolate_fit_failures():
    _, _, dataset = _system()

    def factory(records):
        if len(records) == 50:
            raise RuntimeError("boom")
        return _Oracle()

    points = efficacy_curves(factory, dataset, ("acc",), (20, 50, 100))
    assert points[0].error is None
    assert points[1].error is not None and "boom" in points[1].error
    assert points[2].efficacies["acc"] == pytest.approx(1.0)


def test_efficacy_curves_reject_oversized_request():
    _, _, dataset = _system()
    with pytest.raises(ValueError):
        efficacy_curves(lambda r: _Oracle(), dataset, ("acc",), (20, 10_000))


def test_make_factory_levels_and_validation():
    graph, artifacts, dataset = _system()
    shape = SystemShape.from_dataset(dataset)
    with pytest.raises(ValueError):
        make_factory("partial", shape, None, BUDGET, CV)
    with pytest.raises(ValueError):
        make_factory("quantum", shape, artifacts, BUDGET, CV)(dataset.train)
    factory = make_factory("complete", shape, artifacts, BUDGET, CV, space=SPACE, seed=4)
    model = factory(dataset.train[:80])
    assert model.level == "complete"
