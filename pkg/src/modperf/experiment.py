"""End-to-end experiment orchestration: generate, model, analyze, report.

The whole pipeline is a pure function of the experiment configuration:
every random draw flows from the global seed through documented derivation
paths (see seeds.derive), no timestamps enter any artifact, and work units
write only their own files, so reruns produce byte-identical output trees
regardless of parallelism.

Seed derivation paths:
    system_seed = derive(global_seed, "system", s)     # aspects + graph
    trial_seed  = derive(system_seed, "trial", t)      # semantics + dataset
    model seeds = derive(trial_seed, "model", level)   # forest bootstraps
    search seed = derive(global_seed, "search")        # shared candidate draws
    cv seed     = derive(trial_seed, "cv")             # shared fold splits
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import reporting
from .dataset import load_dataset, sample_dataset, save_dataset, training_prefix
from .hardness_opportunity import (
    EfficacyCurve,
    HardnessMode,
    MATRIX_LEVELS,
    build_matrix,
    classify_hardness,
    hardness,
    opportunity,
)
from .influence_graph import (
    AspectRanges,
    StructuralAspects,
    derive_knowledge,
    generate_graph,
    graph_from_json,
    graph_to_json,
    sample_aspects,
    scale_aspects,
)
from .knowledge_models import SystemShape, efficacy_curves, make_factory
from .learners import CVSpec, SearchBudget, enumerate_candidates, forest_search_space, mse
from .seeds import derive
from .semantics import semantics_to_json, synthesize_semantics
from .stats import (
    ASPECT_GROUPS,
    matrix_hypothesis_tests,
    permutation_importance,
    shapley_importance,
    two_stage_pipeline,
)

ALL_LEVELS = ("null", "partial", "practical", "complete", "ideal")
MIN_PIPELINE_RECORDS = 10


@dataclass(frozen=True)
class ExperimentConfig:
    """Counts, seeds, and method knobs for one experiment.

    Desk-scale runs differ from paper-scale (400 systems, 40 trials,
    paper forest space) only in these counts, never in formulas.
    """

    global_seed: int = 20250801
    n_systems: int = 24
    trials: int = 1
    train_sizes: tuple[int, ...] = (20, 50, 100, 200, 500, 1000)
    n_train: int = 1000
    n_test: int = 1000
    metrics: tuple[str, ...] = ("acc", "scc")
    levels: tuple[str, ...] = ALL_LEVELS
    budget_evaluations: int = 2
    cv_folds: int = 2
    alpha_ci: float = 0.05
    test_alpha: float = 0.05
    hardness_mode: str = "fixed"
    iv_to_iv_p: float = 0.15
    noise_fraction: float = 0.05
    forest_scale: str = "desk"
    lasso_degrees: tuple[int, ...] = (1, 2, 3)
    lasso_alpha_steps: int = 40
    use_measured_hardness: bool = False
    shapley_samples: int = 200
    importance_repeats: int = 10
    aspect_ranges: AspectRanges = AspectRanges()
    # Runtime-only knobs, excluded from the persisted config so output trees
    # from different target directories stay byte-identical.
    out_dir: str = "out"
    jobs: int = 1
    resume: bool = False

    def __post_init__(self):
        if self.n_systems < 1 or self.trials < 1:
            raise ValueError("n_systems and trials must be positive")
        if not self.train_sizes or max(self.train_sizes) > self.n_train:
            raise ValueError("train_sizes must be non-empty and bounded by n_train")
        unknown = set(self.levels) - set(ALL_LEVELS)
        if unknown:
            raise ValueError(f"unknown levels: {sorted(unknown)}")
        unknown_metrics = set(self.metrics) - {"acc", "scc"}
        if unknown_metrics:
            raise ValueError(f"unknown metrics: {sorted(unknown_metrics)}")
        if self.hardness_mode not in ("fixed", "empirical"):
            raise ValueError(f"hardness_mode must be fixed|empirical, got {self.hardness_mode}")

    _RUNTIME_FIELDS = ("out_dir", "jobs", "resume")

    def persisted_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        for name in self._RUNTIME_FIELDS:
            doc.pop(name)
        doc["aspect_ranges"] = dataclasses.asdict(self.aspect_ranges)
        return doc

    @staticmethod
    def from_dict(doc: dict, **runtime) -> "ExperimentConfig":
        doc = dict(doc)
        ranges = doc.pop("aspect_ranges", None)
        kwargs: dict = {}
        for key, value in doc.items():
            if isinstance(value, list):
                value = tuple(value)
            kwargs[key] = value
        if ranges is not None:
            for key in ("option_count", "p_w", "mu_a", "sigma_a", "module_count"):
                if key in ranges and isinstance(ranges[key], list):
                    ranges[key] = tuple(ranges[key])
            kwargs["aspect_ranges"] = AspectRanges(**ranges)
        kwargs.update(runtime)
        return ExperimentConfig(**kwargs)

    @staticmethod
    def from_file(path: Path, **runtime) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(json.loads(Path(path).read_text()), **runtime)

    def system_seed(self, s: int) -> int:
        return derive(self.global_seed, "system", s)

    def trial_seed(self, s: int, t: int) -> int:
        return derive(self.system_seed(s), "trial", t)

    def system_id(self, s: int) -> str:
        return f"s{s:04d}"

    def unit_id(self, s: int, t: int) -> str:
        return f"{self.system_id(s)}_t{t:02d}"


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _dump(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2)


# ---------------------------------------------------------------- generate


def _generate_one(config: ExperimentConfig, s: int) -> dict:
    out = Path(config.out_dir)
    system_dir = out / "systems" / config.system_id(s)
    marker = system_dir / "system.json"
    if config.resume and marker.exists():
        return json.loads(marker.read_text())

    system_seed = config.system_seed(s)
    aspects = sample_aspects(system_seed, config.aspect_ranges)
    graph = generate_graph(aspects, system_seed, config.iv_to_iv_p)
    artifacts = derive_knowledge(graph)
    _write(system_dir / "graph.json", graph_to_json(graph))
    _write(
        system_dir / "knowledge.json",
        _dump(
            {
                "logical_boundaries": {
                    str(m): {
                        "options": [n.encode() for n in opts],
                        "ivs": [n.encode() for n in ivs],
                    }
                    for m, (opts, ivs) in artifacts.logical_boundaries.items()
                },
                "influence_edges": sorted(
                    f"{a.encode()}->{b.encode()}" for a, b in artifacts.influence_edges
                ),
                "potential_influence_edges": sorted(
                    f"{a.encode()}->{b.encode()}"
                    for a, b in artifacts.potential_influence_edges
                ),
            }
        ),
    )

    trials = []
    for t in range(config.trials):
        trial_seed = config.trial_seed(s, t)
        trial_dir = system_dir / f"t{t:02d}"
        semantics = synthesize_semantics(graph, trial_seed, config.noise_fraction)
        _write(trial_dir / "semantics.json", semantics_to_json(semantics))
        dataset = sample_dataset(
            semantics,
            trial_seed,
            n_train=config.n_train,
            n_test=config.n_test,
            train_sizes=config.train_sizes,
            system_id=config.unit_id(s, t),
        )
        save_dataset(dataset, trial_dir, semantics_file="semantics.json")
        trials.append({"trial": t, "seed": trial_seed, "dir": f"t{t:02d}"})

    entry = {
        "system": config.system_id(s),
        "index": s,
        "seed": system_seed,
        "aspects": aspects.as_feature_dict()
        | {"iv_per_module": aspects.iv_per_module, "perf_count": aspects.perf_count},
        "trials": trials,
    }
    _write(marker, _dump(entry))
    return entry


def run_generate(config: ExperimentConfig) -> list[dict]:
    """Produce aspects, graph, semantics, and datasets for every system."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "config.json", _dump(config.persisted_dict()))
    indices = list(range(config.n_systems))
    if config.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.jobs) as pool:
            entries = list(pool.map(_generate_worker, [(config, s) for s in indices]))
    else:
        entries = [_generate_one(config, s) for s in indices]
    entries.sort(key=lambda e: e["index"])
    _write(out / "manifest.json", _dump({"systems": entries}))
    return entries


def _generate_worker(args):
    config, s = args
    return _generate_one(config, s)


# ------------------------------------------------------------------- model


def _prefix_sha(records) -> str:
    digest = hashlib.sha256()
    for record in records:
        digest.update(record.config.tobytes())
    return digest.hexdigest()[:16]


def _curve_paths(config: ExperimentConfig, s: int, t: int) -> dict[tuple[str, str], Path]:
    unit_dir = Path(config.out_dir) / "curves" / config.unit_id(s, t)
    return {
        (level, metric): unit_dir / f"{level}_{metric}.json"
        for level in config.levels
        for metric in config.metrics
    }


def _model_one(config: ExperimentConfig, s: int, t: int) -> dict:
    out = Path(config.out_dir)
    unit = config.unit_id(s, t)
    paths = _curve_paths(config, s, t)
    if config.resume and all(p.exists() for p in paths.values()):
        return {"unit": unit, "resumed": True}

    system_dir = out / "systems" / config.system_id(s)
    graph = graph_from_json((system_dir / "graph.json").read_text())
    artifacts = derive_knowledge(graph)
    dataset = load_dataset(system_dir / f"t{t:02d}")
    shape = SystemShape.from_dataset(dataset)

    budget = SearchBudget(
        evaluations=config.budget_evaluations, seed=derive(config.global_seed, "search")
    )
    cv = CVSpec(folds=config.cv_folds, shuffle_seed=derive(config.trial_seed(s, t), "cv"))
    space = forest_search_space(
        max(len(shape.options), len(shape.ivs)), scale=config.forest_scale
    )

    for level in config.levels:
        model_seed = derive(config.trial_seed(s, t), "model", level)
        factory = make_factory(
            level,
            shape,
            artifacts,
            budget,
            cv,
            space=space,
            alpha_ci=config.alpha_ci,
            seed=model_seed,
        )
        points = efficacy_curves(factory, dataset, config.metrics, config.train_sizes)
        for metric in config.metrics:
            doc = {
                "system_id": unit,
                "trial": t,
                "level": level,
                "metric": metric,
                "points": [
                    {"n": p.n, "p": p.efficacies.get(metric), "error": p.error}
                    for p in points
                ],
                "seeds": {
                    "system": config.system_seed(s),
                    "trial": config.trial_seed(s, t),
                    "model": model_seed,
                },
                "budget": config.budget_evaluations,
            }
            _write(paths[(level, metric)], _dump(doc))

    fairness = {
        "budget": config.budget_evaluations,
        "candidates": enumerate_candidates(space, budget),
        "cv_folds": config.cv_folds,
        "prefix_sha": {
            str(n): _prefix_sha(training_prefix(dataset, n)) for n in config.train_sizes
        },
        "note": "identical training prefixes, candidate lists, and budgets across levels",
    }
    _write(out / "fairness" / f"{unit}.json", _dump(fairness))
    return {"unit": unit}


def _model_worker(args):
    config, s, t = args
    try:
        return _model_one(config, s, t)
    except Exception as exc:  # isolate unit failures; analyze reports the gap
        return {"unit": config.unit_id(s, t), "error": f"{type(exc).__name__}: {exc}"}


def run_model(config: ExperimentConfig) -> list[dict]:
    """Fit every (system, trial, level) and persist efficacy curves."""
    out = Path(config.out_dir)
    units = [(config, s, t) for s in range(config.n_systems) for t in range(config.trials)]
    if config.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.jobs) as pool:
            docs = list(pool.map(_model_worker, units))
    else:
        docs = [_model_worker(u) for u in units]
    failures = [d for d in docs if "error" in d]
    if failures:
        _write(out / "model_errors.json", _dump(failures))
    return docs


# ----------------------------------------------------------------- analyze


def _curve_from_doc(doc: dict) -> EfficacyCurve | None:
    pairs = []
    for p in doc["points"]:
        if p.get("error") or p.get("p") is None:
            return None
        pairs.append((p["n"], p["p"]))
    return EfficacyCurve(metric=doc["metric"], points=tuple(pairs))


def _load_units(config: ExperimentConfig) -> tuple[list[dict], list[str]]:
    """One entry per (system, trial) with its loaded per-level/metric curve
    docs; units missing every curve file are reported as gaps."""
    units, missing = [], []
    for s in range(config.n_systems):
        for t in range(config.trials):
            paths = _curve_paths(config, s, t)
            loaded = {
                key: json.loads(path.read_text()) for key, path in paths.items() if path.exists()
            }
            if loaded:
                units.append(
                    {
                        "unit": config.unit_id(s, t),
                        "system": config.system_id(s),
                        "trial": t,
                        "curves": loaded,
                    }
                )
            if len(loaded) < len(paths):
                missing.append(config.unit_id(s, t))
    return units, missing


def _group_importance(vector, groups: dict) -> dict:
    raw = {g: sum(max(vector.raw.get(f, 0.0), 0.0) for f in members) for g, members in groups.items()}
    total = sum(raw.values())
    if total <= 0:
        return {g: 1.0 / len(raw) for g in raw}
    return {g: v / total for g, v in raw.items()}


def run_analyze(config: ExperimentConfig) -> dict:
    """Hardness, opportunities, stage-1 aspect regression with importances,
    and the matrix plus hypothesis battery, one set per metric."""
    out = Path(config.out_dir)
    analysis = out / "analysis"
    units, missing_units = _load_units(config)
    gaps: dict = {"missing_units": missing_units, "incomplete_curves": [], "notes": []}
    manifest = json.loads((out / "manifest.json").read_text())
    aspects_by_system = {
        e["system"]: StructuralAspects(
            option_count=int(e["aspects"]["option_count"]),
            p_w=e["aspects"]["p_w"],
            mu_a=e["aspects"]["mu_a"],
            sigma_a=e["aspects"]["sigma_a"],
            module_count=int(e["aspects"]["module_count"]),
            iv_per_module=int(e["aspects"]["iv_per_module"]),
            perf_count=int(e["aspects"]["perf_count"]),
        )
        for e in manifest["systems"]
    }
    summary = {"metrics": {}}
    opportunity_levels = [lv for lv in MATRIX_LEVELS if lv in config.levels]
    mode = HardnessMode(config.hardness_mode)

    for metric in config.metrics:
        hardness_rows = []
        opportunity_rows = []
        aspect_records: dict[str, tuple[list[float], float]] = {}
        for unit in units:
            unit_id = unit["unit"]

            def curve_for(level):
                doc = unit["curves"].get((level, metric))
                return _curve_from_doc(doc) if doc else None

            null_curve = curve_for("null")
            if null_curve is None:
                gaps["incomplete_curves"].append({"unit": unit_id, "metric": metric, "level": "null"})
                continue
            score = hardness(null_curve)
            hardness_rows.append(
                {
                    "unit": unit_id,
                    "system": unit["system"],
                    "trial": unit["trial"],
                    "value": score.value,
                    "scaling_constant": score.scaling_constant,
                    "fixed_level": classify_hardness(score, HardnessMode.FIXED_RANGE),
                }
            )
            aspect_records[unit_id] = (
                scale_aspects(aspects_by_system[unit["system"]], config.aspect_ranges),
                score.value,
            )
            ideal_curve = curve_for("ideal")
            if ideal_curve is None:
                if "ideal" in config.levels:
                    gaps["incomplete_curves"].append(
                        {"unit": unit_id, "metric": metric, "level": "ideal"}
                    )
                continue
            for level in opportunity_levels:
                level_curve = curve_for(level)
                if level_curve is None:
                    gaps["incomplete_curves"].append(
                        {"unit": unit_id, "metric": metric, "level": level}
                    )
                    continue
                opp = opportunity(null_curve, ideal_curve, level_curve, level)
                opportunity_rows.append(
                    {
                        "unit": unit_id,
                        "level": level,
                        "value": opp.value,
                        "per_size": [
                            {"n": n, "gap": g, "filling": f} for n, g, f in opp.per_size
                        ],
                    }
                )

        _write(analysis / f"hardness_{metric}.json", _dump(hardness_rows))
        _write(analysis / f"opportunities_{metric}.json", _dump(opportunity_rows))

        if len(aspect_records) >= MIN_PIPELINE_RECORDS:
            result = two_stage_pipeline(
                aspect_records,
                [(r["unit"], r["level"], r["value"]) for r in opportunity_rows],
                metric=metric,
                degrees=config.lasso_degrees,
                alphas=None if config.lasso_alpha_steps >= 500 else _lasso_alphas(config),
                cv=CVSpec(folds=5, shuffle_seed=derive(config.global_seed, "stage1", metric)),
                hardness_mode=mode,
                alpha=config.test_alpha,
                use_measured_hardness=config.use_measured_hardness,
            )
            matrix, tests = result.matrix, result.tests
            X = np.asarray([aspect_records[i][0] for i in aspect_records], dtype=float)
            y = np.asarray([aspect_records[i][1] for i in aspect_records], dtype=float)
            perm = permutation_importance(
                result.model, X, y, mse,
                repeats=config.importance_repeats,
                seed=derive(config.global_seed, "perm", metric),
                feature_names=list(ASPECT_FEATURES_ORDER),
            )
            shap, _ = shapley_importance(
                result.model, X, y, mse,
                samples=config.shapley_samples,
                seed=derive(config.global_seed, "shapley", metric),
                feature_names=list(ASPECT_FEATURES_ORDER),
            )
            stage1_doc = {
                "metric": metric,
                "chosen_degree": result.model.params.degree,
                "chosen_alpha": result.model.params.alpha,
                "converged": result.model.converged,
                "coefficients": result.model.coefficient_map(),
                "importance_lasso": result.importance.weights,
                "importance_permutation": _group_importance(perm, ASPECT_GROUPS),
                "importance_shapley": _group_importance(shap, ASPECT_GROUPS),
                "hardness_source": "measured" if config.use_measured_hardness else "predicted",
                "hardness_by_unit": {
                    k: {"value": v, "level": lv} for k, (v, lv) in result.hardness_by_system.items()
                },
            }
        else:
            gaps["notes"].append(
                f"{metric}: only {len(aspect_records)} units; stage-1 regression skipped, "
                "matrix built from measured hardness"
            )
            population = [r["value"] for r in hardness_rows]
            by_unit = {
                r["unit"]: (r["value"], classify_hardness(r["value"], mode, population))
                for r in hardness_rows
            }
            observations = [
                (r["level"], by_unit[r["unit"]][1], r["value"]) for r in opportunity_rows
            ]
            matrix = build_matrix(observations, metric=metric)
            tests = matrix_hypothesis_tests(matrix, alpha=config.test_alpha)
            stage1_doc = {
                "metric": metric,
                "skipped": True,
                "hardness_source": "measured",
                "hardness_by_unit": {k: {"value": v, "level": lv} for k, (v, lv) in by_unit.items()},
            }

        _write(analysis / f"stage1_{metric}.json", _dump(stage1_doc))
        _write(analysis / f"matrix_{metric}.json", reporting.matrix_to_json(matrix))
        _write(analysis / f"matrix_{metric}.csv", reporting.matrix_to_csv(matrix))
        _write(analysis / f"opportunity_samples_{metric}.csv", reporting.samples_to_csv(matrix))
        _write(analysis / f"heatmap_{metric}.svg", reporting.heatmap_svg(matrix))
        _write(analysis / f"tests_{metric}.json", reporting.tests_to_json(tests))
        _write(analysis / f"tests_{metric}.csv", reporting.tests_to_csv(tests))
        summary["metrics"][metric] = {
            "units": len(hardness_rows),
            "opportunity_rows": len(opportunity_rows),
            "tests": len(tests),
            "significant": sum(1 for t in tests if t.significant),
            "skipped_tests": sum(1 for t in tests if t.skipped),
        }

    _write(analysis / "gaps.json", _dump(gaps))
    _write(analysis / "summary.json", _dump(summary))
    return summary


def _lasso_alphas(config: ExperimentConfig) -> list[float]:
    return [
        float(a)
        for a in np.logspace(np.log10(1e-4), np.log10(10.0), config.lasso_alpha_steps)
    ]


ASPECT_FEATURES_ORDER = ("option_count", "p_w", "mu_a", "sigma_a", "module_count")


# ------------------------------------------------------------------ report


def run_report(config: ExperimentConfig) -> str:
    """Human-readable markdown digest of the analysis artifacts."""
    out = Path(config.out_dir)
    analysis = out / "analysis"
    lines = ["# Experiment report", ""]
    summary_path = analysis / "summary.json"
    if not summary_path.exists():
        raise FileNotFoundError("run the analyze stage before report")
    summary = json.loads(summary_path.read_text())
    for metric, info in summary["metrics"].items():
        lines.append(f"## Metric: {metric}")
        lines.append("")
        lines.append(
            f"- units analyzed: {info['units']}, opportunity rows: {info['opportunity_rows']}"
        )
        lines.append(
            f"- hypothesis tests: {info['tests']} "
            f"({info['significant']} significant, {info['skipped_tests']} skipped)"
        )
        stage1 = json.loads((analysis / f"stage1_{metric}.json").read_text())
        if not stage1.get("skipped"):
            lines.append(f"- stage-1 lasso: degree {stage1['chosen_degree']}, "
                         f"alpha {stage1['chosen_alpha']:.6g}")
            importances = stage1["importance_lasso"]
            ranked = sorted(importances.items(), key=lambda kv: -kv[1])
            lines.append("- aspect importance (lasso): "
                         + ", ".join(f"{k}={v:.3f}" for k, v in ranked))
        matrix = reporting.matrix_from_json((analysis / f"matrix_{metric}.json").read_text())
        lines.append("")
        lines.append("| knowledge \\ hardness | low | medium | high |")
        lines.append("|---|---|---|---|")
        for level in MATRIX_LEVELS:
            cells = []
            for hardness_level in ("low", "medium", "high"):
                cell = matrix.cell(level, hardness_level)
                cells.append("-" if cell.empty else f"{cell.mean:.3f} (n={cell.count})")
            lines.append(f"| {level} | {cells[0]} | {cells[1]} | {cells[2]} |")
        lines.append("")
    text = "\n".join(lines) + "\n"
    _write(analysis / "report.md", text)
    return text


def run_all(config: ExperimentConfig) -> dict:
    run_generate(config)
    run_model(config)
    summary = run_analyze(config)
    run_report(config)
    return summary
