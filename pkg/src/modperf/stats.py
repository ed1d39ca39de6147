"""Nonparametric tests, effect sizes, conditional-independence testing, and
importance attribution.

The Mann-Whitney U test runs an exact tie-aware permutation enumeration for
small samples and a tie-corrected normal approximation (with continuity
correction) otherwise; group sizes in the opportunity matrix live firmly in
the asymptotic regime.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .hardness_opportunity import (
    HARDNESS_LEVELS,
    MATRIX_LEVELS,
    HardnessMode,
    OpportunityMatrix,
    build_matrix,
    classify_hardness,
)
from .learners import CVSpec, FittedL1, L1Params, cross_validate, fit_l1, l1_grid
from .metrics import rankdata
from .seeds import rng_for

EXACT_MWU_LIMIT = 12
_NORMAL = NormalDist()


@dataclass(frozen=True)
class TestResult:
    p_value: float
    statistic: float
    alternative: str
    cles: float  # P(x > y) + 0.5 P(x = y), for the first group
    method: str = "normal"

    @property
    def cles_other(self) -> float:
        return 1.0 - self.cles


def cles(x, y) -> float:
    """Common-language effect size by exact pair enumeration."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0 or y.size == 0:
        raise ValueError("empty group")
    greater = (x[:, None] > y[None, :]).sum()
    equal = (x[:, None] == y[None, :]).sum()
    return float((greater + 0.5 * equal) / (x.size * y.size))


def _u_statistic(ranks: np.ndarray, x_index, n_x: int) -> float:
    return float(ranks[x_index].sum() - n_x * (n_x + 1) / 2.0)


def mann_whitney_u(x, y, alternative: str = "two_sided") -> TestResult:
    """Rank-sum U test for x against y.

    alternative: "greater" means x tends larger than y, "less" the reverse.
    Exact tie-aware enumeration when the pooled size is <= 12.
    """
    if alternative not in ("less", "greater", "two_sided"):
        raise ValueError(f"unknown alternative {alternative!r}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0 or y.size == 0:
        raise ValueError("empty group")
    n_x, n_y = x.size, y.size
    pooled = np.concatenate([x, y])
    ranks = rankdata(pooled)
    u_obs = _u_statistic(ranks, np.arange(n_x), n_x)
    effect = cles(x, y)

    if n_x + n_y <= EXACT_MWU_LIMIT:
        total = 0
        count_ge = 0
        count_le = 0
        for combo in itertools.combinations(range(n_x + n_y), n_x):
            u_perm = _u_statistic(ranks, list(combo), n_x)
            total += 1
            if u_perm >= u_obs:
                count_ge += 1
            if u_perm <= u_obs:
                count_le += 1
        p_greater = count_ge / total
        p_less = count_le / total
        if alternative == "greater":
            p = p_greater
        elif alternative == "less":
            p = p_less
        else:
            p = min(1.0, 2.0 * min(p_greater, p_less))
        return TestResult(p_value=p, statistic=u_obs, alternative=alternative,
                          cles=effect, method="exact")

    n = n_x + n_y
    mean_u = n_x * n_y / 2.0
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(((tie_counts**3 - tie_counts).sum()) / (n * (n - 1)))
    var_u = n_x * n_y / 12.0 * ((n + 1) - tie_term)
    if var_u <= 0.0:
        # Every value tied: no evidence against the null in any direction.
        return TestResult(p_value=1.0, statistic=u_obs, alternative=alternative,
                          cles=effect, method="normal")
    sd = math.sqrt(var_u)
    if alternative == "greater":
        p = 1.0 - _NORMAL.cdf((u_obs - mean_u - 0.5) / sd)
    elif alternative == "less":
        p = _NORMAL.cdf((u_obs - mean_u + 0.5) / sd)
    else:
        z = (abs(u_obs - mean_u) - 0.5) / sd
        p = min(1.0, 2.0 * (1.0 - _NORMAL.cdf(max(z, 0.0))))
    return TestResult(p_value=float(p), statistic=u_obs, alternative=alternative,
                      cles=effect, method="normal")


@dataclass(frozen=True)
class FisherZResult:
    partial_correlation: float
    z: float
    statistic: float
    conditioning_size: int
    independent: bool
    alpha: float


def _residualize(v: np.ndarray, conditioning: np.ndarray) -> np.ndarray:
    design = np.column_stack([np.ones(len(v)), conditioning])
    coef, *_ = np.linalg.lstsq(design, v, rcond=None)
    return v - design @ coef


def fisher_z_test(u, v, conditioning=(), alpha: float = 0.05) -> FisherZResult:
    """Conditional-independence test on the z-transformed partial correlation.

    With an empty conditioning set this reduces to a test of the plain
    Pearson correlation. Degenerate variance is flagged independent: a
    constant column carries no evidence of dependence.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    cond = np.column_stack(conditioning) if len(conditioning) else np.empty((len(u), 0))
    n = len(u)
    k = cond.shape[1]
    if len(v) != n or cond.shape[0] != n:
        raise ValueError("vectors must have equal length")
    if n <= k + 3:
        raise ValueError(f"need n > |S| + 3, got n={n}, |S|={k}")

    if k:
        u = _residualize(u, cond)
        v = _residualize(v, cond)
    else:
        u = u - u.mean()
        v = v - v.mean()
    denom = math.sqrt(float(u @ u) * float(v @ v))
    if denom == 0.0:
        return FisherZResult(0.0, 0.0, 0.0, k, independent=True, alpha=alpha)
    r = float(u @ v) / denom
    r = max(-1.0 + 1e-15, min(1.0 - 1e-15, r))
    z = 0.5 * math.log((1.0 + r) / (1.0 - r))
    statistic = math.sqrt(n - k - 3) * abs(z)
    critical = _NORMAL.inv_cdf(1.0 - alpha / 2.0)
    return FisherZResult(
        partial_correlation=r,
        z=z,
        statistic=statistic,
        conditioning_size=k,
        independent=statistic <= critical,
        alpha=alpha,
    )


@dataclass(frozen=True)
class ImportanceVector:
    """Nonnegative per-feature weights normalized to sum 1.

    `degenerate` marks the all-zero raw case, where the normalized weights
    fall back to uniform.
    """

    weights: dict[str, float]
    raw: dict[str, float] = field(compare=False, default_factory=dict)
    degenerate: bool = False

    def __post_init__(self):
        total = sum(self.weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {total}")


def _normalize(raw: dict[str, float]) -> ImportanceVector:
    floored = {k: max(v, 0.0) for k, v in raw.items()}
    total = sum(floored.values())
    if total <= 0.0:
        uniform = {k: 1.0 / len(floored) for k in floored}
        return ImportanceVector(weights=uniform, raw=raw, degenerate=True)
    return ImportanceVector(weights={k: v / total for k, v in floored.items()}, raw=raw)


def permutation_importance(
    model, X, y, loss, repeats: int = 5, seed: int = 0, feature_names=None
) -> ImportanceVector:
    """Mean loss increase from seeded within-column shuffles, per feature."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    d = X.shape[1]
    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(d)]
    baseline = loss(y, model.predict(X))
    rng = rng_for(seed, "perm_importance")
    raw = {}
    for j in range(d):
        increases = []
        for _ in range(repeats):
            shuffled = X.copy()
            shuffled[:, j] = shuffled[rng.permutation(len(X)), j]
            increases.append(loss(y, model.predict(shuffled)) - baseline)
        raw[names[j]] = float(np.mean(increases))
    return _normalize(raw)


def _coalition_loss(model, X, y, loss, background: np.ndarray, included: frozenset, cache: dict) -> float:
    if included in cache:
        return cache[included]
    masked = np.tile(background, (len(X), 1))
    cols = sorted(included)
    if cols:
        masked[:, cols] = X[:, cols]
    value = loss(y, model.predict(masked))
    cache[included] = value
    return value


def shapley_importance(
    model, X, y, loss, samples: int = 64, seed: int = 0, feature_names=None, exact: bool = False
) -> tuple[ImportanceVector, float]:
    """Shapley attribution of the model's loss reduction over features.

    Features outside a coalition are imputed with the background column
    mean. Returns the importance vector plus the total loss reduction
    (loss with no features minus loss with all features); in exact mode the
    raw contributions sum to that total.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    d = X.shape[1]
    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(d)]
    background = X.mean(axis=0)
    cache: dict[frozenset, float] = {}
    contributions = np.zeros(d)

    if exact:
        if d > 20:
            raise ValueError("exact mode supports at most 20 features")
        weights = [math.factorial(s) * math.factorial(d - s - 1) / math.factorial(d) for s in range(d)]
        for j in range(d):
            others = [i for i in range(d) if i != j]
            total = 0.0
            for size in range(d):
                for subset in itertools.combinations(others, size):
                    base = frozenset(subset)
                    gain = _coalition_loss(model, X, y, loss, background, base, cache) - \
                        _coalition_loss(model, X, y, loss, background, base | {j}, cache)
                    total += weights[size] * gain
            contributions[j] = total
    else:
        if samples < 1:
            raise ValueError("samples must be >= 1")
        rng = rng_for(seed, "shapley")
        counts = np.zeros(d)
        for _ in range(samples):
            perm = rng.permutation(d)
            included: frozenset = frozenset()
            prev = _coalition_loss(model, X, y, loss, background, included, cache)
            for j in perm:
                included = included | {int(j)}
                cur = _coalition_loss(model, X, y, loss, background, included, cache)
                contributions[j] += prev - cur
                counts[j] += 1
                prev = cur
        contributions /= counts
    total_reduction = _coalition_loss(model, X, y, loss, background, frozenset(), cache) - \
        _coalition_loss(model, X, y, loss, background, frozenset(range(d)), cache)
    raw = dict(zip(names, contributions.tolist()))
    return _normalize(raw), float(total_reduction)


ASPECT_FEATURES = ("option_count", "p_w", "mu_a", "sigma_a", "module_count")
ASPECT_GROUPS = {
    "Option#": ("option_count",),
    "IEWithin_p": ("p_w",),
    "IEAcross_p": ("mu_a", "sigma_a"),
    "Module#": ("module_count",),
}


def aspect_regression(
    records,
    degrees=(1, 2, 3, 4),
    alphas=None,
    cv: CVSpec = CVSpec(folds=5, shuffle_seed=0),
    feature_names=ASPECT_FEATURES,
    aspect_groups=ASPECT_GROUPS,
) -> tuple[FittedL1, ImportanceVector]:
    """Regress hardness on scaled structural aspects with a grid-searched
    lasso, then attribute coefficient mass to the aspect quadruple.

    Records are (feature vector, hardness) pairs with features already
    scaled to [0, 1] by their value-space bounds. A mixed polynomial term
    splits its |coefficient| equally across the distinct aspects it touches.
    """
    records = list(records)
    if len(records) < 10:
        raise ValueError(f"need >= 10 records, got {len(records)}")
    X = np.asarray([r[0] for r in records], dtype=float)
    y = np.asarray([r[1] for r in records], dtype=float)
    if alphas is None:
        alphas = l1_grid()["alpha"]

    names = list(feature_names)
    best: tuple[float, int, float] | None = None  # (loss, degree, alpha)
    for degree in degrees:
        for alpha in alphas:
            params = L1Params(alpha=float(alpha), degree=int(degree))
            loss = cross_validate(
                lambda Xt, yt, p=params: fit_l1(Xt, yt, p, feature_names=names), X, y, cv
            )
            if best is None or loss < best[0]:
                best = (loss, int(degree), float(alpha))
    _, degree, alpha = best
    model = fit_l1(X, y, L1Params(alpha=alpha, degree=degree), feature_names=names)

    feature_to_group = {}
    for group, members in aspect_groups.items():
        for member in members:
            feature_to_group[member] = group
    raw = {group: 0.0 for group in aspect_groups}
    for term, coef in zip(model.expansion.term_features(), model.coefs):
        groups = sorted({feature_to_group[names[i]] for i in term})
        for group in groups:
            raw[group] += abs(float(coef)) / len(groups)
    return model, _normalize(raw)


@dataclass(frozen=True)
class HypothesisTest:
    family: str  # "hardness" | "knowledge" | "cross"
    hypothesis_id: str
    group1: tuple[str, str]  # (knowledge level, hardness level)
    group2: tuple[str, str]
    alternative: str
    n1: int
    n2: int
    p_value: float | None
    cles_g1: float | None
    cles_g2: float | None
    significant: bool
    skipped: bool = False


def _cell_pairs():
    """The 27 hypothesis rows, 9 per family: hardness effects within a fixed
    knowledge level, knowledge effects within a fixed hardness level, and
    cross comparisons of lower-hardness/higher-knowledge cells against
    higher-hardness/lower-knowledge ones."""
    rows = []
    hardness_pairs = [("low", "medium"), ("low", "high"), ("medium", "high")]
    for level in MATRIX_LEVELS:
        for h1, h2 in hardness_pairs:
            rows.append(("hardness", (level, h1), (level, h2), "less"))
    knowledge_pairs = [("partial", "practical"), ("partial", "complete"), ("practical", "complete")]
    for hardness_level in HARDNESS_LEVELS:
        for k1, k2 in knowledge_pairs:
            rows.append(("knowledge", (k1, hardness_level), (k2, hardness_level), "less"))
    cross = [
        (("practical", "low"), ("partial", "medium")),
        (("complete", "low"), ("partial", "medium")),
        (("complete", "low"), ("practical", "medium")),
        (("practical", "low"), ("partial", "high")),
        (("complete", "low"), ("partial", "high")),
        (("practical", "medium"), ("partial", "high")),
        (("complete", "medium"), ("partial", "high")),
        (("complete", "low"), ("practical", "high")),
        (("complete", "medium"), ("practical", "high")),
    ]
    for g1, g2 in cross:
        rows.append(("cross", g1, g2, "two_sided"))
    return rows


def matrix_hypothesis_tests(matrix: OpportunityMatrix, alpha: float = 0.05) -> list[HypothesisTest]:
    """Run the full 27-test battery over a populated opportunity matrix.

    Tests touching an empty cell are emitted as skipped rows rather than
    dropped, so the table shape stays constant.
    """
    results = []
    for family, g1, g2, alternative in _cell_pairs():
        cell1 = matrix.cell(*g1)
        cell2 = matrix.cell(*g2)
        hid = f"{family}:{g1[0]},{g1[1]}-vs-{g2[0]},{g2[1]}"
        if cell1.empty or cell2.empty:
            results.append(
                HypothesisTest(
                    family=family, hypothesis_id=hid, group1=g1, group2=g2,
                    alternative=alternative, n1=cell1.count, n2=cell2.count,
                    p_value=None, cles_g1=None, cles_g2=None,
                    significant=False, skipped=True,
                )
            )
            continue
        res = mann_whitney_u(cell1.samples, cell2.samples, alternative=alternative)
        results.append(
            HypothesisTest(
                family=family, hypothesis_id=hid, group1=g1, group2=g2,
                alternative=alternative, n1=cell1.count, n2=cell2.count,
                p_value=res.p_value, cles_g1=res.cles, cles_g2=res.cles_other,
                significant=res.p_value < alpha, skipped=False,
            )
        )
    return results


@dataclass
class PipelineResult:
    model: FittedL1
    importance: ImportanceVector
    hardness_by_system: dict[str, tuple[float, str]]  # id -> (hardness used, level)
    matrix: OpportunityMatrix
    tests: list[HypothesisTest]


def two_stage_pipeline(
    aspect_records: dict,
    opportunity_records,
    metric: str,
    degrees=(1, 2, 3, 4),
    alphas=None,
    cv: CVSpec = CVSpec(folds=5, shuffle_seed=0),
    hardness_mode: HardnessMode = HardnessMode.FIXED_RANGE,
    alpha: float = 0.05,
    use_measured_hardness: bool = False,
) -> PipelineResult:
    """Stage 1 regresses hardness on aspects; stage 2 classifies each
    system by its predicted hardness (or measured, for sensitivity runs),
    routes opportunity values into the matrix, and runs the test battery.

    aspect_records: system id -> (scaled aspect vector, measured hardness).
    opportunity_records: iterable of (system id, knowledge level, value).
    """
    model, importance = aspect_regression(
        list(aspect_records.values()), degrees=degrees, alphas=alphas, cv=cv
    )
    ids = list(aspect_records)
    X = np.asarray([aspect_records[i][0] for i in ids], dtype=float)
    predicted = model.predict(X)
    used = {
        system_id: (aspect_records[system_id][1] if use_measured_hardness else float(pred))
        for system_id, pred in zip(ids, predicted)
    }
    population = list(used.values())
    hardness_by_system = {
        system_id: (value, classify_hardness(value, hardness_mode, population))
        for system_id, value in used.items()
    }
    observations = []
    for system_id, level, value in opportunity_records:
        if system_id not in hardness_by_system:
            raise ValueError(f"opportunity record for unknown system {system_id!r}")
        observations.append((level, hardness_by_system[system_id][1], value))
    matrix = build_matrix(observations, metric=metric)
    tests = matrix_hypothesis_tests(matrix, alpha=alpha)
    return PipelineResult(
        model=model,
        importance=importance,
        hardness_by_system=hardness_by_system,
        matrix=matrix,
        tests=tests,
    )
