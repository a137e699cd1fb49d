"""Dependent sensitivity indices, Shapley effects and Sobol' indices."""

from dataclasses import dataclass, field
from itertools import permutations
from math import comb, factorial
from typing import Optional

import numpy as np

from dsikit.combinatorics import (
    MAX_ENUMERATION,
    cost_dsi,
    cost_shapley,
    cost_shapley_sampled,
    shapley_weight,
    subsets_excluding,
)
from dsikit.dependency import plan_for
from dsikit.errors import DimensionTooLargeForExact, NotIndependentInput
from dsikit.variance import (
    VarianceEstimate,
    _covariance,
    _evaluate,
    _jansen,
    conditional_variance_V,
    design_sf_variances,
    output_variance,
    parallel_map,
    sf_variances,
    stream,
    use_exact,
)


def _ratio(num, num_se, sigma):
    """Index ``num / Sigma`` with the uncertainty of both parts."""
    value = num / sigma.value
    se = np.hypot(num_se, value * sigma.std_error) / sigma.value
    return float(value), float(se)


def dsi(model, spec, j, config, sigma=None):
    """Main and total dependent sensitivity indices of input ``j``.

    Inputs of pi_1 get their Sobol' indices. For an input of a dependent
    block, the first-order and total variances of its variable are averaged
    over every conditioning set ``u`` of its block, each realised by the
    ordering ``(u, j, rest ascending)``, with weights ``1 / C(d_k - 1, |u|)``.
    """
    sigma = sigma or output_variance(model, spec, config)
    block = spec.partition.block_of(j)
    if block is None:
        fo, tot = sf_variances(model, spec, plan_for(spec, j), config)
        ds = _ratio(fo.value, fo.std_error, sigma)
        dst = _ratio(tot.value, tot.std_error, sigma)
        n = fo.n_evals
    else:
        d_k = len(block)
        acc = np.zeros(4)
        n = 0
        for u in subsets_excluding(block, j):
            fo, tot = sf_variances(model, spec, plan_for(spec, j, u), config)
            w = 1.0 / (d_k * comb(d_k - 1, len(u)))
            acc += [w * fo.value, (w * fo.std_error) ** 2, w * tot.value, (w * tot.std_error) ** 2]
            n += fo.n_evals
        ds = _ratio(acc[0], np.sqrt(acc[1]), sigma)
        dst = _ratio(acc[2], np.sqrt(acc[3]), sigma)
    exact = sigma.exact and use_exact(model, config)
    return (VarianceEstimate(ds[0], ds[1], n, exact),
            VarianceEstimate(dst[0], dst[1], n, exact))


class VCache:
    """Memoised ``V(u)`` values shared by all Shapley computations of one report."""

    def __init__(self, model, spec, config):
        self.model, self.spec, self.config = model, spec, config
        self.values = {}

    def __call__(self, u):
        u = tuple(sorted(u))
        if u not in self.values:
            self.values[u] = conditional_variance_V(self.model, self.spec, u, self.config)
        return self.values[u]

    def prefetch(self, subsets):
        todo = sorted({tuple(sorted(u)) for u in subsets} - set(self.values), key=lambda s: (len(s), s))
        results = parallel_map(
            lambda u: conditional_variance_V(self.model, self.spec, u, self.config), todo, self.config
        )
        self.values.update(zip(todo, results))

    @property
    def n_evals(self):
        return sum(v.n_evals for v in self.values.values())


def _all_subsets(d):
    from itertools import combinations

    return [c for s in range(d + 1) for c in combinations(range(d), s)]


def shapley_exact(model, spec, j, config, cache=None):
    """Shapley effect of ``j`` from the full subset sum of ``V(u ∪ j) - V(u)``."""
    d = spec.d
    if d > MAX_ENUMERATION:
        raise DimensionTooLargeForExact(f"d = {d} exceeds {MAX_ENUMERATION}")
    cache = cache or VCache(model, spec, config)
    cache.prefetch(_all_subsets(d))
    sigma = cache(tuple(range(d)))
    total = 0.0
    var = 0.0
    for u in subsets_excluding(range(d), j):
        w = shapley_weight(d, len(u))
        hi, lo = cache(u + (j,)), cache(u)
        total += w * (hi.value - lo.value)
        if len(u) + 1 < d:
            var += (w * hi.std_error) ** 2
        var += (w * lo.std_error) ** 2
    value, se = _ratio(total, np.sqrt(var), sigma)
    exact = all(v.exact for v in cache.values.values())
    return VarianceEstimate(value, se, cache.n_evals, exact)


def _random_permutations(d, n, seed):
    rng = stream(seed, "permutations")
    return [tuple(int(i) for i in rng.permutation(d)) for _ in range(n)]


def shapley_sampled(model, spec, j, config, perms=None, cache=None, enumerate_small=True):
    """Shapley effect of ``j`` averaged over random orderings of all inputs.

    ``perms`` overrides the orderings. Otherwise ``n_perm`` uniform orderings
    are drawn, or every ordering once when ``n_perm >= d!`` and
    ``enumerate_small`` is set. The standard error combines the spread
    between orderings with the uncertainty of the ``V`` values.
    """
    d = spec.d
    if perms is None:
        perms = (list(permutations(range(d))) if enumerate_small and config.n_perm >= factorial(d)
                 else _random_permutations(d, config.n_perm, config.seed))
    cache = cache or VCache(model, spec, config)
    needed = set()
    for p in perms:
        pred = p[:p.index(j)]
        needed.update([pred, pred + (j,)])
    cache.prefetch(needed | {tuple(range(d))})
    sigma = cache(tuple(range(d)))
    n = len(perms)
    deltas = np.empty(n)
    weight = {}
    for k, p in enumerate(perms):
        lo, hi = tuple(sorted(p[:p.index(j)])), tuple(sorted(p[:p.index(j) + 1]))
        deltas[k] = cache(hi).value - cache(lo).value
        weight[hi] = weight.get(hi, 0) + 1
        weight[lo] = weight.get(lo, 0) - 1
    between = deltas.std(ddof=1) / np.sqrt(n) if n > 1 else 0.0
    if n == factorial(d) and len(set(perms)) == n:
        between = 0.0
    # each V(u) enters the mean with its net count over the orderings
    v_se = np.sqrt(sum((c / n * cache(u).std_error) ** 2 for u, c in weight.items()))
    value, se = _ratio(float(deltas.mean()), float(np.hypot(between, v_se)), sigma)
    return VarianceEstimate(value, se, cache.n_evals, all(v.exact for v in cache.values.values()))


def sobol(model, spec, j, config, sigma=None):
    """Main and total Sobol' indices of an input independent of all others."""
    if not spec.is_independent(j):
        raise NotIndependentInput(f"input {j} belongs to a dependent block")
    sigma = sigma or output_variance(model, spec, config)
    if use_exact(model, config):
        fo, tot = sf_variances(model, spec, plan_for(spec, j), config)
        return (VarianceEstimate(fo.value / sigma.value, 0.0, 0, True),
                VarianceEstimate(tot.value / sigma.value, 0.0, 0, True))
    rng = stream(config.seed, "sobol", j)
    xa = spec.sample(rng, config.m)
    xb = spec.sample(rng, config.m)
    xh = xa.copy()
    xh[:, j] = xb[:, j]
    fa, fb, fh = (_evaluate(model, x) for x in (xa, xb, xh))
    fo = _ratio(*_covariance(fb, fh), sigma)
    tot = _ratio(*_jansen(fa, fh), sigma)
    n = 3 * config.m
    return VarianceEstimate(fo[0], fo[1], n, False), VarianceEstimate(tot[0], tot[1], n, False)


def all_dsi(model, spec, config, sigma=None):
    """DS and DS_T for every input, plus the number of model runs spent.

    Closed-form models go pair by pair; otherwise all pairs come from one
    shared pick-freeze design over covering orderings of each block.
    """
    sigma = sigma or output_variance(model, spec, config)
    if use_exact(model, config):
        out = [dsi(model, spec, j, config, sigma) for j in range(spec.d)]
        return out, 0
    pairs, n_evals = design_sf_variances(model, spec, config)
    out = []
    for j in range(spec.d):
        block = spec.partition.block_of(j)
        if block is None:
            fo, se_fo, tot, se_tot = pairs[((), j)].summary()
            ds, dst = _ratio(fo, se_fo, sigma), _ratio(tot, se_tot, sigma)
        else:
            d_k = len(block)
            acc = np.zeros(4)
            for u in subsets_excluding(block, j):
                fo, se_fo, tot, se_tot = pairs[(u, j)].summary()
                w = 1.0 / (d_k * comb(d_k - 1, len(u)))
                acc += [w * fo, (w * se_fo) ** 2, w * tot, (w * se_tot) ** 2]
            ds = _ratio(acc[0], np.sqrt(acc[1]), sigma)
            dst = _ratio(acc[2], np.sqrt(acc[3]), sigma)
        out.append((VarianceEstimate(ds[0], ds[1], n_evals, False),
                    VarianceEstimate(dst[0], dst[1], n_evals, False)))
    return out, n_evals


@dataclass
class IndexRow:
    input: int
    DS: float
    DS_T: float
    Sh: float
    S: Optional[float]
    S_T: Optional[float]
    DUB: Optional[float]
    DUB_prime: Optional[float]
    stderr_DS: float
    stderr_DST: float
    stderr_Sh: float
    n_evals: int
    exact: bool
    bound_label: str = ""

    @property
    def DUB_min(self):
        vals = [v for v in (self.DUB, self.DUB_prime) if v is not None]
        return min(vals) if vals else None


@dataclass
class IndexReport:
    rows: list
    sigma: VarianceEstimate
    partition: object
    config: object
    n_evals_dsi: int
    n_evals_shapley: int
    n_evals_sobol: int
    shapley_method: str
    costs: dict = field(default_factory=dict)

    @property
    def within_dsi_cost(self):
        return self.n_evals_dsi <= self.costs["C_l"]


def full_report(model, spec, config, weight="poincare"):
    """Every index and bound for every input."""
    from dsikit import bounds

    sigma = output_variance(model, spec, config)
    d = spec.d
    dsis, n_dsi = all_dsi(model, spec, config, sigma)

    cache = VCache(model, spec, config)
    subset_cost = 2 ** d - 2
    exact_paths = use_exact(model, config)
    if d <= MAX_ENUMERATION and (exact_paths or subset_cost <= config.n_perm * (d - 1)):
        method = "subsets"
        shap = [shapley_exact(model, spec, j, config, cache) for j in range(d)]
    else:
        method = "permutations"
        perms = _random_permutations(d, config.n_perm, config.seed)
        shap = [shapley_sampled(model, spec, j, config, perms, cache) for j in range(d)]

    rows = []
    n_sobol = 0
    for j in range(d):
        ds, dst = dsis[j]
        s = st = None
        if spec.is_independent(j):
            s_est, st_est = sobol(model, spec, j, config, sigma)
            s, st = s_est.value, st_est.value
            n_sobol += s_est.n_evals
        b = bounds.bound_report(model, spec, j, config, sigma, weight)
        rows.append(IndexRow(
            input=j, DS=ds.value, DS_T=dst.value, Sh=shap[j].value, S=s, S_T=st,
            DUB=b.dub, DUB_prime=b.dub_prime,
            stderr_DS=ds.std_error, stderr_DST=dst.std_error, stderr_Sh=shap[j].std_error,
            n_evals=ds.n_evals, exact=ds.exact and shap[j].exact, bound_label=b.label,
        ))
    m = config.m
    costs = {
        "C_l": cost_dsi(m, spec.partition.d_max),
        "C": cost_shapley(d, config.n_inner, config.n_outer, config.n_var),
        "C_prime": cost_shapley_sampled(d, config.n_inner, config.n_outer, config.n_perm, config.n_var),
    }
    return IndexReport(rows, sigma, spec.partition, config, n_dsi, cache.n_evals, n_sobol, method, costs)
