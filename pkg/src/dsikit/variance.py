"""Variance estimation: output variance, closed conditional variances, pick-freeze
sensitivity-functional variances and total GSIs of dependency maps.

Every estimator has two routes. Models with closed-form Gaussian moments
(``linear`` and ``additive-nonlinear``) are handled exactly; everything else is
Monte Carlo. Random numbers come from counter-based Philox streams keyed by
``(seed, tag, unit)`` so a result never depends on scheduling or worker count.
"""

import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from dsikit._linalg import gaussian_conditional, pinv_psd, psd_cholesky
from dsikit.combinatorics import covering_permutations, pairs_of
from dsikit.dependency import jacobian_column, plan_from_orderings, representation_matrix
from dsikit.errors import DegenerateVariance, InconsistentPrefix

DEGENERATE_SIGMA = 1e-14
CHUNK = 1 << 20  # max model evaluations per vectorised call


@dataclass(frozen=True)
class EstimatorConfig:
    m: int = 10_000
    n_inner: int = 10_000
    n_outer: int = 10_000
    n_var: int = 10_000
    n_perm: int = 500
    seed: int = 0
    antithetic: bool = False
    mode: str = "auto"  # "auto" | "exact" | "mc"
    workers: Optional[int] = None

    def __post_init__(self):
        for name in ("m", "n_inner", "n_outer", "n_var"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be at least 2")
        if self.n_perm < 1:
            raise ValueError("n_perm must be at least 1")
        if self.mode not in ("auto", "exact", "mc"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def n_workers(self):
        if self.workers is not None:
            return max(1, int(self.workers))
        env = os.environ.get("DSIKIT_THREADS")
        if env:
            return max(1, int(env))
        return os.cpu_count() or 1


@dataclass(frozen=True)
class VarianceEstimate:
    value: float
    std_error: float = 0.0
    n_evals: int = 0
    exact: bool = False


@dataclass(frozen=True)
class GSIResult:
    gsi_t: float
    trace_var: float
    std_error: float = 0.0


def stream(seed, tag, *unit):
    """Independent generator addressed by ``(seed, tag, unit...)``."""
    words = [int(seed) & 0xFFFFFFFF, (int(seed) >> 32) & 0xFFFFFFFF, zlib.crc32(tag.encode())]
    for key in unit:
        if isinstance(key, (tuple, list)):
            words.append(len(key))
            words.extend(int(k) for k in key)
        else:
            words.append(int(key) & 0xFFFFFFFF)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


def parallel_map(fn, items, config):
    """``map`` over independent work units, results in input order."""
    items = list(items)
    workers = min(config.n_workers, len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def has_closed_form(model):
    return model.kind in ("linear", "additive-nonlinear")


def use_exact(model, config):
    if config.mode == "mc":
        return False
    if config.mode == "exact" and not has_closed_form(model):
        raise ValueError(f"no closed-form path for model {model.name!r}")
    return has_closed_form(model)


# --------------------------------------------------------------------------
# closed-form moments
# --------------------------------------------------------------------------

def closed_variance(model, mean, A, cols):
    """``Var(E[M(mean + A eta) | eta[cols]])`` for standard normal ``eta``."""
    cols = list(cols)
    beta = np.asarray(model.params, dtype=float)
    if model.kind == "linear":
        b = A[:, cols].T @ beta
        return float(b @ b)
    if model.kind != "additive-nonlinear":
        raise ValueError(f"no closed form for {model.name!r}")
    a = A[:, cols]
    full = np.sum(A * A, axis=1)
    s = np.sum(a * a, axis=1)
    coef = beta * np.exp(-0.5 * (full - s))
    q = a @ a.T
    mu = np.asarray(mean, dtype=float)
    ssum = s[:, None] + s[None, :]
    cov = 0.5 * (np.cos(mu[:, None] - mu[None, :]) * np.exp(-0.5 * (ssum - 2 * q))
                 - np.cos(mu[:, None] + mu[None, :]) * np.exp(-0.5 * (ssum + 2 * q)))
    cov -= np.outer(np.sin(mu), np.sin(mu)) * np.exp(-0.5 * ssum)
    return float(coef @ cov @ coef)


def ordered_factor(covariance, order):
    """``A`` with ``X = A eta`` whose first ``k`` columns generate ``X[order[:k]]``."""
    cov = np.asarray(covariance, dtype=float)
    order = list(order)
    L, _ = psd_cholesky(cov[np.ix_(order, order)])
    A = np.zeros_like(L)
    A[order, :] = L
    return A


def exact_output_variance(model, spec):
    if model.kind == "linear":
        beta = model.linear_coefficients
        return float(beta @ spec.covariance @ beta)
    return closed_variance(model, spec.mean, spec._factor, range(spec.d))


def exact_V(model, spec, u):
    """Closed ``Var(E[M | X_u])``; the linear case uses the regression formula."""
    u = sorted(u)
    if not u:
        return 0.0
    rest = [i for i in range(spec.d) if i not in u]
    if model.kind == "linear":
        beta = model.linear_coefficients
        if not rest:
            return exact_output_variance(model, spec)
        cov = spec.covariance
        s_uu = cov[np.ix_(u, u)]
        c = beta[u] + pinv_psd(s_uu) @ cov[np.ix_(u, rest)] @ beta[rest]
        return float(c @ s_uu @ c)
    A = ordered_factor(spec.covariance, u + rest)
    return closed_variance(model, spec.mean, A, range(len(u)))


def exact_V_by_factor(model, spec, u):
    """Same quantity through an ordered Cholesky factor (independent route)."""
    u = sorted(u)
    rest = [i for i in range(spec.d) if i not in u]
    A = ordered_factor(spec.covariance, u + rest)
    return closed_variance(model, spec.mean, A, range(len(u)))


# --------------------------------------------------------------------------
# Monte Carlo building blocks
# --------------------------------------------------------------------------

def _evaluate(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape[0] <= CHUNK:
        return np.asarray(model(x), dtype=float)
    return np.concatenate([np.asarray(model(x[i:i + CHUNK]), dtype=float)
                           for i in range(0, x.shape[0], CHUNK)])


def _jansen(fa, fb):
    """``0.5 E[(fa - fb)^2]`` and its standard error."""
    h = 0.5 * (fa - fb) ** 2
    return float(h.mean()), float(h.std(ddof=1) / np.sqrt(h.size))


def _covariance(fa, fb):
    """Pick-freeze covariance ``E[fa fb] - mean^2`` and a delta-method standard error."""
    mu = 0.5 * (fa.mean() + fb.mean())
    value = float(np.mean(fa * fb) - mu * mu)
    psi = (fa - fa.mean()) * (fb - fb.mean())
    return value, float(psi.std(ddof=1) / np.sqrt(psi.size))


def output_variance(model, spec, config):
    """Variance of the model output."""
    if use_exact(model, config):
        value = exact_output_variance(model, spec)
        est = VarianceEstimate(value, 0.0, 0, True)
    else:
        rng = stream(config.seed, "output-variance")
        n = config.n_var
        if config.antithetic:
            eta = rng.standard_normal((n - n // 2, spec.d))
            eta = np.concatenate([eta, -eta])[:n]
            x = spec.mean + eta @ spec._factor.T
        else:
            x = spec.sample(rng, n)
        y = _evaluate(model, x)
        value = float(y.var(ddof=1))
        dev2 = (y - y.mean()) ** 2
        if config.antithetic:
            # mirrored draws are not independent; average them pairwise first
            half = n // 2
            dev2 = np.concatenate([0.5 * (dev2[:half] + dev2[n - n // 2:n - n // 2 + half]),
                                   dev2[half:n - n // 2]])
        est = VarianceEstimate(value, float(dev2.std(ddof=1) / np.sqrt(dev2.size)), n, False)
    if est.value < DEGENERATE_SIGMA:
        raise DegenerateVariance(f"output variance {est.value:.3e} is numerically zero")
    return est


def _double_loop(model, spec, u, config):
    u = sorted(u)
    rest = [i for i in range(spec.d) if i not in u]
    n_o, n_i = config.n_outer, config.n_inner
    cov = spec.covariance
    outer_factor, _ = psd_cholesky(cov[np.ix_(u, u)])
    coef, resid = gaussian_conditional(cov, u, rest)
    inner_factor, _ = psd_cholesky(resid) if rest else (np.zeros((0, 0)), None)
    rng = stream(config.seed, "V", u)
    mu = spec.mean
    per_chunk = max(1, CHUNK // n_i)
    means = np.empty(n_o)
    variances = np.empty(n_o)
    for start in range(0, n_o, per_chunk):
        k = min(per_chunk, n_o - start)
        xu = mu[u] + rng.standard_normal((k, len(u))) @ outer_factor.T
        shift = mu[rest] + (xu - mu[u]) @ coef.T
        xi = rng.standard_normal((k, n_i, len(rest))) @ inner_factor.T
        x = np.empty((k, n_i, spec.d))
        x[:, :, u] = xu[:, None, :]
        x[:, :, rest] = shift[:, None, :] + xi
        y = _evaluate(model, x.reshape(-1, spec.d)).reshape(k, n_i)
        means[start:start + k] = y.mean(axis=1)
        variances[start:start + k] = y.var(axis=1, ddof=1)
    centred = (means - means.mean()) ** 2 * n_o / (n_o - 1)
    q = centred - variances / n_i
    return VarianceEstimate(float(q.mean()), float(q.std(ddof=1) / np.sqrt(n_o)), n_o * n_i, False)


def conditional_variance_V(model, spec, u, config):
    """``Var(E[M(X) | X_u])``: exact when available, otherwise a bias-corrected double loop.

    ``V(()) = 0`` and ``V(all) = Sigma`` by convention.
    """
    u = tuple(sorted(u))
    if not u:
        return VarianceEstimate(0.0, 0.0, 0, True)
    if len(u) == spec.d:
        return output_variance(model, spec, config)
    if use_exact(model, config):
        return VarianceEstimate(exact_V(model, spec, u), 0.0, 0, True)
    return _double_loop(model, spec, u, config)


# --------------------------------------------------------------------------
# sensitivity-functional variances on equivalent representations
# --------------------------------------------------------------------------

def exact_sf(model, spec, plan):
    """Closed first-order and total variances of the target's variable in ``plan``."""
    A = representation_matrix(spec, plan)
    p = plan.target
    if model.kind == "linear":
        fo = tot = float((model.linear_coefficients @ A[:, p]) ** 2)
        return fo, tot
    others = [c for c in range(spec.d) if c != p]
    sigma = closed_variance(model, spec.mean, A, range(spec.d))
    fo = closed_variance(model, spec.mean, A, [p])
    tot = sigma - closed_variance(model, spec.mean, A, others)
    return fo, max(tot, 0.0)


def _pick_freeze(model, spec, A, rng, m, targets):
    """Pick-freeze estimates for the variables of ``X = mu + A eta``.

    Returns ``({variable: (fo, se_fo, tot, se_tot)}, n_evals)``. Small
    representations share evaluations: with two variables ``A_B^1`` is also
    ``B_A^2`` (3m for both); with three, two hybrids ``A_B^i``, ``A_B^k``
    share exactly the remaining variable (4m for all three). Larger ones use
    ``A``, ``B`` and one hybrid per requested target (2m + m per target).
    """
    d = spec.d
    a = rng.standard_normal((m, d))
    b = rng.standard_normal((m, d))

    def g(eta):
        return _evaluate(model, spec.mean + eta @ A.T)

    def hybrid(i):
        h = a.copy()
        h[:, i] = b[:, i]
        return g(h)

    out = {}
    if d == 1:
        fa, fb = g(a), g(b)
        fo, se_fo = _covariance(fb, fb)
        out[0] = (fo, se_fo) + _jansen(fa, fb)
        return out, 2 * m
    if d == 2:
        fa, fb, fh = g(a), g(b), hybrid(0)
        out[0] = _covariance(fb, fh) + _jansen(fa, fh)
        out[1] = _covariance(fa, fh) + _jansen(fb, fh)
        return out, 3 * m
    if d == 3:
        fa = g(a)
        fh = [hybrid(i) for i in range(3)]
        for k in range(3):
            i, j = (c for c in range(3) if c != k)
            out[k] = _covariance(fh[i], fh[j]) + _jansen(fa, fh[k])
        return out, 4 * m
    if not targets:
        return out, 0
    fa, fb = g(a), g(b)
    for i in targets:
        fh = hybrid(i)
        out[i] = _covariance(fb, fh) + _jansen(fa, fh)
    return out, (2 + len(targets)) * m


def sf_variances(model, spec, plan, config):
    """First-order and total variances of the target variable of ``plan``.

    Monte Carlo: ``fo = Cov(g(B), g(A_B^j))`` and Jansen
    ``tot = E[(g(A) - g(A_B^j))^2] / 2`` with ``3m`` evaluations.
    """
    if use_exact(model, config):
        fo, tot = exact_sf(model, spec, plan)
        return VarianceEstimate(fo, 0.0, 0, True), VarianceEstimate(tot, 0.0, 0, True)
    A = representation_matrix(spec, plan)
    rng = stream(config.seed, "sf", plan.target, plan.u)
    a = rng.standard_normal((config.m, spec.d))
    b = rng.standard_normal((config.m, spec.d))
    h = a.copy()
    h[:, plan.target] = b[:, plan.target]
    fa, fb, fh = (_evaluate(model, spec.mean + eta @ A.T) for eta in (a, b, h))
    fo, se_fo = _covariance(fb, fh)
    tot, se_tot = _jansen(fa, fh)
    n = 3 * config.m
    return VarianceEstimate(fo, se_fo, n, False), VarianceEstimate(tot, se_tot, n, False)


@dataclass
class PairEstimates:
    """Repeated estimates of (fo, tot) for one (u, j) pair, averaged on read."""

    fo: list
    se_fo: list
    tot: list
    se_tot: list

    def summary(self):
        n = len(self.fo)
        return (float(np.mean(self.fo)), float(np.sqrt(np.sum(np.square(self.se_fo))) / n),
                float(np.mean(self.tot)), float(np.sqrt(np.sum(np.square(self.se_tot))) / n))


def design_orderings(spec):
    """Joint orderings: round ``r`` uses the ``r``-th covering ordering of every block (cyclically)."""
    per_block = [covering_permutations(b) for b in spec.partition.blocks]
    rounds = max((len(p) for p in per_block), default=1)
    return [tuple(p[r % len(p)] for p in per_block) for r in range(rounds)]


def design_sf_variances(model, spec, config):
    """Monte Carlo (fo, tot) for every (u, j) pair of every input in one shared design.

    Keys are ``(u, j)``; inputs of pi_1 use ``u = ()``. Returns
    ``(dict of PairEstimates, n_evals)``.
    """
    rounds = design_orderings(spec)
    pi1 = spec.partition.independent

    def run(r):
        plan = plan_from_orderings(spec, rounds[r])
        A = representation_matrix(spec, plan)
        pairs = {j: ((), j) for j in pi1}
        for dm in plan.dms:
            for pair in pairs_of(dm.permutation):
                pairs[pair[1]] = pair
        return pairs, A

    layouts = [run(r) for r in range(len(rounds))]
    seen = set()
    todo = []
    for pairs, _ in layouts:
        fresh = [j for j, pair in sorted(pairs.items()) if pair not in seen]
        seen.update(pairs[j] for j in fresh)
        todo.append(fresh)

    def work(r):
        pairs, A = layouts[r]
        rng = stream(config.seed, "design", r)
        return _pick_freeze(model, spec, A, rng, config.m, todo[r])

    results = parallel_map(work, range(len(rounds)), config)
    collected = {}
    n_evals = 0
    for (pairs, _), (est, n) in zip(layouts, results):
        n_evals += n
        for j, (fo, se_fo, tot, se_tot) in sorted(est.items()):
            pe = collected.setdefault(pairs[j], PairEstimates([], [], [], []))
            pe.fo.append(fo)
            pe.se_fo.append(se_fo)
            pe.tot.append(tot)
            pe.se_tot.append(se_tot)
    return collected, n_evals


# --------------------------------------------------------------------------
# total generalized sensitivity index of a dependency map
# --------------------------------------------------------------------------

def gsi_total_of_dm(dm, u, j, config=None, monte_carlo=False):
    """Total GSI of the variable of ``j`` for the block map, and the trace it is relative to.

    The trace is taken over the block coordinates outside ``u`` (those the
    variable can move). ``trace_var * gsi_t`` equals half the expected squared
    jump of the block when that variable alone is redrawn.
    """
    J = jacobian_column(dm, u, j)
    p = dm.position(j)
    var_j = dm.innovation_variances[p]
    outside = [i for i, label in enumerate(dm.block) if label not in set(u)]
    variances = np.zeros(dm.size)
    for r, label in enumerate(dm.permutation):
        variances[dm.block.index(label)] = dm.innovation_variances[r]
    trace = float(variances[outside].sum())
    if not monte_carlo:
        return GSIResult(float(J @ J) * var_j / trace, trace, 0.0)
    if config is None:
        raise ValueError("Monte Carlo GSI needs an EstimatorConfig")
    if set(dm.permutation[:len(u)]) != set(u):
        raise InconsistentPrefix("u is not a prefix of the ordering")
    rng = stream(config.seed, "gsi", dm.permutation, p)
    m = config.m
    scaled = dm.scaled_coeff()
    a = rng.standard_normal((m, dm.size))
    h = a.copy()
    h[:, p] = rng.standard_normal(m)
    xa = a @ scaled.T
    xh = h @ scaled.T
    to_block = [dm.permutation.index(label) for label in dm.block]
    xa, xh = xa[:, to_block][:, outside], xh[:, to_block][:, outside]
    jump = 0.5 * np.sum((xa - xh) ** 2, axis=1)
    tr = float(np.sum(xa.var(axis=0, ddof=1)))
    return GSIResult(float(jump.mean()) / tr, tr, float(jump.std(ddof=1) / np.sqrt(m)) / tr)
