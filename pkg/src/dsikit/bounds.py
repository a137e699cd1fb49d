"""Derivative-based upper bounds on total dependent sensitivity indices.

Two weightings of the derivative terms are offered:

``"poincare"`` (default)
    Each ``E_j / 2`` factor is replaced by the Gaussian Poincaré constant
    ``sigma_j^2``, giving finite and rigorous bounds.
``"integral"``
    The factor ``E_j = E[F(Z)(1 - F(Z)) / rho(Z)^2]`` of the innovation. For a
    Gaussian this expectation is infinite (the integrand behaves like ``1/|z|``
    in both tails), so every bound with a nonzero derivative term is ``inf``.

The integrand of ``E_j`` can be inspected on truncated ranges with
``ej_truncated``.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Optional

import mpmath
import numpy as np
from scipy.special import log_ndtr, ndtr

from dsikit.combinatorics import prefix_plan, subsets_excluding
from dsikit.dependency import dm_from_covariance, jacobian_column
from dsikit.errors import (
    BoundUnavailable,
    GradientUnavailable,
    NonpositiveVariance,
    NotIndependentInput,
)
from dsikit.variance import gsi_total_of_dm, output_variance, stream

WEIGHTS = ("poincare", "integral")
HEURISTIC_DRAWS = 10_000
HEURISTIC_INFLATION = 1.1


# --------------------------------------------------------------------------
# the E factor
# --------------------------------------------------------------------------

def standard_integrand(u):
    """``Phi(u)(1 - Phi(u)) / phi(u)``, the density-weighted E integrand for N(0, 1)."""
    u = np.asarray(u, dtype=float)
    return np.exp(log_ndtr(u) + log_ndtr(-u) + 0.5 * u * u + 0.5 * np.log(2 * np.pi))


def _mp_integrand(u):
    return mpmath.ncdf(u) * mpmath.ncdf(-u) / mpmath.npdf(u)


def standard_ej_quadrature(method="tanh-sinh", nodes=200):
    """Raw full-line quadrature of ``E_std``.

    ``"tanh-sinh"`` uses mpmath's double-exponential rule on (-inf, 0] and
    [0, inf); ``"gauss-hermite"`` reweights the integrand by ``exp(u^2)`` and
    applies a ``nodes``-point Gauss-Hermite rule. Neither converges, because
    the integral is infinite; the results are returned unaltered.
    """
    if method == "tanh-sinh":
        with mpmath.workdps(30):
            return float(mpmath.quad(_mp_integrand, [-mpmath.inf, 0, mpmath.inf]))
    if method == "gauss-hermite":
        x, w = np.polynomial.hermite.hermgauss(nodes)
        return float(np.sum(w * standard_integrand(x) * np.exp(x * x)))
    raise ValueError(f"unknown quadrature {method!r}")


@lru_cache(maxsize=None)
def standard_ej():
    """``E_std = E[Phi(U)(1 - Phi(U)) / phi(U)^2]`` for ``U ~ N(0, 1)``.

    Returns ``inf`` when the tail of the integrand is harmonic, that is when
    ``u * f(u)`` has settled at 1 (Mills ratio); otherwise the adaptive
    tanh-sinh value.
    """
    far = np.array([1e3, 1e4])
    mills = far * standard_integrand(far)
    if np.all(np.abs(mills - 1.0) < 1e-3):
        return float("inf")
    return standard_ej_quadrature("tanh-sinh")


def ej_factor(sigma2):
    """``E_j`` of a centred Gaussian with variance ``sigma2``: ``sigma2 * E_std``."""
    sigma2 = float(sigma2)
    if not sigma2 > 0:
        raise NonpositiveVariance(f"variance must be positive, got {sigma2}")
    return sigma2 * standard_ej()


def ej_truncated(sigma2, cutoff, method="tanh-sinh", nodes=400):
    """``E_j`` restricted to ``|z| <= cutoff`` for ``Z ~ N(0, sigma2)``.

    Integrates ``F(z)(1 - F(z)) / rho(z)`` directly in ``z`` with either
    mpmath tanh-sinh or ``nodes``-point Gauss-Legendre.
    """
    sigma2 = float(sigma2)
    if not sigma2 > 0:
        raise NonpositiveVariance(f"variance must be positive, got {sigma2}")
    sd = np.sqrt(sigma2)
    if method == "tanh-sinh":
        s = mpmath.sqrt(mpmath.mpf(sigma2))
        with mpmath.workdps(30):
            val = mpmath.quad(lambda z: _mp_integrand(z / s) * s, [-cutoff, 0, cutoff])
        return float(val)
    if method == "gauss-legendre":
        x, w = np.polynomial.legendre.leggauss(nodes)
        z = cutoff * x
        f = ndtr(z / sd) * ndtr(-z / sd) * sd * np.sqrt(2 * np.pi) * np.exp(0.5 * (z / sd) ** 2)
        return float(cutoff * np.sum(w * f))
    raise ValueError(f"unknown quadrature {method!r}")


def e_weight(sigma2, weight="poincare"):
    """The quantity standing for ``E_j`` in the bound formulas."""
    if weight == "integral":
        return ej_factor(sigma2)
    if weight == "poincare":
        if not sigma2 > 0:
            raise NonpositiveVariance(f"variance must be positive, got {sigma2}")
        return 2.0 * float(sigma2)
    raise ValueError(f"unknown weight {weight!r}; choose from {WEIGHTS}")


def _times(e, x):
    """``e * x`` with ``inf * 0 = 0`` (terms whose derivative vanishes)."""
    return 0.0 if x == 0 else e * x


# --------------------------------------------------------------------------
# bounds
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Bound:
    value: float
    label: str  # "linear", "gaussian" or "heuristic"
    e_factor: float
    std_error: float = 0.0


def _sigma(model, spec, config, sigma):
    return sigma if sigma is not None else output_variance(model, spec, config)


def dub_independent(model, spec, j, config, sigma=None, weight="poincare"):
    """Bound on the total index of an input independent of all others."""
    if not spec.is_independent(j):
        raise NotIndependentInput(f"input {j} belongs to a dependent block")
    sigma = _sigma(model, spec, config, sigma)
    var_j = spec.variances[j]
    e = e_weight(var_j, weight)
    if model.kind == "linear":
        g2 = float(model.linear_coefficients[j] ** 2)
        return Bound(_times(e, g2) / (2 * sigma.value), "linear", e)
    if model.kind == "additive-nonlinear":
        beta, mu = model.params[j], spec.mean[j]
        g2 = float(beta ** 2 * (1 + np.cos(2 * mu) * np.exp(-2 * var_j)) / 2)
        return Bound(_times(e, g2) / (2 * sigma.value), "gaussian", e)
    if model.gradient is None:
        raise GradientUnavailable(f"model {model.name!r} has no gradient")
    x = spec.sample(stream(config.seed, "dub", j), config.n_var)
    sq = model.grad(x)[:, j] ** 2
    g2 = float(sq.mean())
    se = float(sq.std(ddof=1) / np.sqrt(sq.size))
    return Bound(_times(e, g2) / (2 * sigma.value), "gaussian", e, _times(e, se) / (2 * sigma.value))


def _m1(model, spec, block, config):
    """``M_1`` for a block and whether it is certified."""
    bound = model.block_partial_bound(block)
    if bound is not None:
        return bound, True
    if model.gradient is None:
        raise BoundUnavailable(f"model {model.name!r} has neither partial bounds nor a gradient")
    x = spec.sample(stream(config.seed, "m1", block), HEURISTIC_DRAWS)
    g = np.abs(model.grad(x)[:, list(block)])
    return HEURISTIC_INFLATION * float(g.max()), False


def _block_terms(spec, block, j):
    """``(u, J^(u,j))`` for every conditioning set of ``j`` within ``block``."""
    for u in subsets_excluding(block, j):
        dm = dm_from_covariance(spec.covariance, block, prefix_plan(block, u, j))
        yield u, jacobian_column(dm, u, j)


def dub(model, spec, j, config, sigma=None, weight="poincare", block=None, form=None):
    """Derivative-based bound on ``DS_T`` of ``j`` in a dependent block.

    ``form`` chooses between ``"general"`` (a single partial-derivative bound
    ``M_1`` for the block) and ``"linear"`` (coefficient sums over the inputs
    outside ``u``). It defaults to ``"linear"`` for linear models. ``block``
    overrides the block of ``j``.
    """
    block = tuple(sorted(block if block is not None else (spec.partition.block_of(j) or ())))
    if j not in block or len(block) < 2:
        return dub_independent(model, spec, j, config, sigma, weight)
    sigma = _sigma(model, spec, config, sigma)
    form = form or ("linear" if model.kind == "linear" else "general")
    d_k = len(block)
    e = e_weight(spec.variances[j], weight)
    total = 0.0
    if form == "linear":
        if model.linear_coefficients is None:
            raise BoundUnavailable("the linear form needs a linear model")
        beta = model.linear_coefficients
        for u, J in _block_terms(spec, block, j):
            m_rest = float(sum(beta[l] ** 2 for l in block if l not in u))
            total += _times(e, m_rest * float(J @ J)) / comb(d_k - 1, len(u))
        return Bound(total / (2 * d_k * sigma.value), "linear", e)
    m1, certified = _m1(model, spec, block, config)
    for u, J in _block_terms(spec, block, j):
        total += _times(e, (d_k - len(u)) * float(J @ J)) / comb(d_k - 1, len(u))
    value = m1 ** 2 * total / (2 * d_k * sigma.value)
    return Bound(value, "gaussian" if certified else "heuristic", e)


def dependent_gradient_bound(model, spec, block):
    """``M^d`` for a block.

    User-supplied values win. For linear models it is the largest
    ``|beta . J| / |J|`` over every Jacobian column of the block, which makes
    each term of the bound dominate its variance exactly. Models with
    partial-derivative bounds get the Euclidean norm of those over the block.
    """
    if model.dependent_gradient_bound is not None:
        return float(model.dependent_gradient_bound)
    if model.linear_coefficients is not None:
        beta = model.linear_coefficients[list(block)]
        best = 0.0
        for i in block:
            for _, J in _block_terms(spec, block, i):
                n = float(np.linalg.norm(J))
                if n > 0:
                    best = max(best, abs(float(beta @ J)) / n)
        return best
    if model.partial_bounds is not None:
        return float(np.linalg.norm(model.partial_bounds[list(block)]))
    raise BoundUnavailable(f"no dependent-gradient bound for model {model.name!r}")


def dub_prime(model, spec, j, config, sigma=None):
    """GSI-based bound on ``DS_T`` of ``j`` in a dependent block."""
    block = spec.partition.block_of(j)
    if block is None:
        raise BoundUnavailable(f"input {j} is not in a dependent block")
    sigma = _sigma(model, spec, config, sigma)
    md = dependent_gradient_bound(model, spec, block)
    d_k = len(block)
    total = 0.0
    for u in subsets_excluding(block, j):
        dm = dm_from_covariance(spec.covariance, block, prefix_plan(block, u, j))
        gsi = gsi_total_of_dm(dm, u, j)
        total += gsi.trace_var * gsi.gsi_t / comb(d_k - 1, len(u))
    return md ** 2 * total / (d_k * sigma.value)


@dataclass(frozen=True)
class BoundReport:
    input: int
    dub: float
    dub_prime: Optional[float]
    label: str
    e_factor: float

    @property
    def minimum(self):
        return self.dub if self.dub_prime is None else min(self.dub, self.dub_prime)


def bound_report(model, spec, j, config, sigma=None, weight="poincare"):
    """Both bounds for ``j``; ``dub_prime`` is ``None`` when unavailable."""
    sigma = _sigma(model, spec, config, sigma)
    b = dub(model, spec, j, config, sigma, weight)
    prime = None
    if spec.partition.block_of(j) is not None:
        try:
            prime = dub_prime(model, spec, j, config, sigma)
        except BoundUnavailable:
            prime = None
    return BoundReport(j, b.value, prime, b.label, b.e_factor)


__all__ = [
    "WEIGHTS", "Bound", "BoundReport", "bound_report", "dependent_gradient_bound", "dub",
    "dub_independent", "dub_prime", "e_weight", "ej_factor", "ej_truncated", "standard_ej",
    "standard_ej_quadrature", "standard_integrand",
]
