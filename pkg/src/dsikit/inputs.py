"""Gaussian input vectors, their independence structure, and the model registry.

Inputs are indexed from 0 throughout the API; only the CLI output uses
1-based labels.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.sparse.csgraph import connected_components

from dsikit._linalg import psd_cholesky
from dsikit.errors import (
    AsymmetricCovariance,
    DimensionMismatch,
    NonpositiveVariance,
    NotPositiveSemidefinite,
    ParamLengthMismatch,
    UnknownModel,
)

ZERO_THRESHOLD = 1e-12
SYMMETRY_RTOL = 1e-12
PSD_RTOL = 1e-10


@dataclass(frozen=True)
class Partition:
    """``independent`` is pi_1; ``blocks`` are the dependent blocks pi_2..pi_K."""

    independent: tuple
    blocks: tuple

    def block_of(self, j):
        """Dependent block containing ``j``, or ``None`` when ``j`` is in pi_1."""
        for block in self.blocks:
            if j in block:
                return block
        return None

    @property
    def d_max(self):
        return max((len(b) for b in self.blocks), default=1)


@dataclass(frozen=True, eq=False)
class GaussianInputSpec:
    mean: np.ndarray
    covariance: np.ndarray
    partition: Partition
    psd_tolerance: float
    _factor: np.ndarray = field(repr=False)

    @property
    def d(self):
        return self.mean.shape[0]

    @property
    def variances(self):
        return np.diag(self.covariance).copy()

    def is_independent(self, j):
        return j in self.partition.independent

    def sample(self, rng, n):
        """``n`` joint draws, shape (n, d)."""
        eta = rng.standard_normal((n, self.d))
        return self.mean + eta @ self._factor.T


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def detect_blocks(covariance, zero_threshold=ZERO_THRESHOLD):
    """Split the inputs into mutually independent groups.

    Two inputs are linked when their absolute correlation exceeds
    ``zero_threshold``. Singleton components form pi_1; the other components
    are the dependent blocks, ordered by smallest member.
    """
    cov = np.asarray(covariance, dtype=float)
    sd = np.sqrt(np.diag(cov))
    corr = cov / np.outer(sd, sd)
    adjacency = np.abs(corr) > zero_threshold
    np.fill_diagonal(adjacency, False)
    _, labels = connected_components(adjacency.astype(int), directed=False)
    groups = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab, []).append(i)
    independent = tuple(sorted(g[0] for g in groups.values() if len(g) == 1))
    blocks = sorted(tuple(g) for g in groups.values() if len(g) > 1)
    return Partition(independent, tuple(blocks))


def build_input_spec(mean, covariance, psd_tolerance=None, zero_threshold=ZERO_THRESHOLD):
    """Validate a Gaussian input law and compute its block partition.

    ``psd_tolerance`` defaults to ``1e-10`` times the largest eigenvalue.
    Rank-deficient covariances (perfect correlations) are accepted.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    d = mean.shape[0]
    if d < 1 or cov.shape != (d, d):
        raise DimensionMismatch(f"mean has length {d} but covariance has shape {cov.shape}")
    scale = np.max(np.abs(cov))
    if np.max(np.abs(cov - cov.T)) > SYMMETRY_RTOL * scale:
        raise AsymmetricCovariance("covariance matrix is not symmetric")
    diag = np.diag(cov)
    if np.any(diag <= 0):
        bad = int(np.argmin(diag))
        raise NonpositiveVariance(f"input {bad} has variance {diag[bad]!r}")
    eig = np.linalg.eigvalsh(cov)
    if psd_tolerance is None:
        psd_tolerance = PSD_RTOL * eig[-1]
    if eig[0] < -psd_tolerance:
        raise NotPositiveSemidefinite(
            f"smallest eigenvalue {eig[0]:.3e} is below -{psd_tolerance:.3e}"
        )
    partition = detect_blocks(cov, zero_threshold)
    factor, _ = psd_cholesky(cov)
    return GaussianInputSpec(
        mean=_readonly(mean),
        covariance=_readonly(cov),
        partition=partition,
        psd_tolerance=float(psd_tolerance),
        _factor=_readonly(factor),
    )


@dataclass(frozen=True, eq=False)
class ModelHandle:
    """A real-valued model of ``arity`` inputs.

    ``evaluator`` and ``gradient`` act on arrays whose last axis has length
    ``arity`` and broadcast over the leading axes. ``partial_bounds[l]`` is a
    bound on ``|dM/dx_l|``; ``dependent_gradient_bound`` is a user-supplied
    bound on the dependent gradient used by the GSI-based bound.
    """

    name: str
    arity: int
    evaluator: Callable
    gradient: Optional[Callable] = None
    partial_bounds: Optional[np.ndarray] = None
    dependent_gradient_bound: Optional[float] = None
    linear_coefficients: Optional[np.ndarray] = None
    kind: str = "custom"
    params: Optional[np.ndarray] = None

    def __call__(self, x):
        return self.evaluator(np.asarray(x, dtype=float))

    def grad(self, x):
        return self.gradient(np.asarray(x, dtype=float))

    def block_partial_bound(self, block):
        """M_1 for a block: the largest partial-derivative bound over its members."""
        if self.partial_bounds is None:
            return None
        return float(np.max(np.abs(self.partial_bounds[list(block)])))

    def scaled(self, c):
        """The model ``c * M``."""
        if self.kind in ("linear", "additive-nonlinear"):
            return BUILTIN_MODELS[self.kind](c * self.params)
        grad = None
        if self.gradient is not None:
            def grad(x, _g=self.gradient):
                return c * _g(x)
        return ModelHandle(
            name=f"{c}*{self.name}",
            arity=self.arity,
            evaluator=lambda x, _f=self.evaluator: c * _f(x),
            gradient=grad,
            partial_bounds=None if self.partial_bounds is None else _readonly(abs(c) * self.partial_bounds),
            dependent_gradient_bound=None if self.dependent_gradient_bound is None
            else abs(c) * self.dependent_gradient_bound,
        )


def _linear(beta):
    beta = _readonly(beta)

    def f(x):
        return x @ beta

    def g(x):
        return np.broadcast_to(beta, x.shape).copy()

    return ModelHandle("linear", beta.size, f, g, partial_bounds=_readonly(np.abs(beta)),
                       linear_coefficients=beta, kind="linear", params=beta)


def _product(beta):
    beta = _readonly(beta)

    def f(x):
        return np.prod(beta * x, axis=-1)

    def g(x):
        terms = beta * x
        out = np.empty_like(terms)
        for j in range(beta.size):
            others = np.delete(terms, j, axis=-1)
            out[..., j] = beta[j] * np.prod(others, axis=-1)
        return out

    return ModelHandle("product", beta.size, f, g, kind="product", params=beta)


def _additive_sine(beta):
    beta = _readonly(beta)

    def f(x):
        return np.sin(x) @ beta

    def g(x):
        return beta * np.cos(x)

    return ModelHandle("additive-nonlinear", beta.size, f, g,
                       partial_bounds=_readonly(np.abs(beta)), kind="additive-nonlinear",
                       params=beta)


BUILTIN_MODELS = {
    "linear": _linear,
    "product": _product,
    "additive-nonlinear": _additive_sine,
}


def register_builtin_model(name, params, d=None):
    """Build one of the builtin models.

    ``linear``: ``beta . x``; ``product``: ``prod_j beta_j x_j``;
    ``additive-nonlinear``: ``sum_j beta_j sin(x_j)``.
    """
    try:
        factory = BUILTIN_MODELS[name]
    except KeyError:
        raise UnknownModel(f"unknown model {name!r}; choose from {sorted(BUILTIN_MODELS)}") from None
    params = np.atleast_1d(np.asarray(params, dtype=float))
    if d is not None and params.size != d:
        raise ParamLengthMismatch(f"{name} needs {d} parameters, got {params.size}")
    return factory(params)


def custom_model(name, evaluator, arity, gradient=None, partial_bounds=None,
                 dependent_gradient_bound=None):
    """Extension point for user models (vectorised callables)."""
    if partial_bounds is not None:
        partial_bounds = _readonly(partial_bounds)
        if partial_bounds.size != arity:
            raise ParamLengthMismatch("partial_bounds must have one entry per input")
    return ModelHandle(name, arity, evaluator, gradient, partial_bounds,
                       dependent_gradient_bound, kind="custom")


def check_gradient(model, points, rel_step=1e-5):
    """Largest relative error between ``model.gradient`` and central differences."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    worst = 0.0
    for x in points:
        h = rel_step * np.maximum(np.abs(x), 1.0)
        fd = np.empty_like(x)
        for j in range(x.size):
            e = np.zeros_like(x)
            e[j] = h[j]
            fd[j] = (model(x + e) - model(x - e)) / (2 * h[j])
        g = model.grad(x)
        err = np.max(np.abs(g - fd)) / max(np.max(np.abs(g)), 1.0)
        worst = max(worst, err)
    return worst
