"""Gaussian dependency models and the equivalent representations they induce.

For a dependent block and an ordering ``w`` of it, the block is rewritten as

    X_{w_r} - mu_{w_r} = sum_{m <= r} L[r, m] * xi_m,

with ``xi_1 = X_{w_1} - mu_{w_1}`` and ``xi_m = Z_{w_m}`` for ``m >= 2``. Every
``xi_m`` is an independent centred Gaussian carrying the marginal variance of
the input it stands for, so ``L[0, 0] = 1`` and the column of ``L`` attached to
an innovation is the derivative of the block with respect to it.
"""

from dataclasses import dataclass

import numpy as np

from dsikit._linalg import psd_cholesky
from dsikit.combinatorics import prefix_plan
from dsikit.errors import (
    InconsistentPrefix,
    LengthMismatch,
    NotADependentBlock,
    PermutationInvalid,
)


@dataclass(frozen=True, eq=False)
class DependencyModel:
    block: tuple
    permutation: tuple
    coeff: np.ndarray
    innovation_variances: np.ndarray
    degenerate_mask: np.ndarray

    @property
    def size(self):
        return len(self.permutation)

    def position(self, j):
        return self.permutation.index(j)

    def scaled_coeff(self):
        """Coefficients with respect to standard normal innovations (a Cholesky factor)."""
        return self.coeff * np.sqrt(self.innovation_variances)


@dataclass(frozen=True, eq=False)
class ERPlan:
    """One dependency model per dependent block, plus the targeted (u, j) pair."""

    dms: tuple
    target: int
    u: tuple

    @property
    def target_dm(self):
        for dm in self.dms:
            if self.target in dm.block:
                return dm
        return None

    @property
    def select(self):
        """First input of each block ordering."""
        return tuple(dm.permutation[0] for dm in self.dms)


def _validate_permutation(block, permutation):
    permutation = tuple(int(p) for p in permutation)
    if sorted(permutation) != sorted(block) or len(set(permutation)) != len(permutation):
        raise PermutationInvalid(f"{permutation} is not an ordering of block {tuple(block)}")
    return permutation


def dm_from_covariance(covariance, block, permutation):
    """Dependency model of ``block`` under ``permutation``, no partition check.

    ``covariance`` is the full d x d matrix; ``block`` any index set.
    """
    block = tuple(sorted(block))
    permutation = _validate_permutation(block, permutation)
    cov = np.asarray(covariance, dtype=float)[np.ix_(permutation, permutation)]
    chol, degenerate = psd_cholesky(cov)
    variances = np.diag(cov).copy()
    coeff = chol / np.sqrt(variances)
    coeff[:, degenerate] = 0.0
    for a in (coeff, variances, degenerate):
        a.setflags(write=False)
    return DependencyModel(block, permutation, coeff, variances, degenerate)


def build_dm(spec, block, permutation):
    """Dependency model of a dependent block of ``spec``."""
    block = tuple(sorted(block))
    if block not in spec.partition.blocks:
        raise NotADependentBlock(f"{block} is not a dependent block of this input law")
    return dm_from_covariance(spec.covariance, block, permutation)


def dm_apply(dm, x_first, z):
    """Remaining block inputs ``(X_{w_2}, ..., X_{w_dk})`` from the centred first input and innovations.

    Broadcasts over leading axes: ``x_first`` has shape (...,) and ``z`` has
    shape (..., d_k - 1).
    """
    x_first = np.asarray(x_first, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != dm.size - 1:
        raise LengthMismatch(f"expected {dm.size - 1} innovations, got {z.shape[-1]}")
    return x_first[..., None] * dm.coeff[1:, 0] + z @ dm.coeff[1:, 1:].T


def jacobian_column(dm, u, j):
    """Derivatives of the block, in ascending block order, with respect to the variable of ``j``.

    ``u`` must be exactly the inputs placed before ``j`` in the ordering.
    """
    u = set(u)
    p = len(u)
    if p >= dm.size or set(dm.permutation[:p]) != u or dm.permutation[p] != j:
        raise InconsistentPrefix(f"({sorted(u)}, {j}) is not a prefix pair of {dm.permutation}")
    column = dm.coeff[:, p]
    out = np.zeros(dm.size)
    for r, label in enumerate(dm.permutation):
        out[dm.block.index(label)] = column[r]
    return out


def plan_for(spec, j, u=()):
    """Dependency models for the (u, j) pair: ``(u, j, rest ascending)`` for j's block,
    ascending orderings elsewhere."""
    dms = []
    for block in spec.partition.blocks:
        if j in block:
            perm = prefix_plan(block, u, j)
        else:
            perm = block
        dms.append(dm_from_covariance(spec.covariance, block, perm))
    return ERPlan(tuple(dms), int(j), tuple(sorted(u)))


def plan_from_orderings(spec, orderings):
    """Plan with one given ordering per dependent block (target left unset)."""
    dms = tuple(dm_from_covariance(spec.covariance, b, w)
                for b, w in zip(spec.partition.blocks, orderings))
    return ERPlan(dms, -1, ())


def representation_matrix(spec, plan):
    """Matrix ``A`` with ``X = mu + A @ eta`` for independent standard ``eta``.

    Column ``l`` of ``A`` belongs to the variable representing input ``l`` in
    the equivalent representation: ``X_l`` itself for inputs of pi_1 and for the
    first input of each ordering, the innovation ``Z_l`` otherwise.
    """
    d = spec.d
    sd = np.sqrt(spec.variances)
    A = np.zeros((d, d))
    for j in spec.partition.independent:
        A[j, j] = sd[j]
    for dm in plan.dms:
        scaled = dm.scaled_coeff()
        idx = list(dm.permutation)
        A[np.ix_(idx, idx)] = scaled
    return A


def assemble(spec, plan, x_pi1, x_first_per_block, z_per_block):
    """Full input vector(s) from the arguments of the equivalent representation.

    ``x_pi1`` covers pi_1 in ascending order; ``x_first_per_block`` holds the
    (uncentred) first input of each ordering; ``z_per_block`` the innovations
    of each block in ordering order. Leading axes broadcast.
    """
    pi1 = spec.partition.independent
    x_pi1 = np.asarray(x_pi1, dtype=float)
    if x_pi1.shape[-1] != len(pi1) or len(x_first_per_block) != len(plan.dms) \
            or len(z_per_block) != len(plan.dms):
        raise LengthMismatch("argument lengths do not match the input partition")
    lead = np.broadcast_shapes(x_pi1.shape[:-1],
                               *(np.shape(x) for x in x_first_per_block),
                               *(np.shape(z)[:-1] for z in z_per_block))
    x = np.zeros(lead + (spec.d,))
    if pi1:
        x[..., list(pi1)] = x_pi1
    mean = spec.mean
    for dm, x1, z in zip(plan.dms, x_first_per_block, z_per_block):
        w1 = dm.permutation[0]
        x1 = np.asarray(x1, dtype=float)
        x[..., w1] = x1
        rest = dm_apply(dm, x1 - mean[w1], z)
        x[..., list(dm.permutation[1:])] = rest + mean[list(dm.permutation[1:])]
    return x


def evaluate_er(model, spec, plan, x_pi1, x_first_per_block, z_per_block):
    """Model evaluated through the equivalent representation ``g``."""
    return model(assemble(spec, plan, x_pi1, x_first_per_block, z_per_block))
