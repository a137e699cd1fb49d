"""Subset and permutation bookkeeping with exact integer arithmetic."""

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from math import comb, factorial, lcm

from dsikit.errors import BlockTooLarge, BlockTooSmall, IndexNotInGround, OutOfRange

MAX_ENUMERATION = 20


@dataclass(frozen=True)
class SymmetricPlan:
    block_sizes: tuple
    R0_per_block: tuple
    R_min_s: int
    # lam[k][p - 1] is the repetition count of position p in block k
    lam: tuple


def symmetric_plan(block_sizes):
    """Minimal symmetric design size and per-position repetition counts."""
    block_sizes = tuple(int(n) for n in block_sizes)
    for n in block_sizes:
        if n < 2:
            raise BlockTooSmall(f"dependent blocks need at least 2 inputs, got {n}")
    r0 = tuple(n * comb(n - 1, (n - 1) // 2) for n in block_sizes)
    r_min = lcm(*(n * comb(n - 1, p - 1) for n in block_sizes for p in range(1, n + 1)))
    lam = tuple(
        tuple(r_min // (n * comb(n - 1, p - 1)) for p in range(1, n + 1)) for n in block_sizes
    )
    return SymmetricPlan(block_sizes, r0, r_min, lam)


def shapley_weight(d, s, exact=False):
    """``1 / (d * C(d-1, s))``, the weight of a coalition of size ``s``."""
    if not 0 <= s <= d - 1:
        raise OutOfRange(f"coalition size {s} outside [0, {d - 1}]")
    w = Fraction(1, d * comb(d - 1, s))
    return w if exact else float(w)


def subsets_excluding(ground, j):
    """All subsets of ``ground`` without ``j``, by size then lexicographically."""
    ground = sorted(ground)
    if j not in ground:
        raise IndexNotInGround(f"{j} is not in {ground}")
    rest = [g for g in ground if g != j]
    if len(rest) + 1 > MAX_ENUMERATION:
        raise BlockTooLarge(f"refusing to enumerate 2^{len(rest)} subsets")
    out = []
    for size in range(len(rest) + 1):
        out.extend(combinations(rest, size))
    return out


def hockey_stick_check(d, d_star, u_size):
    """Direct sum A_4 next to its closed form ``d / d_star``.

    A_4 = sum_m C(d - d_star, m) C(d_star - 1, u) / C(d - 1, u + m).
    """
    if not (1 <= d_star <= d and 0 <= u_size <= d_star - 1):
        raise OutOfRange(f"inadmissible (d, d_star, u_size) = {(d, d_star, u_size)}")
    total = sum(
        Fraction(comb(d - d_star, m) * comb(d_star - 1, u_size), comb(d - 1, u_size + m))
        for m in range(d - d_star + 1)
    )
    return float(total), d / d_star


def prefix_plan(block, u, j):
    """The ordering ``(u, j, rest ascending)`` of a block."""
    u = tuple(sorted(u))
    rest = tuple(sorted(set(block) - set(u) - {j}))
    return u + (j,) + rest


def covering_permutations(block):
    """Orderings of ``block`` in which every (prefix set, next element) pair occurs.

    Greedy: start each new ordering at an uncovered pair, then extend it with
    the element whose (prefix, element) pair is still uncovered, preferring
    the smallest index. For blocks of size 2 and 3 this returns all orderings,
    which is also the minimum.
    """
    block = tuple(sorted(block))
    if len(block) > MAX_ENUMERATION:
        raise BlockTooLarge(f"block of size {len(block)}")
    pending = {(u, j) for j in block for u in subsets_excluding(block, j)}
    perms = []
    while pending:
        u, j = min(pending, key=lambda p: (len(p[0]), p[0], p[1]))
        order = list(u) + [j]
        prefixes = [tuple(sorted(order[:i])) for i in range(len(order))]
        for p, el in zip(prefixes, order):
            pending.discard((p, el))
        while len(order) < len(block):
            prefix = tuple(sorted(order))
            left = [e for e in block if e not in order]
            fresh = [e for e in left if (prefix, e) in pending]
            nxt = fresh[0] if fresh else left[0]
            pending.discard((prefix, nxt))
            order.append(nxt)
        perms.append(tuple(order))
    return perms


def pairs_of(perm):
    """(prefix set, element) pairs realised by an ordering."""
    return [(tuple(sorted(perm[:i])), perm[i]) for i in range(len(perm))]


def cost_dsi(m, d_max):
    """Model runs for all main and total DSIs, ``4 m d_max C(d_max - 1, floor((d_max - 1)/2))``."""
    return 4 * m * d_max * comb(d_max - 1, (d_max - 1) // 2)


def cost_shapley(d, n_i, n_o, n_v):
    """Direct Shapley cost ``N_i N_o d! (d - 1) + N_v``."""
    return n_i * n_o * factorial(d) * (d - 1) + n_v


def cost_shapley_sampled(d, n_i, n_o, n_perm, n_v):
    return n_i * n_o * n_perm * (d - 1) + n_v
