"""Monte Carlo sampling of binary trees under the max-plus recursion

Trees are stored breadth-first: node i has children 2i+1 and 2i+2, the
2**n leaves sit at the end of the array. A merge of children (a, b) is
open when a + b >= 1; a leaf is open when every merge on its path to the
root is open.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import (
    Dict,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
from datalad.log import log_progress

import datalad_drlab.constants as cnst
from datalad_drlab.laws import (
    InitialLaw,
    law_probabilities,
)
from datalad_drlab.utils import (
    compensated_sum,
    ordered_map,
    replica_rng,
)

lgr = logging.getLogger("datalad.drlab.treesim")

MAX_DEPTH = 22
ENUMERATION_BUDGET = 10**7


class DepthBudgetError(ValueError):
    pass


class EnumerationBudgetError(ValueError):
    pass


class RejectionBudgetError(RuntimeError):
    def __init__(self, message: str, acceptance_rate: float, attempts: int):
        super().__init__(message)
        self.acceptance_rate = acceptance_rate
        self.attempts = attempts


@dataclass(frozen=True, eq=False)
class TreeSample:
    depth: int
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.int64)
        if values.shape != (2 ** (self.depth + 1) - 1,):
            raise ValueError(
                "A depth-%d tree needs %d node values, got %s"
                % (self.depth, 2 ** (self.depth + 1) - 1, values.shape)
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def root(self) -> int:
        return int(self.values[0])

    @property
    def leaves(self) -> np.ndarray:
        return self.level(self.depth)

    def level(self, d: int) -> np.ndarray:
        return self.values[2**d - 1 : 2 ** (d + 1) - 1]

    def to_json(self) -> dict:
        """Node values plus the open-leaf bitmask as a hex string"""
        flags = open_subtree(self).open_leaf_flags
        return {
            "depth": self.depth,
            "values": self.values.tolist(),
            "open_leaves": np.packbits(flags, bitorder="little")
            .tobytes()
            .hex(),
        }


@dataclass(frozen=True, eq=False)
class OpenSubtree:
    open_leaf_flags: np.ndarray
    n_total: int
    n_by_value: Dict[int, int]
    branching_heights: Tuple[float, ...]
    root_value: int


class _LeafSampler:
    """Inverse-cdf draws of X_0"""

    def __init__(self, law: InitialLaw, k_cap: int):
        self.atoms, probabilities = law_probabilities(law, k_cap)
        self.cdf = np.cumsum(probabilities)
        self.cdf /= self.cdf[-1]
        self.top = int(self.atoms[probabilities > 0].max())

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = np.searchsorted(self.cdf, rng.random(size), side="right")
        return self.atoms[np.minimum(idx, self.atoms.size - 1)]

    def draw_replicas(self, seed: int, indices, size: int) -> np.ndarray:
        return np.stack(
            [self.draw(replica_rng(seed, i), size) for i in indices]
        )


def _reduce(leaves: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Bottom-up pass over a (batch, 2**n) array of leaves

    Returns node values per depth 0..n and merge openness per depth
    0..n-1.
    """
    n = int(leaves.shape[1]).bit_length() - 1
    values = [None] * (n + 1)
    opens = [None] * n
    values[n] = leaves
    current = leaves
    for d in range(n - 1, -1, -1):
        sums = current[:, 0::2] + current[:, 1::2]
        opens[d] = sums >= 1
        current = np.maximum(sums - 1, 0)
        values[d] = current
    return values, opens


def _open_leaves(opens: List[np.ndarray], batch: int) -> np.ndarray:
    if not opens:
        return np.ones((batch, 1), dtype=bool)
    flags = opens[0]
    for merge in opens[1:]:
        flags = np.repeat(flags, 2, axis=1) & merge
    return np.repeat(flags, 2, axis=1)


def _check_depth(n: int, max_depth: int):
    if n < 0 or n > max_depth:
        raise DepthBudgetError(
            "Tree depth %d outside the allowed range 0..%d" % (n, max_depth)
        )


def sample_tree(
    law: InitialLaw,
    n: int,
    seed: int,
    k_cap: int = 256,
    max_depth: int = MAX_DEPTH,
) -> TreeSample:
    """Depth-n tree with i.i.d. leaves drawn from the law

    The tree is a deterministic function of (law, n, seed).
    """
    _check_depth(n, max_depth)
    sampler = _LeafSampler(law, k_cap)
    return _tree_from_leaves(sampler.draw(replica_rng(seed, 0), 2**n))


def _tree_from_leaves(leaves: np.ndarray) -> TreeSample:
    values, _ = _reduce(leaves[np.newaxis, :])
    depth = len(values) - 1
    return TreeSample(depth, np.concatenate([v[0] for v in values]))


def open_subtree(tree: TreeSample) -> OpenSubtree:
    """Open leaves, their counts by value and the branch points"""
    leaves = tree.leaves[np.newaxis, :]
    _, opens = _reduce(leaves)
    flags = _open_leaves(opens, 1)[0]
    values, counts = np.unique(tree.leaves[flags], return_counts=True)
    # a node branches when both child subtrees hold an open leaf
    heights = []
    has_open = flags
    for d in range(tree.depth - 1, -1, -1):
        left, right = has_open[0::2], has_open[1::2]
        branch = left & right
        heights.extend([d / tree.depth] * int(branch.sum()))
        has_open = left | right
    return OpenSubtree(
        open_leaf_flags=flags,
        n_total=int(flags.sum()),
        n_by_value={int(k): int(c) for k, c in zip(values, counts)},
        branching_heights=tuple(sorted(heights)),
        root_value=tree.root,
    )


def _mean_with_stderr(values: np.ndarray) -> Tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    reps = values.size
    estimate = compensated_sum(values) / reps
    if reps < 2:
        return estimate, math.nan
    # the delete-one jackknife of a mean is its standard error
    return estimate, float(np.std(values, ddof=1) / math.sqrt(reps))


def _ratio_with_stderr(
    num: np.ndarray, den: np.ndarray
) -> Tuple[float, float]:
    """Jackknife estimate of sum(num) / sum(den)"""
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    reps = num.size
    total_num, total_den = compensated_sum(num), compensated_sum(den)
    estimate = total_num / total_den if total_den > 0 else math.nan
    if reps < 2:
        return estimate, math.nan
    with np.errstate(divide="ignore", invalid="ignore"):
        loo = (total_num - num) / (total_den - den)
    if not np.all(np.isfinite(loo)):
        return estimate, math.nan
    spread = compensated_sum((loo - loo.mean()) ** 2)
    return estimate, math.sqrt((reps - 1) / reps * spread)


@dataclass
class _ReplicaStats:
    roots: np.ndarray
    n_total: np.ndarray
    n_by_value: np.ndarray  # (reps, len(k_values))


def _replica_stats(
    sampler: _LeafSampler,
    n: int,
    seed: int,
    indices: Sequence[int],
    k_values: Sequence[int],
) -> _ReplicaStats:
    leaves = sampler.draw_replicas(seed, indices, 2**n)
    values, opens = _reduce(leaves)
    flags = _open_leaves(opens, leaves.shape[0])
    by_value = np.stack(
        [((leaves == k) & flags).sum(axis=1) for k in k_values], axis=1
    )
    return _ReplicaStats(values[0][:, 0], flags.sum(axis=1), by_value)


def _chunks(reps: int, size: int) -> List[range]:
    return [range(s, min(s + size, reps)) for s in range(0, reps, size)]


def mc_estimate(
    law: InitialLaw,
    n: int,
    reps: int,
    seed: int,
    lambdas: Sequence[float] = (),
    q_max: int = 4,
    ell_max: int = 5,
    k_values: Sequence[int] = (0, 1, 2, 3, 4),
    cond_cap: int = 10,
    k_cap: int = 256,
    max_depth: int = MAX_DEPTH,
    threads: Optional[int] = None,
    batch_elements: int = 1 << 22,
) -> List[dict]:
    """Monte Carlo estimates with jackknife standard errors

    Parameters
    ----------
    law : InitialLaw
    n : int
        tree depth
    reps : int
        number of independent trees
    seed : int
        master seed; replica i uses a stream derived from (seed, i)
    lambdas : sequence of float
        grid for <exp(lambda N_n)>
    q_max : int
        highest moment <N_n**q>
    ell_max : int
        largest l in <N_n^(0) 1{X_n = l}>
    k_values : sequence of int
        values k of the biased <(1+X_n) 2**X_n N_n^(k)>
    cond_cap : int
        largest k of P(X_n = k | X_n > 0)

    Returns
    -------
    list of dict
        records {observable, n, estimate, stderr, reps, seed}
    """
    if reps < 1:
        raise ValueError("reps must be >= 1, got %r" % reps)
    _check_depth(n, max_depth)
    sampler = _LeafSampler(law, k_cap)
    k_values = sorted(set(k_values) | {0})
    chunk = max(1, batch_elements >> n)
    chunks = _chunks(reps, chunk)

    prog_id = "drlab-mc-%d-%d" % (n, seed)
    log_progress(
        lgr.info,
        prog_id,
        "Sampling trees of depth %d" % n,
        unit=" batches",
        label="Sampling",
        total=len(chunks),
    )

    def work(indices):
        result = _replica_stats(sampler, n, seed, indices, k_values)
        log_progress(
            lgr.info,
            prog_id,
            "Sampling trees",
            increment=True,
            update=1,
            noninteractive_level=logging.DEBUG,
        )
        return result

    parts = ordered_map(work, chunks, threads)
    log_progress(lgr.info, prog_id, "Sampling completed")

    roots = np.concatenate([p.roots for p in parts])
    n_total = np.concatenate([p.n_total for p in parts]).astype(np.float64)
    by_value = np.concatenate([p.n_by_value for p in parts]).astype(
        np.float64
    )
    n_zero = by_value[:, k_values.index(0)]
    alive = (roots > 0).astype(np.float64)
    weight = np.ldexp(1.0 + roots, roots)

    records = []

    def add(observable, estimate_stderr):
        estimate, stderr = estimate_stderr
        records.append(
            {
                "observable": observable,
                "n": n,
                "estimate": None if math.isnan(estimate) else estimate,
                "stderr": None if math.isnan(stderr) else stderr,
                "reps": reps,
                "seed": seed,
            }
        )

    add(cnst.OBS_SURVIVAL, _mean_with_stderr(alive))
    for k in range(1, cond_cap + 1):
        add(
            "%s[k=%d]" % (cnst.OBS_COND_PMF, k),
            _ratio_with_stderr((roots == k).astype(np.float64), alive),
        )
    add(cnst.OBS_N, _mean_with_stderr(n_total))
    for q in range(2, q_max + 1):
        add(cnst.OBS_N_POWER % q, _mean_with_stderr(n_total**q))
    add(cnst.OBS_N0, _mean_with_stderr(n_zero))
    for ell in range(ell_max + 1):
        add(
            cnst.OBS_N0_INDICATOR % ell,
            _mean_with_stderr(n_zero * (roots == ell)),
        )
    add(cnst.OBS_BIASED, _mean_with_stderr(weight * n_total))
    for j, k in enumerate(k_values):
        add(cnst.OBS_BIASED_K % k, _mean_with_stderr(weight * by_value[:, j]))
    for lam in lambdas:
        add(
            cnst.OBS_EXP_LAMBDA % float(lam),
            _mean_with_stderr(np.exp(float(lam) * n_total)),
        )
    return records


ExactLaw = Union[InitialLaw, Mapping[int, object]]


def _exact_masses(law: ExactLaw) -> Dict[int, Fraction]:
    if isinstance(law, InitialLaw):
        if law.kind == cnst.DIRAC_MIXTURE:
            p = Fraction(repr(law.p))
            items = [(0, 1 - p), (int(law.a), p)]
        elif law.kind == cnst.FINITE:
            items = [(k, Fraction(repr(w))) for k, w in law.masses]
        else:
            raise ValueError(
                "Exact enumeration needs a finite law, got %s" % law.kind
            )
    else:
        items = [(int(k), Fraction(v)) for k, v in law.items()]
    masses = {}
    for k, w in items:
        if w:
            masses[k] = masses.get(k, 0) + w
    if sum(masses.values()) != 1:
        raise ValueError("Law masses sum to %s, not 1" % sum(masses.values()))
    return dict(sorted(masses.items()))


def exact_critical_masses(law: InitialLaw) -> Dict[int, Fraction]:
    """Rational masses of a dirac-mixture law at its critical weight

    Delta is affine in p with Delta(0) = -1 and
    Delta(1) = (a - 1) 2**a, so p_c = 1 / ((a - 1) 2**a + 1).
    """
    if law.kind != cnst.DIRAC_MIXTURE:
        raise ValueError(
            "Exact critical weights need a dirac-mixture law, got %s"
            % law.kind
        )
    a = int(law.a)
    at_one = (a - 1) * 2**a
    if at_one <= 0:
        raise ValueError("dirac-mixture with a=%d has no critical point" % a)
    p_c = Fraction(1, at_one + 1)
    return {0: 1 - p_c, a: p_c}


def enumerate_pair_step(masses: Mapping[int, object]) -> Dict[int, Fraction]:
    """Exact law of max(X + X' - 1, 0) by enumerating all parent pairs"""
    masses = {int(k): Fraction(v) for k, v in masses.items() if v}
    out = {}
    for (a, wa), (b, wb) in itertools.product(masses.items(), repeat=2):
        key = max(a + b - 1, 0)
        out[key] = out.get(key, 0) + wa * wb
    return dict(sorted(out.items()))


def _evaluate(leaves: Sequence[int]) -> Tuple[int, List[bool]]:
    """Root value and open-leaf flags of one tree, in plain Python"""
    values = list(leaves)
    levels = []
    while len(values) > 1:
        sums = [values[i] + values[i + 1] for i in range(0, len(values), 2)]
        levels.append([s >= 1 for s in sums])
        values = [max(s - 1, 0) for s in sums]
    flags = [True]
    for opens in reversed(levels):
        flags = [f and o for f, o in zip(flags, opens)]
        flags = [f for f in flags for _ in (0, 1)]
    return values[0], flags


@dataclass(frozen=True)
class OracleResult:
    """Exact expectations of a small tree"""

    n: int
    pmf: Dict[int, Fraction]
    h2: Tuple[Fraction, ...]
    h2_product: Fraction
    lhs: Dict[int, Fraction]
    lhs_total: Fraction
    rhs: Dict[int, Fraction]
    rhs_total: Fraction
    n0_indicator: Dict[int, Fraction]
    n0_mean: Fraction

    @property
    def identity_holds(self) -> bool:
        return self.lhs == self.rhs and self.lhs_total == self.rhs_total


def brute_force_expectations(
    law: ExactLaw,
    n: int,
    k_values: Optional[Sequence[int]] = None,
    budget: int = ENUMERATION_BUDGET,
) -> OracleResult:
    """Exact rational expectations by enumerating every leaf configuration

    Computes <(1+X_n) 2**X_n N_n^(k)>, the products of <2**X_i>, the law
    of X_n and <N_n^(0) 1{X_n = l}>, and the right-hand side
    (k+1) 2**k P(X_0 = k) prod_{i<n} <2**X_i> of the biased identity.
    """
    masses = _exact_masses(law)
    if len(masses) > 4:
        raise ValueError(
            "Exact enumeration supports at most 4 atoms, got %d" % len(masses)
        )
    if n < 0 or n > 3:
        raise ValueError("Exact enumeration supports n <= 3, got %r" % n)
    configurations = len(masses) ** (2**n)
    if configurations > budget:
        raise EnumerationBudgetError(
            "%d configurations exceed the enumeration budget %d"
            % (configurations, budget)
        )
    if k_values is None:
        k_values = list(masses)
    k_values = sorted(k_values)

    pmf = {}
    lhs = {k: Fraction(0) for k in k_values}
    lhs_total = Fraction(0)
    n0_indicator = {}
    n0_mean = Fraction(0)
    for config in itertools.product(masses.items(), repeat=2**n):
        leaves = [k for k, _ in config]
        weight = Fraction(1)
        for _, w in config:
            weight *= w
        root, flags = _evaluate(leaves)
        pmf[root] = pmf.get(root, 0) + weight
        bias = (1 + root) * 2**root
        n_total = sum(flags)
        lhs_total += weight * bias * n_total
        for k in k_values:
            count = sum(1 for leaf, f in zip(leaves, flags) if f and leaf == k)
            lhs[k] += weight * bias * count
        n_zero = sum(1 for leaf, f in zip(leaves, flags) if f and leaf == 0)
        n0_mean += weight * n_zero
        n0_indicator[root] = n0_indicator.get(root, 0) + weight * n_zero

    h2 = []
    generation = masses
    for _ in range(n + 1):
        h2.append(sum(w * 2**k for k, w in generation.items()))
        generation = enumerate_pair_step(generation)
    h2_product = Fraction(1)
    for value in h2[:n]:
        h2_product *= value
    rhs = {
        k: (k + 1) * 2**k * masses.get(k, Fraction(0)) * h2_product
        for k in k_values
    }
    return OracleResult(
        n=n,
        pmf=dict(sorted(pmf.items())),
        h2=tuple(h2),
        h2_product=h2_product,
        lhs=lhs,
        lhs_total=lhs_total,
        rhs=rhs,
        rhs_total=sum(
            (k + 1) * 2**k * w * h2_product for k, w in masses.items()
        ),
        n0_indicator=dict(sorted(n0_indicator.items())),
        n0_mean=n0_mean,
    )


@dataclass(frozen=True)
class ConditionalSample:
    trees: Tuple[TreeSample, ...]
    target: int
    attempts: int
    accepted: int

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempts

    @property
    def acceptance_stderr(self) -> float:
        rate = self.acceptance_rate
        return math.sqrt(rate * (1.0 - rate) / self.attempts)


def max_root_value(top: int, n: int) -> int:
    """Largest X_n reachable when every leaf equals top"""
    value = top
    for _ in range(n):
        value = max(2 * value - 1, 0)
    return value


def conditional_tree_sample(
    law: InitialLaw,
    n: int,
    x: float,
    seed: int,
    max_attempts: int = 10**6,
    n_accept: int = 1,
    k_cap: int = 256,
    max_depth: int = MAX_DEPTH,
    batch_elements: int = 1 << 20,
) -> ConditionalSample:
    """Trees conditioned on X_n = floor(x n), by plain rejection

    Attempt i draws its leaves from the stream (seed, i). All attempts of
    the processed batches count towards the acceptance rate.

    Raises
    ------
    RejectionBudgetError
        if fewer than n_accept trees are accepted within max_attempts
    """
    if not x > 0:
        raise ValueError("x must be > 0, got %r" % x)
    _check_depth(n, max_depth)
    target = int(math.floor(x * n))
    sampler = _LeafSampler(law, k_cap)
    reachable = max_root_value(sampler.top, n)
    if target > reachable:
        raise ValueError(
            "Target %d exceeds the largest reachable root value %d"
            % (target, reachable)
        )
    batch = max(1, batch_elements >> n)
    trees = []
    accepted = 0
    attempts = 0
    while attempts < max_attempts and len(trees) < n_accept:
        indices = range(attempts, min(attempts + batch, max_attempts))
        leaves = sampler.draw_replicas(seed, indices, 2**n)
        values, _ = _reduce(leaves)
        hits = np.flatnonzero(values[0][:, 0] == target)
        accepted += hits.size
        attempts = indices.stop
        for hit in hits[: n_accept - len(trees)]:
            trees.append(_tree_from_leaves(leaves[hit]))
    if len(trees) < n_accept:
        rate = accepted / attempts if attempts else 0.0
        raise RejectionBudgetError(
            "Accepted %d of %d requested trees with X_%d = %d in %d attempts "
            "(acceptance rate %g)"
            % (len(trees), n_accept, n, target, attempts, rate),
            acceptance_rate=rate,
            attempts=attempts,
        )
    lgr.debug(
        "Conditional sampling X_%d = %d: %d accepted in %d attempts",
        n,
        target,
        accepted,
        attempts,
    )
    return ConditionalSample(tuple(trees), target, attempts, accepted)
