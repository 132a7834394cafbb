"""Sampler of the conjectured limiting open subtree

A branch started at height s0 with value mu0 carries the value
``mu0 + (s - s0)`` at height s and branches at rate
``2 mu_s / (1 - s)**2``. At a branching the value splits into
``(U mu, (1 - U) mu)`` with U uniform. The integrated rate diverges at
s = 1, so branches are stopped at the cutoff height ``1 - eta`` and
become leaves there.
"""
import logging
import math
from dataclasses import dataclass
from typing import (
    Dict,
    List,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
from datalad.log import log_progress
from scipy import stats
from scipy.optimize import brentq

from datalad_drlab.utils import (
    compensated_sum,
    ordered_map,
    replica_rng,
)

lgr = logging.getLogger("datalad.drlab.limittree")

NODE_BUDGET = 10**6


class LimitTreeBudgetError(RuntimeError):
    def __init__(self, message: str, x: float, eta: float):
        super().__init__(message)
        self.x = x
        self.eta = eta


def Lambda(s0: float, mu0: float, s: float) -> float:
    """Integrated branching rate of one branch over [s0, s]"""
    c = mu0 - s0 + 1.0
    return 2.0 * c * (1.0 / (1.0 - s) - 1.0 / (1.0 - s0)) + 2.0 * math.log(
        (1.0 - s) / (1.0 - s0)
    )


def expected_leaf_count(x: float, eta: float) -> float:
    """Mean number of branches alive at the cutoff height 1 - eta"""
    return (2.0 * x + 1.0) / (3.0 * eta**2) - 2.0 * (x - 1.0) * eta / 3.0


def draw_branching_height(
    s0: float, mu0: float, exponential: float, cutoff: float
) -> Optional[float]:
    """Height of the next branching, None if the branch reaches the cutoff"""
    if Lambda(s0, mu0, cutoff) <= exponential:
        return None
    return brentq(
        lambda s: Lambda(s0, mu0, s) - exponential, s0, cutoff, xtol=1e-12
    )


@dataclass(frozen=True)
class LimitTreeNode:
    height: float
    value: float
    parent: int
    is_leaf: bool


@dataclass(frozen=True)
class LimitTree:
    root_value: float
    eta: float
    nodes: Tuple[LimitTreeNode, ...]

    @property
    def leaves(self) -> List[LimitTreeNode]:
        return [node for node in self.nodes if node.is_leaf]

    @property
    def branchings(self) -> List[LimitTreeNode]:
        return [node for node in self.nodes[1:] if not node.is_leaf]

    def to_json(self) -> dict:
        """Nested node records rooted at the root"""
        children: Dict[int, List[int]] = {}
        for idx, node in enumerate(self.nodes):
            children.setdefault(node.parent, []).append(idx)

        def record(idx):
            node = self.nodes[idx]
            out = {"height": node.height, "value": node.value}
            if node.is_leaf:
                out["leaf"] = True
            kids = children.get(idx, [])
            if kids:
                out["children"] = [record(k) for k in kids]
            return out

        return {"eta": self.eta, "root": record(0)}


def sample_limit_tree(
    x: float,
    eta: float,
    seed: int,
    node_budget: int = NODE_BUDGET,
    rng: Optional[np.random.Generator] = None,
) -> LimitTree:
    """One limiting tree with root value x, cut at height 1 - eta

    Raises
    ------
    LimitTreeBudgetError
        when the tree grows beyond node_budget nodes
    """
    if not x > 0:
        raise ValueError("x must be > 0, got %r" % x)
    if not 0 < eta <= 0.1:
        raise ValueError("eta must lie in (0, 0.1], got %r" % eta)
    rng = rng if rng is not None else np.random.default_rng(seed)
    cutoff = 1.0 - eta
    nodes = [LimitTreeNode(0.0, float(x), -1, False)]
    stack = [(0.0, float(x), 0)]
    while stack:
        s0, mu0, parent = stack.pop()
        height = draw_branching_height(
            s0, mu0, rng.standard_exponential(), cutoff
        )
        if height is None:
            nodes.append(LimitTreeNode(cutoff, mu0 + cutoff - s0, parent, True))
            continue
        value = mu0 + height - s0
        nodes.append(LimitTreeNode(height, value, parent, False))
        idx = len(nodes) - 1
        if len(nodes) > node_budget:
            raise LimitTreeBudgetError(
                "Limit tree with x=%g, eta=%g exceeds the node budget %d"
                % (x, eta, node_budget),
                x=x,
                eta=eta,
            )
        left = rng.random() * value
        stack.append((height, value - left, idx))
        stack.append((height, left, idx))
    return LimitTree(root_value=float(x), eta=float(eta), nodes=tuple(nodes))


@dataclass(frozen=True)
class LimitTreeStats:
    eta: float
    reps: int
    leaf_counts: np.ndarray
    leaf_count_mean: float
    leaf_count_stderr: float
    leaf_count_distribution: Dict[int, float]
    height_histogram: Tuple[np.ndarray, np.ndarray]
    branching_heights: np.ndarray
    leaf_value_mean: float
    leaf_value_stderr: float
    leaf_value_second_moment: float


def _stats_for(
    x: float, eta: float, reps: int, seed: int, node_budget: int, bins: int
) -> LimitTreeStats:
    prog_id = "drlab-limit-%g-%g" % (x, eta)
    log_progress(
        lgr.info,
        prog_id,
        "Sampling limit trees (eta=%g)" % eta,
        unit=" trees",
        label="Sampling",
        total=reps,
    )

    def one(i):
        tree = sample_limit_tree(
            x, eta, seed, node_budget, rng=replica_rng(seed, i)
        )
        log_progress(
            lgr.info,
            prog_id,
            "Sampling limit trees",
            increment=True,
            update=1,
            noninteractive_level=logging.DEBUG,
        )
        return (
            len(tree.leaves),
            [node.height for node in tree.branchings],
            [node.value for node in tree.leaves],
        )

    samples = ordered_map(one, range(reps))
    log_progress(lgr.info, prog_id, "Sampling completed")
    counts = np.array([s[0] for s in samples], dtype=np.int64)
    heights = np.array([h for s in samples for h in s[1]], dtype=np.float64)
    values = np.array([v for s in samples for v in s[2]], dtype=np.float64)
    distribution = {
        int(k): c / reps for k, c in zip(*np.unique(counts, return_counts=True))
    }
    count_stderr = (
        float(np.std(counts, ddof=1) / math.sqrt(reps))
        if reps > 1
        else math.nan
    )
    value_stderr = (
        float(np.std(values, ddof=1) / math.sqrt(values.size))
        if values.size > 1
        else math.nan
    )
    return LimitTreeStats(
        eta=eta,
        reps=reps,
        leaf_counts=counts,
        leaf_count_mean=float(counts.mean()),
        leaf_count_stderr=count_stderr,
        leaf_count_distribution=distribution,
        height_histogram=np.histogram(heights, bins=bins, range=(0.0, 1.0)),
        branching_heights=heights,
        leaf_value_mean=compensated_sum(values) / values.size,
        leaf_value_stderr=value_stderr,
        leaf_value_second_moment=compensated_sum(values**2) / values.size,
    )


def limit_tree_stats(
    x: float,
    eta: float,
    reps: int,
    seed: int,
    node_budget: int = NODE_BUDGET,
    bins: int = 20,
) -> Tuple[LimitTreeStats, LimitTreeStats]:
    """Statistics of `reps` limiting trees at cutoffs eta and eta/2"""
    if reps < 1:
        raise ValueError("reps must be >= 1, got %r" % reps)
    return (
        _stats_for(x, eta, reps, seed, node_budget, bins),
        _stats_for(x, eta / 2.0, reps, seed, node_budget, bins),
    )


def compare_samples(
    limit: Sequence[float], discrete: Sequence[float]
) -> Dict[str, float]:
    """Two-sample divergence between limiting and discrete statistics

    Returns the Kolmogorov-Smirnov statistic and p-value, plus the total
    variation distance of the empirical laws on their joint support.
    """
    limit = np.asarray(limit, dtype=np.float64)
    discrete = np.asarray(discrete, dtype=np.float64)
    ks = stats.ks_2samp(limit, discrete)
    support = np.union1d(limit, discrete)
    p_limit = np.array([(limit == v).mean() for v in support])
    p_discrete = np.array([(discrete == v).mean() for v in support])
    return {
        "ks_statistic": float(ks.statistic),
        "ks_pvalue": float(ks.pvalue),
        "total_variation": 0.5 * compensated_sum(np.abs(p_limit - p_discrete)),
    }
