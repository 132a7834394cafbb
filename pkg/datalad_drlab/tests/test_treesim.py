from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import chisquare

import datalad_drlab.constants as cnst
from datalad_drlab.laws import (
    InitialLaw,
    pmf_from_law,
)
from datalad_drlab.tilted import (
    TruncationPolicy,
    iter_evolution,
)
from datalad_drlab.treesim import (
    DepthBudgetError,
    EnumerationBudgetError,
    RejectionBudgetError,
    TreeSample,
    brute_force_expectations,
    conditional_tree_sample,
    enumerate_pair_step,
    exact_critical_masses,
    max_root_value,
    mc_estimate,
    open_subtree,
    sample_tree,
)

CRITICAL = InitialLaw(cnst.DIRAC_MIXTURE, a=2, p=0.2)
DIRAC_TWO = InitialLaw(cnst.DIRAC_MIXTURE, a=2, p=1.0)


def tree_from_leaves(leaves):
    depth = len(leaves).bit_length() - 1
    values = [list(leaves)]
    while len(values[0]) > 1:
        level = values[0]
        values.insert(
            0,
            [
                max(level[i] + level[i + 1] - 1, 0)
                for i in range(0, len(level), 2)
            ],
        )
    return TreeSample(depth, [v for level in values for v in level])


def by_observable(records):
    return {r["observable"]: r for r in records}


def test_sample_tree_deterministic_laws():
    tree = sample_tree(DIRAC_TWO, 2, seed=3)
    assert tree.leaves.tolist() == [2, 2, 2, 2]
    assert tree.level(1).tolist() == [3, 3]
    assert tree.root == 5
    zeros = sample_tree(CRITICAL.with_p(0.0), 5, seed=3)
    assert not zeros.values.any()


def test_sample_tree_is_reproducible():
    one = sample_tree(CRITICAL, 8, seed=42)
    two = sample_tree(CRITICAL, 8, seed=42)
    assert np.array_equal(one.values, two.values)
    other = sample_tree(CRITICAL, 8, seed=43)
    assert not np.array_equal(one.values, other.values)
    # node values follow the recursion from the leaves
    children = one.level(8)
    parents = np.maximum(children[0::2] + children[1::2] - 1, 0)
    assert np.array_equal(one.level(7), parents)


def test_sample_tree_depth_budget():
    with pytest.raises(DepthBudgetError):
        sample_tree(CRITICAL, 23, seed=0)
    with pytest.raises(DepthBudgetError):
        sample_tree(CRITICAL, 5, seed=0, max_depth=4)


def test_tree_sample_shape_check():
    with pytest.raises(ValueError):
        TreeSample(2, [0, 0, 0])


def test_open_subtree_single_merge():
    sub = open_subtree(tree_from_leaves([2, 0]))
    assert sub.open_leaf_flags.tolist() == [True, True]
    assert sub.n_total == 2
    assert sub.n_by_value == {0: 1, 2: 1}
    assert sub.root_value == 1
    closed = open_subtree(tree_from_leaves([0, 0]))
    assert closed.n_total == 0
    assert closed.root_value == 0


def test_open_subtree_open_leaves_with_zero_root():
    sub = open_subtree(tree_from_leaves([2, 0, 0, 0]))
    assert sub.open_leaf_flags.tolist() == [True, True, False, False]
    assert sub.n_total == 2
    assert sub.root_value == 0
    assert sub.branching_heights == (0.5,)


def test_open_subtree_branching_heights():
    tree = tree_from_leaves([1, 1, 1, 0])
    sub = open_subtree(tree)
    assert sub.n_total == 4
    assert sub.n_by_value == {0: 1, 1: 3}
    assert sub.branching_heights == (0.0, 0.5, 0.5)
    assert sub.root_value == 0
    record = tree.to_json()
    assert record["depth"] == 2
    assert record["values"] == [0, 1, 0, 1, 1, 1, 0]
    assert record["open_leaves"] == "0f"


def test_open_counts_add_up():
    for seed in range(20):
        sub = open_subtree(sample_tree(CRITICAL, 6, seed=seed))
        assert sum(sub.n_by_value.values()) == sub.n_total
        assert sub.n_total == int(sub.open_leaf_flags.sum())


def test_mc_estimate_records():
    records = mc_estimate(CRITICAL, 3, 200, seed=1, lambdas=(0.1,))
    found = by_observable(records)
    assert cnst.OBS_SURVIVAL in found
    assert cnst.OBS_N in found
    assert cnst.OBS_N_POWER % 4 in found
    assert cnst.OBS_BIASED_K % 2 in found
    assert cnst.OBS_EXP_LAMBDA % 0.1 in found
    for r in records:
        assert r["n"] == 3
        assert r["reps"] == 200
        assert r["seed"] == 1
    with pytest.raises(ValueError):
        mc_estimate(CRITICAL, 3, 0, seed=1)


def test_mc_estimate_independent_of_threads():
    kwargs = dict(lambdas=(0.05, -0.05), batch_elements=1 << 8)
    one = mc_estimate(CRITICAL, 5, 100, seed=9, threads=1, **kwargs)
    four = mc_estimate(CRITICAL, 5, 100, seed=9, threads=4, **kwargs)
    assert one == four


def test_mc_estimate_matches_enumeration():
    exact = brute_force_expectations(CRITICAL, 1)
    found = by_observable(mc_estimate(CRITICAL, 1, 20000, seed=5))
    biased = found[cnst.OBS_BIASED]
    assert abs(biased["estimate"] - float(exact.lhs_total)) <= 4 * biased[
        "stderr"
    ]
    alive = found[cnst.OBS_SURVIVAL]
    assert abs(alive["estimate"] - 0.36) <= 4 * alive["stderr"]


def test_mc_open_zero_leaves_bounded():
    found = by_observable(mc_estimate(CRITICAL, 6, 2000, seed=2))
    n_zero = found[cnst.OBS_N0]
    assert n_zero["estimate"] <= 1 + 3 * n_zero["stderr"]


def pooled_counts(observed, expected, minimum=5.0):
    """Merge neighbouring classes until each expects at least `minimum`"""
    obs_out, exp_out = [], []
    obs_acc = exp_acc = 0.0
    for o, e in zip(observed, expected):
        obs_acc += o
        exp_acc += e
        if exp_acc >= minimum:
            obs_out.append(obs_acc)
            exp_out.append(exp_acc)
            obs_acc = exp_acc = 0.0
    obs_out[-1] += obs_acc
    exp_out[-1] += exp_acc
    return np.array(obs_out), np.array(exp_out)


@pytest.mark.slow
@pytest.mark.parametrize("n", [3, 6, 10])
def test_mc_root_law_matches_evolution(n):
    reps, cond_cap = 10**5, 40
    found = by_observable(
        mc_estimate(CRITICAL, n, reps, seed=11, cond_cap=cond_cap)
    )
    alive = round(found[cnst.OBS_SURVIVAL]["estimate"] * reps)
    counts = [reps - alive] + [
        round(found["%s[k=%d]" % (cnst.OBS_COND_PMF, k)]["estimate"] * alive)
        for k in range(1, cond_cap + 1)
    ]
    counts.append(reps - sum(counts))

    untruncated = TruncationPolicy(mode=cnst.TRUNC_NONE)
    pmf0 = pmf_from_law(CRITICAL, 256)
    law_n = dict(iter_evolution(pmf0, n, trunc=untruncated))[n]
    exact = dict(zip(law_n.support.tolist(), law_n.probabilities().tolist()))
    probabilities = [exact.get(k, 0.0) for k in range(cond_cap + 1)]
    probabilities.append(1.0 - sum(probabilities))
    expected = [reps * p for p in probabilities]

    observed, expected = pooled_counts(counts, expected)
    expected *= observed.sum() / expected.sum()
    assert chisquare(observed, expected).pvalue > 1e-3


@pytest.mark.slow
@pytest.mark.parametrize("n", [5, 10, 15])
def test_mc_open_zero_leaves_by_root_value(n):
    found = by_observable(mc_estimate(CRITICAL, n, 10**5, seed=n, ell_max=5))
    n_zero = found[cnst.OBS_N0]
    assert n_zero["estimate"] <= 1 + 3 * n_zero["stderr"]
    for ell in range(6):
        record = found[cnst.OBS_N0_INDICATOR % ell]
        assert record["estimate"] <= 2.0**-ell + 3 * record["stderr"]


def test_brute_force_critical_values():
    result = brute_force_expectations(CRITICAL, 1)
    assert result.lhs_total == Fraction(128, 25)
    assert result.lhs[2] == Fraction(96, 25)
    assert result.rhs[2] == 3 * 4 * Fraction(1, 5) * Fraction(8, 5)
    assert result.h2[0] == Fraction(8, 5)
    assert result.n0_indicator[1] == Fraction(8, 25)
    assert result.pmf == enumerate_pair_step(
        {0: Fraction(4, 5), 2: Fraction(1, 5)}
    )
    assert result.identity_holds


@pytest.mark.parametrize("a", [2, 3])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_identity_on_critical_laws(a, n):
    masses = exact_critical_masses(InitialLaw(cnst.DIRAC_MIXTURE, a=a))
    result = brute_force_expectations(masses, n)
    assert result.identity_holds
    assert sum(result.pmf.values()) == 1
    for ell, value in result.n0_indicator.items():
        assert value <= Fraction(1, 2**ell)


def test_identity_fails_off_criticality():
    result = brute_force_expectations({0: Fraction(1, 2), 2: Fraction(1, 2)}, 1)
    assert result.lhs_total == 20
    assert result.rhs_total == Fraction(65, 4)
    assert not result.identity_holds


def test_exact_critical_masses():
    assert exact_critical_masses(InitialLaw(cnst.DIRAC_MIXTURE, a=3)) == {
        0: Fraction(16, 17),
        3: Fraction(1, 17),
    }
    with pytest.raises(ValueError):
        exact_critical_masses(InitialLaw(cnst.DIRAC_MIXTURE, a=1))
    with pytest.raises(ValueError):
        exact_critical_masses(InitialLaw(cnst.HEAVY_TAIL_ALPHA, alpha=3.0))


def test_brute_force_budgets():
    with pytest.raises(EnumerationBudgetError):
        brute_force_expectations(CRITICAL, 3, budget=10)
    with pytest.raises(ValueError):
        brute_force_expectations(CRITICAL, 4)
    with pytest.raises(ValueError):
        brute_force_expectations({k: Fraction(1, 5) for k in range(5)}, 1)
    with pytest.raises(ValueError):
        brute_force_expectations({0: Fraction(1, 2), 1: Fraction(1, 4)}, 1)


def test_conditional_sample_matches_exact_law():
    n, x = 4, 0.5
    sample = conditional_tree_sample(
        CRITICAL, n, x, seed=7, max_attempts=20000, n_accept=5
    )
    assert sample.target == 2
    assert len(sample.trees) == 5
    assert all(tree.root == 2 for tree in sample.trees)
    assert sample.attempts == 20000
    pmf0 = pmf_from_law(CRITICAL, 256)
    law_n = dict(iter_evolution(pmf0, n, trunc=TruncationPolicy()))[n]
    exact = dict(zip(law_n.support.tolist(), law_n.probabilities().tolist()))[2]
    assert abs(sample.acceptance_rate - exact) <= 4 * sample.acceptance_stderr


def test_conditional_sample_rejection_budget():
    with pytest.raises(RejectionBudgetError) as e:
        conditional_tree_sample(DIRAC_TWO, 3, 1.0, seed=0, max_attempts=100)
    assert e.value.attempts == 100
    assert e.value.acceptance_rate == 0.0


def test_conditional_sample_unreachable_target():
    assert max_root_value(2, 3) == 9
    with pytest.raises(ValueError, match="reachable"):
        conditional_tree_sample(DIRAC_TWO, 3, 4.0, seed=0)
    with pytest.raises(ValueError):
        conditional_tree_sample(CRITICAL, 3, 0.0, seed=0)
