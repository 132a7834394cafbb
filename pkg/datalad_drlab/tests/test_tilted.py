import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

import datalad_drlab.constants as cnst
from datalad_drlab.criticality import (
    exponent_fit,
    find_pc,
)
from datalad_drlab.laws import (
    InitialLaw,
    pmf_from_law,
)
from datalad_drlab.tilted import (
    FFTSizeError,
    TiltedPmf,
    TruncationBudgetError,
    TruncationPolicy,
    conditional_pmf,
    convolve,
    delta,
    evolve_step,
    evolve_trajectory,
    gen_fn,
    iter_evolution,
    mean,
    survival,
    tilted_moment,
    truncate_floor,
)
from datalad_drlab.treesim import enumerate_pair_step

UNTRUNCATED = TruncationPolicy(mode=cnst.TRUNC_NONE)


def random_law(rng, size):
    probabilities = rng.random(size)
    probabilities[rng.random(size) < 0.3] = 0.0
    probabilities[-1] += 0.1
    return probabilities / probabilities.sum()


def exact_masses(probabilities):
    return {k: Fraction(float(p)) for k, p in enumerate(probabilities) if p}


def as_dict(pmf: TiltedPmf):
    return dict(zip(pmf.support.tolist(), pmf.probabilities().tolist()))


def test_critical_dirac_step():
    pmf = pmf_from_law(InitialLaw(cnst.DIRAC_MIXTURE, a=2, p=0.2), 256)
    assert pmf.weights.tolist() == [0.8, 0.0, 0.8]
    step = evolve_step(pmf)
    # X_1 = 3 w.p. 0.04, 1 w.p. 0.32, 0 otherwise
    got = as_dict(step)
    assert got[3] == pytest.approx(0.04, rel=1e-15)
    assert got[1] == pytest.approx(0.32, rel=1e-15)
    assert got[0] == pytest.approx(0.64, rel=1e-15)
    assert got.get(2, 0.0) == 0.0
    assert step.lost_mass == 0.0


def test_evolve_step_matches_pair_enumeration():
    rng = np.random.default_rng(11)
    for _ in range(25):
        probabilities = random_law(rng, int(rng.integers(1, 9)))
        exact = enumerate_pair_step(exact_masses(probabilities))
        got = as_dict(
            evolve_step(
                TiltedPmf.from_probabilities(probabilities), trunc=UNTRUNCATED
            )
        )
        for k, value in exact.items():
            assert got.get(k, 0.0) == pytest.approx(
                float(value), rel=1e-12, abs=1e-15
            )
        assert set(k for k, v in got.items() if v > 0) <= set(exact)


def test_evolve_step_three_parents():
    probabilities = np.array([0.5, 0.2, 0.3])
    masses = exact_masses(probabilities)
    exact = {}
    for triple in itertools.product(masses.items(), repeat=3):
        key = max(sum(k for k, _ in triple) - 1, 0)
        weight = Fraction(1)
        for _, w in triple:
            weight *= w
        exact[key] = exact.get(key, 0) + weight
    pmf = TiltedPmf.from_probabilities(probabilities, base=3.0)
    got = as_dict(evolve_step(pmf, m=3, trunc=UNTRUNCATED))
    for k, value in exact.items():
        assert got[k] == pytest.approx(float(value), rel=1e-12)


def test_delta_propagation():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        pmf = TiltedPmf.from_probabilities(
            random_law(rng, int(rng.integers(2, 12)))
        )
        h2 = gen_fn(pmf, 2.0)
        expected = h2 * delta(pmf)
        got = delta(evolve_step(pmf, trunc=UNTRUNCATED))
        assert got == pytest.approx(expected, rel=1e-10, abs=1e-12 * h2 * h2)


def test_delta_of_critical_law_vanishes():
    pmf = pmf_from_law(InitialLaw(cnst.DIRAC_MIXTURE, a=3, p=1 / 17), 256)
    assert abs(delta(pmf)) < 1e-14
    assert not delta(pmf).flags


def test_generating_function_values():
    pmf = TiltedPmf.from_probabilities([0.5, 0.25, 0.25])
    assert gen_fn(pmf, 0.0) == 0.5
    assert gen_fn(pmf, 1.0) == 1.0
    assert gen_fn(pmf, 2.0) == pytest.approx(0.5 + 0.5 + 1.0)
    assert survival(pmf) == 0.5
    assert mean(pmf) == pytest.approx(0.75)
    assert tilted_moment(pmf, 1) == pytest.approx(0.5 + 2.0)
    assert tilted_moment(pmf, 0) == pytest.approx(gen_fn(pmf, 2.0))
    assert conditional_pmf(pmf, 3) == pytest.approx((0.5, 0.5, 0.0))
    with pytest.raises(ValueError):
        gen_fn(pmf, -1.0)


def test_retilt_keeps_probabilities():
    pmf = TiltedPmf.from_probabilities([0.1, 0.2, 0.3, 0.4], offset=2)
    assert pmf.k_min == 2
    assert pmf.k_max == 5
    for base in (1.0, 3.0, 0.5):
        other = pmf.retilt(base)
        assert other.probabilities() == pytest.approx(pmf.probabilities())
        assert gen_fn(other, 2.0) == pytest.approx(gen_fn(pmf, 2.0))


def test_invalid_weights():
    with pytest.raises(ValueError):
        TiltedPmf([])
    with pytest.raises(ValueError):
        TiltedPmf([0.5, -0.1])
    with pytest.raises(ValueError):
        TiltedPmf([0.5, np.nan])
    with pytest.raises(ValueError):
        TiltedPmf([1.0], offset=-1)
    with pytest.raises(ValueError):
        TiltedPmf([1.0], lost_mass=-0.1)


def test_weights_are_read_only():
    pmf = TiltedPmf([1.0, 0.5])
    with pytest.raises(ValueError):
        pmf.weights[0] = 2.0


def test_json_record():
    pmf = TiltedPmf(
        [0.25, 0.5], lost_mass=0.125, lost_tilted_mass=0.5, offset=3
    )
    record = pmf.to_json()
    assert record[cnst.KEY_K_MAX] == 4
    assert record[cnst.KEY_K_MIN] == 3
    assert cnst.KEY_BASE not in record
    back = TiltedPmf.from_json(record)
    assert back.weights.tolist() == [0.25, 0.5]
    assert back.offset == 3
    assert back.lost_mass == 0.125
    record[cnst.KEY_K_MAX] = 7
    with pytest.raises(ValueError):
        TiltedPmf.from_json(record)


def test_convolve_ledgers_add():
    a = TiltedPmf.from_probabilities(
        [0.6, 0.4], lost_mass=0.1, lost_tilted_mass=0.2
    )
    b = TiltedPmf.from_probabilities(
        [0.3, 0.7], lost_mass=0.2, lost_tilted_mass=0.4
    )
    c = convolve(a, b)
    assert c.lost_mass == pytest.approx(0.3)
    assert c.lost_tilted_mass == pytest.approx(0.6)
    assert c.total_mass() == pytest.approx(1.0)
    assert as_dict(c) == pytest.approx({0: 0.18, 1: 0.54, 2: 0.28})


def test_fft_matches_quadratic():
    rng = np.random.default_rng(5)
    a = TiltedPmf(rng.random(300))
    b = TiltedPmf(rng.random(200))
    quad = convolve(a, b, method=cnst.METHOD_QUADRATIC)
    fft = convolve(a, b, method=cnst.METHOD_FFT)
    peak = quad.weights.max()
    assert fft.weights == pytest.approx(quad.weights, abs=1e-12 * peak)
    assert fft.lost_mass >= 0.0


def test_fft_size_limit():
    policy = TruncationPolicy(fft_max_size=10)
    a = TiltedPmf(np.ones(8))
    with pytest.raises(FFTSizeError):
        convolve(a, a, method=cnst.METHOD_FFT, policy=policy)


def test_floor_truncation_keeps_a_probability_law():
    pmf = pmf_from_law(InitialLaw(cnst.DIRAC_MIXTURE, a=2, p=0.2), 256)
    policy = TruncationPolicy(
        min_cap=4,
        cap_per_generation=1,
        step_tolerance=math.inf,
        hard_cap=math.inf,
    )
    for n, current in iter_evolution(pmf, 30, trunc=policy):
        assert current.width <= max(4, n) + 1
        assert current.total_mass() == pytest.approx(1.0, abs=1e-12)
        assert gen_fn(current, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert current.lost_mass > 0
    assert current.lost_tilted_mass > 0


def test_floor_truncation_gives_lower_bounds():
    pmf = pmf_from_law(InitialLaw(cnst.DIRAC_MIXTURE, a=2, p=0.3), 256)
    policy = TruncationPolicy(
        min_cap=8,
        cap_per_generation=0,
        step_tolerance=math.inf,
        hard_cap=math.inf,
    )
    exact = dict(iter_evolution(pmf, 10, trunc=UNTRUNCATED))
    truncated = dict(iter_evolution(pmf, 10, trunc=policy))
    for n in range(11):
        assert survival(truncated[n]) <= survival(exact[n]) * (1 + 1e-14)
        assert mean(truncated[n]) <= mean(exact[n]) * (1 + 1e-14)


def test_floor_truncation_moves_cut_mass_to_zero():
    pmf = TiltedPmf.from_probabilities([0.5, 0.0, 0.0, 0.5])
    policy = TruncationPolicy(
        min_cap=4,
        cap_per_generation=0,
        step_tolerance=math.inf,
        hard_cap=math.inf,
    )
    laws = dict(iter_evolution(pmf, 2, trunc=policy))
    # X_1 in {0, 2, 5}: the atom 5 is cut and lands on 0
    assert as_dict(laws[1]) == pytest.approx({0: 0.5, 1: 0.0, 2: 0.5})
    assert laws[1].lost_mass == pytest.approx(0.25)
    assert laws[1].lost_tilted_mass == pytest.approx(8.0)
    # the moved mass keeps taking part in the recursion
    assert as_dict(laws[2]) == pytest.approx(
        {0: 0.25, 1: 0.5, 2: 0.0, 3: 0.25}
    )
    assert laws[2].lost_mass == pytest.approx(0.25)


def test_long_critical_trajectory_stays_normalized():
    pmf = pmf_from_law(InitialLaw(cnst.DIRAC_MIXTURE, a=2, p=0.2), 256)
    previous_mean = None
    for n, current in iter_evolution(pmf, 500):
        assert current.total_mass() == pytest.approx(1.0, abs=1e-12)
        assert abs(delta(current)) < 1e-8
        h2 = gen_fn(current, 2.0)
        if n >= 100:
            assert 0.0 < n * (h2 - 1.0) < 5.0
        # <X_n> / 2**n never increases
        value = mean(current)
        if previous_mean is not None:
            assert value <= 2.0 * previous_mean * (1 + 1e-12)
        previous_mean = value
    assert 2.0 <= 500**2 * survival(current) <= 6.0


def test_plain_weights_tilted_ledger_saturates():
    # 2**k p_k of these atoms overflows long before the sum is formed
    pmf = TiltedPmf.from_probabilities(np.full(2048, 1.0 / 2048), base=1.0)
    cut = truncate_floor(pmf, 10)
    assert cut.lost_tilted_mass == math.inf
    assert cut.lost_mass == pytest.approx(2037 / 2048)
    assert as_dict(cut)[0] == pytest.approx(2038 / 2048)
    assert cut.total_mass() == pytest.approx(1.0)


def test_adaptive_cap_keeps_tilted_loss_small():
    pmf = pmf_from_law(InitialLaw(cnst.DIRAC_MIXTURE, a=2, p=0.2), 256)
    policy = TruncationPolicy(min_cap=4, cap_per_generation=1)
    for _, current in iter_evolution(pmf, 40, trunc=policy):
        pass
    assert current.lost_tilted_mass <= 40 * policy.step_tolerance


def test_hard_cap_raises():
    pmf = pmf_from_law(InitialLaw(cnst.DIRAC_MIXTURE, a=2, p=0.2), 256)
    policy = TruncationPolicy(
        min_cap=4,
        cap_per_generation=0,
        step_tolerance=math.inf,
        hard_cap=0.0,
    )
    with pytest.raises(TruncationBudgetError):
        for _ in iter_evolution(pmf, 20, trunc=policy):
            pass


def test_untruncated_support_budget():
    pmf = pmf_from_law(InitialLaw(cnst.DIRAC_MIXTURE, a=2, p=0.5), 256)
    policy = TruncationPolicy(mode=cnst.TRUNC_NONE, min_cap=1, max_support=64)
    with pytest.raises(TruncationBudgetError):
        for _ in iter_evolution(pmf, 10, trunc=policy):
            pass


def test_truncate_floor():
    pmf = TiltedPmf.from_probabilities([0.5, 0.25, 0.125, 0.125])
    cut = truncate_floor(pmf, 1)
    assert cut.k_max == 1
    assert as_dict(cut) == pytest.approx({0: 0.75, 1: 0.25})
    assert cut.lost_mass == pytest.approx(0.25)
    # 4 * 0.125 + 8 * 0.125
    assert cut.lost_tilted_mass == pytest.approx(1.5)
    assert delta(cut, threshold=2.0).flags == frozenset()
    assert cnst.FLAG_UNRELIABLE in delta(cut).flags


def test_trajectory_summaries():
    pmf = pmf_from_law(InitialLaw(cnst.DIRAC_MIXTURE, a=2, p=0.2), 256)
    summaries = evolve_trajectory(pmf, 50, q_list=(1, 2), cond_cap=5)
    assert [s.generation for s in summaries] == list(range(51))
    assert summaries[0].h2_product == 1.0
    product = 1.0
    for s in summaries:
        assert s.h2_product == pytest.approx(product, rel=1e-12)
        product *= s.h2
        assert len(s.tilted_moments) == 2
        assert len(s.conditional_pmf) == 5
        assert abs(s.delta) < 1e-9
    assert summaries[-1].survival < summaries[1].survival
    with pytest.raises(ValueError):
        evolve_trajectory(pmf, 0)


@pytest.mark.slow
def test_critical_asymptotics():
    pmf = pmf_from_law(InitialLaw(cnst.DIRAC_MIXTURE, a=2, p=0.2), 256)
    summaries = evolve_trajectory(pmf, 2000, cond_cap=10)
    last = summaries[-1]
    assert 3.0 <= 2000**2 * last.survival <= 5.0
    for s in summaries[1000:]:
        assert 1.5 <= s.generation * (s.h2 - 1.0) <= 2.5
    sup = max(
        abs(p - 2.0**-k) for k, p in enumerate(last.conditional_pmf, start=1)
    )
    assert sup < 0.01
    assert last.lost_tilted_mass <= TruncationPolicy().hard_cap
    survival_fit = exponent_fit(
        [(s.generation, s.survival) for s in summaries[1:]],
        window=(500, 2000),
    )
    assert -2.1 <= survival_fit.slope <= -1.9
    # H(2) approaches 1 from above without turning back
    for before, after in zip(summaries[1000:], summaries[1001:]):
        assert 1.0 < after.h2 <= before.h2 + 1e-12
    product_fit = exponent_fit(
        [(s.generation, s.h2_product) for s in summaries[1:]],
        window=(500, 2000),
    )
    assert 1.9 <= product_fit.slope <= 2.1


@pytest.mark.slow
def test_heavy_tail_product_growth():
    family = InitialLaw(cnst.HEAVY_TAIL_ALPHA, alpha=3.0)
    k_cap = 1 << 14
    p_c = find_pc(family, k_cap)
    pmf = pmf_from_law(family.with_p(float(p_c)), k_cap)
    summaries = evolve_trajectory(
        pmf, 2000, trunc=TruncationPolicy(max_support=1 << 16)
    )
    fit = exponent_fit(
        [(s.generation, s.h2_product) for s in summaries[1:]],
        window=(500, 2000),
    )
    # grows like n**(alpha - 2)
    assert 0.85 <= fit.slope <= 1.15
