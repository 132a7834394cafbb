import numpy as np
import pytest

import datalad_drlab.constants as cnst
from datalad_drlab.laws import (
    DegenerateLawError,
    InitialLaw,
    law_probabilities,
    pmf_from_law,
)


def test_dirac_mixture():
    law = InitialLaw(cnst.DIRAC_MIXTURE, a=3, p=0.25)
    ks, probabilities = law_probabilities(law, 256)
    assert ks.tolist() == [0, 1, 2, 3]
    assert probabilities.tolist() == [0.75, 0.0, 0.0, 0.25]
    assert law.max_atom == 3
    pmf = pmf_from_law(law, 256)
    assert pmf.weights.tolist() == [0.75, 0.0, 0.0, 2.0]
    with pytest.raises(ValueError):
        law_probabilities(law, 2)


def test_degenerate_law():
    law = InitialLaw(cnst.DIRAC_MIXTURE, a=1, p=0.5)
    with pytest.raises(DegenerateLawError):
        pmf_from_law(law, 256)
    allowed = InitialLaw(cnst.DIRAC_MIXTURE, a=1, p=0.5, allow_degenerate=True)
    assert pmf_from_law(allowed, 256).weights.tolist() == [0.5, 1.0]


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="no-such-law"),
        dict(kind=cnst.DIRAC_MIXTURE),
        dict(kind=cnst.DIRAC_MIXTURE, a=2, p=1.5),
        dict(kind=cnst.HEAVY_TAIL_ALPHA, alpha=5.0),
        dict(kind=cnst.HEAVY_TAIL_ALPHA, alpha=2.0),
        dict(kind=cnst.HEAVY_TAIL_BETA, beta=2.5),
        dict(kind=cnst.FINITE),
        dict(kind=cnst.FINITE, masses=((0, 0.5), (-1, 0.5))),
    ],
)
def test_invalid_laws(kwargs):
    with pytest.raises(ValueError):
        InitialLaw(**kwargs)


def test_finite_law():
    law = InitialLaw(cnst.FINITE, masses=((2, 0.5), (0, 0.5)))
    assert law.masses == ((0, 0.5), (2, 0.5))
    assert law.max_atom == 2
    _, probabilities = law_probabilities(law, 10)
    assert probabilities.tolist() == [0.5, 0.0, 0.5]
    unnormalized = InitialLaw(cnst.FINITE, masses=((0, 0.5), (2, 0.25)))
    with pytest.raises(ValueError):
        law_probabilities(unnormalized, 10)


def test_heavy_tail_alpha_shape():
    law = InitialLaw(cnst.HEAVY_TAIL_ALPHA, alpha=3.0, p=0.5)
    _, probabilities = law_probabilities(law, 200)
    assert probabilities.sum() == pytest.approx(1.0, abs=1e-14)
    assert probabilities[0] == 0.5
    for k in (1, 10, 100):
        ratio = probabilities[k + 1] / probabilities[k]
        assert ratio == pytest.approx(0.5 * (k / (k + 1)) ** 3, rel=1e-10)


def test_heavy_tail_alpha_k_min():
    law = InitialLaw(cnst.HEAVY_TAIL_ALPHA, alpha=3.5, k_min=4)
    _, probabilities = law_probabilities(law, 64)
    assert probabilities[1:4].tolist() == [0.0, 0.0, 0.0]
    assert probabilities[4] > 0


def test_heavy_tail_beta_survival_shape():
    law = InitialLaw(cnst.HEAVY_TAIL_BETA, beta=1.0)
    _, probabilities = law_probabilities(law, 256)
    tail = np.cumsum(probabilities[::-1])[::-1]
    for k in (2, 5, 20):
        # P(X >= k) / P(X >= k + 1) for a k**-beta 2**-k tail
        assert tail[k] / tail[k + 1] == pytest.approx(
            2.0 * (k + 1) / k, rel=1e-6
        )


def test_heavy_tail_beta_negative_mass():
    law = InitialLaw(cnst.HEAVY_TAIL_BETA, beta=-1.5)
    with pytest.raises(ValueError):
        law_probabilities(law, 16)


def test_tilted_tail_matches_probabilities():
    law = InitialLaw(cnst.HEAVY_TAIL_ALPHA, alpha=3.0, p=0.3)
    _, probabilities = law_probabilities(law, 60)
    pmf = pmf_from_law(law, 60)
    assert pmf.base == 2.0
    assert pmf.probabilities() == pytest.approx(probabilities, rel=1e-12)
    # the tilted weights stay representable far beyond 2**-1074
    deep = pmf_from_law(law, 4000)
    assert np.all(np.isfinite(deep.weights))
    assert deep.weights[4000] > 0


def test_config_records():
    law = InitialLaw.from_config(
        {cnst.KIND: cnst.FINITE, "masses": {"0": 0.5, "3": 0.5}}
    )
    assert law.masses == ((0, 0.5), (3, 0.5))
    from_list = InitialLaw.from_config(
        {cnst.KIND: cnst.FINITE, "masses": [[0, 0.5], [3, 0.5]]}
    )
    assert from_list == law
    alpha = InitialLaw(cnst.HEAVY_TAIL_ALPHA, alpha=3.0, p=0.4)
    assert InitialLaw.from_config(alpha.to_config()) == alpha
    assert alpha.with_p(0.1).p == 0.1
    assert alpha.max_atom is None
