"""Parametric initial laws and their realization as tilted pmfs"""
import logging
import math
from dataclasses import (
    dataclass,
    replace,
)
from typing import (
    Optional,
    Tuple,
)

import numpy as np

import datalad_drlab.constants as cnst
from datalad_drlab.tilted import (
    TiltedPmf,
    _rescale,
)
from datalad_drlab.utils import compensated_sum

lgr = logging.getLogger("datalad.drlab.laws")


class DegenerateLawError(ValueError):
    pass


@dataclass(frozen=True)
class InitialLaw:
    """Law of X_0 as ``p * P* + (1 - p) * delta_0``

    ``P*`` depends on ``kind``:

    - dirac-mixture: the point mass at ``a``
    - heavy-tail-alpha: ``P*(k) ~ k**-alpha 2**-k`` for ``k >= k_min``
    - heavy-tail-beta: ``P*(X >= k) ~ k**-beta 2**-k`` for ``k >= 1``
    - finite: explicit ``masses`` as ((k, weight), ...), used as is
      (``p`` is ignored)

    Tail families are normalized over ``k_min..k_cap`` when realized,
    i.e. they are conditioned on ``X_0 <= k_cap``.
    """

    kind: str
    a: Optional[int] = None
    p: float = 1.0
    alpha: Optional[float] = None
    beta: Optional[float] = None
    k_min: int = 1
    masses: Optional[Tuple[Tuple[int, float], ...]] = None
    allow_degenerate: bool = False

    def __post_init__(self):
        if self.kind not in cnst.LAW_KINDS:
            raise ValueError(
                "Unknown law kind %r, choose from %s"
                % (self.kind, ", ".join(cnst.LAW_KINDS))
            )
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1], got %r" % self.p)
        if self.kind == cnst.DIRAC_MIXTURE:
            if self.a is None or int(self.a) != self.a or self.a < 1:
                raise ValueError("dirac-mixture needs an integer a >= 1")
        elif self.kind == cnst.HEAVY_TAIL_ALPHA:
            if self.alpha is None or not 2.0 < self.alpha <= 4.0:
                raise ValueError("heavy-tail-alpha needs alpha in (2, 4]")
            if self.k_min < 1:
                raise ValueError("k_min must be >= 1")
        elif self.kind == cnst.HEAVY_TAIL_BETA:
            if self.beta is None or not self.beta < 2.0:
                raise ValueError("heavy-tail-beta needs beta < 2")
        else:
            if not self.masses:
                raise ValueError("finite law needs masses")
            if any(k < 0 or w < 0 for k, w in self.masses):
                raise ValueError("finite law needs k >= 0 and weights >= 0")
            object.__setattr__(
                self,
                "masses",
                tuple((int(k), float(w)) for k, w in sorted(self.masses)),
            )

    def with_p(self, p: float) -> "InitialLaw":
        return replace(self, p=float(p))

    @property
    def max_atom(self) -> Optional[int]:
        """Largest atom of finite-support laws, None for tail families"""
        if self.kind == cnst.DIRAC_MIXTURE:
            return int(self.a)
        if self.kind == cnst.FINITE:
            return max(k for k, w in self.masses if w > 0)
        return None

    @classmethod
    def from_config(cls, spec: dict) -> "InitialLaw":
        spec = dict(spec)
        kind = spec.pop(cnst.KIND)
        masses = spec.pop("masses", None)
        if masses is not None:
            if isinstance(masses, dict):
                masses = [(int(k), w) for k, w in masses.items()]
            spec["masses"] = tuple(tuple(m) for m in masses)
        return cls(kind=kind, **spec)

    def to_config(self) -> dict:
        spec = {cnst.KIND: self.kind, "p": self.p}
        for key in ("a", "alpha", "beta"):
            if getattr(self, key) is not None:
                spec[key] = getattr(self, key)
        if self.kind == cnst.HEAVY_TAIL_ALPHA:
            spec["k_min"] = self.k_min
        if self.masses is not None:
            spec["masses"] = [list(m) for m in self.masses]
        if self.allow_degenerate:
            spec["allow_degenerate"] = True
        return spec


def _tail_log_weights(law: InitialLaw, ks: np.ndarray) -> np.ndarray:
    """log of unnormalized 2**k P*(k) for the tail families"""
    if law.kind == cnst.HEAVY_TAIL_ALPHA:
        return -law.alpha * np.log(ks)
    # P*(k) ∝ k^-b 2^-k - (k+1)^-b 2^-(k+1); tilted by 2^k
    diffs = ks ** (-law.beta) - 0.5 * (ks + 1.0) ** (-law.beta)
    if np.any(diffs < 0):
        bad = ks[diffs < 0][0]
        raise ValueError(
            "heavy-tail-beta with beta=%r has a negative mass at k=%d"
            % (law.beta, bad)
        )
    with np.errstate(divide="ignore"):
        return np.log(diffs)


def law_probabilities(
    law: InitialLaw, k_cap: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Atoms and probabilities of the realized law, both dense from 0"""
    if law.kind == cnst.DIRAC_MIXTURE:
        if k_cap < law.a:
            raise ValueError("k_cap %d is below the atom a=%d" % (k_cap, law.a))
        probabilities = np.zeros(law.a + 1)
        probabilities[0] = 1.0 - law.p
        probabilities[law.a] += law.p
    elif law.kind == cnst.FINITE:
        top = law.max_atom
        if k_cap < top:
            raise ValueError("k_cap %d is below the atom %d" % (k_cap, top))
        probabilities = np.zeros(top + 1)
        for k, w in law.masses:
            probabilities[k] += w
        total = compensated_sum(probabilities)
        if abs(total - 1.0) > 1e-12:
            raise ValueError("finite law masses sum to %r, not 1" % total)
    else:
        start = law.k_min if law.kind == cnst.HEAVY_TAIL_ALPHA else 1
        if k_cap < start:
            raise ValueError("k_cap must be >= %d" % start)
        ks = np.arange(start, k_cap + 1, dtype=np.float64)
        log_plain = _tail_log_weights(law, ks) - ks * math.log(2.0)
        shift = log_plain.max()
        plain = np.exp(log_plain - shift)
        plain /= compensated_sum(plain)
        probabilities = np.zeros(k_cap + 1)
        probabilities[start:] = law.p * plain
        probabilities[0] = 1.0 - law.p
    return np.arange(probabilities.size), probabilities


def pmf_from_law(
    law: InitialLaw, k_cap: int, base: float = 2.0
) -> TiltedPmf:
    """Tilted weights of the law

    Parameters
    ----------
    law : InitialLaw
    k_cap : int
        largest atom kept; tail families are normalized up to it
    base : float
        tilt of the produced weights

    Raises
    ------
    DegenerateLawError
        if P(X_0 >= 2) = 0 and the law does not allow it
    """
    ks, probabilities = law_probabilities(law, k_cap)
    if not law.allow_degenerate and not np.any(probabilities[2:] > 0):
        raise DegenerateLawError(
            "Law %s has P(X_0 >= 2) = 0; set allow_degenerate to use it"
            % law.kind
        )
    if law.kind in (cnst.HEAVY_TAIL_ALPHA, cnst.HEAVY_TAIL_BETA) and base != 1:
        # tilt in log space, 2**-k underflows long before k_cap
        start = law.k_min if law.kind == cnst.HEAVY_TAIL_ALPHA else 1
        tail_ks = np.arange(start, k_cap + 1, dtype=np.float64)
        log_plain = _tail_log_weights(law, tail_ks) - tail_ks * math.log(2.0)
        log_norm = log_plain.max() + math.log(
            compensated_sum(np.exp(log_plain - log_plain.max()))
        )
        weights = np.zeros(k_cap + 1)
        with np.errstate(over="ignore", under="ignore"):
            weights[start:] = law.p * np.exp(
                log_plain - log_norm + tail_ks * math.log(base)
            )
        weights[0] = 1.0 - law.p
    else:
        weights = _rescale(probabilities, ks, base)
    if not np.all(np.isfinite(weights)):
        raise ValueError(
            "Tilted weights overflow in base %r up to k_cap %d" % (base, k_cap)
        )
    return TiltedPmf(weights, offset=0, base=base)
