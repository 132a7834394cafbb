"""Critical points, free-energy brackets and exponent fits"""
import logging
import math
from dataclasses import (
    dataclass,
    replace,
)
from typing import (
    List,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
from datalad.log import log_progress
from scipy import stats
from scipy.optimize import brentq

import datalad_drlab.constants as cnst
from datalad_drlab.laws import (
    InitialLaw,
    pmf_from_law,
)
from datalad_drlab.tilted import (
    TiltedPmf,
    TruncationPolicy,
    delta,
    iter_evolution,
    mean,
)
from datalad_drlab.utils import (
    Flagged,
    ordered_map,
)

lgr = logging.getLogger("datalad.drlab.criticality")


def delta_of(family: InitialLaw, p: float, k_cap: int = 256, m: int = 2):
    """Criticality indicator of the family at mixing weight p"""
    law = replace(family.with_p(p), allow_degenerate=True)
    return delta(pmf_from_law(law, k_cap, base=float(m)), m)


def find_pc(
    family: InitialLaw,
    k_cap: int = 256,
    m: int = 2,
    xtol: float = 1e-15,
) -> Flagged:
    """Mixing weight p_c at which the criticality indicator vanishes

    Parameters
    ----------
    family : InitialLaw
        its ``p`` is the free parameter
    k_cap : int
        realization cap for tail families
    m : int
        number of parents

    Returns
    -------
    Flagged
        p_c; 1.0 flagged 'boundary' when the indicator is <= 0 on [0, 1]
    """
    if family.kind == cnst.HEAVY_TAIL_BETA:
        raise ValueError(
            "p_c = 0 for the heavy-tail-beta family: <X_0 2^X_0> is "
            "infinite for every p > 0"
        )
    if family.kind == cnst.FINITE:
        raise ValueError("A finite law has no free mixing weight p")

    def f(p):
        return float(delta_of(family, p, k_cap, m))

    at_one = f(1.0)
    if at_one <= 0:
        lgr.warning(
            "Criticality indicator is %g <= 0 at p=1: no transition in [0, 1]",
            at_one,
        )
        return Flagged(1.0, (cnst.FLAG_BOUNDARY,))
    return Flagged(brentq(f, 0.0, 1.0, xtol=xtol))


@dataclass(frozen=True)
class FreeEnergyEstimate:
    lower: float
    upper: float
    n_lower: int
    n_upper: int
    flags: Tuple[str, ...] = ()

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def relative_width(self) -> float:
        if self.upper <= 0:
            return 0.0
        return self.width / self.upper


def free_energy(
    pmf0: TiltedPmf,
    n_max: int,
    trunc: Optional[TruncationPolicy] = None,
    m: int = 2,
    tolerance: float = 0.1,
    abs_tolerance: float = 1e-12,
) -> FreeEnergyEstimate:
    """Certified bracket for lim <X_n> / m**n

    The lower bound is the largest ``(<X_n> - 1/(m-1)) / m**n`` of the
    floor-truncated chain, which is stochastically below the exact one.
    The upper bound is the smallest ``<X_n> / m**n + d_n * k_max(X_0)``:
    coupling both chains, they differ with probability at most
    ``d_n = 1 - (1 - d_{n-1})**m + moved_n``, and X_n never exceeds
    ``m**n * k_max(X_0)``.

    Evolution runs on plain probabilities (base 1): supercritical tilted
    weights overflow.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1, got %r" % n_max)
    trunc = replace(trunc or TruncationPolicy(), hard_cap=math.inf)
    pmf0 = pmf0.retilt(1.0)
    k0 = pmf0.k_max
    shift = 1.0 / (m - 1)
    lower, n_lower = 0.0, 0
    upper, n_upper = math.inf, 0
    discrepancy = 0.0
    moved = pmf0.lost_mass
    for n, pmf in iter_evolution(pmf0, n_max, m, trunc):
        if n:
            discrepancy = min(
                1.0,
                1.0 - (1.0 - discrepancy) ** m + (pmf.lost_mass - moved),
            )
        moved = pmf.lost_mass
        scale = float(m) ** -n
        mu = mean(pmf)
        lo = (mu - shift) * scale
        hi = mu * scale + discrepancy * k0
        if lo > lower:
            lower, n_lower = lo, n
        if hi < upper:
            upper, n_upper = hi, n
        if discrepancy >= 1.0 - 1e-15 or (
            pmf.k_max == 0 and discrepancy == 0
        ):
            # nothing left to refine
            break
    flags = ()
    width = upper - lower
    if lower > upper:
        flags = (cnst.FLAG_INVERTED,)
        lgr.warning(
            "Free-energy bracket is inverted: lower %r > upper %r "
            "(n_lower=%d, n_upper=%d)",
            lower,
            upper,
            n_lower,
            n_upper,
        )
    elif width > abs_tolerance and width > tolerance * upper:
        flags = (cnst.FLAG_WIDE,)
        lgr.warning(
            "Free-energy bracket [%g, %g] is wider than relative tolerance %g",
            lower,
            upper,
            tolerance,
        )
    return FreeEnergyEstimate(lower, upper, n_lower, n_upper, flags)


@dataclass(frozen=True)
class FreeEnergyRow:
    p: float
    delta: float
    estimate: FreeEnergyEstimate

    @property
    def flags(self) -> Tuple[str, ...]:
        return tuple(self.estimate.flags) + tuple(
            getattr(self.delta, "flags", ())
        )


def scan_free_energy(
    family: InitialLaw,
    p_values: Sequence[float],
    n_max: int,
    trunc: Optional[TruncationPolicy] = None,
    k_cap: int = 256,
    m: int = 2,
    tolerance: float = 0.1,
) -> List[FreeEnergyRow]:
    """Free-energy brackets along a grid of supercritical mixing weights

    Rows with a wide bracket are flagged, never dropped.
    """
    deltas = [delta_of(family, p, k_cap, m) for p in p_values]
    for p, d in zip(p_values, deltas):
        if family.kind == cnst.HEAVY_TAIL_BETA:
            if not p > 0:
                raise ValueError("p must be > 0 for heavy-tail-beta (p_c = 0)")
        elif not d > 0:
            raise ValueError(
                "p=%r is not above the critical point (delta=%g)" % (p, d)
            )

    prog_id = "drlab-scan-%d" % id(deltas)
    log_progress(
        lgr.info,
        prog_id,
        "Scanning free energy",
        unit=" points",
        label="Scanning",
        total=len(deltas),
    )

    def estimate(p):
        pmf0 = pmf_from_law(family.with_p(p), k_cap, base=1.0)
        result = free_energy(pmf0, n_max, trunc, m, tolerance)
        log_progress(
            lgr.info,
            prog_id,
            "Scanned p=%g" % p,
            increment=True,
            update=1,
            noninteractive_level=logging.DEBUG,
        )
        return result

    estimates = ordered_map(estimate, list(p_values))
    log_progress(lgr.info, prog_id, "Scan completed")
    return [
        FreeEnergyRow(float(p), d, e)
        for p, d, e in zip(p_values, deltas, estimates)
    ]


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    stderr: float
    model: str
    window: Tuple[float, float]
    n_points: int

    def to_json(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "model": self.model,
            "window": list(self.window),
            "n_points": self.n_points,
        }


def exponent_fit(
    points: Sequence[Tuple[float, float]],
    model: str = cnst.MODEL_LOGLOG,
    window: Optional[Tuple[float, float]] = None,
) -> ExponentFit:
    """Least-squares slope on transformed coordinates

    'loglog' fits ln y against ln x, 'logloglog' fits ln ln(1/y)
    against ln x (requires 0 < y < 1).
    """
    if model not in (cnst.MODEL_LOGLOG, cnst.MODEL_LOGLOGLOG):
        raise ValueError("Unknown fit model %r" % model)
    data = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if window is not None:
        lo, hi = window
        data = data[(data[:, 0] >= lo) & (data[:, 0] <= hi)]
    if data.shape[0] < 3:
        raise ValueError("Need at least 3 points, got %d" % data.shape[0])
    xs, ys = data[:, 0], data[:, 1]
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("exponent_fit needs positive x and y")
    if model == cnst.MODEL_LOGLOGLOG:
        if np.any(ys >= 1):
            raise ValueError("logloglog model needs y < 1")
        ty = np.log(np.log(1.0 / ys))
    else:
        ty = np.log(ys)
    res = stats.linregress(np.log(xs), ty)
    return ExponentFit(
        slope=float(res.slope),
        intercept=float(res.intercept),
        stderr=float(res.stderr),
        model=model,
        window=(float(xs.min()), float(xs.max())),
        n_points=int(xs.size),
    )
