"""Exact evolution of integer-valued laws under X' = max(X1 + ... + Xm - 1, 0)

Laws are stored as tilted weights ``q_k = base**k * P(X = k)`` on a dense
window ``k_min..k_max``. With ``base=2`` every generating-function
observable at z=2 is a plain sum over the array, and the convolution of
two tilted arrays is the tilt of the convolution.

Truncation follows the floor policy: mass above the cap moves to the atom
0, so the stored law stays a probability law that is stochastically below
the exact one. Survival, mean and every tail probability are therefore
certified lower bounds. The moved mass is booked in ``lost_mass`` (plain
probability) and ``lost_tilted_mass`` (sum of ``2**k * p_k`` moved).
After every generation the atom 0 is reset to one minus the mass above
it, so rounding cannot compound through the total mass M -> M**m.
"""
import logging
import math
from dataclasses import dataclass
from typing import (
    Iterator,
    List,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
from datalad.log import log_progress
from scipy.signal import fftconvolve
from scipy.special import logsumexp

import datalad_drlab.constants as cnst
from datalad_drlab.utils import (
    Flagged,
    compensated_sum,
)

lgr = logging.getLogger("datalad.drlab.tilted")

# ldexp exponents are clipped to this range; beyond it the result
# over- or underflows anyway
_EXP_LIMIT = 1 << 30

# a missing or excess mass up to this size at a law without an atom 0 is
# rounding and gets rescaled away instead of growing the window down to 0
_ROUNDING = 1e-12


class TruncationBudgetError(RuntimeError):
    pass


class FFTSizeError(ValueError):
    pass


def _rescale(values: np.ndarray, ks: np.ndarray, ratio: float) -> np.ndarray:
    """Return values * ratio**ks without intermediate overflow"""
    values = np.asarray(values, dtype=np.float64)
    if ratio == 1.0:
        return values.copy()
    with np.errstate(over="ignore", under="ignore", divide="ignore"):
        if ratio in (2.0, 0.5):
            exps = np.clip(ks, -_EXP_LIMIT, _EXP_LIMIT).astype(np.int32)
            return np.ldexp(values, exps if ratio == 2.0 else -exps)
        out = np.zeros_like(values)
        pos = values > 0
        out[pos] = np.exp(np.log(values[pos]) + ks[pos] * math.log(ratio))
    return out


def _ledger_sum(values: np.ndarray, ks: np.ndarray, ratio: float) -> float:
    """sum(values * ratio**ks), saturating to inf instead of overflowing

    Plain (base 1) weights of a supercritical law reach k in the millions,
    where 2**k p_k is far beyond the float range.
    """
    values = np.asarray(values, dtype=np.float64)
    pos = values > 0
    if not pos.any():
        return 0.0
    logs = np.log(values[pos]) + ks[pos] * math.log(ratio)
    with np.errstate(over="ignore"):
        return float(np.exp(logsumexp(logs)))


def _plain_mass(weights: np.ndarray, offset: int, base: float) -> float:
    ks = offset + np.arange(weights.size)
    return compensated_sum(_rescale(weights, ks, 1.0 / base))


def _deposit_at_zero(
    weights: np.ndarray, offset: int, base: float, target: float = 1.0
) -> Tuple[np.ndarray, int]:
    """Reset the atom 0 so that the stored mass equals `target`

    Mass missing from the window (floor truncation, fft round-off) lands on
    0. A rounding excess is scaled away; the atom 0 never goes negative.
    """
    weights = np.array(weights, dtype=np.float64)
    if offset == 0:
        above = (
            _plain_mass(weights[1:], 1, base) if weights.size > 1 else 0.0
        )
        residue = target - above
        if weights[0] == 0 and abs(residue) <= _ROUNDING * target:
            return (weights * (target / above) if above > 0 else weights), 0
        if residue >= 0:
            weights[0] = residue
            return weights, 0
        weights[0] = 0.0
        return weights * (target / above), 0
    total = _plain_mass(weights, offset, base)
    if total <= 0:
        return weights, offset
    residue = target - total
    if residue <= _ROUNDING * target:
        return weights * (target / total), offset
    grown = np.zeros(offset + weights.size)
    grown[offset:] = weights
    grown[0] = residue
    return grown, 0


@dataclass(frozen=True, eq=False)
class TiltedPmf:
    """Integer-supported probability law in tilted representation

    Parameters
    ----------
    weights : array-like
        ``base**k * P(X = k)`` for ``k = offset .. offset + len - 1``
    lost_mass : float
        probability moved to the atom 0 by truncation so far
    lost_tilted_mass : float
        ``sum 2**k p_k`` moved to the atom 0 so far
    offset : int
        smallest stored k
    base : float
        tilt of the stored weights
    """

    weights: np.ndarray
    lost_mass: float = 0.0
    lost_tilted_mass: float = 0.0
    offset: int = 0
    base: float = 2.0

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        if weights.ndim != 1 or weights.size == 0:
            raise ValueError("weights must be a non-empty 1-d array")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("weights must be finite and non-negative")
        if int(self.offset) < 0:
            raise ValueError("offset must be >= 0, got %r" % self.offset)
        if not self.base > 0:
            raise ValueError("base must be > 0, got %r" % self.base)
        if not self.lost_mass >= 0:
            raise ValueError("lost_mass must be >= 0")
        if not self.lost_tilted_mass >= 0:
            raise ValueError("lost_tilted_mass must be >= 0")
        weights.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "offset", int(self.offset))
        object.__setattr__(self, "base", float(self.base))
        object.__setattr__(self, "lost_mass", float(self.lost_mass))
        object.__setattr__(
            self, "lost_tilted_mass", float(self.lost_tilted_mass)
        )

    @classmethod
    def from_probabilities(
        cls,
        probabilities,
        offset: int = 0,
        base: float = 2.0,
        lost_mass: float = 0.0,
        lost_tilted_mass: float = 0.0,
    ) -> "TiltedPmf":
        probabilities = np.asarray(probabilities, dtype=np.float64)
        ks = offset + np.arange(probabilities.size)
        return cls(
            _rescale(probabilities, ks, base),
            lost_mass=lost_mass,
            lost_tilted_mass=lost_tilted_mass,
            offset=offset,
            base=base,
        )

    @property
    def width(self) -> int:
        return self.weights.size

    @property
    def k_min(self) -> int:
        return self.offset

    @property
    def k_max(self) -> int:
        return self.offset + self.weights.size - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.k_min, self.k_max + 1, dtype=np.int64)

    def tilted(self, base: float = 2.0) -> np.ndarray:
        """Weights ``base**k p_k`` over the stored window"""
        if base == self.base:
            return np.array(self.weights)
        return _rescale(self.weights, self.support, base / self.base)

    def probabilities(self) -> np.ndarray:
        return self.tilted(1.0)

    def retilt(self, base: float) -> "TiltedPmf":
        return TiltedPmf(
            self.tilted(base),
            lost_mass=self.lost_mass,
            lost_tilted_mass=self.lost_tilted_mass,
            offset=self.offset,
            base=base,
        )

    def compact(self) -> "TiltedPmf":
        """Drop leading and trailing zero entries"""
        nonzero = np.flatnonzero(self.weights)
        if nonzero.size == 0:
            start, stop = 0, 1
        else:
            start, stop = nonzero[0], nonzero[-1] + 1
        if start == 0 and stop == self.width:
            return self
        return TiltedPmf(
            self.weights[start:stop],
            lost_mass=self.lost_mass,
            lost_tilted_mass=self.lost_tilted_mass,
            offset=self.offset + int(start),
            base=self.base,
        )

    def total_mass(self) -> float:
        return compensated_sum(self.probabilities())

    def to_json(self) -> dict:
        record = {
            cnst.KEY_K_MAX: self.k_max,
            cnst.KEY_Q: self.weights.tolist(),
            cnst.KEY_LOST_MASS: self.lost_mass,
            cnst.KEY_LOST_TILTED_MASS: self.lost_tilted_mass,
        }
        if self.offset:
            record[cnst.KEY_K_MIN] = self.offset
        if self.base != 2.0:
            record[cnst.KEY_BASE] = self.base
        return record

    @classmethod
    def from_json(cls, record: dict) -> "TiltedPmf":
        weights = record[cnst.KEY_Q]
        k_min = record.get(cnst.KEY_K_MIN, 0)
        if record[cnst.KEY_K_MAX] != k_min + len(weights) - 1:
            raise ValueError(
                "k_max %s does not match %d weights starting at k=%d"
                % (record[cnst.KEY_K_MAX], len(weights), k_min)
            )
        return cls(
            weights,
            lost_mass=record.get(cnst.KEY_LOST_MASS, 0.0),
            lost_tilted_mass=record.get(cnst.KEY_LOST_TILTED_MASS, 0.0),
            offset=k_min,
            base=record.get(cnst.KEY_BASE, 2.0),
        )


@dataclass(frozen=True)
class TruncationPolicy:
    """How evolution keeps the stored support bounded

    The width cap at generation n is ``max(min_cap, cap_per_generation*n)``
    times an adaptive factor that doubles whenever one step moves more
    than ``step_tolerance`` of tilted mass (plain mass for base 1 laws),
    never beyond ``max_support``.
    """

    mode: str = cnst.TRUNC_FLOOR
    min_cap: int = 64
    cap_per_generation: int = 8
    step_tolerance: float = 1e-14
    hard_cap: float = 1e-6
    max_support: int = 1 << 20
    mass_floor: float = 0.0
    method: str = cnst.METHOD_AUTO
    fft_threshold: int = 4096
    fft_max_size: int = 1 << 24
    fft_noise_floor: float = 1e-13

    def __post_init__(self):
        if self.mode not in (cnst.TRUNC_FLOOR, cnst.TRUNC_NONE):
            raise ValueError("Unknown truncation mode %r" % self.mode)
        if self.method not in (
            cnst.METHOD_AUTO,
            cnst.METHOD_QUADRATIC,
            cnst.METHOD_FFT,
        ):
            raise ValueError("Unknown convolution method %r" % self.method)
        if self.min_cap < 1 or self.max_support < self.min_cap:
            raise ValueError("Need 1 <= min_cap <= max_support")

    def cap(self, generation: int, factor: int = 1) -> int:
        base = max(self.min_cap, self.cap_per_generation * generation)
        return min(base * factor, self.max_support)


@dataclass(frozen=True)
class TrajectorySummary:
    generation: int
    survival: float
    mean: float
    h2: float
    h2_product: float
    delta: float
    tilted_moments: Tuple[float, ...] = ()
    conditional_pmf: Tuple[float, ...] = ()
    lost_mass: float = 0.0
    lost_tilted_mass: float = 0.0
    k_max: int = 0


def _resolve_method(method: str, width: int, policy: TruncationPolicy) -> str:
    if method == cnst.METHOD_AUTO:
        return (
            cnst.METHOD_FFT
            if width > policy.fft_threshold
            else cnst.METHOD_QUADRATIC
        )
    if method not in (cnst.METHOD_QUADRATIC, cnst.METHOD_FFT):
        raise ValueError("Unknown convolution method %r" % method)
    return method


def _convolve_weights(
    a: np.ndarray,
    b: np.ndarray,
    offset: int,
    base: float,
    method: str,
    policy: TruncationPolicy,
) -> Tuple[np.ndarray, float, float]:
    """Convolve two weight arrays

    Returns the result plus the plain and tilted mass of entries that
    were zeroed as fft round-off.
    """
    width = a.size + b.size - 1
    method = _resolve_method(method, width, policy)
    if method == cnst.METHOD_QUADRATIC:
        return np.convolve(a, b), 0.0, 0.0
    if width > policy.fft_max_size:
        raise FFTSizeError(
            "fft convolution of support %d exceeds the limit of %d"
            % (width, policy.fft_max_size)
        )
    result = fftconvolve(a, b)
    np.clip(result, 0.0, None, out=result)
    peak = result.max()
    noise = (result < policy.fft_noise_floor * peak) & (result > 0)
    if not noise.any():
        return result, 0.0, 0.0
    ks = offset + np.flatnonzero(noise)
    values = result[noise]
    floor_mass = compensated_sum(_rescale(values, ks, 1.0 / base))
    floor_tilted = _ledger_sum(values, ks, 2.0 / base)
    result[noise] = 0.0
    return result, floor_mass, floor_tilted


def convolve(
    a: TiltedPmf,
    b: TiltedPmf,
    method: str = cnst.METHOD_QUADRATIC,
    policy: Optional[TruncationPolicy] = None,
) -> TiltedPmf:
    """Law of X + X' for independent X ~ a, X' ~ b

    Parameters
    ----------
    a, b : TiltedPmf
        operands; b is re-tilted to a's base if they differ
    method : str
        'quadratic', 'fft' or 'auto'
    policy : TruncationPolicy, optional
        supplies the fft size limit and noise floor

    Returns
    -------
    TiltedPmf
        ledgers add; entries zeroed as fft round-off move to the atom 0
    """
    policy = policy or TruncationPolicy()
    if b.base != a.base:
        b = b.retilt(a.base)
    offset = a.offset + b.offset
    weights, floor_mass, floor_tilted = _convolve_weights(
        a.weights, b.weights, offset, a.base, method, policy
    )
    if floor_mass > 0:
        kept = _plain_mass(weights, offset, a.base)
        weights, offset = _deposit_at_zero(
            weights, offset, a.base, target=kept + floor_mass
        )
    return TiltedPmf(
        weights,
        lost_mass=a.lost_mass + b.lost_mass + floor_mass,
        lost_tilted_mass=a.lost_tilted_mass + b.lost_tilted_mass + floor_tilted,
        offset=offset,
        base=a.base,
    )


def _shift_down(
    summed: np.ndarray, offset: int, base: float
) -> Tuple[np.ndarray, int]:
    """Apply s -> max(s - 1, 0) to tilted weights of s

    Mass at s=0 and s=1 both lands on 0.
    """
    if offset >= 1:
        return summed / base, offset - 1
    if summed.size == 1:
        return summed.copy(), 0
    shifted = summed[1:] / base
    shifted[0] += summed[0]
    return shifted, 0


def _cut(
    weights: np.ndarray, offset: int, base: float, keep: int
) -> Tuple[np.ndarray, float, float]:
    """Keep the first `keep` entries, return the plain and tilted mass cut"""
    if weights.size <= keep:
        return weights, 0.0, 0.0
    removed = weights[keep:]
    ks = offset + keep + np.arange(removed.size)
    removed_mass = compensated_sum(_rescale(removed, ks, 1.0 / base))
    removed_tilted = _ledger_sum(removed, ks, 2.0 / base)
    return weights[:keep], removed_mass, removed_tilted


def _advance(
    pmf: TiltedPmf,
    m: int,
    trunc: TruncationPolicy,
    generation: int,
    factor: int,
) -> Tuple[TiltedPmf, int]:
    """One generation of the m-parent recursion; returns the adaptive factor

    The cap doubles while one cut moves more than ``step_tolerance``,
    measured as tilted mass for tilted laws and as plain mass for plain
    (base 1) laws, whose tilted tails are astronomically large.
    """
    parent, parent_offset = _deposit_at_zero(pmf.weights, pmf.offset, pmf.base)
    summed = parent
    summed_offset = parent_offset
    floor_mass = floor_tilted = 0.0
    for _ in range(m - 1):
        summed_offset += parent_offset
        summed, fm, ft = _convolve_weights(
            summed,
            parent,
            summed_offset,
            pmf.base,
            trunc.method,
            trunc,
        )
        floor_mass += fm
        floor_tilted += ft
    weights, offset = _shift_down(summed, m * parent_offset, pmf.base)
    lost = pmf.lost_mass + floor_mass
    lost_tilted = pmf.lost_tilted_mass + floor_tilted

    if trunc.mode == cnst.TRUNC_NONE:
        if weights.size > trunc.max_support:
            raise TruncationBudgetError(
                "Support width %d at generation %d exceeds max_support %d "
                "with truncation disabled"
                % (weights.size, generation, trunc.max_support)
            )
    else:
        full = weights
        while True:
            cap = trunc.cap(generation, factor)
            weights, cut_mass, cut_tilted = _cut(full, offset, pmf.base, cap)
            moved = cut_tilted if pmf.base > 1 else cut_mass
            if (
                moved <= trunc.step_tolerance
                or cap >= trunc.max_support
            ):
                break
            factor *= 2
            lgr.debug(
                "Generation %d: doubling support cap to %d",
                generation,
                trunc.cap(generation, factor),
            )
        if cut_mass > 0 and cap >= trunc.max_support:
            lgr.debug(
                "Generation %d: cap at max_support %d removed mass %g",
                generation,
                cap,
                cut_mass,
            )
        lost += cut_mass
        lost_tilted += cut_tilted
        if trunc.mass_floor > 0:
            above = np.flatnonzero(weights >= trunc.mass_floor)
            keep = above[-1] + 1 if above.size else 1
            weights, cut_mass, cut_tilted = _cut(
                weights, offset, pmf.base, keep
            )
            lost += cut_mass
            lost_tilted += cut_tilted

    weights, offset = _deposit_at_zero(weights, offset, pmf.base)
    new = TiltedPmf(
        weights,
        lost_mass=lost,
        lost_tilted_mass=lost_tilted,
        offset=offset,
        base=pmf.base,
    )
    return new.compact(), factor


def evolve_step(
    pmf: TiltedPmf,
    m: int = 2,
    trunc: Optional[TruncationPolicy] = None,
    generation: int = 1,
) -> TiltedPmf:
    """Law of max(X1 + ... + Xm - 1, 0) for i.i.d. Xi ~ pmf

    ``generation`` is the index of the produced law; it sets the
    truncation cap.
    """
    if m < 2:
        raise ValueError("m must be >= 2, got %r" % m)
    trunc = trunc or TruncationPolicy()
    new, _ = _advance(pmf, m, trunc, generation, 1)
    return new


def gen_fn(pmf: TiltedPmf, z: float) -> float:
    """H(z) = sum_k p_k z**k of the stored measure"""
    if z < 0:
        raise ValueError("z must be >= 0, got %r" % z)
    if z == 0:
        return float(pmf.probabilities()[0]) if pmf.offset == 0 else 0.0
    if z > 1 and pmf.lost_mass > 0:
        lgr.debug(
            "H(%g) after moving mass %g to 0 is a lower bound",
            z,
            pmf.lost_mass,
        )
    return compensated_sum(pmf.tilted(z))


def tilted_moment(pmf: TiltedPmf, q: int) -> float:
    """<X**q 2**X>"""
    if q < 0:
        raise ValueError("q must be >= 0, got %r" % q)
    ks = pmf.support.astype(np.float64)
    return compensated_sum(ks**q * pmf.tilted(2.0))


def survival(pmf: TiltedPmf) -> float:
    """P(X > 0) of the stored measure"""
    probabilities = pmf.probabilities()
    if pmf.offset == 0:
        probabilities = probabilities[1:]
    return compensated_sum(probabilities)


def mean(pmf: TiltedPmf) -> float:
    return compensated_sum(pmf.support * pmf.probabilities())


def conditional_pmf(pmf: TiltedPmf, k_cap: int) -> Tuple[float, ...]:
    """P(X = k | X > 0) for k = 1..k_cap"""
    surv = survival(pmf)
    probabilities = pmf.probabilities()
    out = []
    for k in range(1, k_cap + 1):
        idx = k - pmf.offset
        p_k = probabilities[idx] if 0 <= idx < pmf.width else 0.0
        out.append(float(p_k / surv) if surv > 0 else 0.0)
    return tuple(out)


def delta(pmf: TiltedPmf, m: int = 2, threshold: float = 1e-10) -> Flagged:
    """Criticality indicator (m-1)<X m**X> - <m**X>

    For m = 2 this is <X 2**X> - <2**X>. The value is flagged
    'unreliable' when truncation removed more than `threshold` of
    tilted mass.
    """
    weights = pmf.tilted(float(m))
    value = (m - 1) * compensated_sum(pmf.support * weights) - compensated_sum(
        weights
    )
    flags = ()
    if pmf.lost_tilted_mass > threshold:
        flags = (cnst.FLAG_UNRELIABLE,)
        lgr.debug(
            "delta flagged unreliable: lost tilted mass %g",
            pmf.lost_tilted_mass,
        )
    return Flagged(value, flags)


def truncate_floor(pmf: TiltedPmf, k_cap: int) -> TiltedPmf:
    """Move every atom above k_cap to 0, booking it in the ledgers"""
    keep = max(k_cap - pmf.offset + 1, 1)
    weights, cut_mass, cut_tilted = _cut(
        pmf.weights, pmf.offset, pmf.base, keep
    )
    offset = pmf.offset
    if cut_mass > 0:
        weights, offset = _deposit_at_zero(
            weights,
            offset,
            pmf.base,
            target=_plain_mass(weights, offset, pmf.base) + cut_mass,
        )
    return TiltedPmf(
        weights,
        lost_mass=pmf.lost_mass + cut_mass,
        lost_tilted_mass=pmf.lost_tilted_mass + cut_tilted,
        offset=offset,
        base=pmf.base,
    ).compact()


def iter_evolution(
    pmf0: TiltedPmf,
    n_max: int,
    m: int = 2,
    trunc: Optional[TruncationPolicy] = None,
) -> Iterator[Tuple[int, TiltedPmf]]:
    """Yield (n, law of X_n) for n = 0..n_max

    Raises
    ------
    TruncationBudgetError
        when the tilted ledger exceeds the policy's hard cap
    """
    if m < 2:
        raise ValueError("m must be >= 2, got %r" % m)
    trunc = trunc or TruncationPolicy()
    pmf = pmf0
    factor = 1
    yield 0, pmf
    for n in range(1, n_max + 1):
        pmf, factor = _advance(pmf, m, trunc, n, factor)
        if pmf.lost_tilted_mass > trunc.hard_cap:
            raise TruncationBudgetError(
                "Lost tilted mass %g at generation %d exceeds the hard cap %g"
                % (pmf.lost_tilted_mass, n, trunc.hard_cap)
            )
        yield n, pmf


def summarize(
    pmf: TiltedPmf,
    generation: int,
    h2_product: float,
    m: int = 2,
    q_list: Sequence[int] = (),
    cond_cap: int = 10,
) -> TrajectorySummary:
    return TrajectorySummary(
        generation=generation,
        survival=survival(pmf),
        mean=mean(pmf),
        h2=gen_fn(pmf, 2.0),
        h2_product=h2_product,
        delta=delta(pmf, m),
        tilted_moments=tuple(tilted_moment(pmf, q) for q in q_list),
        conditional_pmf=conditional_pmf(pmf, cond_cap),
        lost_mass=pmf.lost_mass,
        lost_tilted_mass=pmf.lost_tilted_mass,
        k_max=pmf.k_max,
    )


def evolve_trajectory(
    pmf0: TiltedPmf,
    n_max: int,
    m: int = 2,
    trunc: Optional[TruncationPolicy] = None,
    q_list: Sequence[int] = (),
    cond_cap: int = 10,
) -> List[TrajectorySummary]:
    """Summaries of generations 0..n_max

    Parameters
    ----------
    pmf0 : TiltedPmf
        law of X_0
    n_max : int
        last generation, >= 1
    m : int
        number of parents
    trunc : TruncationPolicy, optional
    q_list : sequence of int
        exponents q of the reported <X**q 2**X>
    cond_cap : int
        largest k of the reported P(X_n = k | X_n > 0)

    Returns
    -------
    list of TrajectorySummary
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1, got %r" % n_max)
    summaries = []
    h2_product = 1.0
    prog_id = "drlab-trajectory-%d" % id(summaries)
    log_progress(
        lgr.info,
        prog_id,
        "Evolving distribution",
        unit=" generations",
        label="Evolving",
        total=n_max,
    )
    for n, pmf in iter_evolution(pmf0, n_max, m, trunc):
        summary = summarize(pmf, n, h2_product, m, q_list, cond_cap)
        summaries.append(summary)
        h2_product *= summary.h2
        log_progress(
            lgr.info,
            prog_id,
            "Evolving distribution",
            update=n,
            noninteractive_level=logging.DEBUG,
        )
    log_progress(lgr.info, prog_id, "Evolution completed")
    if summaries[-1].lost_mass > 0:
        lgr.info(
            "Truncation moved mass %g (tilted %g) to 0 by generation %d",
            summaries[-1].lost_mass,
            summaries[-1].lost_tilted_mass,
            n_max,
        )
    return summaries
