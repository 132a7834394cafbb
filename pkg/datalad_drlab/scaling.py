"""Stable-case scaling function and predicted critical profiles

F solves ``x F' + 2F + F' + 1/2 (F*F)(x) = 0`` with
``F(0) = alpha (alpha - 2) / 2``, where ``(F*F)(x)`` is the convolution
integral over [0, x]. The predicted critical profile is
``P(X_n = k) ~ (4 / n**2) 2**-k F(k / n)``.
"""
import logging
import math
from dataclasses import dataclass
from typing import (
    Dict,
    List,
    Mapping,
    Tuple,
    Union,
)

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

import datalad_drlab.constants as cnst
from datalad_drlab.tilted import TiltedPmf
from datalad_drlab.utils import compensated_sum

lgr = logging.getLogger("datalad.drlab.scaling")


class SolverError(ArithmeticError):
    pass


def c_alpha(alpha: float) -> float:
    """F(0) and the survival prefactor alpha (alpha - 2) / 2"""
    return alpha * (alpha - 2.0) / 2.0


@dataclass(frozen=True, eq=False)
class ScalingSolution:
    """F on a uniform grid

    ``f_values`` are Richardson-extrapolated from the step-h and step-h/2
    marches; ``self_convergence`` is the raw sup-norm difference of the
    two.
    """

    alpha: float
    grid: np.ndarray
    f_values: np.ndarray
    h: float
    self_convergence: float
    flags: Tuple[str, ...] = ()

    def __call__(self, x):
        return CubicSpline(self.grid, self.f_values)(x)

    @property
    def x_max(self) -> float:
        return float(self.grid[-1])


def _trapezoid_convolution(f: np.ndarray, i: int, h: float) -> float:
    """Trapezoid rule for the integral of F(y) F(x_i - y) over [0, x_i]"""
    if i == 0:
        return 0.0
    inner = float(np.dot(f[1:i], f[i - 1 : 0 : -1])) if i > 1 else 0.0
    return h * (f[0] * f[i] + inner)


def _march(alpha: float, x_max: float, h: float, tol: float = 1e-15):
    """Trapezoidal predictor-corrector march on a grid of step h"""
    steps = int(round(x_max / h))
    grid = np.arange(steps + 1) * h
    f = np.zeros(steps + 1)
    f[0] = c_alpha(alpha)

    def slope(i, value):
        f[i] = value
        conv = _trapezoid_convolution(f, i, h)
        return -(2.0 * value + 0.5 * conv) / (1.0 + grid[i])

    g_prev = slope(0, f[0])
    for i in range(steps):
        # predictor: explicit Euler
        value = f[i] + h * g_prev
        # corrector: trapezoid, iterated to a fixed point
        for _ in range(100):
            g_next = slope(i + 1, value)
            corrected = f[i] + 0.5 * h * (g_prev + g_next)
            done = abs(corrected - value) <= tol * max(1.0, abs(corrected))
            value = corrected
            if done:
                break
        g_prev = slope(i + 1, value)
        if not math.isfinite(value):
            raise SolverError(
                "Non-finite F at x=%g for alpha=%g" % (grid[i + 1], alpha)
            )
    return grid, f


def solve_F(
    alpha: float, x_max: float = 5.0, h: float = 1e-3
) -> ScalingSolution:
    """Solve the scaling equation on [0, x_max]

    Parameters
    ----------
    alpha : float
        tail exponent in (2, 4]
    x_max : float
        right end of the grid, at most 50
    h : float
        step, at most 1e-2

    Returns
    -------
    ScalingSolution
    """
    if not 2.0 < alpha <= 4.0:
        raise ValueError("alpha must lie in (2, 4], got %r" % alpha)
    if not 0 < h <= 1e-2:
        raise ValueError("h must lie in (0, 1e-2], got %r" % h)
    if not 0 < x_max <= 50:
        raise ValueError("x_max must lie in (0, 50], got %r" % x_max)
    grid, coarse = _march(alpha, x_max, h)
    _, fine = _march(alpha, x_max, h / 2.0)
    fine = fine[::2]
    self_convergence = float(np.max(np.abs(coarse - fine)))
    f_values = (4.0 * fine - coarse) / 3.0
    # the boundary value is exact, keep it bit-for-bit
    f_values[0] = c_alpha(alpha)

    flags = []
    if np.any(f_values <= 0):
        flags.append(cnst.FLAG_NON_POSITIVE)
    if np.any(np.diff(f_values) >= 0):
        flags.append(cnst.FLAG_NON_MONOTONE)
    if flags:
        lgr.warning(
            "Scaling function for alpha=%g is flagged: %s",
            alpha,
            ", ".join(flags),
        )
    lgr.debug(
        "Solved F for alpha=%g on [0, %g], self-convergence %g",
        alpha,
        x_max,
        self_convergence,
    )
    return ScalingSolution(
        alpha=float(alpha),
        grid=grid,
        f_values=f_values,
        h=float(h),
        self_convergence=self_convergence,
        flags=tuple(flags),
    )


def equation_residual(sol: ScalingSolution) -> np.ndarray:
    """Residual of the scaling equation at every grid point

    Uses a spline derivative and Simpson quadrature, both independent of
    the marching scheme.
    """
    f = sol.f_values
    x = sol.grid
    derivative = CubicSpline(x, f).derivative()(x)
    conv = np.zeros_like(f)
    for i in range(1, f.size):
        conv[i] = simpson(f[: i + 1] * f[i::-1], x=x[: i + 1])
    return x * derivative + 2.0 * f + derivative + 0.5 * conv


@dataclass(frozen=True, eq=False)
class Profile:
    """Predicted P(X_n = k) for k = 0..k_max"""

    n: int
    probabilities: np.ndarray
    normalization: str

    @property
    def ks(self) -> np.ndarray:
        return np.arange(self.probabilities.size)

    def scaled(self) -> np.ndarray:
        """n**2 2**k P(X_n = k)"""
        return self.n**2 * np.ldexp(self.probabilities, self.ks)

    def as_dict(self) -> Dict[int, float]:
        return {int(k): float(p) for k, p in zip(self.ks, self.probabilities)}


def predicted_profile(
    sol: ScalingSolution,
    n: int,
    normalization: str = cnst.NORM_PAPER4,
) -> Profile:
    """Critical profile for k = 0 .. floor(x_max n)

    'paper-4' uses the literal 4/n**2 prefactor. 'survival-matched'
    rescales so that the k >= 1 part sums to c(alpha) / n**2.
    """
    if n < 1:
        raise ValueError("n must be >= 1, got %r" % n)
    if normalization not in (cnst.NORM_PAPER4, cnst.NORM_SURVIVAL):
        raise ValueError("Unknown normalization %r" % normalization)
    ks = np.arange(int(math.floor(sol.x_max * n)) + 1)
    values = sol(ks / n)
    probabilities = 4.0 / n**2 * np.ldexp(values, -ks)
    if normalization == cnst.NORM_SURVIVAL:
        target = c_alpha(sol.alpha) / n**2
        probabilities = probabilities * (
            target / compensated_sum(probabilities[1:])
        )
    return Profile(
        n=n, probabilities=probabilities, normalization=normalization
    )


@dataclass(frozen=True)
class ProfileComparison:
    n: int
    sup_norm: float
    total_variation: float
    table: List[Tuple[int, float, float, float]]

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "sup_norm": self.sup_norm,
            "total_variation": self.total_variation,
            "table": [
                {"k": k, "exact": e, "predicted": p, "ratio": r}
                for k, e, p, r in self.table
            ],
        }


ExactProfile = Union[TiltedPmf, Profile, Mapping[int, float]]


def _as_probabilities(exact: ExactProfile, size: int) -> np.ndarray:
    out = np.zeros(size)
    if isinstance(exact, Profile):
        source = exact.probabilities
        out[: min(size, source.size)] = source[:size]
    elif isinstance(exact, TiltedPmf):
        probabilities = exact.probabilities()
        for k, p in zip(exact.support, probabilities):
            if k < size:
                out[k] = p
    else:
        for k, p in exact.items():
            if 0 <= int(k) < size:
                out[int(k)] = p
    return out


def compare_profile(
    exact: ExactProfile, prediction: Profile
) -> ProfileComparison:
    """Distances between an exact generation-n law and a predicted profile

    Metrics run over 1 <= k <= 5n: sup-norm of the n**2 2**k scaled
    difference, total variation, and the per-k ratio table.
    """
    n = prediction.n
    if isinstance(exact, Profile) and exact.n != n:
        raise ValueError(
            "Profiles are for different n: %d vs %d" % (exact.n, n)
        )
    k_top = min(5 * n, prediction.probabilities.size - 1)
    ks = np.arange(1, k_top + 1)
    exact_p = _as_probabilities(exact, k_top + 1)[1:]
    predicted = prediction.probabilities[1 : k_top + 1]
    scaled = n**2 * np.ldexp(exact_p - predicted, ks)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(predicted > 0, exact_p / predicted, math.nan)
    table = [
        (int(k), float(e), float(p), float(r))
        for k, e, p, r in zip(ks, exact_p, predicted, ratios)
    ]
    return ProfileComparison(
        n=n,
        sup_norm=float(np.max(np.abs(scaled))) if ks.size else 0.0,
        total_variation=0.5 * compensated_sum(np.abs(exact_p - predicted)),
        table=table,
    )
