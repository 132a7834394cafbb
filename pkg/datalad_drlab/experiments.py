"""Named experiments of the lab

Each experiment reads a RunConfig, runs the numerics and writes its tables
through a ResultWriter. Experiments report fits, windows and standard
errors; they never decide pass or fail.
"""
import logging
import math
from dataclasses import dataclass
from typing import (
    Callable,
    Dict,
    List,
    Sequence,
    Tuple,
)

import numpy as np
from datalad.support.exceptions import InsufficientArgumentsError

import datalad_drlab.constants as cnst
from datalad_drlab.criticality import (
    delta_of,
    exponent_fit,
    find_pc,
    scan_free_energy,
)
from datalad_drlab.laws import (
    InitialLaw,
    pmf_from_law,
)
from datalad_drlab.limittree import (
    compare_samples,
    expected_leaf_count,
    limit_tree_stats,
)
from datalad_drlab.results import ResultWriter
from datalad_drlab.runconfig import RunConfig
from datalad_drlab.scaling import (
    c_alpha,
    compare_profile,
    equation_residual,
    predicted_profile,
    solve_F,
)
from datalad_drlab.tilted import (
    TrajectorySummary,
    evolve_trajectory,
    gen_fn,
    iter_evolution,
)
from datalad_drlab.treesim import (
    brute_force_expectations,
    conditional_tree_sample,
    exact_critical_masses,
    mc_estimate,
    open_subtree,
)

lgr = logging.getLogger("datalad.drlab.experiments")


class UnknownExperimentError(InsufficientArgumentsError):
    pass


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    func: Callable[[RunConfig, ResultWriter], None]

    def __call__(self, config: RunConfig, writer: ResultWriter) -> None:
        self.func(config, writer)


EXPERIMENTS: Dict[str, Experiment] = {}


def experiment(name: str, description: str):
    """Register the decorated function as experiment `name`"""

    def register(func):
        if name in EXPERIMENTS:
            raise ValueError("Experiment %r is already registered" % name)
        EXPERIMENTS[name] = Experiment(name, description, func)
        return func

    return register


def get_experiment(name: str) -> Experiment:
    try:
        return EXPERIMENTS[name]
    except KeyError:
        raise UnknownExperimentError(
            "Unknown experiment '%s', choose from: %s"
            % (name, ", ".join(sorted(EXPERIMENTS)))
        )


# Shared helpers


def _k_cap(config: RunConfig) -> int:
    return int(config.option("k_cap", 256))


def _critical_law(config: RunConfig) -> InitialLaw:
    """The configured law, moved to its critical point unless disabled"""
    law = config.law()
    if not config.option("critical", True):
        return law
    if law.kind not in (cnst.DIRAC_MIXTURE, cnst.HEAVY_TAIL_ALPHA):
        raise ValueError(
            "No critical point for family %s; set options.critical = false "
            "to use the law as given" % law.kind
        )
    p_c = find_pc(law, _k_cap(config), config.parents)
    if cnst.FLAG_BOUNDARY in p_c.flags:
        raise ValueError("Family %s has no critical point in [0, 1]" % law.kind)
    lgr.info("Critical mixing weight p_c = %r", float(p_c))
    return law.with_p(float(p_c))


def _alpha(config: RunConfig, law: InitialLaw) -> float:
    """Tail exponent: the family's alpha, 4 for generic laws"""
    if law.kind == cnst.HEAVY_TAIL_ALPHA:
        return float(law.alpha)
    return float(config.option("alpha", 4.0))


def _window(config: RunConfig, n_max: int) -> Tuple[float, float]:
    window = config.option("fit_window")
    if window is None:
        return (float(max(1, n_max // 4)), float(n_max))
    lo, hi = window
    return (float(lo), float(hi))


def _fit_record(points, model=cnst.MODEL_LOGLOG, window=None, **extra) -> dict:
    """Exponent fit as a JSON record; a failed fit is reported, not raised"""
    try:
        record = exponent_fit(points, model, window).to_json()
    except ValueError as e:
        lgr.warning("Exponent fit skipped: %s", e)
        record = {"model": model, "error": str(e)}
    record.update(extra)
    return record


def _trajectory(
    config: RunConfig,
    writer: ResultWriter,
    q_list: Sequence[int] = (),
    cond_cap: int = 10,
) -> Tuple[InitialLaw, List[TrajectorySummary]]:
    """Exact critical trajectory, written to trajectory.csv"""
    law = _critical_law(config)
    pmf0 = pmf_from_law(law, _k_cap(config), base=float(config.parents))
    summaries = evolve_trajectory(
        pmf0,
        config.n_max,
        config.parents,
        config.policy(),
        q_list=q_list,
        cond_cap=cond_cap,
    )
    header = [
        "n",
        "survival",
        "mean",
        "h2",
        "h2_product",
        "delta",
        "lost_mass",
        "lost_tilted_mass",
        "k_max",
    ] + ["moment_q%d" % q for q in q_list]
    writer.write_csv(
        "trajectory.csv",
        header,
        (
            [
                s.generation,
                s.survival,
                s.mean,
                s.h2,
                s.h2_product,
                float(s.delta),
                s.lost_mass,
                s.lost_tilted_mass,
                s.k_max,
            ]
            + list(s.tilted_moments)
            for s in summaries
        ),
    )
    return law, summaries


# Exact trajectories


@experiment(
    "survival-decay",
    "P(X_n > 0) along the critical trajectory, with n**2 P(X_n > 0) "
    "and a log-log fit",
)
def survival_decay(config: RunConfig, writer: ResultWriter) -> None:
    _, summaries = _trajectory(config, writer)
    writer.write_csv(
        "survival.csv",
        ["n", "survival", "n2_survival"],
        (
            [s.generation, s.survival, s.generation**2 * s.survival]
            for s in summaries[1:]
        ),
    )
    window = _window(config, config.n_max)
    writer.write_json(
        "fit.json",
        _fit_record(
            [(s.generation, s.survival) for s in summaries[1:]],
            window=window,
            expected_slope=-2.0,
            expected_prefactor=4.0,
        ),
    )


@experiment(
    "mean-decay",
    "<X_n> and <X_n | X_n > 0> along the critical trajectory, against "
    "8/n**2 (generic) or 2 c(alpha)/n**2 (stable)",
)
def mean_decay(config: RunConfig, writer: ResultWriter) -> None:
    law, summaries = _trajectory(config, writer)
    prefactor = (
        2.0 * c_alpha(law.alpha) if law.kind == cnst.HEAVY_TAIL_ALPHA else 8.0
    )
    writer.write_csv(
        "mean.csv",
        ["n", "mean", "n2_mean", "conditional_mean", "prediction"],
        (
            [
                s.generation,
                s.mean,
                s.generation**2 * s.mean,
                s.mean / s.survival if s.survival > 0 else math.nan,
                prefactor / s.generation**2,
            ]
            for s in summaries[1:]
        ),
    )
    writer.write_json(
        "fit.json",
        _fit_record(
            [(s.generation, s.mean) for s in summaries[1:]],
            window=_window(config, config.n_max),
            expected_slope=-2.0,
            expected_prefactor=prefactor,
        ),
    )


@experiment(
    "mgf-limit",
    "<2**X_n> -> 1 with n(<2**X_n> - 1), and <z**X_n> - 1 against "
    "(z-1)/(2-z) 8/n**2 on a z grid",
)
def mgf_limit(config: RunConfig, writer: ResultWriter) -> None:
    z_values = [float(z) for z in config.option("z_values", [0.5, 1.5])]
    for z in z_values:
        if not 0 <= z < 2 or z == 1:
            raise ValueError(
                "z values must lie in [0, 2) without 1, got %r" % z
            )
    law = _critical_law(config)
    pmf0 = pmf_from_law(law, _k_cap(config), base=float(config.parents))
    header = ["n", "h2", "n_h2_minus_1"]
    for z in z_values:
        header += ["H(%r)" % z, "ratio(%r)" % z]
    rows = []
    h2_values = []
    for n, pmf in iter_evolution(
        pmf0, config.n_max, config.parents, config.policy()
    ):
        if n == 0:
            continue
        h2 = gen_fn(pmf, 2.0)
        h2_values.append(h2)
        row = [n, h2, n * (h2 - 1.0)]
        for z in z_values:
            value = gen_fn(pmf, z)
            prediction = (z - 1.0) / (2.0 - z) * 8.0
            row += [value, n**2 * (value - 1.0) / prediction]
        rows.append(row)
    writer.write_csv("mgf.csv", header, rows)

    # first n from which <2**X_n> never increases again
    monotone_from = len(h2_values)
    while monotone_from > 1 and (
        h2_values[monotone_from - 2] >= h2_values[monotone_from - 1]
    ):
        monotone_from -= 1
    writer.write_json(
        "summary.json",
        {
            "monotone_from": monotone_from,
            "n_max": config.n_max,
            "n_h2_minus_1": rows[-1][2],
            "expected_n_h2_minus_1": 2.0,
        },
    )


@experiment(
    "product-growth",
    "prod_{i<n} <2**X_i> with its log-log slope (2 generic, alpha-2 stable)",
)
def product_growth(config: RunConfig, writer: ResultWriter) -> None:
    law, summaries = _trajectory(config, writer)
    expected = _alpha(config, law) - 2.0
    writer.write_csv(
        "product.csv",
        ["n", "h2_product", "scaled"],
        (
            [s.generation, s.h2_product, s.h2_product / s.generation**expected]
            for s in summaries[1:]
        ),
    )
    writer.write_json(
        "fit.json",
        _fit_record(
            [(s.generation, s.h2_product) for s in summaries[1:]],
            window=_window(config, config.n_max),
            expected_slope=expected,
        ),
    )


@experiment(
    "conditional-law",
    "P(X_n = k | X_n > 0) at n_max against the geometric law 2**-k",
)
def conditional_law(config: RunConfig, writer: ResultWriter) -> None:
    cond_cap = int(config.option("cond_cap", 10))
    _, summaries = _trajectory(config, writer, cond_cap=cond_cap)
    last = summaries[-1]
    rows = []
    for k, value in enumerate(last.conditional_pmf, start=1):
        geometric = 2.0**-k
        rows.append([k, value, geometric, abs(value - geometric)])
    writer.write_csv(
        "conditional.csv", ["k", "conditional", "geometric", "abs_diff"], rows
    )
    writer.write_json(
        "summary.json",
        {
            "n": last.generation,
            "cond_cap": cond_cap,
            "sup_diff": max(r[3] for r in rows),
        },
    )


@experiment(
    "tilted-moments",
    "<X_n**q 2**X_n> / n**(q-1) against a(q) = 2**(1-q) q!",
)
def tilted_moments(config: RunConfig, writer: ResultWriter) -> None:
    q_list = [int(q) for q in config.option("q_values", [1, 2, 3])]
    _, summaries = _trajectory(config, writer, q_list=q_list)
    header = ["n"]
    for q in q_list:
        header += ["moment_q%d" % q, "scaled_q%d" % q]
    rows = []
    for s in summaries[1:]:
        row = [s.generation]
        for q, value in zip(q_list, s.tilted_moments):
            row += [value, value / s.generation ** (q - 1)]
        rows.append(row)
    writer.write_csv("moments.csv", header, rows)
    last = summaries[-1]
    writer.write_json(
        "prediction.json",
        {
            "n": last.generation,
            "moments": [
                {
                    "q": q,
                    "prediction": 2.0 ** (1 - q) * math.factorial(q),
                    "scaled": value / last.generation ** (q - 1),
                }
                for q, value in zip(q_list, last.tilted_moments)
            ],
        },
    )


# Free energy


def _scan_rows(rows) -> List[list]:
    return [
        [
            r.p,
            float(r.delta),
            r.estimate.lower,
            r.estimate.upper,
            r.estimate.n_lower,
            r.estimate.n_upper,
            r.flags,
        ]
        for r in rows
    ]


_SCAN_HEADER = [
    "p",
    "delta",
    "fe_lower",
    "fe_upper",
    "n_lower",
    "n_upper",
    "flags",
]


def _usable_points(rows, abscissa) -> List[Tuple[float, float]]:
    """(abscissa, bracket midpoint) of rows with a tight bracket in (0, 1)"""
    points = []
    for r in rows:
        est = r.estimate
        if (
            cnst.FLAG_WIDE in est.flags
            or cnst.FLAG_INVERTED in est.flags
            or not est.lower > 0
        ):
            continue
        value = 0.5 * (est.lower + est.upper)
        if value < 1:
            points.append((abscissa(r), value))
    return points


@experiment(
    "free-energy-scaling",
    "Free-energy brackets on a supercritical grid and the slope of "
    "ln ln(1/F) against ln delta",
)
def free_energy_scaling(config: RunConfig, writer: ResultWriter) -> None:
    family = config.law()
    k_cap = _k_cap(config)
    m = config.parents
    p_values = config.option("p_values")
    if p_values is None:
        # delta is affine in p, map the delta grid onto p
        deltas = config.option(
            "delta_values", [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
        )
        d0 = float(delta_of(family, 0.0, k_cap, m))
        d1 = float(delta_of(family, 1.0, k_cap, m))
        if d1 <= 0:
            raise ValueError("Family %s has no supercritical p" % family.kind)
        p_values = [(d - d0) / (d1 - d0) for d in deltas]
        bad = [p for p in p_values if not 0 < p <= 1]
        if bad:
            raise ValueError(
                "delta grid maps outside (0, 1]: p = %s"
                % ", ".join(map(repr, bad))
            )
    rows = scan_free_energy(
        family,
        [float(p) for p in p_values],
        int(config.option("fe_n_max", config.n_max)),
        config.policy(),
        k_cap=k_cap,
        m=m,
        tolerance=float(config.option("tolerance", 0.1)),
    )
    writer.write_csv("scan.csv", _SCAN_HEADER, _scan_rows(rows))
    if family.kind == cnst.HEAVY_TAIL_ALPHA:
        expected = -1.0 / (family.alpha - 2.0)
    else:
        expected = -0.5
    writer.write_json(
        "fit.json",
        _fit_record(
            _usable_points(rows, lambda r: float(r.delta)),
            model=cnst.MODEL_LOGLOGLOG,
            expected_slope=expected,
        ),
    )


@experiment(
    "no-transition",
    "Free energy of the heavy-tail-beta family (p_c = 0) on a p grid, "
    "with the slope of ln ln(1/F) against ln p",
)
def no_transition(config: RunConfig, writer: ResultWriter) -> None:
    family = config.law()
    if family.kind != cnst.HEAVY_TAIL_BETA:
        raise ValueError(
            "no-transition needs a heavy-tail-beta family, got %s" % family.kind
        )
    p_values = [
        float(p)
        for p in config.option("p_values", [0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9])
    ]
    rows = scan_free_energy(
        family,
        p_values,
        int(config.option("fe_n_max", min(config.n_max, 60))),
        config.policy(),
        k_cap=_k_cap(config),
        m=config.parents,
        tolerance=float(config.option("tolerance", 0.1)),
    )
    writer.write_csv("scan.csv", _SCAN_HEADER, _scan_rows(rows))
    writer.write_json(
        "fit.json",
        _fit_record(
            _usable_points(rows, lambda r: r.p),
            model=cnst.MODEL_LOGLOGLOG,
            expected_slope=-1.0 / (2.0 - family.beta),
            positive_lower_bound=[r.p for r in rows if r.estimate.lower > 0],
            # the truncated law is stochastically smaller and has finite
            # support, so delta > 0 certifies F > 0 even when the bracket
            # underflows
            supercritical_by_delta=[r.p for r in rows if r.delta > 0],
        ),
    )


# Trees


def exp_lambda_prediction(n: int, a_hat: float, lam: float) -> float:
    """Predicted <exp(lambda N_n)> - 1 for a mean open-leaf count a_hat

    ``-4/n**2 + 3 A lambda / sin(n sqrt(3 A lambda) / 2)**2``, continued
    through sinh for lambda < 0. Tends to A lambda as lambda -> 0.
    """
    u = 3.0 * a_hat * lam
    if u == 0:
        return 0.0
    half = n * math.sqrt(abs(u)) / 2.0
    if u > 0:
        denominator = math.sin(half) ** 2
    else:
        denominator = -math.sinh(half) ** 2
    if denominator == 0:
        return math.inf
    return -4.0 / n**2 + u / denominator


@experiment(
    "open-branches",
    "Monte Carlo statistics of the open subtree: <N_n>, <N_n**q>, "
    "<N_n^(0)> bounds, <exp(lambda N_n)> and the stable exponents",
)
def open_branches(config: RunConfig, writer: ResultWriter) -> None:
    law = _critical_law(config)
    n_values = [int(n) for n in config.option("n_values", [5, 10, 15])]
    lambdas = [float(v) for v in config.option("lambdas", [])]
    q_max = int(config.option("q_max", 4))
    ell_max = int(config.option("ell_max", 5))
    records = []
    for n in n_values:
        records.extend(
            mc_estimate(
                law,
                n,
                config.reps,
                config.seed,
                lambdas=lambdas,
                q_max=q_max,
                ell_max=ell_max,
                k_cap=_k_cap(config),
            )
        )
    fields = ["observable", "n", "estimate", "stderr", "reps", "seed"]
    writer.write_csv(
        "mc.csv", fields, ([r[f] for f in fields] for r in records)
    )
    by_key = {(r["observable"], r["n"]): r for r in records}

    bounds = []
    for n in n_values:
        r = by_key[(cnst.OBS_N0, n)]
        bounds.append([n, cnst.OBS_N0, r["estimate"], r["stderr"], 1.0])
        for ell in range(ell_max + 1):
            r = by_key[(cnst.OBS_N0_INDICATOR % ell, n)]
            bounds.append(
                [n, r["observable"], r["estimate"], r["stderr"], 2.0**-ell]
            )
    writer.write_csv(
        "bounds.csv", ["n", "observable", "estimate", "stderr", "bound"], bounds
    )

    if lambdas:
        rows = []
        for n in n_values:
            a_hat = by_key[(cnst.OBS_N, n)]["estimate"]
            for lam in lambdas:
                r = by_key[(cnst.OBS_EXP_LAMBDA % lam, n)]
                predicted = exp_lambda_prediction(n, a_hat, lam)
                rows.append(
                    [n, lam, r["estimate"] - 1.0, r["stderr"], predicted]
                )
        writer.write_csv(
            "exp_lambda.csv",
            ["n", "lambda", "estimate_minus_1", "stderr", "predicted"],
            rows,
        )

    alpha = _alpha(config, law)
    exponents = {
        "alpha": alpha,
        cnst.OBS_N: _fit_record(
            [(n, by_key[(cnst.OBS_N, n)]["estimate"]) for n in n_values],
            expected_slope=alpha - 4.0,
        ),
    }
    for q in range(2, q_max + 1):
        key = cnst.OBS_N_POWER % q
        exponents[key] = _fit_record(
            [(n, by_key[(key, n)]["estimate"]) for n in n_values],
            expected_slope=q * (alpha - 2.0) - 2.0,
        )
    writer.write_json("exponents.json", exponents)


@experiment(
    "identity-check",
    "Exact rational check of <(1+X_n) 2**X_n N_n^(k)> = "
    "(k+1) 2**k P(X_0 = k) prod_{i<n} <2**X_i> for n <= 3",
)
def identity_check(config: RunConfig, writer: ResultWriter) -> None:
    law = config.law()
    if law.kind == cnst.DIRAC_MIXTURE and config.option("critical", True):
        masses = exact_critical_masses(law)
    elif law.kind == cnst.FINITE or law.kind == cnst.DIRAC_MIXTURE:
        masses = law
    else:
        raise ValueError(
            "identity-check needs a dirac-mixture or finite law, got %s"
            % law.kind
        )
    n_values = [
        int(n)
        for n in config.option(
            "n_values", range(1, min(3, config.n_max) + 1)
        )
    ]
    identity_rows = []
    n0_rows = []
    summary = []
    for n in n_values:
        result = brute_force_expectations(masses, n)
        for k in sorted(result.lhs):
            identity_rows.append(
                [
                    n,
                    k,
                    result.lhs[k],
                    result.rhs[k],
                    result.lhs[k] == result.rhs[k],
                ]
            )
        identity_rows.append(
            [
                n,
                "total",
                result.lhs_total,
                result.rhs_total,
                result.lhs_total == result.rhs_total,
            ]
        )
        for ell, value in result.n0_indicator.items():
            bound = 2.0**-ell
            n0_rows.append([n, ell, value, float(value), bound, value <= bound])
        summary.append(
            {
                "n": n,
                "identity_holds": result.identity_holds,
                "h2_product": result.h2_product,
                "n0_mean": result.n0_mean,
                "pmf": {k: v for k, v in result.pmf.items()},
            }
        )
    writer.write_csv(
        "identity.csv", ["n", "k", "lhs", "rhs", "equal"], identity_rows
    )
    writer.write_csv(
        "n0.csv",
        ["n", "ell", "value", "value_float", "bound", "holds"],
        n0_rows,
    )
    writer.write_json("summary.json", {"checks": summary})


# Scaling function and limiting tree


@experiment(
    "scaling-profile",
    "Scaling function F and its predicted critical profile against the "
    "exact law of X_n",
)
def scaling_profile(config: RunConfig, writer: ResultWriter) -> None:
    law = _critical_law(config)
    alpha = _alpha(config, law)
    sol = solve_F(
        alpha,
        x_max=float(config.option("x_max", 5.0)),
        h=float(config.option("h", 1e-3)),
    )
    writer.write_csv("F.csv", ["x", "F"], zip(sol.grid, sol.f_values))
    residual = equation_residual(sol)

    n_values = sorted(
        {
            int(n)
            for n in config.option(
                "n_values",
                [
                    max(1, config.n_max // 4),
                    max(1, config.n_max // 2),
                    config.n_max,
                ],
            )
        }
    )
    normalizations = config.option(
        "normalizations", [cnst.NORM_PAPER4, cnst.NORM_SURVIVAL]
    )
    pmf0 = pmf_from_law(law, _k_cap(config), base=float(config.parents))
    exact = {}
    for n, pmf in iter_evolution(
        pmf0, n_values[-1], config.parents, config.policy()
    ):
        if n in n_values:
            exact[n] = pmf
    comparisons = []
    for normalization in normalizations:
        for n in n_values:
            comparison = compare_profile(
                exact[n], predicted_profile(sol, n, normalization)
            )
            record = comparison.to_json()
            record["normalization"] = normalization
            comparisons.append(record)
    writer.write_json(
        "comparison.json",
        {
            "alpha": alpha,
            "h": sol.h,
            "x_max": sol.x_max,
            "self_convergence": sol.self_convergence,
            "residual_sup": float(np.max(np.abs(residual))),
            "flags": list(sol.flags),
            "comparisons": comparisons,
        },
    )


@experiment(
    "limit-tree-stats",
    "Leaf counts, leaf values and branching heights of the limiting tree "
    "at cutoffs eta and eta/2, against conditioned discrete trees",
)
def limit_tree_statistics(config: RunConfig, writer: ResultWriter) -> None:
    x = float(config.option("x", 0.5))
    eta = float(config.option("eta", 0.02))
    trees = int(config.option("trees", 20))
    bins = int(config.option("bins", 20))
    coarse, fine = limit_tree_stats(x, eta, trees, config.seed, bins=bins)

    rows = []
    height_rows = []
    count_rows = []
    for stats in (coarse, fine):
        rows.append(
            [
                stats.eta,
                stats.reps,
                stats.leaf_count_mean,
                stats.leaf_count_stderr,
                expected_leaf_count(x, stats.eta),
                stats.leaf_value_mean,
                stats.leaf_value_stderr,
                stats.leaf_value_second_moment,
            ]
        )
        counts, edges = stats.height_histogram
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            height_rows.append([stats.eta, lo, hi, c])
        for count, freq in sorted(stats.leaf_count_distribution.items()):
            count_rows.append([stats.eta, count, freq])
    writer.write_csv(
        "limit_stats.csv",
        [
            "eta",
            "reps",
            "leaf_count_mean",
            "leaf_count_stderr",
            "expected_leaf_count",
            "leaf_value_mean",
            "leaf_value_stderr",
            "leaf_value_second_moment",
        ],
        rows,
    )
    writer.write_csv(
        "heights.csv", ["eta", "bin_lo", "bin_hi", "count"], height_rows
    )
    writer.write_csv(
        "leaf_counts.csv", ["eta", "leaf_count", "frequency"], count_rows
    )

    n = int(config.option("compare_n", 8))
    if n <= 0:
        return
    sample = conditional_tree_sample(
        _critical_law(config),
        n,
        x,
        config.seed,
        max_attempts=int(config.option("max_attempts", 10**6)),
        n_accept=int(config.option("compare_trees", 50)),
        k_cap=_k_cap(config),
    )
    subtrees = [open_subtree(tree) for tree in sample.trees]
    discrete_heights = [h for s in subtrees for h in s.branching_heights]
    comparison = {
        "n": n,
        "target": sample.target,
        "attempts": sample.attempts,
        "accepted": sample.accepted,
        "acceptance_rate": sample.acceptance_rate,
        "acceptance_stderr": sample.acceptance_stderr,
        "open_leaves_mean": float(np.mean([s.n_total for s in subtrees])),
    }
    if discrete_heights and coarse.branching_heights.size:
        comparison["branching_heights"] = compare_samples(
            coarse.branching_heights, discrete_heights
        )
    writer.write_json("comparison.json", comparison)


def describe() -> List[Tuple[str, str]]:
    return [
        (name, EXPERIMENTS[name].description) for name in sorted(EXPERIMENTS)
    ]
