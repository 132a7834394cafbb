import logging
from pathlib import Path

from datalad.interface.base import (
    Interface,
    build_doc,
    eval_results,
)
from datalad.interface.results import get_status_dict
from datalad.support.constraints import (
    EnsureChoice,
    EnsureInt,
    EnsureNone,
)
from datalad.support.param import Parameter
from jsonschema import ValidationError

from datalad_drlab import __version__
from datalad_drlab.experiments import (
    UnknownExperimentError,
    describe,
    get_experiment,
)
from datalad_drlab.results import ResultWriter
from datalad_drlab.runconfig import RunConfig

# Create named logger
lgr = logging.getLogger("datalad.drlab.lab")

CALL_ACTION = ["run", "list-experiments", "validate"]


# Decoration auto-generates standard help
@build_doc
# All extension commands must be derived from Interface
class Drlab(Interface):
    # first docstring line is used a short description in the cmdline help
    # the rest is put in the verbose help and manpage
    """Run numerical experiments on the Derrida-Retaux max-plus recursion.

    The ``datalad drlab`` command can ``run`` a named experiment described
    by a run config file, ``list-experiments`` that are available, or
    ``validate`` a run config without running it.

    A run config (TOML, YAML or JSON) names the experiment, the initial
    law family, the generation and replica budgets, the seed, the
    truncation policy and per-experiment options. Every run writes CSV
    tables and JSON records into the output directory together with a
    ``manifest.json`` that is sufficient to re-run it. The same config and
    seed reproduce every file byte for byte.

    The environment variable DR_LAB_THREADS caps the number of worker
    threads (default: 1).
    """

    # usage examples
    _examples_ = [
        dict(
            text="Run the experiment described in a config file",
            code_py="drlab('run', config='survival.toml')",
            code_cmd="datalad drlab run -c survival.toml",
        ),
        dict(
            text="Re-run with another seed into another directory",
            code_py=(
                "drlab('run', config='branches.toml', seed=7, out='/tmp/b7')"
            ),
            code_cmd="datalad drlab run -c branches.toml --seed 7 -o /tmp/b7",
        ),
        dict(
            text="Show the available experiments",
            code_py="drlab('list-experiments')",
            code_cmd="datalad drlab list-experiments",
        ),
        dict(
            text="Check a config file against the run config schema",
            code_py="drlab('validate', config='survival.toml')",
            code_cmd="datalad drlab validate -c survival.toml",
        ),
    ]

    # parameters of the command, must be exhaustive
    _params_ = dict(
        # name of the parameter, must match argument name
        lab_action=Parameter(
            args=("lab_action",),
            # documentation
            doc="""This is the subcommand to be executed by datalad-drlab.
            Options include: run, list-experiments and validate.""",
            # type checkers, constraint definition is automatically
            # added to the docstring
            constraints=EnsureChoice(*CALL_ACTION),
        ),
        config=Parameter(
            # cmdline argument definitions, incl aliases
            args=("-c", "--config"),
            # documentation
            doc="""Path to a run config file in TOML, YAML or JSON format.
            Unset keys are read from datalad_drlab/config/config.yml""",
        ),
        seed=Parameter(
            args=("--seed",),
            doc="""Master seed, overrides the seed of the config file.""",
            constraints=EnsureInt() | EnsureNone(),
        ),
        out=Parameter(
            args=("-o", "--out"),
            doc="""Output directory, overrides out_dir of the config file.""",
        ),
    )

    @staticmethod
    # generic handling of command results (logging, rendering, filtering, ...)
    @eval_results
    # signature must match parameter list above
    # additional generic arguments are added by decorators
    def __call__(
        lab_action: str,
        config=None,
        seed=None,
        out=None,
    ):
        # Catch an invalid action (relevant for Python API usage).
        if lab_action not in CALL_ACTION:
            raise ValueError(
                "Unknown subcommand %s, choose from %s"
                % (lab_action, ", ".join(c for c in CALL_ACTION))
            )

        # set common result kwargs:
        res_kwargs = dict(action="drlab_%s" % lab_action)
        if lab_action == "list-experiments":
            yield from _list_experiments(res_kwargs)
            return

        # Error out if `config` argument was not supplied
        if config is None:
            yield get_status_dict(
                **res_kwargs,
                status="impossible",
                message=(
                    "Datalad drlab %s requires a run config. "
                    "Forgot -c, --config?",
                    lab_action,
                ),
                path=None,
            )
            return
        res_kwargs["path"] = str(Path(config))

        try:
            run_config = RunConfig.from_file(config, seed=seed, out_dir=out)
            experiment = get_experiment(run_config.experiment)
        except (
            ValidationError,
            UnknownExperimentError,
            ValueError,
            OSError,
        ) as e:
            yield get_status_dict(
                **res_kwargs,
                status="error",
                message=("Invalid run config: %s", str(e)),
            )
            return

        if lab_action == "validate":
            yield get_status_dict(
                **res_kwargs,
                status="ok",
                message=(
                    "Run config is valid for experiment %s",
                    experiment.name,
                ),
            )
            return

        yield from _run_experiment(experiment, run_config, res_kwargs)


def _list_experiments(res_kwargs):
    for name, description in describe():
        yield get_status_dict(
            **res_kwargs,
            status="ok",
            type="experiment",
            name=name,
            path=None,
            message=("%s: %s", name, description),
        )


def _run_experiment(experiment, run_config: RunConfig, res_kwargs):
    lgr.info(
        "Running experiment %s with seed %d into %s",
        experiment.name,
        run_config.seed,
        run_config.out_dir,
    )
    writer = ResultWriter(run_config.out_dir)
    try:
        experiment(run_config, writer)
    # domain errors: invalid laws, budgets, truncation, solver failures
    except (ValueError, RuntimeError, ArithmeticError) as e:
        lgr.debug("Experiment %s failed", experiment.name, exc_info=True)
        yield get_status_dict(
            **res_kwargs,
            status="error",
            message=(
                "Experiment %s failed: %s: %s",
                experiment.name,
                type(e).__name__,
                str(e),
            ),
        )
        return
    writer.write_manifest(run_config.to_dict(), __version__)
    for path in writer.outputs:
        yield get_status_dict(
            **{**res_kwargs, "path": str(path)},
            status="ok",
            type="file",
            message=("Wrote %s", path.name),
        )
