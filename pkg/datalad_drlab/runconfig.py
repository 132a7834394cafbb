import copy
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import (
    Any,
    Optional,
)

from jsonschema import (
    Draft202012Validator,
    ValidationError,
)

import datalad_drlab.constants as cnst
from datalad_drlab.laws import InitialLaw
from datalad_drlab.tilted import TruncationPolicy
from datalad_drlab.utils import (
    deep_merge,
    load_config_file,
    read_json_file,
)

lgr = logging.getLogger("datalad.drlab.runconfig")


@dataclass(frozen=True)
class RunConfig:
    """
    A fully resolved run: packaged defaults, the user file and
    command-line overrides, validated against the run config schema.
    """

    # Get package-related paths
    package_path = Path(__file__).resolve().parent
    default_config_path = package_path / "config" / "config.yml"
    schema_path = package_path / "schema" / "jsonschema_runconfig.json"
    # Set up the validator
    SCHEMA = read_json_file(schema_path)
    VALIDATOR = Draft202012Validator(SCHEMA)

    experiment: str
    family: dict
    seed: int
    n_max: int
    reps: int
    parents: int
    out_dir: str
    truncation: dict
    options: dict

    @classmethod
    def defaults(cls) -> dict:
        return load_config_file(cls.default_config_path)

    @classmethod
    def from_dict(
        cls,
        config: dict,
        seed: Optional[int] = None,
        out_dir: Optional[str] = None,
        source: str = "<dict>",
    ) -> "RunConfig":
        """Merge config over the packaged defaults and validate the result

        A family given in config replaces the default family as a whole.
        """
        if not isinstance(config, dict):
            raise ValidationError(
                f"Run config {source} must be a mapping, got "
                f"{type(config).__name__}"
            )
        defaults = cls.defaults()
        merged = deep_merge(defaults, config)
        if cnst.FAMILY in config:
            merged[cnst.FAMILY] = copy.deepcopy(config[cnst.FAMILY])
        if seed is not None:
            merged[cnst.SEED] = seed
        if out_dir is not None:
            merged[cnst.OUT_DIR] = str(out_dir)
        try:
            cls.VALIDATOR.validate(merged)
        except ValidationError as e:
            err_msg = f"Run config {source} is invalid: \n\n{e.message}"
            raise ValidationError(err_msg) from e
        # catch semantic errors of the family early
        InitialLaw.from_config(merged[cnst.FAMILY])
        TruncationPolicy(**merged[cnst.TRUNCATION])
        lgr.debug("Resolved run config from %s: %s", source, merged)
        return cls(
            experiment=merged[cnst.EXPERIMENT],
            family=merged[cnst.FAMILY],
            seed=merged[cnst.SEED],
            n_max=merged[cnst.N_MAX],
            reps=merged[cnst.REPS],
            parents=merged[cnst.PARENTS],
            out_dir=merged[cnst.OUT_DIR],
            truncation=merged[cnst.TRUNCATION],
            options=merged.get(cnst.OPTIONS) or {},
        )

    @classmethod
    def from_file(
        cls,
        path,
        seed: Optional[int] = None,
        out_dir: Optional[str] = None,
    ) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"Run config file not found: {path}")
        return cls.from_dict(
            load_config_file(path), seed=seed, out_dir=out_dir, source=str(path)
        )

    def law(self) -> InitialLaw:
        return InitialLaw.from_config(self.family)

    def policy(self, **overrides) -> TruncationPolicy:
        return TruncationPolicy(**{**self.truncation, **overrides})

    def option(self, key: str, default: Any = None) -> Any:
        return self.options.get(key, default)

    def to_dict(self) -> dict:
        return {
            cnst.EXPERIMENT: self.experiment,
            cnst.FAMILY: copy.deepcopy(self.family),
            cnst.SEED: self.seed,
            cnst.N_MAX: self.n_max,
            cnst.REPS: self.reps,
            cnst.PARENTS: self.parents,
            cnst.OUT_DIR: self.out_dir,
            cnst.TRUNCATION: dict(self.truncation),
            cnst.OPTIONS: copy.deepcopy(self.options),
        }
