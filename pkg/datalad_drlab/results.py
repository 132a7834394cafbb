"""Deterministic CSV/JSON writers and the run manifest

Floats are written with their shortest round-trip repr, JSON with sorted
keys, and nothing time-dependent is recorded, so a re-run with the same
config and seed reproduces every file byte for byte.
"""
import csv
import json
import logging
import math
from fractions import Fraction
from pathlib import Path
from typing import (
    Iterable,
    List,
    Sequence,
)

import numpy as np

import datalad_drlab.constants as cnst

lgr = logging.getLogger("datalad.drlab.results")


def format_value(value) -> str:
    """CSV cell text of a single value"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, (tuple, list, frozenset, set)):
        items = sorted(value) if isinstance(value, (frozenset, set)) else value
        return ";".join(format_value(v) for v in items)
    return str(value)


def to_jsonable(obj):
    """Plain JSON types; NaN and infinities become null"""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (frozenset, set)):
        return [to_jsonable(v) for v in sorted(obj)]
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


class ResultWriter(object):
    """Writes the files of one run into out_dir and keeps their list"""

    def __init__(self, out_dir) -> None:
        self.out_dir = Path(out_dir)
        self.outputs: List[Path] = []

    def _target(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        if path not in self.outputs:
            self.outputs.append(path)
        return path

    def write_csv(
        self, name: str, header: Sequence[str], rows: Iterable[Sequence]
    ) -> Path:
        path = self._target(name)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                if len(row) != len(header):
                    raise ValueError(
                        "Row %r of %s does not match header %r"
                        % (row, name, header)
                    )
                writer.writerow([format_value(v) for v in row])
        lgr.debug("Wrote %s", path)
        return path

    def write_json(self, name: str, obj) -> Path:
        path = self._target(name)
        with open(path, "w", newline="\n") as f:
            json.dump(to_jsonable(obj), f, sort_keys=True, indent=2)
            f.write("\n")
        lgr.debug("Wrote %s", path)
        return path

    def write_manifest(self, config: dict, version: str) -> Path:
        """manifest.json: resolved config, version, seed and produced files

        The output directory is left out so that runs into different
        directories produce identical manifests.
        """
        config = {k: v for k, v in config.items() if k != cnst.OUT_DIR}
        outputs = [p.name for p in self.outputs if p.name != cnst.MANIFEST]
        manifest = {
            cnst.EXPERIMENT: config[cnst.EXPERIMENT],
            cnst.SEED: config[cnst.SEED],
            "version": version,
            "config": config,
            "outputs": outputs,
        }
        return self.write_json(cnst.MANIFEST, manifest)
