"""Miscellaneous utility functions that are used across other modules
"""
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import (
    Callable,
    Iterable,
    List,
    Optional,
    TypeVar,
)

import numpy as np
import yaml

import datalad_drlab.constants as cnst

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

lgr = logging.getLogger("datalad.drlab.utils")

T = TypeVar("T")
R = TypeVar("R")


def read_json_file(file_path):
    """
    Load content from a JSON file
    """
    try:
        with open(file_path) as f:
            return json.load(f)
    except OSError as err:
        lgr.error("Could not read %s: %s", file_path, err)
        raise


def load_config_file(file: Path):
    """Helper to load content from a JSON, YAML or TOML file"""
    file = Path(file)
    if file.suffix == ".toml":
        with open(file, "rb") as f:
            return tomllib.load(f)
    with open(file) as f:
        if file.suffix == ".json":
            return json.load(f)
        if file.suffix in [".yml", ".yaml"]:
            return yaml.safe_load(f)
    raise ValueError(
        "Unsupported config file type '%s', use .toml, .yml/.yaml or .json"
        % file.suffix
    )


def deep_merge(base: dict, override: dict) -> dict:
    """Return a copy of base with override merged in, recursing into dicts"""
    merged = dict(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def compensated_sum(values) -> float:
    """Error-free summation of a float sequence (Shewchuk via math.fsum)"""
    if isinstance(values, np.ndarray):
        values = values.tolist()
    return math.fsum(values)


class Flagged(float):
    """A float that carries a set of string flags

    Behaves like the plain value in arithmetic; the flags get lost on any
    operation, so read them off right away.
    """

    def __new__(cls, value, flags: Iterable[str] = ()):
        obj = super().__new__(cls, value)
        obj.flags = frozenset(flags)
        return obj

    def __repr__(self):
        return float.__repr__(self)


def get_thread_count() -> int:
    """Number of worker threads, capped by the DR_LAB_THREADS variable"""
    raw = os.environ.get(cnst.THREADS_ENV)
    if not raw:
        return 1
    try:
        threads = int(raw)
    except ValueError:
        raise ValueError(
            "%s must be a positive integer, got '%s'" % (cnst.THREADS_ENV, raw)
        )
    if threads < 1:
        raise ValueError(
            "%s must be a positive integer, got '%s'" % (cnst.THREADS_ENV, raw)
        )
    return threads


def ordered_map(
    func: Callable[[T], R],
    items: Iterable[T],
    threads: Optional[int] = None,
) -> List[R]:
    """Map func over items on a thread pool, keeping input order"""
    items = list(items)
    threads = get_thread_count() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(func, items))


def replica_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for replica `index` of a run seeded by `seed`

    The stream depends only on (seed, index), never on scheduling.
    """
    return np.random.default_rng(
        np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    )
