import math

import numpy as np
import pytest

import datalad_drlab.constants as cnst
from datalad_drlab.utils import (
    Flagged,
    compensated_sum,
    deep_merge,
    get_thread_count,
    ordered_map,
    replica_rng,
)


def test_deep_merge():
    base = {"a": 1, "nested": {"x": 1, "y": 2}, "list": [1, 2]}
    merged = deep_merge(base, {"nested": {"y": 3}, "list": [4], "b": 2})
    assert merged == {"a": 1, "nested": {"x": 1, "y": 3}, "list": [4], "b": 2}
    # the base is left untouched
    assert base["nested"] == {"x": 1, "y": 2}
    assert deep_merge(base, None) == base


def test_compensated_sum():
    values = np.array([1.0, 1e-16, -1.0] * 10)
    assert compensated_sum(values) == pytest.approx(1e-15, rel=1e-12)
    assert compensated_sum([]) == 0.0


def test_flagged():
    value = Flagged(0.5, ["wide-bracket"])
    assert value == 0.5
    assert value.flags == frozenset({"wide-bracket"})
    assert repr(value) == "0.5"
    assert not hasattr(value + 1.0, "flags")
    assert Flagged(math.inf).flags == frozenset()


def test_thread_count(monkeypatch):
    monkeypatch.delenv(cnst.THREADS_ENV, raising=False)
    assert get_thread_count() == 1
    monkeypatch.setenv(cnst.THREADS_ENV, "3")
    assert get_thread_count() == 3
    for raw in ("0", "many"):
        monkeypatch.setenv(cnst.THREADS_ENV, raw)
        with pytest.raises(ValueError):
            get_thread_count()


def test_ordered_map_keeps_order():
    items = list(range(50))
    squares = ordered_map(lambda i: i * i, items, threads=4)
    assert squares == [i * i for i in items]
    assert ordered_map(lambda i: i, [], threads=4) == []


def test_replica_streams():
    one = replica_rng(7, 3).random(5)
    assert np.array_equal(one, replica_rng(7, 3).random(5))
    assert not np.array_equal(one, replica_rng(7, 4).random(5))
    assert not np.array_equal(one, replica_rng(8, 3).random(5))
