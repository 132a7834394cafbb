import pytest
from datalad.conftest import setup_package

from datalad_drlab.constants import THREADS_ENV


@pytest.fixture(autouse=True)
def _no_thread_cap(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
