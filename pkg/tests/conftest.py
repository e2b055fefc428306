import asyncio
import inspect
import pathlib

import pytest

from surface_sync.datastore import Store, ingest


def pytest_pyfunc_call(pyfuncitem):
    """Run async test functions on a fresh event loop (no plugin needed)."""
    fn = pyfuncitem.obj
    if inspect.iscoroutinefunction(fn):
        kwargs = {
            name: pyfuncitem.funcargs[name]
            for name in pyfuncitem._fixtureinfo.argnames
        }
        asyncio.run(fn(**kwargs))
        return True
    return None

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def vessels_path() -> pathlib.Path:
    return FIXTURES / "vessels_50.csv"


@pytest.fixture(scope="session")
def store(vessels_path) -> Store:
    return ingest(vessels_path, "CSV")
