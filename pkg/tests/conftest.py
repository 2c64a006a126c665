import pytest

from flintlet.registry import default_registry
from flintlet.store import DiskStore, MemoryStore


@pytest.fixture
def memory_store():
    return MemoryStore()


@pytest.fixture(params=["memory", "disk"])
def any_store(request, tmp_path):
    if request.param == "memory":
        return MemoryStore()
    return DiskStore(str(tmp_path / "store"))


@pytest.fixture
def registry():
    return default_registry()
