import pytest

from arwlab import _kernels


@pytest.fixture(scope="session", autouse=True)
def compiled_kernels():
    """Pay the JIT cost once so timed tests measure steady-state behavior."""
    _kernels.warmup()
