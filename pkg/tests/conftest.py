import pytest

from uncaps import accel


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # JIT compilation is a one-time cost (disk-cached); keep it out of
    # individual test timings.
    accel.warmup()
