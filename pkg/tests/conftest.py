import numpy as np
import pytest

from pmtk import kernels


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Run the test once per kernel backend, restoring the previous one."""
    prev = kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(prev)
