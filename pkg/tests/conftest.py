import functools

import numpy as np
import pytest

from biotsolve.assembly import PhysicalParams, assemble_system
from biotsolve.bench import TABLE_PARAMS
from biotsolve.mesh import build_structured_mesh


@functools.lru_cache(maxsize=None)
def cached_system(nx, table=1, **kw):
    params = PhysicalParams(**{**TABLE_PARAMS[table], **kw})
    return assemble_system(build_structured_mesh(nx), params)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture(params=[1, 2, 3], ids=["table1", "table2", "table3"])
def table(request):
    return request.param
