import numpy as np
import pytest

from cpl import refsolve
from cpl.pde import make_problem


@pytest.fixture(scope="session")
def ref_cache(tmp_path_factory):
    return str(tmp_path_factory.mktemp("refcache"))


@pytest.fixture(scope="session")
def advection_ref(ref_cache):
    prob = make_problem("advection1d")
    return refsolve.solve_reference(prob, nx=1024,
                                    dt=refsolve.suggest_dt(prob, 1024),
                                    cache_dir=ref_cache)


@pytest.fixture(scope="session")
def kdv_table(ref_cache):
    prob = make_problem("kdv1d")
    ref = refsolve.solve_reference(prob, nx=128,
                                   dt=refsolve.suggest_dt(prob, 128),
                                   cache_dir=ref_cache)
    return refsolve.invariant_table(ref)


@pytest.fixture(scope="session")
def rd_table(ref_cache):
    prob = make_problem("reaction_diffusion1d")
    ref = refsolve.solve_reference(prob, nx=256, dt=2e-4, cache_dir=ref_cache)
    return refsolve.invariant_table(ref)


@pytest.fixture(scope="session")
def wave_table(ref_cache):
    prob = make_problem("wave1d")
    ref = refsolve.solve_reference(prob, nx=256,
                                   dt=refsolve.suggest_dt(prob, 256),
                                   cache_dir=ref_cache)
    return refsolve.invariant_table(ref)


@pytest.fixture(scope="session")
def advection_table(advection_ref):
    return refsolve.invariant_table(advection_ref)


def attach_tables(problem, kdv=None, rd=None, wave=None, advection=None):
    table = {"kdv1d": kdv, "reaction_diffusion1d": rd, "wave1d": wave,
             "advection1d": advection}[problem.name]
    if table is not None and problem.needs_invariant_table():
        problem.attach_invariant_table(table)
    return problem


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
