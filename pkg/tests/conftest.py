import pytest

from buckletop.elements import make_template
from buckletop.field import InterpSpec
from buckletop.optimizer import OptimizationProblem, analyze_design
from buckletop.problems import compressed_patch_spec, fixture_density


@pytest.fixture
def unit_template():
    return make_template("q4", 1.0, 0.3, 1.0, 1.0, 1.0)


@pytest.fixture
def interp3():
    return InterpSpec(1e-6, 1.0, 3.0)


@pytest.fixture
def patch_problem():
    """Compressed 6x6 patch with a deterministic non-uniform density."""
    mesh, bc = compressed_patch_spec(6, 6)
    xbar = fixture_density(mesh, 0.4, 0.9, seed=42)
    return OptimizationProblem(mesh, bc), xbar


def analyze_patch(problem, xbar, p=3.0, k=3):
    return analyze_design(problem, xbar, p, k, flag_pseudo=False)
