import pytest

from vixpricer import (CirParams, ModelSpec, OptionSpec, SolverConfig,
                       solve_boundary)


@pytest.fixture(scope="session")
def model_32():
    return ModelSpec("a1", terms=((1.0, 1.0),))


@pytest.fixture(scope="session")
def model_12():
    return ModelSpec("a2", terms=((1.0, 1.0),))


@pytest.fixture(scope="session")
def model_mix7():
    return ModelSpec("mixture", terms=((0.07, 1.0),), terms_a2=((0.07, 1.0),))


@pytest.fixture(scope="session")
def params_fig1():
    return CirParams(alpha=2.94, beta=17.10, kappa=2.05)


@pytest.fixture(scope="session")
def params_fig2():
    return CirParams(alpha=3.0, beta=0.68, kappa=1.0)


@pytest.fixture(scope="session")
def params_fig7():
    return CirParams(alpha=1.0, beta=2.0, kappa=1.0)


@pytest.fixture(scope="session")
def call_contract():
    return OptionSpec(strike=0.15, maturity=1.0, rate=0.05, kind="call")


@pytest.fixture(scope="session")
def fig1_boundary_coarse(model_32, params_fig1, call_contract):
    """Moderate-resolution fig1 boundary shared by the operation tests."""
    return solve_boundary(model_32, params_fig1, call_contract,
                          SolverConfig(n_steps=60))


@pytest.fixture(scope="session")
def fig7_boundary_coarse(model_mix7, params_fig7, call_contract):
    return solve_boundary(model_mix7, params_fig7, call_contract,
                          SolverConfig(n_steps=60))


def assert_close(got, want, rtol=0.0, atol=0.0, label=""):
    gap = abs(got - want)
    bound = atol + rtol * abs(want)
    assert gap <= bound, f"{label} got {got} want {want} (gap {gap:.3e} > {bound:.3e})"
