import numpy as np
import pytest

from lpvred.lpv import build_variation_dataset
from lpvred.models import AnalyticBenchmarkModel, ParafoilModel
from lpvred.simulate import default_scenarios, generate_dataset

# one human-readable verdict line per acceptance criterion, echoed at the
# end of the run by pytest_terminal_summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def benchmark():
    return AnalyticBenchmarkModel()


@pytest.fixture(scope="session")
def parafoil():
    return ParafoilModel()


@pytest.fixture(scope="session")
def benchmark_dataset(benchmark):
    scen = default_scenarios(benchmark, 8, 20.0, seed=3)
    return generate_dataset(benchmark, scen, h=0.01, T=20.0, n_samples=8000, seed=5)


@pytest.fixture(scope="session")
def benchmark_split(benchmark_dataset):
    return benchmark_dataset.split(0.25, seed=11)


@pytest.fixture(scope="session")
def benchmark_variation(benchmark, benchmark_split):
    train, val = benchmark_split
    return build_variation_dataset(benchmark, train), build_variation_dataset(benchmark, val)


@pytest.fixture(scope="session")
def parafoil_dataset_small(parafoil):
    scen = default_scenarios(parafoil, 6, 10.0, seed=17)
    return generate_dataset(parafoil, scen, h=1 / 400, T=10.0, n_samples=6000, seed=19)


@pytest.fixture(scope="session")
def parafoil_dataset_desk(parafoil):
    """Desk-scale dataset: 20 x 60 s trajectories at 400 Hz, 50k samples."""
    scen = default_scenarios(parafoil, 20, 60.0, seed=2024)
    return generate_dataset(parafoil, scen, h=1 / 400, T=60.0, n_samples=50_000, seed=2024)


@pytest.fixture(scope="session")
def parafoil_desk_split(parafoil_dataset_desk):
    return parafoil_dataset_desk.split(0.25, seed=2025)


@pytest.fixture(scope="session")
def parafoil_desk_variation(parafoil, parafoil_desk_split):
    train, val = parafoil_desk_split
    return build_variation_dataset(parafoil, train), build_variation_dataset(parafoil, val)


def region_samples(model, n, seed=0):
    """Uniform random points in a model's operating region."""
    rng = np.random.default_rng(seed)
    X = model.x_bounds[:, 0] + rng.random((n, model.n_x)) * (model.x_bounds[:, 1] - model.x_bounds[:, 0])
    U = model.u_bounds[:, 0] + rng.random((n, model.n_u)) * (model.u_bounds[:, 1] - model.u_bounds[:, 0])
    if model.n_w:
        W = model.w_bounds[:, 0] + rng.random((n, model.n_w)) * (model.w_bounds[:, 1] - model.w_bounds[:, 0])
    else:
        W = None
    return X, U, W
