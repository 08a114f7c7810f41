import math

import numpy as np
import pytest

from durateless.codec import CodeEnsemble
from durateless.degree import new_distribution
from durateless.specfile import published_code

# Coefficients exactly as printed for the rho = 1, eta = 10 design.
PRINTED_OMEGA = {
    1: 0.039, 2: 0.492, 3: 0.094, 4: 0.09, 5: 0.096, 6: 0.002, 7: 0.055, 8: 0.019,
    9: 0.033, 10: 0.014, 20: 0.004, 27: 0.006, 31: 0.005, 43: 0.005, 78: 0.005,
    86: 0.005, 95: 0.014, 100: 0.007,
}
PRINTED_PHI = {
    1: 0.072, 2: 0.48, 3: 0.055, 4: 0.051, 5: 0.063, 6: 0.059, 7: 0.037, 8: 0.026,
    9: 0.025, 10: 0.036, 15: 0.005, 28: 0.003, 37: 0.005, 44: 0.002, 70: 0.002,
    77: 0.002, 83: 0.003, 93: 0.004, 95: 0.052, 97: 0.002,
}
PUBLISHED_P = (0.4822, 0.1173, 0.4005)
EEP_BER = math.exp(-1.05)


@pytest.fixture
def published():
    return published_code()


@pytest.fixture
def eep():
    one = new_distribution({1: 1.0})
    return CodeEnsemble(rho=1.0, omega=one, phi=one, p1=0.5, p2=0.5, gamma=1.05)


def random_distribution(rng, max_degree=20, atoms=None):
    atoms = atoms or int(rng.integers(1, max_degree + 1))
    degrees = rng.choice(np.arange(1, max_degree + 1), size=min(atoms, max_degree), replace=False)
    return new_distribution({int(d): float(w) for d, w in zip(degrees, rng.random(len(degrees)) + 0.01)})


def random_ensemble(rng, max_degree=20, rho=None, gamma=None):
    p = rng.dirichlet([1.0, 1.0, 1.0])
    return CodeEnsemble(
        rho=float(rho if rho is not None else rng.uniform(0.2, 1.0)),
        omega=random_distribution(rng, max_degree),
        phi=random_distribution(rng, max_degree),
        p1=float(p[0]),
        p2=float(p[1]),
        gamma=float(gamma if gamma is not None else rng.uniform(0.5, 2.0)),
    )


_criteria = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    for name, value in report.user_properties:
        if name == "criterion":
            number, title = value
            passed = report.passed
            prev = _criteria.get(number)
            _criteria[number] = (title, passed if prev is None else prev[1] and passed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, passed = _criteria[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {title}")
