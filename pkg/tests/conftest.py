import numpy as np
import pytest

from qubit_motion import CorrelationMatrix, QubitSpec

# Published reference values for a four-qubit device (primed operating points)
FOUR_QUBIT_T1 = (12.9, 14.0, 12.8, 10.4)
FOUR_QUBIT_TAU = (1.12, 1.17, 1.23, 1.14)
FOUR_QUBIT_R = {(0, 1): 0.32, (1, 2): 0.53, (2, 3): 0.45, (0, 2): 0.23, (1, 3): 0.27, (0, 3): 0.20}
FOUR_QUBIT_R_SIGMA = {(0, 1): 0.02, (1, 2): 0.02, (2, 3): 0.02, (0, 2): 0.03, (1, 3): 0.04, (0, 3): 0.05}
FOUR_QUBIT_TAU_L = {
    (0, 1): 1.41, (1, 2): 1.37, (2, 3): 1.39,
    (0, 1, 2): 1.55, (1, 2, 3): 1.51,
    (0, 1, 2, 3): 1.65,
}

# Published reference values for a seven-qubit device, keyed by window length
SEVEN_QUBIT_T1 = (15.3, 12.8, 11.6, 10.3, 18.6, 19.0, 13.7)
SEVEN_QUBIT_TAU = (3.45, 0.75, 0.87, 0.23, 2.35, 1.17, 3.04)
SEVEN_QUBIT_TAU_L = {
    2: (1.39, 0.93, 0.38, 0.46, 2.09, 1.94),
    3: (1.54, 0.53, 0.64, 0.69, 2.56),
    4: (0.69, 0.72, 0.80, 0.90),
    5: (0.84, 0.85, 0.89),
    6: (1.20, 1.04),
    7: (1.24,),
}
# None marks the entries the reference leaves indeterminate
SEVEN_QUBIT_R = {
    2: (0.11, 0.51, 0.37, -0.01, 0.00, 0.27),
    3: (-0.82, 0.05, -0.57, -0.04, 0.42),
    4: (0.13, -0.17, -0.87, 0.02),
    5: (None, -0.75, -0.57),
    6: (None, -0.70),
    7: (None,),
}
SEVEN_QUBIT_R_SIGMA = {
    2: (0.02, 0.03, 0.02, 0.01, 0.02, 0.03),
    3: (0.04, 0.03, 0.13, 0.02, 0.11),
    4: (0.07, 0.14, 0.16, 0.01),
    5: (None, 0.17, 0.22),
    6: (None, 0.26),
    7: (None,),
}


def by_window(table):
    """``{length: values}`` -> ``{(start..end) window: value}``."""
    return {
        tuple(range(s, s + L)): v for L, values in table.items() for s, v in enumerate(values)
    }


@pytest.fixture
def four_qubit_specs():
    return [QubitSpec(f"Q{i + 1}'", t1, tau) for i, (t1, tau) in enumerate(zip(FOUR_QUBIT_T1, FOUR_QUBIT_TAU))]


@pytest.fixture
def four_qubit_corr():
    return CorrelationMatrix.from_pairs(4, FOUR_QUBIT_R)


@pytest.fixture
def seven_qubit_specs():
    return [QubitSpec(f"Q{i + 1}", t1, tau) for i, (t1, tau) in enumerate(zip(SEVEN_QUBIT_T1, SEVEN_QUBIT_TAU))]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_correlation(n, rng, strength=0.8):
    """Random valid correlation matrix (Gram matrix of unit vectors)."""
    v = rng.normal(size=(n, n)) + strength * rng.normal(size=(1, n))
    v /= np.linalg.norm(v, axis=0, keepdims=True)
    r = v.T @ v
    np.fill_diagonal(r, 1.0)
    return 0.5 * (r + r.T)


# one "criterion N ... PASS/FAIL" line per acceptance check, printed at the end
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
