import numpy as np
import pytest

from quatfm.data import SparseInstance


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def scalar_hamilton(p, q):
    """Hamilton product written out for plain 4-tuples (test oracle)."""
    r1, a1, b1, c1 = p
    r2, a2, b2, c2 = q
    return np.array(
        [
            r1 * r2 - a1 * a2 - b1 * b2 - c1 * c2,
            r1 * a2 + a1 * r2 + b1 * c2 - c1 * b2,
            r1 * b2 - a1 * c2 + b1 * r2 + c1 * a2,
            r1 * c2 + a1 * b2 - b1 * a2 + c1 * r2,
        ]
    )


def random_instance(rng, n, nnz, label=None):
    idx = np.sort(rng.choice(n, size=nnz, replace=False))
    vals = rng.uniform(0.5, 2.0, size=nnz)
    return SparseInstance(tuple(idx), tuple(vals), int(rng.integers(2)) if label is None else label)


def randomize(params, rng, scale=0.5):
    for arr in params.arrays().values():
        arr[...] = rng.normal(0.0, scale, size=arr.shape)
    return params


# Acceptance outcomes, filled in by test_acceptance.py and echoed at the end of the run.
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
