import numpy as np
import pytest

from csifb.steering import normalize_convention


def random_steering(rng, n, n_r, n_c):
    """Haar-like orthonormal columns put into the last-row-real convention."""
    z = rng.standard_normal((n, n_r, n_r)) + 1j * rng.standard_normal((n, n_r, n_r))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    q = q * (d / np.abs(d))[:, None, :]
    return normalize_convention(q[..., :n_c])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance criteria append (number, passed, detail) here
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}")
