import numpy as np
import pytest

from holoplex.core import Grid, WaveSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid64():
    return Grid(64, 64, 8e-6)


@pytest.fixture
def green():
    return WaveSpec(520e-9)


def band_limited_phase(rng, n, keep=0.25, scale=1.0):
    """Real random phase whose centered spectrum lives in a small central box."""
    spec = np.zeros((n, n), complex)
    c, k = n // 2, max(1, int(n * keep / 2))
    spec[c - k:c + k + 1, c - k:c + k + 1] = rng.normal(size=(2 * k + 1,) * 2) + 1j * rng.normal(size=(2 * k + 1,) * 2)
    phi = np.real(np.fft.ifft2(np.fft.ifftshift(spec)))
    return scale * phi / np.abs(phi).max()


# criterion -> (ok, detail), filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} [{'PASS' if ok else 'FAIL'}] {detail}")
