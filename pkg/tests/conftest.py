import numpy as np
import pytest

from charval.models import pencil_charvals, polynomial_family

ACCEPTANCE = {}


def record(n, ok, detail):
    """Store the outcome of acceptance criterion ``n`` for the terminal summary."""
    ACCEPTANCE[n] = (bool(ok), detail)
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} | {detail}"
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} | {detail}")


def random_poly(rng, dim, degree=1, scale=1.0):
    """Random matrix polynomial coefficients ``A(z) = sum z^k C_k``."""
    out = []
    for k in range(degree + 1):
        C = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2 * dim)
        out.append(scale * C / (k + 1))
    return tuple(out)


def safe_circle(rng, coeffs, gap=0.05, tries=500, origin_gap=0.0, spread=0.5):
    """A circle (center, radius) whose distance to every characteristic value exceeds ``gap * radius``."""
    vals = pencil_charvals(coeffs)
    for _ in range(tries):
        c = complex(rng.uniform(-spread, spread), rng.uniform(-spread, spread))
        r = rng.uniform(0.2, 1.2)
        if abs(c) <= r * (1 + gap) or abs(c) - r < origin_gap:
            continue  # keep z = 0 outside the disk as well as off the circle
        if vals.size == 0 or np.min(np.abs(np.abs(vals - c) - r)) > gap * r:
            return c, r, int(np.sum(np.abs(vals - c) < r))
    raise RuntimeError("no admissible circle")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_family(rng):
    coeffs = random_poly(rng, 5, 1)
    return coeffs, polynomial_family(coeffs)
