import cmath

import numpy as np
import pytest

from scatid.gabor import IllConditionedFrame, build_frame_matrices, random_weights
from scatid.grid import ScatteringFunction, build_cover, build_grid

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_cover_mask(rng, n_a, n_b, count):
    mask = np.zeros(n_a * n_b, dtype=bool)
    mask[rng.choice(n_a * n_b, count, replace=False)] = True
    return mask.reshape(n_a, n_b)


def random_instance(rng, J, n_a=None, n_b=None, n_t=None, n_g=None, occupied=None, T=None):
    """Random grid/cover/scattering function with the box inside J x J cells."""
    if n_a is None:
        n_a = int(rng.integers(1, J + 1))
    if n_b is None:
        n_b = int(rng.integers(-(-J // n_a), J + 1))
    grid = build_grid(J, float(rng.uniform(0.25, 4.0)) if T is None else T,
                      n_t or int(rng.integers(1, 4)), n_g or int(rng.integers(1, 4)), n_a, n_b)
    k = occupied if occupied is not None else int(rng.integers(1, J + 1))
    cover = build_cover(grid, random_cover_mask(rng, n_a, n_b, k))
    values = np.zeros((J, grid.n_t, grid.n_g))
    values[:k] = rng.random((k, grid.n_t, grid.n_g))
    return ScatteringFunction(grid, cover, values)


def conditioned_weights(J, cover, rng, cond_max=1e6):
    while True:
        w = random_weights(J, int(rng.integers(2**63)))
        try:
            fm = build_frame_matrices(w, cover)
        except IllConditionedFrame:
            continue
        # U is the frame matrix proper, A D the one actually inverted
        if max(fm.cond, np.linalg.cond(fm.U)) < cond_max:
            return w, fm


def brute_echo_moments(sf, w):
    """``E[conj(y[x]) y[x2]]`` by expanding every spreading coefficient's echo.

    Each coefficient's echo is evaluated straight from the definitions:
    the train has weight ``c_{k mod J}`` at sample ``k*n_t``, the impulse
    response of a unit coefficient at (d, g) is ``dg*exp(2 pi i g x / N)``
    at delay d, and the echo sums the train through it.
    """
    g = sf.grid
    N = g.n_total
    R = np.zeros((N, N), dtype=complex)
    for j, (a, b) in enumerate(sf.cover.cells):
        for s in range(g.n_t):
            for q in range(g.n_g):
                var = sf.values[j, s, q] * g.dt * g.dg
                if var == 0:
                    continue
                d = a * g.n_t + s
                gq = b * g.n_g + q
                echo = np.zeros(N, dtype=complex)
                for x in range(N):
                    for k in range(g.n_periods):
                        if (x - k * g.n_t - d) % N == 0:
                            echo[x] += w.c[k % g.J] * g.dg * cmath.exp(2j * cmath.pi * ((gq * x) % N) / N)
                R += var * np.outer(np.conj(echo), echo)
    return R


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)
