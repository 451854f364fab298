"""Discrete WSSUS channel: spreading draws, delta-train echoes, exact moments.

Conventions on the circular axis of ``N = J*n_g*n_t`` samples (sample x is
time ``x*dt``):

* ``eta[j, s, q]`` weights the shift by delay ``(a_j*n_t + s)*dt`` and
  Doppler ``(b_j*n_g + q)*dg``, with ``E|eta|^2 = C*dt*dg`` and
  ``E[eta^2] = 0``.
* ``h(x, d) = dg * sum_g eta[d, g] * exp(2*pi*i*g*x/N)``.
* The sounding train puts weight ``c_{k mod J}`` at sample ``k*n_t``, so
  ``y[x] = sum_k c_k h(x, x - k*n_t)``.

Every Doppler frequency is an integer multiple of ``1/(N*dt)``, so all
phases are exactly periodic on the axis and no edge effects arise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gabor import WeightSequence, make_rng
from .grid import Cover, Grid, ScatteringFunction, _readonly

_CHUNK = 4096


@dataclass(frozen=True)
class SpreadingRealization:
    grid: Grid
    cover: Cover
    eta: np.ndarray = field(repr=False)

    def __post_init__(self):
        g = self.grid
        eta = np.asarray(self.eta, dtype=complex)
        if eta.shape != (g.J, g.n_t, g.n_g):
            raise ValueError(f"eta shape {eta.shape} != {(g.J, g.n_t, g.n_g)}")
        object.__setattr__(self, "eta", _readonly(eta))


@dataclass(frozen=True)
class EchoEnsemble:
    """``y[l, x]``: L received echoes on the circular axis."""

    grid: Grid
    y: np.ndarray = field(repr=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=complex)
        if y.ndim == 1:
            y = y[None, :]
        if y.ndim != 2 or y.shape[1] != self.grid.n_total:
            raise ValueError(f"echo array shape {y.shape} incompatible with N={self.grid.n_total}")
        if not np.all(np.isfinite(y)):
            raise ValueError("echoes must be finite")
        object.__setattr__(self, "y", _readonly(y))

    @property
    def L(self) -> int:
        return self.y.shape[0]


def _stddev(sf: ScatteringFunction) -> np.ndarray:
    return np.sqrt(sf.values * sf.grid.dt * sf.grid.dg / 2.0)


def _draw(sf: ScatteringFunction, rng: np.random.Generator, L: int | None) -> np.ndarray:
    g = sf.grid
    shape = (2, g.J, g.n_t, g.n_g) if L is None else (L, 2, g.J, g.n_t, g.n_g)
    z = rng.standard_normal(shape)
    return _stddev(sf) * (z[..., 0, :, :, :] + 1j * z[..., 1, :, :, :])


def sample_spreading(sf: ScatteringFunction, seed: int) -> SpreadingRealization:
    """One proper complex Gaussian draw of the spreading function."""
    return SpreadingRealization(sf.grid, sf.cover, _draw(sf, make_rng(seed), None))


def sample_spreading_batch(sf: ScatteringFunction, rng: np.random.Generator, L: int) -> np.ndarray:
    """``L`` independent draws, shape ``(L, J, n_t, n_g)``, consumed from ``rng`` in order.

    Realization 0 drawn from a fresh ``PCG64(seed)`` equals
    ``sample_spreading(sf, seed).eta``.
    """
    return _draw(sf, rng, L)


def _doppler_phases(grid: Grid, cover: Cover) -> np.ndarray:
    """``exp(2*pi*i*g*x/N)`` indexed ``[j, n, s, q]`` with ``x = n*n_t + s``."""
    N = grid.n_total
    x = (np.arange(grid.n_periods)[:, None] * grid.n_t + np.arange(grid.n_t)[None, :])
    gq = cover.b[:, None] * grid.n_g + np.arange(grid.n_g)[None, :]
    prod = (gq[:, None, None, :] * x[None, :, :, None]) % N
    return np.exp(2j * np.pi * prod / N)


def _train_weights(grid: Grid, cover: Cover, w: WeightSequence) -> np.ndarray:
    """``c_{(n - a_j) mod J}`` indexed ``[j, n]``: the pulse that hits cell j in period n."""
    n = np.arange(grid.n_periods)
    return w[n[None, :] - cover.a[:, None]]


def sound_batch(eta: np.ndarray, grid: Grid, cover: Cover, w: WeightSequence) -> np.ndarray:
    """Echoes of a stack of spreading arrays ``(..., J, n_t, n_g) -> (..., N)``."""
    if w.J != grid.J:
        raise ValueError(f"weights have J={w.J}, grid has J={grid.J}")
    phases = _doppler_phases(grid, cover)
    cw = _train_weights(grid, cover, w)
    y = np.einsum("...jsq,jnsq,jn->...ns", eta, phases, cw) * grid.dg
    return y.reshape(*y.shape[:-2], grid.n_total)


def sound(real: SpreadingRealization, w: WeightSequence) -> EchoEnsemble:
    return EchoEnsemble(real.grid, sound_batch(real.eta, real.grid, real.cover, w))


def simulate_echoes(sf: ScatteringFunction, w: WeightSequence, L: int, seed: int) -> EchoEnsemble:
    """``L`` i.i.d. echoes; realizations are drawn in order from one PCG64(seed) stream."""
    if L < 1:
        raise ValueError(f"need at least one echo, got L={L}")
    rng = make_rng(seed)
    out = []
    for start in range(0, L, _CHUNK):
        eta = sample_spreading_batch(sf, rng, min(_CHUNK, L - start))
        out.append(sound_batch(eta, sf.grid, sf.cover, w))
    return EchoEnsemble(sf.grid, np.concatenate(out, axis=0))


@dataclass(frozen=True)
class TrueACF:
    """Exact autocorrelation of the time-varying impulse response.

    ``P_hj[j, n, s]`` is the patch ACF at lag ``n*T`` and delay ``s*dt``;
    ``P_h[n, d]`` is the composite ACF at lag ``n*T`` and delay ``d*dt``
    over the bounding region, ``n`` running over the ``J*n_g`` periods.
    """

    grid: Grid
    cover: Cover
    P_hj: np.ndarray = field(repr=False)
    P_h: np.ndarray = field(repr=False)


def true_acf(sf: ScatteringFunction) -> TrueACF:
    g, cover = sf.grid, sf.cover
    P = g.n_periods
    n = np.arange(P)
    q = np.arange(g.n_g)
    local = np.exp(-2j * np.pi * ((np.outer(n, q)) % P) / P)
    P_hj = np.einsum("nq,jsq->jns", local, sf.values) * g.dg
    P_h = np.zeros((P, g.n_a * g.n_t), dtype=complex)
    for j, (a, b) in enumerate(cover.cells):
        shift = np.exp(-2j * np.pi * ((b * n) % g.J) / g.J)
        P_h[:, a * g.n_t:(a + 1) * g.n_t] += shift[:, None] * P_hj[j]
    return TrueACF(g, cover, _readonly(P_hj), _readonly(P_h))


def response_matrix(grid: Grid, cover: Cover, w: WeightSequence) -> np.ndarray:
    """Echo sample response to each spreading coefficient, ``Phi[x, j, s, q]``.

    Built straight from the delta train ``sum_k c_k delta[x - k*n_t]`` and
    the channel sum, independently of :func:`sound`.
    """
    N = grid.n_total
    train = np.zeros(N, dtype=complex)
    train[::grid.n_t] = w[np.arange(grid.n_periods)]
    Phi = np.zeros((N, grid.J, grid.n_t, grid.n_g), dtype=complex)
    x = np.arange(N)
    for j, (a, b) in enumerate(cover.cells):
        for s in range(grid.n_t):
            d = a * grid.n_t + s
            pulse = train[(x - d) % N]
            for q in range(grid.n_g):
                gq = b * grid.n_g + q
                Phi[:, j, s, q] = grid.dg * np.exp(2j * np.pi * ((gq * x) % N) / N) * pulse
    return Phi


def echo_covariance(sf: ScatteringFunction, w: WeightSequence) -> np.ndarray:
    """``R[x, x2] = E[conj(y[x]) * y[x2]]`` summed over all spreading coefficients."""
    g = sf.grid
    Phi = response_matrix(g, sf.cover, w).reshape(g.n_total, -1)
    var = (sf.values * g.dt * g.dg).ravel()
    return (np.conj(Phi) * var) @ Phi.T
