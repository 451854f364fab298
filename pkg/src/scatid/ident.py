"""Scattering-function identification from echo second-order statistics.

Pipeline: lag statistics ``Pi`` (exact or empirical) -> Doppler-side DFT
``S_r`` over lags congruent to r mod J -> frame inversion ``C = V S``.

Lags are stored as a single index ``n = m*J + r`` (mod ``J*n_g``); the
split into ``(m, r)`` happens only inside :func:`s_transform`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import EchoEnsemble, TrueACF, echo_covariance, response_matrix, true_acf
from .gabor import FrameMatrices, WeightSequence, build_frame_matrices
from .grid import Cover, Grid, ScatteringFunction, _readonly

IMAG_TOL = 1e-9


def pi_normalizer(grid: Grid) -> float:
    """Constant K with ``E[conj(y[s + n*n_t]) * y[s]] = K * Pi[n, s]``.

    Each echo sample carries one factor ``dg`` from the Doppler sum and
    each spreading coefficient has variance ``C*dt*dg``; against the ACF
    (which carries one ``dg``) that leaves ``K = dg**2 * dt``.
    """
    return grid.dg**2 * grid.dt


@dataclass(frozen=True)
class PiTable:
    """``values[n, s]``: echo second moment at lag ``n*T``, intra-period sample s."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        shape = (self.grid.n_periods, self.grid.n_t)
        if v.shape != shape:
            raise ValueError(f"Pi table shape {v.shape} != {shape}")
        object.__setattr__(self, "values", _readonly(v))


@dataclass(frozen=True)
class STable:
    """``values[r - 1, s, q]`` for r = 1..J."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        g = self.grid
        if v.shape != (g.J, g.n_t, g.n_g):
            raise ValueError(f"S table shape {v.shape} != {(g.J, g.n_t, g.n_g)}")
        object.__setattr__(self, "values", _readonly(v))


def pi_from_acf(acf: TrueACF, w: WeightSequence) -> PiTable:
    """``Pi_n(s) = sum_k conj(c_{k+n}) c_k P_h(n*T, s - k*T)``.

    ``P_h`` vanishes outside the bounding region, so only ``k = -a`` for
    delay cells ``a`` contributes.
    """
    g = acf.grid
    n = np.arange(g.n_periods)
    Pi = np.zeros((g.n_periods, g.n_t), dtype=complex)
    for a in range(g.n_a):
        weight = np.conj(w[n - a]) * w[-a]
        Pi += weight[:, None] * acf.P_h[:, a * g.n_t:(a + 1) * g.n_t]
    return PiTable(g, Pi)


def pi_hat_per_echo(echoes: EchoEnsemble) -> np.ndarray:
    """Single-echo lag statistics, shape ``(L, J*n_g, n_t)``."""
    g = echoes.grid
    if echoes.L < 1:
        raise ValueError("empty echo ensemble")
    y = echoes.y
    s = np.arange(g.n_t)
    lagged = (s[None, :] + np.arange(g.n_periods)[:, None] * g.n_t) % g.n_total
    return np.conj(y[:, lagged]) * y[:, None, :g.n_t] / pi_normalizer(g)


def _pairwise_mean(x: np.ndarray) -> np.ndarray:
    # numpy sums pairwise along the contiguous last axis only
    moved = np.ascontiguousarray(np.moveaxis(x, 0, -1))
    return moved.sum(axis=-1) / x.shape[0]


def pi_hat(echoes: EchoEnsemble) -> PiTable:
    """Empirical lag statistics averaged over the ensemble (unbiased for Pi)."""
    if echoes.L < 1:
        raise ValueError("empty echo ensemble")
    return PiTable(echoes.grid, _pairwise_mean(pi_hat_per_echo(echoes)))


def _s_values(pi: np.ndarray, grid: Grid) -> np.ndarray:
    """S transform of ``pi[..., n, s]`` -> ``[..., r-1, s, q]``."""
    J, P = grid.J, grid.n_periods
    r = np.arange(1, J + 1)
    lag = np.arange(grid.n_g)[:, None] * J + r[None, :]          # [m, r-1]
    q = np.arange(grid.n_g)
    phase = np.exp(2j * np.pi * ((lag[:, :, None] * q) % P) / P)  # [m, r-1, q]
    picked = pi[..., lag % P, :]                                  # [..., m, r-1, s]
    return np.einsum("mrq,...mrs->...rsq", phase, picked) / grid.B


def s_transform(pi: PiTable) -> STable:
    return STable(pi.grid, _s_values(pi.values, pi.grid))


def _raw_patches(S: np.ndarray, fm: FrameMatrices) -> np.ndarray:
    return np.einsum("jr,...rsq->...jsq", fm.V, S)


def reconstruct(s: STable, fm: FrameMatrices, cover: Cover, clamp: bool = False) -> ScatteringFunction:
    """Apply V to the S-vector at every (s, q).

    Without ``clamp`` (the exact path) the imaginary parts and the padding
    cells must vanish to ``IMAG_TOL`` relative to the largest value; they
    are then dropped.  With ``clamp`` (the estimator path) the real part is
    clipped at zero and padding cells are zeroed.
    """
    raw = _raw_patches(s.values, fm)
    return _to_scattering(raw, s.grid, cover, clamp)


def _to_scattering(raw: np.ndarray, grid: Grid, cover: Cover, clamp: bool) -> ScatteringFunction:
    raw = raw.copy()
    if clamp:
        values = np.maximum(raw.real, 0.0)
    else:
        scale = np.abs(raw).max(initial=0.0)
        imag = np.abs(raw.imag).max(initial=0.0)
        if imag > IMAG_TOL * scale:
            raise ValueError(f"reconstruction has imaginary residue {imag:.3e} (scale {scale:.3e})")
        pad = np.abs(raw[cover.occupied:]).max(initial=0.0)
        if pad > IMAG_TOL * scale:
            raise ValueError(f"reconstruction puts mass {pad:.3e} in padding cells")
        values = raw.real
    values[cover.occupied:] = 0.0
    return ScatteringFunction(grid, cover, values)


def identify_oracle(sf_true: ScatteringFunction, w: WeightSequence,
                    fm: FrameMatrices | None = None) -> ScatteringFunction:
    """Recover C from exact second-order statistics of the echo."""
    if fm is None:
        fm = build_frame_matrices(w, sf_true.cover)
    pi = pi_from_acf(true_acf(sf_true), w)
    return reconstruct(s_transform(pi), fm, sf_true.cover)


def estimate_raw(echoes: EchoEnsemble, w: WeightSequence, cover: Cover,
                 fm: FrameMatrices | None = None) -> np.ndarray:
    """Unclamped complex patch estimates, shape ``(J, n_t, n_g)``."""
    if fm is None:
        fm = build_frame_matrices(w, cover)
    return _raw_patches(s_transform(pi_hat(echoes)).values, fm)


def estimate(echoes: EchoEnsemble, w: WeightSequence, cover: Cover,
             fm: FrameMatrices | None = None) -> ScatteringFunction:
    """Clamped estimate of C from an echo ensemble."""
    return _to_scattering(estimate_raw(echoes, w, cover, fm), echoes.grid, cover, clamp=True)


def estimate_per_echo(echoes: EchoEnsemble, fm: FrameMatrices) -> np.ndarray:
    """Raw single-echo estimates ``(L, J, n_t, n_g)``; their mean is :func:`estimate_raw`."""
    return _raw_patches(_s_values(pi_hat_per_echo(echoes), echoes.grid), fm)


def pihat_covariance_exact(sf: ScatteringFunction, w: WeightSequence, m1: int, m2: int,
                           r: int, s: int, L: int = 1) -> complex:
    """``Cov(Pihat_{m1*J+r}[s], Pihat_{m2*J+r}[s])`` for an L-echo average.

    With ``u_i = y[s + n_i*n_t]`` and ``v = y[s]``, Isserlis splits
    ``E[conj(u1) v u2 conj(v)]`` into three pairings.  The first is the
    product of means and cancels; the second is ``E[conj(u1) u2] E|v|^2``;
    the third involves pseudo-covariances ``E[y y]``, which vanish for the
    proper sampler but are kept explicit.
    """
    g = sf.grid
    P = g.n_periods
    x1 = (s + ((m1 * g.J + r) % P) * g.n_t) % g.n_total
    x2 = (s + ((m2 * g.J + r) % P) * g.n_t) % g.n_total
    R = echo_covariance(sf, w)
    Phi = response_matrix(g, sf.cover, w).reshape(g.n_total, -1)
    pseudo_var = np.zeros(Phi.shape[1])  # E[eta**2] = 0 (proper)
    Q = (Phi * pseudo_var) @ Phi.T       # E[y[x] y[x2]]
    I2 = R[x1, x2] * R[s, s]
    I3 = np.conj(Q[x1, s]) * Q[s, x2]
    return complex((I2 + I3) / (pi_normalizer(g) ** 2 * L))
