"""Weighted delta-train weights and the finite Gabor system they generate.

Vectors are stored 0-indexed; component ``i`` corresponds to ``r = i + 1``
so every formula below reads with r running over 1..J.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .grid import Cover, _readonly, is_prime

RNG_NAME = f"numpy-{np.__version__}/PCG64"
COND_LIMIT = 1e10
DET_THRESHOLD = 1e-12


class IllConditionedFrame(ValueError):
    """The frame submatrix selected by a cover is (numerically) singular."""


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) % 2**64))


@dataclass(frozen=True)
class WeightSequence:
    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=complex)
        if c.ndim != 1 or not is_prime(len(c)):
            raise ValueError(f"weight sequence length must be prime, got {c.shape}")
        if not np.allclose(np.abs(c), 1.0, rtol=0, atol=1e-12):
            raise ValueError("weights must be unimodular")
        object.__setattr__(self, "c", _readonly(c))

    @property
    def J(self) -> int:
        return len(self.c)

    def __getitem__(self, k):
        return self.c[np.mod(k, self.J)]


def random_weights(J: int, seed: int) -> WeightSequence:
    """``c_k = exp(2*pi*i*u_k)`` with ``u_k`` uniform on [0, 1) from PCG64(seed)."""
    if not is_prime(J):
        raise ValueError(f"J={J} is not prime")
    u = make_rng(seed).random(J)
    return WeightSequence(np.exp(2j * np.pi * u))


def gabor_vector(w: WeightSequence, k: int, l: int) -> np.ndarray:
    """Time-frequency shift of ``c``: ``exp(-2*pi*i*r*l/J) * c_{r-k}``, r = 1..J."""
    J = w.J
    r = np.arange(1, J + 1)
    return np.exp(-2j * np.pi * ((r * l) % J) / J) * w[r - k]


def gabor_system(w: WeightSequence) -> np.ndarray:
    """All J**2 Gabor vectors as columns, ordered by (k, l) row-major."""
    J = w.J
    return np.stack([gabor_vector(w, k, l) for k in range(J) for l in range(J)], axis=1)


@dataclass(frozen=True)
class FrameMatrices:
    """Frame matrices for one cover.

    ``U`` has the Gabor vector at ``(a_j, b_j)`` as column j and ``D`` is
    ``diag(c_{-a_j})``.  ``A`` is the matrix that actually maps the patch
    vector to the S-vector, ``S = A @ D @ C``, with
    ``A[r, j] = exp(-2*pi*i*r*b_j/J) * conj(c_{r-a_j})``, i.e. the
    entrywise conjugate of the Gabor vector at ``(a_j, -b_j)``.
    ``V`` inverts ``A @ D`` and ``cond`` is its 2-norm condition number.
    """

    U: np.ndarray
    D: np.ndarray
    A: np.ndarray
    V: np.ndarray
    cond: float

    @property
    def V_norm(self) -> float:
        return float(np.linalg.norm(self.V, 2))


def build_frame_matrices(w: WeightSequence, cover: Cover) -> FrameMatrices:
    if cover.J != w.J:
        raise ValueError(f"cover has {cover.J} cells, weights have J={w.J}")
    a, b = cover.a, cover.b
    U = np.stack([gabor_vector(w, aj, bj) for aj, bj in zip(a, b)], axis=1)
    A = np.conj(np.stack([gabor_vector(w, aj, -bj) for aj, bj in zip(a, b)], axis=1))
    D = np.diag(w[-a])
    AD = A @ D
    cond = float(np.linalg.cond(AD))
    if not cond <= COND_LIMIT:
        raise IllConditionedFrame(
            f"ill-conditioned frame submatrix (cond={cond:.3e}); reseed weights"
        )
    V = np.linalg.solve(AD, np.eye(w.J))
    return FrameMatrices(_readonly(U), _readonly(D), _readonly(A), _readonly(V), cond)


@dataclass(frozen=True)
class HaarReport:
    J: int
    exhaustive: bool
    n_subsets: int
    n_singular: int
    min_abs_det: float

    @property
    def passed(self) -> bool:
        return self.n_singular == 0


def haar_check(w: WeightSequence, exhaustive_limit: int = 100_000, seed: int = 0,
               n_random: int = 1000) -> HaarReport:
    """Check that every J of the J**2 Gabor vectors are linearly independent.

    All subsets are tested when there are at most ``exhaustive_limit`` of
    them; otherwise ``n_random`` subsets drawn with PCG64(seed).
    """
    J = w.J
    G = gabor_system(w)
    total = math.comb(J * J, J)
    if total <= exhaustive_limit:
        subsets = itertools.combinations(range(J * J), J)
        exhaustive, n = True, total
    else:
        rng = make_rng(seed)
        subsets = (np.sort(rng.choice(J * J, J, replace=False)) for _ in range(n_random))
        exhaustive, n = False, n_random
    dets = np.array([abs(np.linalg.det(G[:, list(s)])) for s in subsets])
    return HaarReport(J, exhaustive, n, int(np.sum(dets <= DET_THRESHOLD)), float(dets.min()))
