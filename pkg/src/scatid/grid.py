"""Delay-Doppler discretization, cell covers and patch bookkeeping.

The continuous delay-Doppler plane is replaced by a finite lattice.  A cell
is a T x B rectangle with J*B*T = 1; each cell holds ``n_t`` delay samples
and ``n_g`` Doppler samples.  The bounding region is ``n_a`` cells long in
delay and ``n_b`` cells wide in Doppler, anchored at the origin.

The time axis is circular with ``J * n_g`` periods of length T, so the
Doppler sample spacing ``dg`` coincides with the DFT spacing of the axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def smallest_divisor(n: int) -> int:
    """Smallest divisor d > 1 of ``n`` by trial division (``n`` if prime)."""
    if n < 2:
        raise ValueError(f"{n} has no prime divisor")
    d = 2
    while d * d <= n:
        if n % d == 0:
            return d
        d += 1
    return n


def is_prime(n: int) -> bool:
    return n >= 2 and smallest_divisor(n) == n


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Grid:
    J: int
    T: float
    n_t: int
    n_g: int
    n_a: int
    n_b: int

    def __post_init__(self):
        for name in ("J", "n_t", "n_g", "n_a", "n_b"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if not is_prime(self.J):
            if self.J < 2:
                raise ValueError(f"J={self.J} is not prime")
            d = smallest_divisor(self.J)
            raise ValueError(f"J={self.J} = {d}·{self.J // d} not prime")
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"T must be a positive finite number, got {self.T!r}")

    @property
    def B(self) -> float:
        """Doppler cell width, always 1/(J*T)."""
        return 1.0 / (self.J * self.T)

    @property
    def dt(self) -> float:
        return self.T / self.n_t

    @property
    def dg(self) -> float:
        return 1.0 / (self.J * self.n_g * self.T)

    @property
    def n_periods(self) -> int:
        """Number of delta-train periods on the circular axis."""
        return self.J * self.n_g

    @property
    def n_total(self) -> int:
        return self.J * self.n_g * self.n_t

    @property
    def box_area(self) -> float:
        """Area of the bounding region in units of B*T = 1/J."""
        return self.n_a * self.n_b / self.J

    def delays(self, a: int) -> np.ndarray:
        """Delay values (seconds) of the samples in delay cell ``a``."""
        return (a * self.n_t + np.arange(self.n_t)) * self.dt

    def dopplers(self, b: int) -> np.ndarray:
        """Doppler values (Hz) of the samples in Doppler cell ``b``."""
        return (b * self.n_g + np.arange(self.n_g)) * self.dg


@dataclass(frozen=True)
class Cover:
    """J distinct cells ``(a_j, b_j)``; the first ``occupied`` carry mass."""

    cells: tuple[tuple[int, int], ...]
    occupied: int

    def __post_init__(self):
        cells = tuple((int(a), int(b)) for a, b in self.cells)
        object.__setattr__(self, "cells", cells)
        if len(set(cells)) != len(cells):
            raise ValueError(f"cover cells are not distinct: {cells}")
        if not 0 <= self.occupied <= len(cells):
            raise ValueError(f"occupied={self.occupied} outside [0, {len(cells)}]")
        if any(a < 0 or b < 0 for a, b in cells):
            raise ValueError("cover cell indices must be nonnegative")

    @property
    def J(self) -> int:
        return len(self.cells)

    @property
    def a(self) -> np.ndarray:
        return np.array([c[0] for c in self.cells], dtype=np.int64)

    @property
    def b(self) -> np.ndarray:
        return np.array([c[1] for c in self.cells], dtype=np.int64)

    def occupied_area(self) -> float:
        return self.occupied / self.J

    def check_grid(self, grid: Grid) -> None:
        if self.J != grid.J:
            raise ValueError(f"cover has {self.J} cells but grid has J={grid.J}")
        for a, b in self.cells:
            if a >= grid.n_a or b >= grid.n_b:
                raise ValueError(f"cell ({a},{b}) outside the {grid.n_a}x{grid.n_b} box")


def build_grid(J: int, T: float, n_t: int, n_g: int, n_a: int, n_b: int) -> Grid:
    return Grid(J=J, T=float(T), n_t=n_t, n_g=n_g, n_a=n_a, n_b=n_b)


def build_cover(grid: Grid, mask) -> Cover:
    """Cover the true cells of an ``n_a x n_b`` mask, padded to J cells.

    Occupied cells come first in row-major order; padding uses the
    lexicographically smallest unused cells of the box.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (grid.n_a, grid.n_b):
        raise ValueError(f"mask shape {mask.shape} != ({grid.n_a}, {grid.n_b})")
    true_cells = [tuple(map(int, ab)) for ab in np.argwhere(mask)]
    if len(true_cells) > grid.J:
        raise ValueError(
            f"mask has {len(true_cells)} occupied cells but J={grid.J}; "
            "raise J or coarsen the mask"
        )
    if grid.n_a * grid.n_b < grid.J:
        raise ValueError(f"box of {grid.n_a}x{grid.n_b} cells cannot hold J={grid.J} cells")
    cells = list(true_cells)
    used = set(cells)
    for a in range(grid.n_a):
        for b in range(grid.n_b):
            if len(cells) == grid.J:
                break
            if (a, b) not in used:
                cells.append((a, b))
    return Cover(cells=tuple(cells), occupied=len(true_cells))


@dataclass(frozen=True)
class ScatteringFunction:
    """Nonnegative scattering function stored per cover cell.

    ``values[j, s, q]`` is C at delay ``(a_j*n_t + s)*dt`` and Doppler
    ``(b_j*n_g + q)*dg``.  Rounding-level negatives (relative 1e-9) are
    tolerated so exact reconstructions need not be clamped.
    """

    grid: Grid
    cover: Cover
    values: np.ndarray = field(repr=False)

    NEG_TOL = 1e-9

    def __post_init__(self):
        self.cover.check_grid(self.grid)
        v = np.asarray(self.values)
        g = self.grid
        if v.shape != (g.J, g.n_t, g.n_g):
            raise ValueError(f"values shape {v.shape} != {(g.J, g.n_t, g.n_g)}")
        if np.iscomplexobj(v):
            raise TypeError("scattering function values must be real")
        v = v.astype(float)
        if not np.all(np.isfinite(v)):
            raise ValueError("scattering function has non-finite values")
        scale = np.abs(v).max(initial=0.0)
        if v.min(initial=0.0) < -self.NEG_TOL * scale:
            raise ValueError(f"scattering function has negative value {v.min():.3e}")
        if np.any(v[self.cover.occupied:] != 0):
            raise ValueError("padding cells must carry zero scattering mass")
        object.__setattr__(self, "values", _readonly(v))

    def norm2_squared(self) -> float:
        """Discrete squared L2 norm, sum of C**2 * dt * dg."""
        return float(np.sum(self.values**2) * self.grid.dt * self.grid.dg)


def assemble(sf: ScatteringFunction) -> np.ndarray:
    """Dense ``(n_a*n_t, n_b*n_g)`` array with each patch in its cell block."""
    g = sf.grid
    dense = np.zeros((g.n_a * g.n_t, g.n_b * g.n_g))
    for j, (a, b) in enumerate(sf.cover.cells):
        dense[a * g.n_t:(a + 1) * g.n_t, b * g.n_g:(b + 1) * g.n_g] = sf.values[j]
    return dense


def extract_patches(dense, grid: Grid, cover: Cover) -> ScatteringFunction:
    dense = np.asarray(dense, dtype=float)
    shape = (grid.n_a * grid.n_t, grid.n_b * grid.n_g)
    if dense.shape != shape:
        raise ValueError(f"dense array shape {dense.shape} != {shape}")
    blocks = dense.reshape(grid.n_a, grid.n_t, grid.n_b, grid.n_g)
    occupied = set(cover.cells[:cover.occupied])
    for a in range(grid.n_a):
        for b in range(grid.n_b):
            if (a, b) not in occupied and np.any(blocks[a, :, b, :] != 0):
                raise ValueError(f"nonzero mass outside the cover in cell ({a},{b})")
    values = np.stack([blocks[a, :, b, :] for a, b in cover.cells])
    return ScatteringFunction(grid, cover, values)
