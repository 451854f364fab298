"""Monte Carlo bias/variance harness for the echo-based estimator."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import simulate_echoes
from .gabor import FrameMatrices, WeightSequence, build_frame_matrices
from .grid import Cover, Grid, ScatteringFunction
from .ident import _pairwise_mean, estimate_per_echo

SIGMA_BAND = 5.0
SCALING_FACTOR_TOL = 1.5


def variance_bound(fm: FrameMatrices, grid: Grid, L: int, sf: ScatteringFunction,
                   norm: str = "spectral") -> float:
    """``4 ||V||^2 J^2 ||C||_2^2 / (L B^2)``; ``norm`` is ``"spectral"`` or ``"frobenius"``."""
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    v = fm.V_norm if norm == "spectral" else float(np.linalg.norm(fm.V, "fro"))
    return 4.0 * v**2 * grid.J**2 * sf.norm2_squared() / (L * grid.B**2)


def trial_seed(master_seed: int, trial: int, stream: int = 0) -> int:
    """Seed of one trial: SeedSequence([master, trial, stream]) -> first uint64 word."""
    ss = np.random.SeedSequence([int(master_seed) % 2**64, trial, stream])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class _TrialBatch:
    means: np.ndarray          # (trials, J, n_t, n_g) complex
    within_var: np.ndarray     # (trials,) cover-averaged variance of the trial estimate


def _run_trials(sf, w, fm, L, trials, master_seed, stream, threads) -> _TrialBatch:
    def one(i):
        ens = simulate_echoes(sf, w, L, trial_seed(master_seed, i, stream))
        per = estimate_per_echo(ens, fm)
        mean = _pairwise_mean(per)
        if L > 1:
            spread = _pairwise_mean(np.abs(per - mean) ** 2) * L / (L - 1)
        else:
            spread = np.zeros(mean.shape)
        return mean, float(np.mean(spread) / L)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(trials)))
    else:
        results = [one(i) for i in range(trials)]
    return _TrialBatch(np.stack([m for m, _ in results]), np.array([v for _, v in results]))


def _across_trial_variance(means: np.ndarray) -> np.ndarray:
    centred = means - _pairwise_mean(means)
    return _pairwise_mean(np.abs(centred) ** 2) * means.shape[0] / (means.shape[0] - 1)


@dataclass
class MCReport:
    J: int
    T: float
    n_t: int
    n_g: int
    L: int
    trials: int
    seed: int
    truth: np.ndarray = field(repr=False)
    mean: np.ndarray = field(repr=False)
    variance: np.ndarray = field(repr=False)
    trial_variance: np.ndarray = field(repr=False)
    bound: float
    bound_frobenius: float
    L_scaled: int
    scaling_trials: int
    variance_scaled: np.ndarray = field(repr=False)

    @property
    def bias(self) -> np.ndarray:
        return self.mean - self.truth

    @property
    def standard_error(self) -> np.ndarray:
        return np.sqrt(self.variance / self.trials)

    @property
    def bias_ok(self) -> np.ndarray:
        return np.abs(self.bias) <= SIGMA_BAND * self.standard_error

    @property
    def cover_averaged_variance(self) -> float:
        return float(np.mean(self.variance))

    @property
    def slack_ratio(self) -> float:
        return self.cover_averaged_variance / self.bound if self.bound > 0 else float("nan")

    @property
    def bound_pass_count(self) -> int:
        """Trials whose own variance estimate lies strictly below the bound."""
        if self.bound == 0:
            return int(np.sum(self.trial_variance == 0))
        return int(np.sum(self.trial_variance < self.bound))

    @property
    def scaling_ratio(self) -> float:
        scaled = float(np.mean(self.variance_scaled))
        if scaled == 0:
            return float("nan")
        return self.cover_averaged_variance / scaled

    @property
    def scaling_ok(self) -> bool:
        f = self.L_scaled / self.L
        r = self.scaling_ratio
        if np.isnan(r):
            return self.cover_averaged_variance == 0
        return f / SCALING_FACTOR_TOL <= r <= f * SCALING_FACTOR_TOL


def monte_carlo(sf_true: ScatteringFunction, w: WeightSequence, cover: Cover, L: int,
                trials: int, seed: int, scale: int = 4, scaling_trials: int | None = None,
                threads: int = 1) -> MCReport:
    """Repeat the estimator over independent L-echo ensembles.

    Bias and per-point variance come from the spread across ``trials``.
    Each trial also estimates its own variance from the spread of its L
    single-echo estimates; those are what get compared with the bound.
    A second run at ``scale * L`` (``scaling_trials`` trials) checks the
    1/L decay.
    """
    if trials < 2:
        raise ValueError(f"need at least 2 trials, got {trials}")
    if cover != sf_true.cover:
        raise ValueError("cover does not match the scattering function's cover")
    g = sf_true.grid
    fm = build_frame_matrices(w, cover)
    base = _run_trials(sf_true, w, fm, L, trials, seed, 0, threads)
    n_scaled = trials if scaling_trials is None else scaling_trials
    scaled = _run_trials(sf_true, w, fm, scale * L, n_scaled, seed, 1, threads)
    return MCReport(
        J=g.J, T=g.T, n_t=g.n_t, n_g=g.n_g, L=L, trials=trials, seed=seed,
        truth=np.array(sf_true.values),
        mean=_pairwise_mean(base.means),
        variance=_across_trial_variance(base.means),
        trial_variance=base.within_var,
        bound=variance_bound(fm, g, L, sf_true),
        bound_frobenius=variance_bound(fm, g, L, sf_true, norm="frobenius"),
        L_scaled=scale * L,
        scaling_trials=n_scaled,
        variance_scaled=_across_trial_variance(scaled.means),
    )
