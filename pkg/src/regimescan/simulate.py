"""Synthetic panels and firm cohorts with known ground truth.

These generators exist so the pipelines can be exercised end-to-end against
fixtures where the true graph path or the true changepoint locations are
known exactly. All randomness flows from explicit seeds through
``numpy.random.SeedSequence``; no global RNG is touched.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .changepoint import FirmSeries
from .errors import DataValidationError
from .io import FACTOR_COLUMNS

# Component tags for per-generator seed derivation.
_SEED_CONTAGION = 1
_SEED_FIRMS = 2


def _component_rng(seed, tag):
    if seed < 0:
        raise DataValidationError("seed must be nonnegative")
    return np.random.default_rng(np.random.SeedSequence((int(seed), tag)))


def chain_precision(p, partial=0.45, blocks=None) -> np.ndarray:
    """Block-banded precision matrix: a chain of strength ``partial`` inside
    each block, zeros everywhere else. Diagonally dominant for |partial| < 0.5,
    hence positive definite."""
    if not 0 <= abs(partial) < 0.5:
        raise DataValidationError("chain strength must satisfy |partial| < 0.5")
    blocks = blocks or (p,)
    if sum(blocks) != p:
        raise DataValidationError(f"block sizes {blocks} do not sum to p={p}")
    omega = np.eye(p)
    offset = 0
    for size in blocks:
        for i in range(offset, offset + size - 1):
            omega[i, i + 1] = omega[i + 1, i] = -partial
        offset += size
    return omega


def flip_edge(precision, i, j) -> np.ndarray:
    """Copy of ``precision`` with the (i, j) entry's sign flipped."""
    out = np.array(precision, dtype=float, copy=True)
    if out[i, j] == 0:
        raise DataValidationError(f"({i}, {j}) is not an edge; nothing to flip")
    out[i, j] = -out[i, j]
    out[j, i] = -out[j, i]
    return out


def _check_precision(matrix, p, where):
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (p, p):
        raise DataValidationError(f"{where}: precision must be {p}x{p}, got {matrix.shape}")
    if not np.allclose(matrix, matrix.T):
        raise DataValidationError(f"{where}: precision must be symmetric")
    if np.linalg.eigvalsh(matrix)[0] <= 0:
        raise DataValidationError(f"{where}: precision must be positive definite")
    return matrix


@dataclass(frozen=True)
class ContagionSim:
    """Two-or-more-regime Gaussian panel specification.

    ``precisions`` holds one symmetric positive-definite matrix per regime;
    ``regime_lengths`` the number of trading days drawn from each. Factor
    columns are always emitted (iid standard normal) with loadings of scale
    ``factor_loading_scale`` so the four-factor regression step has something
    real to strip; set the scale to 0 for a pure-noise factor block.
    """

    n_series: int = 10
    regime_lengths: tuple = (300, 300)
    precisions: tuple = None
    factor_loading_scale: float = 0.5

    def __post_init__(self):
        if self.n_series < 2:
            raise DataValidationError("need at least 2 series")
        if len(self.regime_lengths) < 1 or any(t < 1 for t in self.regime_lengths):
            raise DataValidationError("regime lengths must be positive")
        if self.factor_loading_scale < 0:
            raise DataValidationError("factor loading scale must be nonnegative")
        precisions = self.precisions
        if precisions is None:
            base = chain_precision(self.n_series, 0.45, blocks=self._default_blocks())
            precisions = [base]
            for _ in range(len(self.regime_lengths) - 1):
                precisions.append(flip_edge(precisions[-1], 0, 1))
        checked = tuple(
            _check_precision(m, self.n_series, f"regime {r}") for r, m in enumerate(precisions)
        )
        if len(checked) != len(self.regime_lengths):
            raise DataValidationError("need one precision matrix per regime")
        object.__setattr__(self, "precisions", checked)
        object.__setattr__(self, "regime_lengths", tuple(int(t) for t in self.regime_lengths))

    def _default_blocks(self):
        half = self.n_series // 2
        return (half, self.n_series - half)


def simulate_contagion(sim, seed=0):
    """Draw a dated return panel from the regime-wise Gaussian model.

    Returns ``(panel, truth)``: a frame carrying the four factor columns plus
    the simulated series, and a dict with the per-regime precisions,
    adjacencies and boundaries plus the planted factor loadings.
    """
    rng = _component_rng(seed, _SEED_CONTAGION)
    p = sim.n_series
    total = sum(sim.regime_lengths)

    factors = rng.standard_normal((total, 4))
    loadings = sim.factor_loading_scale * rng.uniform(0.25, 1.0, size=(p, 4))
    loadings *= rng.choice([-1.0, 1.0], size=(p, 4))

    pieces = []
    for length, precision in zip(sim.regime_lengths, sim.precisions):
        chol = np.linalg.cholesky(precision)
        z = rng.standard_normal((p, length))
        pieces.append(np.linalg.solve(chol.T, z).T)
    noise = np.vstack(pieces)
    returns = factors @ loadings.T + noise

    dates = pd.bdate_range("2006-01-02", periods=total)
    labels = [f"s{i:02d}" for i in range(p)]
    panel = pd.DataFrame(factors, index=dates, columns=list(FACTOR_COLUMNS))
    panel[labels] = returns

    boundaries = np.cumsum((0,) + sim.regime_lengths)
    truth = {
        "schema_version": 1,
        "series": labels,
        "factor_loadings": loadings.tolist(),
        "regimes": [
            {
                "start": int(boundaries[r]),
                "length": int(sim.regime_lengths[r]),
                "precision": np.asarray(sim.precisions[r]).tolist(),
                "adjacency": (np.abs(sim.precisions[r]) > 1e-12).astype(int).tolist(),
            }
            for r in range(len(sim.regime_lengths))
        ],
    }
    for regime in truth["regimes"]:
        for i in range(p):
            regime["adjacency"][i][i] = 0
    return panel, truth


@dataclass(frozen=True)
class FirmSim:
    """Cohort specification for the piecewise-constant performance model.

    ``n_signal`` firms get a level shift of ``jump_size`` (alternating sign)
    at a year drawn from ``changepoint_years`` (or uniformly over the interior
    when None); the rest stay at the benchmark. Signal firms always keep the
    two years straddling their shift observed so the truth is identifiable.
    """

    n_firms: int = 200
    n_years: int = 30
    n_obs: int = 25
    n_signal: int = 0
    jump_size: float = 3.0
    noise_sd: float = 0.5
    changepoint_years: tuple = None

    def __post_init__(self):
        if self.n_firms < 1:
            raise DataValidationError("need at least one firm")
        if not 2 <= self.n_obs <= self.n_years:
            raise DataValidationError("need 2 <= n_obs <= n_years")
        if not 0 <= self.n_signal <= self.n_firms:
            raise DataValidationError("n_signal must lie in [0, n_firms]")
        if self.noise_sd <= 0:
            raise DataValidationError("noise_sd must be positive")
        if self.changepoint_years is not None:
            years = tuple(int(k) for k in self.changepoint_years)
            if any(not 1 <= k <= self.n_years - 1 for k in years):
                raise DataValidationError("changepoint years must be interior: 1 <= k <= n - 1")
            object.__setattr__(self, "changepoint_years", years)


def simulate_firms(sim, seed=0):
    """Draw a cohort of firm series plus its ground truth.

    Returns ``(firms, truth)`` where truth maps firm ids to their planted
    changepoint year (0 for null firms) and jump size.
    """
    rng = _component_rng(seed, _SEED_FIRMS)
    years = np.arange(1, sim.n_years + 1)
    firms, truth_rows = [], {}
    for i in range(sim.n_firms):
        firm_id = f"firm{i:04d}"
        is_signal = i < sim.n_signal and sim.jump_size != 0.0
        if is_signal:
            if sim.changepoint_years:
                split = sim.changepoint_years[i % len(sim.changepoint_years)]
            else:
                lo, hi = max(1, sim.n_years // 6), sim.n_years - max(1, sim.n_years // 6)
                split = int(rng.integers(lo, hi + 1))
            jump = sim.jump_size if i % 2 == 0 else -sim.jump_size
            must_keep = {split, split + 1}
            pool = np.array(sorted(set(years) - must_keep))
            extra = rng.choice(pool, size=sim.n_obs - len(must_keep), replace=False)
            times = np.sort(np.concatenate([list(must_keep), extra]))
            level = np.where(times > split, jump, 0.0)
        else:
            split, jump = 0, 0.0
            times = np.sort(rng.choice(years, size=sim.n_obs, replace=False))
            level = np.zeros(len(times))
        values = level + sim.noise_sd * rng.standard_normal(len(times))
        firms.append(FirmSeries(firm_id, times, values))
        truth_rows[firm_id] = {"changepoint": int(split), "jump": float(jump)}
    truth = {"schema_version": 1, "n_years": sim.n_years, "firms": truth_rows}
    return firms, truth
