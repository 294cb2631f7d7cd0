"""Closed-form changepoint marginals and the collapsed Gibbs screener.

Each firm's series is scored against every hypothesis in {0, ..., n}: 0 means
the series is pure noise around the benchmark, n means a single nonzero level
throughout, and an interior k means the level shifts between year k and year
k + 1. Conditional on a hypothesis, the level and noise variance integrate
out analytically, leaving a product of multivariate-T block densities that
can be tabulated once per firm. The sampler then only ever touches those
tables and the shared Dirichlet weight vector.

Every block density is evaluated through the rank-one closed form
``det(I + tau2 * ones) = 1 + d * tau2`` and ``y'y - tau2 * (sum y)^2 /
(1 + d * tau2)``; no dense matrix is ever built here. The scale matrix is
``(b/a) * (I + tau2 * ones)`` (the marginal of the stated normal/inverse-gamma
hierarchy; this is what makes the density a genuine scale family in (y, b)).
Degrees of freedom default to ``a + block size``, with ``df_convention="plain"``
switching to ``a``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln
from sklearn.base import BaseEstimator

from ._validation import check_probability_vector
from .errors import DataValidationError

DF_CONVENTIONS = ("shifted", "plain")


@dataclass(frozen=True)
class FirmSeries:
    """One firm's benchmarked performance values at integer observation times."""

    firm_id: str
    times: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=int)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or values.ndim != 1 or len(times) != len(values):
            raise DataValidationError(f"firm {self.firm_id}: times and values must align")
        if len(times) < 1:
            raise DataValidationError(f"firm {self.firm_id}: needs at least one observation")
        if np.any(np.diff(times) <= 0):
            raise DataValidationError(f"firm {self.firm_id}: times must be strictly increasing")
        if times[0] < 1:
            raise DataValidationError(f"firm {self.firm_id}: times must be >= 1")
        if not np.all(np.isfinite(values)):
            raise DataValidationError(f"firm {self.firm_id}: values must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class Priors:
    """Hyperparameters for the screen.

    ``a`` and ``b`` parameterize the inverse-gamma noise prior IG(a/2, b/2);
    ``tau2`` scales the level prior relative to the noise; ``alpha`` is the
    Dirichlet concentration over the n + 1 hypotheses.
    """

    a: float
    b: float
    tau2: float
    alpha: np.ndarray
    n_grid: int

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0 or self.tau2 <= 0:
            raise DataValidationError("a, b, tau2 must all be positive")
        if self.n_grid < 2:
            raise DataValidationError("need a grid of at least 2 candidate years")
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.shape != (self.n_grid + 1,):
            raise DataValidationError(
                f"alpha must have length n_grid + 1 = {self.n_grid + 1}, got {alpha.shape}"
            )
        if np.any(alpha < 0) or alpha.sum() <= 0:
            raise DataValidationError("alpha entries must be nonnegative with positive sum")
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def default(cls, n_grid, a=2.0, b=2.0, tau2=10.0, alpha_null=0.8, alpha_full=0.1) -> "Priors":
        """Default hyperparameters: IG(1, 1) noise, tau2 = 10, and a Dirichlet
        that puts 0.8 on the null, 0.1 on the no-split signal, and splits the
        remaining 0.1 evenly over the n - 1 interior years."""
        if n_grid < 2:
            raise DataValidationError("need a grid of at least 2 candidate years")
        alpha = np.empty(n_grid + 1)
        alpha[0] = alpha_null
        alpha[n_grid] = alpha_full
        alpha[1:n_grid] = alpha_full / (n_grid - 1)
        return cls(a=a, b=b, tau2=tau2, alpha=alpha, n_grid=n_grid)


@dataclass(frozen=True)
class MarginalTable:
    """Per-firm log marginal likelihood of every changepoint hypothesis."""

    firm_id: str
    log_lik: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class ChangepointPosterior:
    """Posterior over hypotheses plus the interior-peak screening statistic.

    ``peak_prob`` is the largest posterior probability among the interior
    split years 0 < k < n; ``peak_index`` is where it occurs.
    """

    firm_id: str
    probs: np.ndarray = field(repr=False)
    peak_prob: float = 0.0
    peak_index: int = 0


@dataclass(frozen=True)
class CohortWeights:
    """Sampler state for the shared hypothesis weights."""

    weights: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        weights = check_probability_vector(self.weights, "weights")
        counts = np.asarray(self.counts, dtype=int)
        if counts.shape != weights.shape or np.any(counts < 0):
            raise DataValidationError("counts must be nonnegative and aligned with weights")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise DataValidationError("weights must sum to one")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "counts", counts)


def _check_df_convention(df_convention):
    if df_convention not in DF_CONVENTIONS:
        raise DataValidationError(
            f"df_convention must be one of {DF_CONVENTIONS}, got {df_convention!r}"
        )


def _block_logpdf_arrays(d, total, sumsq, priors, signal, df_convention):
    """Vectorized block log density from sufficient statistics.

    ``d`` (block sizes), ``total`` (block sums) and ``sumsq`` (block sums of
    squares) may be arrays; empty blocks (d == 0) contribute exactly 0.
    """
    d = np.asarray(d, dtype=float)
    total = np.asarray(total, dtype=float)
    sumsq = np.asarray(sumsq, dtype=float)
    a, b, tau2 = priors.a, priors.b, priors.tau2

    if signal:
        quad = sumsq - tau2 * total**2 / (1.0 + d * tau2)
        logdet = np.log1p(d * tau2)
    else:
        quad = sumsq
        logdet = np.zeros_like(d)
    quad = np.maximum(quad, 0.0)

    df = a + d if df_convention == "shifted" else np.full_like(d, float(a))
    mahalanobis = (a / b) * quad
    out = (
        gammaln((df + d) / 2.0)
        - gammaln(df / 2.0)
        - 0.5 * d * np.log(df * np.pi)
        - 0.5 * (d * np.log(b / a) + logdet)
        - 0.5 * (df + d) * np.log1p(mahalanobis / df)
    )
    return np.where(d == 0, 0.0, out)


def block_log_marginal(values, priors, signal=True, df_convention="shifted") -> float:
    """Log marginal density of one observation block.

    ``signal=True`` integrates a shared nonzero level out of the block;
    ``signal=False`` scores the block as pure noise. The empty block returns
    0 (the empty-product convention), so callers can sum blocks without
    special-casing boundary splits.
    """
    _check_df_convention(df_convention)
    y = np.asarray(values, dtype=float)
    if y.ndim != 1:
        raise DataValidationError("block values must be one-dimensional")
    if y.size == 0:
        return 0.0
    if not np.all(np.isfinite(y)):
        raise DataValidationError("block values must be finite")
    return float(
        _block_logpdf_arrays(
            y.size, y.sum(), float(y @ y), priors, signal, df_convention
        )
    )


def precompute_marginals(firm, priors, df_convention="shifted") -> MarginalTable:
    """Tabulate ``log p(y | hypothesis k)`` for k = 0 .. n.

    Split k puts the observation times <= k in the left block and the rest
    in the right block; both blocks carry their own integrated level. Entry 0
    scores the whole series as noise; entry n is the single-block signal
    model (its right block is empty by convention). Splits that land before
    the first or after the last observation collapse to the single-block
    value on their own.

    The table is built from prefix sums, which reproduces
    :func:`block_log_marginal` exactly because both run the same closed form.
    """
    _check_df_convention(df_convention)
    n = priors.n_grid
    if firm.times[-1] > n:
        raise DataValidationError(
            f"firm {firm.firm_id}: observation time {firm.times[-1]} outside grid 1..{n}"
        )
    y = firm.values
    m = len(y)
    prefix_sum = np.concatenate([[0.0], np.cumsum(y)])
    prefix_sumsq = np.concatenate([[0.0], np.cumsum(y**2)])
    total, sumsq = prefix_sum[m], prefix_sumsq[m]

    ks = np.arange(1, n + 1)
    left_count = np.searchsorted(firm.times, ks, side="right")
    left_sum = prefix_sum[left_count]
    left_sumsq = prefix_sumsq[left_count]

    log_lik = np.empty(n + 1)
    log_lik[0] = _block_logpdf_arrays(m, total, sumsq, priors, False, df_convention)
    log_lik[1:] = _block_logpdf_arrays(
        left_count, left_sum, left_sumsq, priors, True, df_convention
    ) + _block_logpdf_arrays(
        m - left_count, total - left_sum, sumsq - left_sumsq, priors, True, df_convention
    )
    if not np.all(np.isfinite(log_lik)):
        raise DataValidationError(f"firm {firm.firm_id}: non-finite marginal table")
    return MarginalTable(firm_id=firm.firm_id, log_lik=log_lik)


def changepoint_conditional(table, weights) -> np.ndarray:
    """Posterior over hypotheses given the cohort weights.

    Normalizes ``exp(log_lik + log weights)`` with a max shift; zero-weight
    hypotheses get exactly zero posterior mass.
    """
    weights = check_probability_vector(weights, "weights")
    log_lik = table.log_lik
    if weights.shape != log_lik.shape:
        raise DataValidationError(
            f"weights length {weights.shape[0]} does not match table length {log_lik.shape[0]}"
        )
    with np.errstate(divide="ignore"):
        scores = log_lik + np.log(weights)
    shift = np.max(scores)
    if not np.isfinite(shift):
        raise DataValidationError("posterior has no support: all weights zero on finite scores")
    raw = np.exp(scores - shift)
    mass = raw.sum()
    if not np.isfinite(mass) or mass <= 0:
        raise DataValidationError("posterior normalization failed")
    return raw / mass


def sample_cohort_weights(counts, alpha, rng) -> np.ndarray:
    """One draw from Dirichlet(alpha + counts).

    Coordinates whose concentration is exactly zero come back as exact
    zeros (numpy's Dirichlet requires strictly positive parameters).
    """
    counts = np.asarray(counts, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if counts.shape != alpha.shape:
        raise DataValidationError("counts and alpha must align")
    if np.any(counts < 0) or np.any(alpha < 0):
        raise DataValidationError("counts and alpha must be nonnegative")
    concentration = alpha + counts
    if concentration.sum() <= 0:
        raise DataValidationError("alpha + counts must have positive mass")
    out = np.zeros_like(concentration)
    positive = concentration > 0
    out[positive] = rng.dirichlet(concentration[positive])
    return out


def _sweep_rng(seed, sweep):
    # Firm f consumes the f-th variate of the (seed, sweep) stream, so the
    # draw for (seed, sweep, firm) is reproducible by any worker layout.
    return np.random.default_rng(np.random.SeedSequence((seed, sweep)))


def gibbs_screen(
    firms,
    priors,
    iters=3000,
    burn_in=500,
    seed=0,
    *,
    fixed_weights=None,
    rao_blackwell=False,
    df_convention="shifted",
):
    """Collapsed Gibbs sampler over per-firm hypotheses and shared weights.

    Alternates (i) one categorical draw per firm from
    :func:`changepoint_conditional` and (ii) a Dirichlet draw of the shared
    weights from the current hypothesis counts. Per-firm posteriors are
    post-burn-in draw frequencies by default; ``rao_blackwell=True`` averages
    the exact conditionals over the weight draws instead. Passing
    ``fixed_weights`` pins the weight vector (a diagnostic mode in which the
    per-firm draws are independent samples from the exact conditional).

    Returns ``(posteriors, weight_mean)`` where ``weight_mean`` is the
    post-burn-in average of the weight draws. Deterministic given ``seed``.
    """
    if not firms:
        raise DataValidationError("empty cohort: no firms to screen")
    if burn_in < 0 or iters <= burn_in:
        raise DataValidationError(f"need iters > burn_in >= 0, got iters={iters}, burn_in={burn_in}")
    if seed < 0:
        raise DataValidationError("seed must be nonnegative")

    tables = [precompute_marginals(firm, priors, df_convention) for firm in firms]
    log_lik = np.vstack([t.log_lik for t in tables])
    n_firms, n_hyp = log_lik.shape

    if fixed_weights is not None:
        weights = check_probability_vector(fixed_weights, "fixed_weights").copy()
        weights = weights / weights.sum()
    else:
        weights = priors.alpha / priors.alpha.sum()

    with np.errstate(divide="ignore"):
        log_w = np.log(weights)

    freq = np.zeros((n_firms, n_hyp))
    rb_acc = np.zeros((n_firms, n_hyp)) if rao_blackwell else None
    weight_acc = np.zeros(n_hyp)
    kept = 0

    for sweep in range(iters):
        rng = _sweep_rng(seed, sweep)
        scores = log_lik + log_w
        scores -= scores.max(axis=1, keepdims=True)
        conditional = np.exp(scores)
        conditional /= conditional.sum(axis=1, keepdims=True)

        uniform = rng.random(n_firms)
        cumulative = np.cumsum(conditional, axis=1)
        draws = np.minimum((cumulative < uniform[:, None]).sum(axis=1), n_hyp - 1)

        if fixed_weights is None:
            counts = np.bincount(draws, minlength=n_hyp)
            weights = sample_cohort_weights(counts, priors.alpha, rng)
            with np.errstate(divide="ignore"):
                log_w = np.log(weights)

        if sweep >= burn_in:
            kept += 1
            freq[np.arange(n_firms), draws] += 1.0
            if rao_blackwell:
                rb_acc += conditional
            weight_acc += weights

    probs = (rb_acc if rao_blackwell else freq) / kept
    weight_mean = weight_acc / kept

    posteriors = []
    for i, firm in enumerate(firms):
        interior = probs[i, 1:n_hyp - 1]
        peak = int(np.argmax(interior)) + 1
        posteriors.append(
            ChangepointPosterior(
                firm_id=firm.firm_id,
                probs=probs[i],
                peak_prob=float(interior[peak - 1]),
                peak_index=peak,
            )
        )
    return posteriors, weight_mean


def screen(posteriors, cutoff=0.95):
    """Firms whose interior peak reaches ``cutoff``, strongest first.

    Ties are broken by firm id; each returned posterior carries its
    ``peak_index`` as the estimated changepoint year.
    """
    if not 0 < cutoff <= 1:
        raise DataValidationError("cutoff must lie in (0, 1]")
    hits = [p for p in posteriors if p.peak_prob >= cutoff]
    hits.sort(key=lambda p: (-p.peak_prob, str(p.firm_id)))
    return hits


def filter_cohort(firms, min_obs=20):
    """Keep firms with at least ``min_obs`` observations."""
    if min_obs < 1:
        raise DataValidationError("min_obs must be at least 1")
    return [firm for firm in firms if len(firm) >= min_obs]


class ChangepointScreener(BaseEstimator):
    """Cohort-level changepoint screen with a scikit-learn interface.

    Parameters mirror :class:`Priors` plus the sampler controls. ``n_grid``
    defaults to the largest observation time seen at fit time.
    """

    def __init__(
        self,
        a=2.0,
        b=2.0,
        tau2=10.0,
        alpha_null=0.8,
        alpha_full=0.1,
        n_grid=None,
        iters=3000,
        burn_in=500,
        seed=0,
        df_convention="shifted",
        rao_blackwell=False,
    ):
        self.a = a
        self.b = b
        self.tau2 = tau2
        self.alpha_null = alpha_null
        self.alpha_full = alpha_full
        self.n_grid = n_grid
        self.iters = iters
        self.burn_in = burn_in
        self.seed = seed
        self.df_convention = df_convention
        self.rao_blackwell = rao_blackwell

    def fit(self, X, y=None):
        firms = list(X)
        if not firms:
            raise DataValidationError("empty cohort: no firms to screen")
        n_grid = self.n_grid or max(int(firm.times[-1]) for firm in firms)
        self.priors_ = Priors.default(
            n_grid,
            a=self.a,
            b=self.b,
            tau2=self.tau2,
            alpha_null=self.alpha_null,
            alpha_full=self.alpha_full,
        )
        self.posteriors_, self.weight_mean_ = gibbs_screen(
            firms,
            self.priors_,
            iters=self.iters,
            burn_in=self.burn_in,
            seed=self.seed,
            rao_blackwell=self.rao_blackwell,
            df_convention=self.df_convention,
        )
        return self

    def screen(self, cutoff=0.95):
        return screen(self.posteriors_, cutoff=cutoff)
