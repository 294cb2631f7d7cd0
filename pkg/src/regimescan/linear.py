"""Linear-model primitives: OLS, ridge, lasso, BIC scoring, exhaustive subset search.

Every routine here is a pure function of its inputs, so they are safe to call
from worker pools. The subset search is the workhorse behind per-node
neighborhood selection in the rolling graph estimator.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import linalg as sla

from ._validation import as_float_vector
from .errors import (
    ConvergenceError,
    DataValidationError,
    EnumerationLimitError,
    RankDeficiencyError,
)

# Floor applied to residual sums of squares before taking logs, so exact fits
# score a large-but-finite BIC instead of -inf.
RSS_FLOOR = 1e-12

# Refuse exhaustive searches beyond 2**25 candidate subsets.
SUBSET_LIMIT = 25


@dataclass(frozen=True)
class DesignMatrix:
    """A validated regression design.

    ``intercept_included`` marks a leading all-ones column; the subset search
    and the lasso treat that column as an unpenalized intercept.
    """

    values: np.ndarray
    intercept_included: bool = False

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 2:
            raise DataValidationError(f"design must be two-dimensional, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise DataValidationError("design needs at least one row")
        if not np.all(np.isfinite(arr)):
            raise DataValidationError("design contains non-finite values")
        if self.intercept_included:
            if arr.shape[1] < 1 or not np.allclose(arr[:, 0], 1.0):
                raise DataValidationError(
                    "intercept_included requires the first column to be all ones"
                )
        object.__setattr__(self, "values", arr)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @classmethod
    def with_intercept(cls, predictors) -> "DesignMatrix":
        """Prepend an all-ones column to ``predictors``."""
        arr = np.asarray(predictors, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        ones = np.ones((arr.shape[0], 1))
        return cls(np.hstack([ones, arr]), intercept_included=True)

    def predictor_values(self) -> np.ndarray:
        """The design without its intercept column, if it carries one."""
        if self.intercept_included:
            return self.values[:, 1:]
        return self.values


@dataclass(frozen=True)
class RegressionFit:
    """Fitted coefficients, residuals and residual sum of squares.

    ``coefficients`` align with the columns of the design the fit was run on.
    Subset-search fits are run on ``[intercept, selected predictors]``, so
    their ``coefficients[0]`` is the intercept and ``coefficients[1:]`` align
    with ``subset``.
    """

    coefficients: np.ndarray
    residuals: np.ndarray
    rss: float
    subset: tuple | None = None


@dataclass(frozen=True)
class SubsetModel:
    """Winner of an exhaustive subset search.

    ``subset`` holds 0-based indices into the predictor columns of the
    original design (intercept excluded). ``skipped`` records candidate
    subsets that were rank deficient and therefore never scored.
    """

    subset: tuple
    fit: RegressionFit
    bic: float
    n_candidates: int = 0
    skipped: tuple = ()


def _as_design(X) -> DesignMatrix:
    if isinstance(X, DesignMatrix):
        return X
    return DesignMatrix(np.asarray(X, dtype=float), intercept_included=False)


def ols_fit(X, y) -> RegressionFit:
    """Ordinary least squares of ``y`` on the columns of ``X``.

    Parameters
    ----------
    X : DesignMatrix or array of shape (n, p)
        Full-column-rank design. ``p = 0`` is allowed and returns the empty
        model with ``residuals = y``.
    y : array of shape (n,)

    Raises
    ------
    RankDeficiencyError
        If ``X`` is rank deficient; the error names the offending columns
        (the pivoted-QR columns beyond the numerical rank).
    """
    X = _as_design(X)
    y = as_float_vector(y)
    n, p = X.rows, X.cols
    if len(y) != n:
        raise DataValidationError(f"y has length {len(y)}, design has {n} rows")
    if p == 0:
        return RegressionFit(np.zeros(0), y.copy(), float(y @ y))

    q, r, piv = sla.qr(X.values, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag.max() * max(n, p) * np.finfo(float).eps if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    if rank < p:
        raise RankDeficiencyError(sorted(int(c) for c in piv[rank:]))

    beta_piv = sla.solve_triangular(r, q.T @ y)
    coef = np.empty(p)
    coef[piv] = beta_piv
    residuals = y - X.values @ coef
    return RegressionFit(coef, residuals, float(residuals @ residuals))


def bic_score(rss, n, k) -> float:
    """Gaussian-profile BIC: ``n*ln(max(rss, floor)/n) + k*ln(n)``.

    The intercept is never counted in ``k`` by the callers in this package.
    """
    if n < 1:
        raise DataValidationError("n must be at least 1")
    if rss < 0:
        raise DataValidationError("rss must be nonnegative")
    if k < 0:
        raise DataValidationError("k must be nonnegative")
    return float(n * np.log(max(rss, RSS_FLOOR) / n) + k * np.log(n))


def best_subset_bic(X, y) -> SubsetModel:
    """Exhaustive best-subset search scored by BIC.

    Enumerates all ``2**p`` predictor subsets (intercept always included and
    never counted in the penalty) and returns the minimizer. Ties go to the
    smaller subset, then the lexicographically smallest index set; candidates
    whose Gram submatrix is singular are skipped and recorded rather than
    aborting the search, since collinear subsets are routine in short rolling
    windows.
    """
    X = _as_design(X)
    y = as_float_vector(y)
    n = X.rows
    if len(y) != n:
        raise DataValidationError(f"y has length {len(y)}, design has {n} rows")
    predictors = X.predictor_values()
    p = predictors.shape[1]
    if p > SUBSET_LIMIT:
        raise EnumerationLimitError(
            f"{p} predictors would require {2 ** p} candidate fits; limit is p <= {SUBSET_LIMIT}"
        )
    if n <= p:
        raise DataValidationError(f"subset search needs n > p, got n={n}, p={p}")

    col_means = predictors.mean(axis=0)
    y_mean = float(y.mean())
    centered = predictors - col_means
    y_centered = y - y_mean
    gram = centered.T @ centered
    cross = centered.T @ y_centered
    tss = float(y_centered @ y_centered)

    best_subset: tuple = ()
    best_slopes = np.zeros(0)
    best_bic = bic_score(tss, n, 0)
    n_candidates = 1  # the empty subset just scored
    skipped = []

    for size in range(1, p + 1):
        for subset in combinations(range(p), size):
            n_candidates += 1
            idx = list(subset)
            sub_gram = gram[np.ix_(idx, idx)]
            try:
                factor = sla.cho_factor(sub_gram, lower=True, check_finite=False)
            except np.linalg.LinAlgError:
                skipped.append(subset)
                continue
            # LAPACK can factor an exactly singular Gram block when rounding
            # leaves a tiny positive pivot; catch those by pivot magnitude.
            pivots = np.diag(factor[0]) ** 2
            if np.min(pivots) <= size * np.finfo(float).eps * np.max(np.diag(sub_gram)):
                skipped.append(subset)
                continue
            slopes = sla.cho_solve(factor, cross[idx], check_finite=False)
            rss = max(tss - float(cross[idx] @ slopes), 0.0)
            score = bic_score(rss, n, size)
            # Strict < keeps the earlier candidate on ties; enumeration order
            # is (size, lexicographic), which is exactly the tie-break rule.
            if score < best_bic:
                best_bic = score
                best_subset = subset
                best_slopes = np.asarray(slopes, dtype=float)

    idx = list(best_subset)
    intercept = y_mean - float(col_means[idx] @ best_slopes) if idx else y_mean
    fitted = intercept + predictors[:, idx] @ best_slopes if idx else np.full(n, intercept)
    residuals = y - fitted
    fit = RegressionFit(
        np.concatenate([[intercept], best_slopes]),
        residuals,
        float(residuals @ residuals),
        subset=tuple(best_subset),
    )
    return SubsetModel(
        subset=tuple(best_subset),
        fit=fit,
        bic=best_bic,
        n_candidates=n_candidates,
        skipped=tuple(skipped),
    )


def ridge_fit(X, y, lam) -> RegressionFit:
    """Ridge regression with an unpenalized intercept.

    Minimizes ``||y - X beta||^2 + lam * ||beta||^2`` where the intercept
    column (when present) is excluded from the penalty. Solved as an
    augmented least-squares problem so ``lam = 0`` reproduces OLS exactly.
    """
    if lam < 0:
        raise DataValidationError("ridge penalty must be nonnegative")
    X = _as_design(X)
    y = as_float_vector(y)
    n, p = X.rows, X.cols
    if len(y) != n:
        raise DataValidationError(f"y has length {len(y)}, design has {n} rows")
    if p == 0:
        return RegressionFit(np.zeros(0), y.copy(), float(y @ y))

    penalized = np.ones(p)
    if X.intercept_included:
        penalized[0] = 0.0
    if lam > 0:
        extra = np.sqrt(lam) * np.eye(p)[penalized > 0]
        aug_X = np.vstack([X.values, extra])
        aug_y = np.concatenate([y, np.zeros(extra.shape[0])])
    else:
        aug_X, aug_y = X.values, y
    coef, *_ = np.linalg.lstsq(aug_X, aug_y, rcond=None)
    residuals = y - X.values @ coef
    return RegressionFit(coef, residuals, float(residuals @ residuals))


def _soft_threshold(value, limit):
    if value > limit:
        return value - limit
    if value < -limit:
        return value + limit
    return 0.0


def lasso_fit(X, y, lam, *, max_sweeps=10_000, kkt_tol=1e-7) -> RegressionFit:
    """Coordinate-descent lasso for ``(1/2n)||y - X beta||^2 + lam * ||beta||_1``.

    The intercept (when the design carries one) is unpenalized and handled by
    centering. Columns are rescaled to unit root-mean-square internally for
    conditioning, with per-column penalties adjusted so the returned
    coefficients satisfy the KKT conditions of the *original-scale* objective:
    ``|x_j' r / n| <= lam`` for zero coefficients and ``x_j' r / n = lam *
    sign(beta_j)`` for active ones, to within ``kkt_tol``.

    Raises
    ------
    ConvergenceError
        After ``max_sweeps`` full passes without meeting ``kkt_tol``; the
        error carries the last iterate and its KKT violation.
    """
    if lam < 0:
        raise DataValidationError("lasso penalty must be nonnegative")
    X = _as_design(X)
    y = as_float_vector(y)
    n, p = X.rows, X.cols
    if len(y) != n:
        raise DataValidationError(f"y has length {len(y)}, design has {n} rows")

    predictors = X.predictor_values()
    m = predictors.shape[1]
    if m == 0:
        if X.intercept_included:
            intercept = float(y.mean())
            residuals = y - intercept
            return RegressionFit(np.array([intercept]), residuals, float(residuals @ residuals))
        return RegressionFit(np.zeros(0), y.copy(), float(y @ y))

    if X.intercept_included:
        col_means = predictors.mean(axis=0)
        y_mean = float(y.mean())
    else:
        col_means = np.zeros(m)
        y_mean = 0.0
    centered = predictors - col_means
    y_centered = y - y_mean

    scale = np.sqrt((centered ** 2).mean(axis=0))
    live = scale > 0
    scale = np.where(live, scale, 1.0)
    cols = centered / scale
    penalties = lam / scale

    work = np.zeros(m)  # coefficients on the rescaled columns
    resid = y_centered.copy()
    violation = np.inf
    for _ in range(max_sweeps):
        for j in range(m):
            if not live[j]:
                continue
            current = work[j]
            rho = (cols[:, j] @ resid) / n + current  # unit-RMS columns
            updated = _soft_threshold(rho, penalties[j])
            if updated != current:
                resid -= (updated - current) * cols[:, j]
                work[j] = updated
        grad = centered.T @ resid / n
        active = work != 0.0
        violation = float(
            np.max(
                np.where(
                    active,
                    np.abs(grad - lam * np.sign(work)),
                    np.maximum(np.abs(grad) - lam, 0.0),
                )
            )
        )
        if violation <= kkt_tol:
            break
    else:
        beta = work / scale
        last = _assemble_lasso_fit(X, predictors, beta, col_means, y_mean, y)
        raise ConvergenceError(
            f"lasso did not converge in {max_sweeps} sweeps (KKT violation {violation:.3e})",
            last_fit=last,
            kkt_violation=violation,
        )

    beta = work / scale
    return _assemble_lasso_fit(X, predictors, beta, col_means, y_mean, y)


def _assemble_lasso_fit(X, predictors, beta, col_means, y_mean, y):
    if X.intercept_included:
        intercept = y_mean - float(col_means @ beta)
        coef = np.concatenate([[intercept], beta])
    else:
        coef = beta
    residuals = y - X.values @ coef
    return RegressionFit(coef, residuals, float(residuals @ residuals))
