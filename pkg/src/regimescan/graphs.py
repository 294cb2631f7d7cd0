"""Rolling conditional-independence graphs for residual panels.

Each window regresses every column on all the others (exhaustive BIC subset
search by default; OLS/ridge/lasso are available as baselines), declares an
edge only when two columns select each other, and rebuilds a covariance
matrix from the selected regressions through the regression-to-precision
identity.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import stats
from sklearn.base import BaseEstimator

from ._validation import as_float_matrix
from .errors import DataValidationError, NumericalError, RegimescanError
from .linear import DesignMatrix, best_subset_bic, lasso_fit, ols_fit, ridge_fit

NEIGHBORHOOD_METHODS = ("bic-subset", "ols", "ridge", "lasso")

# Floor keeps reconstructed precisions finite when a window fits exactly.
VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class WindowSpec:
    """Rolling-window geometry: observations per window and the shift between starts."""

    length: int = 150
    step: int = 5

    def __post_init__(self):
        if self.length < 3:
            raise DataValidationError("window length must be at least 3")
        if self.step < 1:
            raise DataValidationError("window step must be at least 1")

    def starts(self, n_rows: int) -> range:
        if n_rows < self.length:
            raise DataValidationError(
                f"panel has {n_rows} rows, shorter than the window length {self.length}"
            )
        return range(0, n_rows - self.length + 1, self.step)


@dataclass(frozen=True)
class Neighborhood:
    """Selected regression for one node within one window.

    ``neighbors`` are column indices into the window; ``coefficients`` align
    with them. ``residual_variance`` is ``rss / (n - k - 1)`` (the intercept
    eats one degree of freedom), floored at ``VARIANCE_FLOOR``.
    """

    node: int
    neighbors: tuple
    coefficients: np.ndarray = field(repr=False)
    residual_variance: float = 1.0
    n_candidates: int = 0
    n_skipped: int = 0


@dataclass(frozen=True)
class GraphSnapshot:
    """One window's graph, covariance reconstruction and independence test."""

    window_start: object
    start: int
    adjacency: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)
    omega: np.ndarray = field(repr=False)
    empty_graph_pvalue: float = 1.0
    neighborhoods: tuple = field(default=(), repr=False)
    labels: tuple = ()


def select_neighborhood(window, node, method="bic-subset", lam=0.0) -> Neighborhood:
    """Regress column ``node`` on all other columns of ``window``.

    ``method`` picks the regression: the default exhaustive BIC search keeps
    only the selected predictors as neighbors; ``ols`` and ``ridge`` keep all
    of them (dense baselines); ``lasso`` keeps the active set at ``lam``.
    """
    window = as_float_matrix(window, "window")
    n, p = window.shape
    if not 0 <= node < p:
        raise DataValidationError(f"node index {node} outside 0..{p - 1}")
    if n < p + 2:
        raise DataValidationError(f"window needs at least p + 2 = {p + 2} rows, got {n}")
    if method not in NEIGHBORHOOD_METHODS:
        raise DataValidationError(f"unknown method {method!r}; choose from {NEIGHBORHOOD_METHODS}")

    others = [j for j in range(p) if j != node]
    y = window[:, node]

    if method == "bic-subset":
        model = best_subset_bic(window[:, others], y)
        neighbors = tuple(others[j] for j in model.subset)
        coefficients = model.fit.coefficients[1:].copy()
        k = len(neighbors)
        rss = model.fit.rss
        n_candidates = model.n_candidates
        n_skipped = len(model.skipped)
    else:
        design = DesignMatrix.with_intercept(window[:, others])
        if method == "ols":
            fit = ols_fit(design, y)
        elif method == "ridge":
            fit = ridge_fit(design, y, lam)
        else:
            fit = lasso_fit(design, y, lam)
        slopes = fit.coefficients[1:]
        keep = slopes != 0.0 if method == "lasso" else np.ones(len(slopes), dtype=bool)
        neighbors = tuple(others[j] for j in range(len(others)) if keep[j])
        coefficients = slopes[keep].copy()
        k = len(neighbors)
        rss = fit.rss
        n_candidates = 1
        n_skipped = 0

    variance = max(rss / (n - k - 1), VARIANCE_FLOOR)
    return Neighborhood(
        node=node,
        neighbors=neighbors,
        coefficients=coefficients,
        residual_variance=variance,
        n_candidates=n_candidates,
        n_skipped=n_skipped,
    )


def assemble_adjacency(neighborhoods, rule="and") -> np.ndarray:
    """Build the 0/1 adjacency from per-node selections.

    ``and`` (the default) requires each node to appear in the other's
    regression; ``or`` keeps one-sided selections, for sensitivity analysis.
    """
    if rule not in ("and", "or"):
        raise DataValidationError(f"rule must be 'and' or 'or', got {rule!r}")
    p = len(neighborhoods)
    nodes = sorted(nb.node for nb in neighborhoods)
    if nodes != list(range(p)):
        raise DataValidationError("need exactly one neighborhood per node 0..p-1")
    selected = np.zeros((p, p), dtype=int)
    for nb in neighborhoods:
        for j in nb.neighbors:
            if j == nb.node:
                raise DataValidationError(f"node {nb.node} lists itself as a neighbor")
            selected[nb.node, j] = 1
    if rule == "and":
        return selected & selected.T
    return selected | selected.T


def reconstruct_covariance(neighborhoods, adjacency):
    """Rebuild (sigma, omega) from selected regressions.

    The precision is assembled through the regression identity
    ``omega[i, i] = 1 / residual_variance_i`` and ``omega[i, j] =
    -coef_{i<-j} / residual_variance_i`` on edges, symmetrized by averaging
    the available sides, with zeros enforced off the edge set. A
    non-positive-definite result is repaired by shifting every eigenvalue up
    by ``|lambda_min| + 1e-8`` (a diagonal shift, so the zero pattern
    survives), then inverted.
    """
    adjacency = np.asarray(adjacency)
    p = adjacency.shape[0]
    ordered = sorted(neighborhoods, key=lambda nb: nb.node)
    omega = np.zeros((p, p))
    sides = np.zeros((p, p))
    for nb in ordered:
        omega[nb.node, nb.node] = 1.0 / nb.residual_variance
        for j, coef in zip(nb.neighbors, nb.coefficients):
            if adjacency[nb.node, j]:
                omega[nb.node, j] += -coef / nb.residual_variance
                sides[nb.node, j] += 1.0
    pair_sides = np.maximum(sides + sides.T, 1.0)
    off = (omega + omega.T - 2.0 * np.diag(np.diag(omega))) / pair_sides
    omega = np.diag(np.diag(omega)) + off * (adjacency > 0)

    eigenvalues = np.linalg.eigvalsh(omega)
    smallest, largest = float(eigenvalues[0]), float(eigenvalues[-1])
    # also repair barely-positive spectra, which would invert to garbage
    if smallest <= 1e-10 * max(largest, 1.0):
        omega = omega + (abs(smallest) + 1e-8) * np.eye(p)
    try:
        sigma = np.linalg.inv(omega)
    except np.linalg.LinAlgError as err:
        raise NumericalError(f"reconstructed precision is singular after repair: {err}") from err
    if not np.all(np.isfinite(sigma)):
        raise NumericalError("reconstructed covariance contains non-finite entries")
    return sigma, omega


def empty_graph_test(window):
    """Bartlett-corrected likelihood-ratio test of mutual independence.

    Returns ``(statistic, p_value)`` where the statistic is
    ``-(n - 1 - (2p + 5) / 6) * log det(R)`` for the sample correlation
    matrix ``R``, referred to a chi-square with ``p (p - 1) / 2`` degrees of
    freedom.
    """
    window = as_float_matrix(window, "window")
    n, p = window.shape
    if n <= p:
        raise DataValidationError(f"empty-graph test needs n > p, got n={n}, p={p}")
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.corrcoef(window, rowvar=False)
    if not np.all(np.isfinite(corr)):
        raise NumericalError("correlation matrix is degenerate (constant column?)")
    sign, logdet = np.linalg.slogdet(corr)
    if sign <= 0:
        raise NumericalError("correlation matrix is not positive definite")
    statistic = -(n - 1 - (2 * p + 5) / 6.0) * logdet
    statistic = max(statistic, 0.0)
    p_value = float(stats.chi2.sf(statistic, p * (p - 1) / 2))
    return float(statistic), p_value


def _window_snapshot(values, start, spec, method, lam, rule, window_start, labels):
    window = values[start : start + spec.length]
    neighborhoods = tuple(
        select_neighborhood(window, i, method=method, lam=lam) for i in range(values.shape[1])
    )
    adjacency = assemble_adjacency(neighborhoods, rule=rule)
    sigma, omega = reconstruct_covariance(neighborhoods, adjacency)
    _, p_value = empty_graph_test(window)
    return GraphSnapshot(
        window_start=window_start,
        start=start,
        adjacency=adjacency,
        sigma=sigma,
        omega=omega,
        empty_graph_pvalue=p_value,
        neighborhoods=neighborhoods,
        labels=labels,
    )


def rolling_graphs(panel, spec=None, method="bic-subset", lam=0.0, rule="and", n_jobs=None):
    """Run the full selection procedure on every rolling window of ``panel``.

    Windows start at ``0, step, 2 step, ...``; the trailing partial window is
    dropped. Output order is fixed by window start whether or not a worker
    pool is used. Per-window failures are re-raised with the window index
    attached.
    """
    spec = spec or WindowSpec()
    if isinstance(panel, pd.DataFrame):
        values = as_float_matrix(panel.to_numpy(), "panel")
        labels = tuple(str(c) for c in panel.columns)
        index = list(panel.index)
    else:
        values = as_float_matrix(panel, "panel")
        labels = tuple(str(j) for j in range(values.shape[1]))
        index = list(range(values.shape[0]))
    n_rows, p = values.shape
    if spec.length < p + 2:
        raise DataValidationError(
            f"window length {spec.length} too short for {p} columns (need >= p + 2)"
        )

    starts = list(spec.starts(n_rows))

    def compute(k, start):
        try:
            return _window_snapshot(values, start, spec, method, lam, rule, index[start], labels)
        except RegimescanError as err:
            raise type(err)(f"window {k} starting at row {start}: {err}") from err

    if n_jobs:
        snapshots = Parallel(n_jobs=n_jobs)(
            delayed(compute)(k, start) for k, start in enumerate(starts)
        )
    else:
        snapshots = [compute(k, start) for k, start in enumerate(starts)]
    return list(snapshots)


def _label_index(snapshot, node):
    if node in snapshot.labels:
        return snapshot.labels.index(node)
    if isinstance(node, (int, np.integer)) and 0 <= node < len(snapshot.labels):
        return int(node)
    raise DataValidationError(f"unknown node label {node!r}; panel columns: {snapshot.labels}")


def degree_series(snapshots, node, count="edges") -> np.ndarray:
    """Per-window neighbor count for one node.

    ``count='edges'`` sums the mutual-selection adjacency row (the default);
    ``count='selected'`` counts the node's own regression picks regardless of
    reciprocity.
    """
    if count not in ("edges", "selected"):
        raise DataValidationError("count must be 'edges' or 'selected'")
    out = np.empty(len(snapshots), dtype=int)
    for t, snap in enumerate(snapshots):
        i = _label_index(snap, node)
        if count == "edges":
            out[t] = int(snap.adjacency[i].sum())
        else:
            out[t] = len(snap.neighborhoods[i].neighbors)
    return out


def coefficient_series(snapshots, node, neighbor) -> np.ndarray:
    """Per-window coefficient of ``neighbor`` in ``node``'s selected regression.

    Zero whenever the neighbor was not selected in that window.
    """
    out = np.zeros(len(snapshots))
    for t, snap in enumerate(snapshots):
        i = _label_index(snap, node)
        j = _label_index(snap, neighbor)
        if i == j:
            raise DataValidationError("node and neighbor must differ")
        nb = snap.neighborhoods[i]
        if j in nb.neighbors:
            out[t] = float(nb.coefficients[nb.neighbors.index(j)])
    return out


class RollingGraphSelector(BaseEstimator):
    """Rolling graphical-structure estimator with a scikit-learn interface.

    Parameters
    ----------
    window_length, step : int
        Rolling-window geometry (defaults 150 observations, shifted by 5).
    method : str
        Per-node regression: ``bic-subset`` (default), ``ols``, ``ridge`` or
        ``lasso``.
    lam : float
        Penalty for the ridge/lasso baselines.
    rule : str
        ``and`` (mutual selection, default) or ``or``.
    n_jobs : int or None
        Worker count for per-window parallelism; output is identical either
        way.
    """

    def __init__(self, window_length=150, step=5, method="bic-subset", lam=0.0, rule="and", n_jobs=None):
        self.window_length = window_length
        self.step = step
        self.method = method
        self.lam = lam
        self.rule = rule
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        spec = WindowSpec(length=self.window_length, step=self.step)
        self.snapshots_ = rolling_graphs(
            X, spec, method=self.method, lam=self.lam, rule=self.rule, n_jobs=self.n_jobs
        )
        self.labels_ = self.snapshots_[0].labels if self.snapshots_ else ()
        return self

    def degree_series(self, node, count="edges"):
        return degree_series(self.snapshots_, node, count=count)

    def coefficient_series(self, node, neighbor):
        return coefficient_series(self.snapshots_, node, neighbor)
