"""Four-factor market regressions and residual-panel assembly.

Each return series is regressed on the US and EU market excess returns plus
the two volatility-shock factors; the EU volatility shock is orthogonalized
against the US one first because the two are strongly collinear. The residual
panel feeds the rolling graph estimator.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import as_float_vector, check_same_length
from .errors import DataValidationError, RankDeficiencyError
from .linear import DesignMatrix, ols_fit

FACTOR_DESIGN_COLUMNS = ("intercept", "mkt_us", "mkt_eu", "vol_us", "vol_eu_excess")


def excess_eu_volatility(us_vol, eu_vol_raw) -> np.ndarray:
    """Residual of the EU volatility shock after regressing it on the US one.

    The output is orthogonal to ``us_vol`` and mean zero (the regression
    includes an intercept).
    """
    us_vol = as_float_vector(us_vol, "us_vol")
    eu_vol_raw = as_float_vector(eu_vol_raw, "eu_vol_raw")
    n = check_same_length(("us_vol", us_vol), ("eu_vol_raw", eu_vol_raw))
    if n < 3:
        raise DataValidationError("volatility series need at least 3 observations")
    design = DesignMatrix.with_intercept(us_vol)
    return ols_fit(design, eu_vol_raw).residuals


@dataclass
class FactorPanel:
    """Aligned factor series for one estimation sample.

    ``eu_vol_raw`` is the EU volatility shock before orthogonalization; the
    ``eu_vol_excess`` property applies :func:`excess_eu_volatility` once and
    caches the result.
    """

    dates: np.ndarray
    mkt_us: np.ndarray = field(repr=False)
    mkt_eu: np.ndarray = field(repr=False)
    vol_us: np.ndarray = field(repr=False)
    eu_vol_raw: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.dates = np.asarray(self.dates)
        self.mkt_us = as_float_vector(self.mkt_us, "mkt_us")
        self.mkt_eu = as_float_vector(self.mkt_eu, "mkt_eu")
        self.vol_us = as_float_vector(self.vol_us, "vol_us")
        self.eu_vol_raw = as_float_vector(self.eu_vol_raw, "eu_vol_raw")
        n = check_same_length(
            ("dates", self.dates),
            ("mkt_us", self.mkt_us),
            ("mkt_eu", self.mkt_eu),
            ("vol_us", self.vol_us),
            ("eu_vol_raw", self.eu_vol_raw),
        )
        if n < 3:
            raise DataValidationError("factor panel needs at least 3 rows")

    def __len__(self) -> int:
        return len(self.dates)

    @cached_property
    def eu_vol_excess(self) -> np.ndarray:
        return excess_eu_volatility(self.vol_us, self.eu_vol_raw)

    def design(self, include_intercept=True) -> DesignMatrix:
        """The four factor columns (EU volatility orthogonalized), with an
        intercept by default. Excess-return regressions normally carry one,
        but it can be dropped for a pure proportional model."""
        columns = [self.mkt_us, self.mkt_eu, self.vol_us, self.eu_vol_excess]
        if include_intercept:
            return DesignMatrix(
                np.column_stack([np.ones(len(self))] + columns), intercept_included=True
            )
        return DesignMatrix(np.column_stack(columns), intercept_included=False)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "FactorPanel":
        missing = [c for c in ("mkt_us", "mkt_eu", "vol_us", "vol_eu") if c not in frame.columns]
        if missing:
            raise DataValidationError(f"factor columns missing from frame: {missing}")
        return cls(
            dates=frame.index.to_numpy(),
            mkt_us=frame["mkt_us"].to_numpy(),
            mkt_eu=frame["mkt_eu"].to_numpy(),
            vol_us=frame["vol_us"].to_numpy(),
            eu_vol_raw=frame["vol_eu"].to_numpy(),
        )


@dataclass(frozen=True)
class FactorFit:
    """Loadings and residuals for one index."""

    index_id: str
    intercept: float
    beta_us: float
    beta_eu: float
    vol_loading_us: float
    vol_loading_eu: float
    residuals: np.ndarray = field(repr=False)

    @property
    def loadings(self) -> np.ndarray:
        return np.array(
            [self.intercept, self.beta_us, self.beta_eu, self.vol_loading_us, self.vol_loading_eu]
        )


def fit_four_factor(y, factors: FactorPanel, index_id="", include_intercept=True) -> FactorFit:
    """OLS of one return series on the four factors.

    ``include_intercept=False`` drops the constant (the loadings-only model);
    the returned ``intercept`` is then exactly 0.
    """
    y = as_float_vector(y, f"returns[{index_id}]" if index_id else "returns")
    if len(y) != len(factors):
        raise DataValidationError(
            f"returns for {index_id or 'series'} have length {len(y)}, factors have {len(factors)}"
        )
    try:
        fit = ols_fit(factors.design(include_intercept), y)
    except RankDeficiencyError as err:
        offset = 0 if include_intercept else 1
        names = [FACTOR_DESIGN_COLUMNS[c + offset] for c in err.columns]
        raise RankDeficiencyError(names, f"collinear factor columns: {names}") from err
    if include_intercept:
        intercept, beta_us, beta_eu, vol_us, vol_eu = fit.coefficients
    else:
        intercept = 0.0
        beta_us, beta_eu, vol_us, vol_eu = fit.coefficients
    return FactorFit(
        index_id=str(index_id),
        intercept=float(intercept),
        beta_us=float(beta_us),
        beta_eu=float(beta_eu),
        vol_loading_us=float(vol_us),
        vol_loading_eu=float(vol_eu),
        residuals=fit.residuals,
    )


def build_residual_panel(returns: pd.DataFrame, factors: FactorPanel, include_intercept=True) -> pd.DataFrame:
    """Fit the four-factor model to every column and assemble the residuals.

    Returns a frame with the same index and column order as ``returns``.
    Errors raised while fitting a column are re-raised annotated with the
    column label.
    """
    if not isinstance(returns, pd.DataFrame):
        returns = pd.DataFrame(np.asarray(returns, dtype=float))
    if returns.shape[1] == 0:
        raise DataValidationError("return panel has no columns")
    if len(returns) != len(factors):
        raise DataValidationError(
            f"return panel has {len(returns)} rows, factors have {len(factors)}"
        )
    residuals = {}
    for label in returns.columns:
        try:
            residuals[label] = fit_four_factor(
                returns[label].to_numpy(), factors, label, include_intercept
            ).residuals
        except (DataValidationError, RankDeficiencyError) as err:
            raise type(err)(f"column {label!r}: {err}") from err
    return pd.DataFrame(residuals, index=returns.index)


class FourFactorResiduals(BaseEstimator, TransformerMixin):
    """Transformer that strips four-factor market structure from a return panel.

    Parameters
    ----------
    factors : FactorPanel
        Factor series aligned row-for-row with the panels passed to
        :meth:`fit` and :meth:`transform`.
    include_intercept : bool
        Fit an unrestricted constant per index (default). Disable for the
        loadings-only model.
    """

    def __init__(self, factors=None, include_intercept=True):
        self.factors = factors
        self.include_intercept = include_intercept

    def fit(self, X, y=None):
        if self.factors is None:
            raise DataValidationError("FourFactorResiduals requires a factors panel")
        X = self._as_frame(X)
        self.fits_ = {
            label: fit_four_factor(
                X[label].to_numpy(), self.factors, label, self.include_intercept
            )
            for label in X.columns
        }
        self.columns_ = tuple(X.columns)
        return self

    def transform(self, X):
        X = self._as_frame(X)
        if tuple(X.columns) != self.columns_:
            raise DataValidationError("transform columns differ from the fitted panel")
        design = self.factors.design().values
        out = {
            label: X[label].to_numpy() - design @ self.fits_[label].loadings
            for label in X.columns
        }
        return pd.DataFrame(out, index=X.index)

    def loadings_frame(self) -> pd.DataFrame:
        """Per-index loadings as a frame (rows: index labels)."""
        rows = {
            label: fit.loadings for label, fit in self.fits_.items()
        }
        return pd.DataFrame.from_dict(rows, orient="index", columns=FACTOR_DESIGN_COLUMNS)

    def _as_frame(self, X) -> pd.DataFrame:
        if not isinstance(X, pd.DataFrame):
            X = pd.DataFrame(np.asarray(X, dtype=float))
        if len(X) != len(self.factors):
            raise DataValidationError(
                f"panel has {len(X)} rows, factors have {len(self.factors)}"
            )
        return X
