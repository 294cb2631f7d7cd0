"""CSV/JSON ingestion and artifact writers.

Input formats
-------------
Return panel (Case I): one CSV with a ``date`` column, the four factor
columns ``mkt_us, mkt_eu, vol_us, vol_eu``, and one column per index. Dates
must be strictly increasing and no cell may be missing (rolling windows need
contiguous observations).

Firm panel (Case II): long CSV with columns ``firm_id, year, value``;
irregular gaps are fine, duplicate (firm, year) rows are not. Years are
shifted to a 1-based grid internally; loaders return the offset so reports
can speak in calendar years.

Every artifact carries ``schema_version`` (a leading ``# schema_version=N``
comment line for CSVs, a field for JSON records).
"""

import json

import numpy as np
import pandas as pd

from .changepoint import FirmSeries
from .errors import DataValidationError

SCHEMA_VERSION = 1
FACTOR_COLUMNS = ("mkt_us", "mkt_eu", "vol_us", "vol_eu")


def _read_csv(path, **kwargs):
    try:
        # round_trip parsing keeps load(write(x)) == x bit-exact
        frame = pd.read_csv(path, comment="#", float_precision="round_trip", **kwargs)
    except pd.errors.EmptyDataError as err:
        raise DataValidationError(f"{path}: no data") from err
    except (OSError, ValueError) as err:
        raise DataValidationError(f"{path}: {err}") from err
    if frame.empty:
        raise DataValidationError(f"{path}: no data rows")
    return frame


def _leading_comment_lines(path):
    count = 0
    try:
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                if line.startswith("#"):
                    count += 1
                else:
                    break
    except OSError:
        pass
    return count


def _csv_line(path, frame_position):
    # physical line = leading comments + header + 1-based row position
    return int(frame_position) + 2 + _leading_comment_lines(path)


def load_return_panel(path):
    """Load and validate a Case I panel; returns ``(returns, factors)``.

    ``returns`` is a date-indexed frame of the index columns; ``factors`` is
    a :class:`~regimescan.factors.FactorPanel` built from the factor columns.
    """
    from .factors import FactorPanel

    frame = _read_csv(path)
    if "date" not in frame.columns:
        raise DataValidationError(f"{path}: missing 'date' column")
    missing_factors = [c for c in FACTOR_COLUMNS if c not in frame.columns]
    if missing_factors:
        raise DataValidationError(f"{path}: missing factor columns {missing_factors}")
    series_cols = [c for c in frame.columns if c != "date" and c not in FACTOR_COLUMNS]
    if not series_cols:
        raise DataValidationError(f"{path}: no index return columns found")

    try:
        dates = pd.to_datetime(frame["date"])
    except (ValueError, TypeError) as err:
        raise DataValidationError(f"{path}: unparseable date: {err}") from err
    if dates.isna().any():
        row = int(dates.index[dates.isna()][0])
        raise DataValidationError(f"{path}: unparseable date at line {_csv_line(path, row)}")
    if not dates.is_monotonic_increasing or dates.duplicated().any():
        raise DataValidationError(f"{path}: dates must be strictly increasing")

    numeric = frame[list(FACTOR_COLUMNS) + series_cols].apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1)
    if bad.any():
        row = int(numeric.index[bad][0])
        raise DataValidationError(
            f"{path}: missing or non-numeric value at line {_csv_line(path, row)}"
        )

    returns = numeric[series_cols].copy()
    returns.index = pd.DatetimeIndex(dates.values, name="date")
    factors = FactorPanel(
        dates=returns.index.to_numpy(),
        mkt_us=numeric["mkt_us"].to_numpy(),
        mkt_eu=numeric["mkt_eu"].to_numpy(),
        vol_us=numeric["vol_us"].to_numpy(),
        eu_vol_raw=numeric["vol_eu"].to_numpy(),
    )
    return returns, factors


def write_return_panel(path, panel):
    """Write a combined factor + returns frame back to the Case I format."""
    out = panel.reset_index()
    out = out.rename(columns={out.columns[0]: "date"})
    out["date"] = pd.to_datetime(out["date"]).dt.strftime("%Y-%m-%d")
    write_frame_csv(path, out)


def load_firm_csv(path):
    """Load a Case II firm panel; returns ``(firms, year_offset)``.

    Observation years are mapped onto the 1-based grid ``year - offset``;
    ``year_offset = min(year) - 1`` so reports can map back to calendar years.
    """
    frame = _read_csv(path)
    required = ("firm_id", "year", "value")
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise DataValidationError(f"{path}: missing columns {missing}")

    years = pd.to_numeric(frame["year"], errors="coerce")
    values = pd.to_numeric(frame["value"], errors="coerce")
    bad = years.isna() | (years != years.round()) | values.isna() | ~np.isfinite(values)
    if bad.any():
        row = int(frame.index[bad][0])
        raise DataValidationError(f"{path}: malformed row at line {_csv_line(path, row)}")
    years = years.astype(int)

    duplicated = frame.assign(year=years).duplicated(subset=["firm_id", "year"], keep=False)
    if duplicated.any():
        row = int(frame.index[duplicated][0])
        firm = frame.loc[row, "firm_id"]
        raise DataValidationError(
            f"{path}: duplicate (firm_id, year) for firm {firm!r} at line {_csv_line(path, row)}"
        )

    offset = int(years.min()) - 1
    firms = []
    grouped = frame.assign(year=years - offset, value=values).sort_values(["firm_id", "year"])
    for firm_id, group in grouped.groupby("firm_id", sort=True):
        firms.append(
            FirmSeries(
                firm_id=str(firm_id),
                times=group["year"].to_numpy(),
                values=group["value"].to_numpy(),
            )
        )
    return firms, offset


def write_firm_csv(path, firms, year_offset=0):
    rows = [
        {"firm_id": firm.firm_id, "year": int(t) + year_offset, "value": v}
        for firm in firms
        for t, v in zip(firm.times, firm.values)
    ]
    write_frame_csv(path, pd.DataFrame(rows, columns=["firm_id", "year", "value"]))


def write_frame_csv(path, frame):
    """Write any frame with the standard schema-version comment header."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(f"# schema_version={SCHEMA_VERSION}\n")
        frame.to_csv(handle, index=False)




def _window_start_string(value):
    if isinstance(value, (pd.Timestamp, np.datetime64)):
        return pd.Timestamp(value).date().isoformat()
    return str(value)


def write_snapshots_jsonl(path, snapshots):
    """One JSON record per window: start date, adjacency, sigma, p-value."""
    with open(path, "w", encoding="utf-8") as handle:
        for snap in snapshots:
            record = {
                "schema_version": SCHEMA_VERSION,
                "window_start": _window_start_string(snap.window_start),
                "adjacency": [int(v) for v in np.asarray(snap.adjacency).ravel()],
                "sigma": [float(v) for v in np.asarray(snap.sigma).ravel()],
                "pvalue": float(snap.empty_graph_pvalue),
            }
            handle.write(json.dumps(record) + "\n")


def read_snapshots_jsonl(path):
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                records.append(json.loads(line))
    return records


def write_long_series_csv(path, rows):
    """Long-format series artifact: window_start, node_or_pair, value."""
    frame = pd.DataFrame(rows, columns=["window_start", "node_or_pair", "value"])
    frame["window_start"] = frame["window_start"].map(_window_start_string)
    write_frame_csv(path, frame)


def degree_rows(snapshots):
    from .graphs import degree_series

    labels = snapshots[0].labels
    rows = []
    for label in labels:
        for snap, value in zip(snapshots, degree_series(snapshots, label)):
            rows.append((snap.window_start, label, int(value)))
    return rows


def coefficient_rows(snapshots):
    from .graphs import coefficient_series

    labels = snapshots[0].labels
    rows = []
    for source in labels:
        for target in labels:
            if source == target:
                continue
            series = coefficient_series(snapshots, source, target)
            for snap, value in zip(snapshots, series):
                rows.append((snap.window_start, f"{source}->{target}", float(value)))
    return rows


def write_posteriors_csv(path, posteriors, year_offset=0):
    rows = [
        {
            "firm_id": posterior.firm_id,
            "k": (int(k) + year_offset if k > 0 else 0),
            "probability": float(p),
        }
        for posterior in posteriors
        for k, p in enumerate(posterior.probs)
    ]
    write_frame_csv(path, pd.DataFrame(rows, columns=["firm_id", "k", "probability"]))


def write_weights_csv(path, weight_mean, year_offset=0):
    rows = [
        {"k": (int(k) + year_offset if k > 0 else 0), "weight_mean": float(w)}
        for k, w in enumerate(weight_mean)
    ]
    write_frame_csv(path, pd.DataFrame(rows, columns=["k", "weight_mean"]))


def write_screen_report(path, hits, cutoff, year_offset=0):
    report = {
        "schema_version": SCHEMA_VERSION,
        "cutoff": cutoff,
        "n_flagged": len(hits),
        "firms": [
            {
                "rank": rank,
                "firm_id": hit.firm_id,
                "peak_prob": float(hit.peak_prob),
                "changepoint_year": int(hit.peak_index) + year_offset,
            }
            for rank, hit in enumerate(hits, start=1)
        ],
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(report, handle, indent=2)
        handle.write("\n")
    return report


def write_json(path, payload):
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, default=_json_default)
        handle.write("\n")


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value)}")
