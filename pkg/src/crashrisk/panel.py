"""Loading, cleaning and aligning the firm-week and firm-year inputs."""
from __future__ import annotations

import datetime as dt
import functools
import logging
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field, fields

from ._io import read_csv, write_csv
from .errors import DataError, DuplicateKeyError, SchemaError

log = logging.getLogger(__name__)

RETURN_COLUMNS = ("firm_id", "week", "ret", "market_ret")
FUNDAMENTAL_NUMERIC = (
    "size", "mtb", "roa", "dturn", "accm",
    "pe", "turn", "eqs", "cefd", "tobin", "lev", "bsi",
)
FUNDAMENTAL_COLUMNS = ("firm_id", "fiscal_year") + FUNDAMENTAL_NUMERIC + ("industry",)

_WEEK_RE = re.compile(r"^(\d{4})-W(\d{2})$")


def parse_week(week):
    """Return the Monday that starts ISO week ``YYYY-Www``."""
    m = _WEEK_RE.match(week)
    if not m:
        raise ValueError(f"bad ISO week {week!r}")
    return dt.date.fromisocalendar(int(m.group(1)), int(m.group(2)), 1)


def format_week(day):
    y, w, _ = day.isocalendar()
    return f"{y:04d}-W{w:02d}"


@functools.lru_cache(maxsize=65536)
def week_year(week):
    """Year a week belongs to: the calendar year of its Monday."""
    return parse_week(week).year


@dataclass(frozen=True, slots=True)
class FirmWeekRecord:
    firm_id: str
    week: str
    ret: float
    market_ret: float

    @property
    def year(self):
        return week_year(self.week)


@dataclass(frozen=True, slots=True)
class FundamentalsRow:
    firm_id: str
    fiscal_year: int
    size: float
    mtb: float
    roa: float
    dturn: float
    accm: float
    pe: float
    turn: float
    eqs: float
    cefd: float
    tobin: float
    lev: float
    bsi: float
    industry: str

    @property
    def key(self):
        return (self.firm_id, self.fiscal_year)


@dataclass(frozen=True)
class Diagnostic:
    row: int  # 1-based data row, header excluded
    column: str
    message: str

    def __str__(self):
        return f"row {self.row}, column {self.column}: {self.message}"


@dataclass
class LoadResult:
    records: list
    diagnostics: list = field(default_factory=list)


@dataclass
class CleaningReport:
    firms_in: int = 0
    firms_dropped_nonzero_filter: int = 0
    firms_dropped_min_weeks: int = 0
    weeks_dropped_invalid: int = 0
    firms_out: int = 0
    firm_years_dropped_min_weeks: int = 0
    weeks_dropped_min_weeks: int = 0

    def reconciles(self):
        return self.firms_out == (
            self.firms_in - self.firms_dropped_nonzero_filter - self.firms_dropped_min_weeks
        )

    def as_rows(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


def _resolve(header, columns, required, path):
    mapping = {name: name for name in required}
    if columns:
        mapping.update(columns)
    missing = [f"{k} (as {v!r})" if v != k else k
               for k, v in mapping.items() if k in required and v not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s): {', '.join(missing)}")
    return {k: header.index(v) for k, v in mapping.items() if k in required}


def _parse_float(text):
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("non-finite")
    return value


def load_returns(path, columns=None):
    """Read a firm-week returns file.

    Rows with an unparseable number, a bad week label or an empty market
    return become diagnostics and are left out of ``records``. A repeated
    (firm, week) pair raises :class:`DuplicateKeyError`.
    """
    header, body = read_csv(path)
    idx = _resolve(header, columns, RETURN_COLUMNS, path)
    records, diags, seen = [], [], {}
    for i, raw in enumerate(body, start=1):
        if not any(cell.strip() for cell in raw):
            continue
        cells = {k: (raw[j].strip() if j < len(raw) else "") for k, j in idx.items()}
        bad = None
        try:
            parse_week(cells["week"])
        except ValueError:
            bad = Diagnostic(i, "week", f"invalid ISO week {cells['week']!r}")
        values = {}
        for col in ("ret", "market_ret"):
            if bad:
                break
            text = cells[col]
            if col == "market_ret" and text == "":
                bad = Diagnostic(i, col, "missing market return")
                break
            try:
                values[col] = _parse_float(text)
            except ValueError:
                bad = Diagnostic(i, col, f"unparseable number {text!r}")
        if bad:
            diags.append(bad)
            continue
        key = (cells["firm_id"], cells["week"])
        if key in seen:
            raise DuplicateKeyError(key, row=i)
        seen[key] = i
        records.append(FirmWeekRecord(cells["firm_id"], cells["week"], values["ret"], values["market_ret"]))
    for d in diags:
        log.info("%s: %s", path, d)
    return LoadResult(records, diags)


def write_returns(records, path):
    write_csv(path, RETURN_COLUMNS,
              ((r.firm_id, r.week, repr(r.ret), repr(r.market_ret)) for r in records))


def load_fundamentals(path, columns=None):
    """Read the firm-year fundamentals file.

    Empty numeric cells load as NaN (listwise deletion happens at
    regression time). Unparseable cells and negative ACCM are diagnostics.
    """
    header, body = read_csv(path)
    idx = _resolve(header, columns, FUNDAMENTAL_COLUMNS, path)
    rows, diags, seen = [], [], set()
    for i, raw in enumerate(body, start=1):
        if not any(cell.strip() for cell in raw):
            continue
        cells = {k: (raw[j].strip() if j < len(raw) else "") for k, j in idx.items()}
        try:
            year = int(cells["fiscal_year"])
        except ValueError:
            diags.append(Diagnostic(i, "fiscal_year", f"not an integer {cells['fiscal_year']!r}"))
            continue
        values, bad = {}, None
        for col in FUNDAMENTAL_NUMERIC:
            text = cells[col]
            if text == "" or text.lower() in ("na", "nan"):
                values[col] = math.nan
                continue
            try:
                values[col] = _parse_float(text)
            except ValueError:
                bad = Diagnostic(i, col, f"unparseable number {text!r}")
                break
        if bad is None and values["accm"] < 0:
            bad = Diagnostic(i, "accm", "negative absolute accruals")
        if bad:
            diags.append(bad)
            continue
        key = (cells["firm_id"], year)
        if key in seen:
            raise DuplicateKeyError(key, row=i)
        seen.add(key)
        rows.append(FundamentalsRow(firm_id=cells["firm_id"], fiscal_year=year,
                                    industry=cells["industry"], **values))
    for d in diags:
        log.info("%s: %s", path, d)
    return LoadResult(rows, diags)


def write_fundamentals(rows, path):
    write_csv(path, FUNDAMENTAL_COLUMNS,
              ([getattr(r, c) if c in ("firm_id", "fiscal_year", "industry") else repr(getattr(r, c))
                for c in FUNDAMENTAL_COLUMNS] for r in rows))


def apply_cleaning_filters(records, min_nonzero_frac=0.10, min_weeks_per_year=5, invalid_rows=0):
    """Drop thin firm-years, then firms that rarely post a non-zero return.

    Firm-years with fewer than ``min_weeks_per_year`` weeks go first; the
    non-zero fraction is then measured over each firm's remaining sample.
    This order makes the filter idempotent. Output is sorted by
    (firm_id, week), so input order does not matter.
    """
    if not 0.0 <= min_nonzero_frac <= 1.0:
        raise ValueError("min_nonzero_frac must lie in [0, 1]")
    if min_weeks_per_year < 1:
        raise ValueError("min_weeks_per_year must be >= 1")
    report = CleaningReport(weeks_dropped_invalid=invalid_rows)
    if not records:
        return [], report

    by_firm_year = defaultdict(list)
    for r in records:
        by_firm_year[(r.firm_id, r.year)].append(r)
    firms = {r.firm_id for r in records}
    report.firms_in = len(firms)

    by_firm = defaultdict(list)
    for (firm, _), recs in by_firm_year.items():
        if len(recs) < min_weeks_per_year:
            report.firm_years_dropped_min_weeks += 1
            report.weeks_dropped_min_weeks += len(recs)
        else:
            by_firm[firm].extend(recs)
    report.firms_dropped_min_weeks = len(firms) - len(by_firm)

    kept = []
    for firm, recs in by_firm.items():
        nonzero = sum(1 for r in recs if r.ret != 0.0)
        if nonzero / len(recs) < min_nonzero_frac:
            report.firms_dropped_nonzero_filter += 1
            continue
        kept.extend(recs)
    kept.sort(key=lambda r: (r.firm_id, r.week))
    report.firms_out = len({r.firm_id for r in kept})
    return kept, report


@dataclass
class AlignedPanel:
    rows: dict  # (firm_id, year) -> (returns-side item, FundamentalsRow)
    dropped_returns_only: int
    dropped_fundamentals_only: int

    def keys(self):
        return sorted(self.rows)


def align_panel(returns, fundamentals):
    """Inner-join firm-year returns items with fundamentals rows.

    ``returns`` maps (firm_id, year) to anything (typically a firm-year
    slice). Keys found on one side only are counted, not raised.
    """
    fund = {}
    for row in fundamentals:
        if row.key in fund:
            raise DuplicateKeyError(row.key)
        fund[row.key] = row
    ret_keys, fund_keys = set(returns), set(fund)
    both = ret_keys & fund_keys
    rows = {k: (returns[k], fund[k]) for k in sorted(both)}
    return AlignedPanel(rows, len(ret_keys - both), len(fund_keys - both))


def market_series(records):
    """Week -> market return over all records; conflicting values are an error."""
    series = {}
    for r in records:
        prev = series.setdefault(r.week, r.market_ret)
        if prev != r.market_ret:
            raise DataError(f"conflicting market returns for week {r.week}: {prev} vs {r.market_ret}")
    return series
