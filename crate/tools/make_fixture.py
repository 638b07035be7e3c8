#!/usr/bin/env python3
"""Generate the bundled OHLCV fixture: a synthetic daily series calibrated to
S&P 500 index levels over 1990-07-15..2020-07-15.

The series is NOT real market data. It is a seeded log-return process with:
  * regime-dependent drift and volatility (bear markets and crashes in
    1990, 2000-2002, 2008-2009, 2018, 2020 plus a 2020 rebound),
  * mild positive autocorrelation of daily returns (an AR(1) momentum term),
  * volume growing from ~1.6e8 to ~4.5e9 shares with |return|-linked spikes,
  * a trading calendar of weekdays minus US-style holidays, trimmed so the
    file holds exactly 7562 data rows: 7559 clean rows plus 3 `null` rows
    (the vendor emits such rows for some holidays, and the parser must drop
    and count them).

Endpoints are pinned: the first row is 1990-07-15 at 361.23 and the last row
is the real-shaped `2020-07-15,3225.98,3238.28,3200.76,3226.56,...` quote, so
the level range matches the index over that period.

Deterministic: fixed RNG seed, byte-identical output on every run.

Usage: python3 tools/make_fixture.py > crates/convcast/data/sp500.csv
"""

import datetime as dt
import math
import sys

import numpy as np

SEED = 20200715
TOTAL_ROWS = 7562          # data rows in the file (incl. null rows)
NULL_ROW_INDICES = (1507, 3511, 6203)  # mid-series, never first/last
FIRST_DATE = dt.date(1990, 7, 15)
LAST_DATE = dt.date(2020, 7, 15)
FIRST_CLOSE = 361.23
PENULTIMATE_CLOSE = 3197.52
FINAL_ROW = "2020-07-15,3225.98,3238.28,3200.76,3226.56,3226.56,4669210000"
MOMENTUM = 0.10            # AR(1) coefficient on daily log returns


def nth_weekday(year, month, weekday, n):
    d = dt.date(year, month, 1)
    offset = (weekday - d.weekday()) % 7
    return d + dt.timedelta(days=offset + 7 * (n - 1))


def last_weekday(year, month, weekday):
    if month == 12:
        d = dt.date(year, 12, 31)
    else:
        d = dt.date(year, month + 1, 1) - dt.timedelta(days=1)
    return d - dt.timedelta(days=(d.weekday() - weekday) % 7)


def observed(d):
    # Saturday holidays observed Friday, Sunday ones Monday.
    if d.weekday() == 5:
        return d - dt.timedelta(days=1)
    if d.weekday() == 6:
        return d + dt.timedelta(days=1)
    return d


def holidays(year):
    out = {
        observed(dt.date(year, 1, 1)),
        nth_weekday(year, 2, 0, 3),          # Presidents Day
        last_weekday(year, 5, 0),            # Memorial Day
        observed(dt.date(year, 7, 4)),
        nth_weekday(year, 9, 0, 1),          # Labor Day
        nth_weekday(year, 11, 3, 4),         # Thanksgiving
        observed(dt.date(year, 12, 25)),
    }
    if year >= 1998:
        out.add(nth_weekday(year, 1, 0, 3))  # MLK Day
    return out


# Historical multi-day closures inside the range, used to trim the calendar
# to the exact row count.
EXTRA_CLOSURES = [
    dt.date(2001, 9, 11), dt.date(2001, 9, 12), dt.date(2001, 9, 13),
    dt.date(2001, 9, 14),
    dt.date(2012, 10, 29), dt.date(2012, 10, 30),
    dt.date(1994, 4, 27), dt.date(2004, 6, 11), dt.date(2007, 1, 2),
    dt.date(2018, 12, 5),
    # Good Fridays (a sample; appended until the calendar count matches)
    dt.date(1991, 3, 29), dt.date(1992, 4, 17), dt.date(1993, 4, 9),
    dt.date(1994, 4, 1), dt.date(1995, 4, 14), dt.date(1996, 4, 5),
    dt.date(1997, 3, 28), dt.date(1998, 4, 10), dt.date(1999, 4, 2),
    dt.date(2000, 4, 21), dt.date(2002, 3, 29), dt.date(2003, 4, 18),
    dt.date(2004, 4, 9), dt.date(2005, 3, 25), dt.date(2006, 4, 14),
    dt.date(2007, 4, 6), dt.date(2008, 3, 21), dt.date(2009, 4, 10),
    dt.date(2010, 4, 2), dt.date(2011, 4, 22), dt.date(2012, 4, 6),
    dt.date(2013, 3, 29), dt.date(2014, 4, 18), dt.date(2015, 4, 3),
    dt.date(2016, 3, 25), dt.date(2017, 4, 14), dt.date(2018, 3, 30),
    dt.date(2019, 4, 19), dt.date(2020, 4, 10),
]


def build_calendar():
    """First date pinned, then weekdays minus holidays, trimmed to size."""
    holiday_set = set()
    for year in range(FIRST_DATE.year, LAST_DATE.year + 1):
        holiday_set |= holidays(year)

    days = [FIRST_DATE]
    d = FIRST_DATE + dt.timedelta(days=1)
    while d <= LAST_DATE:
        if d.weekday() < 5 and d not in holiday_set:
            days.append(d)
        d += dt.timedelta(days=1)

    excess = len(days) - TOTAL_ROWS
    if excess < 0:
        raise SystemExit(f"calendar too small by {-excess}; relax the holiday rules")
    removable = [d for d in EXTRA_CLOSURES if d in set(days)]
    if excess > len(removable):
        raise SystemExit(f"need {excess} closures, only {len(removable)} listed")
    drop = set(removable[:excess])
    days = [d for d in days if d not in drop]
    assert len(days) == TOTAL_ROWS
    assert days[0] == FIRST_DATE and days[-1] == LAST_DATE
    return days


def regime(date):
    """(daily drift, daily volatility) of log returns by era."""
    r = [
        ((1990, 7, 16), (1990, 10, 12), -0.0012, 0.013),   # oil-shock bear
        ((1997, 10, 20), (1997, 11, 14), -0.0005, 0.018),  # Asia wobble
        ((1998, 8, 3), (1998, 10, 9), -0.0015, 0.020),     # LTCM
        ((2000, 3, 24), (2002, 10, 9), -0.0009, 0.014),    # dot-com unwind
        ((2007, 10, 10), (2008, 8, 29), -0.0010, 0.014),   # pre-crisis slide
        ((2008, 9, 1), (2009, 3, 9), -0.0040, 0.032),      # financial crisis
        ((2011, 7, 25), (2011, 10, 4), -0.0018, 0.022),    # debt-ceiling dip
        ((2015, 8, 17), (2016, 2, 11), -0.0006, 0.013),    # China scare
        ((2018, 9, 21), (2018, 12, 24), -0.0025, 0.015),   # rate-hike slide
        ((2020, 2, 20), (2020, 3, 23), -0.0140, 0.048),    # pandemic crash
        ((2020, 3, 24), (2020, 7, 15), 0.0038, 0.022),     # rebound
    ]
    for start, end, drift, vol in r:
        if dt.date(*start) <= date <= dt.date(*end):
            return drift, vol
    return 0.00052, 0.0085                                  # secular bull


def main():
    rng = np.random.default_rng(SEED)
    days = build_calendar()
    n = len(days)

    # Log-return path with AR(1) momentum, endpoints tilted to the pinned
    # closes. The tilt shifts every return by the same constant, preserving
    # the autocorrelation structure.
    drifts = np.empty(n - 1)
    vols = np.empty(n - 1)
    for i, d in enumerate(days[1:]):
        drifts[i], vols[i] = regime(d)
    eps = rng.standard_normal(n - 1)
    returns = np.empty(n - 1)
    prev_dev = 0.0
    for i in range(n - 1):
        dev = MOMENTUM * prev_dev + vols[i] * eps[i]
        returns[i] = drifts[i] + dev
        prev_dev = dev

    # Pin close[0] and close[n-2]; the final day is the fixed quote.
    target_total = math.log(PENULTIMATE_CLOSE / FIRST_CLOSE)
    tilt = (target_total - returns[: n - 2].sum()) / (n - 2)
    returns[: n - 2] += tilt
    log_close = math.log(FIRST_CLOSE) + np.concatenate([[0.0], np.cumsum(returns)])
    closes = np.exp(log_close)

    # Volume: growth that saturates in the early 2010s (index volume roughly
    # plateaued after the electronic-trading buildout), plus noise and
    # |return|-linked spikes.
    t_frac = np.arange(n) / (n - 1)
    log10_vol = 8.20 + 1.40 / (1.0 + np.exp(-(t_frac - 0.45) / 0.12))
    rel_move = np.concatenate([[0.0], np.abs(returns) / vols])
    log10_vol += 0.09 * rel_move + rng.normal(0.0, 0.06, size=n)
    volumes = (np.power(10.0, log10_vol) / 10000).round() * 10000

    gap = np.clip(rng.normal(0.0, 0.0022, size=n), -0.008, 0.008)
    span_hi = np.abs(rng.normal(0.0, 0.0045, size=n)) + 0.0012
    span_lo = np.abs(rng.normal(0.0, 0.0045, size=n)) + 0.0012

    out = sys.stdout
    out.write("Date,Open,High,Low,Close,Adj Close,Volume\n")
    for i, day in enumerate(days):
        if i == n - 1:
            out.write(FINAL_ROW + "\n")
            continue
        if i in NULL_ROW_INDICES:
            out.write(f"{day},null,null,null,null,null,null\n")
            continue
        close = closes[i]
        open_ = close if i == 0 else closes[i - 1] * (1.0 + gap[i])
        high = max(open_, close) * (1.0 + span_hi[i])
        low = min(open_, close) * (1.0 - span_lo[i])
        out.write(
            f"{day},{open_:.2f},{high:.2f},{low:.2f},{close:.2f},{close:.2f},{volumes[i]:.0f}\n"
        )


if __name__ == "__main__":
    main()
