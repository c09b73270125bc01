"""Tick ingestion, synthetic tick generation and calendar resampling.

Timestamps are integer milliseconds UTC. A trading session is one UTC
calendar day restricted to ``[open, close)``; periods are aligned to the
session open, never to midnight, and never span two sessions.

Quote volume imbalance is ``ask_volume - bid_volume`` throughout: a positive
value means more resting volume on the ask side.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import (
    CrossedQuote,
    EmptyInput,
    InvalidConfig,
    MalformedRow,
    NonMonotoneTime,
    ScaleDoesNotDivideSession,
)

MS_PER_MINUTE = 60_000
MS_PER_DAY = 86_400_000

TICK_COLUMNS = (
    "timestamp",
    "symbol",
    "trade_price",
    "trade_volume",
    "bid_price",
    "ask_price",
    "bid_volume",
    "ask_volume",
)

AGGREGATE_COLUMNS = (
    "symbol",
    "session",
    "period_index",
    "period_start",
    "scale_minutes",
    "mean_trade_price",
    "mean_spread",
    "total_trade_volume",
    "mean_quote_imbalance",
    "tick_count",
    "avg_price_return",
)


@dataclass(frozen=True)
class TickRecord:
    timestamp: int
    symbol: str
    trade_price: float
    trade_volume: float
    bid_price: float
    ask_price: float
    bid_volume: float
    ask_volume: float

    @property
    def spread(self) -> float:
        return self.ask_price - self.bid_price

    @property
    def imbalance(self) -> float:
        return self.ask_volume - self.bid_volume


@dataclass(frozen=True)
class Session:
    """Daily trading hours as minutes after UTC midnight."""

    open_minute: int = 9 * 60
    close_minute: int = 17 * 60

    def __post_init__(self):
        if not 0 <= self.open_minute < self.close_minute <= 24 * 60:
            raise InvalidConfig(
                f"session must satisfy 0 <= open < close <= 1440, got "
                f"{self.open_minute}..{self.close_minute}"
            )

    @classmethod
    def from_strings(cls, open_time: str, close_time: str) -> "Session":
        return cls(_parse_hhmm(open_time), _parse_hhmm(close_time))

    @property
    def length_minutes(self) -> int:
        return self.close_minute - self.open_minute

    def periods(self, scale_minutes: int) -> int:
        check_scale(scale_minutes, self)
        return self.length_minutes // scale_minutes

    def to_strings(self) -> tuple[str, str]:
        return _format_hhmm(self.open_minute), _format_hhmm(self.close_minute)


def _parse_hhmm(text: str) -> int:
    try:
        hours, minutes = text.split(":")
        return int(hours) * 60 + int(minutes)
    except ValueError:
        raise InvalidConfig(f"expected HH:MM, got {text!r}") from None


def _format_hhmm(minute: int) -> str:
    return f"{minute // 60:02d}:{minute % 60:02d}"


def check_scale(scale_minutes: int, session: Session) -> None:
    if scale_minutes <= 0 or session.length_minutes % scale_minutes:
        raise ScaleDoesNotDivideSession(
            f"scale {scale_minutes} min does not divide the "
            f"{session.length_minutes}-min session"
        )


@dataclass(frozen=True)
class PeriodAggregate:
    symbol: str
    session: str
    period_index: int
    period_start: int
    scale_minutes: int
    mean_trade_price: float
    mean_spread: float
    total_trade_volume: float
    mean_quote_imbalance: float
    tick_count: int
    avg_price_return: float


# --------------------------------------------------------------------------
# CSV


def parse_tick_csv(lines: Iterable[str], on_unsorted: str = "reject") -> list[TickRecord]:
    """Parse tick rows in the documented column layout.

    ``on_unsorted`` selects what happens when a symbol's timestamps regress:
    ``"reject"`` raises :class:`NonMonotoneTime`, ``"sort"`` stable-sorts the
    parsed records by timestamp.
    """
    if on_unsorted not in ("reject", "sort"):
        raise ValueError(f"on_unsorted must be 'reject' or 'sort', got {on_unsorted!r}")
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != TICK_COLUMNS:
        raise MalformedRow(1, f"header must be {','.join(TICK_COLUMNS)}")

    ticks = []
    last_seen: dict[str, int] = {}
    unsorted = False
    for row in reader:
        line = reader.line_num
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        tick = _parse_row(row, line)
        prev = last_seen.get(tick.symbol)
        if prev is not None and tick.timestamp < prev:
            if on_unsorted == "reject":
                raise NonMonotoneTime(line, f"{tick.symbol} timestamp {tick.timestamp} < {prev}")
            unsorted = True
        last_seen[tick.symbol] = max(tick.timestamp, prev if prev is not None else tick.timestamp)
        ticks.append(tick)
    if unsorted:
        ticks.sort(key=lambda t: t.timestamp)
    return ticks


def _parse_row(row: list[str], line: int) -> TickRecord:
    if len(row) != len(TICK_COLUMNS):
        raise MalformedRow(line, f"expected {len(TICK_COLUMNS)} fields, got {len(row)}")
    try:
        timestamp = int(row[0])
        symbol = row[1].strip()
        values = [float(x) for x in row[2:]]
    except ValueError as exc:
        raise MalformedRow(line, str(exc)) from None
    trade_price, trade_volume, bid, ask, bid_volume, ask_volume = values
    if not symbol or not all(math.isfinite(v) for v in values):
        raise MalformedRow(line, "empty symbol or non-finite value")
    if trade_price <= 0 or min(trade_volume, bid, ask, bid_volume, ask_volume) < 0:
        raise MalformedRow(line, "negative volume/quote or nonpositive trade price")
    if bid > 0 and ask > 0 and ask < bid:
        raise CrossedQuote(line, f"ask {ask} < bid {bid}")
    return TickRecord(timestamp, symbol, trade_price, trade_volume, bid, ask, bid_volume, ask_volume)


def write_tick_csv(ticks: Iterable[TickRecord], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(TICK_COLUMNS)
    for t in ticks:
        writer.writerow(
            (t.timestamp, t.symbol, repr(t.trade_price), repr(t.trade_volume), repr(t.bid_price),
             repr(t.ask_price), repr(t.bid_volume), repr(t.ask_volume))
        )


def ticks_to_csv(ticks: Iterable[TickRecord]) -> str:
    buf = io.StringIO()
    write_tick_csv(ticks, buf)
    return buf.getvalue()


def write_aggregates_csv(aggregates: Iterable[PeriodAggregate], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(AGGREGATE_COLUMNS)
    for a in aggregates:
        writer.writerow([getattr(a, c) if not isinstance(getattr(a, c), float) else repr(getattr(a, c))
                         for c in AGGREGATE_COLUMNS])


# --------------------------------------------------------------------------
# resampling


def session_label(timestamp: int) -> str:
    day = timestamp // MS_PER_DAY
    return (dt.date(1970, 1, 1) + dt.timedelta(days=int(day))).isoformat()


def resample(ticks: Sequence[TickRecord], scale_minutes: int,
             session: Session = Session()) -> list[PeriodAggregate]:
    """Aggregate one symbol's time-sorted ticks into calendar periods.

    Ticks outside session hours are ignored and empty periods are dropped.
    ``avg_price_return`` is the relative change in mean trade price against
    the immediately preceding period of the same session; it is 0 for the
    first period of a session and for the first period after a gap.
    """
    check_scale(scale_minutes, session)
    if not ticks:
        raise EmptyInput("no ticks to resample")
    period_ms = scale_minutes * MS_PER_MINUTE
    open_ms = session.open_minute * MS_PER_MINUTE
    close_ms = session.close_minute * MS_PER_MINUTE

    buckets: dict[tuple[int, int], list[float]] = {}
    order: list[tuple[int, int]] = []
    symbol = ticks[0].symbol
    for t in ticks:
        day, offset = divmod(t.timestamp, MS_PER_DAY)
        if not open_ms <= offset < close_ms:
            continue
        key = (day, (offset - open_ms) // period_ms)
        acc = buckets.get(key)
        if acc is None:
            acc = buckets[key] = [0.0, 0.0, 0.0, 0.0, 0]
            order.append(key)
        acc[0] += t.trade_price
        acc[1] += t.ask_price - t.bid_price
        acc[2] += t.trade_volume
        acc[3] += t.ask_volume - t.bid_volume
        acc[4] += 1
    if not order:
        raise EmptyInput("no ticks fall inside session hours")

    out = []
    prev_key = None
    prev_price = 0.0
    for key in sorted(order):
        price_sum, spread_sum, volume, imb_sum, n = buckets[key]
        day, index = key
        mean_price = price_sum / n
        if prev_key == (day, index - 1):
            ret = (mean_price - prev_price) / prev_price
        else:
            ret = 0.0
        out.append(PeriodAggregate(
            symbol=symbol,
            session=session_label(day * MS_PER_DAY),
            period_index=int(index),
            period_start=int(day * MS_PER_DAY + open_ms + index * period_ms),
            scale_minutes=scale_minutes,
            mean_trade_price=mean_price,
            mean_spread=spread_sum / n,
            total_trade_volume=volume,
            mean_quote_imbalance=imb_sum / n,
            tick_count=n,
            avg_price_return=ret,
        ))
        prev_key, prev_price = key, mean_price
    return out


def split_by_symbol(ticks: Iterable[TickRecord]) -> dict[str, list[TickRecord]]:
    out: dict[str, list[TickRecord]] = {}
    for t in ticks:
        out.setdefault(t.symbol, []).append(t)
    return dict(sorted(out.items()))


# --------------------------------------------------------------------------
# synthetic generator


@dataclass(frozen=True)
class RegimeConfig:
    """Parameters of the regime-switching tick generator.

    A hidden Markov chain steps once per ``base_minutes`` block. The active
    regime sets the expected per-block change of the four observed series:
    fractional trade price ``drift``, ``spread_change`` (currency),
    ``volume_change`` (shares per block) and ``imbalance_change`` (shares).
    Spread, volume and imbalance restart at their base levels every session
    open; the price carries over.
    """

    drift: tuple[float, ...] = (0.002, -0.002, 0.0)
    spread_change: tuple[float, ...] = (-0.001, 0.001, 0.0)
    volume_change: tuple[float, ...] = (150.0, -150.0, 0.0)
    imbalance_change: tuple[float, ...] = (-60.0, 60.0, 0.0)
    transition: tuple[tuple[float, ...], ...] = (
        (0.8, 0.1, 0.1),
        (0.1, 0.8, 0.1),
        (0.1, 0.1, 0.8),
    )
    session: Session = Session()
    sessions: int = 20
    start_date: str = "2012-11-01"
    tick_rate: float = 2.0
    base_minutes: int = 5
    symbols: tuple[str, ...] = ("SYN",)
    seed: int = 0
    base_price: float = 100.0
    base_spread: float = 0.30
    base_volume: float = 20_000.0
    base_depth: float = 2_000.0
    min_spread: float = 0.01
    price_volatility: float = 0.0004
    spread_noise: float = 0.0002
    volume_noise: float = 30.0
    imbalance_noise: float = 10.0
    depth_noise: float = 10.0
    tick_price_noise: float = 2e-5

    @property
    def regime_count(self) -> int:
        return len(self.drift)

    def validate(self) -> None:
        k = self.regime_count
        if k < 1:
            raise InvalidConfig("regime_count must be >= 1")
        for name in ("spread_change", "volume_change", "imbalance_change"):
            if len(getattr(self, name)) != k:
                raise InvalidConfig(f"{name} must have {k} entries")
        P = np.asarray(self.transition, dtype=float)
        if P.shape != (k, k):
            raise InvalidConfig(f"transition must be {k}x{k}")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise InvalidConfig("transition rows must be nonnegative and sum to 1")
        positive = ("tick_rate", "base_minutes", "sessions", "base_price", "base_spread",
                    "base_volume", "base_depth", "min_spread")
        for name in positive:
            if not getattr(self, name) > 0:
                raise InvalidConfig(f"{name} must be positive")
        for name in ("price_volatility", "spread_noise", "volume_noise", "imbalance_noise",
                     "depth_noise", "tick_price_noise"):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"{name} must be nonnegative")
        if not self.symbols:
            raise InvalidConfig("at least one symbol is required")
        check_scale(self.base_minutes, self.session)
        try:
            dt.date.fromisoformat(self.start_date)
        except ValueError:
            raise InvalidConfig(f"bad start_date {self.start_date!r}") from None

    def session_days(self) -> list[dt.date]:
        """Weekday calendar dates of the generated sessions."""
        day = dt.date.fromisoformat(self.start_date)
        days = []
        while len(days) < self.sessions:
            if day.weekday() < 5:
                days.append(day)
            day += dt.timedelta(days=1)
        return days


@dataclass(frozen=True)
class PlantedLabel:
    symbol: str
    session: str
    period_start: int
    regime: int


@dataclass
class SyntheticMarket:
    ticks: list[TickRecord]
    labels: list[PlantedLabel] = field(default_factory=list)

    def labels_by_period(self) -> dict[tuple[str, int], int]:
        return {(lab.symbol, lab.period_start): lab.regime for lab in self.labels}


def generate_synthetic_market(config: RegimeConfig) -> SyntheticMarket:
    """Generate ticks plus the planted regime of every base period."""
    config.validate()
    root = np.random.SeedSequence(config.seed)
    ticks: list[TickRecord] = []
    labels: list[PlantedLabel] = []
    for symbol, child in zip(config.symbols, root.spawn(len(config.symbols))):
        sym_ticks, sym_labels = _generate_symbol(config, symbol, np.random.default_rng(child))
        ticks.extend(sym_ticks)
        labels.extend(sym_labels)
    ticks.sort(key=lambda t: t.timestamp)
    return SyntheticMarket(ticks, labels)


def generate_synthetic_ticks(config: RegimeConfig) -> list[TickRecord]:
    return generate_synthetic_market(config).ticks


def _generate_symbol(config: RegimeConfig, symbol: str, rng: np.random.Generator):
    P = np.asarray(config.transition, dtype=float)
    k = config.regime_count
    block_ms = config.base_minutes * MS_PER_MINUTE
    blocks = config.session.length_minutes // config.base_minutes
    extra_ticks = config.tick_rate * config.base_minutes - 1.0
    open_ms = config.session.open_minute * MS_PER_MINUTE

    regime = int(rng.integers(k))
    price = config.base_price
    ticks, labels = [], []
    for day in config.session_days():
        day_ms = (day - dt.date(1970, 1, 1)).days * MS_PER_DAY
        spread, volume, imbalance = config.base_spread, config.base_volume, 0.0
        for b in range(blocks):
            if b or labels:
                regime = int(rng.choice(k, p=P[regime]))
            price *= 1.0 + config.drift[regime] + config.price_volatility * rng.standard_normal()
            spread = max(config.min_spread, spread + config.spread_change[regime]
                         + config.spread_noise * rng.standard_normal())
            volume = max(0.0, volume + config.volume_change[regime]
                         + config.volume_noise * rng.standard_normal())
            imbalance += config.imbalance_change[regime] + config.imbalance_noise * rng.standard_normal()

            start = day_ms + open_ms + b * block_ms
            n = 1 + int(rng.poisson(max(extra_ticks, 0.0)))
            times = np.sort(rng.integers(start, start + block_ms, size=n))
            vols = rng.multinomial(int(round(volume)), np.full(n, 1.0 / n))
            trade = price * (1.0 + config.tick_price_noise * rng.standard_normal(n))
            half = spread / 2.0
            depth_jitter = config.depth_noise * rng.standard_normal((n, 2))
            for i in range(n):
                bid_vol = max(0.0, round(config.base_depth - imbalance / 2 + depth_jitter[i, 0]))
                ask_vol = max(0.0, round(config.base_depth + imbalance / 2 + depth_jitter[i, 1]))
                ticks.append(TickRecord(
                    timestamp=int(times[i]),
                    symbol=symbol,
                    trade_price=round(float(trade[i]), 4),
                    trade_volume=float(vols[i]),
                    bid_price=round(price - half, 4),
                    ask_price=round(price + half, 4),
                    bid_volume=float(bid_vol),
                    ask_volume=float(ask_vol),
                ))
            labels.append(PlantedLabel(symbol, day.isoformat(), int(start), regime))
    return ticks, labels


def write_labels_csv(labels: Iterable[PlantedLabel], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(("symbol", "session", "period_start", "regime"))
    for lab in labels:
        writer.writerow((lab.symbol, lab.session, lab.period_start, lab.regime))


def read_labels_csv(lines: Iterable[str]) -> list[PlantedLabel]:
    reader = csv.DictReader(lines)
    return [PlantedLabel(r["symbol"], r["session"], int(r["period_start"]), int(r["regime"]))
            for r in reader]
