"""Tie classification over the token-holding relation and platform statistics.

``holds(a, b)`` means account *a* holds at least one token of account *b*.
Mutual holding is a strong tie, one-directional holding a weak tie, and two
accounts joined only through a chain of weak ties are indirectly tied.
"""

from __future__ import annotations

from collections import Counter, defaultdict, deque
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import Hashable, Iterable, Mapping, Sequence, TypeVar

from .errors import ParameterError
from .ingest import Dataset
from .model import SECONDS_PER_DAY, Account, Address, FollowSource, Layer, MethodKind

__all__ = [
    "TieKind",
    "TieReport",
    "CohortTieStats",
    "holding_relation",
    "classify_ties",
    "cohort_tie_stats",
    "top_holders",
    "elite_holder_overlap",
    "token_distribution",
    "activity_timeline",
    "daily_buy_sell_mix",
    "DEFAULT_TOKEN_BUCKETS",
    "month_key",
]

N = TypeVar("N", bound=Hashable)


class TieKind(str, Enum):
    WEAK = "weak"
    INDIRECT = "indirect"
    STRONG = "strong"


def _pair(a, b):
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class TieReport:
    strong_pairs: frozenset[tuple]
    """Unordered pairs stored as sorted 2-tuples."""
    weak_edges: frozenset[tuple]
    """Ordered ``(holder, held)`` pairs."""
    indirect_pairs: Mapping[tuple, tuple]
    """Unordered pair -> witness path of weak ties."""
    max_hops: int = 2

    def kind_of(self, a, b) -> str | None:
        if _pair(a, b) in self.strong_pairs:
            return TieKind.STRONG
        if (a, b) in self.weak_edges or (b, a) in self.weak_edges:
            return TieKind.WEAK
        if _pair(a, b) in self.indirect_pairs:
            return TieKind.INDIRECT
        return None

    def strong_partners(self) -> dict:
        out: dict = defaultdict(set)
        for a, b in self.strong_pairs:
            out[a].add(b)
            out[b].add(a)
        return out

    def counts(self) -> dict[str, int]:
        return {
            "strong": len(self.strong_pairs),
            "weak": len(self.weak_edges),
            "indirect": len(self.indirect_pairs),
        }


def holding_relation(dataset: Dataset) -> frozenset[tuple[Address, Address]]:
    """Holder -> held pairs among L2 accounts.

    Declared follows of source ``holding`` take precedence. Only when the
    dataset has no follows at all is the relation rebuilt by replaying share
    trades: *a* holds *b* when a's buys of b's token outnumber its sells.
    """
    if dataset.follows:
        return frozenset(
            (f.follower, f.followee)
            for f in dataset.follows
            if f.source is FollowSource.HOLDING
        )
    net: Counter = Counter()
    for tx in dataset.transactions:
        if tx.error is not None or tx.layer is not Layer.L2 or tx.sender == tx.recipient:
            continue
        kind = tx.method.kind
        if kind is MethodKind.BUY_SHARE:
            net[(tx.sender, tx.recipient)] += 1
        elif kind is MethodKind.SELL_SHARE:
            net[(tx.sender, tx.recipient)] -= 1
    return frozenset(pair for pair, count in net.items() if count > 0)


def classify_ties(holds: Iterable[tuple[N, N]], max_hops: int = 2) -> TieReport:
    """Split *holds* into strong, weak and indirect ties.

    Indirect pairs are joined by a directed path of at most *max_hops* weak
    ties while holding nothing of each other directly. The witness is the
    first such path found by breadth-first search with sorted neighbours.
    """
    if max_hops < 2:
        raise ParameterError(f"max_hops must be >= 2, got {max_hops}")
    rel = {(a, b) for a, b in holds if a != b}
    strong = frozenset(_pair(a, b) for a, b in rel if (b, a) in rel)
    weak = frozenset((a, b) for a, b in rel if (b, a) not in rel)

    direct = {_pair(a, b) for a, b in rel}
    succ: dict = defaultdict(list)
    for a, b in weak:
        succ[a].append(b)
    for v in succ.values():
        v.sort()

    indirect: dict = {}
    for src in sorted(succ):
        parent = {src: None}
        depth = {src: 0}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            if depth[u] == max_hops:
                continue
            for v in succ.get(u, ()):
                if v in parent:
                    continue
                parent[v] = u
                depth[v] = depth[u] + 1
                queue.append(v)
                if depth[v] < 2:
                    continue
                key = _pair(src, v)
                if key in direct or key in indirect:
                    continue
                path = [v]
                w = u
                while w is not None:
                    path.append(w)
                    w = parent[w]
                indirect[key] = tuple(reversed(path))
    return TieReport(strong, weak, dict(sorted(indirect.items())), max_hops)


@dataclass(frozen=True)
class CohortTieStats:
    within: int
    touching: int
    all: int


def cohort_tie_stats(report: TieReport, cohort: Iterable) -> CohortTieStats:
    members = set(cohort)
    within = touching = 0
    for a, b in report.strong_pairs:
        ia, ib = a in members, b in members
        within += ia and ib
        touching += ia or ib
    return CohortTieStats(within, touching, len(report.strong_pairs))


def top_holders(dataset: Dataset, k: int = 30) -> list[Account]:
    """L2 accounts with the largest ``holder_count``; ties by address."""
    ranked = [
        a
        for a in dataset.accounts
        if a.layer is Layer.L2 and a.profile is not None and a.profile.holder_count is not None
    ]
    ranked.sort(key=lambda a: (-a.profile.holder_count, a.address))  # type: ignore[union-attr]
    return ranked[:k]


def elite_holder_overlap(holds: Iterable[tuple], elites: Sequence) -> dict[int, int]:
    """How many accounts hold exactly k of the elites' tokens, for k >= 1."""
    elite_set = set(elites)
    per_holder: Counter = Counter(a for a, b in holds if b in elite_set and a != b)
    hist = Counter(per_holder.values())
    return {k: hist[k] for k in sorted(hist, reverse=True)}


# -- platform statistics -----------------------------------------------------

DEFAULT_TOKEN_BUCKETS: tuple[tuple[str, int, int | None], ...] = (
    ("<2", 0, 1),
    ("3-5", 3, 5),
    (">10", 11, None),
)


@dataclass(frozen=True)
class TokenHistogram:
    labels: tuple[str, ...]
    counts: tuple[int, ...]
    total: int

    @property
    def fractions(self) -> dict[str, float]:
        if self.total == 0:
            return {label: 0.0 for label in self.labels}
        return {label: c / self.total for label, c in zip(self.labels, self.counts)}


def token_distribution(
    dataset: Dataset, buckets: Sequence[tuple[str, int, int | None]] = DEFAULT_TOKEN_BUCKETS
) -> TokenHistogram:
    """Share of profiled users per ``holding_count`` range.

    Ranges are inclusive ``(label, lo, hi)`` with ``hi=None`` open-ended.
    Users outside every range go to ``other``; users without a holding count
    go to ``unknown``.
    """
    labels = [b[0] for b in buckets] + ["other", "unknown"]
    counts = [0] * len(labels)
    total = 0
    for acct in dataset.accounts:
        if acct.profile is None:
            continue
        total += 1
        held = acct.profile.holding_count
        if held is None:
            counts[-1] += 1
            continue
        for i, (_, lo, hi) in enumerate(buckets):
            if held >= lo and (hi is None or held <= hi):
                counts[i] += 1
                break
        else:
            counts[-2] += 1
    return TokenHistogram(tuple(labels), tuple(counts), total)


def month_key(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m")


def _month_range(first: str, last: str) -> list[str]:
    y, m = map(int, first.split("-"))
    ly, lm = map(int, last.split("-"))
    out = []
    while (y, m) <= (ly, lm):
        out.append(f"{y:04d}-{m:02d}")
        m += 1
        if m == 13:
            y, m = y + 1, 1
    return out


@dataclass(frozen=True)
class ActivityTimeline:
    months: tuple[str, ...]
    counts: Mapping[Account, tuple[int, ...]]


def activity_timeline(
    dataset: Dataset, accounts: Iterable[Account] | None = None
) -> ActivityTimeline:
    """Monthly count of successful transactions touching each account.

    Every month between the dataset's first and last transaction is present,
    including months with zero activity.
    """
    txs = [t for t in dataset.transactions if t.ok]
    targets = list(dataset.accounts if accounts is None else accounts)
    if not txs:
        return ActivityTimeline((), {a: () for a in targets})
    months = _month_range(month_key(min(t.timestamp for t in txs)), month_key(max(t.timestamp for t in txs)))
    slot = {m: i for i, m in enumerate(months)}
    wanted = {a.key for a in targets}
    rows: dict = {k: [0] * len(months) for k in wanted}
    for t in txs:
        col = slot[month_key(t.timestamp)]
        for addr in {t.sender, t.recipient}:
            row = rows.get((addr, t.layer))
            if row is not None:
                row[col] += 1
    return ActivityTimeline(tuple(months), {a: tuple(rows[a.key]) for a in targets})


@dataclass(frozen=True)
class DayMix:
    day: int
    date: str
    buy_count: int
    sell_count: int
    buy_fraction: float | None
    mean_price_wei: int | None


def daily_buy_sell_mix(dataset: Dataset) -> list[DayMix]:
    """Per UTC day: share buys, share sells, buy fraction and mean traded value.

    The mean is floor-divided to stay in integer wei. Days without share
    trades report ``None`` for fraction and mean.
    """
    buys: Counter = Counter()
    sells: Counter = Counter()
    value: Counter = Counter()
    days = set()
    for t in dataset.transactions:
        if not t.ok:
            continue
        day = t.timestamp // SECONDS_PER_DAY
        days.add(day)
        if t.method.kind is MethodKind.BUY_SHARE:
            buys[day] += 1
        elif t.method.kind is MethodKind.SELL_SHARE:
            sells[day] += 1
        else:
            continue
        value[day] += t.amount_wei
    if not days:
        return []
    out = []
    for day in range(min(days), max(days) + 1):
        b, s = buys[day], sells[day]
        n = b + s
        date = datetime.fromtimestamp(day * SECONDS_PER_DAY, tz=timezone.utc).strftime("%Y-%m-%d")
        out.append(
            DayMix(day, date, b, s, b / n if n else None, value[day] // n if n else None)
        )
    return out
