"""Pattern detectors over a frozen dataset.

* bonus hunters: subsidiary accounts that sell out and then consolidate the
  proceeds into one shared main account;
* wash trading: L2 accounts whose whole history is one share purchase, or
  that registered without the minimum funding deposit;
* cross-layer links: rules that connect L2 clusters and ties back to L1
  funding and payout addresses.

Every finding carries the transaction hashes it rests on. Failed
transactions are never used as evidence.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Sequence

from .errors import CapabilityError
from .ingest import Dataset
from .model import SECONDS_PER_DAY, Address, Layer, MethodKind, Transaction
from .ties import TieReport, _month_range, classify_ties, holding_relation, month_key

__all__ = [
    "REGISTRATION_FLOOR_WEI",
    "BonusHunterFinding",
    "WashAnomaly",
    "WashTradeFinding",
    "WashWindow",
    "WashTradingResult",
    "Scenario",
    "Confidence",
    "Evidence",
    "CrossLayerLink",
    "HunterActivity",
    "detect_bonus_hunters",
    "hunter_activity_series",
    "detect_wash_trading",
    "infer_cross_layer_links",
    "subsidiary_candidates",
]

REGISTRATION_FLOOR_WEI = 10**16


class _TxIndex:
    """Per-address views of the successful transactions of a dataset."""

    def __init__(self, dataset: Dataset) -> None:
        self.sent_l2: dict[Address, list[Transaction]] = defaultdict(list)
        self.touch_l2: dict[Address, list[Transaction]] = defaultdict(list)
        self.transfers_in: dict[Address, list[Transaction]] = defaultdict(list)
        self.l1_out: dict[Address, list[Transaction]] = defaultdict(list)
        self.l1_in: dict[Address, list[Transaction]] = defaultdict(list)
        self.l1_pairs: dict[tuple[Address, Address], list[Transaction]] = defaultdict(list)
        for tx in dataset.transactions:
            if tx.error is not None:
                continue
            s, r = tx.sender, tx.recipient
            is_transfer = tx.method.kind is MethodKind.TRANSFER
            if tx.layer is Layer.L2:
                self.sent_l2[s].append(tx)
                self.touch_l2[s].append(tx)
                if r != s:
                    self.touch_l2[r].append(tx)
            else:
                self.l1_out[s].append(tx)
                if r != s:
                    self.l1_in[r].append(tx)
                    key = (s, r) if s <= r else (r, s)
                    self.l1_pairs[key].append(tx)
            if is_transfer and r != s:
                self.transfers_in[r].append(tx)
        self.has_l1 = dataset.has_layer(Layer.L1)

    def registration(self, addr: Address) -> int | None:
        ts = [
            t.timestamp
            for t in self.sent_l2.get(addr, ())
            if t.method.kind in (MethodKind.BUY_SHARE, MethodKind.SELL_SHARE)
        ]
        return min(ts) if ts else None

    def l2_transfers_out(self, addr: Address) -> list[Transaction]:
        return [
            t
            for t in self.sent_l2.get(addr, ())
            if t.method.kind is MethodKind.TRANSFER and t.recipient != addr
        ]

    def l2_inbound_total(self, addr: Address) -> int:
        return sum(t.amount_wei for t in self.transfers_in.get(addr, ()) if t.layer is Layer.L2)


# -- bonus hunters -----------------------------------------------------------

@dataclass(frozen=True)
class _Candidate:
    address: Address
    sells: tuple[Transaction, ...]
    transfers: tuple[Transaction, ...]

    @property
    def targets(self) -> frozenset[Address]:
        return frozenset(t.recipient for t in self.transfers)


def subsidiary_candidates(
    dataset: Dataset,
    ratio_min: float = 5.0,
    min_sells: int = 3,
    max_gap_seconds: int | None = None,
    _index: _TxIndex | None = None,
) -> dict[Address, _Candidate]:
    """L2 accounts whose sells dominate their outbound transfers in count and
    all precede them in time."""
    idx = _index or _TxIndex(dataset)
    out: dict[Address, _Candidate] = {}
    for addr, sent in idx.sent_l2.items():
        sells = [t for t in sent if t.method.kind is MethodKind.SELL_SHARE]
        if len(sells) < min_sells:
            continue
        transfers = [t for t in sent if t.method.kind is MethodKind.TRANSFER and t.recipient != addr]
        if not transfers or len(sells) < ratio_min * max(len(transfers), 1):
            continue
        last_sell = max(t.timestamp for t in sells)
        first_transfer = min(t.timestamp for t in transfers)
        if not last_sell < first_transfer:
            continue
        if max_gap_seconds is not None and first_transfer - last_sell > max_gap_seconds:
            continue
        out[addr] = _Candidate(addr, tuple(sells), tuple(transfers))
    return out


@dataclass(frozen=True)
class BonusHunterFinding:
    main_account: Address
    subsidiaries: tuple[Address, ...]
    inbound_value_wei: dict[str, int]
    sell_tx_counts: dict[str, int]
    transfer_tx_counts: dict[str, int]
    time_ordering_ok: dict[str, bool]
    main_inbound_total_wei: int
    tx_count: int
    active_months: tuple[str, ...]
    evidence_tx_hashes: tuple[str, ...]

    @property
    def key(self) -> tuple[str, tuple[str, ...]]:
        return (self.main_account, tuple(sorted(self.subsidiaries)))

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "bonus_hunter",
            "main_account": self.main_account,
            "subsidiaries": list(self.subsidiaries),
            "inbound_value_wei": {k: str(v) for k, v in self.inbound_value_wei.items()},
            "sell_tx_counts": self.sell_tx_counts,
            "transfer_tx_counts": self.transfer_tx_counts,
            "time_ordering_ok": self.time_ordering_ok,
            "main_inbound_total_wei": str(self.main_inbound_total_wei),
            "tx_count": self.tx_count,
            "active_months": list(self.active_months),
            "evidence_tx_hashes": list(self.evidence_tx_hashes),
        }


def detect_bonus_hunters(
    dataset: Dataset,
    ratio_min: float = 5.0,
    min_subsidiaries: int = 2,
    min_sells: int = 3,
    max_gap_seconds: int | None = None,
    _index: _TxIndex | None = None,
) -> list[BonusHunterFinding]:
    """Find main accounts fed by groups of sell-then-consolidate subsidiaries.

    Each transfer counterparty shared by at least *min_subsidiaries*
    candidates defines a group; groups contained in a larger group are
    dropped. The main account of a group is the counterparty common to all
    its members with the largest total inbound transfer value, ties going to
    the lower address.
    """
    idx = _index or _TxIndex(dataset)
    cands = subsidiary_candidates(dataset, ratio_min, min_sells, max_gap_seconds, _index=idx)
    inbound_cache: dict[Address, int] = {}

    def inbound(a: Address) -> int:
        v = inbound_cache.get(a)
        if v is None:
            v = inbound_cache[a] = idx.l2_inbound_total(a)
        return v

    by_target: dict[Address, set[Address]] = defaultdict(set)
    for c in cands.values():
        for t in c.targets:
            if t != c.address:
                by_target[t].add(c.address)

    groups = {frozenset(m) for m in by_target.values() if len(m) >= min_subsidiaries}
    maximal = [g for g in groups if not any(g < other for other in groups)]

    findings: list[BonusHunterFinding] = []
    for group in maximal:
        common = frozenset.intersection(*(cands[s].targets for s in group)) - group
        main = min(common, key=lambda a: (-inbound(a), a))
        findings.append(_hunter_finding(main, sorted(group), cands, idx, inbound(main)))
    findings.sort(key=lambda f: (f.main_account, f.subsidiaries))
    return findings


def _hunter_finding(main, subs, cands, idx: _TxIndex, main_inbound: int) -> BonusHunterFinding:
    inbound_value = {}
    evidence: list[str] = []
    for s in subs:
        c = cands[s]
        inbound_value[s] = sum(t.amount_wei for t in c.transfers if t.recipient == main)
        evidence.extend(t.tx_hash for t in c.sells)
        evidence.extend(t.tx_hash for t in c.transfers)
    touching: dict[str, Transaction] = {}
    for member in [main, *subs]:
        for t in idx.touch_l2.get(member, ()):
            touching[t.tx_hash] = t
    months = sorted({month_key(t.timestamp) for t in touching.values()})
    return BonusHunterFinding(
        main_account=main,
        subsidiaries=tuple(subs),
        inbound_value_wei=inbound_value,
        sell_tx_counts={s: len(cands[s].sells) for s in subs},
        transfer_tx_counts={s: len(cands[s].transfers) for s in subs},
        time_ordering_ok={
            s: max(t.timestamp for t in cands[s].sells) < min(t.timestamp for t in cands[s].transfers)
            for s in subs
        },
        main_inbound_total_wei=main_inbound,
        tx_count=len(touching),
        active_months=tuple(months),
        evidence_tx_hashes=tuple(sorted(set(evidence))),
    )


@dataclass(frozen=True)
class HunterActivity:
    months: tuple[str, ...]
    active_clusters: tuple[int, ...]
    tx_count_cdf: tuple[tuple[int, float], ...]
    fraction_below_100: float | None


def hunter_activity_series(
    findings: Sequence[BonusHunterFinding], span: tuple[int, int] | None = None
) -> HunterActivity:
    """Monthly count of active hunter clusters and the distribution of their
    transaction counts. *span* (timestamps) widens the month axis."""
    if not findings:
        return HunterActivity((), (), (), None)
    months_seen = [m for f in findings for m in f.active_months]
    bounds = list(months_seen)
    if span is not None:
        bounds += [month_key(span[0]), month_key(span[1])]
    months = _month_range(min(bounds), max(bounds)) if bounds else []
    active = [sum(1 for f in findings if m in f.active_months) for m in months]
    counts = sorted(f.tx_count for f in findings)
    n = len(counts)
    cdf = []
    for i, c in enumerate(counts):
        if i + 1 < n and counts[i + 1] == c:
            continue
        cdf.append((c, (i + 1) / n))
    below = sum(1 for c in counts if c < 100) / n
    return HunterActivity(tuple(months), tuple(active), tuple(cdf), below)


# -- wash trading ------------------------------------------------------------

class WashAnomaly(str, Enum):
    SINGLE_BUY_ONLY = "SingleBuyOnly"
    UNDERFUNDED_REGISTRATION = "UnderfundedRegistration"


@dataclass(frozen=True)
class WashTradeFinding:
    account: Address
    buy_share_tx_count: int
    registration_funding_wei: int
    registration_ts: int
    l1_activity_seen: bool
    anomaly: WashAnomaly
    underfunded: bool
    evidence_tx_hashes: tuple[str, ...]

    @property
    def key(self) -> str:
        return self.account

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "wash_trading",
            "account": self.account,
            "anomaly": self.anomaly.value,
            "underfunded": self.underfunded,
            "buy_share_tx_count": self.buy_share_tx_count,
            "registration_funding_wei": str(self.registration_funding_wei),
            "registration_ts": self.registration_ts,
            "l1_activity_seen": self.l1_activity_seen,
            "evidence_tx_hashes": list(self.evidence_tx_hashes),
        }


@dataclass(frozen=True)
class WashWindow:
    start_day: int
    end_day: int
    new_users: int
    flagged: int

    @property
    def fraction(self) -> float:
        return self.flagged / self.new_users if self.new_users else 0.0

    def to_dict(self) -> dict[str, Any]:
        from datetime import datetime, timezone

        def iso(day: int) -> str:
            return datetime.fromtimestamp(day * SECONDS_PER_DAY, tz=timezone.utc).strftime("%Y-%m-%d")

        return {
            "start": iso(self.start_day),
            "end": iso(self.end_day),
            "new_users": self.new_users,
            "flagged": self.flagged,
            "fraction": self.fraction,
        }


@dataclass(frozen=True)
class WashTradingResult:
    findings: list[WashTradeFinding]
    windows: list[WashWindow]
    daily: list[WashWindow] = field(default_factory=list)
    """One single-day record per registration day."""


def detect_wash_trading(
    dataset: Dataset,
    registration_floor_wei: int = REGISTRATION_FLOOR_WEI,
    window_threshold: float = 0.5,
    _index: _TxIndex | None = None,
) -> WashTradingResult:
    """Flag L2 accounts that only ever made one share purchase, or registered
    without any single prior inbound transfer of at least the floor.

    Registration is an account's first share trade. Days on which the
    flagged share of newly registered accounts exceeds *window_threshold*
    are merged into contiguous windows.
    """
    idx = _index or _TxIndex(dataset)
    findings: list[WashTradeFinding] = []
    new_per_day: dict[int, int] = defaultdict(int)
    flagged_per_day: dict[int, int] = defaultdict(int)
    for addr in sorted(idx.sent_l2):
        sent = idx.sent_l2[addr]
        reg = idx.registration(addr)
        if reg is None:
            continue
        day = reg // SECONDS_PER_DAY
        new_per_day[day] += 1
        single = len(sent) == 1 and sent[0].method.kind is MethodKind.BUY_SHARE
        funding = max(
            (t.amount_wei for t in idx.transfers_in.get(addr, ()) if t.timestamp < reg),
            default=0,
        )
        underfunded = funding < registration_floor_wei
        if not (single or underfunded):
            continue
        flagged_per_day[day] += 1
        first = min(
            (t for t in sent if t.method.kind in (MethodKind.BUY_SHARE, MethodKind.SELL_SHARE)),
            key=lambda t: (t.timestamp, t.tx_hash),
        )
        findings.append(
            WashTradeFinding(
                account=addr,
                buy_share_tx_count=sum(1 for t in sent if t.method.kind is MethodKind.BUY_SHARE),
                registration_funding_wei=funding,
                registration_ts=reg,
                l1_activity_seen=bool(idx.l1_out.get(addr) or idx.l1_in.get(addr)),
                anomaly=WashAnomaly.SINGLE_BUY_ONLY if single else WashAnomaly.UNDERFUNDED_REGISTRATION,
                underfunded=underfunded,
                evidence_tx_hashes=(first.tx_hash,),
            )
        )

    daily = [WashWindow(d, d, new_per_day[d], flagged_per_day[d]) for d in sorted(new_per_day)]
    windows: list[WashWindow] = []
    for rec in daily:
        if rec.fraction <= window_threshold:
            continue
        if windows and windows[-1].end_day == rec.start_day - 1:
            w = windows[-1]
            windows[-1] = WashWindow(w.start_day, rec.end_day, w.new_users + rec.new_users, w.flagged + rec.flagged)
        else:
            windows.append(rec)
    return WashTradingResult(findings, windows, daily)


# -- cross-layer links -------------------------------------------------------

class Scenario(str, Enum):
    S1_L2_CLUSTER = "S1_L2Cluster"
    S2_L1_LINKAGE = "S2_L1Linkage"
    S3_INTER_USER = "S3_InterUser"


class Confidence(str, Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"


@dataclass(frozen=True)
class Evidence:
    rule: str
    tx_hashes: tuple[str, ...] = ()
    ties: tuple[tuple[str, str], ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {"rule": self.rule, "tx_hashes": list(self.tx_hashes), "ties": [list(t) for t in self.ties]}


@dataclass(frozen=True)
class CrossLayerLink:
    scenario: Scenario
    l2_accounts: tuple[Address, ...]
    l1_accounts: tuple[Address, ...]
    evidence: tuple[Evidence, ...]
    confidence: Confidence
    prior_l1_link: bool = False
    """True when the L1 accounts already transact with each other directly."""

    @property
    def key(self) -> tuple[str, tuple[str, ...], tuple[str, ...]]:
        return (self.scenario.value, tuple(sorted(self.l2_accounts)), tuple(sorted(self.l1_accounts)))

    def tx_hashes(self) -> set[str]:
        return {h for e in self.evidence for h in e.tx_hashes}

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "cross_layer_link",
            "scenario": self.scenario.value,
            "confidence": self.confidence.value,
            "l2_accounts": list(self.l2_accounts),
            "l1_accounts": list(self.l1_accounts),
            "prior_l1_link": self.prior_l1_link,
            "evidence": [e.to_dict() for e in self.evidence],
        }


ALL_SCENARIOS = (Scenario.S1_L2_CLUSTER, Scenario.S2_L1_LINKAGE, Scenario.S3_INTER_USER)


def _hashes(txs: Iterable[Transaction]) -> tuple[str, ...]:
    return tuple(sorted({t.tx_hash for t in txs}))


def infer_cross_layer_links(
    dataset: Dataset,
    ties: TieReport | None = None,
    hunters: Sequence[BonusHunterFinding] | None = None,
    scenarios: Iterable[Scenario | str] = ALL_SCENARIOS,
    ratio_min: float = 5.0,
    min_sells: int = 3,
    registration_floor_wei: int = REGISTRATION_FLOOR_WEI,
    _index: _TxIndex | None = None,
) -> list[CrossLayerLink]:
    """Rule engine linking L2 behaviour to L1 identities.

    S1 clusters an L2 main account with the subsidiaries that consolidate
    into it without any flow back, provided one of them shares a strong tie
    with the main. S2 links the L1 account that funded the main's
    registration with an L1 account receiving a payout from the cluster,
    when those two already transact directly on L1. S3 links the L1
    funding/payout accounts of two distinct owners (S1 clusters or lone
    accounts) whose L2 accounts share a strong tie.
    """
    wanted = {Scenario(s) for s in scenarios}
    idx = _index or _TxIndex(dataset)
    if wanted & {Scenario.S2_L1_LINKAGE, Scenario.S3_INTER_USER} and not idx.has_l1:
        raise CapabilityError(
            "S2/S3 linkage needs layer-1 transactions; txs_l1.csv is missing", "txs_l1.csv"
        )
    if ties is None:
        ties = classify_ties(holding_relation(dataset))
    partners = ties.strong_partners()
    cands = subsidiary_candidates(dataset, ratio_min, min_sells, _index=idx)

    links: list[CrossLayerLink] = []
    clusters: list[tuple[Address, tuple[Address, ...], CrossLayerLink]] = []

    # S1 -------------------------------------------------------------------
    beneficiaries: dict[Address, list[Address]] = defaultdict(list)
    for c in cands.values():
        for target in c.targets:
            beneficiaries[target].append(c.address)
    hunter_by_main = {h.main_account: h for h in hunters or ()}
    for main in sorted(beneficiaries):
        paid_back = {t.recipient for t in idx.l2_transfers_out(main)}
        subs = sorted(s for s in beneficiaries[main] if s not in paid_back and s != main)
        if len(subs) < 2:
            continue
        tied = [s for s in subs if s in partners.get(main, ())]
        if not tied:
            continue
        consolidation = [t for s in subs for t in cands[s].transfers if t.recipient == main]
        sells = [t for s in subs for t in cands[s].sells]
        evidence = [
            Evidence("S1.consolidation", _hashes(consolidation)),
            Evidence("S1.subsidiary_pattern", _hashes(sells)),
            Evidence("S1.strong_tie", ties=tuple((main, s) for s in tied)),
            Evidence("S1.no_reciprocal_flow"),
        ]
        confidence = Confidence.MEDIUM
        hunter = hunter_by_main.get(main)
        if hunter is not None and set(hunter.subsidiaries) <= set(subs):
            confidence = Confidence.HIGH
            evidence.append(Evidence("S1.bonus_hunter_finding", hunter.evidence_tx_hashes))
        link = CrossLayerLink(
            Scenario.S1_L2_CLUSTER, tuple(sorted([main, *subs])), (), tuple(evidence), confidence
        )
        clusters.append((main, tuple(subs), link))
        if Scenario.S1_L2_CLUSTER in wanted:
            links.append(link)

    def funders(addr: Address) -> list[Transaction]:
        reg = idx.registration(addr)
        return [
            t
            for t in idx.l1_in.get(addr, ())
            if t.method.kind is MethodKind.TRANSFER
            and t.amount_wei >= registration_floor_wei
            and (reg is None or t.timestamp < reg)
        ]

    def payouts(addr: Address) -> list[Transaction]:
        return [t for t in idx.l1_out.get(addr, ()) if t.method.kind is MethodKind.TRANSFER]

    # S2 -------------------------------------------------------------------
    if Scenario.S2_L1_LINKAGE in wanted:
        for main, subs, s1 in clusters:
            members = {main, *subs}
            for fund in funders(main):
                a = fund.sender
                for f in subs:
                    for pay in payouts(f):
                        b = pay.recipient
                        if a == b or a in members or b in members:
                            continue
                        history = idx.l1_pairs.get((a, b) if a <= b else (b, a), [])
                        if not history:
                            continue
                        links.append(
                            CrossLayerLink(
                                Scenario.S2_L1_LINKAGE,
                                s1.l2_accounts,
                                tuple(sorted((a, b))),
                                (
                                    Evidence("S2.s1_cluster", tuple(sorted(s1.tx_hashes()))),
                                    Evidence("S2.registration_funding", (fund.tx_hash,)),
                                    Evidence("S2.payout", (pay.tx_hash,)),
                                    Evidence("S2.l1_history", _hashes(history)),
                                ),
                                Confidence.MEDIUM,
                                prior_l1_link=True,
                            )
                        )

    # S3 -------------------------------------------------------------------
    if Scenario.S3_INTER_USER in wanted:
        owner: dict[Address, Address] = {}
        for main, subs, _ in clusters:
            for m in (main, *subs):
                owner[m] = main
        l1_of: dict[Address, dict[Address, list[Transaction]]] = {}

        def l1_accounts(user: Address) -> dict[Address, list[Transaction]]:
            got = l1_of.get(user)
            if got is None:
                got = defaultdict(list)
                members = [m for m, o in owner.items() if o == user] or [user]
                for m in members:
                    for t in funders(m):
                        got[t.sender].append(t)
                    for t in payouts(m):
                        got[t.recipient].append(t)
                l1_of[user] = got
            return got

        grouped: dict[tuple[Address, Address], list[tuple[Address, Address]]] = defaultdict(list)
        for x, y in sorted(ties.strong_pairs):
            ux, uy = owner.get(x, x), owner.get(y, y)
            if ux == uy:
                continue
            key = (ux, uy) if ux <= uy else (uy, ux)
            grouped[key].append((x, y))
        for (u, v), pairs in sorted(grouped.items()):
            acc_u, acc_v = l1_accounts(u), l1_accounts(v)
            l2 = tuple(sorted({a for p in pairs for a in p}))
            for p in sorted(acc_u):
                for q in sorted(acc_v):
                    if p == q:
                        continue
                    history = idx.l1_pairs.get((p, q) if p <= q else (q, p), [])
                    evidence = [
                        Evidence("S3.strong_tie", ties=tuple(pairs)),
                        Evidence("S3.l1_identity", _hashes(acc_u[p] + acc_v[q])),
                    ]
                    if history:
                        evidence.append(Evidence("S3.l1_history", _hashes(history)))
                    links.append(
                        CrossLayerLink(
                            Scenario.S3_INTER_USER,
                            l2,
                            tuple(sorted((p, q))),
                            tuple(evidence),
                            Confidence.LOW,
                            prior_l1_link=bool(history),
                        )
                    )

    links.sort(key=lambda link: link.key)
    return links
