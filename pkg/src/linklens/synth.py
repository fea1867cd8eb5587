"""Synthetic datasets with planted ground truth.

Randomness comes from one splitmix64 stream seeded by the scenario, consumed
in a fixed order, so a spec maps to the same bytes on any platform:

    state += 0x9E3779B97F4A7C15
    z = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out = z ^ (z >> 31)                         (all mod 2**64)

Integers below ``n`` use rejection sampling on the top of the range, floats
take the upper 53 bits, Poisson counts use Knuth's product method.

Background accounts are non-qualifying for every detector by construction:
they register with a funded deposit, make at least two share purchases,
only buy tokens of earlier accounts (so no mutual holding can arise) and
never send transfers.
"""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .errors import SpecError
from .ingest import Dataset, assemble, write_follows, write_transactions, write_users
from .model import (
    BUY_SHARE,
    SECONDS_PER_DAY,
    SELL_SHARE,
    TRANSFER,
    WEI_PER_ETH,
    Account,
    Address,
    FollowEdge,
    FollowSource,
    Layer,
    SocialProfile,
    Transaction,
)

__all__ = [
    "SplitMix64",
    "PlantSpec",
    "ScenarioSpec",
    "GroundTruth",
    "PlantTruth",
    "PLANT_KINDS",
    "generate",
    "load_spec",
    "write_bundle",
    "DEFAULT_START_TS",
]

MASK64 = (1 << 64) - 1
DEFAULT_START_TS = 1_691_798_400  # 2023-08-12 00:00 UTC
L2_GENESIS_TS = 1_686_789_347
L1_GENESIS_TS = 1_438_269_973
FUNDING_MIN_WEI = WEI_PER_ETH // 100


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        if not 0 < n <= 1 << 64:
            raise ValueError(f"range must be in (0, 2**64], got {n}")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def between(self, lo: int, hi: int) -> int:
        return lo + self.below(hi - lo + 1)

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def poisson(self, lam: float) -> int:
        if lam <= 0:
            return 0
        threshold = math.exp(-lam)
        k = 0
        p = self.random()
        while p > threshold:
            k += 1
            p *= self.random()
        return k

    def choice(self, seq: Sequence[Any]) -> Any:
        return seq[self.below(len(seq))]

    def sample(self, seq: Sequence[Any], k: int) -> list[Any]:
        pool = list(seq)
        for i in range(k):
            j = i + self.below(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def hex_bytes(self, n: int) -> str:
        words = [self.next_u64() for _ in range((n + 7) // 8)]
        return b"".join(w.to_bytes(8, "big") for w in words)[:n].hex()


# -- spec --------------------------------------------------------------------

PLANT_KINDS = ("HunterCluster", "WashCohort", "S2Linkage", "KOLElite")
_PLANT_FIELDS = {
    "HunterCluster": {"size", "sells_per_subsidiary", "day", "main"},
    "WashCohort": {"count", "day_range"},
    "S2Linkage": {"sells_per_subsidiary", "day"},
    "KOLElite": {"count", "holder_target"},
}


@dataclass(frozen=True)
class PlantSpec:
    id: str
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def get(self, key: str, default: Any = None) -> Any:
        return self.params.get(key, default)


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int
    n_background_accounts: int
    n_days: int
    daily_tx_rate: float
    plants: tuple[PlantSpec, ...] = ()
    price_range_wei: tuple[int, int] = (10**15, 5 * 10**16)
    start_ts: int = DEFAULT_START_TS

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "n_background_accounts": self.n_background_accounts,
            "n_days": self.n_days,
            "daily_tx_rate": self.daily_tx_rate,
            "price_range_wei": [str(self.price_range_wei[0]), str(self.price_range_wei[1])],
            "start_ts": self.start_ts,
            "plants": [{"id": p.id, "kind": p.kind, **dict(p.params)} for p in self.plants],
        }


def _int(value: Any, name: str, plant: str | None = None, minimum: int = 0) -> int:
    if isinstance(value, bool):
        raise SpecError(f"{name} must be an integer, got {value!r}", plant)
    try:
        out = int(value)
    except (TypeError, ValueError):
        raise SpecError(f"{name} must be an integer, got {value!r}", plant) from None
    if isinstance(value, float) and value != out:
        raise SpecError(f"{name} must be an integer, got {value!r}", plant)
    if out < minimum:
        raise SpecError(f"{name} must be >= {minimum}, got {out}", plant)
    return out


def load_spec(source: str | Path | Mapping[str, Any]) -> ScenarioSpec:
    """Parse and validate a scenario from a JSON file or a mapping."""
    if isinstance(source, Mapping):
        raw = dict(source)
    else:
        try:
            raw = json.loads(Path(source).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SpecError(f"spec is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise SpecError("spec must be a JSON object")
    for key in ("seed", "n_background_accounts", "n_days", "daily_tx_rate"):
        if key not in raw:
            raise SpecError(f"spec is missing {key!r}")
    rate = raw["daily_tx_rate"]
    if isinstance(rate, bool) or not isinstance(rate, (int, float)) or not 0 <= rate <= 100:
        raise SpecError(f"daily_tx_rate must be a number in [0, 100], got {rate!r}")
    lo, hi = raw.get("price_range_wei", ScenarioSpec.price_range_wei)
    lo, hi = _int(lo, "price_range_wei[0]", minimum=1), _int(hi, "price_range_wei[1]", minimum=1)
    if lo > hi or hi >= 1 << 64:
        raise SpecError(f"price_range_wei must satisfy 1 <= min <= max < 2**64, got [{lo}, {hi}]")

    plants = []
    seen_ids: set[str] = set()
    for i, p in enumerate(raw.get("plants", [])):
        if not isinstance(p, dict):
            raise SpecError(f"plant #{i} must be an object")
        kind = p.get("kind")
        pid = str(p.get("id", f"{kind}-{i}"))
        if kind not in PLANT_KINDS:
            raise SpecError(f"unknown plant kind {kind!r}", pid)
        if pid in seen_ids:
            raise SpecError(f"duplicate plant id {pid!r}", pid)
        seen_ids.add(pid)
        params = {k: v for k, v in p.items() if k not in ("id", "kind")}
        unknown = set(params) - _PLANT_FIELDS[kind]
        if unknown:
            raise SpecError(f"unknown field(s) for {kind}: {sorted(unknown)}", pid)
        plants.append(PlantSpec(pid, kind, params))

    return ScenarioSpec(
        seed=_int(raw["seed"], "seed") & MASK64,
        n_background_accounts=_int(raw["n_background_accounts"], "n_background_accounts"),
        n_days=_int(raw["n_days"], "n_days", minimum=1),
        daily_tx_rate=float(rate),
        plants=tuple(plants),
        price_range_wei=(lo, hi),
        start_ts=_int(raw.get("start_ts", DEFAULT_START_TS), "start_ts", minimum=L2_GENESIS_TS),
    )


# -- ground truth ------------------------------------------------------------

@dataclass(frozen=True)
class PlantTruth:
    kind: str
    hunters: tuple[tuple[str, tuple[str, ...]], ...] = ()
    wash: tuple[str, ...] = ()
    links: tuple[dict[str, Any], ...] = ()
    elites: tuple[str, ...] = ()
    accounts: Mapping[str, str] = field(default_factory=dict)
    """Role name -> address, for readers of ground_truth.json."""

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "accounts": dict(self.accounts),
            "hunters": [{"main_account": m, "subsidiaries": list(s)} for m, s in self.hunters],
            "wash": list(self.wash),
            "links": [dict(link) for link in self.links],
            "elites": list(self.elites),
        }


@dataclass(frozen=True)
class GroundTruth:
    seed: int
    plants: Mapping[str, PlantTruth]

    def hunter_keys(self) -> set[tuple[str, tuple[str, ...]]]:
        return {h for p in self.plants.values() for h in p.hunters}

    def wash_accounts(self) -> set[str]:
        return {a for p in self.plants.values() for a in p.wash}

    def link_keys(self) -> set[tuple[str, tuple[str, ...], tuple[str, ...]]]:
        return {
            (link["scenario"], tuple(link["l2_accounts"]), tuple(link["l1_accounts"]))
            for p in self.plants.values()
            for link in p.links
        }

    def elites(self) -> list[str]:
        return [a for p in self.plants.values() for a in p.elites]

    def to_dict(self) -> dict[str, Any]:
        return {"seed": self.seed, "plants": {k: v.to_dict() for k, v in self.plants.items()}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> GroundTruth:
        plants = {}
        for pid, p in raw["plants"].items():
            plants[pid] = PlantTruth(
                kind=p["kind"],
                hunters=tuple((h["main_account"], tuple(h["subsidiaries"])) for h in p.get("hunters", [])),
                wash=tuple(p.get("wash", [])),
                links=tuple(p.get("links", [])),
                elites=tuple(p.get("elites", [])),
                accounts=dict(p.get("accounts", {})),
            )
        return cls(int(raw["seed"]), plants)


# -- generator ---------------------------------------------------------------

class _Builder:
    def __init__(self, spec: ScenarioSpec) -> None:
        self.spec = spec
        self.rng = SplitMix64(spec.seed)
        self.txs: list[Transaction] = []
        self.hashes: set[str] = set()
        self.addresses: set[str] = set()
        self.l2: list[Address] = []
        self.net: Counter = Counter()  # (holder, subject) -> shares
        self.last_price: dict[Address, int] = {}
        self.last_active: dict[Address, int] = {}

    def address(self) -> Address:
        while True:
            a = "0x" + self.rng.hex_bytes(20)
            if a not in self.addresses:
                self.addresses.add(a)
                return Address(a)

    def l2_account(self) -> Address:
        a = self.address()
        self.l2.append(a)
        return a

    def price(self) -> int:
        lo, hi = self.spec.price_range_wei
        return self.rng.between(lo, hi)

    def tx(self, layer: Layer, ts: int, sender: Address, recipient: Address, method, value_in=0, value_out=0) -> Transaction:
        while True:
            h = "0x" + self.rng.hex_bytes(32)
            if h not in self.hashes:
                self.hashes.add(h)
                break
        if layer is Layer.L2:
            block = (ts - L2_GENESIS_TS) // 2
            fee = self.rng.between(10**12, 10**13)
        else:
            block = (ts - L1_GENESIS_TS) // 12
            fee = self.rng.between(10**14, 10**15)
        t = Transaction(h, block, ts, sender, recipient, value_in, value_out, fee, method, layer)
        self.txs.append(t)
        if layer is Layer.L2:
            self.last_active[sender] = max(ts, self.last_active.get(sender, 0))
        return t

    def buy(self, ts: int, holder: Address, subject: Address) -> Transaction:
        p = self.price()
        self.net[(holder, subject)] += 1
        self.last_price[subject] = p
        return self.tx(Layer.L2, ts, holder, subject, BUY_SHARE, value_out=p)

    def sell(self, ts: int, holder: Address, subject: Address) -> Transaction:
        p = self.price()
        self.net[(holder, subject)] -= 1
        self.last_price[subject] = p
        return self.tx(Layer.L2, ts, holder, subject, SELL_SHARE, value_in=p)

    def fund(self, ts: int, account: Address, funder: Address | None = None) -> Address:
        """L1 deposit of at least the registration minimum, one hour before *ts*."""
        funder = funder or self.address()
        amount = self.rng.between(FUNDING_MIN_WEI, 10 * FUNDING_MIN_WEI)
        self.tx(Layer.L1, ts - 3600, funder, account, TRANSFER, value_out=amount)
        return funder

    def register(self, ts: int, account: Address, funder: Address | None = None) -> Address:
        funder = self.fund(ts, account, funder)
        self.buy(ts, account, account)
        return funder

    def subsidiary_run(self, ts: int, sub: Address, main: Address, n_sells: int, pool: Sequence[Address]) -> int:
        """Buy *n_sells* tokens, sell them all, then consolidate to *main*.

        Returns the timestamp after the consolidation transfer.
        """
        bought = [self.rng.choice(pool) for _ in range(n_sells)]
        for subject in bought:
            ts += 60 + self.rng.below(240)
            self.buy(ts, sub, subject)
        proceeds = 0
        for subject in bought:
            ts += 60 + self.rng.below(240)
            proceeds += self.sell(ts, sub, subject).value_in_wei
        ts += 600 + self.rng.below(3000)
        self.tx(Layer.L2, ts, sub, main, TRANSFER, value_out=proceeds)
        return ts


def _plant_day(b: _Builder, plant: PlantSpec, n_days: int) -> int:
    day = plant.get("day")
    if day is None:
        return b.rng.below(max(n_days - 1, 1))
    day = _int(day, "day", plant.id)
    if day >= n_days:
        raise SpecError(f"day {day} outside the {n_days}-day horizon", plant.id)
    return day


def _sells(plant: PlantSpec) -> int:
    n = _int(plant.get("sells_per_subsidiary", 5), "sells_per_subsidiary", plant.id)
    if n < 5:
        raise SpecError("sells_per_subsidiary below 5 cannot meet the default detector ratio", plant.id)
    return n


def _check_plants(spec: ScenarioSpec) -> None:
    nb = spec.n_background_accounts
    for p in spec.plants:
        if p.kind in ("HunterCluster", "S2Linkage") and nb < 1:
            raise SpecError(f"{p.kind} needs at least one background account to trade with", p.id)
        if p.kind == "HunterCluster":
            _int(p.get("size", 3), "size", p.id, minimum=2)
            _sells(p)
        elif p.kind == "S2Linkage":
            _sells(p)
        elif p.kind == "WashCohort":
            _int(p.get("count", 1), "count", p.id, minimum=1)
            rng = p.get("day_range", [0, spec.n_days - 1])
            if not isinstance(rng, (list, tuple)) or len(rng) != 2:
                raise SpecError("day_range must be [first_day, last_day]", p.id)
            lo, hi = (_int(v, "day_range", p.id) for v in rng)
            if lo > hi or hi >= spec.n_days:
                raise SpecError(f"day_range {[lo, hi]} invalid for a {spec.n_days}-day horizon", p.id)
        elif p.kind == "KOLElite":
            _int(p.get("count", 1), "count", p.id, minimum=1)
            target = _int(p.get("holder_target", 1), "holder_target", p.id, minimum=1)
            if target > nb:
                raise SpecError(
                    f"holder_target {target} exceeds the {nb} background accounts available", p.id
                )
        if p.kind == "HunterCluster" and p.get("main") is not None:
            try:
                Address(p.get("main"))
            except ValueError as exc:
                raise SpecError(f"main: {exc}", p.id) from None


def generate(spec: ScenarioSpec | Mapping[str, Any]) -> tuple[Dataset, GroundTruth]:
    """Build the dataset and ground truth described by *spec*."""
    if not isinstance(spec, ScenarioSpec):
        spec = load_spec(spec)
    _check_plants(spec)
    b = _Builder(spec)
    rng = b.rng
    start = spec.start_ts
    horizon = spec.n_days * SECONDS_PER_DAY

    # background registrations in index order; the first lands in hour one
    nb = spec.n_background_accounts
    offsets = sorted(rng.below(horizon - 7200) + 7200 for _ in range(max(nb - 1, 0)))
    reg_ts = [start + 3600] + [start + o for o in offsets] if nb else []
    background = [b.l2_account() for _ in range(nb)]
    for i, acct in enumerate(background):
        b.register(reg_ts[i], acct)
        b.buy(reg_ts[i] + 600, acct, background[rng.below(i)] if i else acct)

    elite_ids: set[Address] = set()
    truths: dict[str, PlantTruth] = {}

    def registered_before(ts: int) -> list[Address]:
        return [a for a, t in zip(background, reg_ts) if t + 600 < ts] or background[:1]

    for plant in spec.plants:
        if plant.kind == "KOLElite":
            target = _int(plant.get("holder_target", 1), "holder_target", plant.id)
            elites = []
            for _ in range(_int(plant.get("count", 1), "count", plant.id)):
                elite = b.l2_account()
                elites.append(elite)
                elite_ids.add(elite)
                for h in sorted(rng.sample(range(nb), target)):
                    ts = reg_ts[h] + 1200 + rng.below(max(start + horizon - reg_ts[h] - 1200, 1))
                    b.buy(ts, background[h], elite)
            truths[plant.id] = PlantTruth(
                "KOLElite", elites=tuple(sorted(elites)),
                accounts={f"elite_{k}": e for k, e in enumerate(elites)},
            )

        elif plant.kind == "WashCohort":
            lo, hi = plant.get("day_range", [0, spec.n_days - 1])
            lo, hi = int(lo), int(hi)
            members = []
            for _ in range(_int(plant.get("count", 1), "count", plant.id)):
                acct = b.l2_account()
                members.append(acct)
                day = lo + rng.below(hi - lo + 1)
                b.buy(start + day * SECONDS_PER_DAY + rng.below(SECONDS_PER_DAY), acct, acct)
            truths[plant.id] = PlantTruth("WashCohort", wash=tuple(sorted(members)))

        elif plant.kind == "HunterCluster":
            size = _int(plant.get("size", 3), "size", plant.id)
            n_sells = _sells(plant)
            t0 = start + _plant_day(b, plant, spec.n_days) * SECONDS_PER_DAY + 7200 + rng.below(3600)
            given = plant.get("main")
            if given is not None:
                main = Address(given)
                if main in b.addresses:
                    raise SpecError(f"main address {main} collides with a generated account", plant.id)
                b.addresses.add(main)
                b.l2.append(main)
            else:
                main = b.l2_account()
            pool = registered_before(t0)
            b.register(t0, main)
            b.buy(t0 + 300, main, rng.choice(pool))
            subs = []
            ts = t0 + 900
            for _ in range(size):
                sub = b.l2_account()
                subs.append(sub)
                b.register(ts, sub)
                ts = b.subsidiary_run(ts + 60, sub, main, n_sells, pool) + 600
            truths[plant.id] = PlantTruth(
                "HunterCluster",
                hunters=((main, tuple(sorted(subs))),),
                accounts={"main": main, **{f"subsidiary_{k}": s for k, s in enumerate(subs)}},
            )

        elif plant.kind == "S2Linkage":
            n_sells = _sells(plant)
            t0 = start + _plant_day(b, plant, spec.n_days) * SECONDS_PER_DAY + 7200 + rng.below(3600)
            pool = registered_before(t0)
            a, bb = b.address(), b.address()
            d = b.l2_account()
            e = b.l2_account()
            f = b.l2_account()
            # a and b already know each other on L1
            b.tx(Layer.L1, t0 - 7200, a, bb, TRANSFER, value_out=b.price())
            b.register(t0, d, funder=a)
            b.register(t0 + 600, e)
            b.register(t0 + 1200, f)
            b.buy(t0 + 1500, f, d)
            b.buy(t0 + 1800, d, f)
            ts = b.subsidiary_run(t0 + 2400, e, d, n_sells, pool)
            ts = b.subsidiary_run(ts + 300, f, d, n_sells, pool)
            b.tx(Layer.L1, ts + 3600, f, bb, TRANSFER, value_out=b.price())
            cluster = tuple(sorted((d, e, f)))
            truths[plant.id] = PlantTruth(
                "S2Linkage",
                hunters=((d, tuple(sorted((e, f)))),),
                links=(
                    {"scenario": "S1_L2Cluster", "confidence": "High", "l2_accounts": list(cluster), "l1_accounts": []},
                    {
                        "scenario": "S2_L1Linkage",
                        "confidence": "Medium",
                        "l2_accounts": list(cluster),
                        "l1_accounts": sorted((a, bb)),
                    },
                ),
                accounts={"a": a, "b": bb, "d": d, "e": e, "f": f},
            )

    # background trading; elite tokens are never sold so holder counts stay exact
    for i, acct in enumerate(background):
        held: list[Address] = [background[rng.below(i)]] if i else []
        first_day = (reg_ts[i] - start) // SECONDS_PER_DAY
        for day in range(first_day, spec.n_days):
            lo_ts = max(reg_ts[i] + 900, start + day * SECONDS_PER_DAY)
            hi_ts = start + (day + 1) * SECONDS_PER_DAY
            if lo_ts >= hi_ts:
                continue
            for _ in range(rng.poisson(spec.daily_tx_rate)):
                ts = lo_ts + rng.below(hi_ts - lo_ts)
                if held and rng.random() < 0.3:
                    subject = held.pop(rng.below(len(held)))
                    b.sell(ts, acct, subject)
                elif i:
                    subject = background[rng.below(i)]
                    held.append(subject)
                    b.buy(ts, acct, subject)
                else:
                    b.buy(ts, acct, acct)

    dataset = _assemble(b)
    return dataset, GroundTruth(spec.seed, truths)


def _assemble(b: _Builder) -> Dataset:
    holders: dict[Address, int] = defaultdict(int)
    holding: dict[Address, int] = defaultdict(int)
    supply: dict[Address, int] = defaultdict(int)
    follows = []
    for (holder, subject), n in sorted(b.net.items()):
        if n <= 0:
            continue
        supply[subject] += n
        if holder == subject:
            continue
        holders[subject] += 1
        holding[holder] += 1
        follows.append(FollowEdge(holder, subject, FollowSource.HOLDING))
    accounts = []
    for k, addr in enumerate(b.l2):
        profile = SocialProfile(
            platform_id=str(k + 1),
            twitter_user_id=str(10**9 + k),
            twitter_username=f"user{k + 1}",
            twitter_name=f"User {k + 1}",
            holder_count=holders[addr],
            holding_count=holding[addr],
            token_supply=supply[addr],
            display_price=b.last_price.get(addr),
            last_online=b.last_active.get(addr),
        )
        accounts.append(Account(addr, Layer.L2, profile))
    n_l1 = sum(1 for t in b.txs if t.layer is Layer.L1)
    sources = {"users": "users.csv", "txs_l2": "txs_l2.csv", "txs_l1": "txs_l1.csv", "follows": "follows.csv"}
    rows = {"users": len(accounts), "txs_l2": len(b.txs) - n_l1, "txs_l1": n_l1, "follows": len(follows)}
    return assemble(accounts, b.txs, follows, sources=sources, rows=rows)


def write_bundle(dataset: Dataset, truth: GroundTruth | None, directory: str | Path) -> dict[str, Path]:
    """Write the ingest-format files (plus ``ground_truth.json``) to *directory*."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "users": out / "users.csv",
        "txs_l1": out / "txs_l1.csv",
        "txs_l2": out / "txs_l2.csv",
        "follows": out / "follows.csv",
    }
    write_users(paths["users"], dataset.accounts)
    write_transactions(paths["txs_l1"], dataset.transactions_in(Layer.L1, ok_only=False))
    write_transactions(paths["txs_l2"], dataset.transactions_in(Layer.L2, ok_only=False))
    write_follows(paths["follows"], dataset.follows)
    if truth is not None:
        paths["ground_truth"] = out / "ground_truth.json"
        paths["ground_truth"].write_text(truth.to_json(), encoding="utf-8")
    return paths
