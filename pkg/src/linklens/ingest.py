"""Load users, transactions and follow relations into a :class:`Dataset`.

CSV files carry a header row and JSONL files one object per line; column
names are matched case-insensitively. Row-level problems are collected as
:class:`RowError` records and the load continues, whereas a missing required
column raises :class:`~linklens.errors.SchemaError` immediately.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence

from .errors import FormatError, IntegrityError, SchemaError
from .model import (
    Account,
    Address,
    FollowEdge,
    FollowSource,
    Layer,
    SocialProfile,
    Transaction,
    TxMethod,
    WEI_PER_ETH,
    canonicalize_tx_hash,
)

__all__ = [
    "RowError",
    "Loaded",
    "DatasetMeta",
    "Dataset",
    "eth_to_wei",
    "wei_to_eth",
    "load_users",
    "load_transactions",
    "load_follows",
    "assemble",
    "load_bundle",
    "write_users",
    "write_transactions",
    "write_follows",
    "USER_COLUMNS",
    "TX_COLUMNS",
    "FOLLOW_COLUMNS",
    "BUNDLE_FILES",
]

USER_COLUMNS = (
    "id",
    "address",
    "twitterUsername",
    "twitterName",
    "twitterPfpUrl",
    "twitterUserId",
    "lastOnline",
    "lastMessageTime",
    "holderCount",
    "holdingCount",
    "watchlistCount",
    "tokensupply",
    "displayPrice",
    "lifetimeFeesCollectedInWei",
)
TX_COLUMNS = (
    "Txhash",
    "Blockno",
    "UnixTimestamp",
    "DateTime",
    "From",
    "To",
    "Value_IN(ETH)",
    "Value_OUT(ETH)",
    "TxnFee(ETH)",
    "Method",
    "Status",
    "ErrCode",
)
_TX_REQUIRED = tuple(c for c in TX_COLUMNS if c != "DateTime")
FOLLOW_COLUMNS = ("follower", "followee", "source")

BUNDLE_FILES = {
    "users": ("users.csv", "users.jsonl"),
    "txs_l2": ("txs_l2.csv", "txs_l2.jsonl"),
    "txs_l1": ("txs_l1.csv", "txs_l1.jsonl"),
    "follows": ("follows.csv", "follows.jsonl"),
}

_OK_STATUS = {"", "ok", "success", "1", "true"}
_FOLLOW_SOURCES = {
    "holding": FollowSource.HOLDING,
    "declared": FollowSource.DECLARED_LIST,
    "declared_list": FollowSource.DECLARED_LIST,
    "declaredlist": FollowSource.DECLARED_LIST,
    "list": FollowSource.DECLARED_LIST,
}
_DECIMAL = re.compile(r"(\d*)(?:\.(\d*))?")


@dataclass(frozen=True)
class RowError:
    path: str
    line: int
    message: str


@dataclass
class Loaded:
    """Result of one file load: parsed items plus the collected row errors."""

    items: list[Any]
    errors: list[RowError] = field(default_factory=list)
    dropped_self: int = 0
    duplicates: int = 0

    def __iter__(self) -> Iterator[Any]:
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class DatasetMeta:
    sources: tuple[tuple[str, str], ...] = ()
    rows: tuple[tuple[str, int], ...] = ()
    n_accounts: int = 0
    n_transactions: int = 0
    n_follows: int = 0
    auto_created: int = 0
    duplicate_tx_dropped: int = 0
    time_span: tuple[int, int] | None = None

    @property
    def source_map(self) -> dict[str, str]:
        return dict(self.sources)

    def as_dict(self) -> dict[str, Any]:
        return {
            "sources": dict(self.sources),
            "rows": dict(self.rows),
            "n_accounts": self.n_accounts,
            "n_transactions": self.n_transactions,
            "n_follows": self.n_follows,
            "auto_created": self.auto_created,
            "duplicate_tx_dropped": self.duplicate_tx_dropped,
            "time_span": list(self.time_span) if self.time_span else None,
        }


@dataclass(frozen=True)
class Dataset:
    """Accounts, transactions and follows with referential closure enforced.

    Accounts are ordered by ``(layer, address)`` and transactions by
    ``(block_no, tx_hash)``.
    """

    accounts: tuple[Account, ...]
    transactions: tuple[Transaction, ...]
    follows: tuple[FollowEdge, ...]
    meta: DatasetMeta = field(default_factory=DatasetMeta)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_index", {a.key: a for a in self.accounts})

    def account(self, address: str, layer: Layer = Layer.L2) -> Account | None:
        return self._index.get((Address(address), layer))  # type: ignore[attr-defined]

    def accounts_in(self, layer: Layer) -> list[Account]:
        return [a for a in self.accounts if a.layer is layer]

    def transactions_in(self, layer: Layer, ok_only: bool = True) -> list[Transaction]:
        return [t for t in self.transactions if t.layer is layer and (t.ok or not ok_only)]

    def has_layer(self, layer: Layer) -> bool:
        key = "txs_l1" if layer is Layer.L1 else "txs_l2"
        if key in self.meta.source_map:
            return True
        return any(t.layer is layer for t in self.transactions)

    @property
    def is_empty(self) -> bool:
        return not self.transactions and not self.accounts and not self.follows


# -- amounts -----------------------------------------------------------------

def eth_to_wei(text: str | int | Decimal) -> int:
    """Convert a decimal ETH amount to integer wei without rounding.

    Up to 18 fractional digits are accepted; anything finer, negative or
    non-numeric raises :class:`FormatError`.
    """
    if isinstance(text, int):
        if text < 0:
            raise FormatError(f"negative amount {text}")
        return text * WEI_PER_ETH
    s = str(text).strip().replace(",", "")
    if s == "":
        return 0
    m = _DECIMAL.fullmatch(s)
    if m is not None and (m.group(1) or m.group(2)):
        whole, frac = m.group(1) or "0", m.group(2) or ""
        if len(frac) > 18:
            if frac[18:].strip("0"):
                raise FormatError(f"amount {s!r} is finer than 1 wei")
            frac = frac[:18]
        return int(whole) * WEI_PER_ETH + int(frac.ljust(18, "0"))
    try:
        value = Decimal(s) * WEI_PER_ETH
    except InvalidOperation:
        raise FormatError(f"malformed amount {s!r}") from None
    if value < 0:
        raise FormatError(f"negative amount {s!r}")
    if value != value.to_integral_value():
        raise FormatError(f"amount {s!r} is finer than 1 wei")
    return int(value)


def wei_to_eth(wei: int) -> str:
    """Exact decimal ETH string for *wei*; inverse of :func:`eth_to_wei`."""
    if wei < 0:
        raise FormatError(f"negative amount {wei}")
    whole, frac = divmod(wei, WEI_PER_ETH)
    if frac == 0:
        return str(whole)
    return f"{whole}.{frac:018d}".rstrip("0")


# -- row sources -------------------------------------------------------------

def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt:
        if fmt not in ("csv", "jsonl"):
            raise ValueError(f"unknown format {fmt!r}")
        return fmt
    return "jsonl" if path.suffix.lower() in (".jsonl", ".ndjson") else "csv"


def _rows(path: Path, fmt: str) -> tuple[list[str] | None, Iterator[tuple[int, dict[str, Any]]]]:
    """Return (lowercased header or None for JSONL, iterator of (line, row))."""
    if fmt == "csv":
        fh = open(path, newline="", encoding="utf-8")
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            fh.close()
            return [], iter(())

        def gen() -> Iterator[tuple[int, dict[str, Any]]]:
            with fh:
                width = len(header)
                for rec in reader:
                    if not rec:
                        continue
                    if len(rec) != width:
                        yield reader.line_num, {"__bad__": f"expected {width} fields, got {len(rec)}"}
                        continue
                    yield reader.line_num, dict(zip(header, rec))

        return header, gen()

    def gen_json() -> Iterator[tuple[int, dict[str, Any]]]:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line, parse_float=Decimal)
                except json.JSONDecodeError as exc:
                    yield lineno, {"__bad__": f"invalid JSON: {exc.msg}"}
                    continue
                if not isinstance(obj, dict):
                    yield lineno, {"__bad__": "line is not a JSON object"}
                    continue
                yield lineno, {str(k).strip().lower(): v for k, v in obj.items()}

    return None, gen_json()


def _require(header: Sequence[str] | None, columns: Iterable[str], path: Path) -> None:
    if header is None:
        return
    for col in columns:
        if col.lower() not in header:
            raise SchemaError(col, str(path))


def _json_require(row: dict[str, Any], columns: Iterable[str], path: Path) -> None:
    for col in columns:
        if col.lower() not in row:
            raise SchemaError(col, str(path))


def _text(row: dict[str, Any], key: str) -> str | None:
    value = row.get(key)
    if value is None:
        return None
    s = str(value).strip()
    return s or None


def _opt_int(row: dict[str, Any], key: str) -> int | None:
    s = _text(row, key)
    if s is None:
        return None
    try:
        value = int(Decimal(s))
    except (InvalidOperation, ValueError):
        raise FormatError(f"{key}: not an integer: {s!r}") from None
    if value < 0:
        raise FormatError(f"{key}: negative value {value}")
    return value


def _opt_ts(row: dict[str, Any], key: str) -> int | None:
    value = _opt_int(row, key)
    # platform APIs report milliseconds
    if value is not None and value > 10**11:
        value //= 1000
    return value


class _AddressCache(dict):
    """Interns canonical addresses so repeated rows share one object."""

    def __missing__(self, raw: str) -> Address:
        addr = Address(raw)
        self[raw] = addr
        return addr


# -- loaders -----------------------------------------------------------------

def load_users(path: str | Path, format: str | None = None) -> Loaded:
    """Load user profiles; one L2 :class:`Account` per row."""
    path = Path(path)
    fmt = _infer_format(path, format)
    header, rows = _rows(path, fmt)
    _require(header, ("id", "address"), path)
    out = Loaded(items=[])
    seen: set[Address] = set()
    for line, row in rows:
        if "__bad__" in row:
            out.errors.append(RowError(str(path), line, row["__bad__"]))
            continue
        if header is None:
            _json_require(row, ("id", "address"), path)
        try:
            raw_addr = _text(row, "address")
            if raw_addr is None:
                raise FormatError("address is empty")
            addr = Address(raw_addr)
            platform_id = _text(row, "id")
            if platform_id is None:
                raise FormatError("id is empty")
            profile = SocialProfile(
                platform_id=platform_id,
                twitter_user_id=_text(row, "twitteruserid"),
                twitter_username=_text(row, "twitterusername"),
                twitter_name=_text(row, "twittername"),
                twitter_pfp_url=_text(row, "twitterpfpurl"),
                holder_count=_opt_int(row, "holdercount"),
                holding_count=_opt_int(row, "holdingcount"),
                watchlist_count=_opt_int(row, "watchlistcount"),
                token_supply=_opt_int(row, "tokensupply"),
                display_price=_opt_int(row, "displayprice"),
                lifetime_fees_wei=_opt_int(row, "lifetimefeescollectedinwei"),
                last_online=_opt_ts(row, "lastonline"),
                last_message_time=_opt_ts(row, "lastmessagetime"),
            )
        except FormatError as exc:
            out.errors.append(RowError(str(path), line, str(exc)))
            continue
        if addr in seen:
            out.duplicates += 1
            out.errors.append(RowError(str(path), line, f"duplicate address {addr}"))
            continue
        seen.add(addr)
        out.items.append(Account(addr, Layer.L2, profile))
    return out


def _parse_status(row: dict[str, Any]) -> str | None:
    status = (_text(row, "status") or "").lower()
    code = _text(row, "errcode")
    if status in _OK_STATUS and code is None:
        return None
    return code or _text(row, "status") or "error"


def load_transactions(path: str | Path, format: str | None = None, layer: Layer = Layer.L2) -> Loaded:
    """Load explorer-style transaction rows for one layer.

    Raises :class:`IntegrityError` listing every repeated ``Txhash``.
    """
    path = Path(path)
    fmt = _infer_format(path, format)
    header, rows = _rows(path, fmt)
    _require(header, _TX_REQUIRED, path)
    layer = Layer(layer)
    out = Loaded(items=[])
    addrs = _AddressCache()
    methods: dict[str, TxMethod] = {}
    seen: set[str] = set()
    dupes: list[str] = []
    for line, row in rows:
        if "__bad__" in row:
            out.errors.append(RowError(str(path), line, row["__bad__"]))
            continue
        if header is None:
            _json_require(row, _TX_REQUIRED, path)
        try:
            tx_hash = canonicalize_tx_hash(str(row["txhash"]))
            raw_method = str(row["method"] or "")
            method = methods.get(raw_method)
            if method is None:
                method = methods[raw_method] = TxMethod.parse(raw_method)
            try:
                block_no = int(str(row["blockno"]).strip())
                ts = int(str(row["unixtimestamp"]).strip())
            except ValueError:
                raise FormatError("Blockno/UnixTimestamp must be integers") from None
            if block_no < 0 or ts < 0:
                raise FormatError("Blockno/UnixTimestamp must be non-negative")
            tx = Transaction(
                tx_hash=tx_hash,
                block_no=block_no,
                timestamp=ts,
                sender=addrs[str(row["from"])],
                recipient=addrs[str(row["to"])],
                value_in_wei=eth_to_wei(row["value_in(eth)"]),
                value_out_wei=eth_to_wei(row["value_out(eth)"]),
                fee_wei=eth_to_wei(row["txnfee(eth)"]),
                method=method,
                layer=layer,
                error=_parse_status(row),
            )
        except FormatError as exc:
            out.errors.append(RowError(str(path), line, str(exc)))
            continue
        if tx_hash in seen:
            dupes.append(tx_hash)
            continue
        seen.add(tx_hash)
        out.items.append(tx)
    if dupes:
        raise IntegrityError(
            f"duplicate Txhash in {path}: {', '.join(sorted(set(dupes)))}", sorted(set(dupes))
        )
    return out


def load_follows(path: str | Path, format: str | None = None) -> Loaded:
    """Load ``follower,followee,source`` rows, dropping self-follows and repeats."""
    path = Path(path)
    fmt = _infer_format(path, format)
    header, rows = _rows(path, fmt)
    _require(header, FOLLOW_COLUMNS, path)
    out = Loaded(items=[])
    seen: set[FollowEdge] = set()
    for line, row in rows:
        if "__bad__" in row:
            out.errors.append(RowError(str(path), line, row["__bad__"]))
            continue
        if header is None:
            _json_require(row, FOLLOW_COLUMNS, path)
        try:
            follower = Address(str(row["follower"]))
            followee = Address(str(row["followee"]))
            tag = str(row["source"]).strip().lower()
            if tag not in _FOLLOW_SOURCES:
                raise FormatError(f"unknown follow source {row['source']!r}")
        except FormatError as exc:
            out.errors.append(RowError(str(path), line, str(exc)))
            continue
        if follower == followee:
            out.dropped_self += 1
            continue
        edge = FollowEdge(follower, followee, _FOLLOW_SOURCES[tag])
        if edge in seen:
            out.duplicates += 1
            continue
        seen.add(edge)
        out.items.append(edge)
    return out


def assemble(
    accounts: Iterable[Account],
    transactions: Iterable[Transaction],
    follows: Iterable[FollowEdge] = (),
    *,
    sources: dict[str, str] | None = None,
    rows: dict[str, int] | None = None,
) -> Dataset:
    """Build a :class:`Dataset`, repairing referential gaps instead of failing.

    Transaction endpoints and follow endpoints missing from *accounts* become
    profile-less accounts (counted in ``meta.auto_created``). A transaction
    hash repeated across inputs keeps its first occurrence. ``first_seen`` is
    the earliest successful transaction touching the account.
    """
    index: dict[tuple[Address, Layer], Account] = {}
    for acct in accounts:
        index.setdefault(acct.key, acct)

    txs: list[Transaction] = []
    seen: set[str] = set()
    dropped = 0
    for tx in transactions:
        if tx.tx_hash in seen:
            dropped += 1
            continue
        seen.add(tx.tx_hash)
        txs.append(tx)
    txs.sort(key=lambda t: (t.block_no, t.tx_hash))

    first: dict[tuple[Address, Layer], int] = {}
    auto = 0
    for tx in txs:
        for addr in (tx.sender, tx.recipient):
            key = (addr, tx.layer)
            if key not in index:
                index[key] = Account(addr, tx.layer)
                auto += 1
            if tx.ok:
                prev = first.get(key)
                if prev is None or tx.timestamp < prev:
                    first[key] = tx.timestamp

    follow_list = list(dict.fromkeys(follows))
    for edge in follow_list:
        for addr in (edge.follower, edge.followee):
            key = (addr, Layer.L2)
            if key not in index:
                index[key] = Account(addr, Layer.L2)
                auto += 1

    final = []
    for key in sorted(index, key=lambda k: (k[1].value, k[0])):
        acct = index[key]
        ts = first.get(key)
        if ts is not None and acct.first_seen != ts:
            acct = replace(acct, first_seen=ts if acct.first_seen is None else min(ts, acct.first_seen))
        final.append(acct)

    span = (min(t.timestamp for t in txs), max(t.timestamp for t in txs)) if txs else None
    meta = DatasetMeta(
        sources=tuple(sorted((sources or {}).items())),
        rows=tuple(sorted((rows or {}).items())),
        n_accounts=len(final),
        n_transactions=len(txs),
        n_follows=len(follow_list),
        auto_created=auto,
        duplicate_tx_dropped=dropped,
        time_span=span,
    )
    return Dataset(tuple(final), tuple(txs), tuple(follow_list), meta)


@dataclass
class BundleLoad:
    dataset: Dataset
    errors: list[RowError]
    found: dict[str, str]
    missing: list[str]


def _find(directory: Path, names: Sequence[str]) -> Path | None:
    for name in names:
        p = directory / name
        if p.exists():
            return p
    return None


def load_bundle(directory: str | Path) -> BundleLoad:
    """Load whichever of users/txs_l2/txs_l1/follows exist under *directory*."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {directory}")
    found: dict[str, str] = {}
    missing: list[str] = []
    errors: list[RowError] = []
    rows: dict[str, int] = {}
    accounts: list[Account] = []
    txs: list[Transaction] = []
    follows: list[FollowEdge] = []
    for key, names in BUNDLE_FILES.items():
        path = _find(directory, names)
        if path is None:
            missing.append(names[0])
            continue
        found[key] = path.name
        if key == "users":
            res = load_users(path)
            accounts.extend(res.items)
        elif key == "follows":
            res = load_follows(path)
            follows.extend(res.items)
        else:
            res = load_transactions(path, layer=Layer.L1 if key == "txs_l1" else Layer.L2)
            txs.extend(res.items)
        rows[key] = len(res.items)
        errors.extend(res.errors)
    ds = assemble(accounts, txs, follows, sources=found, rows=rows)
    return BundleLoad(ds, errors, found, missing)


# -- writers -----------------------------------------------------------------

def _fmt(value: Any) -> str:
    return "" if value is None else str(value)


def write_users(path: str | Path, accounts: Iterable[Account]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(USER_COLUMNS)
        for a in accounts:
            p = a.profile
            if p is None:
                continue
            w.writerow(
                [
                    p.platform_id,
                    a.address,
                    _fmt(p.twitter_username),
                    _fmt(p.twitter_name),
                    _fmt(p.twitter_pfp_url),
                    _fmt(p.twitter_user_id),
                    _fmt(p.last_online),
                    _fmt(p.last_message_time),
                    _fmt(p.holder_count),
                    _fmt(p.holding_count),
                    _fmt(p.watchlist_count),
                    _fmt(p.token_supply),
                    _fmt(p.display_price),
                    _fmt(p.lifetime_fees_wei),
                ]
            )


def write_transactions(path: str | Path, transactions: Iterable[Transaction]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TX_COLUMNS)
        for t in transactions:
            stamp = datetime.fromtimestamp(t.timestamp, tz=timezone.utc).strftime("%Y-%m-%d %H:%M:%S")
            w.writerow(
                [
                    t.tx_hash,
                    t.block_no,
                    t.timestamp,
                    stamp,
                    t.sender,
                    t.recipient,
                    wei_to_eth(t.value_in_wei),
                    wei_to_eth(t.value_out_wei),
                    wei_to_eth(t.fee_wei),
                    t.method.label,
                    "Success" if t.ok else "Error",
                    t.error or "",
                ]
            )


def write_follows(path: str | Path, follows: Iterable[FollowEdge]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FOLLOW_COLUMNS)
        for f in follows:
            w.writerow([f.follower, f.followee, f.source.value])
