"""Domain types: addresses, accounts, transactions and follow edges.

Every type here is an immutable value. Monetary amounts are integer wei and
timestamps are integer seconds since the Unix epoch (UTC).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import FormatError

__all__ = [
    "Address",
    "Layer",
    "SocialProfile",
    "Account",
    "MethodKind",
    "TxMethod",
    "Transaction",
    "FollowSource",
    "FollowEdge",
    "canonicalize_address",
    "canonicalize_tx_hash",
    "WEI_PER_ETH",
    "SECONDS_PER_DAY",
]

WEI_PER_ETH = 10**18
SECONDS_PER_DAY = 86_400

_HEX40 = re.compile(r"(?:0[xX])?([0-9a-fA-F]{40})")
_HEX64 = re.compile(r"(?:0[xX])?([0-9a-fA-F]{64})")


class Address(str):
    """A 20-byte account identifier in canonical ``0x`` + lowercase hex form.

    Subclassing ``str`` keeps hashing and ordering cheap: the lowercase hex
    display order coincides with the byte order.
    """

    __slots__ = ()

    def __new__(cls, raw: str) -> Address:
        if type(raw) is cls:
            return raw
        m = _HEX40.fullmatch(raw.strip()) if isinstance(raw, str) else None
        if m is None:
            raise FormatError(f"malformed address {raw!r}: expected 40 hex digits")
        return super().__new__(cls, "0x" + m.group(1).lower())

    @property
    def bytes(self) -> bytes:
        return bytes.fromhex(self[2:])

    @property
    def display(self) -> str:
        return str.__str__(self)

    @classmethod
    def from_bytes(cls, raw: bytes) -> Address:
        if len(raw) != 20:
            raise FormatError(f"address must be 20 bytes, got {len(raw)}")
        return cls(raw.hex())

    def short(self) -> str:
        """Abbreviated ``0xa7d8...580c`` form used in tables."""
        return f"{self[:6]}...{self[-4:]}"

    def __repr__(self) -> str:
        return f"Address({str.__repr__(self)})"


def canonicalize_address(raw: str) -> Address:
    """Parse *raw* (hex with or without ``0x``, any case) into an Address."""
    return Address(raw)


def canonicalize_tx_hash(raw: str) -> str:
    m = _HEX64.fullmatch(raw.strip()) if isinstance(raw, str) else None
    if m is None:
        raise FormatError(f"malformed transaction hash {raw!r}: expected 64 hex digits")
    return "0x" + m.group(1).lower()


class Layer(str, Enum):
    L1 = "L1"
    L2 = "L2"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class SocialProfile:
    """Platform metadata attached to an L2 account. Absent values are ``None``."""

    platform_id: str
    twitter_user_id: str | None = None
    twitter_username: str | None = None
    twitter_name: str | None = None
    twitter_pfp_url: str | None = None
    holder_count: int | None = None
    holding_count: int | None = None
    watchlist_count: int | None = None
    token_supply: int | None = None
    display_price: int | None = None
    lifetime_fees_wei: int | None = None
    last_online: int | None = None
    last_message_time: int | None = None

    def __post_init__(self) -> None:
        if self.twitter_user_id == "":
            raise FormatError("twitter_user_id must be non-empty when present")
        for name in (
            "holder_count",
            "holding_count",
            "watchlist_count",
            "token_supply",
            "display_price",
            "lifetime_fees_wei",
        ):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise FormatError(f"{name} must be non-negative, got {value}")


@dataclass(frozen=True)
class Account:
    """A layer-tagged address. Identity is the ``(address, layer)`` pair."""

    address: Address
    layer: Layer
    profile: SocialProfile | None = field(default=None, compare=False)
    first_seen: int | None = field(default=None, compare=False)

    @property
    def key(self) -> tuple[Address, Layer]:
        return (self.address, self.layer)


class MethodKind(str, Enum):
    TRANSFER = "Transfer"
    BUY_SHARE = "Buy_Share"
    SELL_SHARE = "Sell_Share"
    CONTRACT_OTHER = "ContractOther"


@dataclass(frozen=True)
class TxMethod:
    """Transaction method; unknown method strings survive verbatim in ``tag``."""

    kind: MethodKind
    tag: str = ""

    @classmethod
    def parse(cls, raw: str) -> TxMethod:
        text = raw.strip()
        low = text.lower()
        if low == "transfer":
            return TRANSFER
        if "buy" in low:
            return BUY_SHARE
        if "sell" in low:
            return SELL_SHARE
        return cls(MethodKind.CONTRACT_OTHER, text)

    @property
    def label(self) -> str:
        return self.tag if self.kind is MethodKind.CONTRACT_OTHER else self.kind.value

    def __str__(self) -> str:
        return self.label


TRANSFER = TxMethod(MethodKind.TRANSFER)
BUY_SHARE = TxMethod(MethodKind.BUY_SHARE)
SELL_SHARE = TxMethod(MethodKind.SELL_SHARE)


@dataclass(frozen=True, slots=True)
class Transaction:
    """One on-chain action.

    For share trades ``to`` is the share subject (whose token is traded). A
    failed transaction carries its error code in ``error`` and never becomes
    a graph edge or detector evidence.
    """

    tx_hash: str
    block_no: int
    timestamp: int
    sender: Address
    recipient: Address
    value_in_wei: int
    value_out_wei: int
    fee_wei: int
    method: TxMethod
    layer: Layer
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def kind(self) -> MethodKind:
        return self.method.kind

    @property
    def amount_wei(self) -> int:
        # the value moved along sender -> recipient
        return self.value_out_wei or self.value_in_wei


class FollowSource(str, Enum):
    HOLDING = "holding"
    DECLARED_LIST = "declared_list"


@dataclass(frozen=True)
class FollowEdge:
    follower: Address
    followee: Address
    source: FollowSource

    def __post_init__(self) -> None:
        if self.follower == self.followee:
            raise FormatError(f"self-follow on {self.follower}")
