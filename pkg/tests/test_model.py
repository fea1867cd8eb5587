import pytest
from hypothesis import given
from hypothesis import strategies as st

from linklens.errors import FormatError
from linklens.model import (
    BUY_SHARE,
    SELL_SHARE,
    TRANSFER,
    Account,
    Address,
    FollowEdge,
    FollowSource,
    Layer,
    MethodKind,
    SocialProfile,
    TxMethod,
    canonicalize_address,
    canonicalize_tx_hash,
)

MIXED = "0xA7D8d9ef8D8Ce8992Df33D8b8CF4Aebabd5bD270"


def test_mixed_case_address_is_lowercased():
    a = canonicalize_address(MIXED)
    assert a == MIXED.lower()
    assert a.display == MIXED.lower()
    assert len(a.display) == 42
    assert a.bytes == bytes.fromhex(MIXED[2:])


def test_short_address_rejected_with_input_named():
    with pytest.raises(FormatError, match="0xfd5a"):
        canonicalize_address("0xfd5a")


@pytest.mark.parametrize("raw", ["", "0x", "0xZZ" + "0" * 38, "1" * 42, "0x" + "0" * 41])
def test_malformed_addresses(raw):
    with pytest.raises(FormatError):
        Address(raw)


def test_address_equality_ignores_case():
    assert Address(MIXED) == Address(MIXED.lower())
    assert hash(Address(MIXED)) == hash(Address(MIXED.upper().replace("0X", "0x")))


@given(st.binary(min_size=20, max_size=20), st.lists(st.booleans(), min_size=40, max_size=40))
def test_address_round_trip(raw, upper):
    text = "0x" + "".join(c.upper() if u else c for c, u in zip(raw.hex(), upper))
    a = canonicalize_address(text)
    assert canonicalize_address(a.display) == a
    assert Address.from_bytes(a.bytes) == a
    assert canonicalize_address(canonicalize_address(text)) == a


def test_tx_hash_canonical():
    h = "0x" + "AB" * 32
    assert canonicalize_tx_hash(h) == h.lower()
    with pytest.raises(FormatError):
        canonicalize_tx_hash("0x1234")


def test_account_identity_ignores_profile():
    a = Address(MIXED)
    p1 = SocialProfile(platform_id="1", holder_count=65)
    p2 = SocialProfile(platform_id="2", holder_count=3)
    assert Account(a, Layer.L2, p1) == Account(a, Layer.L2, p2)
    assert Account(a, Layer.L2) != Account(a, Layer.L1)
    assert len({Account(a, Layer.L2, p1), Account(a, Layer.L2, p2)}) == 1


def test_profile_validation():
    with pytest.raises(FormatError):
        SocialProfile(platform_id="1", twitter_user_id="")
    with pytest.raises(FormatError):
        SocialProfile(platform_id="1", holder_count=-1)


@pytest.mark.parametrize(
    "raw,kind",
    [
        ("Buy_Share", MethodKind.BUY_SHARE),
        ("buyShares", MethodKind.BUY_SHARE),
        ("Sell Shares", MethodKind.SELL_SHARE),
        ("Transfer", MethodKind.TRANSFER),
        ("transfer", MethodKind.TRANSFER),
    ],
)
def test_method_mapping(raw, kind):
    assert TxMethod.parse(raw).kind is kind


def test_unknown_method_kept_verbatim():
    m = TxMethod.parse("Set Approval For All")
    assert m.kind is MethodKind.CONTRACT_OTHER
    assert m.tag == "Set Approval For All"
    assert m.label == "Set Approval For All"
    assert TxMethod.parse("Buy_Share") == BUY_SHARE
    assert TxMethod.parse("Sell_Share") == SELL_SHARE
    assert TxMethod.parse("Transfer") == TRANSFER


def test_self_follow_rejected():
    a = Address(MIXED)
    with pytest.raises(FormatError):
        FollowEdge(a, a, FollowSource.HOLDING)
