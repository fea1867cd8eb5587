import itertools

import pytest
from hypothesis import settings

from linklens.ingest import assemble
from linklens.model import BUY_SHARE, SELL_SHARE, TRANSFER, Address, Layer, Transaction

settings.register_profile("linklens", derandomize=True, deadline=None, max_examples=100)
settings.load_profile("linklens")

T0 = 1_696_809_600  # 2023-10-09


def A(i: int) -> Address:
    return Address("0x" + format(i, "040x"))


_hash_counter = itertools.count(1)


def tx(sender, recipient, method=TRANSFER, ts=T0, value=0, layer=Layer.L2, error=None, block=None, h=None):
    """Build a transaction; value lands in Value_OUT except for sells (Value_IN)."""
    n = next(_hash_counter)
    s = sender if isinstance(sender, str) else A(sender)
    r = recipient if isinstance(recipient, str) else A(recipient)
    vin, vout = (value, 0) if method == SELL_SHARE else (0, value)
    return Transaction(
        h or "0x" + format(n, "064x"),
        ts // 2 if block is None else block,
        ts,
        Address(s),
        Address(r),
        vin,
        vout,
        0,
        method,
        layer,
        error,
    )


def buy(a, b, ts=T0, value=10**15, **kw):
    return tx(a, b, BUY_SHARE, ts, value, **kw)


def sell(a, b, ts=T0, value=10**15, **kw):
    return tx(a, b, SELL_SHARE, ts, value, **kw)


def dataset(txs=(), accounts=(), follows=(), l1=False):
    sources = {"txs_l2": "txs_l2.csv"}
    if l1:
        sources["txs_l1"] = "txs_l1.csv"
    return assemble(accounts, txs, follows, sources=sources)


@pytest.fixture
def make_dataset():
    return dataset


# -- acceptance verdicts ----------------------------------------------------

_VERDICTS: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when != "call":
        return
    n, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _VERDICTS[n] = ("PASS" if report.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        verdict, title, detail = _VERDICTS[n]
        terminalreporter.write_line(f"C{n} {verdict}  {title}" + (f"  [{detail}]" if detail else ""))
