import dataclasses
import itertools
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from linklens.detect import (
    Confidence,
    Scenario,
    WashAnomaly,
    detect_bonus_hunters,
    detect_wash_trading,
    hunter_activity_series,
    infer_cross_layer_links,
)
from linklens.errors import CapabilityError
from linklens.ingest import assemble
from linklens.model import Layer, MethodKind
from linklens.synth import generate

from conftest import T0, A, buy, dataset, sell, tx

ETH = 10**18
DAY = 86_400


def subsidiary(sub, main, t, n_sells=5, value=ETH // 100, token=900):
    """sub buys and sells n_sells tokens, then transfers the proceeds to main."""
    out = [buy(sub, sub, ts=t)]
    for k in range(n_sells):
        out.append(buy(sub, token, ts=t + 10 + k))
    for k in range(n_sells):
        out.append(sell(sub, token, ts=t + 100 + k, value=value))
    out.append(tx(sub, main, ts=t + 1000, value=n_sells * value))
    return out


def test_planted_cluster_in_background():
    ds, truth = generate({
        "seed": 42, "n_background_accounts": 200, "n_days": 30, "daily_tx_rate": 0.5,
        "plants": [{"id": "c", "kind": "HunterCluster", "size": 3}],
    })
    (finding,) = detect_bonus_hunters(ds)
    assert finding.key == next(iter(truth.hunter_keys()))
    assert all(finding.time_ordering_ok.values())
    assert all(n == 5 for n in finding.sell_tx_counts.values())
    assert all(n == 1 for n in finding.transfer_tx_counts.values())
    assert _brute_force_clusters(ds) == {finding.key}


def _brute_force_clusters(ds, ratio=5.0, min_sells=3):
    """Evaluate the subsidiary conditions per account from the raw log, then
    every subset of >= 2 candidates with a shared counterparty; keep maximal ones."""
    sent = {}
    for t in ds.transactions:
        if t.ok and t.layer is Layer.L2:
            sent.setdefault(t.sender, []).append(t)
    cand = {}
    for a, txs in sent.items():
        sells = [t.timestamp for t in txs if t.method.kind is MethodKind.SELL_SHARE]
        trans = [t for t in txs if t.method.kind is MethodKind.TRANSFER and t.recipient != a]
        if len(sells) >= min_sells and trans and len(sells) >= ratio * len(trans) and max(sells) < min(t.timestamp for t in trans):
            cand[a] = {t.recipient for t in trans}
    inbound = {}
    for t in ds.transactions:
        if t.ok and t.layer is Layer.L2 and t.method.kind is MethodKind.TRANSFER and t.sender != t.recipient:
            inbound[t.recipient] = inbound.get(t.recipient, 0) + t.amount_wei
    groups = []
    names = sorted(cand)
    for k in range(2, len(names) + 1):
        for combo in itertools.combinations(names, k):
            common = set.intersection(*(cand[c] for c in combo)) - set(combo)
            if common:
                groups.append((frozenset(combo), common))
    out = set()
    for g, common in groups:
        if any(g < h for h, _ in groups):
            continue
        main = min(common, key=lambda a: (-inbound.get(a, 0), a))
        out.add((main, tuple(sorted(g))))
    return out


def test_transfer_before_sells_disqualifies():
    txs = subsidiary(2, 1, T0) + subsidiary(3, 1, T0 + 5000)
    early = [tx(4, 1, ts=T0 - 10, value=1)]
    early += [buy(4, 900, ts=T0 + k) for k in range(5)] + [sell(4, 900, ts=T0 + 50 + k) for k in range(5)]
    (finding,) = detect_bonus_hunters(dataset(txs + early))
    assert finding.subsidiaries == (A(2), A(3))


def test_equal_inbound_tie_goes_to_lower_address():
    txs = []
    for sub, t in ((3, T0), (4, T0 + 5000)):
        txs += subsidiary(sub, 1, t)[:-1]
        txs.append(tx(sub, 1, ts=t + 1000, value=ETH))
        txs.append(tx(sub, 2, ts=t + 1001, value=ETH))
    # two transfers each: ratio 5 needs 10 sells
    for sub, t in ((3, T0), (4, T0 + 5000)):
        txs += [buy(sub, 901, ts=t + 20 + k) for k in range(5)] + [sell(sub, 901, ts=t + 200 + k) for k in range(5)]
    (finding,) = detect_bonus_hunters(dataset(txs))
    assert finding.main_account == A(1)
    assert finding.main_inbound_total_wei == 2 * ETH


def test_main_is_largest_inbound_member():
    txs = subsidiary(3, 1, T0) + subsidiary(4, 1, T0 + 5000)
    txs += [tx(3, 2, ts=T0 + 1500, value=ETH // 100), tx(4, 2, ts=T0 + 6500, value=ETH // 100)]
    txs += [buy(s, 902, ts=T0 + 300 + k) for s in (3, 4) for k in range(5)]
    txs += [sell(s, 902, ts=T0 + 400 + k, value=ETH) for s in (3, 4) for k in range(5)]
    txs += [tx(9, 2, ts=T0, value=10 * ETH)]
    (finding,) = detect_bonus_hunters(dataset(txs))
    assert finding.main_account == A(2)
    assert finding.inbound_value_wei[A(3)] == ETH // 100


small_logs = st.lists(
    st.tuples(st.integers(1, 6), st.integers(1, 6), st.sampled_from(["sell", "transfer"]), st.integers(0, 50)),
    max_size=60,
)


@given(small_logs, st.floats(0.5, 4.0), st.floats(0.0, 4.0))
def test_raising_ratio_only_shrinks(log, low, bump):
    txs = [
        (sell if kind == "sell" else tx)(a, b if kind == "transfer" else 90, ts=T0 + t, value=1)
        for a, b, kind, t in log
    ]
    ds = dataset(txs)
    lo = detect_bonus_hunters(ds, ratio_min=low, min_sells=1)
    hi = detect_bonus_hunters(ds, ratio_min=low + bump, min_sells=1)
    flagged_lo = {s for f in lo for s in f.subsidiaries}
    flagged_hi = {s for f in hi for s in f.subsidiaries}
    assert flagged_hi <= flagged_lo
    assert len(hi) <= len(lo) or flagged_hi < flagged_lo
    for f in hi:
        assert any(set(f.subsidiaries) <= set(g.subsidiaries) for g in lo)


def test_hunter_activity_first_month_only():
    ds, _ = generate({
        "seed": 3, "n_background_accounts": 30, "n_days": 70, "daily_tx_rate": 0.3,
        "plants": [{"kind": "HunterCluster", "size": 2, "day": 1}, {"kind": "HunterCluster", "size": 3, "day": 3}],
    })
    findings = detect_bonus_hunters(ds)
    act = hunter_activity_series(findings, ds.meta.time_span)
    assert act.months[0] == "2023-08" and len(act.months) >= 3
    assert act.active_clusters[0] == 2
    assert all(n == 0 for n in act.active_clusters[1:])


def test_hunter_activity_fraction_and_empty():
    ds, _ = generate({"seed": 1, "n_background_accounts": 10, "n_days": 5, "daily_tx_rate": 0.1,
                      "plants": [{"kind": "HunterCluster", "size": 2}]})
    (f,) = detect_bonus_hunters(ds)
    many = [dataclasses.replace(f, tx_count=50) for _ in range(4)]
    assert hunter_activity_series(many).fraction_below_100 == 1.0
    empty = hunter_activity_series([])
    assert empty.months == () and empty.fraction_below_100 is None


# -- wash trading --------------------------------------------------------------

def test_single_buy_only():
    res = detect_wash_trading(dataset([buy(1, 1)]))
    (f,) = res.findings
    assert f.anomaly is WashAnomaly.SINGLE_BUY_ONLY and f.buy_share_tx_count == 1
    assert f.underfunded and f.registration_funding_wei == 0


def test_funded_trader_not_flagged():
    txs = [tx(9, 1, ts=T0 - 100, value=2 * 10**16, layer=Layer.L1), buy(1, 2, ts=T0), sell(1, 2, ts=T0 + 5)]
    assert detect_wash_trading(dataset(txs, l1=True)).findings == []


def test_underfunded_registration():
    txs = [tx(9, 1, ts=T0 - 100, value=10**15), buy(1, 2, ts=T0), buy(1, 3, ts=T0 + 5)]
    (f,) = detect_wash_trading(dataset(txs)).findings
    assert f.anomaly is WashAnomaly.UNDERFUNDED_REGISTRATION
    assert f.registration_funding_wei == 10**15


def test_funding_after_registration_does_not_count():
    txs = [buy(1, 2, ts=T0), tx(9, 1, ts=T0 + 100, value=ETH), buy(1, 3, ts=T0 + 200)]
    (f,) = detect_wash_trading(dataset(txs)).findings
    assert f.anomaly is WashAnomaly.UNDERFUNDED_REGISTRATION


def test_cohort_window_fraction():
    txs = [buy(i, i, ts=T0 + i) for i in range(1, 98)]
    for i in range(98, 101):
        txs += [tx(1000 + i, i, ts=T0 - 100, value=10**17), buy(i, i, ts=T0 + i), buy(i, 1, ts=T0 + 200 + i)]
    res = detect_wash_trading(dataset(txs))
    (w,) = res.windows
    assert (w.new_users, w.flagged) == (100, 97)
    assert w.fraction == 0.97


# -- cross-layer links -----------------------------------------------------------

def split_owner_bundle():
    """a funds d on L1; e and f consolidate into d; d and f hold each other;
    f pays out to b on L1; a and b already transacted."""
    a, b, d, e, f = 101, 102, 1, 2, 3
    txs = [
        tx(a, b, ts=T0 - DAY, value=ETH, layer=Layer.L1),
        tx(a, d, ts=T0 - 100, value=ETH // 10, layer=Layer.L1),
        buy(d, d, ts=T0),
        buy(f, d, ts=T0 + 50),
        buy(d, f, ts=T0 + 60),
    ]
    txs += subsidiary(e, d, T0 + 100) + subsidiary(f, d, T0 + 3000)
    txs.append(tx(f, b, ts=T0 + DAY, value=ETH // 20, layer=Layer.L1))
    return dataset(txs, l1=True)


def test_split_owner_bundle_pattern_yields_s2_link():
    ds = split_owner_bundle()
    links = infer_cross_layer_links(ds, hunters=detect_bonus_hunters(ds))
    by = {link.scenario: link for link in links}
    assert set(by) == {Scenario.S1_L2_CLUSTER, Scenario.S2_L1_LINKAGE}
    assert by[Scenario.S1_L2_CLUSTER].l2_accounts == (A(1), A(2), A(3))
    assert by[Scenario.S1_L2_CLUSTER].confidence is Confidence.HIGH
    s2 = by[Scenario.S2_L1_LINKAGE]
    assert s2.l1_accounts == (A(101), A(102))
    assert s2.confidence is Confidence.MEDIUM and s2.prior_l1_link
    assert [e.rule for e in s2.evidence] == ["S2.s1_cluster", "S2.registration_funding", "S2.payout", "S2.l1_history"]


def test_s1_medium_without_hunter_finding():
    links = infer_cross_layer_links(split_owner_bundle(), hunters=[], scenarios=[Scenario.S1_L2_CLUSTER])
    (s1,) = links
    assert s1.confidence is Confidence.MEDIUM


def test_reciprocal_flow_breaks_cluster():
    ds = split_owner_bundle()
    back = assemble(ds.accounts, list(ds.transactions) + [tx(1, 2, ts=T0 + 2 * DAY, value=1)], sources={"txs_l1": "x"})
    links = infer_cross_layer_links(back, scenarios=[Scenario.S1_L2_CLUSTER])
    assert links == []


def test_four_users_three_new_links():
    # four L2 users funded by their own L1 wallets; only wallets 201 and 202 had met on L1
    users, wallets = [1, 2, 3, 4], [201, 202, 203, 204]
    txs = [tx(wallets[0], wallets[1], ts=T0 - DAY, value=ETH, layer=Layer.L1)]
    for u, w in zip(users, wallets):
        txs += [tx(w, u, ts=T0 - 100, value=ETH // 20, layer=Layer.L1), buy(u, u, ts=T0 + u)]
    # mutual holdings 1-2 (already known on L1), 1-3, 2-4 and 3-4
    for k, (x, y) in enumerate([(1, 2), (1, 3), (2, 4), (3, 4)]):
        txs += [buy(x, y, ts=T0 + 100 + k), buy(y, x, ts=T0 + 200 + k)]
    ds = dataset(txs, l1=True)
    links = infer_cross_layer_links(ds)
    assert all(link.scenario is Scenario.S3_INTER_USER for link in links)
    new = [link for link in links if not link.prior_l1_link]
    known = [link for link in links if link.prior_l1_link]
    assert len(new) == 3
    assert {n.l1_accounts for n in new} == {(A(201), A(203)), (A(202), A(204)), (A(203), A(204))}
    assert [k.l1_accounts for k in known] == [(A(201), A(202))]
    assert all(link.confidence is Confidence.LOW for link in links)


def test_no_ties_no_links():
    txs = [tx(9, 1, ts=T0 - 100, value=ETH, layer=Layer.L1), buy(1, 1, ts=T0), buy(2, 1, ts=T0 + 1)]
    assert infer_cross_layer_links(dataset(txs, l1=True)) == []


def test_missing_l1_is_capability_error():
    ds = dataset([buy(1, 2)])
    with pytest.raises(CapabilityError) as exc:
        infer_cross_layer_links(ds)
    assert exc.value.missing == "txs_l1.csv" and "txs_l1.csv" in str(exc.value)
    assert infer_cross_layer_links(ds, scenarios=[Scenario.S1_L2_CLUSTER]) == []


# -- evidence integrity and determinism ------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_evidence_hashes_exist_and_output_is_stable(seed):
    spec = {"seed": seed, "n_background_accounts": 80, "n_days": 20, "daily_tx_rate": 0.6,
            "plants": [{"kind": "HunterCluster", "size": 3}, {"kind": "S2Linkage"},
                       {"kind": "WashCohort", "count": 10, "day_range": [3, 4]}]}

    def run():
        ds, _ = generate(spec)
        hunters = detect_bonus_hunters(ds)
        wash = detect_wash_trading(ds).findings
        links = infer_cross_layer_links(ds, hunters=hunters)
        return ds, hunters, wash, links

    ds, hunters, wash, links = run()
    ok = {t.tx_hash for t in ds.transactions if t.ok}
    cited = {h for f in hunters for h in f.evidence_tx_hashes}
    cited |= {h for f in wash for h in f.evidence_tx_hashes}
    cited |= {h for link in links for h in link.tx_hashes()}
    assert cited and cited <= ok
    assert all(link.evidence for link in links)
    dump = lambda xs: "\n".join(json.dumps(x.to_dict()) for x in xs)
    _, h2, w2, l2 = run()
    assert (dump(hunters), dump(wash), dump(links)) == (dump(h2), dump(w2), dump(l2))
