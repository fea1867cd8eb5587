import hashlib

import pytest

from linklens.detect import detect_bonus_hunters, detect_wash_trading, infer_cross_layer_links
from linklens.errors import SpecError
from linklens.ingest import load_bundle
from linklens.synth import GroundTruth, SplitMix64, generate, load_spec, write_bundle


def test_splitmix_reference_vector():
    # first outputs for seed 1234567, as published with the reference C implementation
    rng = SplitMix64(1234567)
    assert [rng.next_u64() for _ in range(3)] == [
        6457827717110365317,
        3203168211198807973,
        9817491932198370423,
    ]


def test_splitmix_helpers_in_range():
    rng = SplitMix64(9)
    assert all(0 <= rng.below(7) < 7 for _ in range(500))
    assert all(0.0 <= rng.random() < 1.0 for _ in range(500))
    assert sorted(rng.sample(range(10), 10)) == list(range(10))
    mean = sum(rng.poisson(2.0) for _ in range(4000)) / 4000
    assert mean == pytest.approx(2.0, abs=0.1)


def _digest(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.iterdir())}


SPEC = {
    "seed": 77, "n_background_accounts": 40, "n_days": 12, "daily_tx_rate": 0.8,
    "plants": [
        {"id": "h", "kind": "HunterCluster", "size": 3},
        {"id": "w", "kind": "WashCohort", "count": 6, "day_range": [2, 3]},
        {"id": "s2", "kind": "S2Linkage"},
        {"id": "k", "kind": "KOLElite", "count": 2, "holder_target": 30},
    ],
}


def test_same_seed_same_bytes(tmp_path):
    for name in ("a", "b"):
        ds, truth = generate(SPEC)
        write_bundle(ds, truth, tmp_path / name)
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")


def test_different_seed_differs():
    a, _ = generate(SPEC)
    b, _ = generate({**SPEC, "seed": 78})
    assert a.transactions != b.transactions


def test_bundle_loads_without_errors(tmp_path):
    ds, truth = generate(SPEC)
    write_bundle(ds, truth, tmp_path)
    loaded = load_bundle(tmp_path)
    assert loaded.errors == [] and loaded.missing == []
    assert loaded.dataset.transactions == ds.transactions
    assert loaded.dataset.accounts == ds.accounts
    assert GroundTruth.from_dict(__import__("json").loads((tmp_path / "ground_truth.json").read_text())) == truth


def test_one_hunter_cluster_truth():
    ds, truth = generate({"seed": 5, "n_background_accounts": 20, "n_days": 5, "daily_tx_rate": 0.5,
                          "plants": [{"id": "only", "kind": "HunterCluster", "size": 3}]})
    assert list(truth.plants) == ["only"]
    ((main, subs),) = truth.plants["only"].hunters
    assert len(subs) == 3 and main not in subs


def test_one_record_per_plant():
    _, truth = generate(SPEC)
    assert sorted(truth.plants) == ["h", "k", "s2", "w"]
    assert len(truth.elites()) == 2
    assert len(truth.wash_accounts()) == 6


def test_plants_reference_generated_accounts():
    ds, truth = generate(SPEC)
    l2 = {a.address for a in ds.accounts}
    for plant in truth.plants.values():
        for addr in plant.accounts.values():
            assert addr in l2


def test_elites_get_exact_holder_counts():
    ds, truth = generate(SPEC)
    for e in truth.elites():
        assert ds.account(e).profile.holder_count == 30


def test_oversubscribed_plant_names_plant():
    with pytest.raises(SpecError) as exc:
        generate({**SPEC, "plants": [{"id": "too-big", "kind": "KOLElite", "count": 1, "holder_target": 41}]})
    assert exc.value.plant_id == "too-big"


@pytest.mark.parametrize(
    "plant",
    [
        {"id": "x", "kind": "Nope"},
        {"id": "x", "kind": "HunterCluster", "size": 1},
        {"id": "x", "kind": "HunterCluster", "sells_per_subsidiary": 2},
        {"id": "x", "kind": "WashCohort", "count": 2, "day_range": [5, 99]},
        {"id": "x", "kind": "HunterCluster", "colour": "red"},
    ],
)
def test_invalid_plants(plant):
    with pytest.raises(SpecError) as exc:
        generate({**SPEC, "plants": [plant]})
    assert exc.value.plant_id == "x"


def test_spec_level_errors():
    with pytest.raises(SpecError):
        load_spec({"seed": 1, "n_days": 3, "daily_tx_rate": 1})
    with pytest.raises(SpecError):
        load_spec({**SPEC, "price_range_wei": [10, 5]})
    with pytest.raises(SpecError):
        generate({**SPEC, "n_background_accounts": 0})


@pytest.mark.parametrize("seed", range(50))
def test_background_only_has_no_findings(seed):
    ds, truth = generate({"seed": seed, "n_background_accounts": 60, "n_days": 15, "daily_tx_rate": 1.0})
    assert truth.plants == {}
    hunters = detect_bonus_hunters(ds)
    assert hunters == []
    assert detect_wash_trading(ds).findings == []
    assert infer_cross_layer_links(ds, hunters=hunters) == []
