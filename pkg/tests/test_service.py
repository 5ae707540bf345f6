"""HTTP surface: every endpoint against direct library calls, plus error mapping."""

import json
from fractions import Fraction
from pathlib import Path

import pytest
from conftest import D01, D10, one_range_pool, swap_block
from fastapi.testclient import TestClient

from dextca import __version__
from dextca.amm import EXACT_IN, TradeIntent, execute_trade, liquidity_depth
from dextca.amm import quote as amm_quote
from dextca.dataset import load_dataset
from dextca.pipeline import replay_to
from dextca.serde import block_from_dict, block_to_dict, enc, pool_to_dict, trade_to_dict
from dextca.service.app import create_app
from dextca.slippage import decompose

FIXTURE = str(Path(__file__).parent / "data" / "fixture")


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def _pool_doc(fee_bps=30, liquidity=5000):
    return pool_to_dict(one_range_pool(fee_bps=fee_bps, liquidity=liquidity))


def _trade_doc(direction=D01, amount="10"):
    return trade_to_dict(TradeIntent(direction, EXACT_IN, Fraction(amount)))


def test_health(client):
    doc = client.get("/health").json()
    assert doc == {"status": "ok", "version": __version__}


def test_pool_quote_matches_library(client):
    pool = one_range_pool(fee_bps=30, liquidity=5000)
    trade = TradeIntent(D01, EXACT_IN, Fraction(10))
    r = client.post(
        "/pool/quote",
        json={"pool": _pool_doc(), "trade": _trade_doc(), "quote_block": 41},
    )
    assert r.status_code == 200, r.text
    direct = amm_quote(pool, trade, 41)
    doc = r.json()
    assert doc["quoted_price"] == enc(direct.quoted_price)
    assert doc["mid_price"] == enc(direct.mid_price)
    assert doc["lp_fee_bps"] == enc(direct.lp_fee_bps)
    assert doc["quote_block"] == 41


def test_pool_swap_matches_library(client):
    pool = one_range_pool(fee_bps=30, liquidity=5000)
    trade = TradeIntent(D10, EXACT_IN, Fraction(25))
    r = client.post(
        "/pool/swap", json={"pool": _pool_doc(), "trade": _trade_doc(D10, "25")}
    )
    assert r.status_code == 200, r.text
    fill, after = execute_trade(pool, trade)
    doc = r.json()
    assert doc["amount_in"] == enc(fill.amount_in)
    assert doc["amount_out"] == enc(fill.amount_out)
    assert doc["fee_paid"] == enc(fill.fee_paid)
    assert doc["saturated"] is False
    assert doc["pool"]["sqrt_price"] == enc(after.sqrt_price)


def test_pool_swap_rejects_bad_amount(client):
    bad_trade = {"direction": "token0_to_token1", "kind": "exact_in", "amount": "-5"}
    r = client.post("/pool/swap", json={"pool": _pool_doc(), "trade": bad_trade})
    assert r.status_code == 422
    doc = r.json()
    assert doc["error"] == "DomainError"
    assert "detail" in doc


def test_pool_depth_matches_library(client):
    pool = one_range_pool(fee_bps=30, liquidity=5000)
    r = client.post(
        "/pool/depth",
        json={"pool": _pool_doc(), "direction": "token0_to_token1", "range_bps": "250"},
    )
    assert r.status_code == 200, r.text
    direct = liquidity_depth(pool, D01, Fraction(250))
    assert r.json() == {"amount": enc(direct.amount), "saturated": direct.saturated}


def test_blocks_decompose_matches_library(client):
    pool = one_range_pool(fee_bps=0, liquidity=1000)
    block = swap_block(pool, [(D01, 10, False), (D01, 10)])
    target = block.txs[1]
    r = client.post(
        "/blocks/decompose",
        json={
            "block": block_to_dict(block),
            "tx_hash": target.tx_hash,
            "log_index": target.log_index,
        },
    )
    assert r.status_code == 200, r.text
    # the server sees the wire-quantized block, so compare against that
    wire_block = block_from_dict(block_to_dict(block))
    direct = decompose(wire_block, wire_block.txs[1])
    doc = r.json()
    assert doc["total_bps"] == enc(direct.total_bps)
    assert doc["reordering_bps"] == enc(direct.reordering_bps)
    assert doc["collision_bps"] == enc(direct.collision_bps)
    assert doc["mode"] == "exact"
    assert doc["labels"] == [True]


def test_blocks_decompose_unknown_swap(client):
    pool = one_range_pool(fee_bps=0, liquidity=1000)
    block = swap_block(pool, [(D01, 10)])
    r = client.post(
        "/blocks/decompose",
        json={"block": block_to_dict(block), "tx_hash": "0xmissing", "log_index": 0},
    )
    assert r.status_code == 422
    assert r.json()["error"] == "ValidationFailure"


def test_extra_fields_are_rejected(client):
    r = client.post(
        "/pool/quote",
        json={"pool": _pool_doc(), "trade": _trade_doc(), "surprise": 1},
    )
    assert r.status_code == 422
    assert isinstance(r.json()["detail"], list)


def test_sandwich_scenario_writes_a_clean_dataset(client, tmp_path):
    out = str(tmp_path / "sandwich")
    r = client.post(
        "/adversary/sandwich",
        json={
            "pool": pool_to_dict(one_range_pool(fee_bps=0, liquidity=1000)),
            "victim_trade": _trade_doc(D01, "10"),
            "victim_tolerance_bps": "200",
            "out_dir": out,
        },
    )
    assert r.status_code == 200, r.text
    doc = r.json()
    assert doc["kind"] == "sandwich"
    assert doc["dataset_dir"] == out
    txs = doc["block"]["txs"]
    assert [tx["is_public"] for tx in txs] == [False, True, False]
    assert set(doc["ground_truth"]) >= {"attacker_pnl", "frontrun_size", "q_max"}
    # ground truth values are wire-encoded decimals
    assert Fraction(doc["ground_truth"]["attacker_pnl"]) > 0

    v = client.post("/dataset/validate", json={"path": out})
    assert v.status_code == 200 and v.json() == {"findings": []}


def test_collision_scenario_is_deterministic(client):
    payload = {
        "pool": pool_to_dict(one_range_pool(fee_bps=30, liquidity=100_000)),
        "n_trades": 4,
        "direction_bias": "0.5",
        "size_lo": "5",
        "size_hi": "25",
        "seed": 3,
    }
    first = client.post("/adversary/collision", json=payload)
    second = client.post("/adversary/collision", json=payload)
    assert first.status_code == 200, first.text
    assert first.json() == second.json()
    assert len(first.json()["block"]["txs"]) == 4


def test_backrun_and_jit_scenarios(client):
    pool_doc = pool_to_dict(one_range_pool(fee_bps=0, liquidity=1000))
    r = client.post(
        "/adversary/backrun",
        json={
            "pool": pool_doc,
            "victim_trade": _trade_doc(D01, "10"),
            "external_mid": "1",
        },
    )
    assert r.status_code == 200, r.text
    assert r.json()["kind"] == "backrun"
    assert len(r.json()["block"]["txs"]) == 2

    r = client.post(
        "/adversary/jit",
        json={
            "pool": pool_doc,
            "victim_trade": _trade_doc(D01, "10"),
            "victim_tolerance_bps": "500",
            "liquidity_factor": "3",
        },
    )
    assert r.status_code == 200, r.text
    doc = r.json()
    assert doc["kind"] == "jit"
    kinds = [tx["type"] for tx in doc["block"]["txs"]]
    assert kinds == ["liquidity", "swap", "liquidity"]


def test_dataset_ingest_reports_shape(client):
    r = client.post("/dataset/ingest", json={"path": FIXTURE})
    assert r.status_code == 200, r.text
    assert r.json() == {
        "pair": "WETH/USDC",
        "stable_side": 1,
        "n_blocks": 7,
        "n_swaps": 31,
        "height_range": [101, 107],
        "findings": [],
    }


def test_dataset_ingest_missing_path(client, tmp_path):
    r = client.post("/dataset/ingest", json={"path": str(tmp_path / "nope")})
    assert r.status_code == 422
    assert r.json()["error"] == "SchemaError"


def test_dataset_decompose_matches_library(client):
    dataset = load_dataset(FIXTURE)
    block = dataset.block_at(101)
    victim = block.txs[1]
    r = client.post(
        "/dataset/decompose",
        json={"path": FIXTURE, "tx_hash": victim.tx_hash, "log_index": victim.log_index},
    )
    assert r.status_code == 200, r.text
    direct = decompose(block, victim)
    doc = r.json()
    assert doc["adversarial_bps"] == enc(direct.adversarial_bps)
    assert doc["total_bps"] == enc(direct.total_bps)
    assert doc["labels"] == list(direct.labels)

    missing = client.post(
        "/dataset/decompose", json={"path": FIXTURE, "tx_hash": "0xnone", "log_index": 9}
    )
    assert missing.status_code == 422
    assert "no swap" in missing.json()["detail"]


def test_replay_matches_library(client):
    r = client.post("/replay", json={"path": FIXTURE, "height": 106})
    assert r.status_code == 200, r.text
    initial, final = replay_to(load_dataset(FIXTURE), 106)
    doc = r.json()
    assert doc["initial_pool"]["sqrt_price"] == enc(initial.sqrt_price)
    assert doc["final_pool"]["sqrt_price"] == enc(final.sqrt_price)


def test_pipeline_run_endpoint(client, tmp_path):
    out = str(tmp_path / "run")
    r = client.post(
        "/pipeline/run",
        json={"path": FIXTURE, "out_dir": out, "format": "both"},
    )
    assert r.status_code == 200, r.text
    doc = r.json()
    assert doc["counts"]["n_decomposed"] == 29
    report = json.loads((Path(out) / "run_report.json").read_text())
    assert report["checksums"] == doc["checksums"]

    override = client.post(
        "/pipeline/run",
        json={
            "path": FIXTURE,
            "out_dir": str(tmp_path / "run2"),
            "config": {"workers": 2},
            "format": "both",
        },
    )
    assert override.status_code == 200, override.text
    assert override.json()["checksums"] == doc["checksums"]

    bad = client.post(
        "/pipeline/run",
        json={"path": FIXTURE, "out_dir": out, "config": {"bucket_thresholds": ["10"]}},
    )
    assert bad.status_code == 422
    assert bad.json()["error"] == "SchemaError"


def test_regress_endpoint(client):
    r = client.post("/regress", json={"path": FIXTURE, "outcome": "total"})
    assert r.status_code == 200, r.text
    doc = r.json()
    assert doc["model"] == "ols"
    assert doc["n"] == 25 and doc["dropped"] == 4
    names = [row["name"] for row in doc["coefficients"]]
    assert "order_size" in names and "gas_price" in names
    assert doc["fe_mode"] == "dummy" and doc["n_groups"] == 2
    assert "order_size" in doc["summary_text"]

    bad_fe = client.post(
        "/regress", json={"path": FIXTURE, "config": {"fixed_effects": "daily"}}
    )
    assert bad_fe.status_code == 422
    assert bad_fe.json()["error"] == "DomainError"

    separated = client.post("/regress", json={"path": FIXTURE, "model": "logit"})
    assert separated.status_code == 422
    assert separated.json()["error"] == "SeparationError"

    bad_model = client.post("/regress", json={"path": FIXTURE, "model": "probit"})
    assert bad_model.status_code == 422
    assert isinstance(bad_model.json()["detail"], list)
