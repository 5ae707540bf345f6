"""The committed reference dataset stays in sync with the generators."""

import importlib.util
from pathlib import Path

from dextca.chain import FAILED_OTHER, FAILED_TOLERANCE, SUCCEEDED, SwapTx
from dextca.dataset import FILES, load_dataset, validate_dataset

DATA = Path(__file__).parent / "data"
FIXTURE = DATA / "fixture"


def _make_fixture_module():
    spec = importlib.util.spec_from_file_location("make_fixture", DATA / "make_fixture.py")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def test_fixture_matches_regeneration(tmp_path):
    module = _make_fixture_module()
    fresh, _ = module.main(tmp_path / "fixture")
    for name in FILES.values():
        assert (fresh / name).read_bytes() == (FIXTURE / name).read_bytes(), name


def test_fixture_is_clean_and_covers_the_shapes():
    ds = load_dataset(FIXTURE)
    assert validate_dataset(ds) == []
    assert [b.height for b in ds.blocks] == list(range(101, 108))

    swaps = [tx for b in ds.blocks for tx in b.txs if isinstance(tx, SwapTx)]
    statuses = {tx.status for tx in swaps}
    assert statuses == {SUCCEEDED, FAILED_TOLERANCE, FAILED_OTHER}
    assert sum(tx.quote is None for tx in swaps) == 1
    assert sum(not tx.is_public for tx in swaps) == 4
    assert sum(tx.sign_time is None for tx in swaps) == 4
    assert sum(tx.trade.kind == "exact_out" for tx in swaps) == 1

    events = [tx for b in ds.blocks for tx in b.txs if not isinstance(tx, SwapTx)]
    assert len(events) == 2

    weeks = {b.timestamp // 604800 for b in ds.blocks}
    assert len(weeks) == 2
