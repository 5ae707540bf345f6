"""On-disk dataset format: one directory of CSV files plus a JSON manifest.

Files and their columns:

- swaps.csv: tx_hash, log_index, block, intra_block_index, direction, kind,
  amount, limit_amount, slippage_tolerance_bps, deadline, sign_time, gas_used,
  gas_price_wei, status, amount_in, amount_out (fill columns empty unless
  status is succeeded)
- quotes.csv: tx_hash, log_index, quote_block, quoted_price, mid_price,
  price_impact_bps, lp_fee_bps
- liquidity_events.csv: block, intra_block_index, kind, lower_tick,
  upper_tick, liquidity, is_public
- mempool.csv: tx_hash, log_index, first_seen (presence of a row is what
  makes a swap public)
- builders.csv: block, timestamp, builder (one row per block)
- eth_usd.csv: block, price
- pool_prices.csv: minute_ts, price
- manifest.json: schema_version, pair, stable_side, pool (fee_bps,
  tick_spacing, initial_sqrt_price, initial_positions), height_range,
  row_counts, files

Quantities are fixed-point decimal strings (18 fractional digits).  The
loader joins quotes and mempool rows onto swaps, groups transactions into
blocks by contiguous intra-block index, and folds pool state forward so each
block carries its own top-of-block snapshot.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .amm import (
    BURN,
    EXACT_IN,
    EXACT_OUT,
    MINT,
    PoolState,
    Position,
    Quote,
    TradeIntent,
    apply_liquidity_event,
    new_pool,
    swap_exact_in,
)
from .chain import (
    STATUSES,
    SUCCEEDED,
    BlockRecord,
    LiquidityEvent,
    SwapTx,
    TradeRecord,
)
from .errors import JoinError, SchemaError
from .numerics import parse_fixed
from .serde import direction_from_wire, direction_to_wire, dumps, enc

SCHEMA_VERSION = 1

FILES = {
    "swaps": "swaps.csv",
    "quotes": "quotes.csv",
    "liquidity_events": "liquidity_events.csv",
    "mempool": "mempool.csv",
    "builders": "builders.csv",
    "eth_usd": "eth_usd.csv",
    "pool_prices": "pool_prices.csv",
    "manifest": "manifest.json",
}

SWAP_COLUMNS = (
    "tx_hash",
    "log_index",
    "block",
    "intra_block_index",
    "direction",
    "kind",
    "amount",
    "limit_amount",
    "slippage_tolerance_bps",
    "deadline",
    "sign_time",
    "gas_used",
    "gas_price_wei",
    "status",
    "amount_in",
    "amount_out",
)

QUOTE_COLUMNS = (
    "tx_hash",
    "log_index",
    "quote_block",
    "quoted_price",
    "mid_price",
    "price_impact_bps",
    "lp_fee_bps",
)

LIQUIDITY_COLUMNS = (
    "block",
    "intra_block_index",
    "kind",
    "lower_tick",
    "upper_tick",
    "liquidity",
    "is_public",
)

MEMPOOL_COLUMNS = ("tx_hash", "log_index", "first_seen")
BUILDER_COLUMNS = ("block", "timestamp", "builder")
ETH_USD_COLUMNS = ("block", "price")
POOL_PRICE_COLUMNS = ("minute_ts", "price")


@dataclass(frozen=True)
class Dataset:
    """A loaded dataset: manifest metadata plus fully joined blocks."""

    pair: str
    stable_side: int
    initial_pool: PoolState
    blocks: tuple[BlockRecord, ...]
    eth_usd: Mapping[int, Fraction]
    minute_prices: tuple[tuple[int, Fraction], ...]

    def block_at(self, height: int) -> BlockRecord:
        for block in self.blocks:
            if block.height == height:
                return block
        raise JoinError(f"no block at height {height}")


def _fail(path: Path, row: int, message: str) -> SchemaError:
    return SchemaError(f"{path.name}:{row}: {message}")


def _read_rows(path: Path, columns: tuple[str, ...]) -> list[tuple[int, dict[str, str]]]:
    if not path.exists():
        raise SchemaError(f"missing dataset file {path.name}")
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        header = tuple(reader.fieldnames or ())
        if header != columns:
            raise SchemaError(
                f"{path.name}: expected columns {','.join(columns)}, got {','.join(header)}"
            )
        out = []
        for number, row in enumerate(reader, start=2):
            if None in row or any(v is None for v in row.values()):
                raise _fail(path, number, "wrong number of fields")
            out.append((number, row))
        return out


def _parse_int(path: Path, row: int, field: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise _fail(path, row, f"{field} must be an integer, got {text!r}") from None


def _parse_amount(path: Path, row: int, field: str, text: str) -> Fraction:
    try:
        return parse_fixed(text)
    except Exception:
        raise _fail(path, row, f"{field} must be a decimal amount, got {text!r}") from None


def _parse_bool(path: Path, row: int, field: str, text: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise _fail(path, row, f"{field} must be true or false, got {text!r}")


def load_manifest(root: Path) -> dict:
    path = root / FILES["manifest"]
    if not path.exists():
        raise SchemaError(f"missing dataset file {path.name}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise SchemaError(f"{path.name}: invalid JSON ({err})") from None
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(
            f"{path.name}: unsupported schema_version {manifest.get('schema_version')!r}"
        )
    for key in ("pair", "stable_side", "pool"):
        if key not in manifest:
            raise SchemaError(f"{path.name}: missing key {key!r}")
    return manifest


def _pool_from_manifest(manifest: dict) -> PoolState:
    spec = manifest["pool"]
    try:
        positions = tuple(
            Position(int(p["lower_tick"]), int(p["upper_tick"]), parse_fixed(p["liquidity"]))
            for p in spec.get("initial_positions", ())
        )
        return new_pool(
            fee_bps=Fraction(spec["fee_bps"]),
            tick_spacing=int(spec["tick_spacing"]),
            sqrt_price=parse_fixed(spec["initial_sqrt_price"]),
            positions=positions,
        )
    except (KeyError, TypeError) as err:
        raise SchemaError(f"manifest.json: malformed pool spec ({err})") from None


def load_dataset(root: str | Path) -> Dataset:
    """Read and join a dataset directory; raises SchemaError or JoinError."""
    root = Path(root)
    manifest = load_manifest(root)
    initial_pool = _pool_from_manifest(manifest)
    stable_side = int(manifest["stable_side"])
    if stable_side not in (0, 1):
        raise SchemaError("manifest.json: stable_side must be 0 or 1")

    quotes_path = root / FILES["quotes"]
    quotes: dict[tuple[str, int], Quote] = {}
    for number, row in _read_rows(quotes_path, QUOTE_COLUMNS):
        key = (row["tx_hash"], _parse_int(quotes_path, number, "log_index", row["log_index"]))
        if key in quotes:
            raise JoinError(f"{quotes_path.name}:{number}: duplicate quote for {key}")
        quotes[key] = Quote(
            quoted_price=_parse_amount(quotes_path, number, "quoted_price", row["quoted_price"]),
            mid_price=_parse_amount(quotes_path, number, "mid_price", row["mid_price"]),
            price_impact_bps=_parse_amount(
                quotes_path, number, "price_impact_bps", row["price_impact_bps"]
            ),
            lp_fee_bps=_parse_amount(quotes_path, number, "lp_fee_bps", row["lp_fee_bps"]),
            quote_block=_parse_int(quotes_path, number, "quote_block", row["quote_block"]),
        )

    mempool_path = root / FILES["mempool"]
    mempool: dict[tuple[str, int], int] = {}
    for number, row in _read_rows(mempool_path, MEMPOOL_COLUMNS):
        key = (row["tx_hash"], _parse_int(mempool_path, number, "log_index", row["log_index"]))
        if key in mempool:
            raise JoinError(f"{mempool_path.name}:{number}: duplicate mempool row for {key}")
        mempool[key] = _parse_int(mempool_path, number, "first_seen", row["first_seen"])

    builders_path = root / FILES["builders"]
    builders: dict[int, tuple[int, str]] = {}
    for number, row in _read_rows(builders_path, BUILDER_COLUMNS):
        height = _parse_int(builders_path, number, "block", row["block"])
        if height in builders:
            raise JoinError(f"{builders_path.name}:{number}: duplicate block {height}")
        builders[height] = (
            _parse_int(builders_path, number, "timestamp", row["timestamp"]),
            row["builder"],
        )

    eth_path = root / FILES["eth_usd"]
    eth_usd: dict[int, Fraction] = {}
    for number, row in _read_rows(eth_path, ETH_USD_COLUMNS):
        height = _parse_int(eth_path, number, "block", row["block"])
        if height in eth_usd:
            raise JoinError(f"{eth_path.name}:{number}: duplicate block {height}")
        eth_usd[height] = _parse_amount(eth_path, number, "price", row["price"])

    prices_path = root / FILES["pool_prices"]
    minute_prices: list[tuple[int, Fraction]] = []
    for number, row in _read_rows(prices_path, POOL_PRICE_COLUMNS):
        ts = _parse_int(prices_path, number, "minute_ts", row["minute_ts"])
        price = _parse_amount(prices_path, number, "price", row["price"])
        if minute_prices and ts <= minute_prices[-1][0]:
            raise _fail(prices_path, number, "minute_ts must be strictly increasing")
        minute_prices.append((ts, price))

    swaps_path = root / FILES["swaps"]
    by_block: dict[int, dict[int, object]] = {}
    seen_swaps: set[tuple[str, int]] = set()
    for number, row in _read_rows(swaps_path, SWAP_COLUMNS):
        key = (row["tx_hash"], _parse_int(swaps_path, number, "log_index", row["log_index"]))
        if key in seen_swaps:
            raise JoinError(f"{swaps_path.name}:{number}: duplicate swap {key}")
        seen_swaps.add(key)
        height = _parse_int(swaps_path, number, "block", row["block"])
        index = _parse_int(swaps_path, number, "intra_block_index", row["intra_block_index"])
        status = row["status"]
        if status not in STATUSES:
            raise _fail(swaps_path, number, f"unknown status {status!r}")
        if row["kind"] not in (EXACT_IN, EXACT_OUT):
            raise _fail(swaps_path, number, f"unknown kind {row['kind']!r}")
        if (row["amount_in"] == "") != (row["amount_out"] == ""):
            raise _fail(swaps_path, number, "amount_in and amount_out must be set together")
        if (status == SUCCEEDED) != (row["amount_in"] != ""):
            raise _fail(
                swaps_path, number, "fill columns must be set exactly for succeeded swaps"
            )
        try:
            direction = direction_from_wire(row["direction"])
        except Exception:
            raise _fail(swaps_path, number, f"unknown direction {row['direction']!r}") from None
        trade = TradeIntent(
            direction, row["kind"], _parse_amount(swaps_path, number, "amount", row["amount"])
        )
        record = None
        if status == SUCCEEDED:
            record = TradeRecord(
                tx_hash=key[0],
                log_index=key[1],
                direction=direction,
                amount_in=_parse_amount(swaps_path, number, "amount_in", row["amount_in"]),
                amount_out=_parse_amount(swaps_path, number, "amount_out", row["amount_out"]),
                block=height,
                intra_block_index=index,
            )
        swap = SwapTx(
            tx_hash=key[0],
            log_index=key[1],
            trade=trade,
            limit_amount=_parse_amount(swaps_path, number, "limit_amount", row["limit_amount"]),
            slippage_tolerance_bps=_parse_amount(
                swaps_path, number, "slippage_tolerance_bps", row["slippage_tolerance_bps"]
            ),
            deadline=_parse_int(swaps_path, number, "deadline", row["deadline"]),
            quote=quotes.pop((key[0], key[1]), None),
            sign_time=(
                None
                if row["sign_time"] == ""
                else _parse_int(swaps_path, number, "sign_time", row["sign_time"])
            ),
            mempool_first_seen=mempool.get(key),
            is_public=key in mempool,
            gas_used=_parse_int(swaps_path, number, "gas_used", row["gas_used"]),
            gas_price_wei=_parse_int(swaps_path, number, "gas_price_wei", row["gas_price_wei"]),
            status=status,
            record=record,
        )
        slots = by_block.setdefault(height, {})
        if index in slots:
            raise _fail(swaps_path, number, f"duplicate intra_block_index {index} in block {height}")
        slots[index] = swap

    if quotes:
        leftover = sorted(quotes)[0]
        raise JoinError(f"quotes.csv: quote for unknown swap {leftover}")

    liq_path = root / FILES["liquidity_events"]
    for number, row in _read_rows(liq_path, LIQUIDITY_COLUMNS):
        height = _parse_int(liq_path, number, "block", row["block"])
        index = _parse_int(liq_path, number, "intra_block_index", row["intra_block_index"])
        if row["kind"] not in (MINT, BURN):
            raise _fail(liq_path, number, f"unknown kind {row['kind']!r}")
        event = LiquidityEvent(
            kind=row["kind"],
            lower_tick=_parse_int(liq_path, number, "lower_tick", row["lower_tick"]),
            upper_tick=_parse_int(liq_path, number, "upper_tick", row["upper_tick"]),
            liquidity=_parse_amount(liq_path, number, "liquidity", row["liquidity"]),
            block=height,
            intra_block_index=index,
            is_public=_parse_bool(liq_path, number, "is_public", row["is_public"]),
        )
        slots = by_block.setdefault(height, {})
        if index in slots:
            raise _fail(liq_path, number, f"duplicate intra_block_index {index} in block {height}")
        slots[index] = event

    blocks: list[BlockRecord] = []
    state = initial_pool
    for height in sorted(by_block):
        if height not in builders:
            raise JoinError(f"builders.csv: no row for block {height}")
        timestamp, builder = builders[height]
        slots = by_block[height]
        if sorted(slots) != list(range(len(slots))):
            raise SchemaError(
                f"block {height}: intra_block_index values must be contiguous from 0"
            )
        txs = tuple(slots[i] for i in range(len(slots)))
        block = BlockRecord(
            height=height, timestamp=timestamp, builder=builder, txs=txs, initial_pool=state
        )
        blocks.append(block)
        state = _advance(state, txs)
    return Dataset(
        pair=str(manifest["pair"]),
        stable_side=stable_side,
        initial_pool=initial_pool,
        blocks=tuple(blocks),
        eth_usd=eth_usd,
        minute_prices=tuple(minute_prices),
    )


def _advance(state: PoolState, txs: Sequence[object]) -> PoolState:
    """Fold one block's transactions into the running pool state."""
    for tx in txs:
        if isinstance(tx, SwapTx):
            if tx.status == SUCCEEDED:
                _, state = swap_exact_in(state, tx.record.direction, tx.record.amount_in)
        elif isinstance(tx, LiquidityEvent):
            state = apply_liquidity_event(
                state, tx.kind, tx.lower_tick, tx.upper_tick, tx.liquidity
            )
    return state


def validate_dataset(dataset: Dataset) -> list[str]:
    """Cross-field consistency findings; an empty list means clean."""
    findings: list[str] = []
    for block in dataset.blocks:
        if block.height not in dataset.eth_usd:
            findings.append(f"block {block.height}: no eth_usd price")
        state = block.initial_pool
        for tx in block.txs:
            if isinstance(tx, LiquidityEvent):
                state = apply_liquidity_event(
                    state, tx.kind, tx.lower_tick, tx.upper_tick, tx.liquidity, clamp=True
                )
                continue
            label = f"swap {tx.tx_hash[:10]}:{tx.log_index}"
            if tx.quote is not None and tx.quote.quote_block is not None:
                if tx.quote.quote_block >= block.height:
                    findings.append(f"{label}: quoted at block {tx.quote.quote_block}, "
                                    f"included at {block.height}")
            if tx.mempool_first_seen is not None and tx.mempool_first_seen > block.timestamp:
                findings.append(f"{label}: mempool first_seen after block timestamp")
            if tx.sign_time is not None and tx.sign_time > block.timestamp:
                findings.append(f"{label}: signed after block timestamp")
            if tx.status == SUCCEEDED:
                if tx.deadline < block.timestamp:
                    findings.append(f"{label}: succeeded past its deadline")
                fill, state = swap_exact_in(state, tx.record.direction, tx.record.amount_in)
                if tx.record.amount_out > 0:
                    drift = abs(fill.amount_out - tx.record.amount_out) / tx.record.amount_out
                    if drift > Fraction(1, 10**12):
                        findings.append(
                            f"{label}: recorded fill drifts from replay by {float(drift):.3e}"
                        )
                if tx.trade.kind == EXACT_IN and tx.limit_amount > 0:
                    if tx.record.amount_out < tx.limit_amount:
                        findings.append(f"{label}: succeeded below its minimum output")
                if tx.trade.kind == EXACT_OUT and tx.record.amount_in > tx.limit_amount > 0:
                    findings.append(f"{label}: succeeded above its maximum input")
    return findings


def _swap_row(swap: SwapTx, height: int, index: int) -> list[str]:
    return [
        swap.tx_hash,
        str(swap.log_index),
        str(height),
        str(index),
        direction_to_wire(swap.trade.direction),
        swap.trade.kind,
        enc(swap.trade.amount),
        enc(swap.limit_amount),
        enc(swap.slippage_tolerance_bps),
        str(swap.deadline),
        "" if swap.sign_time is None else str(swap.sign_time),
        str(swap.gas_used),
        str(swap.gas_price_wei),
        swap.status,
        "" if swap.record is None else enc(swap.record.amount_in),
        "" if swap.record is None else enc(swap.record.amount_out),
    ]


def write_dataset(dataset: Dataset, out_dir: str | Path) -> dict[str, int]:
    """Write a dataset directory; returns row counts per file."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)

    def open_csv(name: str, columns: tuple[str, ...]):
        handle = (root / FILES[name]).open("w", newline="")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        return handle, writer

    counts = {name: 0 for name in FILES if name != "manifest"}

    sh, swaps_w = open_csv("swaps", SWAP_COLUMNS)
    qh, quotes_w = open_csv("quotes", QUOTE_COLUMNS)
    lh, liq_w = open_csv("liquidity_events", LIQUIDITY_COLUMNS)
    mh, mempool_w = open_csv("mempool", MEMPOOL_COLUMNS)
    bh, builders_w = open_csv("builders", BUILDER_COLUMNS)
    eh, eth_w = open_csv("eth_usd", ETH_USD_COLUMNS)
    ph, prices_w = open_csv("pool_prices", POOL_PRICE_COLUMNS)
    try:
        for block in dataset.blocks:
            builders_w.writerow([str(block.height), str(block.timestamp), block.builder])
            counts["builders"] += 1
            for index, tx in enumerate(block.txs):
                if isinstance(tx, SwapTx):
                    swaps_w.writerow(_swap_row(tx, block.height, index))
                    counts["swaps"] += 1
                    if tx.quote is not None:
                        q = tx.quote
                        quotes_w.writerow(
                            [
                                tx.tx_hash,
                                str(tx.log_index),
                                str(q.quote_block if q.quote_block is not None else block.height - 1),
                                enc(q.quoted_price),
                                enc(q.mid_price),
                                enc(q.price_impact_bps),
                                enc(q.lp_fee_bps),
                            ]
                        )
                        counts["quotes"] += 1
                    if tx.is_public:
                        first_seen = (
                            tx.mempool_first_seen
                            if tx.mempool_first_seen is not None
                            else block.timestamp
                        )
                        mempool_w.writerow([tx.tx_hash, str(tx.log_index), str(first_seen)])
                        counts["mempool"] += 1
                else:
                    liq_w.writerow(
                        [
                            str(block.height),
                            str(index),
                            tx.kind,
                            str(tx.lower_tick),
                            str(tx.upper_tick),
                            enc(tx.liquidity),
                            "true" if tx.is_public else "false",
                        ]
                    )
                    counts["liquidity_events"] += 1
        for height in sorted(dataset.eth_usd):
            eth_w.writerow([str(height), enc(dataset.eth_usd[height])])
            counts["eth_usd"] += 1
        for ts, price in dataset.minute_prices:
            prices_w.writerow([str(ts), enc(price)])
            counts["pool_prices"] += 1
    finally:
        for handle in (sh, qh, lh, mh, bh, eh, ph):
            handle.close()

    pool = dataset.initial_pool
    heights = [b.height for b in dataset.blocks]
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "pair": dataset.pair,
        "stable_side": dataset.stable_side,
        "pool": {
            "fee_bps": str(pool.fee_bps) if pool.fee_bps.denominator != 1 else int(pool.fee_bps),
            "tick_spacing": pool.tick_spacing,
            "initial_sqrt_price": enc(pool.sqrt_price),
            "initial_positions": [
                {
                    "lower_tick": lower,
                    "upper_tick": upper,
                    "liquidity": enc(liq),
                }
                for (lower, upper), liq in sorted(pool.positions.items())
            ],
        },
        "height_range": [min(heights), max(heights)] if heights else None,
        "row_counts": counts,
        "files": {name: filename for name, filename in FILES.items() if name != "manifest"},
    }
    (root / FILES["manifest"]).write_text(dumps(manifest))
    return counts


def dataset_from_blocks(
    blocks: Sequence[BlockRecord],
    *,
    pair: str,
    stable_side: int = 1,
    eth_usd: Mapping[int, Fraction] | None = None,
    minute_prices: Iterable[tuple[int, Fraction]] = (),
    default_eth_usd: Fraction = Fraction(1800),
) -> Dataset:
    """Bundle in-memory blocks (e.g. generated scenarios) into a Dataset."""
    if not blocks:
        raise SchemaError("need at least one block")
    ordered = tuple(sorted(blocks, key=lambda b: b.height))
    prices = dict(eth_usd or {})
    for block in ordered:
        prices.setdefault(block.height, default_eth_usd)
    return Dataset(
        pair=pair,
        stable_side=stable_side,
        initial_pool=ordered[0].initial_pool,
        blocks=ordered,
        eth_usd=prices,
        minute_prices=tuple(minute_prices),
    )
