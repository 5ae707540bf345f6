"""Canonical wire codecs for domain records.

All prices and token quantities travel as decimal strings with 18 fractional
digits (half-even), never binary floats, so decoding is exact and re-encoding
a decoded document is byte-identical.  JSON documents are emitted with sorted
keys and a trailing newline; CSVs use fixed column orders and LF line ends.
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Any, Mapping

from .amm import Direction, PoolState, Position, Quote, TradeIntent, new_pool
from .chain import BlockRecord, LiquidityEvent, SwapTx, TradeRecord
from .errors import SchemaError
from .numerics import format_fixed, parse_fixed

PLACES = 18


def enc(value: Fraction | int) -> str:
    return format_fixed(value, PLACES)


def enc_opt(value: Fraction | None) -> str | None:
    return None if value is None else enc(value)


def dec(text: str) -> Fraction:
    return parse_fixed(text)


def dec_opt(text: str | None) -> Fraction | None:
    return None if text is None else parse_fixed(text)


def dumps(document: Any) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(document, sort_keys=True, indent=2) + "\n"


def direction_to_wire(direction: Direction) -> str:
    return direction.value


def direction_from_wire(text: str) -> Direction:
    try:
        return Direction(text)
    except ValueError as exc:
        raise SchemaError(f"unknown direction {text!r}") from exc


def pool_to_dict(pool: PoolState) -> dict:
    return {
        "fee_bps": pool.fee_bps,
        "tick_spacing": pool.tick_spacing,
        "sqrt_price": enc(pool.sqrt_price),
        "positions": [
            {"lower_tick": lo, "upper_tick": hi, "liquidity": enc(liq)}
            for (lo, hi), liq in sorted(pool.positions.items())
        ],
    }


def pool_from_dict(doc: Mapping) -> PoolState:
    try:
        positions = [
            Position(int(p["lower_tick"]), int(p["upper_tick"]), dec(p["liquidity"]))
            for p in doc.get("positions", [])
        ]
        return new_pool(
            fee_bps=int(doc["fee_bps"]),
            tick_spacing=int(doc["tick_spacing"]),
            sqrt_price=dec(doc["sqrt_price"]),
            positions=positions,
        )
    except KeyError as exc:
        raise SchemaError(f"pool document missing field {exc}") from exc


def trade_to_dict(trade: TradeIntent) -> dict:
    return {
        "direction": direction_to_wire(trade.direction),
        "kind": trade.kind,
        "amount": enc(trade.amount),
    }


def trade_from_dict(doc: Mapping) -> TradeIntent:
    try:
        return TradeIntent(
            direction=direction_from_wire(doc["direction"]),
            kind=doc["kind"],
            amount=dec(doc["amount"]),
        )
    except KeyError as exc:
        raise SchemaError(f"trade document missing field {exc}") from exc


def quote_to_dict(q: Quote) -> dict:
    return {
        "quoted_price": enc(q.quoted_price),
        "mid_price": enc(q.mid_price),
        "price_impact_bps": enc(q.price_impact_bps),
        "lp_fee_bps": enc(q.lp_fee_bps),
        "quote_block": q.quote_block,
    }


def quote_from_dict(doc: Mapping) -> Quote:
    try:
        return Quote(
            quoted_price=dec(doc["quoted_price"]),
            mid_price=dec(doc["mid_price"]),
            price_impact_bps=dec(doc["price_impact_bps"]),
            lp_fee_bps=dec(doc["lp_fee_bps"]),
            quote_block=doc.get("quote_block"),
        )
    except KeyError as exc:
        raise SchemaError(f"quote document missing field {exc}") from exc


def swap_to_dict(swap: SwapTx) -> dict:
    doc = {
        "type": "swap",
        "tx_hash": swap.tx_hash,
        "log_index": swap.log_index,
        "trade": trade_to_dict(swap.trade),
        "limit_amount": enc(swap.limit_amount),
        "slippage_tolerance_bps": enc(swap.slippage_tolerance_bps),
        "deadline": swap.deadline,
        "quote": quote_to_dict(swap.quote) if swap.quote is not None else None,
        "sign_time": swap.sign_time,
        "mempool_first_seen": swap.mempool_first_seen,
        "is_public": swap.is_public,
        "gas_used": swap.gas_used,
        "gas_price_wei": swap.gas_price_wei,
        "status": swap.status,
        "amount_in": enc(swap.record.amount_in) if swap.record else None,
        "amount_out": enc(swap.record.amount_out) if swap.record else None,
    }
    return doc


def swap_from_dict(doc: Mapping, *, block: int, intra_block_index: int) -> SwapTx:
    try:
        trade = trade_from_dict(doc["trade"])
        record = None
        if doc.get("amount_in") is not None:
            record = TradeRecord(
                tx_hash=doc["tx_hash"],
                log_index=int(doc["log_index"]),
                direction=trade.direction,
                amount_in=dec(doc["amount_in"]),
                amount_out=dec(doc["amount_out"]),
                block=block,
                intra_block_index=intra_block_index,
            )
        return SwapTx(
            tx_hash=doc["tx_hash"],
            log_index=int(doc["log_index"]),
            trade=trade,
            limit_amount=dec(doc["limit_amount"]),
            slippage_tolerance_bps=dec(doc["slippage_tolerance_bps"]),
            deadline=doc.get("deadline"),
            quote=quote_from_dict(doc["quote"]) if doc.get("quote") else None,
            sign_time=doc.get("sign_time"),
            mempool_first_seen=doc.get("mempool_first_seen"),
            is_public=bool(doc["is_public"]),
            gas_used=int(doc["gas_used"]),
            gas_price_wei=int(doc["gas_price_wei"]),
            status=doc["status"],
            record=record,
        )
    except KeyError as exc:
        raise SchemaError(f"swap document missing field {exc}") from exc


def liquidity_event_to_dict(event: LiquidityEvent) -> dict:
    return {
        "type": "liquidity",
        "kind": event.kind,
        "lower_tick": event.lower_tick,
        "upper_tick": event.upper_tick,
        "liquidity": enc(event.liquidity),
        "is_public": event.is_public,
    }


def liquidity_event_from_dict(doc: Mapping, *, block: int, intra_block_index: int) -> LiquidityEvent:
    try:
        return LiquidityEvent(
            kind=doc["kind"],
            lower_tick=int(doc["lower_tick"]),
            upper_tick=int(doc["upper_tick"]),
            liquidity=dec(doc["liquidity"]),
            block=block,
            intra_block_index=intra_block_index,
            is_public=bool(doc.get("is_public", True)),
        )
    except KeyError as exc:
        raise SchemaError(f"liquidity document missing field {exc}") from exc


def block_to_dict(block: BlockRecord) -> dict:
    txs = []
    for tx in block.txs:
        if isinstance(tx, SwapTx):
            txs.append(swap_to_dict(tx))
        else:
            txs.append(liquidity_event_to_dict(tx))
    return {
        "height": block.height,
        "timestamp": block.timestamp,
        "builder": block.builder,
        "initial_pool": pool_to_dict(block.initial_pool),
        "txs": txs,
    }


def block_from_dict(doc: Mapping) -> BlockRecord:
    try:
        height = int(doc["height"])
        txs = []
        for index, tx_doc in enumerate(doc["txs"]):
            if tx_doc.get("type") == "swap":
                txs.append(swap_from_dict(tx_doc, block=height, intra_block_index=index))
            elif tx_doc.get("type") == "liquidity":
                txs.append(
                    liquidity_event_from_dict(tx_doc, block=height, intra_block_index=index)
                )
            else:
                raise SchemaError(f"unknown tx type {tx_doc.get('type')!r}")
        return BlockRecord(
            height=height,
            timestamp=int(doc["timestamp"]),
            builder=doc["builder"],
            txs=tuple(txs),
            initial_pool=pool_from_dict(doc["initial_pool"]),
        )
    except KeyError as exc:
        raise SchemaError(f"block document missing field {exc}") from exc
