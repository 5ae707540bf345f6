"""Shared builders: standard pools and hand-rolled blocks of recorded swaps."""

from __future__ import annotations

from fractions import Fraction

from dextca.amm import (
    EXACT_IN,
    Direction,
    Position,
    TradeIntent,
    new_pool,
    quote as pool_quote,
    swap_exact_in,
)
from dextca.chain import SUCCEEDED, BlockRecord, SwapTx, TradeRecord, limit_from_tolerance

D01 = Direction.TOKEN0_TO_TOKEN1
D10 = Direction.TOKEN1_TO_TOKEN0


def one_range_pool(fee_bps: int = 0, liquidity: int = 1000, spacing: int = 10) -> "PoolState":
    """Pool at price 1 with a single wide range, so small swaps never cross."""
    return new_pool(
        fee_bps, spacing, Fraction(1), [Position(-50_000, 50_000, Fraction(liquidity))]
    )


def multi_range_pool(fee_bps: int = 30) -> "PoolState":
    return new_pool(
        fee_bps,
        100,
        Fraction(1),
        [
            Position(-2000, 0, Fraction(800)),
            Position(0, 2000, Fraction(1200)),
            Position(-4000, 4000, Fraction(300)),
        ],
    )


def swap_block(pool, specs, *, height=1, timestamp=1_700_000_000, builder="builder-0"):
    """Block of succeeded exact-in swaps executed in order against `pool`.

    Each spec is (direction, amount) or (direction, amount, is_public); all
    swaps are quoted against the top-of-block state.
    """
    txs = []
    state = pool
    for slot, spec in enumerate(specs):
        direction, amount = spec[0], Fraction(spec[1])
        is_public = spec[2] if len(spec) > 2 else True
        trade = TradeIntent(direction, EXACT_IN, amount)
        q = pool_quote(pool, trade, height - 1)
        fill, state = swap_exact_in(state, direction, amount)
        tx_hash = "0x" + f"{height:08x}{slot:08x}".ljust(64, "e")
        tolerance = Fraction(10_000)  # loose enough that nothing reverts
        txs.append(
            SwapTx(
                tx_hash=tx_hash,
                log_index=0,
                trade=trade,
                limit_amount=limit_from_tolerance(trade, q, tolerance),
                slippage_tolerance_bps=tolerance,
                deadline=timestamp + 300,
                quote=q,
                sign_time=timestamp - 12 if is_public else None,
                mempool_first_seen=timestamp - 11 if is_public else None,
                is_public=is_public,
                gas_used=150_000,
                gas_price_wei=20 * 10**9,
                status=SUCCEEDED,
                record=TradeRecord(
                    tx_hash=tx_hash,
                    log_index=0,
                    direction=direction,
                    amount_in=fill.amount_in,
                    amount_out=fill.amount_out,
                    block=height,
                    intra_block_index=slot,
                ),
            )
        )
    return BlockRecord(height, timestamp, builder, tuple(txs), pool)
