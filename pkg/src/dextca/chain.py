"""On-chain record types: swaps, trades, liquidity events, blocks.

A SwapTx is the signed request (intent, limit, quote, mempool metadata); a
TradeRecord is the realized fill of a succeeded swap.  BlockRecord holds the
ordered transaction list plus the pool snapshot at the top of the block, which
is what every replay starts from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from .amm import EXACT_IN, Direction, LiquidityDelta, PoolState, Quote, TradeIntent
from .errors import DomainError, MissingField

SUCCEEDED = "succeeded"
FAILED_TOLERANCE = "failed_tolerance"
FAILED_OTHER = "failed_other"
STATUSES = (SUCCEEDED, FAILED_TOLERANCE, FAILED_OTHER)


@dataclass(frozen=True)
class TradeRecord:
    """Realized fill of a succeeded swap, keyed by its parent transaction."""

    tx_hash: str
    log_index: int
    direction: Direction
    amount_in: Fraction
    amount_out: Fraction
    block: int
    intra_block_index: int

    @property
    def realized_price(self) -> Fraction:
        """Average execution price, input per output."""
        if self.amount_out <= 0:
            raise DomainError("trade has no output; price undefined")
        return self.amount_in / self.amount_out


@dataclass(frozen=True)
class LiquidityEvent:
    """A mint or burn observed in a block."""

    kind: str
    lower_tick: int
    upper_tick: int
    liquidity: Fraction
    block: int
    intra_block_index: int
    is_public: bool = True

    def as_delta(self) -> LiquidityDelta:
        return LiquidityDelta(
            kind=self.kind,
            lower_tick=self.lower_tick,
            upper_tick=self.upper_tick,
            liquidity=self.liquidity,
        )


@dataclass(frozen=True)
class SwapTx:
    """A swap transaction: the request plus its outcome.

    limit_amount is the minimum amount out for exact-in trades and the
    maximum amount in for exact-out trades.  record carries the realized fill
    and must be present exactly when status == succeeded.
    """

    tx_hash: str
    log_index: int
    trade: TradeIntent
    limit_amount: Fraction
    slippage_tolerance_bps: Fraction
    deadline: int | None
    quote: Quote | None
    sign_time: int | None
    mempool_first_seen: int | None
    is_public: bool
    gas_used: int
    gas_price_wei: int
    status: str
    record: TradeRecord | None = None

    def __post_init__(self):
        if self.status not in STATUSES:
            raise DomainError(f"unknown swap status {self.status!r}")
        if (self.status == SUCCEEDED) != (self.record is not None):
            raise DomainError("record must be present iff the swap succeeded")


@dataclass(frozen=True)
class BlockRecord:
    """Ordered transactions of one block plus the top-of-block pool snapshot."""

    height: int
    timestamp: int
    builder: str
    txs: tuple[Union[SwapTx, LiquidityEvent], ...]
    initial_pool: PoolState


def tolerance_from_limit(trade: TradeIntent, quote: Quote, limit_amount: Fraction) -> Fraction:
    """Slippage tolerance in bps implied by a limit and a quote.

    Exact-in: (quoted_out / min_out - 1) * 1e4; exact-out mirrors it as
    (max_in / quoted_in - 1) * 1e4 so the tolerance is nonnegative.
    """
    if limit_amount <= 0:
        raise DomainError("limit amount must be positive to imply a tolerance")
    if trade.kind == EXACT_IN:
        quoted_out = trade.amount / quote.quoted_price
        return (quoted_out / limit_amount - 1) * 10_000
    quoted_in = trade.amount * quote.quoted_price
    return (limit_amount / quoted_in - 1) * 10_000


def limit_from_tolerance(trade: TradeIntent, quote: Quote, tolerance_bps: Fraction) -> Fraction:
    """Limit amount implied by a tolerance, inverse of tolerance_from_limit."""
    if tolerance_bps < 0:
        raise DomainError("tolerance must be nonnegative")
    scale = 1 + Fraction(tolerance_bps) / 10_000
    if trade.kind == EXACT_IN:
        quoted_out = trade.amount / quote.quoted_price
        return quoted_out / scale
    quoted_in = trade.amount * quote.quoted_price
    return quoted_in * scale


def trades_of(block: BlockRecord) -> tuple[TradeRecord, ...]:
    """Realized trades of the block: succeeded swaps only, order preserved."""
    records = []
    for tx in block.txs:
        if isinstance(tx, SwapTx) and tx.status == SUCCEEDED:
            records.append(tx.record)
    return tuple(records)


def latency_of(swap: SwapTx, block: BlockRecord) -> float:
    """Confirmation latency transform ln(seconds + 1).

    Raises MissingField when sign_time is absent and DomainError when the
    swap appears signed after its block timestamp.
    """
    seconds = confirmation_seconds(swap, block)
    return math.log(seconds + 1)


def confirmation_seconds(swap: SwapTx, block: BlockRecord) -> int:
    if swap.sign_time is None:
        raise MissingField(f"swap {swap.tx_hash}:{swap.log_index} has no sign_time")
    seconds = block.timestamp - swap.sign_time
    if seconds < 0:
        raise DomainError(
            f"swap {swap.tx_hash}:{swap.log_index} signed after block timestamp"
        )
    return seconds
