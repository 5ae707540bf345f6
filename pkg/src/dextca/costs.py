"""USD cost accounting for swaps and aggregate cost tables.

A swap's execution cost splits into four components, each expressed both in
USD and in basis points of order size: gas, LP fee, price impact (the
quote-time markup beyond the fee), and slippage (realized drift past the
quote, from the decomposition's total).  Costs are positive; a slippage
improvement shows up as a negative slippage cost.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import ceil
from typing import Iterable, Mapping, Sequence

from .chain import SUCCEEDED, BlockRecord, SwapTx, confirmation_seconds
from .errors import DomainError, EmptyInput, MissingField
from .slippage import SlippageDecomposition

WEI_PER_ETH = 10**18

COMPONENTS = ("gas", "lp_fee", "price_impact", "slippage")

BUCKET_ALL = "All"
BUCKET_LARGE = "Large"
BUCKET_MEDIUM = "Medium"
BUCKET_SMALL = "Small"
BUCKET_ORDER = (BUCKET_ALL, BUCKET_LARGE, BUCKET_MEDIUM, BUCKET_SMALL)

PERCENTILES = (50, 80, 90, 95, 97, 99, Fraction(199, 2))


def gas_cost_usd(gas_used: int, gas_price_wei: int, eth_usd: Fraction) -> Fraction:
    if gas_used < 0 or gas_price_wei < 0 or eth_usd < 0:
        raise DomainError("gas inputs must be nonnegative")
    return Fraction(gas_used) * gas_price_wei * eth_usd / WEI_PER_ETH


def order_size_usd(swap: SwapTx, *, stable_side: int = 1) -> Fraction:
    """Notional of the swap's fixed leg in USD, valued at the quote mid price.

    stable_side names the pool token treated as the USD numeraire.
    """
    if swap.quote is None:
        raise MissingField("order size needs the swap's quote")
    if stable_side not in (0, 1):
        raise DomainError("stable_side must be 0 or 1")
    mid = swap.quote.mid_price  # token1 per token0
    amount = swap.trade.amount
    if swap.trade.kind == "exact_in":
        amount_is_token0 = swap.trade.direction.zero_for_one
    else:
        amount_is_token0 = not swap.trade.direction.zero_for_one
    if stable_side == 1:
        return amount * mid if amount_is_token0 else amount
    return amount if amount_is_token0 else amount / mid


@dataclass(frozen=True)
class CostBreakdown:
    """One swap's cost components; *_bps values are of order size."""

    order_size_usd: Fraction
    gas_usd: Fraction
    gas_bps: Fraction
    lp_fee_usd: Fraction
    lp_fee_bps: Fraction
    price_impact_usd: Fraction
    price_impact_bps: Fraction
    slippage_usd: Fraction
    slippage_bps: Fraction
    total_usd: Fraction
    total_bps: Fraction

    def component_usd(self, name: str) -> Fraction:
        return getattr(self, f"{name}_usd")


def breakdown(
    swap: SwapTx,
    decomposition: SlippageDecomposition,
    eth_usd: Fraction,
    *,
    stable_side: int = 1,
) -> CostBreakdown:
    if swap.quote is None:
        raise MissingField("cost breakdown needs the swap's quote")
    order = order_size_usd(swap, stable_side=stable_side)
    if order <= 0:
        raise DomainError("order size must be positive")
    gas_usd = gas_cost_usd(swap.gas_used, swap.gas_price_wei, eth_usd)
    lp_fee_bps = swap.quote.lp_fee_bps
    impact_bps = swap.quote.price_impact_bps
    # cost convention: positive = paid, so realized slippage flips sign
    slip_bps = -decomposition.total_bps
    lp_fee_usd = lp_fee_bps * order / 10_000
    impact_usd = impact_bps * order / 10_000
    slip_usd = slip_bps * order / 10_000
    total_usd = gas_usd + lp_fee_usd + impact_usd + slip_usd
    return CostBreakdown(
        order_size_usd=order,
        gas_usd=gas_usd,
        gas_bps=gas_usd / order * 10_000,
        lp_fee_usd=lp_fee_usd,
        lp_fee_bps=lp_fee_bps,
        price_impact_usd=impact_usd,
        price_impact_bps=impact_bps,
        slippage_usd=slip_usd,
        slippage_bps=slip_bps,
        total_usd=total_usd,
        total_bps=total_usd / order * 10_000,
    )


def bucket_of(order_usd: Fraction, thresholds: tuple[Fraction, Fraction]) -> str:
    lo, hi = thresholds
    if not 0 < lo < hi:
        raise DomainError("bucket thresholds must satisfy 0 < lo < hi")
    if order_usd < lo:
        return BUCKET_SMALL
    if order_usd <= hi:
        return BUCKET_MEDIUM
    return BUCKET_LARGE


@dataclass(frozen=True)
class BucketCell:
    """One (bucket, component) aggregate."""

    count: int
    mean_usd: Fraction
    volume_weighted_bps: Fraction


@dataclass(frozen=True)
class BucketTable:
    """Cost aggregates by order-size bucket for one pair.

    cells maps (bucket, component) to the aggregate; component "total" is the
    sum of the four parts.  Volume-weighted bps divide summed component USD by
    summed order USD.
    """

    pair: str
    thresholds: tuple[Fraction, Fraction]
    counts: Mapping[str, int]
    cells: Mapping[tuple[str, str], BucketCell]

    def cell(self, bucket: str, component: str) -> BucketCell:
        return self.cells[(bucket, component)]

    def rows(self) -> list[dict[str, object]]:
        """Long format: one row per (bucket, component) present."""
        out: list[dict[str, object]] = []
        for bucket in BUCKET_ORDER:
            if self.counts.get(bucket, 0) == 0:
                continue
            for component in COMPONENTS + ("total",):
                c = self.cells[(bucket, component)]
                out.append(
                    {
                        "pair": self.pair,
                        "bucket": bucket,
                        "component": component,
                        "count": c.count,
                        "mean_usd": c.mean_usd,
                        "volume_weighted_bps": c.volume_weighted_bps,
                    }
                )
        return out


def render_usd_bps(usd: Fraction, bps: Fraction) -> str:
    """Compact table cell, e.g. '$40.7 (22bps)'."""
    return f"${float(usd):.1f} ({float(bps):.0f}bps)"


def bucket_aggregate(
    breakdowns: Sequence[CostBreakdown],
    *,
    pair: str = "pool",
    thresholds: tuple[Fraction, Fraction] = (Fraction(1000), Fraction(100_000)),
) -> BucketTable:
    """Aggregate per-swap cost breakdowns into the bucketed cost table."""
    if not breakdowns:
        raise EmptyInput("no cost breakdowns to aggregate")
    members: dict[str, list[CostBreakdown]] = {b: [] for b in BUCKET_ORDER}
    for item in breakdowns:
        members[BUCKET_ALL].append(item)
        members[bucket_of(item.order_size_usd, thresholds)].append(item)
    cells: dict[tuple[str, str], BucketCell] = {}
    counts: dict[str, int] = {}
    for bucket, items in members.items():
        counts[bucket] = len(items)
        if not items:
            continue
        volume = sum((i.order_size_usd for i in items), Fraction(0))
        for component in COMPONENTS + ("total",):
            attr = "total_usd" if component == "total" else f"{component}_usd"
            usd_sum = sum((getattr(i, attr) for i in items), Fraction(0))
            cells[(bucket, component)] = BucketCell(
                count=len(items),
                mean_usd=usd_sum / len(items),
                volume_weighted_bps=usd_sum / volume * 10_000,
            )
    return BucketTable(pair=pair, thresholds=thresholds, counts=counts, cells=cells)


def nearest_rank(sorted_values: Sequence[Fraction], percentile: Fraction | int) -> Fraction:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    n = len(sorted_values)
    if n == 0:
        raise EmptyInput("percentile of empty sequence")
    if not 0 < percentile <= 100:
        raise DomainError("percentile must be in (0, 100]")
    rank = ceil(Fraction(percentile) * n / 100)
    return sorted_values[max(rank, 1) - 1]


@dataclass(frozen=True)
class LatencyFillStats:
    """Confirmation-latency percentiles (seconds) and the swap failure rate."""

    percentiles: Mapping[str, Fraction]
    fail_rate: Fraction
    n_swaps: int
    n_failed: int
    n_with_latency: int


def latency_fill_stats(blocks: Iterable[BlockRecord]) -> LatencyFillStats:
    """Latency percentiles over swaps carrying a sign time, fail rate over all."""
    latencies: list[Fraction] = []
    n_swaps = 0
    n_failed = 0
    for block in blocks:
        for tx in block.txs:
            if not isinstance(tx, SwapTx):
                continue
            n_swaps += 1
            if tx.status != SUCCEEDED:
                n_failed += 1
            if tx.sign_time is not None:
                latencies.append(Fraction(confirmation_seconds(tx, block)))
    if n_swaps == 0:
        raise EmptyInput("no swaps in input blocks")
    latencies.sort()
    percentiles: dict[str, Fraction] = {}
    if latencies:
        for p in PERCENTILES:
            label = f"p{float(p):g}"
            percentiles[label] = nearest_rank(latencies, p)
    return LatencyFillStats(
        percentiles=percentiles,
        fail_rate=Fraction(n_failed, n_swaps),
        n_swaps=n_swaps,
        n_failed=n_failed,
        n_with_latency=len(latencies),
    )
