from dataclasses import replace
from fractions import Fraction

import pytest
from conftest import D01, D10, one_range_pool, swap_block

from dextca.amm import EXACT_IN, EXACT_OUT, TradeIntent
from dextca.amm import quote as amm_quote
from dextca.chain import FAILED_TOLERANCE
from dextca.costs import (
    BUCKET_ALL,
    BUCKET_LARGE,
    BUCKET_MEDIUM,
    BUCKET_SMALL,
    COMPONENTS,
    bucket_aggregate,
    bucket_of,
    breakdown,
    gas_cost_usd,
    latency_fill_stats,
    nearest_rank,
    order_size_usd,
    render_usd_bps,
)
from dextca.errors import DomainError, EmptyInput, MissingField
from dextca.slippage import decompose


def test_gas_cost_usd():
    # 150k gas at 20 gwei with ETH at 1800: 0.003 ETH = $5.40
    assert gas_cost_usd(150_000, 20 * 10**9, Fraction(1800)) == Fraction(27, 5)
    assert gas_cost_usd(0, 20 * 10**9, Fraction(1800)) == 0
    with pytest.raises(DomainError):
        gas_cost_usd(-1, 1, Fraction(1))


def _swap_with_trade(trade):
    pool = one_range_pool(fee_bps=30)
    block = swap_block(pool, [(D01, Fraction(5))])
    q = amm_quote(pool, trade, quote_block=0)
    return replace(block.txs[0], trade=trade, quote=q)


def test_order_size_usd_covers_both_legs():
    # mid is 1 token1 per token0 here, so the notional is the fixed amount
    # expressed in the stable token regardless of which leg is fixed
    cases = [
        (TradeIntent(D01, EXACT_IN, Fraction(40)), True),  # token0 fixed
        (TradeIntent(D10, EXACT_IN, Fraction(40)), False),
        (TradeIntent(D01, EXACT_OUT, Fraction(40)), False),
        (TradeIntent(D10, EXACT_OUT, Fraction(40)), True),
    ]
    for trade, amount_is_token0 in cases:
        swap = _swap_with_trade(trade)
        mid = swap.quote.mid_price
        expect_t1 = Fraction(40) * mid if amount_is_token0 else Fraction(40)
        expect_t0 = Fraction(40) if amount_is_token0 else Fraction(40) / mid
        assert order_size_usd(swap) == expect_t1
        assert order_size_usd(swap, stable_side=0) == expect_t0
    with pytest.raises(DomainError):
        order_size_usd(swap, stable_side=2)
    with pytest.raises(MissingField):
        order_size_usd(replace(swap, quote=None))


def test_breakdown_components_and_sign():
    block = swap_block(
        one_range_pool(fee_bps=30), [(D01, Fraction(10), False), (D01, Fraction(10))]
    )
    victim = block.txs[1]
    dec = decompose(block, victim)
    cost = breakdown(victim, dec, Fraction(1800))
    assert cost.gas_usd == Fraction(27, 5)
    assert cost.lp_fee_bps == 30
    assert cost.slippage_bps == -dec.total_bps  # cost convention flips the sign
    assert cost.slippage_bps > 0
    assert cost.total_usd == cost.gas_usd + cost.lp_fee_usd + cost.price_impact_usd + cost.slippage_usd
    assert cost.total_bps == cost.total_usd / cost.order_size_usd * 10_000
    for name in COMPONENTS:
        assert cost.component_usd(name) == getattr(cost, f"{name}_usd")


def test_bucket_of_boundaries():
    thresholds = (Fraction(1000), Fraction(100_000))
    assert bucket_of(Fraction(999), thresholds) == BUCKET_SMALL
    assert bucket_of(Fraction(1000), thresholds) == BUCKET_MEDIUM  # lo is inclusive
    assert bucket_of(Fraction(100_000), thresholds) == BUCKET_MEDIUM  # hi too
    assert bucket_of(Fraction(100_001), thresholds) == BUCKET_LARGE
    with pytest.raises(DomainError):
        bucket_of(Fraction(1), (Fraction(5), Fraction(5)))
    with pytest.raises(DomainError):
        bucket_of(Fraction(1), (Fraction(0), Fraction(5)))


def _fake_breakdowns():
    # order sizes straddle both thresholds; components are simple multiples
    out = []
    for k, order in enumerate([500, 2_000, 50_000, 200_000, 800], start=1):
        order = Fraction(order)
        gas = Fraction(k)
        fee = Fraction(2 * k)
        impact = Fraction(3 * k)
        slip = Fraction(-k, 2)
        total = gas + fee + impact + slip
        out.append(
            type(
                "B",
                (),
                {
                    "order_size_usd": order,
                    "gas_usd": gas,
                    "lp_fee_usd": fee,
                    "price_impact_usd": impact,
                    "slippage_usd": slip,
                    "total_usd": total,
                },
            )()
        )
    return out


def test_bucket_aggregate_matches_brute_force():
    items = _fake_breakdowns()
    table = bucket_aggregate(items)
    assert table.counts == {BUCKET_ALL: 5, BUCKET_SMALL: 2, BUCKET_MEDIUM: 2, BUCKET_LARGE: 1}
    # brute-force one cell of each bucket
    cell = table.cell(BUCKET_SMALL, "gas")
    assert cell.mean_usd == (items[0].gas_usd + items[4].gas_usd) / 2
    assert cell.volume_weighted_bps == (
        (items[0].gas_usd + items[4].gas_usd)
        / (items[0].order_size_usd + items[4].order_size_usd)
        * 10_000
    )
    allcell = table.cell(BUCKET_ALL, "total")
    assert allcell.count == 5
    assert allcell.mean_usd == sum((i.total_usd for i in items), Fraction(0)) / 5
    large = table.cell(BUCKET_LARGE, "slippage")
    assert large.volume_weighted_bps == items[3].slippage_usd / items[3].order_size_usd * 10_000
    rows = table.rows()
    assert [r["bucket"] for r in rows[:5]] == [BUCKET_ALL] * 5
    assert {r["component"] for r in rows} == set(COMPONENTS) | {"total"}
    with pytest.raises(EmptyInput):
        bucket_aggregate([])


def test_render_usd_bps():
    assert render_usd_bps(Fraction(407, 10), Fraction(22)) == "$40.7 (22bps)"
    assert render_usd_bps(Fraction(5), Fraction(-3, 2)) == "$5.0 (-2bps)"


def test_nearest_rank():
    values = [Fraction(k) for k in range(1, 11)]
    assert nearest_rank(values, 50) == 5
    assert nearest_rank(values, 90) == 9
    assert nearest_rank(values, 99) == 10
    assert nearest_rank(values, Fraction(199, 2)) == 10
    assert nearest_rank(values, 5) == 1  # rank never drops below the minimum
    single = [Fraction(7)]
    for p in (50, 90, 99, Fraction(199, 2)):
        assert nearest_rank(single, p) == 7
    with pytest.raises(EmptyInput):
        nearest_rank([], 50)
    with pytest.raises(DomainError):
        nearest_rank(values, 0)
    with pytest.raises(DomainError):
        nearest_rank(values, 101)


def test_latency_fill_stats():
    pool = one_range_pool(fee_bps=30)
    blocks = [
        swap_block(pool, [(D01, Fraction(5)), (D01, Fraction(3), False)], height=1),
        swap_block(pool, [(D10, Fraction(2))], height=2),
    ]
    # one failed private swap: counts toward fail rate, not latency
    failed = replace(blocks[1].txs[0], status=FAILED_TOLERANCE, record=None, sign_time=None)
    blocks[1] = replace(blocks[1], txs=(blocks[1].txs[0], failed))
    stats = latency_fill_stats(blocks)
    assert stats.n_swaps == 4
    assert stats.n_failed == 1
    assert stats.fail_rate == Fraction(1, 4)
    assert stats.n_with_latency == 2  # the two public succeeded swaps
    assert set(stats.percentiles) == {"p50", "p80", "p90", "p95", "p97", "p99", "p99.5"}
    assert stats.percentiles["p50"] == 12
    assert stats.percentiles["p99.5"] == 12
    with pytest.raises(EmptyInput):
        latency_fill_stats([])
