import bisect
import math
from fractions import Fraction

import pytest
from conftest import D01, D10, multi_range_pool, one_range_pool

from dextca.amm import (
    BURN,
    EXACT_IN,
    EXACT_OUT,
    MINT,
    LiquidityDelta,
    PoolEvent,
    PoolState,
    Position,
    TradeIntent,
    apply_liquidity_event,
    execute_trade,
    full_range,
    input_to_reach_sqrt,
    liquidity_depth,
    new_pool,
    quote,
    reconstruct_state,
    swap_exact_in,
    swap_exact_out,
    validate_pool,
)
from dextca.errors import DomainError, InsufficientLiquidity, SchemaError
from dextca.numerics import ONE, SplitMix64, approx_sqrt, sqrt_ratio_at_tick


def test_exact_in_fee_zero_closed_form():
    # within one range at sp=1: out = L*a/(L+a)
    pool = one_range_pool(fee_bps=0)
    fill, after = swap_exact_in(pool, D01, Fraction(10))
    assert fill.amount_out == Fraction(1000) * 10 / 1010
    assert fill.fee_paid == 0
    assert after.sqrt_price == Fraction(1000, 1010)
    assert fill.ticks_crossed == ()


def test_exact_in_fee_applies_to_input():
    pool = one_range_pool(fee_bps=30)
    fill, _ = swap_exact_in(pool, D01, Fraction(10))
    net = Fraction(10) * Fraction(9970, 10_000)
    assert fill.amount_out == Fraction(1000) * net / (1000 + net)
    assert fill.fee_paid == Fraction(10) * Fraction(30, 10_000)
    assert fill.amount_in == 10


def test_exact_in_token1_closed_form():
    # selling token1 moves sqrt price up additively by net/L
    pool = one_range_pool(fee_bps=0)
    fill, after = swap_exact_in(pool, D10, Fraction(10))
    assert after.sqrt_price == Fraction(101, 100)
    assert fill.amount_out == Fraction(1000) * Fraction(1, 100) / Fraction(101, 100)


def test_constant_product_invariant_randomized():
    # virtual reserves x=L/sp, y=L*sp: (x + net_in)(y - out) == L^2, exactly
    rng = SplitMix64(21)
    for fee in (0, 5, 30, 100):
        pool = one_range_pool(fee_bps=fee)
        lsq = pool.active_liquidity**2
        for _ in range(25):
            amount = Fraction(rng.randint(1, 40_000), 1000)
            direction = D01 if rng.randrange(2) == 0 else D10
            fill, after = swap_exact_in(pool, direction, amount)
            assert not fill.saturated
            x = pool.active_liquidity / pool.sqrt_price
            y = pool.active_liquidity * pool.sqrt_price
            net = amount * (1 - Fraction(fee, 10_000))
            if direction.zero_for_one:
                assert (x + net) * (y - fill.amount_out) == lsq
            else:
                assert (y + net) * (x - fill.amount_out) == lsq


def test_round_trip_exact_in_exact_out():
    rng = SplitMix64(22)
    for fee in (0, 30, 100):
        for pool in (one_range_pool(fee_bps=fee), multi_range_pool(fee_bps=fee)):
            for _ in range(10):
                amount = Fraction(rng.randint(1, 90_000), 1000)
                direction = D01 if rng.randrange(2) == 0 else D10
                fill, _ = swap_exact_in(pool, direction, amount)
                assert not fill.saturated
                inverse, _ = swap_exact_out(pool, direction, fill.amount_out)
                assert inverse.amount_in == amount
                assert inverse.amount_out == fill.amount_out


def test_output_monotone_and_concave_in_input():
    pool = multi_range_pool(fee_bps=30)
    outs = []
    for k in range(1, 30):
        fill, _ = swap_exact_in(pool, D01, Fraction(4 * k))
        outs.append(fill.amount_out)
    assert all(b > a for a, b in zip(outs, outs[1:]))
    # diminishing returns even across tick crossings
    gains = [b - a for a, b in zip(outs, outs[1:])]
    assert all(g2 <= g1 for g1, g2 in zip(gains, gains[1:]))


_FBASE = 10001 / 10000


def _fratio(tick: int) -> float:
    return _FBASE ** (tick / 2)


def _oracle_exact_in(positions, sp0, fee_bps, zero_for_one, amount_in):
    """Independent piecewise walk over initialized ranges, float throughout."""
    table: dict[int, float] = {}
    for lo, hi, liq in positions:
        table[lo] = table.get(lo, 0.0) + liq
        table[hi] = table.get(hi, 0.0) - liq
    bounds = sorted(t for t in table if table[t] != 0.0)
    ratios = [_fratio(t) for t in bounds]
    liqs = []
    running = 0.0
    for t in bounds:
        running += table[t]
        liqs.append(running)  # liquidity of the interval just above t
    net = amount_in * (1 - fee_bps / 10_000)
    out = 0.0
    sp = sp0
    i = bisect.bisect_right(ratios, sp) - 1
    if zero_for_one:
        while net > 0 and i >= 0:
            liq, lo = liqs[i], ratios[i]
            if liq <= 0:
                sp, i = lo, i - 1
                continue
            cap = liq * (1 / lo - 1 / sp)
            if net < cap:
                new_sp = liq * sp / (liq + net * sp)
                out += liq * (sp - new_sp)
                sp, net = new_sp, 0.0
            else:
                out += liq * (sp - lo)
                net -= cap
                sp, i = lo, i - 1
    else:
        while net > 0 and i + 1 < len(ratios):
            liq, hi = liqs[i], ratios[i + 1]
            if liq <= 0:
                sp, i = hi, i + 1
                continue
            cap = liq * (hi - sp)
            if net < cap:
                new_sp = sp + net / liq
                out += liq * (new_sp - sp) / (sp * new_sp)
                sp, net = new_sp, 0.0
            else:
                out += liq * (hi - sp) / (sp * hi)
                net -= cap
                sp, i = hi, i + 1
    return out, sp


def test_multi_range_matches_piecewise_oracle():
    positions = [(-2000, 0, 800.0), (0, 2000, 1200.0), (-4000, 4000, 300.0)]
    rng = SplitMix64(23)
    for fee in (0, 30):
        pool = multi_range_pool(fee_bps=fee)
        for _ in range(40):
            down = rng.randrange(2) == 0
            amount = Fraction(rng.randint(1, 140_000), 1000)
            fill, after = swap_exact_in(pool, D01 if down else D10, amount)
            out_f, sp_f = _oracle_exact_in(positions, 1.0, fee, down, float(amount))
            assert float(fill.amount_out) == pytest.approx(out_f, rel=1e-10)
            assert float(after.sqrt_price) == pytest.approx(sp_f, rel=1e-10)


def test_crossing_semantics():
    pool = multi_range_pool(fee_bps=0)
    # drain the whole [-2000, 0) band and stop exactly on its lower boundary
    lower = sqrt_ratio_at_tick(-2000)
    needed, saturated = input_to_reach_sqrt(pool, lower)
    assert not saturated
    fill, after = swap_exact_in(pool, D01, needed)
    assert fill.end_sqrt_price == lower
    assert after.current_tick == -2001  # parked just below the boundary
    assert after.active_liquidity == Fraction(300)
    assert fill.ticks_crossed == (0, -2000)
    # moving back up onto a boundary leaves the tick at the boundary itself
    up_needed, _ = input_to_reach_sqrt(after, sqrt_ratio_at_tick(0))
    fill_up, back = swap_exact_in(after, D10, up_needed)
    assert back.current_tick == 0
    assert back.active_liquidity == Fraction(1500)


def test_saturation_partial_fill():
    pool = multi_range_pool(fee_bps=30)
    fill, after = swap_exact_in(pool, D01, Fraction(10**6))
    assert fill.saturated
    assert fill.amount_in < 10**6  # gross actually consumed
    assert after.sqrt_price == sqrt_ratio_at_tick(-4000)
    # gross/net bookkeeping stays consistent under saturation
    assert fill.amount_in * (1 - Fraction(30, 10_000)) == fill.amount_in - fill.fee_paid


def test_insufficient_liquidity_when_empty():
    empty = new_pool(0, 10, Fraction(1), [])
    with pytest.raises(InsufficientLiquidity):
        swap_exact_in(empty, D01, Fraction(1))
    with pytest.raises(InsufficientLiquidity):
        swap_exact_out(empty, D01, Fraction(1))


def test_exact_out_beyond_depth():
    pool = one_range_pool(fee_bps=0)
    with pytest.raises(InsufficientLiquidity):
        swap_exact_out(pool, D01, Fraction(2000))  # more token1 than exists
    fill, _ = swap_exact_out(pool, D01, Fraction(2000), saturate=True)
    assert fill.saturated
    assert fill.amount_out < 2000


def test_zero_amount_swaps():
    pool = one_range_pool(fee_bps=30)
    fill, after = swap_exact_in(pool, D01, Fraction(0))
    assert fill.amount_out == 0 and fill.avg_price is None
    assert after.sqrt_price == pool.sqrt_price
    with pytest.raises(DomainError):
        swap_exact_in(pool, D01, Fraction(-1))


def test_mint_order_independence():
    a = Position(-200, 100, Fraction(500))
    b = Position(-100, 300, Fraction(700))
    p1 = new_pool(30, 100, Fraction(1), [a, b])
    p2 = new_pool(30, 100, Fraction(1), [b, a])
    assert p1.tick_table == p2.tick_table
    assert p1.active_liquidity == p2.active_liquidity == Fraction(1200)
    assert p1.positions == p2.positions


def test_burn_validation_and_clamp():
    pool = one_range_pool()
    with pytest.raises(DomainError):
        apply_liquidity_event(pool, BURN, -50_000, 50_000, Fraction(2000))
    clamped = apply_liquidity_event(
        pool, BURN, -50_000, 50_000, Fraction(2000), clamp=True
    )
    assert clamped.active_liquidity == 0
    # burning a range that was never minted is a zero-op under clamp
    same = apply_liquidity_event(pool, BURN, -100, 100, Fraction(5), clamp=True)
    assert same.tick_table == pool.tick_table


def test_liquidity_event_validation():
    pool = one_range_pool()
    with pytest.raises(DomainError):
        apply_liquidity_event(pool, MINT, -15, 10, Fraction(1))  # misaligned
    with pytest.raises(DomainError):
        apply_liquidity_event(pool, MINT, 100, 100, Fraction(1))  # empty range
    with pytest.raises(DomainError):
        apply_liquidity_event(pool, MINT, -10, 10, Fraction(-1))
    with pytest.raises(DomainError):
        apply_liquidity_event(pool, "split", -10, 10, Fraction(1))


def test_validate_pool_rejects_inconsistency():
    pool = one_range_pool()
    broken = PoolState(
        fee_bps=pool.fee_bps,
        tick_spacing=pool.tick_spacing,
        sqrt_price=pool.sqrt_price,
        active_liquidity=pool.active_liquidity + 1,
        tick_table=pool.tick_table,
        current_tick=pool.current_tick,
        positions=pool.positions,
    )
    with pytest.raises(DomainError):
        validate_pool(broken)
    unclosed = PoolState(
        fee_bps=0,
        tick_spacing=10,
        sqrt_price=Fraction(1),
        active_liquidity=Fraction(5),
        tick_table={-10: Fraction(5)},
        current_tick=0,
        positions={},
    )
    with pytest.raises(DomainError):
        validate_pool(unclosed)
    with pytest.raises(DomainError):
        new_pool(10_000, 10, Fraction(1))
    with pytest.raises(DomainError):
        new_pool(30, 10, Fraction(-1))


def test_quote_markup_splits_into_fee_and_impact():
    pool = one_range_pool(fee_bps=30)
    trade = TradeIntent(D01, EXACT_IN, Fraction(50))
    q = quote(pool, trade, quote_block=9)
    mid_for_trade = ONE / pool.spot_price()
    total_markup = (q.quoted_price / mid_for_trade - 1) * 10_000
    assert q.price_impact_bps + q.lp_fee_bps == total_markup
    assert q.lp_fee_bps == 30
    assert q.price_impact_bps > 0
    assert q.quote_block == 9


def test_quote_rejects_undeliverable_trade():
    pool = one_range_pool(fee_bps=0)
    with pytest.raises(InsufficientLiquidity):
        quote(pool, TradeIntent(D01, EXACT_OUT, Fraction(10**6)))


def test_execute_trade_dispatch():
    pool = one_range_pool(fee_bps=0)
    fill_in, _ = execute_trade(pool, TradeIntent(D01, EXACT_IN, Fraction(10)))
    fill_out, _ = execute_trade(pool, TradeIntent(D01, EXACT_OUT, fill_in.amount_out))
    assert fill_out.amount_in == 10


def test_input_to_reach_sqrt_round_trip():
    for fee in (0, 30):
        pool = multi_range_pool(fee_bps=fee)
        for target_tick in (-2400, -700, 900, 2600):
            target = sqrt_ratio_at_tick(target_tick)
            net, saturated = input_to_reach_sqrt(pool, target)
            assert not saturated
            gross = net / (1 - Fraction(fee, 10_000))
            direction = D01 if target < pool.sqrt_price else D10
            fill, after = swap_exact_in(pool, direction, gross)
            assert after.sqrt_price == target
    assert input_to_reach_sqrt(pool, pool.sqrt_price) == (Fraction(0), False)
    with pytest.raises(DomainError):
        input_to_reach_sqrt(pool, Fraction(-1))


def test_input_to_reach_sqrt_saturates_past_depth():
    pool = one_range_pool()
    _, saturated = input_to_reach_sqrt(pool, sqrt_ratio_at_tick(-60_000))
    assert saturated


def test_liquidity_depth_closed_form():
    pool = one_range_pool(fee_bps=0)
    up = liquidity_depth(pool, D10, 500)
    # token1 needed to push price up 5%: L*(sqrt(1.05)-1)
    assert up.amount == 1000 * (approx_sqrt(Fraction(105, 100)) - 1)
    assert float(up.amount) == pytest.approx(1000 * (math.sqrt(1.05) - 1), rel=1e-12)
    down = liquidity_depth(pool, D01, 500, input_token_usd=Fraction(2))
    assert float(down.amount) == pytest.approx(1000 * (math.sqrt(1.05) - 1), rel=1e-6)
    assert down.usd == down.amount * 2
    assert not down.saturated
    with pytest.raises(DomainError):
        liquidity_depth(pool, D01, 0)


def test_full_range_alignment():
    lo, hi = full_range(60)
    assert lo == -hi and hi % 60 == 0
    pool = new_pool(30, 60, Fraction(1), [Position(lo, hi, Fraction(10))])
    assert pool.active_liquidity == 10


def test_reconstruct_state_folds_event_log():
    initial = multi_range_pool(fee_bps=30)
    events = [
        PoolEvent(5, 0, TradeIntent(D01, EXACT_IN, Fraction(20))),
        PoolEvent(5, 1, LiquidityDelta(MINT, -100, 100, Fraction(50))),
        PoolEvent(7, 0, TradeIntent(D10, EXACT_IN, Fraction(5))),
    ]
    # manual fold, same operations
    _, expected = swap_exact_in(initial, D01, Fraction(20))
    expected = apply_liquidity_event(expected, MINT, -100, 100, Fraction(50))
    assert reconstruct_state(initial, events, block_height=6) == expected
    _, expected7 = swap_exact_in(expected, D10, Fraction(5))
    assert reconstruct_state(initial, events, block_height=8) == expected7
    # events at or past the target height are excluded
    assert reconstruct_state(initial, events, block_height=5) == initial
    out_of_order = [events[1], events[0]]
    with pytest.raises(SchemaError):
        reconstruct_state(initial, out_of_order, block_height=10)
