"""Synthetic adversary scenarios with known ground truth.

Each generator builds a complete block (swaps with quotes, limits, fills, and
mempool visibility) around a victim trade so the decomposition's output can be
checked against construction: sandwich and JIT blocks bracket the victim with
private transactions, the backrun block appends a private arbitrage that pulls
the pool back to an external mid, and collision blocks contain only public
flow quoted against the same top-of-block state.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from fractions import Fraction
from math import sqrt as fsqrt
from typing import Mapping

from .amm import (
    BURN,
    EXACT_IN,
    MINT,
    Direction,
    PoolState,
    Quote,
    SwapFill,
    TradeIntent,
    apply_liquidity_event,
    execute_trade,
    input_to_reach_sqrt,
    quote as quote_pool,
    swap_exact_in,
)
from .chain import (
    FAILED_TOLERANCE,
    SUCCEEDED,
    BlockRecord,
    LiquidityEvent,
    SwapTx,
    TradeRecord,
    limit_from_tolerance,
)
from .errors import DomainError, InsufficientLiquidity
from .numerics import SplitMix64, approx_sqrt

VICTIM_GAS = 150_000
ATTACKER_GAS = 120_000
DEFAULT_GAS_PRICE_WEI = 20 * 10**9
ATTACKER_TOLERANCE_BPS = Fraction(500_000)

_GOLDEN = (fsqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SandwichSolution:
    """Optimizer output: frontrun input size and resulting attacker profit.

    Profit is denominated in the victim's input token (backrun proceeds minus
    frontrun spend); q_max is the largest frontrun that still lets the victim
    clear its limit.
    """

    frontrun_size: Fraction
    attacker_pnl: Fraction
    q_max: Fraction


@dataclass(frozen=True)
class Scenario:
    kind: str
    block: BlockRecord
    ground_truth: Mapping[str, object]


def _fake_hash(kind: str, height: int, slot: int) -> str:
    digest = hashlib.sha256(f"{kind}:{height}:{slot}".encode()).hexdigest()
    return "0x" + digest


def _victim_fill(
    pool: PoolState, trade: TradeIntent, limit: Fraction
) -> tuple[bool, SwapFill | None, PoolState]:
    """Execute the victim respecting its limit; ok=False means it would revert."""
    try:
        fill, after = execute_trade(pool, trade, saturate=False)
    except InsufficientLiquidity:
        return False, None, pool
    if fill.saturated:
        return False, None, pool
    if trade.kind == EXACT_IN:
        ok = limit == 0 or fill.amount_out >= limit
    else:
        ok = fill.amount_in <= limit
    return ok, fill, after


def _sandwich_pnl(
    pool: PoolState, trade: TradeIntent, limit: Fraction, q: Fraction
) -> Fraction | None:
    """Attacker profit for frontrun size q; None when the victim would revert."""
    if q < 0:
        raise DomainError("frontrun size must be nonnegative")
    if q == 0:
        ok, _, _ = _victim_fill(pool, trade, limit)
        return Fraction(0) if ok else None
    front, pool1 = swap_exact_in(pool, trade.direction, q)
    if front.saturated or front.amount_out == 0:
        return None
    ok, _, pool2 = _victim_fill(pool1, trade, limit)
    if not ok:
        return None
    back, _ = swap_exact_in(pool2, trade.direction.opposite, front.amount_out)
    return back.amount_out - q


def _max_frontrun(pool: PoolState, trade: TradeIntent, limit: Fraction) -> Fraction:
    """Largest frontrun size keeping the victim executable, by bisection."""
    ok0, _, _ = _victim_fill(pool, trade, limit)
    if not ok0:
        raise DomainError("victim cannot execute even unfrontrun")

    def feasible(q: Fraction) -> bool:
        return _sandwich_pnl(pool, trade, limit, q) is not None

    lo = Fraction(0)
    hi = max(trade.amount, Fraction(1))
    for _ in range(128):
        if not feasible(hi):
            break
        lo = hi
        hi *= 2
    else:
        return lo  # victim effectively unconstrained within search range
    for _ in range(120):
        mid = (lo + hi) / 2
        if feasible(mid):
            lo = mid
        else:
            hi = mid
        if float(hi - lo) <= 1e-15 * float(hi):
            break
    return lo


def _optimize_sandwich(
    pool: PoolState, trade: TradeIntent, limit: Fraction
) -> SandwichSolution:
    q_max = _max_frontrun(pool, trade, limit)
    if q_max <= 0:
        return SandwichSolution(Fraction(0), Fraction(0), q_max)

    def pnl(q: Fraction) -> Fraction:
        value = _sandwich_pnl(pool, trade, limit, q)
        # interior of [0, q_max] is feasible by construction; guard the edge
        return value if value is not None else Fraction(-1) * (1 + q)

    grid_n = 32
    best_i = 0
    best_val = pnl(Fraction(0))
    for i in range(1, grid_n + 1):
        v = pnl(q_max * i / grid_n)
        if v > best_val:
            best_val, best_i = v, i
    a = float(q_max * max(best_i - 1, 0) / grid_n)
    b = float(q_max * min(best_i + 1, grid_n) / grid_n)

    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc = pnl(Fraction(c))
    fd = pnl(Fraction(d))
    for _ in range(100):
        if b - a <= 1e-14 * max(float(q_max), 1.0):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = pnl(Fraction(c))
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = pnl(Fraction(d))
    candidates = [
        (best_val, q_max * best_i / grid_n),
        (fc, Fraction(c)),
        (fd, Fraction(d)),
    ]
    top_val, top_q = max(candidates, key=lambda t: t[0])
    if top_val <= 0:
        return SandwichSolution(Fraction(0), Fraction(0), q_max)
    return SandwichSolution(top_q, top_val, q_max)


def optimal_sandwich(pool: PoolState, victim: SwapTx) -> SandwichSolution:
    """Profit-maximizing frontrun size against one victim swap.

    Coarse scan over [0, q_max] picks a bracket, then golden-section search
    refines it; profit is evaluated exactly at every probed size.  Returns the
    zero sandwich when no positive profit exists.
    """
    return _optimize_sandwich(pool, victim.trade, victim.limit_amount)


def _swap_tx(
    *,
    kind: str,
    height: int,
    slot: int,
    trade: TradeIntent,
    quote: Quote,
    tolerance_bps: Fraction,
    fill: SwapFill,
    is_public: bool,
    timestamp: int,
    gas_used: int,
    gas_price_wei: int,
) -> SwapTx:
    tx_hash = _fake_hash(kind, height, slot)
    limit = limit_from_tolerance(trade, quote, tolerance_bps)
    sign_time = timestamp - 12 if is_public else None
    record = TradeRecord(
        tx_hash=tx_hash,
        log_index=slot,
        direction=trade.direction,
        amount_in=fill.amount_in,
        amount_out=fill.amount_out,
        block=height,
        intra_block_index=slot,
    )
    return SwapTx(
        tx_hash=tx_hash,
        log_index=slot,
        trade=trade,
        limit_amount=limit,
        slippage_tolerance_bps=tolerance_bps,
        deadline=timestamp + 300,
        quote=quote,
        sign_time=sign_time,
        mempool_first_seen=sign_time + 1 if sign_time is not None else None,
        is_public=is_public,
        gas_used=gas_used,
        gas_price_wei=gas_price_wei,
        status=SUCCEEDED,
        record=record,
    )


def _victim_tx(
    *,
    height: int,
    slot: int,
    trade: TradeIntent,
    quote: Quote,
    tolerance_bps: Fraction,
    limit: Fraction,
    fill: SwapFill,
    timestamp: int,
    gas_price_wei: int = DEFAULT_GAS_PRICE_WEI,
) -> SwapTx:
    tx_hash = _fake_hash("victim", height, slot)
    record = TradeRecord(
        tx_hash=tx_hash,
        log_index=slot,
        direction=trade.direction,
        amount_in=fill.amount_in,
        amount_out=fill.amount_out,
        block=height,
        intra_block_index=slot,
    )
    return SwapTx(
        tx_hash=tx_hash,
        log_index=slot,
        trade=trade,
        limit_amount=limit,
        slippage_tolerance_bps=tolerance_bps,
        deadline=timestamp + 300,
        quote=quote,
        sign_time=timestamp - 12,
        mempool_first_seen=timestamp - 11,
        is_public=True,
        gas_used=VICTIM_GAS,
        gas_price_wei=gas_price_wei,
        status=SUCCEEDED,
        record=record,
    )


def gen_sandwich(
    pool: PoolState,
    victim_trade: TradeIntent,
    victim_tolerance_bps: Fraction = Fraction(50),
    *,
    frontrun_size: Fraction | None = None,
    height: int = 1,
    timestamp: int = 1_700_000_000,
    builder: str = "builder-0",
    gas_price_wei: int = DEFAULT_GAS_PRICE_WEI,
) -> Scenario:
    """Sandwich block: private frontrun, victim, private backrun.

    The backrun sells exactly what the frontrun acquired.  Omitting
    frontrun_size runs the optimizer.
    """
    victim_quote = quote_pool(pool, victim_trade, height - 1)
    limit = limit_from_tolerance(victim_trade, victim_quote, victim_tolerance_bps)
    if frontrun_size is None:
        solution = _optimize_sandwich(pool, victim_trade, limit)
        size = solution.frontrun_size
    else:
        size = frontrun_size
        pnl = _sandwich_pnl(pool, victim_trade, limit, size)
        if pnl is None:
            raise DomainError("frontrun size makes the victim revert")
        solution = SandwichSolution(size, pnl, _max_frontrun(pool, victim_trade, limit))
    if size <= 0:
        raise DomainError("no profitable sandwich for this victim")

    direction = victim_trade.direction
    front_trade = TradeIntent(direction, EXACT_IN, size)
    front_quote = quote_pool(pool, front_trade, height - 1)
    front_fill, pool1 = swap_exact_in(pool, direction, size)

    ok, victim_fill, pool2 = _victim_fill(pool1, victim_trade, limit)
    if not ok or victim_fill is None:
        raise DomainError("victim reverts at the solved frontrun size")

    back_trade = TradeIntent(direction.opposite, EXACT_IN, front_fill.amount_out)
    back_quote = quote_pool(pool2, back_trade, height - 1)
    back_fill, _ = swap_exact_in(pool2, direction.opposite, front_fill.amount_out)

    front_tx = _swap_tx(
        kind="sandwich-front",
        height=height,
        slot=0,
        trade=front_trade,
        quote=front_quote,
        tolerance_bps=ATTACKER_TOLERANCE_BPS,
        fill=front_fill,
        is_public=False,
        timestamp=timestamp,
        gas_used=ATTACKER_GAS,
        gas_price_wei=gas_price_wei,
    )
    victim = _victim_tx(
        height=height,
        slot=1,
        trade=victim_trade,
        quote=victim_quote,
        tolerance_bps=victim_tolerance_bps,
        limit=limit,
        fill=victim_fill,
        timestamp=timestamp,
        gas_price_wei=gas_price_wei,
    )
    back_tx = _swap_tx(
        kind="sandwich-back",
        height=height,
        slot=2,
        trade=back_trade,
        quote=back_quote,
        tolerance_bps=ATTACKER_TOLERANCE_BPS,
        fill=back_fill,
        is_public=False,
        timestamp=timestamp,
        gas_used=ATTACKER_GAS,
        gas_price_wei=gas_price_wei,
    )
    block = BlockRecord(
        height=height,
        timestamp=timestamp,
        builder=builder,
        txs=(front_tx, victim, back_tx),
        initial_pool=pool,
    )
    truth: dict[str, object] = {
        "frontrun_size": solution.frontrun_size,
        "attacker_pnl": back_fill.amount_out - size,
        "q_max": solution.q_max,
        "victim_quoted_price": victim_quote.quoted_price,
        "victim_realized_price": victim.record.realized_price,
    }
    return Scenario(kind="sandwich", block=block, ground_truth=truth)


def gen_backrun(
    pool: PoolState,
    victim_trade: TradeIntent,
    external_mid: Fraction,
    victim_tolerance_bps: Fraction = Fraction(50),
    *,
    height: int = 1,
    timestamp: int = 1_700_000_000,
    builder: str = "builder-0",
) -> Scenario:
    """Victim trade followed by a private arbitrage back to an external mid.

    With a nonzero pool fee the arbitrage stops at the edge of the no-trade
    band [mid*(1-f), mid/(1-f)]; inside the band no backrun is emitted.
    """
    if external_mid <= 0:
        raise DomainError("external mid price must be positive")
    victim_quote = quote_pool(pool, victim_trade, height - 1)
    limit = limit_from_tolerance(victim_trade, victim_quote, victim_tolerance_bps)
    ok, victim_fill, pool1 = _victim_fill(pool, victim_trade, limit)
    if not ok or victim_fill is None:
        raise DomainError("victim cannot execute on this pool")
    victim = _victim_tx(
        height=height,
        slot=0,
        trade=victim_trade,
        quote=victim_quote,
        tolerance_bps=victim_tolerance_bps,
        limit=limit,
        fill=victim_fill,
        timestamp=timestamp,
    )

    fee = Fraction(pool.fee_bps, 10_000)
    band_lo = external_mid * (1 - fee)
    band_hi = external_mid / (1 - fee)
    price_after = pool1.spot_price()
    truth: dict[str, object] = {
        "external_mid": external_mid,
        "band": (band_lo, band_hi),
        "victim_quoted_price": victim_quote.quoted_price,
    }
    if band_lo <= price_after <= band_hi:
        block = BlockRecord(height, timestamp, builder, (victim,), pool)
        truth["arbitrage"] = None
        return Scenario(kind="backrun", block=block, ground_truth=truth)

    if price_after > band_hi:
        target_price = band_hi
        arb_direction = Direction.TOKEN0_TO_TOKEN1
    else:
        target_price = band_lo
        arb_direction = Direction.TOKEN1_TO_TOKEN0
    target_sqrt = approx_sqrt(target_price)
    net_needed, saturated = input_to_reach_sqrt(pool1, target_sqrt)
    if saturated:
        raise DomainError("pool too shallow to arbitrage back to the band edge")
    gross = net_needed / (1 - fee)
    arb_trade = TradeIntent(arb_direction, EXACT_IN, gross)
    arb_quote = quote_pool(pool1, arb_trade, height - 1)
    arb_fill, _ = swap_exact_in(pool1, arb_direction, gross)
    arb_tx = _swap_tx(
        kind="backrun-arb",
        height=height,
        slot=1,
        trade=arb_trade,
        quote=arb_quote,
        tolerance_bps=ATTACKER_TOLERANCE_BPS,
        fill=arb_fill,
        is_public=False,
        timestamp=timestamp,
        gas_used=ATTACKER_GAS,
        gas_price_wei=DEFAULT_GAS_PRICE_WEI,
    )
    block = BlockRecord(height, timestamp, builder, (victim, arb_tx), pool)
    truth["arbitrage"] = {
        "direction": arb_direction,
        "amount_in": gross,
        "amount_out": arb_fill.amount_out,
        "target_price": target_price,
    }
    return Scenario(kind="backrun", block=block, ground_truth=truth)


def gen_jit(
    pool: PoolState,
    victim_trade: TradeIntent,
    victim_tolerance_bps: Fraction = Fraction(50),
    *,
    liquidity_factor: Fraction = Fraction(4),
    width_spacings: int = 10,
    height: int = 1,
    timestamp: int = 1_700_000_000,
    builder: str = "builder-0",
) -> Scenario:
    """JIT liquidity block: private mint, victim, private burn of the same range.

    The mint adds liquidity_factor times the active liquidity in a band of
    width_spacings tick spacings either side of the current tick, so the
    victim fills better than quoted and its liquidity component is positive.
    """
    if liquidity_factor <= 0:
        raise DomainError("liquidity factor must be positive")
    spacing = pool.tick_spacing
    anchor = (pool.current_tick // spacing) * spacing
    lower = anchor - width_spacings * spacing
    upper = anchor + (width_spacings + 1) * spacing
    added = pool.active_liquidity * liquidity_factor
    if added <= 0:
        raise DomainError("pool has no active liquidity to scale")

    victim_quote = quote_pool(pool, victim_trade, height - 1)
    limit = limit_from_tolerance(victim_trade, victim_quote, victim_tolerance_bps)
    mint = LiquidityEvent(
        kind=MINT,
        lower_tick=lower,
        upper_tick=upper,
        liquidity=added,
        block=height,
        intra_block_index=0,
        is_public=False,
    )
    pool1 = apply_liquidity_event(pool, MINT, lower, upper, added)
    ok, victim_fill, pool2 = _victim_fill(pool1, victim_trade, limit)
    if not ok or victim_fill is None:
        raise DomainError("victim cannot execute even with JIT liquidity")
    victim = _victim_tx(
        height=height,
        slot=1,
        trade=victim_trade,
        quote=victim_quote,
        tolerance_bps=victim_tolerance_bps,
        limit=limit,
        fill=victim_fill,
        timestamp=timestamp,
    )
    burn = LiquidityEvent(
        kind=BURN,
        lower_tick=lower,
        upper_tick=upper,
        liquidity=added,
        block=height,
        intra_block_index=2,
        is_public=False,
    )
    apply_liquidity_event(pool2, BURN, lower, upper, added)  # validates the unwind
    block = BlockRecord(height, timestamp, builder, (mint, victim, burn), pool)
    truth: dict[str, object] = {
        "jit_liquidity": added,
        "range": (lower, upper),
        "victim_quoted_price": victim_quote.quoted_price,
        "victim_realized_price": victim.record.realized_price,
    }
    return Scenario(kind="jit", block=block, ground_truth=truth)


def gen_collision_block(
    pool: PoolState,
    n_trades: int,
    direction_bias: Fraction = Fraction(0),
    *,
    size_range: tuple[Fraction, Fraction] = (Fraction(1), Fraction(10)),
    tolerance_bps: Fraction = Fraction(100),
    seed: int = 0,
    height: int = 1,
    timestamp: int = 1_700_000_000,
    builder: str = "builder-0",
) -> Scenario:
    """Block of public trades all quoted against the same top-of-block state.

    direction_bias in [-1, 1] sets P(token0 -> token1) = (1 + bias) / 2; at
    exactly 0 trades are emitted as equal-size opposite-direction pairs so the
    flow nets out.  Sizes draw uniformly from size_range.  Trades whose limit
    would be violated by earlier collisions are recorded as reverted.
    """
    if n_trades < 1:
        raise DomainError("need at least one trade")
    if not -1 <= direction_bias <= 1:
        raise DomainError("direction bias must lie in [-1, 1]")
    lo, hi = size_range
    if not 0 < lo <= hi:
        raise DomainError("size range must satisfy 0 < lo <= hi")
    rng = SplitMix64(seed, height)

    def draw_size() -> Fraction:
        grain = rng.randrange(2**32 + 1)
        return lo + (hi - lo) * grain / 2**32

    directions: list[Direction] = []
    sizes: list[Fraction] = []
    if direction_bias == 0:
        while len(directions) < n_trades:
            size = draw_size()
            first = (
                Direction.TOKEN0_TO_TOKEN1
                if rng.randrange(2) == 0
                else Direction.TOKEN1_TO_TOKEN0
            )
            directions.append(first)
            sizes.append(size)
            if len(directions) < n_trades:
                directions.append(first.opposite)
                sizes.append(size)
    else:
        p_num = 1 + direction_bias  # P(token0->token1) = (1+bias)/2
        for _ in range(n_trades):
            draw = Fraction(rng.randrange(2**32), 2**32) * 2
            directions.append(
                Direction.TOKEN0_TO_TOKEN1 if draw < p_num else Direction.TOKEN1_TO_TOKEN0
            )
            sizes.append(draw_size())

    txs: list[SwapTx] = []
    state = pool
    n_failed = 0
    for slot in range(n_trades):
        trade = TradeIntent(directions[slot], EXACT_IN, sizes[slot])
        q = quote_pool(pool, trade, height - 1)
        limit = limit_from_tolerance(trade, q, tolerance_bps)
        tx_hash = _fake_hash("collision", height, slot)
        fill, after = swap_exact_in(state, trade.direction, trade.amount)
        ok = not fill.saturated and (limit == 0 or fill.amount_out >= limit)
        if ok:
            record = TradeRecord(
                tx_hash=tx_hash,
                log_index=slot,
                direction=trade.direction,
                amount_in=fill.amount_in,
                amount_out=fill.amount_out,
                block=height,
                intra_block_index=slot,
            )
            state = after
            status = SUCCEEDED
        else:
            record = None
            status = FAILED_TOLERANCE
            n_failed += 1
        txs.append(
            SwapTx(
                tx_hash=tx_hash,
                log_index=slot,
                trade=trade,
                limit_amount=limit,
                slippage_tolerance_bps=tolerance_bps,
                deadline=timestamp + 300,
                quote=q,
                sign_time=timestamp - 12,
                mempool_first_seen=timestamp - 11,
                is_public=True,
                gas_used=VICTIM_GAS,
                gas_price_wei=DEFAULT_GAS_PRICE_WEI,
                status=status,
                record=record,
            )
        )
    block = BlockRecord(height, timestamp, builder, tuple(txs), pool)
    truth: dict[str, object] = {
        "direction_bias": direction_bias,
        "directions": tuple(d.value for d in directions),
        "sizes": tuple(sizes),
        "n_failed": n_failed,
    }
    return Scenario(kind="collision", block=block, ground_truth=truth)
