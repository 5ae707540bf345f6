"""Concentrated-liquidity pool engine on exact rational arithmetic.

State is a snapshot (sqrt price, active liquidity, tick table of net
liquidity deltas); operations are pure functions returning new snapshots.
Within a tick range the curve is constant-product over virtual reserves
x = L/sqrt(P), y = L*sqrt(P), so token0-in moves 1/sqrt(P) additively and
token1-in moves sqrt(P) additively.  Fees are deducted from the input before
the curve math.

Crossing convention: moving down onto an initialized boundary removes its net
delta and leaves current_tick at boundary-1; moving up onto it adds the delta
and leaves current_tick at the boundary.  That keeps the invariant
``active_liquidity == sum of net deltas at ticks <= current_tick`` exact
after every operation.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

from .errors import DomainError, InsufficientLiquidity, SchemaError
from .numerics import (
    MAX_TICK,
    MIN_TICK,
    ONE,
    approx_sqrt,
    as_fraction,
    sqrt_ratio_at_tick,
    tick_containing,
)

EXACT_IN = "exact_in"
EXACT_OUT = "exact_out"
MINT = "mint"
BURN = "burn"


class Direction(Enum):
    """Swap direction, named by the token being sold into the pool."""

    TOKEN0_TO_TOKEN1 = "token0_to_token1"
    TOKEN1_TO_TOKEN0 = "token1_to_token0"

    @property
    def zero_for_one(self) -> bool:
        """True when token0 goes in and the price (token1 per token0) falls."""
        return self is Direction.TOKEN0_TO_TOKEN1

    @property
    def opposite(self) -> "Direction":
        if self is Direction.TOKEN0_TO_TOKEN1:
            return Direction.TOKEN1_TO_TOKEN0
        return Direction.TOKEN0_TO_TOKEN1


@dataclass(frozen=True)
class TradeIntent:
    """What a swapper asked for: direction, exact-in or exact-out, amount."""

    direction: Direction
    kind: str
    amount: Fraction

    def __post_init__(self):
        if self.kind not in (EXACT_IN, EXACT_OUT):
            raise DomainError(f"unknown trade kind {self.kind!r}")
        if self.amount < 0:
            raise DomainError("trade amount must be nonnegative")


@dataclass(frozen=True)
class LiquidityDelta:
    """A mint or burn over an aligned tick range."""

    kind: str
    lower_tick: int
    upper_tick: int
    liquidity: Fraction

    def __post_init__(self):
        if self.kind not in (MINT, BURN):
            raise DomainError(f"unknown liquidity event kind {self.kind!r}")


@dataclass(frozen=True)
class Position:
    lower_tick: int
    upper_tick: int
    liquidity: Fraction


@dataclass(frozen=True)
class PoolEvent:
    """One entry of a pool event log, ordered by (block, log_index)."""

    block: int
    log_index: int
    action: Union[TradeIntent, LiquidityDelta]


@dataclass(frozen=True)
class PoolState:
    """Immutable pool snapshot.

    tick_table maps initialized ticks to the net liquidity change applied
    when the price crosses the tick upward.  positions carries per-range
    accounting so burns can be validated against what was actually minted.
    """

    fee_bps: int
    tick_spacing: int
    sqrt_price: Fraction
    active_liquidity: Fraction
    tick_table: Mapping[int, Fraction]
    current_tick: int
    positions: Mapping[tuple[int, int], Fraction] = field(default_factory=dict)

    def spot_price(self) -> Fraction:
        """Pool price P = token1 per token0."""
        return self.sqrt_price * self.sqrt_price


@dataclass(frozen=True)
class SwapFill:
    """Result of executing a swap against a snapshot.

    amount_in is gross (fee inclusive); avg_price is amount_in/amount_out in
    input-token-per-output-token units, None for an empty fill.  saturated is
    set when available liquidity ran out before the request was met.
    """

    amount_in: Fraction
    amount_out: Fraction
    fee_paid: Fraction
    end_sqrt_price: Fraction
    ticks_crossed: tuple[int, ...]
    avg_price: Fraction | None
    saturated: bool = False


@dataclass(frozen=True)
class Quote:
    """Hypothetical execution price for a trade at quote time.

    mid_price is the pool spot price P (token1 per token0); quoted_price is in
    input-per-output units for the trade's direction.  price_impact_bps is the
    markup of quoted over mid (direction-adjusted) net of the LP fee share, so
    lp_fee_bps + price_impact_bps is the total markup.
    """

    quoted_price: Fraction
    mid_price: Fraction
    price_impact_bps: Fraction
    lp_fee_bps: Fraction
    quote_block: int | None = None


@dataclass(frozen=True)
class DepthResult:
    """Input quantity consuming liquidity up to a price move of range_bps."""

    amount: Fraction
    usd: Fraction | None
    saturated: bool


def validate_pool(pool: PoolState) -> None:
    """Raise DomainError if the snapshot violates its structural invariants."""
    if not 0 <= pool.fee_bps < 10_000:
        raise DomainError(f"fee_bps {pool.fee_bps} outside [0, 10000)")
    if pool.tick_spacing < 1:
        raise DomainError("tick_spacing must be >= 1")
    if pool.sqrt_price <= 0:
        raise DomainError("sqrt_price must be positive")
    running = Fraction(0)
    for tick in sorted(pool.tick_table):
        if tick % pool.tick_spacing != 0:
            raise DomainError(f"tick {tick} not aligned to spacing {pool.tick_spacing}")
        if not MIN_TICK <= tick <= MAX_TICK:
            raise DomainError(f"tick {tick} out of range")
        running += pool.tick_table[tick]
        if running < 0:
            raise DomainError(f"implied liquidity below zero above tick {tick}")
    if running != 0:
        raise DomainError("tick table does not close: net deltas must sum to 0")
    active = sum(
        (delta for tick, delta in pool.tick_table.items() if tick <= pool.current_tick),
        Fraction(0),
    )
    if active != pool.active_liquidity:
        raise DomainError("active_liquidity inconsistent with tick table")
    lo = sqrt_ratio_at_tick(pool.current_tick)
    hi = sqrt_ratio_at_tick(pool.current_tick + 1)
    # closed upper bound: a downward cross parks the state exactly on the
    # boundary with current_tick just below it
    if not lo <= pool.sqrt_price <= hi:
        raise DomainError("current_tick does not contain sqrt_price")


def new_pool(
    fee_bps: int,
    tick_spacing: int,
    sqrt_price: Fraction | int | str,
    positions: Iterable[Position] = (),
) -> PoolState:
    """Build a validated pool snapshot from a price and a set of positions."""
    sp = as_fraction(sqrt_price)
    if sp <= 0:
        raise DomainError("sqrt_price must be positive")
    pool = PoolState(
        fee_bps=fee_bps,
        tick_spacing=tick_spacing,
        sqrt_price=sp,
        active_liquidity=Fraction(0),
        tick_table={},
        current_tick=tick_containing(sp),
        positions={},
    )
    validate_pool(pool)
    for pos in positions:
        pool = apply_liquidity_event(
            pool, MINT, pos.lower_tick, pos.upper_tick, as_fraction(pos.liquidity)
        )
    return pool


def full_range(tick_spacing: int) -> tuple[int, int]:
    """Widest spacing-aligned tick range."""
    span = (MAX_TICK // tick_spacing) * tick_spacing
    return (-span, span)


def apply_liquidity_event(
    pool: PoolState,
    kind: str,
    lower_tick: int,
    upper_tick: int,
    liquidity: Fraction,
    *,
    clamp: bool = False,
) -> PoolState:
    """Mint or burn `liquidity` over [lower_tick, upper_tick).

    Burns must not exceed the accounted balance of that exact range; with
    clamp=True (replay contexts) an oversized burn is reduced to the balance
    instead of raising.
    """
    liquidity = as_fraction(liquidity)
    if kind not in (MINT, BURN):
        raise DomainError(f"unknown liquidity event kind {kind!r}")
    if liquidity < 0:
        raise DomainError("liquidity must be nonnegative")
    if lower_tick >= upper_tick:
        raise DomainError("lower_tick must be below upper_tick")
    for tick in (lower_tick, upper_tick):
        if tick % pool.tick_spacing != 0:
            raise DomainError(f"tick {tick} not aligned to spacing {pool.tick_spacing}")
        if not MIN_TICK <= tick <= MAX_TICK:
            raise DomainError(f"tick {tick} out of range")

    key = (lower_tick, upper_tick)
    positions = dict(pool.positions)
    held = positions.get(key, Fraction(0))
    if kind == BURN:
        if liquidity > held:
            if not clamp:
                raise DomainError(
                    f"burn of {liquidity} exceeds {held} held in range {key}"
                )
            liquidity = held
    if liquidity == 0:
        return pool

    signed = liquidity if kind == MINT else -liquidity
    table = dict(pool.tick_table)
    table[lower_tick] = table.get(lower_tick, Fraction(0)) + signed
    table[upper_tick] = table.get(upper_tick, Fraction(0)) - signed
    for tick in (lower_tick, upper_tick):
        if table[tick] == 0:
            del table[tick]

    new_held = held + signed
    if new_held == 0:
        positions.pop(key, None)
    else:
        positions[key] = new_held

    active = pool.active_liquidity
    if lower_tick <= pool.current_tick < upper_tick:
        active += signed

    out = PoolState(
        fee_bps=pool.fee_bps,
        tick_spacing=pool.tick_spacing,
        sqrt_price=pool.sqrt_price,
        active_liquidity=active,
        tick_table=table,
        current_tick=pool.current_tick,
        positions=positions,
    )
    validate_pool(out)
    return out


def _next_tick_down(sorted_ticks: list[int], tick: int) -> int | None:
    """Largest initialized tick <= tick."""
    i = bisect.bisect_right(sorted_ticks, tick)
    return sorted_ticks[i - 1] if i else None


def _next_tick_up(sorted_ticks: list[int], tick: int) -> int | None:
    """Smallest initialized tick > tick."""
    i = bisect.bisect_right(sorted_ticks, tick)
    return sorted_ticks[i] if i < len(sorted_ticks) else None


def swap_exact_in(
    pool: PoolState, direction: Direction, amount_in: Fraction | int | str
) -> tuple[SwapFill, PoolState]:
    """Sell `amount_in` (gross) of the input token.

    Returns a saturated partial fill when liquidity runs out; raises
    InsufficientLiquidity only when nothing at all can be filled.
    """
    amount_in = as_fraction(amount_in)
    if amount_in < 0:
        raise DomainError("amount_in must be nonnegative")
    fee = Fraction(pool.fee_bps, 10_000)
    net_budget = amount_in * (1 - fee)

    sp = pool.sqrt_price
    liq = pool.active_liquidity
    tick = pool.current_tick
    ticks = sorted(pool.tick_table)
    table = pool.tick_table
    down = direction.zero_for_one

    out_total = Fraction(0)
    net_spent = Fraction(0)
    crossed: list[int] = []
    stopped_mid_range = False

    while net_budget > net_spent:
        boundary_tick = (
            _next_tick_down(ticks, tick) if down else _next_tick_up(ticks, tick)
        )
        if boundary_tick is None:
            break  # no liquidity left in this direction
        boundary = sqrt_ratio_at_tick(boundary_tick)
        if liq == 0:
            sp = boundary
            if down:
                liq -= table[boundary_tick]
                tick = boundary_tick - 1
            else:
                liq += table[boundary_tick]
                tick = boundary_tick
            crossed.append(boundary_tick)
            continue

        remaining = net_budget - net_spent
        if down:
            step_max = liq * (ONE / boundary - ONE / sp)
            if remaining < step_max:
                new_sp = liq * sp / (liq + remaining * sp)
                out_total += liq * (sp - new_sp)
                net_spent = net_budget
                sp = new_sp
                stopped_mid_range = True
            else:
                out_total += liq * (sp - boundary)
                net_spent += step_max
                sp = boundary
                liq -= table[boundary_tick]
                tick = boundary_tick - 1
                crossed.append(boundary_tick)
        else:
            step_max = liq * (boundary - sp)
            if remaining < step_max:
                new_sp = sp + remaining / liq
                out_total += liq * (new_sp - sp) / (sp * new_sp)
                net_spent = net_budget
                sp = new_sp
                stopped_mid_range = True
            else:
                out_total += liq * (boundary - sp) / (sp * boundary)
                net_spent += step_max
                sp = boundary
                liq += table[boundary_tick]
                tick = boundary_tick
                crossed.append(boundary_tick)
        if liq < 0:
            raise DomainError("tick table produced negative liquidity")

    saturated = net_spent < net_budget
    if saturated and out_total == 0 and amount_in > 0:
        raise InsufficientLiquidity(
            "zero active liquidity and no reachable initialized tick"
        )
    gross = amount_in if not saturated else net_spent / (1 - fee)
    fee_paid = gross - net_spent
    if stopped_mid_range:
        tick = tick_containing(sp)
    elif not crossed:
        tick = pool.current_tick

    fill = SwapFill(
        amount_in=gross,
        amount_out=out_total,
        fee_paid=fee_paid,
        end_sqrt_price=sp,
        ticks_crossed=tuple(crossed),
        avg_price=(gross / out_total) if out_total > 0 else None,
        saturated=saturated,
    )
    new_state = PoolState(
        fee_bps=pool.fee_bps,
        tick_spacing=pool.tick_spacing,
        sqrt_price=sp,
        active_liquidity=liq,
        tick_table=pool.tick_table,
        current_tick=tick,
        positions=pool.positions,
    )
    return fill, new_state


def swap_exact_out(
    pool: PoolState,
    direction: Direction,
    amount_out: Fraction | int | str,
    *,
    saturate: bool = False,
) -> tuple[SwapFill, PoolState]:
    """Buy exactly `amount_out` of the output token.

    Raises InsufficientLiquidity when the pool cannot deliver the requested
    amount; with saturate=True (replay contexts) it delivers what it can and
    flags the fill instead.
    """
    amount_out = as_fraction(amount_out)
    if amount_out < 0:
        raise DomainError("amount_out must be nonnegative")
    fee = Fraction(pool.fee_bps, 10_000)

    sp = pool.sqrt_price
    liq = pool.active_liquidity
    tick = pool.current_tick
    ticks = sorted(pool.tick_table)
    table = pool.tick_table
    down = direction.zero_for_one

    out_remaining = amount_out
    net_in = Fraction(0)
    crossed: list[int] = []
    stopped_mid_range = False

    while out_remaining > 0:
        boundary_tick = (
            _next_tick_down(ticks, tick) if down else _next_tick_up(ticks, tick)
        )
        if boundary_tick is None:
            break
        boundary = sqrt_ratio_at_tick(boundary_tick)
        if liq == 0:
            sp = boundary
            if down:
                liq -= table[boundary_tick]
                tick = boundary_tick - 1
            else:
                liq += table[boundary_tick]
                tick = boundary_tick
            crossed.append(boundary_tick)
            continue

        if down:
            step_out = liq * (sp - boundary)  # token1 available in range
            if out_remaining < step_out:
                new_sp = sp - out_remaining / liq
                net_in += liq * (ONE / new_sp - ONE / sp)
                sp = new_sp
                out_remaining = Fraction(0)
                stopped_mid_range = True
            else:
                net_in += liq * (ONE / boundary - ONE / sp)
                out_remaining -= step_out
                sp = boundary
                liq -= table[boundary_tick]
                tick = boundary_tick - 1
                crossed.append(boundary_tick)
        else:
            step_out = liq * (boundary - sp) / (sp * boundary)  # token0 in range
            if out_remaining < step_out:
                # solve L*(1/sp - 1/new_sp) = out  =>  new_sp = L*sp/(L - out*sp)
                new_sp = liq * sp / (liq - out_remaining * sp)
                net_in += liq * (new_sp - sp)
                sp = new_sp
                out_remaining = Fraction(0)
                stopped_mid_range = True
            else:
                net_in += liq * (boundary - sp)
                out_remaining -= step_out
                sp = boundary
                liq += table[boundary_tick]
                tick = boundary_tick
                crossed.append(boundary_tick)
        if liq < 0:
            raise DomainError("tick table produced negative liquidity")

    if out_remaining > 0 and not saturate:
        raise InsufficientLiquidity(
            f"pool can deliver only {amount_out - out_remaining} of {amount_out}"
        )
    delivered = amount_out - out_remaining
    if delivered == 0 and amount_out > 0:
        raise InsufficientLiquidity(
            "zero active liquidity and no reachable initialized tick"
        )
    gross = net_in / (1 - fee)
    fee_paid = gross - net_in
    if stopped_mid_range:
        tick = tick_containing(sp)
    elif not crossed:
        tick = pool.current_tick

    fill = SwapFill(
        amount_in=gross,
        amount_out=delivered,
        fee_paid=fee_paid,
        end_sqrt_price=sp,
        ticks_crossed=tuple(crossed),
        avg_price=(gross / delivered) if delivered > 0 else None,
        saturated=out_remaining > 0,
    )
    new_state = PoolState(
        fee_bps=pool.fee_bps,
        tick_spacing=pool.tick_spacing,
        sqrt_price=sp,
        active_liquidity=liq,
        tick_table=pool.tick_table,
        current_tick=tick,
        positions=pool.positions,
    )
    return fill, new_state


def execute_trade(
    pool: PoolState, trade: TradeIntent, *, saturate: bool = False
) -> tuple[SwapFill, PoolState]:
    """Run a TradeIntent against a snapshot."""
    if trade.kind == EXACT_IN:
        return swap_exact_in(pool, trade.direction, trade.amount)
    return swap_exact_out(pool, trade.direction, trade.amount, saturate=saturate)


def quote(pool: PoolState, trade: TradeIntent, quote_block: int | None = None) -> Quote:
    """Hypothetical average execution price of `trade` on this snapshot.

    The total markup of quoted price over the direction-adjusted mid splits
    into the LP fee share (the pool fee tier) and price impact (the rest).
    """
    fill, _ = execute_trade(pool, trade)
    if fill.saturated or fill.avg_price is None:
        raise InsufficientLiquidity("quote requested beyond available depth")
    mid = pool.spot_price()
    # mid in input-per-output units for this direction
    mid_for_trade = ONE / mid if trade.direction.zero_for_one else mid
    total_markup_bps = (fill.avg_price / mid_for_trade - 1) * 10_000
    lp_fee_bps = Fraction(pool.fee_bps)
    return Quote(
        quoted_price=fill.avg_price,
        mid_price=mid,
        price_impact_bps=total_markup_bps - lp_fee_bps,
        lp_fee_bps=lp_fee_bps,
        quote_block=quote_block,
    )


def input_to_reach_sqrt(pool: PoolState, target_sqrt: Fraction) -> tuple[Fraction, bool]:
    """Net input (fee excluded) moving the spot to target_sqrt; (amount, saturated).

    Direction is implied by the sign of target_sqrt - sqrt_price.
    """
    if target_sqrt <= 0:
        raise DomainError("target sqrt price must be positive")
    sp = pool.sqrt_price
    if target_sqrt == sp:
        return Fraction(0), False
    down = target_sqrt < sp
    liq = pool.active_liquidity
    tick = pool.current_tick
    ticks = sorted(pool.tick_table)
    table = pool.tick_table
    needed = Fraction(0)

    while True:
        boundary_tick = (
            _next_tick_down(ticks, tick) if down else _next_tick_up(ticks, tick)
        )
        if boundary_tick is None:
            return needed, True
        boundary = sqrt_ratio_at_tick(boundary_tick)
        target_in_range = (boundary <= target_sqrt) if down else (boundary >= target_sqrt)
        stop = target_sqrt if target_in_range else boundary
        if liq > 0:
            if down:
                needed += liq * (ONE / stop - ONE / sp)
            else:
                needed += liq * (stop - sp)
        elif target_in_range:
            return needed, False  # price gap: target reached for free
        sp = stop
        if target_in_range:
            return needed, False
        if down:
            liq -= table[boundary_tick]
            tick = boundary_tick - 1
        else:
            liq += table[boundary_tick]
            tick = boundary_tick
        crossed_ok = liq >= 0
        if not crossed_ok:
            raise DomainError("tick table produced negative liquidity")


def liquidity_depth(
    pool: PoolState,
    direction: Direction,
    range_bps: int = 500,
    *,
    input_token_usd: Fraction | None = None,
) -> DepthResult:
    """Input quantity that moves the spot price range_bps in the swap direction.

    Selling token1 (price up) targets P*(1+range_bps/1e4); selling token0
    (price down) targets P/(1+range_bps/1e4).  When liquidity runs out before
    the target the consumable amount is returned with the saturation flag.
    """
    if range_bps <= 0:
        raise DomainError("range_bps must be positive")
    factor = 1 + Fraction(range_bps, 10_000)
    root = approx_sqrt(factor)
    target = pool.sqrt_price / root if direction.zero_for_one else pool.sqrt_price * root
    amount, saturated = input_to_reach_sqrt(pool, target)
    usd = amount * input_token_usd if input_token_usd is not None else None
    return DepthResult(amount=amount, usd=usd, saturated=saturated)


def reconstruct_state(
    initial: PoolState, events: Sequence[PoolEvent], block_height: int
) -> PoolState:
    """Left fold of the event log onto `initial`, up to but excluding block_height.

    Events must be ordered by (block, log_index); an out-of-order or
    unreplayable event raises SchemaError.
    """
    pool = initial
    last_key: tuple[int, int] | None = None
    for event in events:
        key = (event.block, event.log_index)
        if last_key is not None and key <= last_key:
            raise SchemaError(f"event log out of order at block {key[0]} log {key[1]}")
        last_key = key
        if event.block >= block_height:
            continue
        action = event.action
        if isinstance(action, TradeIntent):
            fill, pool = execute_trade(pool, action)
            if fill.saturated:
                raise SchemaError(
                    f"event log replays beyond pool depth at block {key[0]} log {key[1]}"
                )
        elif isinstance(action, LiquidityDelta):
            pool = apply_liquidity_event(
                pool, action.kind, action.lower_tick, action.upper_tick, action.liquidity
            )
        else:
            raise SchemaError(f"unknown event action {action!r}")
    return pool
