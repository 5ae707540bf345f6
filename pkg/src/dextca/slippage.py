"""Slippage measurement and per-swap decomposition.

Slippage of a swap is the relative gap between realized and quoted average
execution price, in basis points, signed so that a worse-than-quoted price is
negative: ``-(realized/quoted - 1) * 1e4``.

Reordering slippage replaces the quoted price with the expected hypothetical
price of the trade over uniformly random permutations of the block's realized
trades (optionally including liquidity events), replayed unconditionally from
the top-of-block state.

The decomposition chains four price points - quoted, collision (top-of-block
state plus non-adversarial preceding trades), realized-without-liquidity
(full trade prefix, liquidity events stripped), and realized - so the
per-component slippages multiply back to the total exactly:
(1 - total/1e4) = (1 - collision/1e4)(1 - adversarial/1e4)(1 - liquidity/1e4).
The additive residual of that chain is reported separately.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import sqrt
from typing import Sequence, Union

from .amm import PoolState, apply_liquidity_event, execute_trade, swap_exact_in
from .chain import (
    FAILED_TOLERANCE,
    SUCCEEDED,
    BlockRecord,
    LiquidityEvent,
    SwapTx,
    TradeRecord,
    trades_of,
)
from .errors import DomainError, MissingField, ModeError
from .numerics import SplitMix64

EXACT = "exact"
SAMPLED = "sampled"

ReplayItem = Union[TradeRecord, LiquidityEvent]

_FACT = [1]
for _i in range(1, 21):
    _FACT.append(_FACT[-1] * _i)


def slippage(quoted_price: Fraction, realized_price: Fraction) -> Fraction:
    """Definition-level slippage in bps; positive means price improvement."""
    if quoted_price <= 0 or realized_price <= 0:
        raise DomainError("prices must be positive")
    return -(realized_price / quoted_price - 1) * 10_000


def replay_items(block: BlockRecord, include_liquidity_events: bool) -> list[ReplayItem]:
    """The block's replayable items in recorded order.

    Realized trades of succeeded swaps always; liquidity events optionally.
    Failed swaps never replay (they left no trade).
    """
    items: list[ReplayItem] = []
    for position, tx in enumerate(block.txs):
        if isinstance(tx, SwapTx):
            if tx.status == SUCCEEDED:
                items.append(tx.record)
        elif include_liquidity_events:
            items.append(tx)
    return items


def _execute_item(pool: PoolState, item: ReplayItem) -> tuple[Fraction | None, PoolState]:
    """Unconditional replay of one item; returns (avg price or None, new state).

    Trades replay as exact-in of the recorded gross input and may saturate;
    burns clamp to the accounted balance (a permutation can move a burn ahead
    of its mint).
    """
    if isinstance(item, TradeRecord):
        fill, pool = swap_exact_in(pool, item.direction, item.amount_in)
        return fill.avg_price, pool
    pool = apply_liquidity_event(
        pool, item.kind, item.lower_tick, item.upper_tick, item.liquidity, clamp=True
    )
    return None, pool


class ReplayCache:
    """Memoizes pool states by executed item-index prefix within one block."""

    def __init__(self, initial: PoolState, items: Sequence[ReplayItem]):
        self.items = list(items)
        self._states: dict[tuple[int, ...], PoolState] = {(): initial}

    def state_after(self, prefix: tuple[int, ...]) -> PoolState:
        state = self._states.get(prefix)
        if state is not None:
            return state
        # extend from the longest cached ancestor
        k = len(prefix) - 1
        while k > 0 and prefix[:k] not in self._states:
            k -= 1
        state = self._states[prefix[:k]]
        for j in range(k, len(prefix)):
            _, state = _execute_item(state, self.items[prefix[j]])
            self._states[prefix[: j + 1]] = state
        return state


def hypothetical_price(
    initial_pool: PoolState, ordered_items: Sequence[ReplayItem], index: int
) -> Fraction:
    """Average execution price of trade `index` after replaying its predecessors.

    Items before `index` execute unconditionally from the top-of-block state;
    the target must be a trade.
    """
    target = ordered_items[index]
    if not isinstance(target, TradeRecord):
        raise DomainError("hypothetical price target must be a trade")
    pool = initial_pool
    for item in ordered_items[:index]:
        _, pool = _execute_item(pool, item)
    price, _ = _execute_item(pool, target)
    if price is None:
        raise DomainError("trade produced no output; price undefined")
    return price


def _exact_expected_prices(
    initial_pool: PoolState, items: Sequence[ReplayItem], targets: set[int]
) -> dict[int, Fraction]:
    """E[hypothetical price] over all len(items)! orderings, per target index.

    Walks the permutation prefix tree once; placing item j after a prefix of
    depth d accounts for (n-d-1)! full orderings, so each target's prices are
    accumulated with those weights and normalized by n! at the end.
    """
    n = len(items)
    sums = {t: Fraction(0) for t in targets}

    def visit(pool: PoolState, remaining: tuple[int, ...]) -> None:
        weight = _FACT[len(remaining) - 1]
        for pick in range(len(remaining)):
            idx = remaining[pick]
            price, state = _execute_item(pool, items[idx])
            if idx in sums:
                if price is None:
                    raise DomainError("trade produced no output; price undefined")
                sums[idx] += weight * price
            rest = remaining[:pick] + remaining[pick + 1 :]
            # prune once every target has been placed in the prefix
            if rest and any(r in sums for r in rest):
                visit(state, rest)

    visit(initial_pool, tuple(range(n)))
    return {t: s / _FACT[n] for t, s in sums.items()}


@dataclass(frozen=True)
class ReorderingEstimate:
    """Reordering slippage of one trade plus estimator diagnostics."""

    bps: Fraction
    mode: str
    n_permutations: int
    expected_price: Fraction
    realized_price: Fraction
    sample_se_bps: float | None = None


def _sampled_expected_price(
    cache: ReplayCache,
    target_index: int,
    n_samples: int,
    rng: SplitMix64,
) -> tuple[Fraction, list[Fraction]]:
    n = len(cache.items)
    prices: list[Fraction] = []
    price_by_prefix: dict[tuple[int, ...], Fraction] = {}
    for _ in range(n_samples):
        perm = rng.permutation(n)
        pos = perm.index(target_index)
        prefix = perm[:pos]
        price = price_by_prefix.get(prefix)
        if price is None:
            state = cache.state_after(prefix)
            price, _ = _execute_item(state, cache.items[target_index])
            if price is None:
                raise DomainError("trade produced no output; price undefined")
            price_by_prefix[prefix] = price
        prices.append(price)
    expected = sum(prices, Fraction(0)) / len(prices)
    return expected, prices


def reordering_estimate(
    block: BlockRecord,
    trade_index: int,
    mode: str = EXACT,
    *,
    n_samples: int = 16,
    seed: int = 0,
    exact_threshold: int = 7,
    include_liquidity_events: bool = False,
    _cache: ReplayCache | None = None,
    _exact_table: dict[int, Fraction] | None = None,
) -> ReorderingEstimate:
    """Reordering slippage of the block's trade_index-th realized trade.

    Exact mode enumerates all orderings (refused above exact_threshold items);
    sampled mode averages n_samples orderings drawn from a generator seeded by
    (seed, block height, the trade's transaction slot).
    """
    trades = trades_of(block)
    if not 0 <= trade_index < len(trades):
        raise DomainError(f"block has no trade index {trade_index}")
    target = trades[trade_index]
    items = replay_items(block, include_liquidity_events)
    target_item = items.index(target)
    realized = target.realized_price

    if mode == EXACT:
        if len(items) > exact_threshold:
            raise ModeError(
                f"exact mode refused for {len(items)} items (threshold {exact_threshold})"
            )
        if _exact_table is not None and target_item in _exact_table:
            expected = _exact_table[target_item]
        else:
            expected = _exact_expected_prices(
                block.initial_pool, items, {target_item}
            )[target_item]
        return ReorderingEstimate(
            bps=slippage(expected, realized),
            mode=EXACT,
            n_permutations=_FACT[len(items)],
            expected_price=expected,
            realized_price=realized,
        )
    if mode == SAMPLED:
        if n_samples < 1:
            raise ModeError("sampled mode needs n_samples >= 1")
        cache = _cache if _cache is not None else ReplayCache(block.initial_pool, items)
        rng = SplitMix64(seed, block.height, target.intra_block_index)
        expected, prices = _sampled_expected_price(cache, target_item, n_samples, rng)
        se = None
        if len(prices) > 1:
            mean_f = float(expected)
            var = sum((float(p) - mean_f) ** 2 for p in prices) / (len(prices) - 1)
            se_price = sqrt(var / len(prices))
            se = 10_000.0 * float(realized) * se_price / (mean_f * mean_f)
        return ReorderingEstimate(
            bps=slippage(expected, realized),
            mode=SAMPLED,
            n_permutations=len(prices),
            expected_price=expected,
            realized_price=realized,
            sample_se_bps=se,
        )
    raise ModeError(f"unknown reordering mode {mode!r}")


def reordering_slippage(
    block: BlockRecord,
    trade_index: int,
    mode: str = EXACT,
    *,
    n_samples: int = 16,
    seed: int = 0,
    exact_threshold: int = 7,
    include_liquidity_events: bool = False,
) -> Fraction:
    """Reordering slippage in bps (see reordering_estimate for diagnostics)."""
    return reordering_estimate(
        block,
        trade_index,
        mode,
        n_samples=n_samples,
        seed=seed,
        exact_threshold=exact_threshold,
        include_liquidity_events=include_liquidity_events,
    ).bps


def classify_adversarial(block: BlockRecord, swap_position: int) -> tuple[bool, ...]:
    """Adversarial flags for the realized trades preceding a swap in its block.

    A preceding trade is adversarial when it executed within one of the two
    transactions immediately before the swap and its parent transaction was
    private (never seen in the public mempool).
    """
    if not 0 <= swap_position < len(block.txs):
        raise DomainError(f"block has no transaction slot {swap_position}")
    window = {swap_position - 1, swap_position - 2}
    flags: list[bool] = []
    for position in range(swap_position):
        tx = block.txs[position]
        if isinstance(tx, SwapTx) and tx.status == SUCCEEDED:
            flags.append(position in window and not tx.is_public)
    return tuple(flags)


def _locate(block: BlockRecord, swap: SwapTx) -> int:
    for position, tx in enumerate(block.txs):
        if (
            isinstance(tx, SwapTx)
            and tx.tx_hash == swap.tx_hash
            and tx.log_index == swap.log_index
        ):
            return position
    raise DomainError(f"swap {swap.tx_hash}:{swap.log_index} not in block {block.height}")


def _preceding_trades(block: BlockRecord, swap_position: int) -> list[TradeRecord]:
    records = []
    for tx in block.txs[:swap_position]:
        if isinstance(tx, SwapTx) and tx.status == SUCCEEDED:
            records.append(tx.record)
    return records


def _target_price(pool: PoolState, swap: SwapTx) -> Fraction:
    """Execute the swap's own trade on `pool` and return its average price.

    Succeeded swaps replay as exact-in of the recorded gross input; failed
    swaps execute their intent unconditionally (saturating if needed).
    """
    if swap.status == SUCCEEDED:
        fill, _ = swap_exact_in(pool, swap.trade.direction, swap.record.amount_in)
    else:
        fill, _ = execute_trade(pool, swap.trade, saturate=True)
    if fill.avg_price is None:
        raise DomainError("swap produced no output; price undefined")
    return fill.avg_price


def simulate_failed_swap(block: BlockRecord, swap: SwapTx) -> Fraction:
    """Hypothetical average execution price of a tolerance-failed swap.

    Replays the block prefix (trades and liquidity events in recorded order),
    then executes the swap's trade unconditionally at its recorded slot.
    """
    if swap.status != FAILED_TOLERANCE:
        raise DomainError("simulate_failed_swap requires status failed_tolerance")
    position = _locate(block, swap)
    pool = block.initial_pool
    for tx in block.txs[:position]:
        if isinstance(tx, SwapTx):
            if tx.status == SUCCEEDED:
                _, pool = _execute_item(pool, tx.record)
        else:
            _, pool = _execute_item(pool, tx)
    return _target_price(pool, swap)


@dataclass(frozen=True)
class SlippageDecomposition:
    """Per-swap slippage taxonomy in bps.

    labels are the adversarial flags of the preceding realized trades; mode
    records how reordering_bps was estimated.  residual_bps is the gap of the
    additive approximation total ~ adversarial + collision + liquidity.
    """

    total_bps: Fraction
    adversarial_bps: Fraction
    collision_bps: Fraction
    liquidity_bps: Fraction
    top_of_block_bps: Fraction
    reordering_bps: Fraction
    residual_bps: Fraction
    labels: tuple[bool, ...]
    mode: str


def decompose(
    block: BlockRecord,
    swap: SwapTx,
    *,
    reordering_mode: str = "auto",
    n_samples: int = 16,
    seed: int = 0,
    exact_threshold: int = 7,
    include_liquidity_events: bool = False,
    simulate_failed: bool = True,
    _cache: ReplayCache | None = None,
    _exact_table: dict[int, Fraction] | None = None,
) -> SlippageDecomposition:
    """Full slippage decomposition of one swap within its block."""
    if swap.quote is None:
        raise MissingField(f"swap {swap.tx_hash}:{swap.log_index} has no quote")
    if swap.status == FAILED_TOLERANCE and not simulate_failed:
        raise DomainError("failed swap passed with failed-swap simulation disabled")
    if swap.status not in (SUCCEEDED, FAILED_TOLERANCE):
        raise DomainError("decompose requires a succeeded or tolerance-failed swap")

    position = _locate(block, swap)
    quoted = swap.quote.quoted_price

    if swap.status == SUCCEEDED:
        realized = swap.record.realized_price
    else:
        realized = simulate_failed_swap(block, swap)

    labels = classify_adversarial(block, position)
    preceding = _preceding_trades(block, position)

    pool_nl = block.initial_pool
    for record in preceding:
        _, pool_nl = _execute_item(pool_nl, record)
    price_no_liquidity = _target_price(pool_nl, swap)

    pool_c = block.initial_pool
    for record, adversarial in zip(preceding, labels):
        if not adversarial:
            _, pool_c = _execute_item(pool_c, record)
    price_collision = _target_price(pool_c, swap)

    price_top = _target_price(block.initial_pool, swap)

    total = slippage(quoted, realized)
    collision_bps = slippage(quoted, price_collision)
    adversarial_bps = slippage(price_collision, price_no_liquidity)
    liquidity_bps = slippage(price_no_liquidity, realized)
    top_bps = slippage(quoted, price_top)
    residual = total - (adversarial_bps + collision_bps + liquidity_bps)

    reordering = _reordering_for_swap(
        block,
        swap,
        position,
        reordering_mode,
        n_samples=n_samples,
        seed=seed,
        exact_threshold=exact_threshold,
        include_liquidity_events=include_liquidity_events,
        _cache=_cache,
        _exact_table=_exact_table,
    )

    return SlippageDecomposition(
        total_bps=total,
        adversarial_bps=adversarial_bps,
        collision_bps=collision_bps,
        liquidity_bps=liquidity_bps,
        top_of_block_bps=top_bps,
        reordering_bps=reordering.bps,
        residual_bps=residual,
        labels=labels,
        mode=reordering.mode,
    )


def _reordering_for_swap(
    block: BlockRecord,
    swap: SwapTx,
    position: int,
    mode: str,
    *,
    n_samples: int,
    seed: int,
    exact_threshold: int,
    include_liquidity_events: bool,
    _cache: ReplayCache | None,
    _exact_table: dict[int, Fraction] | None,
) -> ReorderingEstimate:
    """Reordering estimate for a swap, simulating failed swaps into the item set."""
    if swap.status == SUCCEEDED:
        trades = trades_of(block)
        trade_index = trades.index(swap.record)
        items = replay_items(block, include_liquidity_events)
        resolved = _resolve_mode(mode, len(items), exact_threshold)
        return reordering_estimate(
            block,
            trade_index,
            resolved,
            n_samples=n_samples,
            seed=seed,
            exact_threshold=exact_threshold,
            include_liquidity_events=include_liquidity_events,
            _cache=_cache,
            _exact_table=_exact_table,
        )
    # Failed swap: payload is the simulated trade, inserted at its block slot.
    realized = simulate_failed_swap(block, swap)
    sim_pool = block.initial_pool
    for tx in block.txs[:position]:
        if isinstance(tx, SwapTx):
            if tx.status == SUCCEEDED:
                _, sim_pool = _execute_item(sim_pool, tx.record)
        else:
            _, sim_pool = _execute_item(sim_pool, tx)
    if swap.status == SUCCEEDED:
        raise AssertionError("unreachable")
    sim_fill, _ = execute_trade(sim_pool, swap.trade, saturate=True)
    synthetic = TradeRecord(
        tx_hash=swap.tx_hash,
        log_index=swap.log_index,
        direction=swap.trade.direction,
        amount_in=sim_fill.amount_in,
        amount_out=sim_fill.amount_out,
        block=block.height,
        intra_block_index=position,
    )
    items = replay_items(block, include_liquidity_events)
    insert_at = sum(1 for item in items if item.intra_block_index < position)
    items = items[:insert_at] + [synthetic] + items[insert_at:]
    resolved = _resolve_mode(mode, len(items), exact_threshold)
    if resolved == EXACT:
        expected = _exact_expected_prices(block.initial_pool, items, {insert_at})[insert_at]
        return ReorderingEstimate(
            bps=slippage(expected, realized),
            mode=EXACT,
            n_permutations=_FACT[len(items)],
            expected_price=expected,
            realized_price=realized,
        )
    cache = ReplayCache(block.initial_pool, items)
    rng = SplitMix64(seed, block.height, position)
    expected, prices = _sampled_expected_price(cache, insert_at, n_samples, rng)
    return ReorderingEstimate(
        bps=slippage(expected, realized),
        mode=SAMPLED,
        n_permutations=len(prices),
        expected_price=expected,
        realized_price=realized,
    )


def _resolve_mode(mode: str, n_items: int, exact_threshold: int) -> str:
    if mode == "auto":
        return EXACT if n_items <= exact_threshold else SAMPLED
    if mode not in (EXACT, SAMPLED):
        raise ModeError(f"unknown reordering mode {mode!r}")
    return mode
