"""End-to-end analysis runs: decompose every swap, price the costs, aggregate.

A run walks each block (optionally in parallel worker processes, which never
changes the output bytes), decomposes every quoted swap, prices its cost
components, and writes deterministic CSV/JSON artifacts plus a run report
with row counts and file checksums.  Regressions are built on the same
per-swap rows but write separate artifacts, since their float math is not
byte-stable across BLAS builds.
"""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

from .amm import PoolState, liquidity_depth
from .chain import (
    FAILED_OTHER,
    FAILED_TOLERANCE,
    SUCCEEDED,
    BlockRecord,
    SwapTx,
    TradeRecord,
    confirmation_seconds,
)
from .costs import (
    CostBreakdown,
    LatencyFillStats,
    breakdown,
    bucket_aggregate,
    bucket_of,
    latency_fill_stats,
    render_usd_bps,
)
from .dataset import Dataset
from .econometrics import (
    LogitResult,
    MinuteSeries,
    OLSResult,
    SwapObservation,
    build_design,
    build_logit_design,
    logit_fit,
    ols_fe,
)
from .errors import EmptyInput, MissingField, ModeError, SchemaError
from .serde import enc
from .slippage import (
    ReplayCache,
    SlippageDecomposition,
    _exact_expected_prices,
    decompose,
    replay_items,
)

FORMATS = ("csv", "json", "both")


@dataclass(frozen=True)
class AnalysisConfig:
    """Run parameters; the JSON form uses the same field names."""

    seed: int = 0
    exact_threshold: int = 7
    n_samples: int = 16
    include_liquidity_events: bool = False
    simulate_failed: bool = True
    bucket_thresholds: tuple[Fraction, Fraction] = (Fraction(1000), Fraction(100_000))
    threshold_usd: Fraction = Fraction(5)
    depth_range_bps: Fraction = Fraction(500)
    fixed_effects: str = "week"
    workers: int = 1


def config_to_dict(config: AnalysisConfig) -> dict:
    return {
        "seed": config.seed,
        "exact_threshold": config.exact_threshold,
        "n_samples": config.n_samples,
        "include_liquidity_events": config.include_liquidity_events,
        "simulate_failed": config.simulate_failed,
        "bucket_thresholds": [str(t) for t in config.bucket_thresholds],
        "threshold_usd": str(config.threshold_usd),
        "depth_range_bps": str(config.depth_range_bps),
        "fixed_effects": config.fixed_effects,
        "workers": config.workers,
    }


def config_from_dict(raw: Mapping[str, object]) -> AnalysisConfig:
    defaults = AnalysisConfig()
    known = set(config_to_dict(defaults))
    unknown = set(raw) - known
    if unknown:
        raise SchemaError(f"unknown config keys: {', '.join(sorted(unknown))}")
    try:
        thresholds = raw.get("bucket_thresholds")
        return AnalysisConfig(
            seed=int(raw.get("seed", defaults.seed)),
            exact_threshold=int(raw.get("exact_threshold", defaults.exact_threshold)),
            n_samples=int(raw.get("n_samples", defaults.n_samples)),
            include_liquidity_events=bool(
                raw.get("include_liquidity_events", defaults.include_liquidity_events)
            ),
            simulate_failed=bool(raw.get("simulate_failed", defaults.simulate_failed)),
            bucket_thresholds=(
                (Fraction(str(thresholds[0])), Fraction(str(thresholds[1])))
                if thresholds is not None
                else defaults.bucket_thresholds
            ),
            threshold_usd=Fraction(str(raw.get("threshold_usd", defaults.threshold_usd))),
            depth_range_bps=Fraction(str(raw.get("depth_range_bps", defaults.depth_range_bps))),
            fixed_effects=str(raw.get("fixed_effects", defaults.fixed_effects)),
            workers=int(raw.get("workers", defaults.workers)),
        )
    except (TypeError, ValueError, IndexError) as err:
        raise SchemaError(f"malformed config: {err}") from None


def load_config(path: str | Path) -> AnalysisConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise SchemaError(f"config is not valid JSON: {err}") from None
    if not isinstance(raw, dict):
        raise SchemaError("config must be a JSON object")
    return config_from_dict(raw)


@dataclass(frozen=True)
class SwapRow:
    """One decomposed swap: taxonomy, costs, and regression inputs."""

    block_height: int
    intra_block_index: int
    swap: SwapTx
    decomposition: SlippageDecomposition
    costs: CostBreakdown
    observation: SwapObservation


@dataclass(frozen=True)
class BlockOutcome:
    height: int
    rows: tuple[SwapRow, ...]
    n_swaps: int
    n_skipped_no_quote: int
    n_failed_other: int
    n_simulated: int


def _depth_usd(
    pool: PoolState, swap: SwapTx, range_bps: Fraction, stable_side: int
) -> Fraction:
    """Input-side depth at range_bps, valued in USD at the pool mid."""
    result = liquidity_depth(pool, swap.trade.direction, range_bps)
    mid = pool.spot_price()  # token1 per token0
    input_is_token0 = swap.trade.direction.zero_for_one
    if stable_side == 1:
        return result.amount * mid if input_is_token0 else result.amount
    return result.amount if input_is_token0 else result.amount / mid


def analyze_block(
    block: BlockRecord,
    *,
    eth_usd: Fraction,
    stable_side: int,
    config: AnalysisConfig,
    series: MinuteSeries | None,
) -> BlockOutcome:
    """Decompose and price every analyzable swap in one block."""
    rows: list[SwapRow] = []
    n_swaps = n_no_quote = n_failed_other = n_simulated = 0
    items = replay_items(block, config.include_liquidity_events)
    exact_table = None
    cache = None
    if items and len(items) <= config.exact_threshold:
        targets = {i for i, item in enumerate(items) if isinstance(item, TradeRecord)}
        if targets:
            exact_table = _exact_expected_prices(block.initial_pool, items, targets)
    elif items:
        cache = ReplayCache(block.initial_pool, items)
    for position, tx in enumerate(block.txs):
        if not isinstance(tx, SwapTx):
            continue
        n_swaps += 1
        if tx.quote is None:
            n_no_quote += 1
            continue
        if tx.status == FAILED_OTHER:
            n_failed_other += 1
            continue
        if tx.status == FAILED_TOLERANCE:
            if not config.simulate_failed:
                continue
            n_simulated += 1
        dec = decompose(
            block,
            tx,
            reordering_mode="auto",
            n_samples=config.n_samples,
            seed=config.seed,
            exact_threshold=config.exact_threshold,
            include_liquidity_events=config.include_liquidity_events,
            simulate_failed=config.simulate_failed,
            _cache=cache,
            _exact_table=exact_table,
        )
        cost = breakdown(tx, dec, eth_usd, stable_side=stable_side)
        latency = None
        if tx.sign_time is not None:
            latency = float(confirmation_seconds(tx, block))
        ret = vol = None
        if series is not None:
            try:
                ret = series.last_hour_return_bps(block.timestamp)
                vol = series.volatility_bps(block.timestamp)
            except MissingField:
                ret = vol = None
        observation = SwapObservation(
            tx_hash=tx.tx_hash,
            log_index=tx.log_index,
            block_height=block.height,
            timestamp=block.timestamp,
            direction=tx.trade.direction,
            is_public=tx.is_public,
            builder=block.builder,
            succeeded=tx.status == SUCCEEDED,
            order_size_usd=cost.order_size_usd,
            gas_price_wei=tx.gas_price_wei,
            eth_usd=eth_usd,
            latency_seconds=latency,
            tolerance_bps=tx.slippage_tolerance_bps,
            depth_usd=_depth_usd(
                block.initial_pool, tx, config.depth_range_bps, stable_side
            ),
            last_hour_return_bps=ret,
            volatility_bps=vol,
            components_bps={
                "total": dec.total_bps,
                "adversarial": dec.adversarial_bps,
                "collision": dec.collision_bps,
                "liquidity": dec.liquidity_bps,
                "reordering": dec.reordering_bps,
                "top_of_block": dec.top_of_block_bps,
            },
        )
        rows.append(
            SwapRow(
                block_height=block.height,
                intra_block_index=position,
                swap=tx,
                decomposition=dec,
                costs=cost,
                observation=observation,
            )
        )
    return BlockOutcome(
        height=block.height,
        rows=tuple(rows),
        n_swaps=n_swaps,
        n_skipped_no_quote=n_no_quote,
        n_failed_other=n_failed_other,
        n_simulated=n_simulated,
    )


def _series_of(dataset: Dataset) -> MinuteSeries | None:
    if not dataset.minute_prices:
        return None
    return MinuteSeries(
        timestamps=tuple(ts for ts, _ in dataset.minute_prices),
        prices=tuple(float(p) for _, p in dataset.minute_prices),
    )


def _block_task(args: tuple) -> BlockOutcome:
    block, eth_usd, stable_side, config, series = args
    return analyze_block(
        block, eth_usd=eth_usd, stable_side=stable_side, config=config, series=series
    )


def collect_rows(dataset: Dataset, config: AnalysisConfig) -> list[BlockOutcome]:
    """Analyze every block, in workers if configured; output order is by height."""
    series = _series_of(dataset)
    tasks = []
    for block in dataset.blocks:
        price = dataset.eth_usd.get(block.height)
        if price is None:
            raise MissingField(f"no eth_usd price for block {block.height}")
        tasks.append((block, price, dataset.stable_side, config, series))
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_block_task, tasks))
    else:
        outcomes = [_block_task(t) for t in tasks]
    return sorted(outcomes, key=lambda o: o.height)


DECOMPOSITION_COLUMNS = (
    "tx_hash",
    "log_index",
    "block",
    "intra_block_index",
    "status",
    "direction",
    "kind",
    "order_size_usd",
    "total_bps",
    "adversarial_bps",
    "collision_bps",
    "liquidity_bps",
    "top_of_block_bps",
    "reordering_bps",
    "residual_bps",
    "reordering_mode",
    "adversarial_labels",
)

COST_COLUMNS = (
    "tx_hash",
    "log_index",
    "block",
    "bucket",
    "order_size_usd",
    "gas_usd",
    "gas_bps",
    "lp_fee_usd",
    "lp_fee_bps",
    "price_impact_usd",
    "price_impact_bps",
    "slippage_usd",
    "slippage_bps",
    "total_usd",
    "total_bps",
)

BUCKET_COLUMNS = ("pair", "bucket", "count", "gas", "lp_fee", "price_impact", "slippage", "total")

BUCKET_LONG_COLUMNS = ("pair", "bucket", "component", "count", "mean_usd", "volume_weighted_bps")


def _decomposition_record(row: SwapRow) -> dict[str, str]:
    dec = row.decomposition
    return {
        "tx_hash": row.swap.tx_hash,
        "log_index": str(row.swap.log_index),
        "block": str(row.block_height),
        "intra_block_index": str(row.intra_block_index),
        "status": row.swap.status,
        "direction": row.swap.trade.direction.value,
        "kind": row.swap.trade.kind,
        "order_size_usd": enc(row.costs.order_size_usd),
        "total_bps": enc(dec.total_bps),
        "adversarial_bps": enc(dec.adversarial_bps),
        "collision_bps": enc(dec.collision_bps),
        "liquidity_bps": enc(dec.liquidity_bps),
        "top_of_block_bps": enc(dec.top_of_block_bps),
        "reordering_bps": enc(dec.reordering_bps),
        "residual_bps": enc(dec.residual_bps),
        "reordering_mode": dec.mode,
        "adversarial_labels": "".join("1" if f else "0" for f in dec.labels),
    }


def _cost_record(row: SwapRow, thresholds: tuple[Fraction, Fraction]) -> dict[str, str]:
    c = row.costs
    return {
        "tx_hash": row.swap.tx_hash,
        "log_index": str(row.swap.log_index),
        "block": str(row.block_height),
        "bucket": bucket_of(c.order_size_usd, thresholds),
        "order_size_usd": enc(c.order_size_usd),
        "gas_usd": enc(c.gas_usd),
        "gas_bps": enc(c.gas_bps),
        "lp_fee_usd": enc(c.lp_fee_usd),
        "lp_fee_bps": enc(c.lp_fee_bps),
        "price_impact_usd": enc(c.price_impact_usd),
        "price_impact_bps": enc(c.price_impact_bps),
        "slippage_usd": enc(c.slippage_usd),
        "slippage_bps": enc(c.slippage_bps),
        "total_usd": enc(c.total_usd),
        "total_bps": enc(c.total_bps),
    }


def _write_csv(path: Path, columns: tuple[str, ...], records: Sequence[Mapping[str, str]]):
    with path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(records)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass(frozen=True)
class PipelineResult:
    out_dir: str
    counts: Mapping[str, int]
    checksums: Mapping[str, str]
    rows: tuple[SwapRow, ...]
    latency: LatencyFillStats


def run_pipeline(
    dataset: Dataset,
    config: AnalysisConfig,
    out_dir: str | Path,
    fmt: str = "csv",
) -> PipelineResult:
    """Full deterministic analysis run writing artifacts under out_dir."""
    if fmt not in FORMATS:
        raise ModeError(f"unknown output format {fmt!r}")
    if not dataset.blocks:
        raise EmptyInput("dataset has no blocks")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    outcomes = collect_rows(dataset, config)
    rows = [row for outcome in outcomes for row in outcome.rows]
    counts = {
        "n_blocks": len(dataset.blocks),
        "n_swaps": sum(o.n_swaps for o in outcomes),
        "n_decomposed": len(rows),
        "n_skipped_no_quote": sum(o.n_skipped_no_quote for o in outcomes),
        "n_failed_other": sum(o.n_failed_other for o in outcomes),
        "n_simulated_failed": sum(o.n_simulated for o in outcomes),
    }

    dec_records = [_decomposition_record(r) for r in rows]
    cost_records = [_cost_record(r, config.bucket_thresholds) for r in rows]

    table = None
    if rows:
        table = bucket_aggregate(
            [r.costs for r in rows], pair=dataset.pair, thresholds=config.bucket_thresholds
        )

    stats = latency_fill_stats(dataset.blocks)

    written: dict[str, Path] = {}
    if fmt in ("csv", "both"):
        _write_csv(out / "decomposition.csv", DECOMPOSITION_COLUMNS, dec_records)
        written["decomposition.csv"] = out / "decomposition.csv"
        _write_csv(out / "costs.csv", COST_COLUMNS, cost_records)
        written["costs.csv"] = out / "costs.csv"
        if table is not None:
            compact = []
            for bucket in ("All", "Large", "Medium", "Small"):
                if table.counts.get(bucket, 0) == 0:
                    continue
                record: dict[str, str] = {
                    "pair": table.pair,
                    "bucket": bucket,
                    "count": str(table.counts[bucket]),
                }
                for component in ("gas", "lp_fee", "price_impact", "slippage", "total"):
                    cell = table.cell(bucket, component)
                    record[component] = render_usd_bps(cell.mean_usd, cell.volume_weighted_bps)
                compact.append(record)
            _write_csv(out / "buckets.csv", BUCKET_COLUMNS, compact)
            written["buckets.csv"] = out / "buckets.csv"
            long_records = [
                {
                    "pair": r["pair"],
                    "bucket": r["bucket"],
                    "component": r["component"],
                    "count": str(r["count"]),
                    "mean_usd": enc(r["mean_usd"]),
                    "volume_weighted_bps": enc(r["volume_weighted_bps"]),
                }
                for r in table.rows()
            ]
            _write_csv(out / "buckets_long.csv", BUCKET_LONG_COLUMNS, long_records)
            written["buckets_long.csv"] = out / "buckets_long.csv"
    if fmt in ("json", "both"):
        (out / "decomposition.json").write_text(_dump_records(dec_records))
        written["decomposition.json"] = out / "decomposition.json"
        (out / "costs.json").write_text(_dump_records(cost_records))
        written["costs.json"] = out / "costs.json"
        if table is not None:
            long_records = [
                {
                    "pair": r["pair"],
                    "bucket": r["bucket"],
                    "component": r["component"],
                    "count": r["count"],
                    "mean_usd": enc(r["mean_usd"]),
                    "volume_weighted_bps": enc(r["volume_weighted_bps"]),
                }
                for r in table.rows()
            ]
            (out / "buckets.json").write_text(_dump_records(long_records))
            written["buckets.json"] = out / "buckets.json"

    latency_doc = {
        "percentiles": {k: enc(v) for k, v in stats.percentiles.items()},
        "fail_rate": enc(stats.fail_rate),
        "n_swaps": stats.n_swaps,
        "n_failed": stats.n_failed,
        "n_with_latency": stats.n_with_latency,
    }
    (out / "latency.json").write_text(_dump_records(latency_doc))
    written["latency.json"] = out / "latency.json"

    checksums = {name: _sha256(path) for name, path in sorted(written.items())}
    report = {
        "config": config_to_dict(config),
        "pair": dataset.pair,
        "counts": counts,
        "checksums": checksums,
        "format": fmt,
    }
    (out / "run_report.json").write_text(_dump_records(report))

    return PipelineResult(
        out_dir=str(out),
        counts=counts,
        checksums=checksums,
        rows=tuple(rows),
        latency=stats,
    )


def _dump_records(document: object) -> str:
    return json.dumps(document, indent=2, sort_keys=True) + "\n"


def observations_of(dataset: Dataset, config: AnalysisConfig) -> list[SwapObservation]:
    return [row.observation for outcome in collect_rows(dataset, config) for row in outcome.rows]


@dataclass(frozen=True)
class RegressionOutput:
    outcome: str
    design_rows: int
    dropped: int
    ols: OLSResult | None
    logit: LogitResult | None


def run_regression(
    dataset: Dataset,
    config: AnalysisConfig,
    outcome: str,
    *,
    usd_outcome: bool = False,
    include_public_dummy: bool = False,
    model: str = "ols",
) -> RegressionOutput:
    """Fit the cost-determinants OLS or the adversarial-exposure logit."""
    observations = observations_of(dataset, config)
    if model == "ols":
        design = build_design(
            observations,
            outcome,
            fixed_effects=config.fixed_effects,
            usd_outcome=usd_outcome,
            include_public_dummy=include_public_dummy,
        )
        result = ols_fe(design)
        return RegressionOutput(
            outcome=outcome,
            design_rows=design.x.shape[0],
            dropped=design.n_dropped,
            ols=result,
            logit=None,
        )
    if model == "logit":
        design = build_logit_design(
            observations,
            threshold_usd=config.threshold_usd,
            include_public_dummy=include_public_dummy,
        )
        result = logit_fit(design)
        return RegressionOutput(
            outcome="adversarial_dummy",
            design_rows=design.x.shape[0],
            dropped=design.n_dropped,
            ols=None,
            logit=result,
        )
    raise ModeError(f"unknown model {model!r}")


def replay_to(dataset: Dataset, height: int) -> tuple[PoolState, PoolState]:
    """Pool state entering the block at `height` and after its transactions."""
    from .dataset import _advance

    block = dataset.block_at(height)
    return block.initial_pool, _advance(block.initial_pool, block.txs)
