"""HTTP service exposing the toolkit: pool math, decomposition, scenarios,
dataset analysis runs, and regressions.

Input-side failures (bad payloads, domain violations, malformed datasets) map
to 422 responses carrying the error class name; anything else is a 500.  The
dataset endpoints take filesystem paths, so the service is a local tool
server, not an internet-facing one.
"""

from __future__ import annotations

from fractions import Fraction

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..adversary import Scenario, gen_backrun, gen_collision_block, gen_jit, gen_sandwich
from ..amm import (
    Direction,
    execute_trade,
    liquidity_depth,
    quote as quote_pool,
)
from ..dataset import dataset_from_blocks, load_dataset, validate_dataset, write_dataset
from ..errors import ToolkitError, ValidationFailure
from ..numerics import parse_fixed
from ..pipeline import (
    AnalysisConfig,
    config_from_dict,
    config_to_dict,
    replay_to,
    run_pipeline,
    run_regression,
)
from ..serde import (
    block_from_dict,
    block_to_dict,
    enc,
    pool_from_dict,
    pool_to_dict,
    quote_to_dict,
    trade_from_dict,
)
from ..slippage import decompose
from . import schemas


def _jsonable(value: object) -> object:
    """Ground-truth payloads hold Fractions, enums, and tuples; flatten them."""
    if isinstance(value, Fraction):
        return enc(value)
    if isinstance(value, Direction):
        return value.value
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _decomposition_model(dec) -> schemas.DecompositionModel:
    return schemas.DecompositionModel(
        total_bps=enc(dec.total_bps),
        adversarial_bps=enc(dec.adversarial_bps),
        collision_bps=enc(dec.collision_bps),
        liquidity_bps=enc(dec.liquidity_bps),
        top_of_block_bps=enc(dec.top_of_block_bps),
        reordering_bps=enc(dec.reordering_bps),
        residual_bps=enc(dec.residual_bps),
        labels=list(dec.labels),
        mode=dec.mode,
    )


def _scenario_response(scenario: Scenario, out_dir: str | None) -> schemas.ScenarioResponse:
    dataset_dir = None
    if out_dir is not None:
        bundle = dataset_from_blocks([scenario.block], pair=f"scenario-{scenario.kind}")
        write_dataset(bundle, out_dir)
        dataset_dir = out_dir
    return schemas.ScenarioResponse(
        kind=scenario.kind,
        block=schemas.BlockModel.model_validate(block_to_dict(scenario.block)),
        ground_truth=_jsonable(dict(scenario.ground_truth)),
        dataset_dir=dataset_dir,
    )


def _merged_config(model: schemas.ConfigModel | None) -> AnalysisConfig:
    base = config_to_dict(AnalysisConfig())
    if model is not None:
        for key, value in model.model_dump(exclude_none=True).items():
            base[key] = value
    return config_from_dict(base)


def _find_swap(block, tx_hash: str, log_index: int):
    for tx in block.txs:
        if getattr(tx, "tx_hash", None) == tx_hash and getattr(tx, "log_index", None) == log_index:
            return tx
    raise ValidationFailure(f"no swap {tx_hash}:{log_index} in block {block.height}")


def create_app() -> FastAPI:
    app = FastAPI(title="dextca", version=__version__)

    @app.exception_handler(ValidationFailure)
    async def _validation_failure(_: Request, exc: ValidationFailure):
        return JSONResponse(
            status_code=422, content={"error": type(exc).__name__, "detail": str(exc)}
        )

    @app.exception_handler(ToolkitError)
    async def _toolkit_error(_: Request, exc: ToolkitError):
        return JSONResponse(
            status_code=500, content={"error": type(exc).__name__, "detail": str(exc)}
        )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/pool/quote", response_model=schemas.QuoteModel)
    def pool_quote(req: schemas.QuoteRequest) -> schemas.QuoteModel:
        pool = pool_from_dict(req.pool.model_dump())
        trade = trade_from_dict(req.trade.model_dump())
        result = quote_pool(pool, trade, req.quote_block)
        return schemas.QuoteModel.model_validate(quote_to_dict(result))

    @app.post("/pool/swap", response_model=schemas.SwapResponse)
    def pool_swap(req: schemas.SwapRequest) -> schemas.SwapResponse:
        pool = pool_from_dict(req.pool.model_dump())
        trade = trade_from_dict(req.trade.model_dump())
        fill, after = execute_trade(pool, trade, saturate=req.saturate)
        return schemas.SwapResponse(
            amount_in=enc(fill.amount_in),
            amount_out=enc(fill.amount_out),
            fee_paid=enc(fill.fee_paid),
            end_sqrt_price=enc(fill.end_sqrt_price),
            ticks_crossed=list(fill.ticks_crossed),
            avg_price=None if fill.avg_price is None else enc(fill.avg_price),
            saturated=fill.saturated,
            pool=schemas.PoolModel.model_validate(pool_to_dict(after)),
        )

    @app.post("/pool/depth", response_model=schemas.DepthResponse)
    def pool_depth(req: schemas.DepthRequest) -> schemas.DepthResponse:
        pool = pool_from_dict(req.pool.model_dump())
        direction = Direction(req.direction)
        result = liquidity_depth(pool, direction, parse_fixed(req.range_bps))
        return schemas.DepthResponse(amount=enc(result.amount), saturated=result.saturated)

    @app.post("/blocks/decompose", response_model=schemas.DecompositionModel)
    def blocks_decompose(req: schemas.DecomposeRequest) -> schemas.DecompositionModel:
        block = block_from_dict(req.block.model_dump())
        swap = _find_swap(block, req.tx_hash, req.log_index)
        dec = decompose(
            block,
            swap,
            reordering_mode=req.params.reordering_mode,
            n_samples=req.params.n_samples,
            seed=req.params.seed,
            exact_threshold=req.params.exact_threshold,
            include_liquidity_events=req.params.include_liquidity_events,
            simulate_failed=req.params.simulate_failed,
        )
        return _decomposition_model(dec)

    @app.post("/adversary/sandwich", response_model=schemas.ScenarioResponse)
    def adversary_sandwich(req: schemas.SandwichRequest) -> schemas.ScenarioResponse:
        pool = pool_from_dict(req.pool.model_dump())
        trade = trade_from_dict(req.victim_trade.model_dump())
        scenario = gen_sandwich(
            pool,
            trade,
            parse_fixed(req.victim_tolerance_bps),
            frontrun_size=None if req.frontrun_size is None else parse_fixed(req.frontrun_size),
            height=req.height,
            timestamp=req.timestamp,
        )
        return _scenario_response(scenario, req.out_dir)

    @app.post("/adversary/backrun", response_model=schemas.ScenarioResponse)
    def adversary_backrun(req: schemas.BackrunRequest) -> schemas.ScenarioResponse:
        pool = pool_from_dict(req.pool.model_dump())
        trade = trade_from_dict(req.victim_trade.model_dump())
        scenario = gen_backrun(
            pool,
            trade,
            parse_fixed(req.external_mid),
            parse_fixed(req.victim_tolerance_bps),
            height=req.height,
            timestamp=req.timestamp,
        )
        return _scenario_response(scenario, req.out_dir)

    @app.post("/adversary/jit", response_model=schemas.ScenarioResponse)
    def adversary_jit(req: schemas.JitRequest) -> schemas.ScenarioResponse:
        pool = pool_from_dict(req.pool.model_dump())
        trade = trade_from_dict(req.victim_trade.model_dump())
        scenario = gen_jit(
            pool,
            trade,
            parse_fixed(req.victim_tolerance_bps),
            liquidity_factor=parse_fixed(req.liquidity_factor),
            width_spacings=req.width_spacings,
            height=req.height,
            timestamp=req.timestamp,
        )
        return _scenario_response(scenario, req.out_dir)

    @app.post("/adversary/collision", response_model=schemas.ScenarioResponse)
    def adversary_collision(req: schemas.CollisionRequest) -> schemas.ScenarioResponse:
        pool = pool_from_dict(req.pool.model_dump())
        scenario = gen_collision_block(
            pool,
            req.n_trades,
            parse_fixed(req.direction_bias),
            size_range=(parse_fixed(req.size_lo), parse_fixed(req.size_hi)),
            tolerance_bps=parse_fixed(req.tolerance_bps),
            seed=req.seed,
            height=req.height,
            timestamp=req.timestamp,
        )
        return _scenario_response(scenario, req.out_dir)

    @app.post("/dataset/ingest", response_model=schemas.IngestResponse)
    def dataset_ingest(req: schemas.DatasetRequest) -> schemas.IngestResponse:
        dataset = load_dataset(req.path)
        heights = [b.height for b in dataset.blocks]
        n_swaps = sum(
            1 for b in dataset.blocks for tx in b.txs if hasattr(tx, "status")
        )
        return schemas.IngestResponse(
            pair=dataset.pair,
            stable_side=dataset.stable_side,
            n_blocks=len(dataset.blocks),
            n_swaps=n_swaps,
            height_range=[min(heights), max(heights)] if heights else None,
            findings=validate_dataset(dataset),
        )

    @app.post("/dataset/validate", response_model=schemas.ValidateResponse)
    def dataset_validate(req: schemas.DatasetRequest) -> schemas.ValidateResponse:
        dataset = load_dataset(req.path)
        return schemas.ValidateResponse(findings=validate_dataset(dataset))

    @app.post("/dataset/decompose", response_model=schemas.DecompositionModel)
    def dataset_decompose(req: schemas.DatasetDecomposeRequest) -> schemas.DecompositionModel:
        dataset = load_dataset(req.path)
        for block in dataset.blocks:
            for tx in block.txs:
                if (
                    getattr(tx, "tx_hash", None) == req.tx_hash
                    and getattr(tx, "log_index", None) == req.log_index
                ):
                    dec = decompose(
                        block,
                        tx,
                        reordering_mode=req.params.reordering_mode,
                        n_samples=req.params.n_samples,
                        seed=req.params.seed,
                        exact_threshold=req.params.exact_threshold,
                        include_liquidity_events=req.params.include_liquidity_events,
                        simulate_failed=req.params.simulate_failed,
                    )
                    return _decomposition_model(dec)
        raise ValidationFailure(f"no swap {req.tx_hash}:{req.log_index} in dataset")

    @app.post("/replay", response_model=schemas.ReplayResponse)
    def replay(req: schemas.ReplayRequest) -> schemas.ReplayResponse:
        dataset = load_dataset(req.path)
        initial, final = replay_to(dataset, req.height)
        return schemas.ReplayResponse(
            initial_pool=schemas.PoolModel.model_validate(pool_to_dict(initial)),
            final_pool=schemas.PoolModel.model_validate(pool_to_dict(final)),
        )

    @app.post("/pipeline/run", response_model=schemas.PipelineResponse)
    def pipeline_run(req: schemas.PipelineRequest) -> schemas.PipelineResponse:
        dataset = load_dataset(req.path)
        config = _merged_config(req.config)
        result = run_pipeline(dataset, config, req.out_dir, req.format)
        return schemas.PipelineResponse(
            out_dir=result.out_dir,
            counts=dict(result.counts),
            checksums=dict(result.checksums),
        )

    @app.post("/regress", response_model=schemas.RegressResponse)
    def regress(req: schemas.RegressRequest) -> schemas.RegressResponse:
        dataset = load_dataset(req.path)
        config = _merged_config(req.config)
        output = run_regression(
            dataset,
            config,
            req.outcome,
            usd_outcome=req.usd_outcome,
            include_public_dummy=req.include_public_dummy,
            model=req.model,
        )
        if output.ols is not None:
            r = output.ols
            rows = [
                schemas.CoefficientRow(
                    name=r.names[i], coef=r.coef[i], se=r.se[i], stat=r.t[i], p=r.p[i],
                    stars=r.stars[i],
                )
                for i in range(len(r.names))
            ]
            return schemas.RegressResponse(
                outcome=output.outcome,
                model="ols",
                n=r.n,
                dropped=output.dropped,
                coefficients=rows,
                r2=r.r2,
                adj_r2=r.adj_r2,
                f_stat=r.f_stat,
                f_p=r.f_p,
                n_groups=r.n_groups,
                fe_mode=r.fe_mode,
                summary_text=r.summary(),
            )
        r = output.logit
        rows = [
            schemas.CoefficientRow(
                name=r.names[i], coef=r.coef[i], se=r.se[i], stat=r.z[i], p=r.p[i],
                stars=r.stars[i],
            )
            for i in range(len(r.names))
        ]
        return schemas.RegressResponse(
            outcome=output.outcome,
            model="logit",
            n=r.n,
            dropped=output.dropped,
            coefficients=rows,
            n_iter=r.n_iter,
            log_likelihood=r.log_likelihood,
            summary_text=r.summary(),
        )

    return app


app = create_app()
