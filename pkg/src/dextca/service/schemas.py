"""Request and response models for the HTTP service.

Quantities travel as decimal strings (18 fractional digits on the way out);
ticks, heights, and timestamps are integers.  Pool, trade, and block payloads
mirror the canonical JSON dict shapes used by the serialization module, so
they convert losslessly in both directions.
"""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PositionModel(Strict):
    lower_tick: int
    upper_tick: int
    liquidity: str


class PoolModel(Strict):
    fee_bps: Union[int, str]
    tick_spacing: int
    sqrt_price: str
    positions: list[PositionModel] = Field(default_factory=list)


class TradeModel(Strict):
    direction: Literal["token0_to_token1", "token1_to_token0"]
    kind: Literal["exact_in", "exact_out"]
    amount: str


class QuoteModel(Strict):
    quoted_price: str
    mid_price: str
    price_impact_bps: str
    lp_fee_bps: str
    quote_block: Optional[int] = None


class SwapTxModel(Strict):
    type: Literal["swap"] = "swap"
    tx_hash: str
    log_index: int
    trade: TradeModel
    limit_amount: str
    slippage_tolerance_bps: str
    deadline: int
    quote: Optional[QuoteModel] = None
    sign_time: Optional[int] = None
    mempool_first_seen: Optional[int] = None
    is_public: bool
    gas_used: int
    gas_price_wei: int
    status: Literal["succeeded", "failed_tolerance", "failed_other"]
    amount_in: Optional[str] = None
    amount_out: Optional[str] = None


class LiquidityEventModel(Strict):
    type: Literal["liquidity"] = "liquidity"
    kind: Literal["mint", "burn"]
    lower_tick: int
    upper_tick: int
    liquidity: str
    is_public: bool = True


BlockTx = Union[SwapTxModel, LiquidityEventModel]


class BlockModel(Strict):
    height: int
    timestamp: int
    builder: str
    initial_pool: PoolModel
    txs: list[BlockTx] = Field(default_factory=list)


class QuoteRequest(Strict):
    pool: PoolModel
    trade: TradeModel
    quote_block: Optional[int] = None


class SwapRequest(Strict):
    pool: PoolModel
    trade: TradeModel
    saturate: bool = False


class SwapResponse(Strict):
    amount_in: str
    amount_out: str
    fee_paid: str
    end_sqrt_price: str
    ticks_crossed: list[int]
    avg_price: Optional[str]
    saturated: bool
    pool: PoolModel


class DepthRequest(Strict):
    pool: PoolModel
    direction: Literal["token0_to_token1", "token1_to_token0"]
    range_bps: str = "500"


class DepthResponse(Strict):
    amount: str
    saturated: bool


class AnalysisParams(Strict):
    seed: int = 0
    n_samples: int = 16
    exact_threshold: int = 7
    include_liquidity_events: bool = False
    reordering_mode: Literal["auto", "exact", "sampled"] = "auto"
    simulate_failed: bool = True


class DecomposeRequest(Strict):
    block: BlockModel
    tx_hash: str
    log_index: int
    params: AnalysisParams = Field(default_factory=AnalysisParams)


class DatasetDecomposeRequest(Strict):
    path: str
    tx_hash: str
    log_index: int
    params: AnalysisParams = Field(default_factory=AnalysisParams)


class DecompositionModel(Strict):
    total_bps: str
    adversarial_bps: str
    collision_bps: str
    liquidity_bps: str
    top_of_block_bps: str
    reordering_bps: str
    residual_bps: str
    labels: list[bool]
    mode: str


class SandwichRequest(Strict):
    pool: PoolModel
    victim_trade: TradeModel
    victim_tolerance_bps: str = "50"
    frontrun_size: Optional[str] = None
    height: int = 1
    timestamp: int = 1_700_000_000
    out_dir: Optional[str] = None


class BackrunRequest(Strict):
    pool: PoolModel
    victim_trade: TradeModel
    external_mid: str
    victim_tolerance_bps: str = "50"
    height: int = 1
    timestamp: int = 1_700_000_000
    out_dir: Optional[str] = None


class JitRequest(Strict):
    pool: PoolModel
    victim_trade: TradeModel
    victim_tolerance_bps: str = "50"
    liquidity_factor: str = "4"
    width_spacings: int = 10
    height: int = 1
    timestamp: int = 1_700_000_000
    out_dir: Optional[str] = None


class CollisionRequest(Strict):
    pool: PoolModel
    n_trades: int
    direction_bias: str = "0"
    size_lo: str = "1"
    size_hi: str = "10"
    tolerance_bps: str = "100"
    seed: int = 0
    height: int = 1
    timestamp: int = 1_700_000_000
    out_dir: Optional[str] = None


class ScenarioResponse(Strict):
    kind: str
    block: BlockModel
    ground_truth: dict
    dataset_dir: Optional[str] = None


class DatasetRequest(Strict):
    path: str


class IngestResponse(Strict):
    pair: str
    stable_side: int
    n_blocks: int
    n_swaps: int
    height_range: Optional[list[int]]
    findings: list[str]


class ValidateResponse(Strict):
    findings: list[str]


class ReplayRequest(Strict):
    path: str
    height: int


class ReplayResponse(Strict):
    initial_pool: PoolModel
    final_pool: PoolModel


class ConfigModel(Strict):
    seed: Optional[int] = None
    exact_threshold: Optional[int] = None
    n_samples: Optional[int] = None
    include_liquidity_events: Optional[bool] = None
    simulate_failed: Optional[bool] = None
    bucket_thresholds: Optional[list[str]] = None
    threshold_usd: Optional[str] = None
    depth_range_bps: Optional[str] = None
    fixed_effects: Optional[str] = None
    workers: Optional[int] = None


class PipelineRequest(Strict):
    path: str
    out_dir: str
    config: Optional[ConfigModel] = None
    format: Literal["csv", "json", "both"] = "csv"


class PipelineResponse(Strict):
    out_dir: str
    counts: dict[str, int]
    checksums: dict[str, str]


class RegressRequest(Strict):
    path: str
    config: Optional[ConfigModel] = None
    outcome: str = "total"
    model: Literal["ols", "logit"] = "ols"
    usd_outcome: bool = False
    include_public_dummy: bool = False


class CoefficientRow(Strict):
    name: str
    coef: float
    se: float
    stat: float
    p: float
    stars: str


class RegressResponse(Strict):
    outcome: str
    model: str
    n: int
    dropped: int
    coefficients: list[CoefficientRow]
    r2: Optional[float] = None
    adj_r2: Optional[float] = None
    f_stat: Optional[float] = None
    f_p: Optional[float] = None
    n_groups: Optional[int] = None
    fe_mode: Optional[str] = None
    n_iter: Optional[int] = None
    log_likelihood: Optional[float] = None
    summary_text: str


class HealthResponse(Strict):
    status: str
    version: str
