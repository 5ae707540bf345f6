"""Transaction-cost analysis for concentrated-liquidity AMM pools.

Core layers: exact-rational pool math (`amm`), chain records (`chain`),
slippage measurement and decomposition (`slippage`), USD cost accounting
(`costs`), adversary scenario generators (`adversary`), regressions
(`econometrics`), the on-disk dataset format (`dataset`), and the analysis
pipeline (`pipeline`).  The HTTP service lives in `dextca.service` and the
command line client in `dextca.cli`.
"""

__version__ = "0.1.0"

from .amm import (
    BURN,
    EXACT_IN,
    EXACT_OUT,
    MINT,
    Direction,
    PoolState,
    Position,
    Quote,
    SwapFill,
    TradeIntent,
    apply_liquidity_event,
    execute_trade,
    full_range,
    liquidity_depth,
    new_pool,
    quote,
    swap_exact_in,
    swap_exact_out,
)
from .chain import (
    FAILED_OTHER,
    FAILED_TOLERANCE,
    SUCCEEDED,
    BlockRecord,
    LiquidityEvent,
    SwapTx,
    TradeRecord,
)
from .errors import ToolkitError, ValidationFailure
from .slippage import (
    SlippageDecomposition,
    classify_adversarial,
    decompose,
    reordering_slippage,
    slippage,
)

__all__ = [
    "__version__",
    "BURN",
    "EXACT_IN",
    "EXACT_OUT",
    "MINT",
    "FAILED_OTHER",
    "FAILED_TOLERANCE",
    "SUCCEEDED",
    "BlockRecord",
    "Direction",
    "LiquidityEvent",
    "PoolState",
    "Position",
    "Quote",
    "SlippageDecomposition",
    "SwapFill",
    "SwapTx",
    "ToolkitError",
    "TradeIntent",
    "TradeRecord",
    "ValidationFailure",
    "apply_liquidity_event",
    "classify_adversarial",
    "decompose",
    "execute_trade",
    "full_range",
    "liquidity_depth",
    "new_pool",
    "quote",
    "reordering_slippage",
    "slippage",
    "swap_exact_in",
    "swap_exact_out",
]
