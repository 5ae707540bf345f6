"""Regression layer: cost determinants and adversarial-exposure models.

Swap-level observations regress cost components on order size, gas price,
confirmation latency, slippage tolerance, recent signed returns, available
depth, and short-horizon volatility, with calendar fixed effects.  A logit
on the same regressors models the probability that a swap lost more than a
USD threshold to adversarial flow.

Estimators are ordinary least squares with classical standard errors and a
Newton (IRLS) logit.  Fixed effects enter as dummies when the group count is
small and by within-group demeaning otherwise; both paths produce identical
slopes.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import erfc, exp, lgamma, log, sqrt
from typing import Mapping, Sequence

import numpy as np

from .amm import Direction
from .errors import (
    ConvergenceError,
    DomainError,
    EmptyInput,
    MissingField,
    SeparationError,
    SingularDesign,
)

DUMMY_FE_MAX_GROUPS = 200

# two-sided normal critical values for 0.1%, 1%, 5%, 10%
_STAR_CUTS = ((3.2905, "***"), (2.5758, "**"), (1.9600, "*"), (1.6449, "."))

COMPONENT_OUTCOMES = (
    "total",
    "adversarial",
    "collision",
    "liquidity",
    "reordering",
    "top_of_block",
)

REGRESSOR_NAMES = (
    "order_size",
    "gas_price",
    "log_latency",
    "tolerance",
    "last_hour_return",
    "liquidity",
    "volatility",
)


def stars_for(stat: float) -> str:
    a = abs(stat)
    for cut, mark in _STAR_CUTS:
        if a >= cut:
            return mark
    return ""


def normal_p_value(stat: float) -> float:
    """Two-sided p-value under the standard normal."""
    return erfc(abs(stat) / sqrt(2.0))


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-14:
            return h
    raise ConvergenceError("incomplete beta continued fraction did not converge")


def _betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = lgamma(a + b) - lgamma(a) - lgamma(b) + a * log(x) + b * log(1.0 - x)
    front = exp(ln_front)
    # symmetry keeps the continued fraction in its fast-converging region
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_sf(stat: float, df1: int, df2: int) -> float:
    """Survival function of the F(df1, df2) distribution."""
    if stat <= 0:
        return 1.0
    x = df2 / (df2 + df1 * stat)
    return _betainc(df2 / 2.0, df1 / 2.0, x)


@dataclass(frozen=True)
class MinuteSeries:
    """Minute-resolution pool price history (token1 per token0)."""

    timestamps: tuple[int, ...]
    prices: tuple[float, ...]

    def __post_init__(self):
        if len(self.timestamps) != len(self.prices):
            raise DomainError("timestamps and prices must align")
        if not self.timestamps:
            raise EmptyInput("empty price series")
        if any(b <= a for a, b in zip(self.timestamps, self.timestamps[1:])):
            raise DomainError("timestamps must be strictly increasing")
        if any(p <= 0 for p in self.prices):
            raise DomainError("prices must be positive")

    def _index_at(self, ts: int) -> int:
        # latest observation at or before ts
        lo, hi = 0, len(self.timestamps) - 1
        if ts < self.timestamps[0]:
            raise MissingField(f"no price history at {ts}")
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.timestamps[mid] <= ts:
                lo = mid
            else:
                hi = mid - 1
        return lo

    def price_at(self, ts: int) -> float:
        return self.prices[self._index_at(ts)]

    def last_hour_return_bps(self, ts: int) -> float:
        """Pool price return over the hour before ts, in bps."""
        now = self.price_at(ts)
        then = self.price_at(ts - 3600)
        return (now / then - 1.0) * 1e4

    def volatility_bps(self, ts: int, window_seconds: int = 21_600) -> float:
        """Sample stdev of one-minute log returns over the window ending at ts, in bps."""
        start = ts - window_seconds
        idx_hi = self._index_at(ts)
        idx_lo = self._index_at(start) if start >= self.timestamps[0] else 0
        window = self.prices[idx_lo : idx_hi + 1]
        if len(window) < 3:
            raise MissingField("insufficient price history for volatility")
        rets = np.diff(np.log(np.asarray(window, dtype=float)))
        return float(np.std(rets, ddof=1)) * 1e4


@dataclass(frozen=True)
class SwapObservation:
    """One swap's regression inputs, assembled by the pipeline."""

    tx_hash: str
    log_index: int
    block_height: int
    timestamp: int
    direction: Direction
    is_public: bool
    builder: str
    succeeded: bool
    order_size_usd: Fraction
    gas_price_wei: int
    eth_usd: Fraction
    latency_seconds: float | None
    tolerance_bps: Fraction | None
    depth_usd: Fraction
    last_hour_return_bps: float | None
    volatility_bps: float | None
    components_bps: Mapping[str, Fraction]

    @property
    def week_id(self) -> int:
        return self.timestamp // 604_800

    @property
    def biweek_id(self) -> int:
        return self.timestamp // 1_209_600


def signed_return(direction: Direction, pool_return_bps: float) -> float:
    """Orient a pool return so positive means adverse for the trader.

    The pool price is token1 per token0: a rising price hurts whoever buys
    token0 (token1 -> token0) and helps the seller.
    """
    return pool_return_bps if direction is Direction.TOKEN1_TO_TOKEN0 else -pool_return_bps


@dataclass(frozen=True)
class Design:
    """Dense regression design plus bookkeeping for fixed effects."""

    x: np.ndarray
    y: np.ndarray
    names: tuple[str, ...]
    groups: np.ndarray
    n_dropped: int


def _core_row(obs: SwapObservation) -> list[float] | None:
    if obs.latency_seconds is None or obs.tolerance_bps is None:
        return None
    if obs.last_hour_return_bps is None or obs.volatility_bps is None:
        return None
    return [
        float(obs.order_size_usd) / 1e6,
        obs.gas_price_wei * 1e-12 * float(obs.eth_usd),
        log(obs.latency_seconds + 1.0),
        float(obs.tolerance_bps),
        signed_return(obs.direction, obs.last_hour_return_bps),
        float(obs.depth_usd) / 1e6,
        obs.volatility_bps,
    ]


def build_design(
    observations: Sequence[SwapObservation],
    outcome: str,
    *,
    fixed_effects: str = "week",
    usd_outcome: bool = False,
    include_public_dummy: bool = False,
) -> Design:
    """Assemble (X, y, groups) for one cost component.

    Rows missing latency, tolerance, or price history are dropped and counted.
    Outcome is a component's bps, or its USD notional when usd_outcome is set.
    """
    if outcome not in COMPONENT_OUTCOMES:
        raise DomainError(f"unknown outcome {outcome!r}")
    if fixed_effects not in ("week", "biweek", "none"):
        raise DomainError(f"unknown fixed effects scheme {fixed_effects!r}")
    rows: list[list[float]] = []
    ys: list[float] = []
    groups: list[int] = []
    dropped = 0
    for obs in observations:
        core = _core_row(obs)
        if core is None:
            dropped += 1
            continue
        if include_public_dummy:
            core.append(1.0 if obs.is_public else 0.0)
        value = obs.components_bps[outcome]
        if usd_outcome:
            value = value * obs.order_size_usd / 10_000
        rows.append(core)
        ys.append(float(value))
        if fixed_effects == "week":
            groups.append(obs.week_id)
        elif fixed_effects == "biweek":
            groups.append(obs.biweek_id)
        else:
            groups.append(0)
    if not rows:
        raise EmptyInput("no usable observations")
    names = REGRESSOR_NAMES + (("is_public",) if include_public_dummy else ())
    return Design(
        x=np.asarray(rows, dtype=float),
        y=np.asarray(ys, dtype=float),
        names=names,
        groups=np.asarray(groups, dtype=np.int64),
        n_dropped=dropped,
    )


@dataclass(frozen=True)
class OLSResult:
    names: tuple[str, ...]
    coef: tuple[float, ...]
    se: tuple[float, ...]
    t: tuple[float, ...]
    p: tuple[float, ...]
    stars: tuple[str, ...]
    n: int
    n_groups: int
    df_resid: int
    r2: float
    adj_r2: float
    f_stat: float
    f_p: float
    f_df: tuple[int, int]
    fe_mode: str

    def summary(self) -> str:
        lines = [f"{'':<18}{'coef':>14}{'se':>14}{'t':>10}  "]
        for i, name in enumerate(self.names):
            lines.append(
                f"{name:<18}{self.coef[i]:>14.6g}{self.se[i]:>14.6g}"
                f"{self.t[i]:>10.3f}  {self.stars[i]}"
            )
        lines.append(
            f"n={self.n} groups={self.n_groups} ({self.fe_mode}) "
            f"R2={self.r2:.4f} adjR2={self.adj_r2:.4f} "
            f"F({self.f_df[0]},{self.f_df[1]})={self.f_stat:.3f} p={self.f_p:.4g}"
        )
        return "\n".join(lines)


def _solve_ols(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients and (X'X)^-1 via QR; raises SingularDesign on rank loss."""
    q, r = np.linalg.qr(x)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or np.min(diag) < 1e-10 * max(np.max(diag), 1.0):
        raise SingularDesign("design matrix is rank deficient")
    beta = np.linalg.solve(r, q.T @ y)
    r_inv = np.linalg.solve(r, np.eye(r.shape[0]))
    return beta, r_inv @ r_inv.T


def ols_fe(design: Design) -> OLSResult:
    """OLS with group fixed effects and classical standard errors.

    Groups up to DUMMY_FE_MAX_GROUPS enter as dummies next to an intercept;
    beyond that, X and y are within-demeaned, which yields the same slopes.
    The F statistic tests all slopes jointly against the fixed-effects-only
    model.
    """
    x, y, groups = design.x, design.y, design.groups
    n, k = x.shape
    labels = np.unique(groups)
    n_groups = labels.size
    if n_groups > 1:
        if n_groups <= DUMMY_FE_MAX_GROUPS:
            fe_mode = "dummy"
            cols = [x]
            cols.append(np.ones((n, 1)))
            for g in labels[1:]:
                cols.append((groups == g).astype(float).reshape(-1, 1))
            full = np.hstack(cols)
            beta_full, xtx_inv_full = _solve_ols(full, y)
            resid = y - full @ beta_full
            beta = beta_full[:k]
            xtx_inv_diag = np.diag(xtx_inv_full)[:k]
            df_resid = n - k - n_groups
            # restricted model: group means only
            fitted_r = np.zeros(n)
            for g in labels:
                mask = groups == g
                fitted_r[mask] = y[mask].mean()
            rss_r = float(np.sum((y - fitted_r) ** 2))
        else:
            fe_mode = "demean"
            xd = x.copy()
            yd = y.copy()
            for g in labels:
                mask = groups == g
                xd[mask] -= xd[mask].mean(axis=0)
                yd[mask] -= yd[mask].mean()
            beta, xtx_inv = _solve_ols(xd, yd)
            resid = yd - xd @ beta
            xtx_inv_diag = np.diag(xtx_inv)
            df_resid = n - k - n_groups
            rss_r = float(np.sum(yd**2))
        # R2 against the demeaned outcome so both paths agree
        y_within = y.copy()
        for g in labels:
            mask = groups == g
            y_within[mask] -= y[mask].mean()
        tss = float(np.sum(y_within**2))
    else:
        fe_mode = "none"
        full = np.hstack([x, np.ones((n, 1))])
        beta_full, xtx_inv_full = _solve_ols(full, y)
        resid = y - full @ beta_full
        beta = beta_full[:k]
        xtx_inv_diag = np.diag(xtx_inv_full)[:k]
        df_resid = n - k - 1
        rss_r = float(np.sum((y - y.mean()) ** 2))
        tss = rss_r
    if df_resid <= 0:
        raise DomainError("not enough observations for the requested design")
    rss = float(resid @ resid)
    s2 = rss / df_resid
    se = np.sqrt(np.maximum(s2 * xtx_inv_diag, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.inf * np.sign(beta))
    t = np.nan_to_num(t, nan=0.0, posinf=np.inf, neginf=-np.inf)
    p = tuple(normal_p_value(float(v)) if np.isfinite(v) else 0.0 for v in t)
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / df_resid if df_resid > 0 else r2
    if rss_r > rss and rss > 0:
        f_stat = ((rss_r - rss) / k) / (rss / df_resid)
    elif rss == 0:
        f_stat = float("inf")
    else:
        f_stat = 0.0
    f_p = 0.0 if not np.isfinite(f_stat) else f_sf(f_stat, k, df_resid)
    return OLSResult(
        names=design.names,
        coef=tuple(float(b) for b in beta),
        se=tuple(float(v) for v in se),
        t=tuple(float(v) for v in t),
        p=p,
        stars=tuple(stars_for(float(v)) for v in t),
        n=n,
        n_groups=int(n_groups),
        df_resid=int(df_resid),
        r2=float(r2),
        adj_r2=float(adj_r2),
        f_stat=float(f_stat),
        f_p=float(f_p),
        f_df=(k, int(df_resid)),
        fe_mode=fe_mode,
    )


def label_adversarial(
    adversarial_bps: Fraction, order_size_usd: Fraction, threshold_usd: Fraction = Fraction(5)
) -> bool:
    """True when the adversarial component cost the trader more than the threshold."""
    return adversarial_bps * order_size_usd / 10_000 < -threshold_usd


def build_logit_design(
    observations: Sequence[SwapObservation],
    *,
    threshold_usd: Fraction = Fraction(5),
    include_public_dummy: bool = False,
) -> Design:
    """Intercept-led design for the adversarial-loss logit."""
    rows: list[list[float]] = []
    ys: list[float] = []
    dropped = 0
    for obs in observations:
        core = _core_row(obs)
        if core is None:
            dropped += 1
            continue
        if include_public_dummy:
            core.append(1.0 if obs.is_public else 0.0)
        rows.append([1.0] + core)
        ys.append(
            1.0
            if label_adversarial(obs.components_bps["adversarial"], obs.order_size_usd, threshold_usd)
            else 0.0
        )
    if not rows:
        raise EmptyInput("no usable observations")
    names = ("intercept",) + REGRESSOR_NAMES + (("is_public",) if include_public_dummy else ())
    return Design(
        x=np.asarray(rows, dtype=float),
        y=np.asarray(ys, dtype=float),
        names=names,
        groups=np.zeros(len(rows), dtype=np.int64),
        n_dropped=dropped,
    )


@dataclass(frozen=True)
class LogitResult:
    names: tuple[str, ...]
    coef: tuple[float, ...]
    se: tuple[float, ...]
    z: tuple[float, ...]
    p: tuple[float, ...]
    stars: tuple[str, ...]
    n: int
    n_events: int
    n_iter: int
    log_likelihood: float

    def summary(self) -> str:
        lines = [f"{'':<18}{'coef':>14}{'se':>14}{'z':>10}  "]
        for i, name in enumerate(self.names):
            lines.append(
                f"{name:<18}{self.coef[i]:>14.6g}{self.se[i]:>14.6g}"
                f"{self.z[i]:>10.3f}  {self.stars[i]}"
            )
        lines.append(
            f"n={self.n} events={self.n_events} iters={self.n_iter} "
            f"logL={self.log_likelihood:.4f}"
        )
        return "\n".join(lines)


def logit_fit(
    design: Design, *, tol: float = 1e-10, max_iter: int = 100, separation_bound: float = 30.0
) -> LogitResult:
    """Newton-Raphson logit; the design is expected to carry its own intercept."""
    x, y = design.x, design.y
    n, k = x.shape
    if set(np.unique(y)) - {0.0, 1.0}:
        raise DomainError("logit outcome must be binary")
    n_events = int(y.sum())
    if n_events == 0 or n_events == n:
        raise SeparationError("outcome has no variation")
    beta = np.zeros(k)
    for iteration in range(1, max_iter + 1):
        eta = x @ beta
        eta = np.clip(eta, -500, 500)
        mu = 1.0 / (1.0 + np.exp(-eta))
        w = mu * (1.0 - mu)
        xtwx = x.T @ (x * w[:, None])
        grad = x.T @ (y - mu)
        try:
            step = np.linalg.solve(xtwx, grad)
        except np.linalg.LinAlgError as err:
            raise SingularDesign("information matrix is singular") from err
        beta = beta + step
        if np.max(np.abs(beta)) > separation_bound:
            raise SeparationError("coefficients diverging; data likely separated")
        if np.max(np.abs(step)) <= tol:
            break
    else:
        raise ConvergenceError(f"logit did not converge in {max_iter} iterations")
    eta = np.clip(x @ beta, -500, 500)
    mu = 1.0 / (1.0 + np.exp(-eta))
    w = mu * (1.0 - mu)
    xtwx = x.T @ (x * w[:, None])
    try:
        cov = np.linalg.inv(xtwx)
    except np.linalg.LinAlgError as err:
        raise SingularDesign("information matrix is singular") from err
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, beta / se, 0.0)
    ll = float(np.sum(y * np.log(np.maximum(mu, 1e-300)) + (1 - y) * np.log(np.maximum(1 - mu, 1e-300))))
    return LogitResult(
        names=design.names,
        coef=tuple(float(b) for b in beta),
        se=tuple(float(v) for v in se),
        z=tuple(float(v) for v in z),
        p=tuple(normal_p_value(float(v)) for v in z),
        stars=tuple(stars_for(float(v)) for v in z),
        n=n,
        n_events=n_events,
        n_iter=iteration,
        log_likelihood=ll,
    )
