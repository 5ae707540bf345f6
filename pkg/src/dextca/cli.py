"""Command line client for the analysis service.

Every command talks HTTP: against a remote server when --server (or the
DEXTCA_SERVER environment variable) is set, otherwise against the service
mounted in-process, so no separate daemon is needed for local work.

Exit codes: 0 success, 1 rejected input (HTTP 422, or findings under
--strict), 2 internal error.
"""

from __future__ import annotations

import asyncio
import json
import sys
from pathlib import Path

import click
import httpx

from .service.app import app as _app

INTERNAL_BASE = "http://dextca.internal"


async def _post_in_process(path: str, payload: dict) -> httpx.Response:
    transport = httpx.ASGITransport(app=_app)
    async with httpx.AsyncClient(
        transport=transport, base_url=INTERNAL_BASE, timeout=600.0
    ) as client:
        return await client.post(path, json=payload)


def _post(server: str | None, path: str, payload: dict) -> dict:
    try:
        if server:
            with httpx.Client(base_url=server, timeout=600.0) as client:
                response = client.post(path, json=payload)
        else:
            response = asyncio.run(_post_in_process(path, payload))
    except httpx.HTTPError as err:
        click.echo(f"transport error: {err}", err=True)
        sys.exit(2)
    if response.status_code == 422:
        body = response.json()
        detail = body.get("detail", body)
        error = body.get("error", "ValidationFailure")
        click.echo(f"rejected ({error}): {detail}", err=True)
        sys.exit(1)
    if response.status_code != 200:
        click.echo(f"server error {response.status_code}: {response.text}", err=True)
        sys.exit(2)
    return response.json()


def _emit(payload: object) -> None:
    click.echo(json.dumps(payload, indent=2, sort_keys=True))


def _read_pool(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        click.echo(f"cannot read pool file {path}: {err}", err=True)
        sys.exit(1)


def _read_config(path: str | None) -> dict | None:
    if path is None:
        return None
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        click.echo(f"cannot read config {path}: {err}", err=True)
        sys.exit(1)


server_option = click.option(
    "--server",
    envvar="DEXTCA_SERVER",
    default=None,
    help="Base URL of a running service; defaults to in-process.",
)


@click.group()
@click.version_option(package_name="dextca")
def main() -> None:
    """Pool-level transaction cost analysis."""


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8311, show_default=True, type=int)
def serve(host: str, port: int) -> None:
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("dextca.service.app:app", host=host, port=port)


@main.command()
@click.argument("dataset_dir", type=click.Path())
@server_option
def ingest(dataset_dir: str, server: str | None) -> None:
    """Load a dataset directory and print its summary."""
    _emit(_post(server, "/dataset/ingest", {"path": dataset_dir}))


@main.command()
@click.argument("dataset_dir", type=click.Path())
@click.option("--strict", is_flag=True, help="Exit 1 when any finding is reported.")
@server_option
def validate(dataset_dir: str, strict: bool, server: str | None) -> None:
    """Check a dataset for internal consistency."""
    payload = _post(server, "/dataset/validate", {"path": dataset_dir})
    findings = payload["findings"]
    for finding in findings:
        click.echo(f"finding: {finding}")
    click.echo(f"{len(findings)} finding(s)")
    if findings and strict:
        sys.exit(1)


@main.command()
@click.argument("dataset_dir", type=click.Path())
@click.argument("height", type=int)
@server_option
def replay(dataset_dir: str, height: int, server: str | None) -> None:
    """Print the pool state entering and leaving one block."""
    _emit(_post(server, "/replay", {"path": dataset_dir, "height": height}))


@main.command()
@click.argument("dataset_dir", type=click.Path())
@click.argument("tx_hash")
@click.argument("log_index", type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--n-samples", default=16, show_default=True, type=int)
@click.option("--exact-threshold", default=7, show_default=True, type=int)
@click.option(
    "--mode",
    "reordering_mode",
    type=click.Choice(["auto", "exact", "sampled"]),
    default="auto",
    show_default=True,
)
@click.option("--include-liquidity-events", is_flag=True)
@server_option
def decompose(
    dataset_dir: str,
    tx_hash: str,
    log_index: int,
    seed: int,
    n_samples: int,
    exact_threshold: int,
    reordering_mode: str,
    include_liquidity_events: bool,
    server: str | None,
) -> None:
    """Decompose one swap's slippage."""
    payload = {
        "path": dataset_dir,
        "tx_hash": tx_hash,
        "log_index": log_index,
        "params": {
            "seed": seed,
            "n_samples": n_samples,
            "exact_threshold": exact_threshold,
            "reordering_mode": reordering_mode,
            "include_liquidity_events": include_liquidity_events,
        },
    }
    _emit(_post(server, "/dataset/decompose", payload))


@main.command()
@click.argument("dataset_dir", type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@click.option(
    "--format",
    "fmt",
    type=click.Choice(["csv", "json", "both"]),
    default="csv",
    show_default=True,
)
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--workers", type=int, default=None, help="Override worker count.")
@server_option
def report(
    dataset_dir: str,
    out_dir: str,
    fmt: str,
    config_path: str | None,
    seed: int | None,
    workers: int | None,
    server: str | None,
) -> None:
    """Run the full analysis pipeline and write its artifacts."""
    config = _read_config(config_path) or {}
    if seed is not None:
        config["seed"] = seed
    if workers is not None:
        config["workers"] = workers
    payload = {
        "path": dataset_dir,
        "out_dir": out_dir,
        "format": fmt,
        "config": config or None,
    }
    _emit(_post(server, "/pipeline/run", payload))


@main.command()
@click.argument("dataset_dir", type=click.Path())
@click.option(
    "--outcome",
    default="total",
    show_default=True,
    help="Cost component for the OLS outcome.",
)
@click.option(
    "--model",
    type=click.Choice(["ols", "logit"]),
    default="ols",
    show_default=True,
)
@click.option("--usd", "usd_outcome", is_flag=True, help="Regress USD notional, not bps.")
@click.option("--public-dummy", "public_dummy", is_flag=True)
@click.option("--config", "config_path", type=click.Path(), default=None)
@server_option
def regress(
    dataset_dir: str,
    outcome: str,
    model: str,
    usd_outcome: bool,
    public_dummy: bool,
    config_path: str | None,
    server: str | None,
) -> None:
    """Fit the cost-determinants OLS or the adversarial-loss logit."""
    payload = {
        "path": dataset_dir,
        "outcome": outcome,
        "model": model,
        "usd_outcome": usd_outcome,
        "include_public_dummy": public_dummy,
        "config": _read_config(config_path),
    }
    result = _post(server, "/regress", payload)
    click.echo(result["summary_text"])


@main.command("simulate-adversary")
@click.argument("kind", type=click.Choice(["sandwich", "backrun", "jit", "collision"]))
@click.option("--pool", "pool_path", required=True, type=click.Path(), help="Pool JSON file.")
@click.option(
    "--direction",
    type=click.Choice(["token0_to_token1", "token1_to_token0"]),
    default="token0_to_token1",
    show_default=True,
)
@click.option(
    "--trade-kind",
    type=click.Choice(["exact_in", "exact_out"]),
    default="exact_in",
    show_default=True,
)
@click.option("--amount", default="100", show_default=True)
@click.option("--tolerance-bps", default="50", show_default=True)
@click.option("--external-mid", default="1", show_default=True, help="Backrun only.")
@click.option("--liquidity-factor", default="4", show_default=True, help="JIT only.")
@click.option("--n-trades", default=4, show_default=True, type=int, help="Collision only.")
@click.option("--bias", default="0", show_default=True, help="Collision direction bias.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out-dir", default=None, type=click.Path(), help="Write a dataset directory.")
@server_option
def simulate_adversary(
    kind: str,
    pool_path: str,
    direction: str,
    trade_kind: str,
    amount: str,
    tolerance_bps: str,
    external_mid: str,
    liquidity_factor: str,
    n_trades: int,
    bias: str,
    seed: int,
    out_dir: str | None,
    server: str | None,
) -> None:
    """Generate an adversary scenario block with known ground truth."""
    pool = _read_pool(pool_path)
    trade = {"direction": direction, "kind": trade_kind, "amount": amount}
    if kind == "sandwich":
        payload = {
            "pool": pool,
            "victim_trade": trade,
            "victim_tolerance_bps": tolerance_bps,
            "out_dir": out_dir,
        }
    elif kind == "backrun":
        payload = {
            "pool": pool,
            "victim_trade": trade,
            "victim_tolerance_bps": tolerance_bps,
            "external_mid": external_mid,
            "out_dir": out_dir,
        }
    elif kind == "jit":
        payload = {
            "pool": pool,
            "victim_trade": trade,
            "victim_tolerance_bps": tolerance_bps,
            "liquidity_factor": liquidity_factor,
            "out_dir": out_dir,
        }
    else:
        payload = {
            "pool": pool,
            "n_trades": n_trades,
            "direction_bias": bias,
            "tolerance_bps": tolerance_bps,
            "seed": seed,
            "out_dir": out_dir,
        }
    _emit(_post(server, f"/adversary/{kind}", payload))


if __name__ == "__main__":
    main()
