"""Command-line client for the pipeline service.

Every subcommand is a thin HTTP client: it posts a request to the
service and prints the result. With --server it talks to a running
instance; without it the service app is mounted in-process over an ASGI
transport, so local runs need no socket and stay fully offline.

Exit codes: 0 success, 2 config or usage error, 3 stage-fatal error,
4 run completed but some blocks fell back to placeholders.
"""

from __future__ import annotations

import asyncio
import json
import logging
import sys
from typing import Optional

import click
import httpx

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_PARTIAL = 4


def _post_local(path: str, payload: dict) -> httpx.Response:
    from .service.app import app

    async def go() -> httpx.Response:
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(
            transport=transport, base_url="http://blockcoder.local", timeout=None
        ) as client:
            return await client.post(path, json=payload)

    return asyncio.run(go())


def _post(server: Optional[str], path: str, payload: dict) -> httpx.Response:
    if server:
        try:
            with httpx.Client(base_url=server, timeout=None) as client:
                return client.post(path, json=payload)
        except httpx.HTTPError as exc:
            click.echo(f"error: cannot reach server {server}: {exc}", err=True)
            sys.exit(EXIT_STAGE)
    return _post_local(path, payload)


def _fail_from_response(response: httpx.Response) -> None:
    try:
        detail = response.json().get("detail")
    except ValueError:
        detail = response.text
    if isinstance(detail, dict):
        kind = detail.get("kind", "")
        message = detail.get("message", "")
        if kind == "stage_fatal":
            click.echo(f"error in stage '{detail.get('stage')}': {message}", err=True)
            sys.exit(EXIT_STAGE)
        click.echo(f"error: {message or detail}", err=True)
        sys.exit(EXIT_CONFIG)
    click.echo(f"error: HTTP {response.status_code}: {detail}", err=True)
    sys.exit(EXIT_CONFIG if response.status_code < 500 else EXIT_STAGE)


def _call(server: Optional[str], path: str, payload: dict) -> dict:
    response = _post(server, path, payload)
    if response.status_code != 200:
        _fail_from_response(response)
    return response.json()


def _common_payload(config, out, backend, prompt_variant) -> dict:
    return {
        "config": config,
        "out": out,
        "backend": backend,
        "prompt_variant": prompt_variant,
    }


server_option = click.option("--server", envvar="BLOCKCODER_SERVER", default=None,
                             help="Base URL of a running service; defaults to in-process")
config_option = click.option("--config", default=None, help="Path to a TOML config file")
out_option = click.option("--out", default=None, help="Output directory override")
backend_option = click.option("--backend", default=None, help="Chat client backend override")
variant_option = click.option("--prompt-variant", default=None,
                              help="Block prompt variant: full or simplified")


@click.group()
@click.version_option()
def main() -> None:
    """Design-to-code pipeline client."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--design", required=True, help="Path to the design image")
@server_option
@config_option
@out_option
@backend_option
@variant_option
@click.option("--json", "as_json", is_flag=True, help="Print the full report as JSON")
def run(design, server, config, out, backend, prompt_variant, as_json) -> None:
    """Run the full pipeline: divide, synthesize, assemble, verify."""
    payload = {"design": design, **_common_payload(config, out, backend, prompt_variant)}
    data = _call(server, "/v1/run", payload)
    if as_json:
        click.echo(json.dumps(data["report"], indent=2, sort_keys=True))
    else:
        report = data["report"]
        click.echo(f"run dir: {data['run_dir']}")
        click.echo(f"blocks: {report['division']['block_count']}")
        for entry in report["candidates"]:
            score = entry.get("verify_score")
            shown = f"{score:.4f}" if score is not None else f"failed: {entry.get('error')}"
            click.echo(f"candidate {entry['strategy']}: {shown}")
        click.echo(f"selected: {data['selected']}")
        click.echo(f"status: {data['status']}")
    sys.exit(EXIT_PARTIAL if data["status"] == "partial" else EXIT_OK)


@main.command()
@click.option("--design", required=True, help="Path to the design image")
@server_option
@config_option
@out_option
def divide(design, server, config, out) -> None:
    """Divide the design into blocks; emit blocks JSON and an overlay PNG."""
    payload = {"design": design, **_common_payload(config, out, None, None)}
    data = _call(server, "/v1/divide", payload)
    click.echo(f"blocks: {len(data['blocks'])}")
    click.echo(f"blocks json: {data['blocks_path']}")
    click.echo(f"overlay: {data['overlay_path']}")


@main.command()
@click.option("--design", required=True, help="Path to the design image")
@click.option("--blocks", required=True, help="Path to a blocks JSON file")
@server_option
@config_option
@out_option
@backend_option
@variant_option
def synthesize(design, blocks, server, config, out, backend, prompt_variant) -> None:
    """Generate code for each block listed in a blocks JSON file."""
    payload = {
        "design": design,
        "blocks": blocks,
        **_common_payload(config, out, backend, prompt_variant),
    }
    data = _call(server, "/v1/synthesize", payload)
    failed = [b["index"] for b in data["blocks"] if b["status"] != "ok"]
    click.echo(f"artifacts: {data['blocks_dir']}")
    if failed:
        click.echo(f"placeholder blocks: {failed}")
    sys.exit(EXIT_PARTIAL if failed else EXIT_OK)


@main.command()
@click.option("--design", required=True, help="Path to the design image")
@click.option("--blocks", required=True, help="Path to a blocks JSON file")
@click.option("--fragments", required=True, help="Directory with <i>.fragment.html files")
@server_option
@config_option
@out_option
@backend_option
def assemble(design, blocks, fragments, server, config, out, backend) -> None:
    """Assemble block fragments into candidate pages."""
    payload = {
        "design": design,
        "blocks": blocks,
        "fragments": fragments,
        **_common_payload(config, out, backend, None),
    }
    data = _call(server, "/v1/assemble", payload)
    click.echo(f"aps: {data['aps_path']}")
    if data["ms_path"]:
        click.echo(f"ms: {data['ms_path']}")
    elif data["ms_skip_reason"]:
        click.echo(f"ms skipped: {data['ms_skip_reason']}")
    elif data["ms_error"]:
        click.echo(f"ms failed: {data['ms_error']}")


@main.command()
@click.option("--design", required=True, help="Path to the design image")
@click.option("--aps", required=True, help="Absolute-positioning candidate page")
@click.option("--ms", default=None, help="Model-assembled candidate page")
@server_option
@config_option
@out_option
def verify(design, aps, ms, server, config, out) -> None:
    """Score candidate pages against the design and pick the best."""
    payload = {
        "design": design,
        "aps": aps,
        "ms": ms,
        **_common_payload(config, out, None, None),
    }
    data = _call(server, "/v1/verify", payload)
    for entry in data["candidates"]:
        score = entry.get("verify_score")
        shown = f"{score:.4f}" if score is not None else f"failed: {entry.get('error')}"
        click.echo(f"candidate {entry['strategy']}: {shown}")
    click.echo(f"selected: {data['selected']} -> {data['selected_path']}")


@main.command(name="eval")
@click.option("--candidate", required=True, help="Generated page to score")
@click.option("--reference", required=True, help="Reference page")
@click.option("--design", required=True, help="Design image")
@server_option
@config_option
@out_option
def eval_cmd(candidate, reference, design, server, config, out) -> None:
    """Compute benchmark metrics for one generated page."""
    payload = {
        "candidate": candidate,
        "reference": reference,
        "design": design,
        **_common_payload(config, out, None, None),
    }
    data = _call(server, "/v1/eval", payload)
    sample = data["samples"][0]
    for metric in ("tree_bleu", "mae", "clip_sim", "verify_score"):
        value = sample[metric]
        click.echo(f"{metric}: {value if value is None else f'{value:.4f}'}")
    click.echo(f"metrics json: {data['run_dir']}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8023, show_default=True)
def serve(host, port) -> None:
    """Start the HTTP service."""
    import uvicorn

    uvicorn.run("blockcoder.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
