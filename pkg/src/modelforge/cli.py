"""Command-line interface: a thin client of the REST API, plus local
template tooling (validate, package, scaffold) and the server entrypoint.

Exit codes: 0 success, 1 API or connection error, 2 usage error.
"""

from __future__ import annotations

import json
import sys
import threading
import time
from pathlib import Path

import click
import httpx
import yaml

from .demo import scaffold_project
from .errors import PlatformError, ValidationError
from .template import package, validate_layout

DEFAULT_SERVER = "http://127.0.0.1:8765"


class Ctx:
    def __init__(self, server: str, token: str | None, output: str):
        self.server = server.rstrip("/")
        self.token = token
        self.output = output

    def client(self) -> httpx.Client:
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        return httpx.Client(base_url=self.server, headers=headers, timeout=120.0)


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _request(ctx: Ctx, method: str, path: str, **kwargs):
    try:
        with ctx.client() as client:
            resp = client.request(method, path, **kwargs)
    except httpx.HTTPError as exc:
        _fail(f"cannot reach server at {ctx.server}: {exc}")
    if resp.status_code >= 400:
        try:
            err = resp.json().get("error", {})
            _fail(f"{err.get('code', resp.status_code)}: {err.get('message', resp.text)}")
        except json.JSONDecodeError:
            _fail(f"HTTP {resp.status_code}: {resp.text}")
    if resp.headers.get("content-type", "").startswith("application/json"):
        return resp.json()
    return resp.content


def _emit(ctx: Ctx, doc) -> None:
    if ctx.output == "json":
        click.echo(json.dumps(doc, indent=2, sort_keys=True))
    else:
        _print_table(doc)


def _print_table(doc) -> None:
    rows = doc if isinstance(doc, list) else [doc]
    if not rows:
        click.echo("(empty)")
        return
    if not isinstance(rows[0], dict):
        for r in rows:
            click.echo(str(r))
        return
    flat_rows = [_flatten(r) for r in rows]
    cols: list[str] = []
    for r in flat_rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    widths = {c: max(len(c), *(len(str(r.get(c, ""))) for r in flat_rows)) for c in cols}
    click.echo("  ".join(c.ljust(widths[c]) for c in cols))
    for r in flat_rows:
        click.echo("  ".join(str(r.get(c, "")).ljust(widths[c]) for c in cols))


def _flatten(doc: dict) -> dict:
    out = {}
    for k, v in doc.items():
        if isinstance(v, (dict, list)):
            text = json.dumps(v, sort_keys=True)
            out[k] = text if len(text) <= 48 else text[:45] + "..."
        else:
            out[k] = v
    return out


@click.group()
@click.option("--server", "-s", envvar="MF_SERVER", default=DEFAULT_SERVER,
              show_default=True, help="platform REST endpoint")
@click.option("--token", envvar="MF_TOKEN", default=None, help="bearer token")
@click.option("--output", "-o", type=click.Choice(["json", "table"]),
              default="table", show_default=True)
@click.pass_context
def main(ctx, server, token, output):
    """Model lifecycle platform CLI."""
    ctx.obj = Ctx(server, token, output)


# -- server --------------------------------------------------------------------


@main.command()
@click.option("--config", "config_path", type=click.Path(), default="modelforge.yaml")
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
def serve(config_path, host, port):
    """Run the platform server."""
    import uvicorn

    from .api import create_app
    from .platform import Platform, PlatformConfig

    cfg = PlatformConfig.load(config_path)
    if host:
        cfg.host = host
    if port:
        cfg.port = port
    platform = Platform(cfg)
    ui_dir = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    app = create_app(platform, ui_dir=ui_dir if ui_dir.is_dir() else None)

    stop = threading.Event()

    def ticker():
        while not stop.is_set():
            platform.tick()
            time.sleep(0.25)

    t = threading.Thread(target=ticker, daemon=True)
    t.start()
    try:
        uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")
    finally:
        stop.set()
        platform.close()


# -- template ---------------------------------------------------------------------


@main.group()
def template():
    """Template authoring and registry commands."""


@template.command("validate")
@click.argument("project_dir", type=click.Path(exists=True))
@click.pass_obj
def template_validate(ctx: Ctx, project_dir):
    """Validate a template project layout."""
    report = validate_layout(project_dir)
    click.echo(report.summary())
    sys.exit(0 if report.ok else 1)


@template.command("package")
@click.argument("project_dir", type=click.Path(exists=True))
@click.option("--out", "-O", type=click.Path(), default=None,
              help="output archive path (defaults to <name>-<version>.tmpl.tgz)")
@click.pass_obj
def template_package(ctx: Ctx, project_dir, out):
    """Package a template project into a .tmpl.tgz archive."""
    try:
        archive = package(project_dir)
    except (PlatformError, OSError) as exc:
        report = getattr(exc, "report", None)
        if report is not None:
            click.echo(report.summary(), err=True)
        _fail(str(exc))
    manifest = archive.manifest
    path = Path(out) if out else Path(f"{manifest.name}-{manifest.version}.tmpl.tgz")
    path.write_bytes(archive.data)
    _emit(ctx, {"archive": str(path), "name": manifest.name,
                "version": manifest.version, "digest": archive.digest})


@template.command("publish")
@click.argument("source", type=click.Path(exists=True))
@click.pass_obj
def template_publish(ctx: Ctx, source):
    """Publish a project directory or packaged archive to the store."""
    src = Path(source)
    if src.is_dir():
        try:
            data = package(src).data
        except PlatformError as exc:
            _fail(str(exc))
    else:
        data = src.read_bytes()
    doc = _request(ctx, "POST", "/v1/templates", content=data,
                   headers={"Content-Type": "application/gzip"})
    _emit(ctx, doc)


@template.command("list")
@click.option("--prefix", default=None)
@click.pass_obj
def template_list(ctx: Ctx, prefix):
    params = {"prefix": prefix} if prefix else {}
    doc = _request(ctx, "GET", "/v1/templates", params=params)
    _emit(ctx, [{"name": t["name"], "version": t["version"],
                 "digest": t["digest"][:12]} for t in doc])


@main.command()
@click.argument("dest", type=click.Path())
@click.option("--name", default="hello-model")
@click.pass_obj
def scaffold(ctx: Ctx, dest, name):
    """Create a boilerplate template project."""
    try:
        path = scaffold_project(dest, name=name)
    except ValidationError as exc:
        _fail(str(exc))
    _emit(ctx, {"scaffolded": str(path), "name": name})


# -- model ---------------------------------------------------------------------------


@main.group()
def model():
    """Model lifecycle commands."""


@model.command("create")
@click.option("--template", "-t", "template_ref", required=True,
              help="template as name@version (version optional)")
@click.option("--config", "-c", "config_path", type=click.Path(exists=True),
              required=True, help="model config YAML/JSON file")
@click.option("--idempotency-key", default=None)
@click.pass_obj
def model_create(ctx: Ctx, template_ref, config_path, idempotency_key):
    config = yaml.safe_load(Path(config_path).read_text("utf-8")) or {}
    headers = {"Idempotency-Key": idempotency_key} if idempotency_key else {}
    doc = _request(ctx, "POST", "/v1/models",
                   json={"template": template_ref, "config": config},
                   headers=headers)
    if ctx.output == "json":
        _emit(ctx, doc)
    else:
        click.echo(doc["model_id"])


@model.command("list")
@click.pass_obj
def model_list(ctx: Ctx):
    doc = _request(ctx, "GET", "/v1/models")
    if ctx.output == "json":
        _emit(ctx, doc)
    else:
        _emit(ctx, [{"model_id": m["model_id"], "state": m["state"],
                     "template": f'{m["template"]["name"]}@{m["template"]["version"]}',
                     "serving": m["serving_version"]} for m in doc])


@model.command("get")
@click.argument("model_id")
@click.pass_obj
def model_get(ctx: Ctx, model_id):
    _emit(ctx, _request(ctx, "GET", f"/v1/models/{model_id}"))


@model.command("delete")
@click.argument("model_id")
@click.pass_obj
def model_delete(ctx: Ctx, model_id):
    _emit(ctx, _request(ctx, "DELETE", f"/v1/models/{model_id}"))


@model.command("train")
@click.argument("model_id")
@click.option("--reason", default="manual",
              type=click.Choice(["manual", "scheduled", "drift", "accuracy"]))
@click.pass_obj
def model_train(ctx: Ctx, model_id, reason):
    _emit(ctx, _request(ctx, "POST", f"/v1/models/{model_id}/train",
                        json={"reason": reason}))


@model.command("approve")
@click.argument("model_id")
@click.pass_obj
def model_approve(ctx: Ctx, model_id):
    _emit(ctx, _request(ctx, "POST", f"/v1/models/{model_id}/approve"))


@model.command("reject")
@click.argument("model_id")
@click.pass_obj
def model_reject(ctx: Ctx, model_id):
    _emit(ctx, _request(ctx, "POST", f"/v1/models/{model_id}/reject"))


@model.command("rollback")
@click.argument("model_id")
@click.option("--version", "-v", type=int, required=True)
@click.pass_obj
def model_rollback(ctx: Ctx, model_id, version):
    _emit(ctx, _request(ctx, "POST", f"/v1/models/{model_id}/rollback",
                        json={"version": version}))


# -- inference and monitoring ------------------------------------------------------


@main.command()
@click.argument("model_id")
@click.option("--data", "-d", required=True,
              help="JSON request object, or @path to a JSON file")
@click.pass_obj
def infer(ctx: Ctx, model_id, data):
    """Run one inference against a serving model."""
    if data.startswith("@"):
        data = Path(data[1:]).read_text("utf-8")
    try:
        body = json.loads(data)
    except json.JSONDecodeError as exc:
        raise click.UsageError(f"--data is not valid JSON: {exc}") from exc
    _emit(ctx, _request(ctx, "POST", f"/v1/models/{model_id}/infer", json=body))


@main.command()
@click.argument("model_id")
@click.option("--inference-id", "-i", required=True)
@click.option("--truth", "-g", required=True, help="ground truth label/decision")
@click.pass_obj
def feedback(ctx: Ctx, model_id, inference_id, truth):
    """Report the observed outcome for a logged inference."""
    _emit(ctx, _request(ctx, "POST", f"/v1/models/{model_id}/feedback",
                        json={"inference_id": inference_id, "ground_truth": truth}))


@main.command()
@click.argument("model_id")
@click.option("--window", type=int, default=50, show_default=True)
@click.pass_obj
def metrics(ctx: Ctx, model_id, window):
    """Training metrics plus rolling feedback accuracy."""
    _emit(ctx, _request(ctx, "GET", f"/v1/models/{model_id}/metrics",
                        params={"window": window}))


@main.command()
@click.argument("model_id")
@click.pass_obj
def drift(ctx: Ctx, model_id):
    """Run a drift check against the model's training snapshot."""
    _emit(ctx, _request(ctx, "GET", f"/v1/models/{model_id}/drift"))


@main.command()
@click.option("--since", type=int, default=0, show_default=True)
@click.option("--follow", "-f", is_flag=True, default=False)
@click.pass_obj
def events(ctx: Ctx, since, follow):
    """Print the event journal; --follow streams live events."""
    params = {"since": since, "follow": str(follow).lower()}
    try:
        with ctx.client() as client:
            with client.stream("GET", "/v1/events", params=params, timeout=None) as resp:
                if resp.status_code >= 400:
                    _fail(f"HTTP {resp.status_code}")
                for line in resp.iter_lines():
                    if line.startswith("data: "):
                        click.echo(line[6:])
    except httpx.HTTPError as exc:
        _fail(f"cannot reach server at {ctx.server}: {exc}")
    except KeyboardInterrupt:
        pass


if __name__ == "__main__":
    main()
