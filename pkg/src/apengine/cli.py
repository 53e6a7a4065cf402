"""Operator command line: ingest, query, serve, facts, supersede, export,
digest, stats.

Machine output goes to stdout only; diagnostics to stderr. Exit codes:
0 ok/accepted, 3 accepted with flags, 4 rejected, 2 usage, 1 anything else.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import load_config
from .engine import Engine
from .errors import EngineError


def _engine(ctx: click.Context) -> Engine:
    if ctx.obj.get("engine") is None:
        ctx.obj["engine"] = Engine(ctx.obj["config"])
    return ctx.obj["engine"]


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None, help="Config file path.")
@click.option("--store", "store_path", type=click.Path(), default=None, help="Store root directory.")
@click.pass_context
def main(ctx: click.Context, config_path, store_path):
    ctx.ensure_object(dict)
    overrides = {"store_path": store_path} if store_path else {}
    ctx.obj["config"] = load_config(config_path, overrides)


@main.command()
@click.argument("file", type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["ap-json", "markdown"]), default=None)
@click.pass_context
def ingest(ctx, file, fmt):
    """Run the submission pipeline on FILE."""
    path = Path(file)
    if fmt is None:
        fmt = "ap-json" if path.suffix == ".json" else "markdown"
    try:
        report, committed = _engine(ctx).ingest(path.read_bytes(), format=fmt, actor="cli")
    except EngineError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    for finding in report.findings:
        click.echo(f"[{finding.severity}] {finding.gate}: {finding.message}", err=True)
    if committed is None:
        click.echo(f"rejected ({len(report.findings)} finding(s))")
        sys.exit(4)
    pub_id, version = committed
    click.echo(f"{report.verdict} {pub_id}@v{version}")
    sys.exit(0 if report.verdict == "accepted" else 3)


@main.command()
@click.argument("question")
@click.option("--zoom", type=click.Choice(["headline", "abstract", "detailed", "data"]), default="abstract")
@click.option("--json", "as_json", is_flag=True, help="Emit the full QueryResponse JSON.")
@click.pass_context
def query(ctx, question, zoom, as_json):
    """Ask QUESTION against the store."""
    engine = _engine(ctx)
    try:
        answer = engine.answer(question, zoom)
    except EngineError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    if as_json:
        from .api import query_response_body

        summary = answer.text if answer.refused else engine.query.answer(question, "headline", log=False).text
        click.echo(json.dumps(query_response_body(answer, summary), ensure_ascii=False, indent=2))
        return
    click.echo(answer.text)
    if answer.citations:
        click.echo("")
        click.echo("Citations:")
        for c in answer.citations:
            click.echo(f"  [{c.chunk_id}] {c.pub_id}@v{c.version} (score {c.score:.3f})")
    for w in answer.warnings:
        click.echo(f"warning: {w}", err=True)


@main.command()
@click.option("--addr", default="127.0.0.1:8080", help="host:port to bind.")
@click.pass_context
def serve(ctx, addr):
    """Start the HTTP service."""
    import uvicorn

    from .api import create_app

    host, _, port = addr.partition(":")
    app = create_app(_engine(ctx))
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8080))


@main.command()
@click.option("--subject", "-s", default=None)
@click.option("--relation", "-r", default=None)
@click.option("--object", "-o", "object_", default=None)
@click.option("--include-superseded", is_flag=True)
@click.pass_context
def facts(ctx, subject, relation, object_, include_superseded):
    """List matching claims as a table."""
    if subject is None and relation is None and object_ is None:
        raise click.UsageError("give at least one of --subject/--relation/--object")
    engine = _engine(ctx)
    result = engine.facts(subject=subject, relation=relation, object=object_, include_superseded=include_superseded)
    for w in result.warnings:
        click.echo(f"warning: {w}", err=True)
    for entry in result.results:
        claim = entry["claim"]
        graph = engine.graph
        from .models import LiteralObject

        obj = claim.object.key() if isinstance(claim.object, LiteralObject) else graph.canonical_name(claim.object)
        eff = f" effect={claim.effect.estimate:g} se={claim.effect.se:g}" if claim.effect else ""
        synth = entry["synthesis"]
        conf = f" confidence={synth.confidence}" if synth else ""
        click.echo(
            f"{graph.canonical_name(claim.subject)}\t{claim.relation}\t{obj}\t"
            f"{claim.source.pub_id}@v{claim.source.version}{eff}{conf}"
        )


@main.command()
@click.argument("old")
@click.option("--by", "new", required=True)
@click.pass_context
def supersede(ctx, old, new):
    """Mark OLD (pub_id@vN) as superseded by --by pub_id@vM."""

    def parse(ref: str) -> tuple[str, int]:
        pub_id, sep, v = ref.rpartition("@v")
        if not sep or not v.isdigit():
            raise click.UsageError(f"expected pub_id@vN, got {ref!r}")
        return pub_id, int(v)

    try:
        _engine(ctx).supersede(parse(old), parse(new), actor="cli")
    except EngineError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    click.echo(f"superseded {old} by {new}")


@main.command()
@click.argument("pub_id")
@click.option("--version", type=int, default=None)
@click.option("-o", "outfile", type=click.Path(), default=None)
@click.pass_context
def export(ctx, pub_id, version, outfile):
    """Print-ready markdown for a publication."""
    try:
        text = _engine(ctx).export_manuscript(pub_id, version)
    except EngineError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    if outfile:
        Path(outfile).write_text(text, encoding="utf-8")
        click.echo(f"wrote {outfile}", err=True)
    else:
        click.echo(text)


@main.command()
@click.option("--since", default=None, help="ISO date/timestamp lower bound.")
@click.pass_context
def digest(ctx, since):
    """Author-facing feedback digest."""
    click.echo(_engine(ctx).feedback_digest(since))


@main.command()
@click.argument("dataset_id")
@click.pass_context
def stats(ctx, dataset_id):
    """Summary statistics for a dataset."""
    try:
        table = _engine(ctx).dataset_stats(dataset_id)
    except EngineError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    for name, row in table.items():
        cells = "\t".join(f"{k}={v}" for k, v in row.items())
        click.echo(f"{name}\t{cells}")


if __name__ == "__main__":
    main()
