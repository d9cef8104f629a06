"""Command-line entry point: corrupt | eval | report | selftest | serve.

Exit codes: 0 ok, 1 validation error, 2 internal error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .errors import RobobenchError
from .harness import (EvalOptions, RunConfig, build_report, load_score_table,
                      run_corrupt, run_eval, run_selftest, save_score_table)
from .dataio import load_manifest, parse_submission
from .params import load_params
from .tracks import parse_track


@click.group()
@click.version_option(__version__)
def cli():
    """Corruption synthesis and robustness scoring for driving perception."""


@cli.command()
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True, help="Global seed.")
@click.option("--params", "params_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Override the severity-parameter table.")
@click.option("--jobs", default=1, show_default=True)
def corrupt(manifest_path, out_dir, seed, params_path, jobs):
    """Synthesize the corrupted dataset a manifest describes."""
    manifest = load_manifest(manifest_path)
    cfg = RunConfig(global_seed=seed, jobs=jobs, params=load_params(params_path))
    new_manifest, failures = run_corrupt(manifest, out_dir, cfg)
    click.echo(f"wrote {len(new_manifest.samples)} samples to {out_dir}")
    if failures:
        click.echo(f"{len(failures)} sample(s) failed:", err=True)
        for sid, reason in failures:
            click.echo(f"  {sid}: {reason}", err=True)
        raise SystemExit(1)


@cli.command("eval")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--submission", "submission_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--track", "track_name", default=None,
              help="Expected track; must match the manifest when given.")
@click.option("--seed", default=0, show_default=True)
@click.option("--params", "params_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", default=None, type=click.Path(dir_okay=False),
              help="Write the score table JSON here (default: stdout).")
@click.option("--jobs", default=1, show_default=True)
@click.option("--median-scale", is_flag=True, help="Depth: median-align predictions.")
@click.option("--micro-average", is_flag=True, help="Depth: pool pixels, not images.")
def eval_cmd(manifest_path, submission_path, track_name, seed, params_path,
             out_path, jobs, median_scale, micro_average):
    """Score a submission against a manifest, per corruption type."""
    manifest = load_manifest(manifest_path)
    if track_name is not None and parse_track(track_name) is not manifest.track:
        raise RobobenchError(
            f"--track {track_name} does not match manifest track {manifest.track}")
    submission = parse_submission(submission_path, manifest.track,
                                  known_ids=set(manifest.sample_ids()))
    cfg = RunConfig(global_seed=seed, jobs=jobs, params=load_params(params_path))
    options = EvalOptions(median_scaling=median_scale, micro_average=micro_average)
    table, warnings = run_eval(manifest, submission, cfg, options)
    for w in warnings:
        click.echo(f"warning: {w}", err=True)
    if out_path:
        save_score_table(table, out_path)
        click.echo(f"score table written to {out_path}")
    else:
        click.echo(json.dumps(table.to_json(), indent=2))


@cli.command()
@click.argument("tables", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def report(tables, out_dir):
    """Build a ranked leaderboard (CSV + Markdown) from score tables."""
    loaded = [load_score_table(t) for t in tables]
    csv_text, md_text, ranked = build_report(loaded)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "leaderboard.csv").write_text(csv_text, encoding="utf-8")
    (out / "leaderboard.md").write_text(md_text, encoding="utf-8")
    click.echo(f"leaderboard over {len(ranked)} table(s) written to {out}")


@cli.command()
@click.option("--params", "params_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
def selftest(params_path):
    """Run the embedded golden vectors and report pass/fail."""
    ok, lines = run_selftest(params_path)
    for line in lines:
        click.echo(line)
    if not ok:
        raise SystemExit(1)


@cli.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
def serve(config_path):
    """Run the submission-scoring HTTP service."""
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig.load(config_path)
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except SystemExit as e:
        return int(e.code or 0)
    except click.ClickException as e:
        e.show()
        return 1
    except RobobenchError as e:
        click.echo(f"error: {e}", err=True)
        return 1
    except Exception as e:  # pragma: no cover - internal failure path
        click.echo(f"internal error: {e}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
