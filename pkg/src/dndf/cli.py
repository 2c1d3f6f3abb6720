"""Command-line entry point: ``dndf generate | run | report | check``.

Exit codes: 0 on success, 1 for invalid input or usage, 2 for runtime and
numeric failures.
"""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import click
import yaml

from .dataset import SyntheticCohortSpec, generate_synthetic
from .errors import RuntimeFailure, ValidationError
from .preprocess import Stage
from .runner import MODEL_NAMES, ExperimentConfig, load_config, render_text, run_all
from .selfcheck import run_all_checks

EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _read_yaml_mapping(path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: expected a mapping at the top level")
    return data


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log per-model progress.")
def main(verbose):
    """Neural decision forests and baselines for mortality prediction."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--spec", "spec_path", type=click.Path(dir_okay=False),
              help="YAML file with synthetic cohort settings (defaults if omitted).")
@click.option("--seed", type=int, help="Override the cohort seed.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="Destination CSV file.")
def generate(spec_path, seed, out_path):
    """Write a synthetic cohort file."""
    fields = _read_yaml_mapping(spec_path) if spec_path else {}
    try:
        spec = SyntheticCohortSpec(**fields)
    except TypeError as exc:
        raise ValidationError(f"bad cohort spec: {exc}") from None
    if seed is not None:
        spec = replace(spec, seed=seed)
    cohort = generate_synthetic(spec)
    cohort.save(out_path)
    click.echo(f"wrote {len(cohort)} records to {out_path}")


@main.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False),
              help="Experiment YAML (defaults if omitted).")
@click.option("--stage", type=click.Choice([s.value for s in Stage] + ["all"]), default=None,
              help="Run one stage, or all of them.")
@click.option("--model", type=click.Choice(list(MODEL_NAMES) + ["all"]), default=None,
              help="Run one model, or all of them.")
@click.option("--seed", type=int, default=None, help="Override the experiment seed.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Output directory for reports, models and the manifest.")
def run(config_path, stage, model, seed, out_dir):
    """Run the staged experiment and write its artifacts."""
    cfg = load_config(config_path) if config_path else ExperimentConfig()
    changes = {}
    if stage is not None:
        changes["stages"] = tuple(s.value for s in Stage) if stage == "all" else (stage,)
    if model is not None:
        changes["models"] = MODEL_NAMES if model == "all" else (model,)
    if seed is not None:
        changes["seed"] = seed
    if changes:
        cfg = replace(cfg, **changes)
    out_dir = out_dir or cfg.out_dir
    if out_dir is None:
        raise click.UsageError("no output directory: pass --out or set out_dir in the config")
    _, manifest = run_all(cfg, out_dir)
    click.echo((Path(out_dir) / "report.txt").read_text(encoding="utf-8"), nl=False)
    click.echo(f"manifest: {Path(out_dir) / 'manifest.json'}")


@main.command()
@click.argument("results", type=click.Path(exists=True))
def report(results):
    """Re-render the text report from results.json (or a run directory)."""
    path = Path(results)
    if path.is_dir():
        path = path / "results.json"
    try:
        structured = json.loads(path.read_text(encoding="utf-8"))
        text = render_text(structured)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ValidationError(f"cannot render {path}: {exc}") from None
    click.echo(text, nl=False)


@main.command()
@click.option("--trials", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def check(trials, seed):
    """Finite-difference gradient checks and routing invariants."""
    results = run_all_checks(trials, seed)
    for r in results:
        click.echo(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    if not all(r.passed for r in results):
        raise RuntimeFailure("self-check failed")


def entry(argv=None) -> int:
    """Run the CLI and translate errors into exit codes."""
    try:
        main.main(args=argv, prog_name="dndf", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_VALIDATION
    except click.UsageError as exc:
        exc.show()
        return EXIT_VALIDATION
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_VALIDATION
    except RuntimeFailure as exc:
        click.echo(f"runtime error: {exc}", err=True)
        return EXIT_RUNTIME
    except click.exceptions.Exit as exc:
        return exc.exit_code
    return 0


def console() -> None:
    sys.exit(entry())
