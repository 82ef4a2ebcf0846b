"""Command-line entry point: ``ambiance <command> DATASET [options]``.

Exit codes: 0 success, 1 validation failure, 2 stage error.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from .ambiance_model import TARGET_MODES
from .clustering import K_CANDIDATES
from .errors import AmbianceError, LayoutInvalid, StageError
from .pipeline import EXIT_INVALID, EXIT_OK, EXIT_STAGE, DatasetLayout, RunConfig, run_stages, validate_layout


def _k_list(ctx, param, value: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise click.BadParameter("expected comma-separated integers")
    if not ks or min(ks) < 2:
        raise click.BadParameter("every k must be at least 2")
    return ks


def _run_options(f):
    options = [
        click.argument("dataset", type=click.Path(file_okay=False, path_type=Path)),
        click.option("--out", default="out", show_default=True, type=click.Path(file_okay=False),
                     help="Output directory."),
        click.option("--seed", default=0, show_default=True, type=int, help="Seed for every random choice."),
        click.option("--annotations", default="auto", show_default=True,
                     type=click.Choice(["auto", "remote", "file", "stub"]),
                     help="Face annotation source; auto uses annotations.jsonl when present, else the stub."),
        click.option("--endpoint", default=None, help="Remote annotation endpoint (else AMBIANCE_FACE_ENDPOINT)."),
        click.option("--alpha", default=0.05, show_default=True, type=click.FloatRange(0, 1, min_open=True),
                     help="Significance level for correlation cells."),
        click.option("--target-mode", default="target", show_default=True,
                     type=click.Choice(list(TARGET_MODES)), help="How a cluster is scored."),
        click.option("--k-candidates", default=",".join(map(str, K_CANDIDATES)), show_default=True,
                     callback=_k_list, help="Candidate cluster counts."),
        click.option("--allow-partial", is_flag=True, help="Accept places with 5 to 24 pictures."),
        click.option("--workers", default=1, show_default=True, type=click.IntRange(1),
                     help="Worker processes for extraction."),
    ]
    for opt in reversed(options):
        f = opt(f)
    return f


def _execute(command: str, dataset: Path, **kw) -> None:
    config = RunConfig(
        annotations=kw["annotations"], seed=kw["seed"], k_candidates=kw["k_candidates"], alpha=kw["alpha"],
        target_mode=kw["target_mode"], allow_partial=kw["allow_partial"], out=kw["out"], workers=kw["workers"],
        endpoint=kw["endpoint"],
    )
    layout = DatasetLayout(dataset)
    try:
        st = run_stages(layout, config, command)
    except LayoutInvalid as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INVALID)
    except StageError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    if st.extract is not None:
        click.echo(f"pictures: {st.extract.computed} computed, {st.extract.reused} reused")
    click.echo(f"{command}: done, outputs in {config.out}")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool) -> None:
    """Predict place ambiance from visitors' profile pictures."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


def _command(name: str, doc: str):
    @_run_options
    def cmd(dataset, **kw):
        _execute(name, dataset, **kw)

    cmd.__doc__ = doc
    main.command(name)(cmd)


_command("extract", "Extract one feature record per picture (cached by content hash).")
_command("aggregate", "Aggregate picture features into 129-entry place profiles.")
_command("cluster", "Cluster the 72 ambiance ratings and apply the relabel config.")
_command("correlate", "Correlate place profiles with both rating sets.")
_command("predict", "Leave-one-out prediction of on-the-spot ambiance.")
_command("compare", "People versus algorithm comparison table.")
_command("pipeline", "Run every stage and write the full report bundle.")


@main.command()
@click.argument("dataset", type=click.Path(file_okay=False, path_type=Path))
@click.option("--allow-partial", is_flag=True, help="Accept places with 5 to 24 pictures.")
def validate(dataset: Path, allow_partial: bool) -> None:
    """Check layout, annotations, ratings coverage and manifest; exit 0 iff clean."""
    findings = validate_layout(DatasetLayout(dataset), allow_partial)
    for f in findings:
        click.echo(str(f))
    if findings:
        click.echo(f"{len(findings)} finding(s)", err=True)
        sys.exit(EXIT_INVALID)
    click.echo("clean")
    sys.exit(EXIT_OK)


@main.command()
@click.argument("dataset", type=click.Path(file_okay=False, path_type=Path))
@click.option("--places", default=14, show_default=True, type=click.IntRange(2))
@click.option("--pictures", default=25, show_default=True, type=click.IntRange(1))
@click.option("--size", default=72, show_default=True, type=click.IntRange(32))
@click.option("--seed", default=0, show_default=True, type=int)
def demo(dataset: Path, places: int, pictures: int, size: int, seed: int) -> None:
    """Write the seeded synthetic demo dataset to DATASET."""
    from .demo import make_demo_dataset

    try:
        make_demo_dataset(dataset, places, pictures, size, seed)
    except AmbianceError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    click.echo(f"demo dataset written to {dataset}")


if __name__ == "__main__":
    main()
