"""`syntaxprobe-extract`: dump per-layer features for an audio list."""

from __future__ import annotations

import logging
import sys

import click

from .audio import AudioError
from .extract import DEFAULT_CHUNK_S, run_job_from_list
from .store import StoreError


def _parse_layers(text: str) -> list[int] | None:
    if text == "all":
        return None
    if "-" in text and "," not in text:
        lo, hi = text.split("-", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(p) for p in text.split(",") if p != ""]


@click.command()
@click.option("--model", "model_ref", required=True,
              help="Checkpoint id/path, or random-init:SEED for the baseline.")
@click.option("--audio-list", required=True, type=click.Path(exists=True, dir_okay=False),
              help="TSV: path<TAB>utterance_id[<TAB>sample_rate].")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--layers", default="all", show_default=True,
              help="'all', a range like 0-24, or a comma list.")
@click.option("--arch", default="large", show_default=True,
              help="Architecture preset (large/base/tiny) or config JSON; "
                   "used with random-init.")
@click.option("--device", default="cpu", show_default=True)
@click.option("--chunk-s", default=DEFAULT_CHUNK_S, show_default=True, type=float,
              help="Recordings longer than this run in chunks.")
@click.option("--verbose", is_flag=True)
def extract_command(model_ref, audio_list, out_dir, layers, arch, device, chunk_s, verbose):
    """Run the frozen encoder over every listed recording and write features."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        selection = _parse_layers(layers)
    except ValueError:
        raise click.UsageError(f"unparsable --layers {layers!r}") from None
    result = run_job_from_list(
        audio_list, model_ref, out_dir,
        arch=arch, layers=selection, device=device, chunk_s=chunk_s)
    click.echo(f"wrote {len(result.files)} feature files and {result.manifest_path}", err=True)


def main(argv: list[str] | None = None) -> int:
    try:
        extract_command.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return 1
    except (AudioError, StoreError, ValueError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
