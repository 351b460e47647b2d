"""ppgnet command line: train, export, serve, make-fixtures."""
from __future__ import annotations

from pathlib import Path

import click

from . import __version__
from .fmx import save_ppg
from .infer import export_ppg
from .labels import SETS
from .model import load_checkpoint
from .server import serve_stdio, serve_tcp
from .synthdata import write_fixture_dataset
from .train import TrainConfig, train as run_train
from .wavio import read_wav


@click.group()
@click.version_option(__version__)
def main():
    """Framewise phoneme classifier: training, PPG export, live serving."""


@main.command()
@click.argument("dataset_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("checkpoint", type=click.Path(dir_okay=False))
@click.option("--set", "set_name", type=click.Choice(sorted(SETS)), default="phoneme5",
              show_default=True, help="Output phoneme set.")
@click.option("--source-set", default=None,
              help="Label set of the .phn files when they need collapsing (e.g. timit61).")
@click.option("--epochs", type=int, default=10, show_default=True)
@click.option("--lr", type=float, default=1e-3, show_default=True)
@click.option("--batch-size", type=int, default=8, show_default=True)
@click.option("--hidden", type=int, default=1024, show_default=True)
@click.option("--seed", type=int, default=17, show_default=True)
def train(dataset_dir, checkpoint, set_name, source_set, epochs, lr, batch_size,
          hidden, seed):
    """Train on a directory of wav + .phn pairs and write a checkpoint."""
    cfg = TrainConfig(
        set_name=set_name, source_set=source_set, epochs=epochs, lr=lr,
        batch_size=batch_size, hidden=hidden, seed=seed,
    )
    run_train(dataset_dir, cfg, checkpoint_path=checkpoint, log=click.echo)
    click.echo(f"wrote {checkpoint}")


@main.command()
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.argument("wav", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_fmx", type=click.Path(dir_okay=False))
def export(checkpoint, wav, out_fmx):
    """Export the posteriorgram of WAV as an FMX1 file."""
    model, set_name, _ = load_checkpoint(checkpoint)
    rows = export_ppg(model, read_wav(wav))
    save_ppg(out_fmx, rows)
    click.echo(f"wrote {out_fmx}: {rows.shape[0]} frames x {rows.shape[1]} ({set_name})")


@main.command()
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.option("--transport", type=click.Choice(["stdio", "tcp"]), default="stdio",
              show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=0, show_default=True,
              help="TCP port; 0 picks a free one (printed on stderr).")
def serve(checkpoint, transport, host, port):
    """Serve PPGSTREAM for one session."""
    model, set_name, _ = load_checkpoint(checkpoint)
    if transport == "stdio":
        serve_stdio(model, set_name)
    else:
        serve_tcp(model, set_name, host, port)


@main.command(name="make-fixtures")
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--utterances", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=23, show_default=True)
def make_fixtures(out_dir, utterances, seed):
    """Generate the synthetic labeled dataset used for CI and examples."""
    write_fixture_dataset(out_dir, utterances, seed)
    click.echo(f"wrote {utterances} labeled utterances under {out_dir}")


if __name__ == "__main__":
    main()
