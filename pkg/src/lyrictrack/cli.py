"""Command-line interface: prepare, track, eval, synth, features.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 runtime error.
A ``key = value`` config file supplies defaults; explicit flags win.  Keys
may be global (``pace = fast``) or scoped (``track.features = chroma``).
"""
from __future__ import annotations

import sys
from pathlib import Path

import click

from . import __version__
from .audio import load_wav, save_wav, synth_score_audio
from .errors import ConfigError, DataError, EngineError, LyrictrackError
from .evaluate import run_benchmark
from .features import mfcc, log_mel, chroma, save_csv, save_fmx, stft
from .offline import dlnco, generate_pseudo_labels, mrms_dtw, offline_cost
from .online import OltwConfig
from .plotting import render_report_figures
from .score import build_timeline, parse_musicxml
from .tracker import measure_latency, track_file

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _read_config_file(path: str) -> dict:
    values: dict[str, dict[str, str]] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {raw!r} is not key = value")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        scope, _, name = key.rpartition(".")
        name = name.replace("-", "_")
        if scope:
            values.setdefault(scope, {})[name] = val
        else:
            for cmd in ("prepare", "track", "eval", "synth", "features"):
                values.setdefault(cmd, {}).setdefault(name, val)
    return values


def run_command(fn):
    """Translate package errors into the documented exit codes."""

    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except DataError as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(EXIT_DATA)
        except (EngineError, LyrictrackError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_RUNTIME)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@click.group()
@click.version_option(__version__)
@click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="key = value config file; command-line flags win.",
)
@click.pass_context
def main(ctx, config):
    """Real-time lyrics alignment: offline preparation, online tracking,
    and benchmark evaluation."""
    if config:
        try:
            ctx.default_map = _read_config_file(config)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)


@main.command()
@click.argument("score", type=click.Path(exists=True, dir_okay=False))
@click.argument("ref_wav", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--lyrics", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Sidecar lyrics text giving line breaks; omitted = one line.")
@click.option("--part", default=None, help="Vocal part id or name (default: most lyrics).")
@run_command
def prepare(score, ref_wav, out_dir, lyrics, part):
    """Offline phase: synthesize score audio, align it to the reference
    recording, and write the pseudo-labeled timeline.

    Outputs in OUT_DIR: score.wav, ref.wav (normalized copy),
    score_ref_path.csv, timeline.json.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vocal, accomp, tm = parse_musicxml(score, part_hint=part)
    lyrics_text = Path(lyrics).read_text(encoding="utf-8") if lyrics else None
    if lyrics_text is None:
        click.echo("warning: no lyrics sidecar; timeline will hold a single line", err=True)
    timeline = build_timeline(vocal, tm, lyrics_text)

    score_clip = synth_score_audio(vocal, tm, accomp)
    save_wav(out / "score.wav", score_clip)
    ref_clip = load_wav(ref_wav)
    save_wav(out / "ref.wav", ref_clip)

    score_ch = chroma(stft(score_clip))
    ref_ch = chroma(stft(ref_clip))
    score_stack, ref_stack, model = offline_cost(
        ref_ch, score_ch, dlnco(ref_ch), dlnco(score_ch)
    )
    path = mrms_dtw(score_stack, ref_stack, model)
    path.save_csv(out / "score_ref_path.csv")
    generate_pseudo_labels(timeline, path)
    timeline.save_json(out / "timeline.json")
    click.echo(f"prepared {out}: {len(list(timeline.iter_notes()))} notes, "
               f"{len(timeline.lines)} lines, path length {len(path)}")


@main.command(name="track")
@click.argument("prepared_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("target_wav", type=click.Path(exists=True, dir_okay=False))
@click.option("--features", default="chroma", show_default=True,
              help="Feature combination: chroma | mel | ppg:<set> | chroma+mfcc:<n> | chroma+ppg:<set>.")
@click.option("--ppg-provider", default=None,
              help="Target posteriors: file:<path>, exec:<cmdline>, or tcp:host:port.")
@click.option("--ref-ppg", default=None, help="Reference posteriors: file:<path>.")
@click.option("--pace", type=click.Choice(["realtime", "fast"]), default="fast",
              show_default=True, help="Release chunks on the 160 ms cadence or at full speed.")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Also write events to this JSONL file.")
@click.option("--window-seconds", type=float, default=3.0, show_default=True)
@click.option("--max-run-count", type=int, default=3, show_default=True)
@click.option("--median-filter", type=int, default=5, show_default=True)
@click.option("--pipeline", "pipeline_overrides", multiple=True,
              help="Grid-search override kind=norm,scales,distance, e.g. "
                   "chroma=linf,none,euclidean; repeatable.")
@click.option("--stacked-metric", type=click.Choice(["euclidean", "cosine"]),
              default="euclidean", show_default=True,
              help="Distance over stacked feature combinations.")
@run_command
def track_cmd(prepared_dir, target_wav, features, ppg_provider, ref_ppg, pace, out,
              window_seconds, max_run_count, median_filter, pipeline_overrides,
              stacked_metric):
    """Online phase: track TARGET_WAV against prepared artifacts, streaming
    lyric-position events as JSON lines on stdout."""
    oltw = OltwConfig(
        window_seconds=window_seconds,
        max_run_count=max_run_count,
        median_filter=median_filter,
    )
    events, run = track_file(
        target_wav, prepared_dir, features, ppg_provider, ref_ppg, pace, oltw,
        pipeline_overrides=pipeline_overrides, stacked_metric=stacked_metric,
    )
    sink = open(out, "w", encoding="utf-8") if out else None
    try:
        for ev in events:
            line = ev.to_jsonl()
            click.echo(line)
            if sink:
                sink.write(line + "\n")
    finally:
        if sink:
            sink.close()
    lat = measure_latency(run)
    if lat["chunks"]:
        click.echo(
            f"# {lat['chunks']} chunks, p50 {lat['p50_ms']:.1f} ms, "
            f"p95 {lat['p95_ms']:.1f} ms, rtf_p95 {lat['rtf_p95']:.3f}, "
            f"stalled {lat['stalled_frames']}",
            err=True,
        )


@main.command(name="eval")
@click.argument("dataset_root", type=click.Path(exists=True, file_okay=False))
@click.option("--features", "feature_names", multiple=True,
              default=("chroma", "chroma+ppg:phoneme5"), show_default=True,
              help="Feature combination; repeat for several rows.")
@click.option("--phases", default="offline,online", show_default=True,
              help="Comma list of phases to run.")
@click.option("--report", "report_dir", type=click.Path(file_okay=False), default=None,
              help="Write report.json/report.csv/report.txt and figures here.")
@click.option("--pco-level", type=click.Choice(["word", "note"]), default="word",
              show_default=True, help="Evaluate PCO on word or note onsets.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Parallel song workers.")
@click.option("--figures/--no-figures", default=True, show_default=True,
              help="Render per-song warping-path figures with the report.")
@click.option("--pipeline", "pipeline_overrides", multiple=True,
              help="Grid-search override kind=norm,scales,distance; repeatable.")
@click.option("--stacked-metric", type=click.Choice(["euclidean", "cosine"]),
              default="euclidean", show_default=True,
              help="Distance over stacked feature combinations.")
@run_command
def eval_cmd(dataset_root, feature_names, phases, report_dir, pco_level, jobs,
             figures, pipeline_overrides, stacked_metric):
    """Benchmark alignment over a dataset of song directories, reporting
    AAE/MAE/Std and PCO per feature type."""
    phase_list = tuple(p.strip() for p in phases.split(",") if p.strip())
    report, results = run_benchmark(
        dataset_root,
        feature_names,
        phases=phase_list,
        pco_level=pco_level,
        jobs=jobs,
        keep_paths=figures and report_dir is not None,
        pipeline_overrides=pipeline_overrides,
        stacked_metric=stacked_metric,
    )
    click.echo(report.to_table())
    if report_dir:
        rd = Path(report_dir)
        rd.mkdir(parents=True, exist_ok=True)
        report.save_json(rd / "report.json")
        report.save_csv(rd / "report.csv")
        (rd / "report.txt").write_text(report.to_table() + "\n", encoding="utf-8")
        if figures:
            written = render_report_figures(results, rd / "figures")
            click.echo(f"# wrote {len(written)} figures under {rd / 'figures'}", err=True)


@main.command()
@click.argument("score", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_wav", type=click.Path(dir_okay=False))
@click.option("--part", default=None, help="Vocal part id or name.")
@run_command
def synth(score, out_wav, part):
    """Render a MusicXML score as deadpan audio (16 kHz mono WAV)."""
    vocal, accomp, tm = parse_musicxml(score, part_hint=part)
    clip = synth_score_audio(vocal, tm, accomp)
    save_wav(out_wav, clip)
    click.echo(f"wrote {out_wav}: {clip.duration:.2f} s")


@main.command(name="features")
@click.argument("wav", type=click.Path(exists=True, dir_okay=False))
@click.option("--kind", type=click.Choice(["chroma", "mel", "mfcc:13", "mfcc:5"]),
              default="chroma", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Output file; .fmx binary or .csv text by extension.")
@run_command
def features_cmd(wav, kind, out):
    """Extract a feature matrix from WAV and dump it to FMX1 or CSV."""
    spec = stft(load_wav(wav))
    if kind == "chroma":
        fm = chroma(spec)
    elif kind == "mel":
        fm = log_mel(spec)
    else:
        fm = mfcc(log_mel(spec), int(kind.split(":")[1]))
    out_path = Path(out)
    if out_path.suffix == ".csv":
        save_csv(out_path, fm)
    else:
        save_fmx(out_path, fm)
    click.echo(f"wrote {out}: {fm.n_frames} frames x {fm.dims} dims ({fm.kind})")


if __name__ == "__main__":
    main()
