"""Command-line interface.

Subcommands: synth, process, train-eval, onset, spectrogram, importances.
Options may come from a flat key=value config file (--config); explicit CLI
flags override file values, and every run writes its fully resolved
configuration alongside its outputs.

Exit codes: 0 success, 2 input/parse error, 3 infeasible configuration,
4 internal invariant violation.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from . import errors as err
from . import forest
from . import io as eio
from . import pipeline, synth
from .preprocessing import FilterSpec

EXIT_PARSE = (err.ParseError, err.EmptyRecording, err.NoOverlap, err.NonFiniteSample,
              err.ModelFormatError, FileNotFoundError)
EXIT_INFEASIBLE = (err.SplitInfeasible, err.SmoteInfeasible, err.SingleClassTraining,
                   err.InvalidCutoff, err.ShapeError, err.OnsetUndefined)


def read_config_file(path: Path) -> dict[str, str]:
    """Flat key=value document; blank lines and #-comments allowed."""
    values: dict[str, str] = {}
    for i, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise err.ParseError(f"{path.name}: expected key = value", line=i)
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def resolve_config(ctx: click.Context, config: Path | None) -> dict:
    """Merge config-file values under explicit CLI flags; reject unknown keys."""
    params = dict(ctx.params)
    params.pop("config", None)
    if config is not None:
        file_values = read_config_file(Path(config))
        known = {p.name: p for p in ctx.command.params if p.name != "config"}
        unknown = set(file_values) - set(known)
        if unknown:
            raise err.ParseError(f"{Path(config).name}: unknown config key(s): "
                                 f"{', '.join(sorted(unknown))}")
        for key, raw in file_values.items():
            source = ctx.get_parameter_source(key)
            if source is not None and source.name != "DEFAULT":
                continue  # explicit CLI flag wins
            params[key] = known[key].type.convert(raw, known[key], ctx)
    return params


def write_config_sidecar(params: dict, out: Path, command: str) -> None:
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"command = {command}"]
    for key in sorted(params):
        lines.append(f"{key} = {params[key]}")
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _filter_spec(phase: str) -> FilterSpec:
    return FilterSpec(zero_phase=(phase == "zero"))


@click.group()
def cli() -> None:
    """In-ear ExG sleep staging pipeline."""


@cli.command("synth")
@click.option("--config", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--out", type=click.Path(path_type=Path), required=True,
              help="Output directory for recordings, hypnograms, manifest.")
@click.option("--participants", type=int, default=11, show_default=True)
@click.option("--nights", type=str, default="paper", show_default=True,
              help="'paper' (8/2/1 plan for 11 participants), an integer per "
                   "participant, or a comma list.")
@click.option("--minutes", type=float, default=350.0, show_default=True,
              help="Duration of each night.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def cmd_synth(ctx: click.Context, config: Path | None, out: Path, participants: int,
              nights: str, minutes: float, seed: int) -> None:
    """Generate a synthetic labeled cohort in the canonical file formats."""
    params = resolve_config(ctx, config)
    out = Path(params["out"])
    nights_value = params["nights"]
    if nights_value == "paper":
        plan = synth.paper_night_plan(int(params["participants"]))
    elif "," in nights_value:
        plan = [int(v) for v in nights_value.split(",")]
    else:
        plan = int(nights_value)
    cohort = synth.gen_cohort(int(params["participants"]), plan,
                              duration_min=float(params["minutes"]),
                              seed=int(params["seed"]))
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for night in cohort:
        rec = night.recording
        stem = f"{rec.participant_id}_n{rec.night_index}"
        eio.write_recording(out / f"{stem}_recording.csv", rec)
        eio.write_hypnogram(out / f"{stem}_hypnogram.csv", night.hypnogram)
        rows.append({"participant_id": rec.participant_id, "night_index": rec.night_index,
                     "recording": f"{stem}_recording.csv", "hypnogram": f"{stem}_hypnogram.csv",
                     "onset_ms": night.onset_ms if night.onset_ms is not None else np.nan})
    eio.write_manifest(out / "manifest.csv", rows)
    write_config_sidecar(params, out / "run_config.txt", "synth")
    click.echo(f"wrote {len(cohort)} nights to {out}")


@cli.command("process")
@click.option("--config", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--manifest", type=click.Path(path_type=Path), default=None,
              help="Cohort manifest; mutually exclusive with --recording.")
@click.option("--recording", type=click.Path(path_type=Path), default=None)
@click.option("--hypnogram", type=click.Path(path_type=Path), default=None)
@click.option("--participant", type=str, default="p01", show_default=True,
              help="Participant id for a single --recording run.")
@click.option("--night", type=int, default=1, show_default=True)
@click.option("--phase", type=click.Choice(["zero", "causal"]), default="zero",
              show_default=True, help="Bandpass phase mode.")
@click.option("--out", type=click.Path(path_type=Path), required=True,
              help="Feature matrix CSV path.")
@click.pass_context
def cmd_process(ctx: click.Context, config: Path | None, manifest: Path | None,
                recording: Path | None, hypnogram: Path | None, participant: str,
                night: int, phase: str, out: Path) -> None:
    """Resample, filter, segment, reject artifacts, and extract features."""
    params = resolve_config(ctx, config)
    out = Path(params["out"])
    spec = _filter_spec(params["phase"])
    if params["manifest"] is not None:
        manifest_path = Path(params["manifest"])
        table = eio.read_manifest(manifest_path)
        features, counts = pipeline.process_manifest(table, manifest_path.parent, spec)
    elif params["recording"] is not None and params["hypnogram"] is not None:
        rec = eio.read_recording(Path(params["recording"]),
                                 participant_id=params["participant"],
                                 night_index=int(params["night"]))
        hyp = eio.read_hypnogram(Path(params["hypnogram"]))
        features, counts = pipeline.process_recording(rec, hyp, spec)
    else:
        raise click.UsageError("provide --manifest or both --recording and --hypnogram")
    out.parent.mkdir(parents=True, exist_ok=True)
    eio.write_feature_matrix(out, features)
    write_config_sidecar(params, out.with_suffix(out.suffix + ".config.txt"), "process")
    total = sum(counts.get(k, 0) for k in ("clean", "amplitude_exceeded", "low_variance"))
    click.echo(f"epochs: {total} segmented, {counts.get('clean', 0)} clean, "
               f"{counts.get('amplitude_exceeded', 0)} amplitude-exceeded, "
               f"{counts.get('low_variance', 0)} low-variance, "
               f"{counts.get('degenerate', 0)} degenerate")
    click.echo(f"wrote {len(features)} feature rows to {out}")


@cli.command("train-eval")
@click.option("--config", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--features", type=click.Path(path_type=Path), required=True)
@click.option("--task", type=click.Choice(["binary", "multistage"]), default="binary",
              show_default=True)
@click.option("--cv", type=click.Choice(["stratified10", "lopo"]), default="lopo",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--windowing", type=click.Choice(["auto", "on", "off"]), default="auto",
              show_default=True,
              help="Temporal windowing; 'auto' enables it for LOPO only, which "
                   "is the leakage-safe default.")
@click.option("--trees", type=int, default=forest.N_TREES, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True,
              help="Output directory for reports, model, figures.")
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.pass_context
def cmd_train_eval(ctx: click.Context, config: Path | None, features: Path, task: str,
                   cv: str, seed: int, windowing: str, trees: int, out: Path,
                   figures: bool) -> None:
    """Run the chosen CV protocol end to end and train one final model."""
    params = resolve_config(ctx, config)
    out = Path(params["out"])
    table = eio.read_feature_matrix(Path(params["features"]))
    try:
        result = pipeline.run_cv(table, params["task"], params["cv"],
                                 seed=int(params["seed"]), windowing=params["windowing"],
                                 n_trees=int(params["trees"]))
    except err.SplitInfeasible as exc:
        raise err.SplitInfeasible(
            f"{exc} (hint: generate more data, reduce folds, or pick task=binary)")
    write_cv = pipeline.write_cv_outputs(result, out, figures=bool(params["figures"]))
    write_config_sidecar(params, out / "run_config.txt", "train-eval")
    click.echo(f"accuracy {result.accuracy:.3f}  kappa {result.kappa:.3f}  "
               f"({params['task']}, {params['cv']}, windowed={result.windowed})")
    click.echo(f"wrote {len(write_cv)} artifacts to {out}")


@cli.command("onset")
@click.option("--config", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--model", type=click.Path(path_type=Path), required=True)
@click.option("--features", type=click.Path(path_type=Path), required=True,
              help="Feature matrix of the recording(s) to compare.")
@click.option("--manifest", type=click.Path(path_type=Path), default=None,
              help="Optional manifest supplying reference onset times.")
@click.option("--out", type=click.Path(path_type=Path), required=True,
              help="Output directory.")
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.pass_context
def cmd_onset(ctx: click.Context, config: Path | None, model: Path, features: Path,
              manifest: Path | None, out: Path, figures: bool) -> None:
    """Compare predicted sleep-onset times against the reference labels."""
    params = resolve_config(ctx, config)
    out = Path(params["out"])
    fmodel = forest.load(Path(params["model"]))
    if fmodel.class_order != ("AWAKE", "ASLEEP"):
        raise err.ShapeError("onset comparison needs a binary (Awake/Asleep) model")
    table = eio.read_feature_matrix(Path(params["features"]))
    reference = {}
    if params["manifest"] is not None:
        man = eio.read_manifest(Path(params["manifest"]))
        for _, row in man.iterrows():
            if np.isfinite(row["onset_ms"]):
                reference[f"{row['participant_id']}/n{row['night_index']}"] = float(row["onset_ms"])
    onsets = pipeline.cohort_onsets(fmodel, table, reference)
    out.mkdir(parents=True, exist_ok=True)
    onsets.to_csv(out / "onsets.csv", index=False, float_format="%.3f", lineterminator="\n")
    write_config_sidecar(params, out / "run_config.txt", "onset")
    defined = onsets[onsets["defined"]]
    if len(defined):
        mad = defined["delay_minutes"].abs().mean()
        lo, hi = defined["delay_minutes"].min(), defined["delay_minutes"].max()
        click.echo(f"onset delays over {len(defined)} recording(s): "
                   f"range [{lo:+.1f}, {hi:+.1f}] min, mean |delay| {mad:.1f} min")
    else:
        click.echo("no recording had a defined onset on both sides")
    if bool(params["figures"]) and len(defined):
        from . import plots
        plots.onset_delays_figure(onsets, out / "onset_delays.png")


@cli.command("spectrogram")
@click.option("--config", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--recording", type=click.Path(path_type=Path), required=True)
@click.option("--hypnogram", type=click.Path(path_type=Path), required=True)
@click.option("--phase", type=click.Choice(["zero", "causal"]), default="zero",
              show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True,
              help="Output directory.")
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.pass_context
def cmd_spectrogram(ctx: click.Context, config: Path | None, recording: Path,
                    hypnogram: Path, phase: str, out: Path, figures: bool) -> None:
    """Export per-epoch PSD rows (plus stages) for time-frequency plotting."""
    params = resolve_config(ctx, config)
    out = Path(params["out"])
    rec = eio.read_recording(Path(params["recording"]))
    hyp = eio.read_hypnogram(Path(params["hypnogram"]))
    table = pipeline.spectrogram_table(rec, hyp, _filter_spec(params["phase"]))
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "spectrogram.csv", index=False, float_format="%.9g",
                 lineterminator="\n")
    write_config_sidecar(params, out / "run_config.txt", "spectrogram")
    click.echo(f"wrote {len(table)} epoch rows to {out / 'spectrogram.csv'}")
    if bool(params["figures"]):
        from . import plots
        plots.spectrogram_figure(table, out / "spectrogram.png")


@cli.command("importances")
@click.option("--config", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--model", type=click.Path(path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True,
              help="Output directory.")
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.pass_context
def cmd_importances(ctx: click.Context, config: Path | None, model: Path, out: Path,
                    figures: bool) -> None:
    """Export the trained model's impurity-decrease feature ranking."""
    params = resolve_config(ctx, config)
    out = Path(params["out"])
    fmodel = forest.load(Path(params["model"]))
    table = pipeline.importance_table(fmodel)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "importances.csv", index=False, float_format="%.9f",
                 lineterminator="\n")
    write_config_sidecar(params, out / "run_config.txt", "importances")
    ranked = table.groupby("base_feature")["importance"].sum().sort_values(ascending=False)
    click.echo("top features: " + ", ".join(f"{n} ({v:.3f})" for n, v in ranked.head(5).items()))
    if bool(params["figures"]):
        from . import plots
        plots.importances_figure(table, out / "importances.png")


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:  # --help and friends
        return int(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 2
    except EXIT_PARSE as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except EXIT_INFEASIBLE as exc:
        click.echo(f"infeasible: {exc}", err=True)
        return 3
    except (err.PipelineError, AssertionError) as exc:
        click.echo(f"internal invariant violation: {exc}", err=True)
        return 4


if __name__ == "__main__":
    sys.exit(main())
