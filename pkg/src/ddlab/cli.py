"""``ddlab`` command line.

Exit codes: 0 success, 1 runtime failure, 2 usage error. ``--workers``
falls back to ``$DDLAB_WORKERS``, then to the CPU count.

Master seed ``--seed S``: the data seed is ``S`` and init/shuffle seeds are
derived per cell as documented in :mod:`ddlab.sweep`.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analysis, config, nn, render, sweep
from .datagen import generate_dataset
from .io import save_dataset
from .trainer import TrainConfig, train

log = logging.getLogger("ddlab")

COMMANDS = ("datagen", "train", "sweep-ae", "sweep-linear-ae", "analyze", "control-regression",
            "render-heatmap", "render-curve", "reproduce", "print-defaults")


@dataclass
class Command:
    name: str
    options: dict = field(default_factory=dict)

    def __getattr__(self, item):
        try:
            return self.options[item]
        except KeyError:
            raise AttributeError(item) from None


def _int_list_arg(text: str) -> tuple[int, ...]:
    path = Path(text)
    if path.is_file():
        text = path.read_text()
    try:
        return config.parse_int_list(text.replace("\n", ","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a list of integers: {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--workers", type=int, default=None, help="parallel training processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ddlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("datagen", parents=[common], help="write a DDL1 dataset file")
    s.add_argument("--spec", type=Path, help="config file with a [data] section")
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("train", parents=[common], help="train one autoencoder")
    s.add_argument("--config", type=Path)
    s.add_argument("--latent", type=int, default=20)
    s.add_argument("--hidden", type=int, default=200)
    s.add_argument("--linear", action="store_true", help="the fixed linear-AE architecture")
    s.add_argument("--out", type=Path, required=True, help="RunRecord JSON")

    s = sub.add_parser("sweep", help="capacity sweeps")
    sweeps = s.add_subparsers(dest="which", required=True)
    a = sweeps.add_parser("ae", parents=[common])
    a.add_argument("--grid", type=Path)
    a.add_argument("--out", type=Path, required=True)
    a.add_argument("--seeds", type=int)
    b = sweeps.add_parser("linear-ae", parents=[common])
    b.add_argument("--sizes", type=_int_list_arg)
    b.add_argument("--config", type=Path)
    b.add_argument("--out", type=Path, required=True)
    b.add_argument("--seeds", type=int)

    s = sub.add_parser("analyze", parents=[common])
    s.add_argument("--results", type=Path, required=True)
    s.add_argument("--control", type=Path, help="control CSV to include")
    s.add_argument("--report", type=Path, required=True)

    s = sub.add_parser("control")
    controls = s.add_subparsers(dest="which", required=True)
    c = controls.add_parser("regression", parents=[common])
    c.add_argument("--out", type=Path, required=True)
    c.add_argument("--n-features", type=int, default=25)
    c.add_argument("--sizes", type=_int_list_arg, default=config.CONTROL_SIZES)
    c.add_argument("--noise-std", type=float, default=0.5)
    c.add_argument("--trials", type=int, default=200)

    s = sub.add_parser("render")
    renders = s.add_subparsers(dest="which", required=True)
    h = renders.add_parser("heatmap", parents=[common])
    h.add_argument("--results", type=Path, required=True)
    h.add_argument("--metric", choices=("test", "train"), default="test")
    h.add_argument("--loci", choices=("features", "latent", "both", "none"), default="both")
    h.add_argument("--resolution", type=int, default=256)
    h.add_argument("--out", type=Path, required=True)
    k = renders.add_parser("curve", parents=[common])
    k.add_argument("--results", type=Path, required=True)
    k.add_argument("--x", choices=("ratio", "n_train", "latent", "hidden"), default="ratio")
    k.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("reproduce", parents=[common], help="every experiment and figure")
    s.add_argument("--scale", choices=("desk", "full"), default="desk")
    s.add_argument("--out", type=Path, default=Path("ddlab-out"))

    s = sub.add_parser("config")
    cfgs = s.add_subparsers(dest="which", required=True)
    cfgs.add_parser("print-defaults")
    return p


def parse_args(argv: Sequence[str]) -> Command:
    """Parse ``argv``; usage errors exit with status 2."""
    ns = vars(build_parser().parse_args(list(argv)))
    top = ns.pop("command")
    which = ns.pop("which", None)
    name = {
        ("sweep", "ae"): "sweep-ae",
        ("sweep", "linear-ae"): "sweep-linear-ae",
        ("control", "regression"): "control-regression",
        ("render", "heatmap"): "render-heatmap",
        ("render", "curve"): "render-curve",
        ("config", "print-defaults"): "print-defaults",
    }.get((top, which), top)
    return Command(name, ns)


# -- command bodies --------------------------------------------------------------


def _load_cfg(path: Optional[Path]) -> dict:
    return config.read_config(path) if path else {}


def _with_seed(spec, seed):
    return spec if seed is None else dataclasses.replace(spec, seed=seed)


def write_control_csv(curve: analysis.LossCurve, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("n_train", "test_risk"))
        for n, risk in zip(curve.capacities, curve.losses):
            w.writerow((int(n), repr(float(risk))))


def read_control_csv(path: Path) -> analysis.LossCurve:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return analysis.LossCurve([int(r["n_train"]) for r in rows], [float(r["test_risk"]) for r in rows],
                              axis_label="n_train", label="min-norm regression")


def write_json(obj, path: Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def render_heatmap(table: sweep.ResultsTable, metric: str, loci: str, path: Path,
                   resolution: int = 256) -> Path:
    ae = table.select("ae")
    if not len(ae):
        raise ValueError("results contain no autoencoder rows")
    key = "test_mse" if metric == "test" else "train_mse"
    samples = [(hid, lat, stats["mean"]) for (_, lat, hid, _), stats in ae.aggregate(key).items()
               if np.isfinite(stats["mean"]) and stats["mean"] > 0]
    raster = render.nearest_log_heatmap(samples, (resolution, resolution))
    row = ae.rows[0]
    lo, hi = raster.y_range
    latents = np.unique(np.round(np.geomspace(max(1.0, lo), hi, 60)).astype(int))
    assumptions = {"both": ("features", "latent"), "none": ()}.get(loci, (loci,))
    curves = [[(h, l) for l, h in analysis.peak_loci(row.n_features, row.n_train, a, latents)]
              for a in assumptions]
    title = f"{metric} MSE, {row.n_features} features, N = {row.n_train}"
    return render.emit_heatmap(raster, curves, "log", path, title=title,
                               value_label=f"{metric} MSE")


def render_curve(table: sweep.ResultsTable, x: str, path: Path) -> Path:
    markers: list[float] = []
    if x in ("ratio", "n_train"):
        lin = table.select("linear_ae")
        if not len(lin):
            raise ValueError("results contain no linear-AE rows")
        row = lin.rows[0]
        if x == "ratio":
            curves = []
            for out_dim, name in ((row.n_features, "features"), (row.latent, "latent")):
                c = analysis.linear_ae_curve(lin, out_dim)
                c.label = f"output = {name} ({out_dim})"
                curves.append(c)
            markers = [1.0]
            x_label = "parameterization ratio"
        else:
            curves = [analysis.curve_from_table(lin, "n_train", {}, experiment_id="linear_ae")]
            markers = [row.param_count / row.n_features, row.param_count / row.latent]
            x_label = "training set size"
    else:
        ae = table.select("ae")
        other = "hidden" if x == "latent" else "latent"
        fixed = analysis._slice_key(ae, x, "ae")
        curves = [analysis.curve_from_table(ae, x, {other: fixed}, experiment_id="ae")]
        curves[0].label = f"{other} = {fixed}"
        x_label = f"{x} width"
    return render.emit_curve(curves, "log", markers, path, x_label=x_label)


def reproduce(scale: str, out: Path, seed: int = 0, workers: Optional[int] = None) -> list[Path]:
    """Run both sweeps, the regression control, the analysis and every figure into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    pre = config.preset(scale, seed)
    sweep.run_ae_sweep(pre.grid, out, workers)
    sweep.run_linear_ae_sweep(pre.linear_sizes, pre.linear_data, pre.linear_train,
                              pre.linear_seeds, out, workers)
    table = sweep.ResultsTable.read_csv(out / sweep.RESULTS_CSV)

    control = analysis.minnorm_regression_control(25, pre.control_sizes, pre.control_noise,
                                                  pre.control_trials, seed)
    write_control_csv(control, out / "control.csv")
    report = analysis.build_report(table, control)
    report["scale"] = scale
    report["seed"] = seed
    write_json(report, out / "report.json")

    files = [out / sweep.RESULTS_CSV, out / "report.json", out / "control.csv"]
    files.append(render_heatmap(table, "test", "both", out / "fig1.svg"))
    files.append(render_heatmap(table, "train", "both", out / "fig2.svg"))
    files.append(render_curve(table, "ratio", out / "fig3.svg"))
    files.append(render.emit_curve([control], "log", [25.0], out / "control.svg",
                                   x_label="training set size", y_label="test risk"))
    if report["diverged_runs"]:
        log.warning("%d runs diverged; see report.json", report["diverged_runs"])
    return files


def run(cmd: Command) -> int:
    o = cmd.options
    if cmd.name == "print-defaults":
        sys.stdout.write(config.defaults_text())
    elif cmd.name == "datagen":
        spec = _with_seed(config.data_spec(_load_cfg(o["spec"])), o["seed"])
        save_dataset(generate_dataset(spec), o["out"])
    elif cmd.name == "train":
        cfg = _load_cfg(o["config"])
        if o["linear"]:
            spec = config.data_spec(cfg, sweep.LINEAR_AE_DATA)
            tc = config.train_config(cfg, TrainConfig.linear_ae())
            arch = nn.linear_ae_arch()
        else:
            spec = config.data_spec(cfg)
            tc = config.train_config(cfg)
            arch = nn.ae_arch(spec.n, o["hidden"], o["latent"])
        seed = spec.seed if o["seed"] is None else o["seed"]
        spec = dataclasses.replace(spec, seed=seed)
        s = sweep.derive_seeds(seed, 0, 0)
        record = train(generate_dataset(spec), arch, dataclasses.replace(tc, shuffle_seed=s["shuffle"]),
                       s["init"])
        write_json(record.to_json(), o["out"])
    elif cmd.name == "sweep-ae":
        grid = config.sweep_grid(_load_cfg(o["grid"]))
        if o["seeds"] is not None:
            grid = dataclasses.replace(grid, seeds_per_cell=o["seeds"])
        grid = dataclasses.replace(grid, base_data=_with_seed(grid.base_data, o["seed"]))
        sweep.run_ae_sweep(grid, o["out"], o["workers"])
    elif cmd.name == "sweep-linear-ae":
        cfg = _load_cfg(o["config"])
        lin = cfg.get("linear_ae", {})
        base = dataclasses.replace(sweep.LINEAR_AE_DATA,
                                   **{k: lin[k] for k in ("d", "n", "n_test", "snr") if k in lin})
        base = _with_seed(config.data_spec({"data": cfg.get("data", {})}, base), o["seed"])
        sizes = o["sizes"] or lin.get("sizes") or config.DESK_LINEAR_SIZES
        seeds = o["seeds"] or lin.get("seeds", 3)
        tc = config.train_config(cfg, TrainConfig.linear_ae())
        sweep.run_linear_ae_sweep(sizes, base, tc, seeds, o["out"], o["workers"])
    elif cmd.name == "analyze":
        table = sweep.ResultsTable.read_csv(o["results"])
        control = read_control_csv(o["control"]) if o["control"] else None
        write_json(analysis.build_report(table, control), o["report"])
    elif cmd.name == "control-regression":
        curve = analysis.minnorm_regression_control(o["n_features"], o["sizes"], o["noise_std"],
                                                    o["trials"], o["seed"] or 0)
        write_control_csv(curve, o["out"])
    elif cmd.name == "render-heatmap":
        render_heatmap(sweep.ResultsTable.read_csv(o["results"]), o["metric"], o["loci"], o["out"],
                       o["resolution"])
    elif cmd.name == "render-curve":
        render_curve(sweep.ResultsTable.read_csv(o["results"]), o["x"], o["out"])
    elif cmd.name == "reproduce":
        for path in reproduce(o["scale"], o["out"], o["seed"] or 0, o["workers"]):
            print(path)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    cmd = parse_args(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO if cmd.options.get("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(cmd)
    except KeyboardInterrupt:
        return 1
    except Exception as exc:  # noqa: BLE001
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
