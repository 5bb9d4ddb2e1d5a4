"""Config files and the desk/full experiment presets.

Config files are INI text with one section per module::

    [data]
    d = 20
    n = 50
    n_train = 5000
    n_test = 10000
    snr = 10
    seed = 0

    [train]
    lr = 0.001
    epochs = 200
    batch_size = 10
    eval_every = 0
    max_steps = 500000      # or "none"

    [grid]
    latent_values = 2, 5, 10, 15, 20, 25, 30, 50, 100, 200
    hidden_values = 4, 8, 16, 28, 64, 128, 256, 512, 1024
    seeds = 3
    blocks = 5, 10 x 128; 20 x 2048   # extra latent x hidden products

    [linear_ae]
    sizes = 8, 30, 100, 300, 1000
    seeds = 3

Every section and key is optional; unknown ones are errors.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from typing import Optional

from .datagen import DataSpec
from .sweep import LINEAR_AE_DATA, SweepGrid
from .trainer import TrainConfig

SCHEMA = {
    "data": {"d": int, "n": int, "n_train": int, "n_test": int, "snr": float, "seed": int},
    "train": {"lr": float, "epochs": int, "batch_size": int, "eval_every": int,
              "max_steps": "optional_int"},
    "grid": {"latent_values": "int_list", "hidden_values": "int_list", "seeds": int,
             "blocks": "blocks"},
    "linear_ae": {"sizes": "int_list", "seeds": int, "d": int, "n": int, "n_test": int,
                  "snr": float},
}


class ConfigError(ValueError):
    pass


def parse_int_list(text: str) -> tuple[int, ...]:
    out = []
    for item in text.replace("\n", ",").split(","):
        item = item.strip()
        if item:
            out.append(int(float(item)) if "e" in item.lower() else int(item))
    if not out:
        raise ConfigError("empty list")
    return tuple(out)


def _parse_blocks(text: str):
    blocks = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        if "x" not in chunk:
            raise ConfigError(f"block {chunk!r} must look like '<latents> x <hiddens>'")
        lat, hid = chunk.split("x", 1)
        blocks.append((parse_int_list(lat), parse_int_list(hid)))
    return tuple(blocks)


def _convert(kind, raw: str):
    if kind == "int_list":
        return parse_int_list(raw)
    if kind == "blocks":
        return _parse_blocks(raw)
    if kind == "optional_int":
        return None if raw.strip().lower() in ("none", "") else int(raw)
    return kind(raw)


def read_config(path) -> dict[str, dict]:
    """Parse and type-check a config file into ``{section: {key: value}}``."""
    # ';' separates grid blocks, so only '#' starts an inline comment
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    out: dict[str, dict] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        values = {}
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            try:
                values[key] = _convert(SCHEMA[section][key], raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}: bad value for {section}.{key}: {raw!r}") from exc
        out[section] = values
    return out


def data_spec(cfg: dict, base: DataSpec = DataSpec()) -> DataSpec:
    return dataclasses.replace(base, **cfg.get("data", {}))


def train_config(cfg: dict, base: TrainConfig = TrainConfig()) -> TrainConfig:
    return dataclasses.replace(base, **cfg.get("train", {}))


def sweep_grid(cfg: dict, base: Optional[SweepGrid] = None) -> SweepGrid:
    base = base or SweepGrid()
    g = dict(cfg.get("grid", {}))
    kwargs = {}
    if "latent_values" in g:
        kwargs["latent_values"] = g["latent_values"]
    if "hidden_values" in g:
        kwargs["hidden_values"] = g["hidden_values"]
    if "seeds" in g:
        kwargs["seeds_per_cell"] = g["seeds"]
    if "blocks" in g:
        kwargs["blocks"] = g["blocks"]
    return dataclasses.replace(
        base,
        base_data=data_spec(cfg, base.base_data),
        base_train=train_config(cfg, base.base_train),
        **kwargs,
    )


# -- presets -------------------------------------------------------------------

DESK_LATENT_SLICE = (2, 5, 10, 15, 20, 25, 30, 50, 100)
DESK_LATENT_SLICE_HIDDEN = 200
DESK_HIDDEN_SLICE = (4, 8, 16, 28, 64, 128, 256, 512)
# widths past 512 bracket the predicted peaks at latent 20 (h ~ 704 and h ~ 1760)
DESK_HIDDEN_EXTENSION = (1024, 2048)
DESK_HIDDEN_SLICE_LATENT = 20
DESK_INTERPOLATION_CELLS = ((5, 10, 30), (128,))
DESK_LINEAR_SIZES = (8, 30, 100, 300, 1000, 1178, 1500, 3000, 10_000, 30_000, 100_000)
FULL_LINEAR_SIZES = (8, 16, 30, 60, 100, 200, 300, 600, 1000, 1178, 1473, 2000, 3000, 6000,
                     10_000, 30_000, 100_000, 300_000, 1_100_000)
CONTROL_SIZES = (5, 10, 15, 20, 24, 25, 26, 30, 40, 80, 200)


@dataclass(frozen=True)
class Preset:
    grid: SweepGrid
    linear_sizes: tuple
    linear_data: DataSpec
    linear_train: TrainConfig
    linear_seeds: int
    control_sizes: tuple = CONTROL_SIZES
    control_trials: int = 200
    control_noise: float = 0.5


def preset(scale: str, seed: int = 0) -> Preset:
    if scale == "desk":
        grid = SweepGrid(
            latent_values=DESK_LATENT_SLICE,
            hidden_values=(DESK_LATENT_SLICE_HIDDEN,),
            seeds_per_cell=3,
            base_data=DataSpec(seed=seed),
            base_train=TrainConfig(),
            blocks=(
                ((DESK_HIDDEN_SLICE_LATENT,), DESK_HIDDEN_SLICE + DESK_HIDDEN_EXTENSION),
                DESK_INTERPOLATION_CELLS,
            ),
        )
        return Preset(grid, DESK_LINEAR_SIZES, dataclasses.replace(LINEAR_AE_DATA, seed=seed),
                      TrainConfig.linear_ae(), 3)
    if scale == "full":
        grid = SweepGrid(seeds_per_cell=3, base_data=DataSpec(seed=seed),
                         base_train=TrainConfig(max_steps=None))
        return Preset(grid, FULL_LINEAR_SIZES, dataclasses.replace(LINEAR_AE_DATA, seed=seed),
                      TrainConfig.linear_ae(max_steps=None), 3)
    raise ValueError(f"unknown scale {scale!r}")


def defaults_text() -> str:
    """Config text holding the autoencoder-experiment and linear-AE defaults."""
    d, t, g = DataSpec(), TrainConfig(), SweepGrid()
    lin, lt = LINEAR_AE_DATA, TrainConfig.linear_ae()
    join = lambda xs: ", ".join(str(x) for x in xs)  # noqa: E731
    return "\n".join([
        "# autoencoder experiment",
        "[data]",
        f"d = {d.d}", f"n = {d.n}", f"n_train = {d.n_train}", f"n_test = {d.n_test}",
        f"snr = {d.snr:g}", f"seed = {d.seed}",
        "",
        "[train]",
        f"lr = {t.lr:g}", f"epochs = {t.epochs}", f"batch_size = {t.batch_size}",
        f"eval_every = {t.eval_every}", f"max_steps = {t.max_steps}",
        "",
        "[grid]",
        f"latent_values = {join(g.latent_values)}",
        f"hidden_values = {join(g.hidden_values)}",
        f"seeds = {g.seeds_per_cell}",
        "",
        f"# linear autoencoder experiment (train: lr = {lt.lr:g}, epochs = {lt.epochs}, "
        f"batch_size = {lt.batch_size})",
        "[linear_ae]",
        f"sizes = {join(DESK_LINEAR_SIZES)}",
        "seeds = 3",
        f"d = {lin.d}", f"n = {lin.n}", f"n_test = {lin.n_test}", f"snr = {lin.snr:g}",
        "",
    ])
