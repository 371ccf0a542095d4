"""Plain-text key=value run configuration with typed access.

Priority (low to high): built-in defaults, preset, config file, --set
overrides, dedicated flags. The fully resolved mapping is echoed into the
run directory so every run is reproducible from (config, seed) alone.
"""

from __future__ import annotations

from pathlib import Path

from .datagen import TransformRanges
from .errors import ConfigurationError
from .model import ModelConfig
from .train import TrainConfig

DEFAULTS: dict[str, str] = {
    "model.resolution": "64",
    "model.depths": "1,1,1",
    "model.widths": "16,32,64",
    "model.multiscale": "true",
    "model.block_mode": "unified",
    "model.softmax_scale": "c",
    "model.pre_norm": "true",
    "model.ffn_ratio": "4",
    "model.decoder_channels": "128,64,32,16",
    "model.norm_mean": "0.5,0.5,0.5",
    "model.norm_std": "0.5,0.5,0.5",
    "model.dtype": "float32",
    "train.steps": "200",
    "train.batch_size": "4",
    "train.lr": "1e-3",
    "train.beta1": "0.9",
    "train.beta2": "0.999",
    "train.seed": "0",
    "train.checkpoint_every": "0",
    "train.log_every": "10",
    "train.stop_loss": "none",
    "data.sources": "",
    "data.n_pairs": "60",
    "data.negative_fraction": "0.0",
    "data.balance_bins": "true",
    "data.seed": "7",
    "data.rotation": "-30,30",
    "data.scale": "0.5,2.0",
    "data.luminance": "0.8,1.2",
    "data.deform": "0,3",
    "data.deform_grid": "4",
    "eval.batch_size": "8",
}

PRESETS: dict[str, dict[str, str]] = {
    "toy": {},
    "paper": {
        "model.resolution": "256",
        "model.depths": "3,4,6",
        "model.widths": "64,128,256",
        "train.batch_size": "10",
        "train.lr": "1e-4",
    },
}


def parse_config_file(path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    values: dict[str, str] = {}
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{line_no}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


class RunConfig:
    def __init__(self, values: dict[str, str]):
        unknown = set(values) - set(DEFAULTS)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        self.values = {**DEFAULTS, **values}

    @classmethod
    def resolve(
        cls,
        config_path=None,
        preset: str | None = None,
        overrides: list[str] | None = None,
        seed: int | None = None,
    ) -> "RunConfig":
        values: dict[str, str] = {}
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigurationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
            values.update(PRESETS[preset])
        if config_path is not None:
            values.update(parse_config_file(config_path))
        for item in overrides or []:
            if "=" not in item:
                raise ConfigurationError(f"--set expects key=value, got {item!r}")
            key, value = (part.strip() for part in item.split("=", 1))
            values[key] = value
        if seed is not None:
            values["train.seed"] = str(seed)
            values["data.seed"] = str(seed)
        return cls(values)

    # -- typed getters ---------------------------------------------------

    def _parse(self, key: str, caster, what: str):
        raw = self.values[key]
        try:
            return caster(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"config key {key}={raw!r} is not {what}") from exc

    def get_int(self, key: str) -> int:
        return self._parse(key, int, "an integer")

    def get_float(self, key: str) -> float:
        return self._parse(key, float, "a number")

    def get_bool(self, key: str) -> bool:
        raw = self.values[key].lower()
        if raw in ("true", "1", "yes"):
            return True
        if raw in ("false", "0", "no"):
            return False
        raise ConfigurationError(f"config key {key}={self.values[key]!r} is not a boolean")

    def get_str(self, key: str) -> str:
        return self.values[key]

    def get_ints(self, key: str) -> tuple[int, ...]:
        return self._parse(key, lambda s: tuple(int(v) for v in s.split(",")), "a comma list of integers")

    def get_floats(self, key: str) -> tuple[float, ...]:
        return self._parse(key, lambda s: tuple(float(v) for v in s.split(",")), "a comma list of numbers")

    # -- structured views ---------------------------------------------------

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            resolution=self.get_int("model.resolution"),
            depths=self.get_ints("model.depths"),
            widths=self.get_ints("model.widths"),
            multiscale=self.get_bool("model.multiscale"),
            block_mode=self.get_str("model.block_mode"),
            softmax_scale=self.get_str("model.softmax_scale"),
            pre_norm=self.get_bool("model.pre_norm"),
            ffn_ratio=self.get_int("model.ffn_ratio"),
            decoder_channels=self.get_ints("model.decoder_channels"),
            norm_mean=self.get_floats("model.norm_mean"),
            norm_std=self.get_floats("model.norm_std"),
            dtype=self.get_str("model.dtype"),
        )

    def train_config(self) -> TrainConfig:
        stop_raw = self.values["train.stop_loss"].lower()
        return TrainConfig(
            steps=self.get_int("train.steps"),
            batch_size=self.get_int("train.batch_size"),
            lr=self.get_float("train.lr"),
            beta1=self.get_float("train.beta1"),
            beta2=self.get_float("train.beta2"),
            seed=self.get_int("train.seed"),
            checkpoint_every=self.get_int("train.checkpoint_every"),
            log_every=self.get_int("train.log_every"),
            stop_loss=None if stop_raw in ("none", "") else self.get_float("train.stop_loss"),
        )

    def transform_ranges(self) -> TransformRanges:
        def pair(key: str) -> tuple[float, float]:
            vals = self.get_floats(key)
            if len(vals) != 2:
                raise ConfigurationError(f"config key {key} needs exactly two numbers, got {self.values[key]!r}")
            return vals

        return TransformRanges(
            rotation_deg=pair("data.rotation"),
            scale=pair("data.scale"),
            luminance=pair("data.luminance"),
            deform_magnitude=pair("data.deform"),
            deform_grid=self.get_int("data.deform_grid"),
        )

    def echo(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"{key} = {self.values[key]}" for key in sorted(self.values)]
        path.write_text("\n".join(lines) + "\n")


# presets must reference valid config keys
for _name, _mapping in PRESETS.items():
    _bad = set(_mapping) - set(DEFAULTS)
    if _bad:
        raise AssertionError(f"preset {_name} has unknown keys {_bad}")
