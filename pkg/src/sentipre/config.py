"""Run configuration: INI-style sections, typed keys, strict validation.

Defaults follow the published hyperparameters (p_w=0.5, p_s=0.7, k=100,
t=7, refresh every 2000 steps, lr 2e-5, 10% warm-up, max length 128).
Unknown sections or keys are rejected; `--section.key=value` overrides
win over the file, the file over defaults. The fully resolved config is
echoed to the output directory for provenance.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass

from .masking import MaskConfig
from .models import ModelConfig
from .pretrain_sentence import AnceConfig
from .pretrain_word import WordPretrainConfig
from .text import TaskSpec


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, dict[str, object]] = {
    "run": {"seed": 42},
    "paths": {"corpus": "", "lexicon": "", "vocab": "", "checkpoint": "",
              "train": "", "valid": "", "test": ""},
    "masking": {"random_rate": 0.15, "p_w": 0.5, "p_s": 0.7, "theta_lex": 0.5},
    "model": {"disc_layers": 4, "disc_hidden": 128, "disc_heads": 4, "disc_ffn": 512,
              "gen_layers": 2, "gen_hidden": 64, "gen_heads": 2, "gen_ffn": 256,
              "max_positions": 128, "dropout": 0.1, "disc_head": "tied"},
    "vocab": {"min_freq": 2},
    "filter": {"lo": 0.2, "hi": 0.3},
    "word": {"lam": 50.0, "batch_size": 128, "max_steps": 20000, "warmup_steps": 1500,
             "peak_lr": 2e-5, "weight_decay": 0.01, "holdout_fraction": 0.02},
    "ance": {"k": 100, "t": 7, "refresh_every": 2000, "iterations": 4, "tau": 0.05,
             "loss": "nll", "sim": "cosine", "include_in_batch": False, "margin": 0.2,
             "batch_size": 64, "warmup_steps": 500, "peak_lr": 2e-5,
             "weight_decay": 0.01, "holdout_fraction": 0.02},
    "task": {"kind": "sentence", "num_classes": 2, "max_epochs": 4,
             "learning_rate": 2e-5, "batch_size": 32},
}


def _coerce(section: str, key: str, raw: str):
    default = DEFAULTS[section][key]
    try:
        if isinstance(default, bool):
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as e:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {type(default).__name__}") from e


@dataclass
class RunConfig:
    values: dict[str, dict[str, object]]

    def __getitem__(self, section: str) -> dict[str, object]:
        return self.values[section]

    # -- typed views ---------------------------------------------------------

    def mask_config(self) -> MaskConfig:
        m = self.values["masking"]
        return MaskConfig(random_rate=m["random_rate"], p_w=m["p_w"], p_s=m["p_s"])

    def model_config(self, vocab_size: int) -> ModelConfig:
        m = self.values["model"]
        return ModelConfig(vocab_size=vocab_size, **m)

    def word_config(self) -> WordPretrainConfig:
        w = dict(self.values["word"])
        return WordPretrainConfig(mask=self.mask_config(), **w)

    def ance_config(self) -> AnceConfig:
        a = dict(self.values["ance"])
        a["loss_kind"] = a.pop("loss")
        a["sim_kind"] = a.pop("sim")
        return AnceConfig(mask=self.mask_config(), **a)

    def task_spec(self) -> TaskSpec:
        t = self.values["task"]
        return TaskSpec(kind=t["kind"], num_classes=t["num_classes"],
                        max_epochs=t["max_epochs"], learning_rate=t["learning_rate"])

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    def echo(self, path) -> None:
        cp = configparser.ConfigParser()
        for section, kv in self.values.items():
            cp[section] = {k: str(v) for k, v in kv.items()}
        with open(path, "w") as f:
            cp.write(f)


def parse_config(path: str | None, overrides: list[str] | None = None) -> RunConfig:
    """Resolve defaults <- config file <- --section.key=value overrides."""
    values = {s: dict(kv) for s, kv in DEFAULTS.items()}
    if path:
        cp = configparser.ConfigParser()
        read = cp.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path}")
        for section in cp.sections():
            if section not in values:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in cp[section].items():
                if key not in values[section]:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                values[section][key] = _coerce(section, key, raw)
    for ov in overrides or []:
        if "=" not in ov:
            raise ConfigError(f"override must look like section.key=value: {ov!r}")
        target, raw = ov.split("=", 1)
        if "." not in target:
            raise ConfigError(f"override key must be section.key: {target!r}")
        section, key = target.split(".", 1)
        if section not in values or key not in values[section]:
            raise ConfigError(f"unknown override {target!r}")
        values[section][key] = _coerce(section, key, raw)
    return RunConfig(values)
