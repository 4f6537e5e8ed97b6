"""Experiment configuration: flat INI-style key/value files with sections.

Every field is validated up front; unknown sections or keys are rejected so a
typo cannot silently change an experiment. A section may have a ``.full``
variant (e.g. ``[dataset.full]``) whose keys override the base section when
the run is executed at full scale; the base keys are the desk-scale defaults.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "resolved_ini"]

USE_CASES = ("insurance", "fine_dust", "mno_synth")
MODES = ("centralized", "federated", "baselines")
SCALES = ("desk", "full")

# section -> key -> (type, default); required keys have default None
_SCHEMA: dict[str, dict[str, tuple]] = {
    "experiment": {
        "use_case": ("choice", None, USE_CASES),
        "mode": ("choice", None, MODES),
        "seed": ("int", 13),
        "scale": ("choice", "desk", SCALES),
    },
    "dataset": {
        "path": ("str", ""),
        "dir": ("str", ""),
        "synth": ("bool", False),
        "stations": ("strlist", []),
        "hours": ("int", 8760),
        "users": ("int", 540),
        "data_seed": ("int", 11),
    },
    "model": {
        "hidden": ("intlist", []),
        "lstm_hidden": ("intlist", [10, 5]),
        "dropout": ("floatlist", [0.25, 0.35]),
        "window": ("int", 48),
    },
    "training": {
        "epochs": ("int", 100),
        "optimizer": ("choice", "adam", ("adam", "sgd")),
        "lr": ("float", 0.05),
        "batch_size": ("batch", 32),
    },
    "federated": {
        "rounds": ("int", 50),
        "local_epochs": ("int", 50),
        "client_optimizer": ("choice", "adam", ("adam", "sgd")),
        "client_lr": ("float", 0.05),
        "server_optimizer": ("choice", "fedadam", ("fedadam", "sgd", "adam")),
        "server_lr": ("float", 0.1),
        "batch_size": ("batch", None),
        "lr_decay_every": ("int", 0),  # 0 = no schedule
        "lr_decay_factor": ("float", 0.1),
        "eval_fraction": ("float", 0.1),
    },
    "evaluation": {
        "protocol": ("choice", "kfold", ("kfold", "holdout")),
        "k": ("int", 5),
        "train_fraction": ("float", 0.8),
        "stride": ("int", 1),
        "tracking_fraction": ("float", 0.2),
    },
    "hpo": {
        "budget": ("int", 100),
        "cv": ("int", 3),
    },
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class ExperimentConfig:
    """Validated, scale-resolved view of one experiment file."""

    use_case: str
    mode: str
    seed: int
    scale: str
    dataset: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    training: dict = field(default_factory=dict)
    federated: dict = field(default_factory=dict)
    evaluation: dict = field(default_factory=dict)
    hpo: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return getattr(self, name)


def _parse_value(section: str, key: str, raw: str):
    kind = _SCHEMA[section][key][0]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "yes", "1"):
                return True
            if raw.lower() in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        if kind == "str":
            return raw
        if kind == "choice":
            allowed = _SCHEMA[section][key][2]
            if raw not in allowed:
                raise ConfigError(f"[{section}] {key}: {raw!r} not one of {allowed}")
            return raw
        if kind == "batch":
            if raw.lower() == "full":
                return None
            return int(raw)
        if kind == "intlist":
            return [int(x) for x in raw.split(",") if x.strip()] if raw else []
        if kind == "floatlist":
            return [float(x) for x in raw.split(",") if x.strip()] if raw else []
        if kind == "strlist":
            return [x.strip() for x in raw.split(",") if x.strip()] if raw else []
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {kind}") from None
    raise ConfigError(f"unknown schema kind {kind}")


def load_config(path, scale: str | None = None, seed: int | None = None) -> ExperimentConfig:
    """Read, validate and scale-resolve a config file.

    `scale`/`seed` override the file's values (the CLI flags). Raises
    ConfigError with a field-level message on any problem.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")

    sections: dict[str, dict] = {name: {} for name in _SCHEMA}
    overrides: dict[str, dict] = {}
    for raw_section in parser.sections():
        base, _, variant = raw_section.partition(".")
        if base not in _SCHEMA:
            raise ConfigError(f"unknown section [{raw_section}]")
        if variant not in ("", "full"):
            raise ConfigError(f"unknown section variant [{raw_section}] (only .full is allowed)")
        target = sections[base] if variant == "" else overrides.setdefault(base, {})
        for key, raw in parser.items(raw_section):
            if key not in _SCHEMA[base]:
                raise ConfigError(f"unknown key {key!r} in section [{raw_section}]")
            target[key] = _parse_value(base, key, raw)

    if "use_case" not in sections["experiment"] or "mode" not in sections["experiment"]:
        raise ConfigError("[experiment] needs both use_case and mode")

    resolved_scale = scale or sections["experiment"].get("scale", "desk")
    if resolved_scale not in SCALES:
        raise ConfigError(f"scale must be one of {SCALES}")
    if resolved_scale == "full":
        for name, extra in overrides.items():
            sections[name].update(extra)

    # defaults for everything left unset
    for name, keys in _SCHEMA.items():
        for key, spec in keys.items():
            if key not in sections[name] and spec[1] is not None:
                sections[name][key] = spec[1]

    cfg = ExperimentConfig(
        use_case=sections["experiment"]["use_case"],
        mode=sections["experiment"]["mode"],
        seed=seed if seed is not None else sections["experiment"].get("seed", 13),
        scale=resolved_scale,
        dataset=sections["dataset"],
        model=sections["model"],
        training=sections["training"],
        federated=sections["federated"],
        evaluation=sections["evaluation"],
        hpo=sections["hpo"],
    )
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.mode == "federated":
        if cfg.federated["rounds"] < 1 or cfg.federated["local_epochs"] < 1:
            raise ConfigError("[federated] rounds and local_epochs must both be at least 1")
        if not 0.0 <= cfg.federated["eval_fraction"] < 0.5:
            raise ConfigError("[federated] eval_fraction must be in [0, 0.5)")
    if cfg.mode == "centralized" and cfg.training["epochs"] < 1:
        raise ConfigError("[training] epochs must be at least 1")
    if cfg.mode == "baselines":
        if cfg.use_case != "insurance":
            raise ConfigError("baselines mode is defined for the insurance use case")
        if cfg.hpo["budget"] < 1:
            raise ConfigError("[hpo] budget must be at least 1")
        if cfg.hpo["cv"] < 2:
            raise ConfigError("[hpo] cv must be at least 2")
    if cfg.evaluation["k"] < 2:
        raise ConfigError("[evaluation] k must be at least 2")
    if not 0.0 < cfg.evaluation["train_fraction"] < 1.0:
        raise ConfigError("[evaluation] train_fraction must be in (0, 1)")
    if cfg.evaluation["stride"] < 1:
        raise ConfigError("[evaluation] stride must be positive")
    if cfg.use_case == "insurance" and not cfg.dataset.get("path"):
        raise ConfigError("[dataset] path is required for the insurance use case")
    if cfg.use_case == "fine_dust":
        if not cfg.dataset.get("dir"):
            raise ConfigError("[dataset] dir is required for the fine_dust use case")
        if cfg.model["window"] < 1:
            raise ConfigError("[model] window must be positive")
        if len(cfg.model["lstm_hidden"]) != len(cfg.model["dropout"]):
            raise ConfigError("[model] lstm_hidden and dropout must have matching lengths")
    if cfg.use_case == "mno_synth":
        if not cfg.dataset.get("synth") and not cfg.dataset.get("path"):
            raise ConfigError("[dataset] mno_synth needs synth = true or an existing path")
        if cfg.dataset.get("synth") and cfg.dataset["users"] < 3:
            raise ConfigError("[dataset] users must be at least 3")


def resolved_ini(cfg: ExperimentConfig) -> str:
    """Serialize the effective configuration; re-running it reproduces the run."""
    parser = configparser.ConfigParser()
    parser["experiment"] = {
        "use_case": cfg.use_case,
        "mode": cfg.mode,
        "seed": str(cfg.seed),
        "scale": cfg.scale,
    }
    for name in ("dataset", "model", "training", "federated", "evaluation", "hpo"):
        section = cfg.section(name)
        if not section:
            continue
        out = {}
        for key, value in sorted(section.items()):
            if isinstance(value, bool):
                out[key] = "true" if value else "false"
            elif value is None:
                out[key] = "full"
            elif isinstance(value, list):
                out[key] = ",".join(str(v) for v in value)
            else:
                out[key] = str(value)
        parser[name] = out
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
