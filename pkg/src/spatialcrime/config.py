"""Pipeline configuration read from TOML and validated before any work.

Example::

    seed = 7
    output_dir = "out"

    [paths]              # inputs; defaults live in output_dir
    train_csv = "out/ucr_train.csv"
    eval_csv = "out/ucr_eval.csv"
    pois = "out/pois.csv"

    [synth]
    n = 2000
    zone_prob = 0.85

    [hdbscan]
    min_cluster_size = 10
    [hdbscan.Assault]    # per-category override
    min_cluster_size = 15

    [models.rf]
    n_trees = 100

    [evaluation]
    k = 10
    alpha = 0.05

    [geocoder]
    mode = "offline"     # offline | remote | cached-remote
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import CrimeCategory, SynthConfig
from .errors import ConfigError
from .geocoding import RemoteConfig
from .hdbscan import HdbscanParams
from .models import LrParams, RfParams, SvmParams

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

GEOCODER_MODES = ("offline", "remote", "cached-remote")
_TOP_KEYS = {"seed", "output_dir", "paths", "synth", "hdbscan", "models", "evaluation", "geocoder", "category"}
_PATH_KEYS = {"train_csv", "eval_csv", "pois", "taxonomy", "label_rules", "geocode_cache", "ground_truth"}


@dataclass(frozen=True)
class Paths:
    train_csv: Path
    eval_csv: Path
    pois: Path
    ground_truth: Path
    geocode_cache: Path
    taxonomy: Path | None = None
    label_rules: Path | None = None


@dataclass(frozen=True)
class PipelineConfig:
    seed: int | None
    output_dir: Path
    paths: Paths
    synth: dict = field(default_factory=dict)
    hdbscan_default: HdbscanParams = field(default_factory=HdbscanParams)
    hdbscan_overrides: dict = field(default_factory=dict)
    lr: LrParams = field(default_factory=LrParams)
    svm: SvmParams = field(default_factory=SvmParams)
    rf: RfParams = field(default_factory=RfParams)
    k: int = 10
    alpha: float = 0.05
    geocoder_mode: str = "offline"
    remote: RemoteConfig = field(default_factory=RemoteConfig)
    category: str | None = None
    source: str | None = None

    def hdbscan_for(self, category: CrimeCategory) -> HdbscanParams:
        return self.hdbscan_overrides.get(category, self.hdbscan_default)

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("a seed is required: set 'seed' in the config or pass --seed")
        return self.seed

    def synth_config(self) -> SynthConfig:
        seed = self.require_seed()
        try:
            cfg = SynthConfig(seed=seed, **self.synth)
            cfg.validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[synth]: {exc}") from None
        return cfg

    def with_seed(self, seed: int) -> "PipelineConfig":
        return dataclasses.replace(self, seed=seed, lr=dataclasses.replace(self.lr, seed=seed),
                                   svm=dataclasses.replace(self.svm, seed=seed),
                                   rf=dataclasses.replace(self.rf, seed=seed))


def _table(doc: dict, key: str) -> dict:
    value = doc.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{key}] must be a table")
    return value


def _build(cls, values: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f"[{where}]: unknown key(s) {', '.join(unknown)}; allowed: {', '.join(sorted(names))}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from None


def _check_int(value, name: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return value


def parse_config(doc: dict, base_dir: Path = Path("."), source: str | None = None) -> PipelineConfig:
    """Validate a decoded TOML document; relative paths resolve against ``base_dir``."""
    unknown = sorted(set(doc) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    seed = doc.get("seed")
    if seed is not None:
        _check_int(seed, "seed", 0)

    def resolve(p) -> Path:
        if not isinstance(p, str) or not p:
            raise ConfigError(f"paths must be non-empty strings, got {p!r}")
        path = Path(p)
        return path if path.is_absolute() else base_dir / path

    out = resolve(doc.get("output_dir", "out"))
    raw_paths = _table(doc, "paths")
    bad = sorted(set(raw_paths) - _PATH_KEYS)
    if bad:
        raise ConfigError(f"[paths]: unknown key(s) {', '.join(bad)}")
    paths = Paths(
        train_csv=resolve(raw_paths["train_csv"]) if "train_csv" in raw_paths else out / "ucr_train.csv",
        eval_csv=resolve(raw_paths["eval_csv"]) if "eval_csv" in raw_paths else out / "ucr_eval.csv",
        pois=resolve(raw_paths["pois"]) if "pois" in raw_paths else out / "pois.csv",
        ground_truth=resolve(raw_paths["ground_truth"]) if "ground_truth" in raw_paths else out / "ground_truth.json",
        geocode_cache=(resolve(raw_paths["geocode_cache"]) if "geocode_cache" in raw_paths
                       else out / "geocode_cache.jsonl"),
        taxonomy=resolve(raw_paths["taxonomy"]) if "taxonomy" in raw_paths else None,
        label_rules=resolve(raw_paths["label_rules"]) if "label_rules" in raw_paths else None,
    )

    synth = dict(_table(doc, "synth"))
    allowed = {f.name for f in dataclasses.fields(SynthConfig)} - {"seed", "zones", "balances", "bbox", "years"}
    allowed |= {"bbox", "years", "balances"}
    bad = sorted(set(synth) - allowed)
    if bad:
        raise ConfigError(f"[synth]: unknown key(s) {', '.join(bad)}")
    if "years" in synth:
        synth["years"] = tuple(synth["years"])
    if "bbox" in synth:
        synth["bbox"] = tuple(synth["bbox"])
    if "balances" in synth:
        try:
            synth["balances"] = {CrimeCategory.parse(k): float(v) for k, v in synth["balances"].items()}
        except (AttributeError, ValueError) as exc:
            raise ConfigError(f"[synth.balances]: {exc}") from None

    hd = dict(_table(doc, "hdbscan"))
    overrides_raw = {k: hd.pop(k) for k in list(hd) if isinstance(hd[k], dict)}
    hdbscan_default = _build(HdbscanParams, hd, "hdbscan")
    overrides = {}
    for name, table in overrides_raw.items():
        try:
            cat = CrimeCategory.parse(name)
        except ValueError as exc:
            raise ConfigError(f"[hdbscan.{name}]: {exc}") from None
        overrides[cat] = _build(HdbscanParams, {**{k: v for k, v in hd.items()}, **table}, f"hdbscan.{name}")

    models = _table(doc, "models")
    bad = sorted(set(models) - {"lr", "svm", "rf"})
    if bad:
        raise ConfigError(f"[models]: unknown section(s) {', '.join(bad)}")
    lr = _build(LrParams, _table(models, "lr"), "models.lr")
    svm = _build(SvmParams, _table(models, "svm"), "models.svm")
    rf = _build(RfParams, _table(models, "rf"), "models.rf")
    if svm.C <= 0:
        raise ConfigError("[models.svm]: C must be positive")
    if lr.l2 < 0:
        raise ConfigError("[models.lr]: l2 must be nonnegative")
    if rf.n_trees < 1 or rf.min_leaf < 1:
        raise ConfigError("[models.rf]: n_trees and min_leaf must be >= 1")

    ev = _table(doc, "evaluation")
    bad = sorted(set(ev) - {"k", "alpha"})
    if bad:
        raise ConfigError(f"[evaluation]: unknown key(s) {', '.join(bad)}")
    k = _check_int(ev.get("k", 10), "evaluation.k", 2)
    alpha = ev.get("alpha", 0.05)
    if not isinstance(alpha, (int, float)) or not 0.0 < alpha < 1.0:
        raise ConfigError(f"evaluation.alpha must lie in (0, 1), got {alpha!r}")

    geo = dict(_table(doc, "geocoder"))
    mode = geo.pop("mode", "offline")
    if mode not in GEOCODER_MODES:
        raise ConfigError(f"geocoder.mode must be one of {', '.join(GEOCODER_MODES)}, got {mode!r}")
    remote = _build(RemoteConfig, geo, "geocoder")

    category = doc.get("category")
    if category is not None:
        check_category_name(category)

    cfg = PipelineConfig(seed=seed, output_dir=out, paths=paths, synth=synth, hdbscan_default=hdbscan_default,
                         hdbscan_overrides=overrides, lr=lr, svm=svm, rf=rf, k=k, alpha=float(alpha),
                         geocoder_mode=mode, remote=remote, category=category, source=source)
    return cfg.with_seed(seed) if seed is not None else cfg


def check_category_name(name: str) -> None:
    if str(name).lower() == "all":
        return
    try:
        CrimeCategory.parse(name)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path=None) -> PipelineConfig:
    """Read and validate a TOML file; ``None`` gives the all-defaults config."""
    if path is None:
        return parse_config({}, Path("."))
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from None
    return parse_config(doc, path.parent, str(path))


def require_inputs(*paths: Path) -> None:
    """Fail with a config error if any input file is missing."""
    missing = [str(p) for p in paths if p is not None and not Path(p).is_file()]
    if missing:
        raise ConfigError("missing input file(s): " + ", ".join(missing))
