"""YAML run configuration for the command-line tool."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .diagram import Domain
from .errors import ConfigError, DegenerateDomain

CONFIG_SCHEMA = "laguerre-run/1"
MODES = ("generate", "fit", "diagram", "report")
FORMATS = ("json", "csv", "vtk", "png")

_BLOCKS = {
    "schema", "mode", "rng_seed", "domain", "seeds", "targets", "solver",
    "lloyd", "output", "report",
}
_KEYS = {
    "domain": {"lower", "upper", "periodic"},
    "seeds": {"kind", "file", "axis", "bands", "discs", "cluster_label",
              "mixed_fraction", "profile", "points"},
    "targets": {"kind", "file", "n", "n1", "n2", "ratio", "mean", "sd",
                "exponent", "max_ratio", "values"},
    "solver": {"eps", "method", "max_iter", "w_init", "w_file"},
    "lloyd": {"K", "lam", "displacement_stop", "sphericity_stop", "energy_tol"},
    "output": {"dir", "formats"},
    "report": {"export", "reference", "targets"},
}


@dataclass
class RunConfig:
    mode: str
    domain: Domain | None
    rng_seed: int = 0
    seeds: dict = field(default_factory=dict)
    targets: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    lloyd: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def path(self, value) -> Path:
        """Resolve a path relative to the config file."""
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def eps(self) -> float:
        return float(self.solver.get("eps", 0.01))

    @property
    def method(self) -> str:
        return str(self.solver.get("method", "quasi-newton"))

    @property
    def formats(self) -> tuple:
        return tuple(self.output.get("formats", ("json", "csv", "png")))


def _check_keys(block: str, value) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"'{block}' must be a mapping")
    unknown = set(value) - _KEYS[block]
    if unknown:
        raise ConfigError(f"unknown keys in '{block}': {sorted(unknown)}")
    return dict(value)


def parse_config(raw: dict, mode: str | None = None, base_dir=".") -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(raw) - _BLOCKS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    if raw.get("schema") != CONFIG_SCHEMA:
        raise ConfigError(f"schema must be '{CONFIG_SCHEMA}'")
    cfg_mode = raw.get("mode")
    if mode is not None and cfg_mode is not None and cfg_mode != mode:
        raise ConfigError(f"config is for mode '{cfg_mode}', not '{mode}'")
    mode = mode or cfg_mode
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    blocks = {b: _check_keys(b, raw.get(b)) for b in _KEYS}
    dom_block = blocks.pop("domain")
    domain = None
    if mode != "report" or dom_block:
        d = dom_block
        if "lower" not in d or "upper" not in d:
            raise ConfigError("domain needs 'lower' and 'upper'")
        try:
            domain = Domain(d["lower"], d["upper"], bool(d.get("periodic", False)))
        except (DegenerateDomain, ValueError, TypeError) as exc:
            raise ConfigError(f"bad domain: {exc}") from None
    try:
        seed = int(raw.get("rng_seed", 0))
    except (TypeError, ValueError):
        raise ConfigError("rng_seed must be an integer") from None
    cfg = RunConfig(mode, domain, seed, base_dir=Path(base_dir), **blocks)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if not 0.0 < cfg.eps < 1.0:
        raise ConfigError("solver.eps must lie in (0, 1)")
    if cfg.method not in ("quasi-newton", "damped-newton"):
        raise ConfigError("solver.method must be quasi-newton or damped-newton")
    w_init = cfg.solver.get("w_init", "zeros")
    if w_init not in ("zeros", "sphere-packing", "file"):
        raise ConfigError("solver.w_init must be zeros, sphere-packing or file")
    bad = set(cfg.formats) - set(FORMATS)
    if bad:
        raise ConfigError(f"unknown output formats {sorted(bad)}")
    for block, key in (("seeds", "file"), ("targets", "file"), ("solver", "w_file"),
                       ("report", "export"), ("report", "reference"), ("report", "targets")):
        value = getattr(cfg, block).get(key)
        if value is not None and not cfg.path(value).is_file():
            raise ConfigError(f"{block}.{key}: no such file {value}")
    if cfg.mode in ("generate", "fit") and not cfg.targets:
        raise ConfigError(f"mode '{cfg.mode}' needs a targets block")
    if cfg.mode == "diagram" and "file" not in cfg.seeds:
        raise ConfigError("mode 'diagram' needs seeds.file with a w column")
    if cfg.mode == "report" and "export" not in cfg.report:
        raise ConfigError("mode 'report' needs report.export")
    if cfg.mode == "fit" and w_init == "file" and "w_file" not in cfg.solver \
            and "file" not in cfg.seeds:
        raise ConfigError("w_init: file needs solver.w_file or a seeds file with weights")
    if cfg.mode == "generate":
        K = cfg.lloyd.get("K", 10)
        lam = cfg.lloyd.get("lam", 1.0)
        if not isinstance(K, int) or K < 1:
            raise ConfigError("lloyd.K must be a positive integer")
        if not 0.0 < float(lam) <= 1.0:
            raise ConfigError("lloyd.lam must lie in (0, 1]")


def load_config(path, mode: str | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"no such config file {path}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    return parse_config(raw, mode, base_dir=path.parent)
