"""Sectioned key-value run configuration (``[dataset] n_samples = 2000``)."""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .assign import AssignConfig
from .boxspectrum import BoxSpec
from .datagen import DatasetSpec
from .errors import ConfigError
from .vae import VaeConfig

STAGES = ("generate", "train-vae", "embed", "spectrum", "assign", "plotdata", "replicas")
DEFAULT_STAGES = STAGES[:-1]


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    vae: VaeConfig = field(default_factory=VaeConfig)
    box: BoxSpec = field(default_factory=BoxSpec)
    assign: AssignConfig = field(default_factory=AssignConfig)
    encode_seed: int = 0
    replica_seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    replica_workers: int = 1
    out_dir: str = "run"
    stages: tuple[str, ...] = DEFAULT_STAGES

    def validate(self) -> "RunConfig":
        self.dataset.validate()
        self.vae.validate()
        self.assign.validate()
        if self.vae.input_dim != self.dataset.n_features:
            raise ConfigError(
                f"vae.input_dim={self.vae.input_dim} but dataset.n_features={self.dataset.n_features}",
                "vae.input_dim",
            )
        if self.assign.spec != self.box:
            raise ConfigError("assigner box spec differs from [box]", "box")
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise ConfigError(f"unknown stage(s) {bad}; choose from {list(STAGES)}", "run.stages")
        if not self.replica_seeds:
            raise ConfigError("at least one replica seed is required", "replicas.seeds")
        if self.replica_workers < 1:
            raise ConfigError("replica workers must be >= 1", "replicas.workers")
        return self

    def with_seed(self, seed: int) -> "RunConfig":
        """Every stage seed replaced by ``seed`` (the CLI ``--seed`` override)."""
        return replace(
            self,
            dataset=replace(self.dataset, seed=seed),
            vae=replace(self.vae, seed=seed),
            assign=replace(self.assign, seed=seed),
            encode_seed=seed,
        )

    def to_text(self) -> str:
        """Canonical text covering every field; the digest is taken over this."""
        out = []
        for section, obj, skip in (
            ("dataset", self.dataset, ()),
            ("vae", self.vae, ()),
            ("box", self.box, ()),
            ("assign", self.assign, ("spec",)),
        ):
            out.append(f"[{section}]")
            for f in fields(obj):
                if f.name in skip:
                    continue
                out.append(f"{f.name} = {_fmt(getattr(obj, f.name))}")
            if section == "vae":
                out.append(f"encode_seed = {self.encode_seed}")
            out.append("")
        out += ["[replicas]", f"seeds = {_fmt(self.replica_seeds)}", f"workers = {self.replica_workers}", ""]
        out += ["[run]", f"out = {self.out_dir}", f"stages = {_fmt(self.stages)}", ""]
        return "\n".join(out)

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return " ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(raw: str, default, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = raw.replace(",", " ").split()
            if default and isinstance(default[0], str):
                return tuple(parts)
            return tuple(int(p) for p in parts)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}", key) from None


def _build(cls, section, prefix, allowed_extra=()):
    defaults = cls()
    names = {f.name for f in fields(cls)}
    kwargs = {}
    for key, raw in section.items():
        if key in allowed_extra:
            continue
        if key not in names:
            raise ConfigError(f"{prefix}.{key}: unknown key", f"{prefix}.{key}")
        kwargs[key] = _coerce(raw, getattr(defaults, key), f"{prefix}.{key}")
    return kwargs


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep case: box uses L, A, M
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config does not parse: {exc}".splitlines()[0]) from None
    known = {"dataset", "vae", "box", "assign", "replicas", "run"}
    for s in cp.sections():
        if s not in known:
            raise ConfigError(f"unknown section [{s}]", s)
    sec = lambda name: dict(cp[name]) if cp.has_section(name) else {}

    dataset = DatasetSpec(**_build(DatasetSpec, sec("dataset"), "dataset"))
    vae_kw = _build(VaeConfig, sec("vae"), "vae", allowed_extra=("encode_seed",))
    vae_kw.setdefault("input_dim", dataset.n_features)
    vae = VaeConfig(**vae_kw)
    try:
        box = BoxSpec(**_build(BoxSpec, sec("box"), "box"))
    except ConfigError as exc:
        if exc.field and "." not in exc.field:
            exc.field = f"box.{exc.field}"
        raise
    assign_kw = _build(AssignConfig, sec("assign"), "assign")
    if "spec" in assign_kw:
        raise ConfigError("assign.spec: set box parameters in [box]", "assign.spec")
    assign = AssignConfig(spec=box, **assign_kw)

    encode_seed = _coerce(sec("vae").get("encode_seed", "0"), 0, "vae.encode_seed")
    rep = sec("replicas")
    for key in rep:
        if key not in ("seeds", "workers"):
            raise ConfigError(f"replicas.{key}: unknown key", f"replicas.{key}")
    seeds = _coerce(rep.get("seeds", "0 1 2 3 4"), (0,), "replicas.seeds")
    workers = _coerce(rep.get("workers", "1"), 1, "replicas.workers")
    run = sec("run")
    for key in run:
        if key not in ("out", "stages"):
            raise ConfigError(f"run.{key}: unknown key", f"run.{key}")
    stages = _coerce(run.get("stages", " ".join(DEFAULT_STAGES)), ("x",), "run.stages")
    cfg = RunConfig(dataset=dataset, vae=vae, box=box, assign=assign, encode_seed=encode_seed,
                    replica_seeds=seeds, replica_workers=workers, out_dir=run.get("out", "run"),
                    stages=stages)
    return _prefix_validate(cfg)


def _prefix_validate(cfg: RunConfig) -> RunConfig:
    for prefix, block in (("dataset", cfg.dataset), ("vae", cfg.vae), ("assign", cfg.assign)):
        try:
            block.validate()
        except ConfigError as exc:
            if exc.field and "." not in exc.field:
                exc.field = f"{prefix}.{exc.field}"
            raise
    return cfg.validate()


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found", "config")
    return parse_config(path.read_text())


def default_config_text() -> str:
    return RunConfig().to_text()

