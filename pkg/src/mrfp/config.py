"""Experiment configuration and its flat, sectioned, typed text format.

Example::

    [run]
    name: str = baseline
    output_dir: str = runs

    [perturb]
    variant: str = HRFP_PLUS
    osf: float = 2.0
    rgn_std: float? = none

    [target.0]
    name: str = fog
    freq_range: floats = 0.04, 0.12

Every value carries its type (``int``, ``float``, ``bool``, ``str`` or the list
forms ``ints``/``floats``); a trailing ``?`` allows ``none``.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field

from .harness.backbone import BackboneSpec
from .harness.data import DomainSpec, fog_domain, rain_domain, source_domain, texture_shift_domain
from .harness.train import TrainConfig
from .wrapper import PerturbConfig, Variant


class ConfigError(ValueError):
    def __init__(self, message, line: int | None = None, key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"field {key!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.key = key


@dataclass(frozen=True)
class Diagnostics:
    spectral: bool = True
    mmd: bool = True
    embeddings: bool = False
    spectral_seeds: int = 20


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "run"
    output_dir: str = "runs"
    backbone_seed: int = 0
    n_train: int = 256
    n_eval: int = 64
    image_size: tuple[int, int] = (64, 64)
    perturb: PerturbConfig = field(default_factory=PerturbConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    backbone: BackboneSpec = field(default_factory=BackboneSpec)
    sources: tuple[DomainSpec, ...] = field(default_factory=lambda: (source_domain(0),))
    source_eval: DomainSpec = field(default_factory=lambda: source_domain(100))
    targets: tuple[DomainSpec, ...] = field(
        default_factory=lambda: (texture_shift_domain(1), fog_domain(2), rain_domain(3)))
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def __post_init__(self):
        if not self.sources:
            raise ConfigError("at least one source domain is required")
        names = [t.name for t in self.targets]
        if len(set(names)) != len(names):
            raise ConfigError(f"target names must be unique, got {names}")

    def with_overrides(self, seed: int | None = None, iterations: int | None = None,
                       output_dir: str | None = None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = dataclasses.replace(
                cfg, backbone_seed=seed,
                train=dataclasses.replace(cfg.train, seed=seed),
                perturb=dataclasses.replace(cfg.perturb, master_seed=seed))
        if iterations is not None:
            cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, max_iter=iterations))
        if output_dir is not None:
            cfg = dataclasses.replace(cfg, output_dir=output_dir)
        return cfg


# -- value encoding -----------------------------------------------------------

def _type_of(value) -> str:
    if value is None:
        raise TypeError("cannot infer type of None")
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "str"
    if isinstance(value, (tuple, list)):
        if all(isinstance(v, int) and not isinstance(v, bool) for v in value) and value:
            return "ints"
        return "floats"
    raise TypeError(f"unsupported value {value!r}")


def _encode(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(_encode(float(v) if isinstance(v, float) else v) for v in value)
    return str(value)


def _decode(text: str, typ: str, line: int, key: str):
    optional = typ.endswith("?")
    base = typ.rstrip("?")
    text = text.strip()
    if text.lower() == "none":
        if optional:
            return None
        if base != "str":
            raise ConfigError(f"'none' given for non-optional {base}", line, key)
    try:
        if base == "int":
            return int(text)
        if base == "float":
            return float(text)
        if base == "bool":
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError(text)
            return low == "true"
        if base == "str":
            return text
        if base == "ints":
            return tuple(int(t) for t in text.split(",") if t.strip())
        if base == "floats":
            return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"cannot read {text!r} as {base}", line, key) from None
    raise ConfigError(f"unknown type {typ!r}", line, key)


# Fields whose value may be None carry an optional type marker.
_OPTIONAL = {("perturb", "rgn_std"): "float?", ("train", "crop_size"): "int?"}


def _section_items(obj) -> dict:
    d = {}
    for f in dataclasses.fields(obj):
        if not f.init:
            continue
        v = getattr(obj, f.name)
        if isinstance(v, Variant):
            v = v.value
        d[f.name] = v
    return d


def _render_section(lines, title, items, section_key=None):
    lines.append(f"[{title}]")
    for k, v in items.items():
        typ = _OPTIONAL.get((section_key or title, k)) or _type_of(v)
        lines.append(f"{k}: {typ} = {_encode(v)}")
    lines.append("")


def render(cfg: ExperimentConfig) -> str:
    lines: list[str] = []
    _render_section(lines, "run", {
        "name": cfg.name, "output_dir": cfg.output_dir, "backbone_seed": cfg.backbone_seed,
        "n_train": cfg.n_train, "n_eval": cfg.n_eval, "image_size": tuple(cfg.image_size)})
    _render_section(lines, "perturb", _section_items(cfg.perturb))
    _render_section(lines, "train", _section_items(cfg.train))
    _render_section(lines, "backbone", {k: v for k, v in _section_items(cfg.backbone).items()
                                        if k != "hook_names"})
    _render_section(lines, "diagnostics", _section_items(cfg.diagnostics))
    for i, s in enumerate(cfg.sources):
        _render_section(lines, f"source.{i}", _section_items(s))
    _render_section(lines, "source_eval", _section_items(cfg.source_eval))
    for i, t in enumerate(cfg.targets):
        _render_section(lines, f"target.{i}", _section_items(t))
    return "\n".join(lines)


_SECTION = re.compile(r"^\[([A-Za-z_][\w.]*)\]$")
_ENTRY = re.compile(r"^([A-Za-z_]\w*)\s*:\s*([a-z]+\??)\s*=\s*(.*)$")


def parse(text: str) -> ExperimentConfig:
    sections: dict[str, dict] = {}
    first_line: dict[str, int] = {}
    key_line: dict[tuple[str, str], int] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            current = m.group(1)
            if current in sections:
                raise ConfigError(f"duplicate section [{current}]", lineno)
            sections[current] = {}
            first_line[current] = lineno
            continue
        m = _ENTRY.match(line)
        if not m:
            raise ConfigError(f"expected 'key: type = value', got {raw.strip()!r}", lineno)
        if current is None:
            raise ConfigError("entry outside of any section", lineno)
        key, typ, value = m.groups()
        if key in sections[current]:
            raise ConfigError("duplicate key", lineno, f"{current}.{key}")
        sections[current][key] = _decode(value, typ, lineno, f"{current}.{key}")
        key_line[(current, key)] = lineno

    def build(cls, name, **extra):
        items = {**sections.get(name, {}), **extra}
        known = {f.name for f in dataclasses.fields(cls) if f.init}
        for k in items:
            if k not in known:
                raise ConfigError("unknown field", key_line.get((name, k)), f"{name}.{k}")
        try:
            return cls(**items)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), first_line.get(name), name) from None

    def numbered(prefix):
        keys = sorted((k for k in sections if k.startswith(prefix + ".")),
                      key=lambda k: int(k.split(".", 1)[1]) if k.split(".", 1)[1].isdigit() else -1)
        for k in keys:
            if not k.split(".", 1)[1].isdigit():
                raise ConfigError(f"section suffix must be an integer: [{k}]", first_line[k])
        return tuple(build(DomainSpec, k) for k in keys)

    allowed = {"run", "perturb", "train", "backbone", "diagnostics", "source_eval"}
    for name in sections:
        if name not in allowed and not name.startswith(("source.", "target.")):
            raise ConfigError(f"unknown section [{name}]", first_line[name])

    run = dict(sections.get("run", {}))
    if "image_size" in run:
        run["image_size"] = tuple(run["image_size"])
    kwargs = {}
    for k, v in run.items():
        if k not in ("name", "output_dir", "backbone_seed", "n_train", "n_eval", "image_size"):
            raise ConfigError("unknown field", key_line.get(("run", k)), f"run.{k}")
        kwargs[k] = v
    if "perturb" in sections:
        kwargs["perturb"] = build(PerturbConfig, "perturb")
    if "train" in sections:
        kwargs["train"] = build(TrainConfig, "train")
    if "backbone" in sections:
        kwargs["backbone"] = build(BackboneSpec, "backbone")
    if "diagnostics" in sections:
        kwargs["diagnostics"] = build(Diagnostics, "diagnostics")
    sources = numbered("source")
    if sources:
        kwargs["sources"] = sources
    if "source_eval" in sections:
        kwargs["source_eval"] = build(DomainSpec, "source_eval")
    targets = numbered("target")
    if targets:
        kwargs["targets"] = targets
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse(fh.read())


def save(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(render(cfg))


# Presets for the component ablation (one row per setting).
def ablation_configs(base: ExperimentConfig) -> dict[str, ExperimentConfig]:
    p = base.perturb
    rows = {
        "baseline": dataclasses.replace(p, variant=Variant.NONE),
        "np_plus": dataclasses.replace(p, variant=Variant.HRFP, p_hrfp=0.0),
        "hrfp": dataclasses.replace(p, variant=Variant.HRFP, p_np=0.0),
        "scfp": dataclasses.replace(p, variant=Variant.SCFP),
        "mrfp": dataclasses.replace(p, variant=Variant.HRFP),
        "mrfp_plus": dataclasses.replace(p, variant=Variant.HRFP_PLUS),
    }
    return {k: dataclasses.replace(base, name=f"{base.name}-{k}", perturb=v) for k, v in rows.items()}
