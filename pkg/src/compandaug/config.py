"""Pipeline configuration: one INI file with a section per stage.

Relative paths are resolved against the directory holding the config file.
Every stage reads its seed from ``[run] seed``.

Example::

    [paths]
    train_protocol = data/train.txt
    train_audio = data/train
    dev_protocol = data/development.txt
    dev_audio = data/development
    eval_protocol = data/evaluation.txt
    eval_audio = data/evaluation
    output_dir = out

    [run]
    seed = 0
    jobs = 1

    [augment]
    plan = dasc
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path

from .companding import Mode
from .cqt import N_FRAMES, CqtConfig
from .lcnn import LcnnSpec, TrainConfig
from .metrics import TdcfCostModel

PLANS = ("dasc", "noise", "none")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataPaths:
    train_protocol: Path
    train_audio: Path
    dev_protocol: Path | None
    dev_audio: Path | None
    eval_protocol: Path | None
    eval_audio: Path | None


@dataclass(frozen=True)
class AugmentConfig:
    plan: str = "dasc"
    mode: Mode = Mode.QUANTIZED8
    noise_sources: tuple = ("white",)
    snr_db: float = 20.0


@dataclass(frozen=True)
class PipelineConfig:
    paths: DataPaths
    output_dir: Path
    seed: int = 0
    jobs: int = 1
    augment: AugmentConfig = AugmentConfig()
    cqt: CqtConfig = CqtConfig()
    model: LcnnSpec = field(default_factory=LcnnSpec)
    train: TrainConfig = TrainConfig()
    tdcf: TdcfCostModel = TdcfCostModel()
    asv_file: Path | None = None
    skip_existing: bool = False

    def with_overrides(self, seed: int | None = None, jobs: int | None = None,
                       ) -> "PipelineConfig":
        out = self
        if seed is not None:
            out = dataclasses.replace(out, seed=seed,
                                      train=dataclasses.replace(out.train, seed=seed))
        if jobs is not None:
            if jobs < 1:
                raise ConfigError("jobs must be at least 1")
            out = dataclasses.replace(out, jobs=jobs)
        return out

    def validate(self) -> None:
        """Check that every configured input path exists."""
        p = self.paths
        pairs = [("train_protocol", p.train_protocol), ("train_audio", p.train_audio),
                 ("dev_protocol", p.dev_protocol), ("dev_audio", p.dev_audio),
                 ("eval_protocol", p.eval_protocol), ("eval_audio", p.eval_audio),
                 ("asv_file", self.asv_file)]
        pairs += [("noise source", Path(s)) for s in self.augment.noise_sources if s != "white"]
        for name, path in pairs:
            if path is not None and not Path(path).exists():
                raise ConfigError("%s does not exist: %s" % (name, path))


def _dataclass_from_section(cls, section, base, converters=None):
    """Build ``cls`` from ``base`` overriding the fields present in ``section``."""
    converters = converters or {}
    values = dataclasses.asdict(base) if base is not None else {}
    names = {f.name: f for f in dataclasses.fields(cls)}
    for key, raw in section.items():
        if key not in names:
            raise ConfigError("[%s] unknown key %r" % (section.name, key))
        default = values.get(key)
        conv = converters.get(key)
        try:
            if conv is not None:
                values[key] = conv(raw)
            elif isinstance(default, bool):
                values[key] = section.getboolean(key)
            elif isinstance(default, int):
                values[key] = int(raw)
            elif isinstance(default, float):
                values[key] = float(raw)
            else:
                values[key] = raw
        except ValueError as exc:
            raise ConfigError("[%s] %s: %s" % (section.name, key, exc)) from None
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError("[%s] %s" % (section.name, exc)) from None


def _tuple(raw: str) -> tuple:
    return tuple(v for v in raw.replace(",", " ").split() if v)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config file not found: %s" % path)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError("%s: %s" % (path, exc)) from None
    known = {"paths", "run", "augment", "cqt", "model", "train", "tdcf"}
    unknown = set(parser.sections()) - known
    if unknown:
        raise ConfigError("unknown config sections: %s" % ", ".join(sorted(unknown)))
    base_dir = path.parent

    def resolve(value):
        if value is None or value == "":
            return None
        p = Path(value).expanduser()
        return p if p.is_absolute() else base_dir / p

    if not parser.has_section("paths"):
        raise ConfigError("config needs a [paths] section")
    sec = parser["paths"]
    allowed = {f.name for f in dataclasses.fields(DataPaths)} | {"output_dir"}
    for key in sec:
        if key not in allowed:
            raise ConfigError("[paths] unknown key %r" % key)
    for key in ("train_protocol", "train_audio", "output_dir"):
        if not sec.get(key):
            raise ConfigError("[paths] %s is required" % key)
    paths = DataPaths(**{f.name: resolve(sec.get(f.name)) for f in dataclasses.fields(DataPaths)})

    run = parser["run"] if parser.has_section("run") else {}
    for key in run:
        if key not in ("seed", "jobs", "skip_existing"):
            raise ConfigError("[run] unknown key %r" % key)
    try:
        seed = int(run.get("seed", 0))
        jobs = int(run.get("jobs", 1))
        skip = parser.getboolean("run", "skip_existing", fallback=False)
    except ValueError as exc:
        raise ConfigError("[run] %s" % exc) from None

    def section(name):
        if parser.has_section(name):
            return parser[name]
        parser.add_section(name)
        return parser[name]

    augment = _dataclass_from_section(
        AugmentConfig, section("augment"), AugmentConfig(),
        {"mode": Mode, "noise_sources": _tuple, "snr_db": float})
    if augment.plan not in PLANS:
        raise ConfigError("[augment] plan must be one of %s" % ", ".join(PLANS))
    augment = dataclasses.replace(augment, noise_sources=tuple(
        s if s == "white" else str(resolve(s)) for s in augment.noise_sources))
    cqt = _dataclass_from_section(CqtConfig, section("cqt"), CqtConfig())
    model = _dataclass_from_section(LcnnSpec, section("model"), LcnnSpec(),
                                    {"input_shape": lambda s: tuple(int(v) for v in _tuple(s))})
    if model.input_shape != (cqt.n_bins, N_FRAMES):
        raise ConfigError("[model] input_shape must be %d %d to match the features"
                          % (cqt.n_bins, N_FRAMES))
    train = _dataclass_from_section(TrainConfig, section("train"), TrainConfig(seed=seed))
    tdcf_sec = section("tdcf")
    asv_file = resolve(tdcf_sec.get("asv_file"))
    tdcf_sec.pop("asv_file", None)
    tdcf = _dataclass_from_section(TdcfCostModel, tdcf_sec, TdcfCostModel())
    cfg = PipelineConfig(paths, resolve(sec["output_dir"]), seed, jobs, augment, cqt, model,
                         train, tdcf, asv_file, skip)
    if jobs < 1:
        raise ConfigError("[run] jobs must be at least 1")
    return cfg


def write_config_text(paths: dict[str, str], output_dir: str = "out", seed: int = 0,
                      extra: dict[str, dict[str, str]] | None = None) -> str:
    """Render a config file; ``extra`` maps section names to key/value pairs."""
    parser = configparser.ConfigParser(interpolation=None)
    parser["paths"] = dict(paths, output_dir=output_dir)
    parser["run"] = {"seed": str(seed), "jobs": "1"}
    for name, values in (extra or {}).items():
        parser[name] = values
    buf = StringIO()
    parser.write(buf)
    return buf.getvalue()
