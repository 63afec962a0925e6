"""Run-configuration file: one self-contained JSON document per run.

The schema is validated strictly before any computation: unknown keys are
rejected with the offending path named, so typos fail fast instead of being
silently ignored.  CLI flags override individual fields after loading.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

from .errors import ConfigError
from .optim import DEFAULT_STOP, CsConfig, GaConfig, PsoConfig
from .params import GGOV1, ST6B, ParamSet, defaults_for


def _require_keys(section: dict, allowed: set, path: str):
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {path}; "
                          f"allowed: {sorted(allowed)}")


def _number(section, key, path, default=None, minimum=None):
    value = section.get(key, default)
    if value is None:
        raise ConfigError(f"{path}.{key} is required")
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{path}.{key} must be a number, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}.{key} = {value} below minimum {minimum}")
    return float(value)


@dataclass
class ModelSection:
    kind: str = GGOV1
    dt: float = 0.001
    p_e0: float = 0.75
    e_fd0: float = 1.0
    fsrt_margin: float = 0.5
    limiter_enabled: bool = False


@dataclass
class PreprocessSection:
    filter: bool = False
    cutoff_hz: float = 40.0
    order: int = 2
    bases: dict = field(default_factory=dict)


@dataclass
class OptimizerSection:
    name: str = "cs"
    seed: int = 0
    max_generations: int = 100
    stop_index_percent: float = DEFAULT_STOP   # exp(-2), read on the percent index
    restarts: int = 3
    use_ls_seed: bool = True
    polish: bool = True
    workers: int = 1
    extra: dict = field(default_factory=dict)   # per-algorithm fields

    @property
    def stop_threshold_mse(self) -> float:
        return self.stop_index_percent / 100.0

    def build(self, name=None, seed=None):
        name = name or self.name
        seed = self.seed if seed is None else seed
        common = dict(seed=seed, max_generations=self.max_generations,
                      stop_threshold=self.stop_threshold_mse)
        if name == "cs":
            return CsConfig(**common, **self.extra.get("cs", {}))
        if name == "ga":
            return GaConfig(**common, **self.extra.get("ga", {}))
        if name == "pso":
            return PsoConfig(**common, **self.extra.get("pso", {}))
        raise ConfigError(f"unknown optimizer '{name}' (use cs, ga or pso)")


@dataclass
class SignalChannel:
    name: str
    kind: str                 # "pulse" or "constant"
    value: float = 0.0
    period: float = 20.0
    duty: float = 0.5
    low: float = 0.0
    high: float = 1.0


@dataclass
class SignalSection:
    dt: float = 0.001
    duration: float = 60.0
    channels: list = field(default_factory=list)
    snr_db: float = math.inf
    noise_seed: int = 0
    noise_channels: list = field(default_factory=list)


@dataclass
class ValidationSection:
    max_error_index_percent: float = 0.5
    alpha: float = 0.01
    lags: int = 25
    use_chi2: bool = False
    decimate: int = 20
    remove_mean: bool = True


@dataclass
class RunConfig:
    model: ModelSection
    parameters: dict
    preprocessing: PreprocessSection
    optimizer: OptimizerSection
    signal: SignalSection
    validation: ValidationSection
    second_model: "RunConfig | None"
    figures: bool
    digest: str

    def build_params(self) -> ParamSet:
        params = defaults_for(self.model.kind)
        for name, spec in self.parameters.items():
            if name not in params:
                raise ConfigError(f"unknown parameter '{name}' for {self.model.kind}")
            entry = params[name]
            if "value" in spec:
                entry.value = float(spec["value"])
            if "min" in spec:
                entry.lo = float(spec["min"])
            if "max" in spec:
                entry.hi = float(spec["max"])
            if "free" in spec:
                entry.free = bool(spec["free"])
        return params


_TOP_KEYS = {"model", "parameters", "preprocessing", "optimizer", "signal",
             "validation", "second_model", "figures"}
_MODEL_KEYS = {"kind", "dt", "operating_point", "limiter_enabled"}
_OP_KEYS = {"p_e0", "e_fd0", "fsrt_margin"}
_PRE_KEYS = {"filter", "cutoff_hz", "order", "bases"}
_OPT_KEYS = {"name", "seed", "max_generations", "stop_index_percent", "restarts",
             "use_ls_seed", "polish", "workers", "cs", "ga", "pso"}
_SIG_KEYS = {"dt", "duration", "channels", "noise"}
_CHAN_KEYS = {"name", "kind", "value", "period", "duty", "low", "high"}
_NOISE_KEYS = {"snr_db", "seed", "channels"}
_VAL_KEYS = {"max_error_index_percent", "alpha", "lags", "use_chi2", "decimate",
             "remove_mean"}
_PARAM_KEYS = {"value", "min", "max", "free"}


def _parse_model(section) -> ModelSection:
    _require_keys(section, _MODEL_KEYS, "model")
    kind = section.get("kind", GGOV1)
    if kind not in (GGOV1, ST6B):
        raise ConfigError(f"model.kind must be {GGOV1} or {ST6B}, got {kind!r}")
    op = section.get("operating_point", {})
    _require_keys(op, _OP_KEYS, "model.operating_point")
    return ModelSection(
        kind=kind,
        dt=_number(section, "dt", "model", default=0.001, minimum=1e-9),
        p_e0=_number(op, "p_e0", "model.operating_point", default=0.75),
        e_fd0=_number(op, "e_fd0", "model.operating_point", default=1.0),
        fsrt_margin=_number(op, "fsrt_margin", "model.operating_point", default=0.5),
        limiter_enabled=bool(section.get("limiter_enabled", False)),
    )


def _parse_parameters(section) -> dict:
    if not isinstance(section, dict):
        raise ConfigError("parameters must be a table of name -> entry")
    for name, spec in section.items():
        if not isinstance(spec, dict):
            raise ConfigError(f"parameters.{name} must be a table")
        _require_keys(spec, _PARAM_KEYS, f"parameters.{name}")
    return dict(section)


def _parse_preprocessing(section) -> PreprocessSection:
    _require_keys(section, _PRE_KEYS, "preprocessing")
    return PreprocessSection(
        filter=bool(section.get("filter", False)),
        cutoff_hz=_number(section, "cutoff_hz", "preprocessing", default=40.0, minimum=1e-6),
        order=int(_number(section, "order", "preprocessing", default=2, minimum=1)),
        bases={k: float(v) for k, v in section.get("bases", {}).items()},
    )


def _parse_optimizer(section) -> OptimizerSection:
    _require_keys(section, _OPT_KEYS, "optimizer")
    name = section.get("name", "cs")
    if name not in ("cs", "ga", "pso"):
        raise ConfigError(f"optimizer.name must be cs, ga or pso, got {name!r}")
    extra = {}
    for algo in ("cs", "ga", "pso"):
        if algo in section:
            extra[algo] = dict(section[algo])
    return OptimizerSection(
        name=name,
        seed=int(_number(section, "seed", "optimizer", default=0)),
        max_generations=int(_number(section, "max_generations", "optimizer",
                                    default=100, minimum=1)),
        stop_index_percent=_number(section, "stop_index_percent", "optimizer",
                                   default=DEFAULT_STOP, minimum=0.0),
        restarts=int(_number(section, "restarts", "optimizer", default=3, minimum=1)),
        use_ls_seed=bool(section.get("use_ls_seed", True)),
        polish=bool(section.get("polish", True)),
        workers=int(_number(section, "workers", "optimizer", default=1, minimum=1)),
        extra=extra,
    )


def _parse_signal(section) -> SignalSection:
    _require_keys(section, _SIG_KEYS, "signal")
    channels = []
    for i, chan in enumerate(section.get("channels", [])):
        _require_keys(chan, _CHAN_KEYS, f"signal.channels[{i}]")
        if "name" not in chan or "kind" not in chan:
            raise ConfigError(f"signal.channels[{i}] needs name and kind")
        if chan["kind"] not in ("pulse", "constant"):
            raise ConfigError(f"signal.channels[{i}].kind must be pulse or constant")
        channels.append(SignalChannel(
            name=chan["name"], kind=chan["kind"],
            value=float(chan.get("value", 0.0)),
            period=float(chan.get("period", 20.0)),
            duty=float(chan.get("duty", 0.5)),
            low=float(chan.get("low", 0.0)),
            high=float(chan.get("high", 1.0)),
        ))
    noise = section.get("noise", {})
    _require_keys(noise, _NOISE_KEYS, "signal.noise")
    snr = noise.get("snr_db", math.inf)
    snr = math.inf if snr in (None, "inf") else float(snr)
    return SignalSection(
        dt=_number(section, "dt", "signal", default=0.001, minimum=1e-9),
        duration=_number(section, "duration", "signal", default=60.0, minimum=1e-6),
        channels=channels,
        snr_db=snr,
        noise_seed=int(noise.get("seed", 0)),
        noise_channels=list(noise.get("channels", [])),
    )


def _parse_validation(section) -> ValidationSection:
    _require_keys(section, _VAL_KEYS, "validation")
    return ValidationSection(
        max_error_index_percent=_number(section, "max_error_index_percent",
                                        "validation", default=0.5, minimum=0.0),
        alpha=_number(section, "alpha", "validation", default=0.01, minimum=1e-12),
        lags=int(_number(section, "lags", "validation", default=25, minimum=1)),
        use_chi2=bool(section.get("use_chi2", False)),
        decimate=int(_number(section, "decimate", "validation", default=20, minimum=1)),
        remove_mean=bool(section.get("remove_mean", True)),
    )


def parse_config(document: dict, digest: str = "") -> RunConfig:
    if not isinstance(document, dict):
        raise ConfigError("configuration root must be a JSON object")
    _require_keys(document, _TOP_KEYS, "top level")
    second = None
    if "second_model" in document:
        inner = dict(document["second_model"])
        _require_keys(inner, {"model", "parameters"}, "second_model")
        second = parse_config(
            {"model": inner.get("model", {}), "parameters": inner.get("parameters", {})},
            digest=digest)
    return RunConfig(
        model=_parse_model(document.get("model", {})),
        parameters=_parse_parameters(document.get("parameters", {})),
        preprocessing=_parse_preprocessing(document.get("preprocessing", {})),
        optimizer=_parse_optimizer(document.get("optimizer", {})),
        signal=_parse_signal(document.get("signal", {})),
        validation=_parse_validation(document.get("validation", {})),
        second_model=second,
        figures=bool(document.get("figures", True)),
        digest=digest,
    )


def load_config(path) -> RunConfig:
    try:
        raw = open(path, "rb").read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    try:
        document = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse_config(document, digest=hashlib.sha256(raw).hexdigest()[:16])
