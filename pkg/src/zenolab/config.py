"""Experiment configuration: nested dataclasses with JSON round-tripping."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, is_dataclass


class ConfigError(ValueError):
    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path
        self.message = message


@dataclass
class Geometry:
    theta: float = math.pi / 4
    p_norm: float = 1.0
    axis: list = field(default_factory=lambda: [1.0, 0.0, 0.0, 0.0])
    normal_convention: str = "fixed"


@dataclass
class Increments:
    s: float = 1.0
    kappa: float = 1.0
    weighting: str = "zeno"
    kappa_grid: list = field(default_factory=lambda: [0.25, 0.5, 1.0, 2.0, 4.0])


@dataclass
class Amplitude:
    w: float = 0.5
    a: float = 1.0
    eta: float = 0.1
    gamma: float | None = None  # None: kappa^-1/2 * median kicked increment
    averaging: str = "pointwise"
    resolvent: str = "lorentzian"


@dataclass
class Flow:
    r0: float = 1.0
    lam_max: float = 3.0
    rtol: float = 1e-8
    atol: float = 1e-12
    tol_rhs: float = 1e-10
    rho_model: str = "constant"
    rho_value: float = 1.0
    rho_dlam: float = 1.0
    representative: str = "calibrated"
    bracket: list = field(default_factory=lambda: [-10.0, -1e-3])


@dataclass
class Kinetics:
    m: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    h: float = 0.025
    n_side: int = 200
    jumps: list = field(default_factory=lambda: [1, 2])
    w: float | None = None
    dim: int = 1
    horizon: float = 1e7
    l1_target: float = 1e-6


@dataclass
class Robustness:
    gamma_perp: float = 1.0
    coupling: float = 0.2
    chi: float = 0.5
    lam_max: float = 5.0
    eps_aniso: list = field(default_factory=lambda: [0.01, 0.02, 0.04])


@dataclass
class MonteCarlo:
    samples: int = 100_000
    seed: int = 12345
    chunk: int = 65_536
    workers: int = 1


@dataclass
class Output:
    dir: str = "out"


@dataclass
class ExperimentConfig:
    geometry: Geometry = field(default_factory=Geometry)
    increments: Increments = field(default_factory=Increments)
    amplitude: Amplitude = field(default_factory=Amplitude)
    flow: Flow = field(default_factory=Flow)
    kinetics: Kinetics = field(default_factory=Kinetics)
    robustness: Robustness = field(default_factory=Robustness)
    mc: MonteCarlo = field(default_factory=MonteCarlo)
    output: Output = field(default_factory=Output)

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        """SHA-256 of the result-determining fields.

        ``output.dir`` and ``mc.workers`` are excluded: they change where and
        how fast results are produced, never the results themselves.
        """
        data = self.to_dict()
        del data["output"]
        del data["mc"]["workers"]
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        cfg = _build(cls, data or {}, "")
        validate(cfg)
        return cfg

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        return cls.from_dict(data)


def _build(cls, data, prefix):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        path = f"{prefix}{key}"
        if key not in known:
            raise ConfigError(path, "unknown field")
        default = known[key].default_factory() if callable(known[key].default_factory) else known[key].default
        if is_dataclass(default):
            if not isinstance(value, dict):
                raise ConfigError(path, "expected an object")
            kwargs[key] = _build(type(default), value, path + ".")
        else:
            kwargs[key] = value
    return cls(**kwargs)


def _positive(cfg, path):
    section, name = path.split(".")
    value = getattr(getattr(cfg, section), name)
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0 or not math.isfinite(value):
        raise ConfigError(path, f"must be a positive finite number, got {value!r}")


def _choice(cfg, path, options):
    section, name = path.split(".")
    value = getattr(getattr(cfg, section), name)
    if value not in options:
        raise ConfigError(path, f"must be one of {options}, got {value!r}")


def validate(cfg: ExperimentConfig) -> None:
    for path in ("geometry.p_norm", "increments.s", "amplitude.w", "amplitude.eta", "flow.lam_max",
                 "flow.rtol", "flow.atol", "flow.tol_rhs", "flow.rho_dlam", "kinetics.m", "kinetics.alpha",
                 "kinetics.h", "kinetics.horizon", "kinetics.l1_target", "robustness.gamma_perp",
                 "robustness.lam_max", "mc.samples", "mc.chunk", "mc.workers", "increments.kappa"):
        _positive(cfg, path)
    if not cfg.amplitude.a >= 0:
        raise ConfigError("amplitude.a", "must be nonnegative")
    if not cfg.kinetics.beta >= 0:
        raise ConfigError("kinetics.beta", "must be nonnegative")
    if cfg.amplitude.gamma is not None:
        _positive(cfg, "amplitude.gamma")
    if cfg.kinetics.w is not None:
        _positive(cfg, "kinetics.w")
    if not cfg.flow.rho_value > 0:
        raise ConfigError("flow.rho_value", "rate must be positive")
    _choice(cfg, "geometry.normal_convention", ("fixed", "gradient"))
    _choice(cfg, "increments.weighting", ("zeno", "bare"))
    _choice(cfg, "amplitude.averaging", ("pointwise", "shell"))
    _choice(cfg, "amplitude.resolvent", ("lorentzian", "multiplier"))
    _choice(cfg, "flow.rho_model", ("constant", "schur"))
    _choice(cfg, "flow.representative", ("calibrated", "unit"))
    _choice(cfg, "kinetics.dim", (1, 3))
    if len(cfg.geometry.axis) != 4:
        raise ConfigError("geometry.axis", "must have four components")
    if abs(math.fsum(x * x for x in cfg.geometry.axis) - 1.0) > 1e-12:
        raise ConfigError("geometry.axis", "must be a unit vector")
    if not (len(cfg.flow.bracket) == 2 and cfg.flow.bracket[0] < cfg.flow.bracket[1]):
        raise ConfigError("flow.bracket", "must be [lo, hi] with lo < hi")
    if any(not k > 0 for k in cfg.increments.kappa_grid):
        raise ConfigError("increments.kappa_grid", "entries must be positive")
    if any(not e >= 0 for e in cfg.robustness.eps_aniso):
        raise ConfigError("robustness.eps_aniso", "entries must be nonnegative")
    if not isinstance(cfg.mc.seed, int) or cfg.mc.seed < 0:
        raise ConfigError("mc.seed", "must be a nonnegative integer")
    if not isinstance(cfg.kinetics.n_side, int) or cfg.kinetics.n_side < 1:
        raise ConfigError("kinetics.n_side", "must be a positive integer")
