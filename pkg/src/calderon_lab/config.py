"""Experiment configuration: strict YAML parsing into frozen dataclasses.

Example::

    command: recover
    seed: 0
    output: results
    geometry:
      shape: unit_disk
      h_mesh: 0.06
      gamma: {start: 0.0, end: 3.141592653589793}
      rho: 1.2
    model:
      family: scalar_multiple
      lambda: 2.0
      M: identity
    coefficients:
      a: {expression: "1.0"}
      b: {expression: "1.1"}
    recovery:
      pair: [a, b]
      x0: [0.0, 1.0]
      taus: [0.15, 0.1, 0.075, 0.05]
      r0: 1.0

Every command other than ``verify`` needs its section (``forward``, ``maps``,
``singular``, ``recovery`` or ``sweep``). Serialization is the sorted
``yaml.safe_dump`` of :meth:`ExperimentConfig.to_dict`; the config hash is the
SHA-256 of that text.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any

import yaml

from .conductivity import (
    ConductivityModel,
    Family,
    MatrixField,
    Modulus,
    ModulusKind,
    ScalarCoefficient,
    expression_coefficient,
    load_coefficient,
)
from .errors import ConfigError
from .geometry import (
    SQUARE_SIDES,
    GammaSpec,
    MeshDomain,
    Shape,
    generate_mesh,
    shape_perimeter,
)
from .maps import OperatorKind
from .recovery import ExtrapolationVariable
from .schema import reject_unknown_fields, require_mapping

DETERMINISTIC_ENV = "CALDERON_LAB_DETERMINISTIC"

EXPERIMENT_FIELDS = frozenset({
    "command", "seed", "threads", "output", "geometry", "model", "coefficients",
    "forward", "maps", "singular", "recovery", "sweep", "verify",
})
GEOMETRY_FIELDS = frozenset({"shape", "h_mesh", "gamma", "rho", "thickness", "patch_fraction"})
GAMMA_FIELDS = frozenset({"full", "start", "end", "side"})
MODEL_FIELDS = frozenset({"family", "lambda", "E", "F", "p", "M", "M0", "M1"})
COEFFICIENT_FIELDS = frozenset({"expression", "file", "w1p_bound", "modulus"})
MODULUS_FIELDS = frozenset({"kind", "constant", "exponent"})
FORWARD_FIELDS = frozenset({"coefficient", "dirichlet", "neumann"})
MAPS_FIELDS = frozenset({"coefficients"})
SINGULAR_FIELDS = frozenset({"coefficient", "x0", "tau", "kind", "degree"})
RECOVERY_FIELDS = frozenset({
    "pair", "x0", "taus", "r0", "map", "extrapolation", "epsilons", "target",
})
SWEEP_FIELDS = frozenset({"pairs", "map", "escalation", "random"})
ESCALATION_FIELDS = frozenset({"base", "ks", "amplitude"})
RANDOM_FIELDS = frozenset({"count", "x0"})
VERIFY_FIELDS = frozenset({"suites"})


class Command(str, Enum):
    FORWARD = "forward"
    DN_MAP = "dn-map"
    ND_MAP = "nd-map"
    SINGULAR = "singular"
    RECOVER = "recover"
    SWEEP = "sweep"
    VERIFY = "verify"


class SingularKind(str, Enum):
    GREEN = "green"
    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"


_SECTION_FOR_COMMAND = {
    Command.FORWARD: "forward",
    Command.DN_MAP: "maps",
    Command.ND_MAP: "maps",
    Command.SINGULAR: "singular",
    Command.RECOVER: "recovery",
    Command.SWEEP: "sweep",
}


def _number(data: dict, key: str, context: str, *, default: float | None = None) -> float:
    if key not in data:
        if default is None:
            raise ConfigError(f"{context} must have a '{key}' field")
        return default
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{context}.{key} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{context}.{key} must be finite, got {value}")
    return float(value)


def _positive(data: dict, key: str, context: str, *, default: float | None = None) -> float:
    value = _number(data, key, context, default=default)
    if not value > 0:
        raise ConfigError(f"{context}.{key} must be positive, got {value}")
    return value


def _integer(data: dict, key: str, context: str, *, default: int, minimum: int) -> int:
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{context}.{key} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{context}.{key} must be >= {minimum}, got {value}")
    return value


def _number_list(value: Any, context: str, *, allow_empty: bool = False) -> tuple[float, ...]:
    if not isinstance(value, list) or (not value and not allow_empty):
        raise ConfigError(f"{context} must be a non-empty list of numbers")
    out = []
    for item in value:
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise ConfigError(f"{context} must contain only numbers, got {item!r}")
        out.append(float(item))
    return tuple(out)


def _point(value: Any, context: str) -> tuple[float, float]:
    numbers = _number_list(value, context)
    if len(numbers) != 2:
        raise ConfigError(f"{context} must be a point [x1, x2], got {value!r}")
    return numbers[0], numbers[1]


def _enum(enum: type[Enum], value: Any, context: str) -> Any:
    try:
        return enum(value)
    except ValueError:
        choices = ", ".join(str(member.value) for member in enum)
        raise ConfigError(f"{context} must be one of {choices}, got {value!r}") from None


def _tag_pair(value: Any, context: str) -> tuple[str, str]:
    if not isinstance(value, list) or len(value) != 2:
        raise ConfigError(f"{context} must be a pair of coefficient tags")
    return str(value[0]), str(value[1])


@dataclass(frozen=True)
class GeometryConfig:
    shape: Shape = Shape.UNIT_DISK
    h_mesh: float = 0.05
    gamma: GammaSpec = field(default_factory=GammaSpec.full_boundary)
    rho: float = 0.5
    thickness: float | None = None
    patch_fraction: float = 1.0 / 3.0

    def build_mesh(self) -> MeshDomain:
        return generate_mesh(self.shape, self.h_mesh, self.gamma)

    def to_dict(self) -> dict[str, Any]:
        gamma: dict[str, Any] = {"full": True}
        if not self.gamma.full:
            gamma = {"start": self.gamma.start, "end": self.gamma.end}
        data: dict[str, Any] = {
            "shape": self.shape.value,
            "h_mesh": self.h_mesh,
            "gamma": gamma,
            "rho": self.rho,
            "patch_fraction": self.patch_fraction,
        }
        if self.thickness is not None:
            data["thickness"] = self.thickness
        return data


def _parse_gamma(data: Any, shape: Shape) -> GammaSpec:
    data = require_mapping(data, "geometry.gamma")
    reject_unknown_fields(data, GAMMA_FIELDS, "geometry.gamma")
    if data.get("full"):
        if len(data) > 1:
            raise ConfigError("geometry.gamma 'full' excludes start, end and side")
        return GammaSpec.full_boundary()
    if "side" in data:
        if shape is not Shape.UNIT_SQUARE:
            raise ConfigError("geometry.gamma.side applies to the unit_square shape only")
        if set(data) - {"side", "full"}:
            raise ConfigError("geometry.gamma 'side' excludes start and end")
        if data["side"] not in SQUARE_SIDES:
            raise ConfigError(
                f"geometry.gamma.side must be one of {', '.join(SQUARE_SIDES)}, "
                f"got {data['side']!r}"
            )
        return GammaSpec.side(data["side"])
    spec = GammaSpec.arc(
        _number(data, "start", "geometry.gamma"), _number(data, "end", "geometry.gamma")
    )
    spec.validate(shape_perimeter(shape))
    return spec


def _parse_geometry(data: Any) -> GeometryConfig:
    data = require_mapping(data, "geometry")
    reject_unknown_fields(data, GEOMETRY_FIELDS, "geometry")
    shape = _enum(Shape, data.get("shape", Shape.UNIT_DISK.value), "geometry.shape")
    if shape not in (Shape.UNIT_DISK, Shape.UNIT_SQUARE):
        raise ConfigError(f"geometry.shape must be unit_disk or unit_square, got {shape.value}")
    h_mesh = _positive(data, "h_mesh", "geometry", default=0.05)
    if h_mesh > 0.5:
        raise ConfigError(f"geometry.h_mesh={h_mesh} exceeds 0.5")
    gamma = _parse_gamma(data.get("gamma", {"full": True}), shape)
    rho = _positive(data, "rho", "geometry", default=0.5)
    rho0 = 0.5 * gamma.length(shape_perimeter(shape))
    if rho >= rho0:
        raise ConfigError(f"geometry.rho={rho} is not below rho0={rho0:.6g}")
    thickness = None
    if "thickness" in data:
        thickness = _positive(data, "thickness", "geometry")
        if thickness < 0.5 * rho:
            raise ConfigError(f"geometry.thickness={thickness} is below rho/2={0.5 * rho}")
    patch_fraction = _positive(data, "patch_fraction", "geometry", default=1.0 / 3.0)
    if patch_fraction > 1.0:
        raise ConfigError(f"geometry.patch_fraction={patch_fraction} exceeds 1")
    return GeometryConfig(shape, h_mesh, gamma, rho, thickness, patch_fraction)


MatrixSpec = tuple[tuple[str, str], tuple[str, str]]


def _matrix_spec(value: Any, context: str) -> MatrixSpec:
    try:
        spec = MatrixField.from_spec(value).to_spec()
    except ConfigError as exc:
        raise ConfigError(f"{context}: {exc}") from exc
    return (spec[0][0], spec[0][1]), (spec[1][0], spec[1][1])


@dataclass(frozen=True)
class ModelConfig:
    family: Family = Family.SCALAR_MULTIPLE
    lambda_: float = 2.0
    calE: float = 2.0
    calF: float = 1.0
    p: float = 4.0
    M: MatrixSpec | None = (("1.0", "0.0"), ("0.0", "1.0"))
    M0: MatrixSpec | None = None
    M1: MatrixSpec | None = None

    def build(self) -> ConductivityModel:
        def matrix(spec: MatrixSpec | None) -> MatrixField | None:
            return None if spec is None else MatrixField.from_spec([list(row) for row in spec])

        return ConductivityModel(
            self.family,
            lambda_=self.lambda_,
            calE=self.calE,
            calF=self.calF,
            p=self.p,
            M=matrix(self.M),
            M0=matrix(self.M0),
            M1=matrix(self.M1),
        )

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "family": self.family.value,
            "lambda": self.lambda_,
            "E": self.calE,
            "F": self.calF,
            "p": self.p,
        }
        for name in ("M", "M0", "M1"):
            spec = getattr(self, name)
            if spec is not None:
                data[name] = [list(row) for row in spec]
        return data


def _parse_model(data: Any) -> ModelConfig:
    data = require_mapping(data, "model")
    reject_unknown_fields(data, MODEL_FIELDS, "model")
    family = _enum(Family, data.get("family", Family.SCALAR_MULTIPLE.value), "model.family")
    lambda_ = _positive(data, "lambda", "model", default=2.0)
    matrices: dict[str, MatrixSpec | None] = {"M": None, "M0": None, "M1": None}
    wanted = ("M",) if family is Family.SCALAR_MULTIPLE else ("M0", "M1")
    for name in matrices:
        if name in data and name not in wanted:
            raise ConfigError(f"model.{name} does not apply to the {family.value} family")
    for name in wanted:
        if name not in data and name != "M":
            raise ConfigError(f"model must have a '{name}' field for the {family.value} family")
        matrices[name] = _matrix_spec(data.get(name, "identity"), f"model.{name}")
    config = ModelConfig(
        family=family,
        lambda_=lambda_,
        calE=_positive(data, "E", "model", default=lambda_),
        calF=_positive(data, "F", "model", default=1.0),
        p=_positive(data, "p", "model", default=4.0),
        M=matrices["M"],
        M0=matrices["M0"],
        M1=matrices["M1"],
    )
    config.build()
    return config


@dataclass(frozen=True)
class ModulusConfig:
    kind: ModulusKind
    constant: float
    exponent: float = 1.0

    def build(self) -> Modulus:
        if self.kind is ModulusKind.LIPSCHITZ:
            return Modulus.lipschitz(self.constant)
        return Modulus.holder(self.constant, self.exponent)


@dataclass(frozen=True)
class CoefficientConfig:
    expression: str | None = None
    file: str | None = None
    w1p_bound: float | None = None
    modulus: ModulusConfig | None = None

    def build(self, tag: str, lambda_: float, mesh: MeshDomain | None = None) -> ScalarCoefficient:
        modulus = self.modulus.build() if self.modulus is not None else None
        if self.expression is not None:
            return expression_coefficient(
                self.expression,
                lambda_=lambda_,
                tag=tag,
                w1p_bound=self.w1p_bound,
                modulus=modulus,
            )
        assert self.file is not None
        coeff = load_coefficient(
            Path(self.file).read_text(encoding="utf-8"), lambda_=lambda_, mesh=mesh, tag=tag
        )
        return replace(coeff, w1p_bound=self.w1p_bound, modulus=modulus)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {}
        if self.expression is not None:
            data["expression"] = self.expression
        if self.file is not None:
            data["file"] = self.file
        if self.w1p_bound is not None:
            data["w1p_bound"] = self.w1p_bound
        if self.modulus is not None:
            data["modulus"] = {
                "kind": self.modulus.kind.value,
                "constant": self.modulus.constant,
                "exponent": self.modulus.exponent,
            }
        return data


def _parse_coefficient(tag: str, data: Any) -> CoefficientConfig:
    context = f"coefficients.{tag}"
    if isinstance(data, (int, float, str)) and not isinstance(data, bool):
        data = {"expression": data}
    data = require_mapping(data, context)
    reject_unknown_fields(data, COEFFICIENT_FIELDS, context)
    if ("expression" in data) == ("file" in data):
        raise ConfigError(f"{context} needs exactly one of expression or file")
    expression = None
    if "expression" in data:
        expression = str(data["expression"])
        expression_coefficient(expression, lambda_=1.0)
    modulus = None
    if "modulus" in data:
        raw = require_mapping(data["modulus"], f"{context}.modulus")
        reject_unknown_fields(raw, MODULUS_FIELDS, f"{context}.modulus")
        kind = _enum(ModulusKind, raw.get("kind"), f"{context}.modulus.kind")
        if kind is ModulusKind.TABULATED:
            raise ConfigError(f"{context}.modulus: tabulated moduli are estimated, not configured")
        modulus = ModulusConfig(
            kind,
            _number(raw, "constant", f"{context}.modulus"),
            _number(raw, "exponent", f"{context}.modulus", default=1.0),
        )
        modulus.build()
    return CoefficientConfig(
        expression=expression,
        file=str(data["file"]) if "file" in data else None,
        w1p_bound=_positive(data, "w1p_bound", context) if "w1p_bound" in data else None,
        modulus=modulus,
    )


@dataclass(frozen=True)
class ForwardParameters:
    coefficient: str
    dirichlet: str | None = None
    neumann: str | None = None

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"coefficient": self.coefficient}
        if self.dirichlet is not None:
            data["dirichlet"] = self.dirichlet
        if self.neumann is not None:
            data["neumann"] = self.neumann
        return data


@dataclass(frozen=True)
class MapParameters:
    coefficients: tuple[str, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"coefficients": list(self.coefficients)}


@dataclass(frozen=True)
class SingularParameters:
    coefficient: str
    x0: tuple[float, float]
    tau: float
    kind: SingularKind = SingularKind.GREEN
    degree: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "coefficient": self.coefficient,
            "x0": list(self.x0),
            "tau": self.tau,
            "kind": self.kind.value,
            "degree": self.degree,
        }


@dataclass(frozen=True)
class RecoveryParameters:
    pair: tuple[str, str]
    x0: tuple[float, float]
    taus: tuple[float, ...]
    r0: float
    map_kind: OperatorKind = OperatorKind.DN
    extrapolation: ExtrapolationVariable = ExtrapolationVariable.INVERSE_LOG_TAU
    epsilons: tuple[float, ...] = ()
    target: float | None = None

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "pair": list(self.pair),
            "x0": list(self.x0),
            "taus": list(self.taus),
            "r0": self.r0,
            "map": self.map_kind.value,
            "extrapolation": self.extrapolation.value,
            "epsilons": list(self.epsilons),
        }
        if self.target is not None:
            data["target"] = self.target
        return data


@dataclass(frozen=True)
class EscalationParameters:
    base: tuple[str, str]
    ks: tuple[float, ...]
    amplitude: float


@dataclass(frozen=True)
class RandomPairParameters:
    count: int
    x0: tuple[float, float]


@dataclass(frozen=True)
class SweepParameters:
    pairs: tuple[tuple[str, str], ...] = ()
    map_kind: OperatorKind = OperatorKind.DN
    escalation: EscalationParameters | None = None
    random: RandomPairParameters | None = None

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "pairs": [list(pair) for pair in self.pairs],
            "map": self.map_kind.value,
        }
        if self.escalation is not None:
            data["escalation"] = {
                "base": list(self.escalation.base),
                "ks": list(self.escalation.ks),
                "amplitude": self.escalation.amplitude,
            }
        if self.random is not None:
            data["random"] = {"count": self.random.count, "x0": list(self.random.x0)}
        return data


@dataclass(frozen=True)
class ExperimentConfig:
    command: Command
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    coefficients: dict[str, CoefficientConfig] = field(default_factory=dict)
    seed: int = 0
    threads: int = 1
    output: str = "results"
    forward: ForwardParameters | None = None
    maps: MapParameters | None = None
    singular: SingularParameters | None = None
    recovery: RecoveryParameters | None = None
    sweep: SweepParameters | None = None
    suites: tuple[str, ...] = ()

    def coefficient(self, tag: str, mesh: MeshDomain | None = None) -> ScalarCoefficient:
        if tag not in self.coefficients:
            raise ConfigError(f"unknown coefficient tag {tag!r}")
        return self.coefficients[tag].build(tag, self.model.lambda_, mesh)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "command": self.command.value,
            "seed": self.seed,
            "threads": self.threads,
            "output": self.output,
            "geometry": self.geometry.to_dict(),
            "model": self.model.to_dict(),
            "coefficients": {
                tag: coeff.to_dict() for tag, coeff in sorted(self.coefficients.items())
            },
        }
        for name in ("forward", "maps", "singular", "recovery", "sweep"):
            section = getattr(self, name)
            if section is not None:
                data[name] = section.to_dict()
        if self.command is Command.VERIFY or self.suites:
            data["verify"] = {"suites": list(self.suites)}
        return data


def _parse_forward(data: Any) -> ForwardParameters:
    data = require_mapping(data, "forward")
    reject_unknown_fields(data, FORWARD_FIELDS, "forward")
    if "coefficient" not in data:
        raise ConfigError("forward must have a 'coefficient' field")
    if ("dirichlet" in data) == ("neumann" in data):
        raise ConfigError("forward needs exactly one of dirichlet or neumann")
    for key in ("dirichlet", "neumann"):
        if key in data:
            expression_coefficient(str(data[key]), lambda_=1.0)
    return ForwardParameters(
        coefficient=str(data["coefficient"]),
        dirichlet=str(data["dirichlet"]) if "dirichlet" in data else None,
        neumann=str(data["neumann"]) if "neumann" in data else None,
    )


def _parse_maps(data: Any) -> MapParameters:
    data = require_mapping(data, "maps")
    reject_unknown_fields(data, MAPS_FIELDS, "maps")
    tags = data.get("coefficients")
    if not isinstance(tags, list) or not tags:
        raise ConfigError("maps.coefficients must be a non-empty list of tags")
    return MapParameters(tuple(str(tag) for tag in tags))


def _parse_singular(data: Any, geometry: GeometryConfig) -> SingularParameters:
    data = require_mapping(data, "singular")
    reject_unknown_fields(data, SINGULAR_FIELDS, "singular")
    if "coefficient" not in data or "x0" not in data:
        raise ConfigError("singular must have 'coefficient' and 'x0' fields")
    tau = _positive(data, "tau", "singular")
    tau0 = geometry.rho / 8.0
    if tau > tau0:
        raise ConfigError(f"singular.tau={tau} exceeds tau0={tau0:.6g}")
    degree = _integer(data, "degree", "singular", default=0, minimum=0)
    if degree > 1:
        raise ConfigError(f"singular.degree must be 0 or 1, got {degree}")
    return SingularParameters(
        coefficient=str(data["coefficient"]),
        x0=_point(data["x0"], "singular.x0"),
        tau=tau,
        kind=_enum(SingularKind, data.get("kind", "green"), "singular.kind"),
        degree=degree,
    )


def _parse_recovery(data: Any, geometry: GeometryConfig) -> RecoveryParameters:
    data = require_mapping(data, "recovery")
    reject_unknown_fields(data, RECOVERY_FIELDS, "recovery")
    for required in ("pair", "x0", "taus", "r0"):
        if required not in data:
            raise ConfigError(f"recovery must have a '{required}' field")
    taus = _number_list(data["taus"], "recovery.taus")
    r0 = _positive(data, "r0", "recovery")
    if any(t <= 0 for t in taus):
        raise ConfigError(f"recovery.taus must be positive: {list(taus)}")
    if any(later >= earlier for earlier, later in zip(taus, taus[1:])):
        raise ConfigError(f"recovery.taus must be strictly decreasing: {list(taus)}")
    limit = min(geometry.rho / 8.0, r0 / 2.0)
    if taus[0] > limit * (1.0 + 1e-12):
        raise ConfigError(f"tau={taus[0]} exceeds min(rho/8, r0/2)={limit:.6g}")
    epsilons = _number_list(data.get("epsilons", []), "recovery.epsilons", allow_empty=True)
    for epsilon in epsilons:
        if not 0 < epsilon <= geometry.rho / 2.0:
            raise ConfigError(f"epsilon={epsilon} must lie in (0, rho/2={geometry.rho / 2.0}]")
    return RecoveryParameters(
        pair=_tag_pair(data["pair"], "recovery.pair"),
        x0=_point(data["x0"], "recovery.x0"),
        taus=taus,
        r0=r0,
        map_kind=_enum(OperatorKind, data.get("map", OperatorKind.DN.value), "recovery.map"),
        extrapolation=_enum(
            ExtrapolationVariable,
            data.get("extrapolation", ExtrapolationVariable.INVERSE_LOG_TAU.value),
            "recovery.extrapolation",
        ),
        epsilons=epsilons,
        target=_number(data, "target", "recovery") if "target" in data else None,
    )


def _parse_sweep(data: Any) -> SweepParameters:
    data = require_mapping(data, "sweep")
    reject_unknown_fields(data, SWEEP_FIELDS, "sweep")
    raw_pairs = data.get("pairs", [])
    if not isinstance(raw_pairs, list):
        raise ConfigError("sweep.pairs must be a list of tag pairs")
    pairs = tuple(
        _tag_pair(pair, f"sweep.pairs #{index + 1}") for index, pair in enumerate(raw_pairs)
    )
    escalation = None
    if "escalation" in data:
        raw = require_mapping(data["escalation"], "sweep.escalation")
        reject_unknown_fields(raw, ESCALATION_FIELDS, "sweep.escalation")
        if "base" not in raw or "ks" not in raw:
            raise ConfigError("sweep.escalation must have 'base' and 'ks' fields")
        escalation = EscalationParameters(
            base=_tag_pair(raw["base"], "sweep.escalation.base"),
            ks=_number_list(raw["ks"], "sweep.escalation.ks"),
            amplitude=_positive(raw, "amplitude", "sweep.escalation", default=0.05),
        )
    random = None
    if "random" in data:
        raw = require_mapping(data["random"], "sweep.random")
        reject_unknown_fields(raw, RANDOM_FIELDS, "sweep.random")
        if "x0" not in raw:
            raise ConfigError("sweep.random must have an 'x0' field")
        random = RandomPairParameters(
            count=_integer(raw, "count", "sweep.random", default=5, minimum=1),
            x0=_point(raw["x0"], "sweep.random.x0"),
        )
    if not pairs and escalation is None and random is None:
        raise ConfigError("sweep needs pairs, escalation or random")
    map_kind = _enum(OperatorKind, data.get("map", OperatorKind.DN.value), "sweep.map")
    return SweepParameters(pairs, map_kind, escalation, random)


def _referenced_tags(config: ExperimentConfig) -> list[str]:
    tags: list[str] = []
    if config.forward is not None:
        tags.append(config.forward.coefficient)
    if config.maps is not None:
        tags.extend(config.maps.coefficients)
    if config.singular is not None:
        tags.append(config.singular.coefficient)
    if config.recovery is not None:
        tags.extend(config.recovery.pair)
    if config.sweep is not None:
        tags.extend(tag for pair in config.sweep.pairs for tag in pair)
        if config.sweep.escalation is not None:
            tags.extend(config.sweep.escalation.base)
    return tags


def validate_experiment(data: Any) -> ExperimentConfig:
    """Validate a parsed YAML document into an :class:`ExperimentConfig`.

    Raises:
        ConfigError: for unknown fields, unresolved tags and parameters outside
            the preconditions of the modules they feed
    """
    data = require_mapping(data, "Experiment config")
    reject_unknown_fields(data, EXPERIMENT_FIELDS, "experiment config")
    if "command" not in data:
        raise ConfigError("Experiment config must have a 'command' field")
    command = _enum(Command, data["command"], "command")
    geometry = _parse_geometry(data.get("geometry", {}))
    model = _parse_model(data.get("model", {}))
    raw_coefficients = require_mapping(data.get("coefficients", {}), "coefficients")
    coefficients = {
        str(tag): _parse_coefficient(str(tag), value) for tag, value in raw_coefficients.items()
    }

    section = _SECTION_FOR_COMMAND.get(command)
    if section is not None and section not in data:
        raise ConfigError(f"command {command.value} needs a '{section}' section")

    suites: tuple[str, ...] = ()
    if "verify" in data:
        raw = require_mapping(data["verify"], "verify")
        reject_unknown_fields(raw, VERIFY_FIELDS, "verify")
        listed = raw.get("suites", [])
        if not isinstance(listed, list):
            raise ConfigError("verify.suites must be a list of suite paths")
        suites = tuple(str(item) for item in listed)

    output = data.get("output", "results")
    if not isinstance(output, str) or not output:
        raise ConfigError(f"output must be a non-empty path, got {output!r}")

    config = ExperimentConfig(
        command=command,
        geometry=geometry,
        model=model,
        coefficients=coefficients,
        seed=_integer(data, "seed", "experiment config", default=0, minimum=0),
        threads=_integer(data, "threads", "experiment config", default=1, minimum=1),
        output=output,
        forward=_parse_forward(data["forward"]) if "forward" in data else None,
        maps=_parse_maps(data["maps"]) if "maps" in data else None,
        singular=_parse_singular(data["singular"], geometry) if "singular" in data else None,
        recovery=_parse_recovery(data["recovery"], geometry) if "recovery" in data else None,
        sweep=_parse_sweep(data["sweep"]) if "sweep" in data else None,
        suites=suites,
    )
    missing = sorted(set(_referenced_tags(config)) - set(coefficients))
    if missing:
        raise ConfigError(f"unresolved coefficient tag(s): {', '.join(missing)}")
    return config


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if data is None:
        raise ConfigError(f"config {path} is empty")
    return validate_experiment(data)


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=True, default_flow_style=False)


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(dump_config(config).encode("utf-8")).hexdigest()


def apply_overrides(
    config: ExperimentConfig,
    *,
    h_mesh: float | None = None,
    threads: int | None = None,
    output: str | None = None,
) -> ExperimentConfig:
    """Command-line overrides, revalidated through the normal parser."""
    data = config.to_dict()
    if h_mesh is not None:
        data["geometry"]["h_mesh"] = h_mesh
    if threads is not None:
        data["threads"] = threads
    if output is not None:
        data["output"] = output
    return validate_experiment(data)


def deterministic() -> bool:
    return os.environ.get(DETERMINISTIC_ENV, "1") != "0"


def output_header(config: ExperimentConfig, mesh: MeshDomain | None = None) -> dict[str, str]:
    """``# key=value`` header lines for every artifact the CLI writes."""
    header = {"command": config.command.value, "config_hash": config_hash(config)}
    if mesh is not None:
        header["mesh_hash"] = mesh.mesh_hash()
    if not deterministic():
        header["generated"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return header
