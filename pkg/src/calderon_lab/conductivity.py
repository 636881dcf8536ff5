"""Structured conductivities σ(x) = A(x, a(x)) and scalar coefficient fields.

Two families of class-𝓗 matrices are supported:

- ``scalar_multiple``: A(x, t) = t·M(x)
- ``affine``: A(x, t) = M0(x) + t·M1(x)

A :class:`ScalarCoefficient` is a callable on (N, 2) point arrays carrying its
bounds, the W^{1,p} bound E and a modulus of continuity ω. Coefficients can
be extended across Γ to an augmented domain and mollified.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.spatial.distance import pdist
from scipy.stats import qmc

from .errors import ConfigError, EpsilonTooLarge, OutOfDomain
from .expressions import Expression, parse_expression
from .geometry import AugmentedDomain, MeshDomain

logger = logging.getLogger(__name__)

# Degree-4 symmetric rule on the reference triangle (barycentric points, weights sum to 1).
_A1, _B1, _W1 = 0.445948490915965, 0.108103018168070, 0.223381589678011
_A2, _B2, _W2 = 0.091576213509771, 0.816847572980459, 0.109951743655322
TRIANGLE_RULE_POINTS = np.array(
    [
        [_A1, _A1, _B1],
        [_A1, _B1, _A1],
        [_B1, _A1, _A1],
        [_A2, _A2, _B2],
        [_A2, _B2, _A2],
        [_B2, _A2, _A2],
    ]
)
TRIANGLE_RULE_WEIGHTS = np.array([_W1, _W1, _W1, _W2, _W2, _W2])


def triangle_quadrature_points(mesh: MeshDomain, triangles: np.ndarray | None = None) -> np.ndarray:
    """(T, 6, 2) physical quadrature points of the degree-4 rule."""
    tri = mesh.triangles if triangles is None else mesh.triangles[triangles]
    corners = mesh.vertices[tri]
    return np.einsum("qi,tij->tqj", TRIANGLE_RULE_POINTS, corners)


class Family(str, Enum):
    SCALAR_MULTIPLE = "scalar_multiple"
    AFFINE = "affine"


@dataclass(frozen=True)
class MatrixField:
    """Symmetric 2×2 field given by expressions for m11, m12, m22."""

    m11: Expression
    m12: Expression
    m22: Expression

    @classmethod
    def constant(cls, matrix: np.ndarray | list[list[float]]) -> MatrixField:
        m = np.asarray(matrix, dtype=float)
        if m.shape != (2, 2) or abs(m[0, 1] - m[1, 0]) > 1e-14 * max(1.0, abs(m).max()):
            raise ConfigError(f"matrix field must be a symmetric 2x2 matrix, got {m.tolist()}")
        return cls(
            parse_expression(float(m[0, 0])),
            parse_expression(float(m[0, 1])),
            parse_expression(float(m[1, 1])),
        )

    @classmethod
    def identity(cls) -> MatrixField:
        return cls.constant(np.eye(2))

    @classmethod
    def from_spec(cls, spec: object) -> MatrixField:
        """Build from ``"identity"`` or a nested list [[m11, m12], [m12, m22]]."""
        if spec == "identity":
            return cls.identity()
        if (
            isinstance(spec, list)
            and len(spec) == 2
            and all(isinstance(row, list) and len(row) == 2 for row in spec)
        ):
            if str(spec[0][1]) != str(spec[1][0]):
                raise ConfigError(f"matrix field is not symmetric: {spec}")
            return cls(
                parse_expression(spec[0][0]),
                parse_expression(spec[0][1]),
                parse_expression(spec[1][1]),
            )
        raise ConfigError(f"matrix field must be 'identity' or a 2x2 list, got {spec!r}")

    def to_spec(self) -> list[list[str]]:
        return [[self.m11.source, self.m12.source], [self.m12.source, self.m22.source]]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        out = np.empty((points.shape[0], 2, 2))
        out[:, 0, 0] = self.m11(points)
        out[:, 0, 1] = out[:, 1, 0] = self.m12(points)
        out[:, 1, 1] = self.m22(points)
        return out


@dataclass(frozen=True)
class ConductivityModel:
    """A(x, t) with the class-𝓗 constants (λ, 𝓔, 𝓕, p)."""

    family: Family
    lambda_: float
    calE: float
    calF: float
    p: float = 4.0
    M: MatrixField | None = None
    M0: MatrixField | None = None
    M1: MatrixField | None = None
    n: int = 2

    def __post_init__(self) -> None:
        if self.lambda_ < 1.0:
            raise ConfigError(f"lambda must be >= 1, got {self.lambda_}")
        if not self.calF > 0:
            raise ConfigError(f"monotonicity constant F must be positive, got {self.calF}")
        if not self.p > self.n:
            raise ConfigError(f"Sobolev exponent p must exceed n={self.n}, got {self.p}")
        if self.family is Family.SCALAR_MULTIPLE and self.M is None:
            raise ConfigError("scalar_multiple family needs the matrix field M")
        if self.family is Family.AFFINE and (self.M0 is None or self.M1 is None):
            raise ConfigError("affine family needs the matrix fields M0 and M1")

    @classmethod
    def isotropic(
        cls, lambda_: float = 2.0, calF: float = 1.0, p: float = 4.0
    ) -> ConductivityModel:
        return cls(
            Family.SCALAR_MULTIPLE,
            lambda_=lambda_,
            calE=lambda_,
            calF=calF,
            p=p,
            M=MatrixField.identity(),
        )

    @property
    def beta(self) -> float:
        return 1.0 - self.n / self.p

    @property
    def alpha(self) -> float:
        return 0.5 * self.beta

    def A(self, points: np.ndarray, t: np.ndarray | float) -> np.ndarray:
        points = np.atleast_2d(points)
        t = np.broadcast_to(np.asarray(t, dtype=float), (points.shape[0],))
        if self.family is Family.SCALAR_MULTIPLE:
            assert self.M is not None
            return t[:, None, None] * self.M(points)
        assert self.M0 is not None and self.M1 is not None
        return self.M0(points) + t[:, None, None] * self.M1(points)

    def d_t(self, points: np.ndarray) -> np.ndarray:
        """D_tA(x, t), independent of t for both families."""
        if self.family is Family.SCALAR_MULTIPLE:
            assert self.M is not None
            return self.M(points)
        assert self.M1 is not None
        return self.M1(points)


class ModulusKind(str, Enum):
    LIPSCHITZ = "lipschitz"
    HOLDER = "holder"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class Modulus:
    """Nondecreasing ω with ω(0+) = 0."""

    kind: ModulusKind
    constant: float = 0.0
    exponent: float = 1.0
    table: tuple[tuple[float, float], ...] = ()
    certified: bool = True

    @classmethod
    def lipschitz(cls, constant: float) -> Modulus:
        return cls(ModulusKind.LIPSCHITZ, constant=float(constant))

    @classmethod
    def holder(cls, constant: float, exponent: float) -> Modulus:
        if not 0.0 < exponent <= 1.0:
            raise ConfigError(f"Holder exponent must lie in (0, 1], got {exponent}")
        return cls(ModulusKind.HOLDER, constant=float(constant), exponent=float(exponent))

    def __call__(self, delta: float) -> float:
        if delta <= 0:
            return 0.0
        if self.kind is ModulusKind.LIPSCHITZ:
            return self.constant * delta
        if self.kind is ModulusKind.HOLDER:
            return self.constant * delta**self.exponent
        radii = np.array([0.0] + [r for r, _ in self.table])
        values = np.maximum.accumulate(np.array([0.0] + [w for _, w in self.table]))
        return float(np.interp(delta, radii, values))


class CoefficientKind(str, Enum):
    EXPRESSION = "expression"
    NODAL = "nodal"
    EXTENDED = "extended"
    MOLLIFIED = "mollified"
    SUM = "sum"


@dataclass(frozen=True, eq=False)
class ScalarCoefficient:
    """A scalar field a(x) with bounds [λ⁻¹, λ], W^{1,p} bound E and modulus ω."""

    kind: CoefficientKind
    evaluator: Callable[[np.ndarray], np.ndarray]
    bounds: tuple[float, float]
    w1p_bound: float | None = None
    modulus: Modulus | None = None
    tag: str = ""
    expression: Expression | None = None
    domain: MeshDomain | None = None  # mesh the field is tied to, if any
    nodal_values: np.ndarray | None = field(default=None, repr=False)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        values = self.evaluator(points)
        if np.isnan(values).any():
            bad = points[np.flatnonzero(np.isnan(values))[0]]
            name = self.tag or self.kind.value
            raise OutOfDomain(f"coefficient {name} undefined at {tuple(bad)}")
        return values

    def at_nodes(self, mesh: MeshDomain) -> np.ndarray:
        if self.nodal_values is not None and self.domain is mesh:
            return self.nodal_values
        return self(mesh.vertices)

    def plus(
        self, other: ScalarCoefficient | Callable[[np.ndarray], np.ndarray], tag: str = ""
    ) -> ScalarCoefficient:
        """Pointwise sum; bounds are rechecked by :func:`check_bounds`, not here."""
        other_eval = other if not isinstance(other, ScalarCoefficient) else other.__call__
        own = self.__call__
        return replace(
            self,
            kind=CoefficientKind.SUM,
            evaluator=lambda x: own(x) + other_eval(x),
            tag=tag or self.tag,
            expression=None,
            nodal_values=None,
            modulus=None,
        )


def expression_coefficient(
    source: str | float,
    *,
    lambda_: float,
    tag: str = "",
    w1p_bound: float | None = None,
    modulus: Modulus | None = None,
) -> ScalarCoefficient:
    expression = parse_expression(source)
    return ScalarCoefficient(
        kind=CoefficientKind.EXPRESSION,
        evaluator=expression,
        bounds=(1.0 / lambda_, lambda_),
        w1p_bound=w1p_bound,
        modulus=modulus,
        tag=tag,
        expression=expression,
    )


def constant_coefficient(value: float, *, lambda_: float, tag: str = "") -> ScalarCoefficient:
    return expression_coefficient(
        float(value), lambda_=lambda_, tag=tag, modulus=Modulus.lipschitz(0.0)
    )


def nodal_coefficient(
    mesh: MeshDomain,
    values: np.ndarray,
    *,
    lambda_: float,
    tag: str = "",
    w1p_bound: float | None = None,
    modulus: Modulus | None = None,
) -> ScalarCoefficient:
    values = np.asarray(values, dtype=float)
    if values.shape != (mesh.vertex_count,):
        raise ConfigError(
            f"nodal coefficient needs {mesh.vertex_count} values, got {values.shape[0]}"
        )
    return ScalarCoefficient(
        kind=CoefficientKind.NODAL,
        evaluator=lambda x: mesh.interpolate(values, x),
        bounds=(1.0 / lambda_, lambda_),
        w1p_bound=w1p_bound,
        modulus=modulus,
        tag=tag,
        domain=mesh,
        nodal_values=values,
    )


def check_bounds(coeff: ScalarCoefficient, mesh: MeshDomain) -> tuple[float, float]:
    """Min and max of the coefficient on mesh nodes; raises if outside its bounds."""
    values = coeff.at_nodes(mesh)
    low, high = float(values.min()), float(values.max())
    lo, hi = coeff.bounds
    if low < lo * (1.0 - 1e-12) or high > hi * (1.0 + 1e-12):
        raise ConfigError(
            f"coefficient {coeff.tag or coeff.kind.value} leaves [{lo:.6g}, {hi:.6g}]: "
            f"range [{low:.6g}, {high:.6g}]"
        )
    return low, high


def eval_sigma(
    model: ConductivityModel, coeff: ScalarCoefficient, points: np.ndarray
) -> np.ndarray:
    """σ(x) = A(x, a(x)) as an (N, 2, 2) array."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if coeff.domain is not None and coeff.kind is not CoefficientKind.NODAL:
        outside = ~coeff.domain.contains(points)
        if outside.any():
            bad = points[np.flatnonzero(outside)[0]]
            raise OutOfDomain(f"point {tuple(bad)} lies outside the coefficient's domain")
    return model.A(points, coeff(points))


@dataclass(frozen=True, eq=False)
class Conductivity:
    """σ = A(·, a(·)) bound to a model and a coefficient."""

    model: ConductivityModel
    coeff: ScalarCoefficient

    @property
    def tag(self) -> str:
        return self.coeff.tag

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return eval_sigma(self.model, self.coeff, points)

    def at(self, point: np.ndarray | tuple[float, float]) -> np.ndarray:
        return self(np.asarray(point, dtype=float).reshape(1, 2))[0]

    def element_average(self, mesh: MeshDomain) -> np.ndarray:
        """(T, 2, 2) triangle means of σ by the degree-4 rule."""
        points = triangle_quadrature_points(mesh).reshape(-1, 2)
        sigma = self.model.A(points, self.coeff(points)).reshape(-1, 6, 2, 2)
        return np.einsum("q,tqij->tij", TRIANGLE_RULE_WEIGHTS, sigma)


@dataclass(frozen=True)
class ClassHReport:
    ellipticity_margin: float
    monotonicity_margin: float
    sample_count: int

    @property
    def certified(self) -> bool:
        return self.ellipticity_margin >= 0 and self.monotonicity_margin >= 0


def verify_class_H(
    model: ConductivityModel,
    sample_count: int,
    *,
    box: tuple[tuple[float, float], tuple[float, float]] = ((-1.0, 1.0), (-1.0, 1.0)),
    t_range: tuple[float, float] | None = None,
    seed: int = 0,
) -> ClassHReport:
    """Sampled margins of the ellipticity and monotonicity conditions.

    Minimization over unit ξ is exact: it is the extreme eigenvalue of the
    symmetric matrices at each sampled (x, t).
    """
    if sample_count < 100:
        raise ConfigError(f"sample_count must be >= 100, got {sample_count}")
    lam = model.lambda_
    t_low, t_high = t_range if t_range is not None else (1.0 / lam, lam)
    sampler = qmc.Halton(d=3, scramble=True, seed=seed)
    unit = sampler.random(sample_count)
    lower = [box[0][0], box[1][0], t_low]
    upper = [box[0][1], box[1][1], t_high]
    sample = qmc.scale(unit, lower, upper) if t_high > t_low else np.column_stack(
        [qmc.scale(unit[:, :2], lower[:2], upper[:2]), np.full(sample_count, t_low)]
    )
    points, t = sample[:, :2], sample[:, 2]
    eigen = np.linalg.eigvalsh(model.A(points, t))
    ellipticity = float(np.minimum(eigen[:, 0] - 1.0 / lam, lam - eigen[:, 1]).min())
    monotonicity = float((np.linalg.eigvalsh(model.d_t(points))[:, 0] - model.calF).min())
    return ClassHReport(ellipticity, monotonicity, sample_count)


@dataclass(frozen=True)
class InverseMonotonicity:
    smallest_eigenvalue: float
    bound: float

    @property
    def margin(self) -> float:
        return self.smallest_eigenvalue - self.bound


def inverse_monotonicity_margin(
    model: ConductivityModel, x: np.ndarray | tuple[float, float], t_low: float, t_high: float
) -> InverseMonotonicity:
    """Min eigenvalue of A(x,t_low)⁻¹ − A(x,t_high)⁻¹ versus 𝓕λ⁻²(t_high − t_low)."""
    point = np.asarray(x, dtype=float).reshape(1, 2)
    low = np.linalg.inv(model.A(point, t_low)[0])
    high = np.linalg.inv(model.A(point, t_high)[0])
    smallest = float(np.linalg.eigvalsh(low - high)[0])
    bound = model.calF * model.lambda_**-2 * (t_high - t_low)
    return InverseMonotonicity(smallest, bound)


def _project_to_boundary(mesh: MeshDomain, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest boundary edge and its parameter t ∈ [0, 1] for each point."""
    a = mesh.vertices[mesh.boundary_edges[:, 0]]
    b = mesh.vertices[mesh.boundary_edges[:, 1]]
    d = b - a
    dd = np.einsum("ij,ij->i", d, d)
    edges = np.empty(points.shape[0], dtype=int)
    params = np.empty(points.shape[0])
    for start in range(0, points.shape[0], 2048):
        chunk = points[start : start + 2048]
        rel = chunk[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("nkj,kj->nk", rel, d) / dd, 0.0, 1.0)
        gap = rel - t[..., None] * d[None, :, :]
        best = np.einsum("nkj,nkj->nk", gap, gap).argmin(axis=1)
        edges[start : start + 2048] = best
        params[start : start + 2048] = t[np.arange(chunk.shape[0]), best]
    return edges, params


def extend_coefficient(coeff: ScalarCoefficient, aug: AugmentedDomain) -> ScalarCoefficient:
    """Extend a coefficient on Ω to Ω_ρ.

    Closed-form fields keep their formula, clipped to the bounds. Other
    fields take the value at the nearest point of ∂Ω outside Ω.
    """
    lo, hi = coeff.bounds
    omega = aug.original
    if coeff.kind is CoefficientKind.EXPRESSION:
        own = coeff.evaluator
        return replace(
            coeff,
            kind=CoefficientKind.EXTENDED,
            evaluator=lambda x: np.clip(own(x), lo, hi),
            domain=aug.mesh,
        )
    inner = coeff.__call__
    if coeff.nodal_values is not None and coeff.domain is omega:
        nodal = coeff.nodal_values

        def boundary_value(points: np.ndarray) -> np.ndarray:
            edges, t = _project_to_boundary(omega, points)
            ends = omega.boundary_edges[edges]
            return (1.0 - t) * nodal[ends[:, 0]] + t * nodal[ends[:, 1]]
    else:

        def boundary_value(points: np.ndarray) -> np.ndarray:
            edges, t = _project_to_boundary(omega, points)
            ends = omega.boundary_edges[edges]
            start, end = omega.vertices[ends[:, 0]], omega.vertices[ends[:, 1]]
            projected = (1.0 - t)[:, None] * start + t[:, None] * end
            return inner(projected)

    def evaluate(points: np.ndarray) -> np.ndarray:
        out = np.empty(points.shape[0])
        inside = omega.contains(points)
        if inside.any():
            out[inside] = inner(points[inside])
        if (~inside).any():
            out[~inside] = boundary_value(points[~inside])
        return np.clip(out, lo, hi)

    modulus = coeff.modulus
    if modulus is not None and modulus.kind is not ModulusKind.TABULATED:
        modulus = replace(modulus, constant=2.0 * modulus.constant)
    return replace(
        coeff,
        kind=CoefficientKind.EXTENDED,
        evaluator=evaluate,
        domain=aug.mesh,
        nodal_values=None,
        modulus=modulus,
    )


def _bump(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def mollifier_mass_constant() -> float:
    """∫_{B_1} exp(−1/(1−|y|²)) dy by adaptive quadrature."""
    value, _ = integrate.quad(lambda s: 2.0 * math.pi * s * math.exp(-1.0 / (1.0 - s * s)), 0, 1)
    return value


@dataclass(frozen=True)
class MollifierRule:
    """Polar quadrature of the normalized bump kernel on B_ε."""

    epsilon: float
    offsets: np.ndarray  # (K, 2)
    weights: np.ndarray  # (K,), summing to 1
    raw_mass: float  # discrete mass before renormalization


def mollifier_rule(epsilon: float, radial: int = 12, angular: int = 24) -> MollifierRule:
    if angular % 2:
        raise ConfigError("the angular mollifier resolution must be even")
    nodes, node_weights = np.polynomial.legendre.leggauss(radial)
    s = 0.5 * (nodes + 1.0)
    ws = 0.5 * node_weights
    theta = 2.0 * math.pi * np.arange(angular) / angular
    mass = mollifier_mass_constant()
    radial_weight = _bump(s) * s * ws * (2.0 * math.pi / angular) / mass
    offsets = epsilon * np.stack(
        [np.outer(s, np.cos(theta)).ravel(), np.outer(s, np.sin(theta)).ravel()], axis=1
    )
    weights = np.repeat(radial_weight, angular)
    raw = float(weights.sum())
    return MollifierRule(epsilon, offsets, weights / raw, raw)


def mollify(
    coeff: ScalarCoefficient, epsilon: float, *, rho: float, radial: int = 12, angular: int = 24
) -> ScalarCoefficient:
    """a_ε = a * η_ε with the normalized bump kernel supported in B_ε."""
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    if epsilon > 0.5 * rho:
        raise EpsilonTooLarge(f"epsilon={epsilon} exceeds rho/2={0.5 * rho}")
    rule = mollifier_rule(epsilon, radial, angular)
    logger.debug(
        "mollifier eps=%g raw mass=%.15f nodes=%d", epsilon, rule.raw_mass, rule.weights.size
    )
    source = coeff.__call__

    def evaluate(points: np.ndarray) -> np.ndarray:
        shifted = (points[:, None, :] - rule.offsets[None, :, :]).reshape(-1, 2)
        values = source(shifted).reshape(points.shape[0], -1)
        return values @ rule.weights

    return replace(
        coeff,
        kind=CoefficientKind.MOLLIFIED,
        evaluator=evaluate,
        expression=None,
        nodal_values=None,
        tag=f"{coeff.tag}~{epsilon:g}" if coeff.tag else "",
    )


def estimate_modulus(
    coeff: ScalarCoefficient, points: np.ndarray, *, bins: int = 32, max_points: int = 2000
) -> Modulus:
    """Tabulated, non-certified ω from pairwise quotients at sample points."""
    points = np.atleast_2d(points)
    if points.shape[0] > max_points:
        stride = math.ceil(points.shape[0] / max_points)
        points = points[::stride]
    values = coeff(points)
    distances = pdist(points)
    jumps = pdist(values[:, None])
    order = np.argsort(distances)
    distances, envelope = distances[order], np.maximum.accumulate(jumps[order])
    radii = np.geomspace(max(distances[0], 1e-12), distances[-1], bins)
    table = tuple(
        (float(r), float(envelope[max(np.searchsorted(distances, r, side="right") - 1, 0)]))
        for r in radii
    )
    return Modulus(ModulusKind.TABULATED, table=table, certified=False)


def w1p_norm(coeff: ScalarCoefficient, mesh: MeshDomain, p: float) -> float:
    """‖a‖_{W^{1,p}(Ω)} of the P1 interpolant of a on the mesh."""
    values = coeff.at_nodes(mesh)
    local = values[mesh.triangles]
    at_points = np.einsum("qi,ti->tq", TRIANGLE_RULE_POINTS, local)
    l_p = np.sum(mesh.areas * (np.abs(at_points) ** p @ TRIANGLE_RULE_WEIGHTS))
    grads = np.einsum("tij,ti->tj", mesh.basis_gradients, local)
    w_p = np.sum(mesh.areas * np.linalg.norm(grads, axis=1) ** p)
    return float((l_p + w_p) ** (1.0 / p))


def dump_coefficient(coeff: ScalarCoefficient, mesh: MeshDomain | None = None) -> str:
    if coeff.expression is not None and coeff.kind is CoefficientKind.EXPRESSION:
        return f"coef expr {coeff.expression.source}\n"
    if mesh is None:
        raise ConfigError("a mesh is required to serialize a non-expression coefficient")
    values = coeff.at_nodes(mesh)
    return f"coef nodal {values.size}\n" + "".join(f"{v:.17g}\n" for v in values)


def load_coefficient(
    text: str, *, lambda_: float, mesh: MeshDomain | None = None, tag: str = ""
) -> ScalarCoefficient:
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines or not lines[0].startswith("coef "):
        raise ConfigError("coefficient text must start with a 'coef' header")
    parts = lines[0].split(maxsplit=2)
    if len(parts) == 3 and parts[1] == "expr":
        return expression_coefficient(parts[2], lambda_=lambda_, tag=tag)
    if len(parts) == 3 and parts[1] == "nodal":
        if mesh is None:
            raise ConfigError("a mesh is required to load a nodal coefficient")
        count = int(parts[2])
        values = np.array([float(v) for v in lines[1:]])
        if values.size != count:
            raise ConfigError(f"nodal coefficient declares {count} values, found {values.size}")
        return nodal_coefficient(mesh, values, lambda_=lambda_, tag=tag)
    raise ConfigError(f"malformed coefficient header: {lines[0]!r}")
