"""CLI entry point: run an experiment configuration or the acceptance checks."""

from __future__ import annotations

import argparse
import itertools
import logging
import sys
from pathlib import Path
from typing import TextIO

import numpy as np
import pytest

from . import fem, maps
from .config import (
    Command,
    ExperimentConfig,
    SingularKind,
    apply_overrides,
    load_config,
    output_header,
)
from .conductivity import Conductivity, ScalarCoefficient, extend_coefficient
from .errors import ConfigError, NumericFailure
from .expressions import parse_expression
from .geometry import (
    MeshDomain,
    RhoSets,
    augment_domain,
    compute_rho_sets,
    place_singularity,
)
from .maps import OperatorKind, SpaceKind
from .recovery import (
    RecoveryConfig,
    e_escalation_pairs,
    format_recovery_summary,
    mollified_recovery,
    random_continuous_pairs,
    recover_boundary_difference,
    stability_sweep,
    write_recovery_csv,
    write_stability_csv,
)
from .runner import CheckRunner, format_outcomes
from .singular import (
    build_dirichlet_singular,
    build_green,
    build_neumann_singular,
    leading_term,
    record_remainder_rate,
)

logger = logging.getLogger(__name__)


def main(args: list[str] | None = None) -> int:
    """Run one experiment command; returns 0, 1 (config error) or 2 (numeric failure)."""
    if args is None:
        args = sys.argv[1:]
    parsed = _parser().parse_args(args)
    if parsed.verbose:
        logging.basicConfig(level=logging.DEBUG if parsed.verbose > 1 else logging.INFO)
    command = Command(parsed.command)
    try:
        if command is Command.VERIFY:
            return _run_verify(parsed)
        if parsed.config is None:
            raise ConfigError(f"command {command.value} needs --config")
        config = load_config(parsed.config)
        if config.command is not command:
            raise ConfigError(
                f"config {parsed.config} is for command {config.command.value}, "
                f"not {command.value}"
            )
        config = apply_overrides(
            config, h_mesh=parsed.h_mesh, threads=parsed.threads, output=parsed.out
        )
        out = Path(config.output)
        out.mkdir(parents=True, exist_ok=True)
        _RUNNERS[command](config, out)
    except ConfigError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except NumericFailure as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="calderon-lab",
        description="Local boundary-map experiments for anisotropic conductivities.",
    )
    parser.add_argument("command", choices=[command.value for command in Command])
    parser.add_argument("--config", default=None, help="Experiment configuration (YAML)")
    parser.add_argument("--out", default=None, help="Output directory (overrides the config)")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads for solves")
    parser.add_argument("--h-mesh", type=float, default=None, help="Target mesh size override")
    parser.add_argument(
        "--suite",
        action="append",
        default=[],
        help="Check suite path under the bundled check root (verify only, repeatable)",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def _write_header(handle: TextIO, header: dict[str, str]) -> None:
    for key, value in header.items():
        handle.write(f"# {key}={value}\n")


def _sigma(config: ExperimentConfig, coeff: ScalarCoefficient) -> Conductivity:
    return Conductivity(config.model.build(), coeff)


def _run_forward(config: ExperimentConfig, out: Path) -> None:
    assert config.forward is not None
    mesh = config.geometry.build_mesh()
    params = config.forward
    sigma = _sigma(config, config.coefficient(params.coefficient, mesh))
    if params.dirichlet is not None:
        field = fem.solve_dirichlet(mesh, sigma, parse_expression(params.dirichlet))
        label = "dirichlet"
    else:
        assert params.neumann is not None
        field = fem.solve_neumann(mesh, sigma, parse_expression(params.neumann))
        label = "neumann"
    target = out / f"forward_{params.coefficient}_{label}.csv"
    with target.open("w", newline="") as handle:
        _write_header(handle, output_header(config, mesh))
        fem.write_field_csv(field, handle)
    print(f"L2 norm: {fem.l2_norm(field):.12g}")
    print(f"H1 norm: {fem.h1_norm(field):.12g}")
    print(f"energy: {fem.energy(field, sigma):.12g}")
    print(f"wrote {target}")


def _run_maps(config: ExperimentConfig, out: Path) -> None:
    assert config.maps is not None
    mesh = config.geometry.build_mesh()
    kind = OperatorKind.DN if config.command is Command.DN_MAP else OperatorKind.ND
    if kind is OperatorKind.DN:
        space = maps.build_trace_space(mesh, SpaceKind.H_HALF_CO)
        assemble = maps.assemble_local_dn
    else:
        space = maps.build_trace_space(mesh, SpaceKind.H_MINUS_HALF_ZERO)
        assemble = maps.assemble_local_nd
    gamma = config.geometry.to_dict()["gamma"]
    gamma_text = "full" if gamma.get("full") else f"{gamma['start']}:{gamma['end']}"
    operators = {}
    for tag in config.maps.coefficients:
        op = assemble(mesh, _sigma(config, config.coefficient(tag, mesh)), space)
        operators[tag] = op
        target = out / f"{kind.value.lower()}_{tag}.csv"
        with target.open("w", newline="") as handle:
            _write_header(handle, output_header(config, mesh))
            maps.write_operator_csv(op, handle, gamma_text)
        print(f"{tag}: dimension {space.dimension}, asymmetry {op.asymmetry:.3e}, wrote {target}")
    for first, second in itertools.combinations(sorted(operators), 2):
        norm = maps.op_norm(operators[first], operators[second])
        print(f"||{kind.value}_{first} - {kind.value}_{second}||_* = {norm:.12g}")


def _run_singular(config: ExperimentConfig, out: Path) -> None:
    assert config.singular is not None
    params = config.singular
    geometry = config.geometry
    mesh = geometry.build_mesh()
    rho_sets = compute_rho_sets(mesh, geometry.rho)
    aug = augment_domain(
        mesh, rho_sets, thickness=geometry.thickness, patch_fraction=geometry.patch_fraction
    )
    coeff = extend_coefficient(config.coefficient(params.coefficient, mesh), aug)
    sigma = _sigma(config, coeff)
    placement = place_singularity(mesh, params.x0, params.tau, rho_sets)
    if params.kind is SingularKind.GREEN:
        solution = build_green(aug, sigma, placement)
    elif params.kind is SingularKind.NEUMANN:
        solution = build_neumann_singular(aug, sigma, placement)
    else:
        z = np.asarray(placement.z_tau)
        term = leading_term(sigma.at(z), z, params.degree, r0=geometry.rho / 8.0)
        solution = build_dirichlet_singular(aug, sigma, term)
        record_remainder_rate(solution)
    field = fem.FemField(aug.mesh, solution.nodal_total(), fem.FieldKind.POTENTIAL)
    target = out / f"singular_{params.kind.value}_{params.coefficient}.csv"
    with target.open("w", newline="") as handle:
        _write_header(handle, output_header(config, aug.mesh))
        fem.write_field_csv(field, handle)
    print(f"z_tau: ({placement.z_tau[0]:.12g}, {placement.z_tau[1]:.12g})")
    print(f"H1(Omega) norm: {solution.omega_h1_norm():.12g}")
    for key, value in sorted(solution.diagnostics.items()):
        print(f"{key}: {value:.12g}")
    print(f"wrote {target}")


def _run_recover(config: ExperimentConfig, out: Path) -> None:
    assert config.recovery is not None
    params = config.recovery
    geometry = config.geometry
    mesh = geometry.build_mesh()
    rho_sets = compute_rho_sets(mesh, geometry.rho)
    aug = augment_domain(
        mesh, rho_sets, thickness=geometry.thickness, patch_fraction=geometry.patch_fraction
    )
    tag_a, tag_b = params.pair
    recovery_config = RecoveryConfig(
        x0=params.x0,
        tau_schedule=params.taus,
        map_kind=params.map_kind,
        model=config.model.build(),
        coeff_a=config.coefficient(tag_a, mesh),
        coeff_b=config.coefficient(tag_b, mesh),
        r0=params.r0,
        domain=aug,
        rho_sets=rho_sets,
        extrapolation=params.extrapolation,
        target=params.target,
    )
    header = output_header(config, mesh)
    if params.epsilons:
        result, rows = mollified_recovery(recovery_config, params.epsilons, threads=config.threads)
        with (out / f"mollified_{tag_a}_{tag_b}.csv").open("w", newline="") as handle:
            _write_header(handle, header)
            handle.write("epsilon,delta_hat,deviation,two_omega,map_perturbation\n")
            for row in rows:
                handle.write(
                    f"{row.epsilon:.12g},{row.delta_hat:.12e},{row.deviation:.12e},"
                    f"{row.two_omega:.12e},{row.map_perturbation:.12e}\n"
                )
    else:
        result = recover_boundary_difference(recovery_config, threads=config.threads)
    target = out / f"recover_{tag_a}_{tag_b}.csv"
    write_recovery_csv(result, target, header)
    print(format_recovery_summary(result))
    print(f"wrote {target}")


def _sweep_pairs(
    config: ExperimentConfig, mesh: MeshDomain, rho_sets: RhoSets
) -> list[tuple[ScalarCoefficient, ScalarCoefficient]]:
    assert config.sweep is not None
    params = config.sweep
    pairs = [(config.coefficient(a, mesh), config.coefficient(b, mesh)) for a, b in params.pairs]
    if params.escalation is not None:
        base_a, base_b = params.escalation.base
        pairs.extend(
            e_escalation_pairs(
                config.coefficient(base_a, mesh),
                config.coefficient(base_b, mesh),
                params.escalation.ks,
                params.escalation.amplitude,
                rho_sets,
            )
        )
    if params.random is not None:
        pairs.extend(
            random_continuous_pairs(
                params.random.count,
                config.seed,
                lambda_=config.model.lambda_,
                x0=params.random.x0,
            )
        )
    return pairs


def _run_sweep(config: ExperimentConfig, out: Path) -> None:
    assert config.sweep is not None
    mesh = config.geometry.build_mesh()
    rho = config.geometry.rho
    pairs = _sweep_pairs(config, mesh, compute_rho_sets(mesh, rho))
    report = stability_sweep(
        pairs, config.sweep.map_kind, mesh, rho, config.model.build(), threads=config.threads
    )
    target = out / f"sweep_{report.map_kind.value.lower()}.csv"
    write_stability_csv(report, target, output_header(config, mesh))
    print(f"pairs: {len(report.rows)}")
    print(f"sup ratio: {report.sup_ratio:.12g}")
    print(f"wrote {target}")


def _run_verify(parsed: argparse.Namespace) -> int:
    from .plugin import discover_check_suites

    selectors = list(parsed.suite)
    if parsed.config is not None:
        config = load_config(parsed.config)
        selectors.extend(config.suites)
    try:
        discovered = discover_check_suites(selected_paths=selectors)
    except pytest.UsageError as exc:
        raise ConfigError(str(exc)) from exc
    overrides = {"h_mesh": parsed.h_mesh} if parsed.h_mesh is not None else {}
    runner = CheckRunner(overrides)
    seen: set[str] = set()
    for _, suite, _ in discovered:
        if suite.name not in seen:
            seen.add(suite.name)
            runner.run_suite(suite)
    print(format_outcomes(runner.outcomes))
    return 0 if all(outcome.passed for outcome in runner.outcomes) else 3


_RUNNERS = {
    Command.FORWARD: _run_forward,
    Command.DN_MAP: _run_maps,
    Command.ND_MAP: _run_maps,
    Command.SINGULAR: _run_singular,
    Command.RECOVER: _run_recover,
    Command.SWEEP: _run_sweep,
}
