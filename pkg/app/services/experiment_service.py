"""Service layer running one experiment pipeline per CLI command."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from app.config import Settings
from app.errors import BadParams, DomainMismatch, NotASolution
from app.models.field import AnalyticField, Bubble, Constant
from app.models.grid import FieldKind, GridField, GridSpec
from app.models.matrix import SymMatrix
from app.models.mobius_map import MobiusMap
from app.repositories.grid_repository import GridRepository
from app.repositories.report_repository import ReportRepository
from app.schemas.experiment import (
    CheckSolutionBlock,
    Command,
    DeformationBlock,
    ExperimentConfig,
    GridBlock,
    HopfBlock,
    LiouvilleBlock,
    MobiusBlock,
    Tolerances,
    resolve_tolerances,
)
from app.schemas.operator import OperatorSpec
from app.schemas.params import DeformationParams
from app.schemas.reports import Aggregate, DeformationCase, LiouvilleKind
from app.services import comparison, movingsphere, viscosity
from app.services.conformal import classify, grid_verdict_tol
from app.services.fields import build_field, fd_jets, mobius_map_of, psi_value, sample
from app.services.mobius import check_conformal_invariance, pole_distance
from app.services.symfun import eigen_sym
from app.utils.audit import audit_record
from app.utils.logging import get_logger, run_context
from app.utils.rng import make_rng, random_mobius, uniform_ball
from app.utils.svg import line_plot

logger = get_logger(__name__)

Table = tuple[list[str], list[list[Any]]]


@dataclass
class CommandResult:
    passed: bool
    summary: dict[str, Any]
    tables: dict[str, Table] = field(default_factory=dict)
    plots: dict[str, str] = field(default_factory=dict)


@dataclass
class RunOutcome:
    passed: bool
    summary_path: Path
    artifacts: list[Path]


@dataclass
class RunContext:
    config: ExperimentConfig
    tols: Tolerances
    spec: OperatorSpec
    rng: np.random.Generator
    seed: int


def _grid_of(block: GridBlock, n: int) -> GridSpec:
    if len(block.lower) != n or len(block.upper) != n:
        raise DomainMismatch(f"grid block bounds must have {n} entries")
    return GridSpec.box(tuple(block.lower), tuple(block.upper), block.nodes)


def _analytic(f: AnalyticField | GridField, command: Command) -> AnalyticField:
    if isinstance(f, GridField):
        raise DomainMismatch(f"{command.value} needs an analytic field, got a grid field")
    return f


def _interior_min_eigenvalues(gf: GridField) -> dict[tuple[int, ...], float]:
    """Smallest FD Hessian eigenvalue per interior node."""
    nodes = np.asarray(gf.grid.interior_nodes(), dtype=np.int64).reshape((-1, gf.n))
    spectrum = eigen_sym(SymMatrix.from_array(fd_jets(gf, nodes).hessian))
    return {
        tuple(int(i) for i in node): float(v)
        for node, v in zip(nodes, spectrum.min_eigenvalue, strict=True)
    }


class ExperimentService:
    """Resolves a config, runs its pipeline and writes the artifacts."""

    def __init__(
        self,
        settings: Settings,
        reports: ReportRepository,
        *,
        grids: GridRepository | None = None,
        plot: bool = False,
        threads: int | None = None,
    ) -> None:
        self.settings = settings
        self.reports = reports
        self.grids = grids or GridRepository()
        self.plot = plot
        self.threads = threads or settings.threads

    def run(self, config: ExperimentConfig) -> RunOutcome:
        tols = resolve_tolerances(self.settings, config.tolerances)
        seed = config.seed if config.seed is not None else self.settings.seed
        spec = config.operator.to_spec(tols.boundary_tol)
        ctx = RunContext(config, tols, spec, make_rng(seed), seed)
        subject = build_field(config.field, spec, grids=self.grids)
        logger.info("Running %s (%s) with seed %d", config.command.value, config.name, seed)

        handlers = {
            Command.check_solution: self.check_solution,
            Command.mobius_invariance: self.mobius_invariance,
            Command.sup_convolve: self.sup_convolve,
            Command.deformation: self.deformation,
            Command.hopf: self.hopf,
            Command.moving_sphere: self.moving_sphere,
            Command.liouville: self.liouville,
        }
        with run_context(config.command.value, config.name, seed):
            result = handlers[config.command](subject, ctx)

        summary = {
            "command": config.command.value,
            "passed": result.passed,
            "result": result.summary,
            "audit": audit_record(config.command.value, seed, config, tols).model_dump(),
        }
        artifacts = [self.reports.write_json(f"{config.name}-summary", summary)]
        for table, (header, rows) in sorted(result.tables.items()):
            artifacts.append(self.reports.write_csv(f"{config.name}-{table}", header, rows))
        if self.plot:
            for plot_name, svg in sorted(result.plots.items()):
                artifacts.append(self.reports.write_svg(f"{config.name}-{plot_name}", svg))
        logger.info("%s finished: passed=%s", config.command.value, result.passed)
        return RunOutcome(result.passed, artifacts[0], artifacts)

    # -----------------------------------------------------------------------
    # check-solution
    # -----------------------------------------------------------------------

    def check_solution(self, subject: AnalyticField | GridField, ctx: RunContext) -> CommandResult:
        block = ctx.config.check_solution or CheckSolutionBlock()
        tols = ctx.tols
        if isinstance(subject, GridField):
            result = classify(
                subject,
                None,
                ctx.spec,
                grid_verdict_tol(subject.grid, tols.verdict_grid_factor),
                jacobi_tol=tols.jacobi_tol,
            )
        elif block.grid is not None:
            grid = _grid_of(block.grid, subject.n)
            result = classify(
                sample(subject, grid),
                None,
                ctx.spec,
                grid_verdict_tol(grid, tols.verdict_grid_factor),
                jacobi_tol=tols.jacobi_tol,
            )
        else:
            center = None if block.center is None else np.asarray(block.center, dtype=np.float64)
            points = uniform_ball(ctx.rng, block.points, subject.n, block.radius, center)
            result = classify(
                subject,
                points,
                ctx.spec,
                tols.verdict_tol_exact,
                jacobi_tol=tols.jacobi_tol,
                pole_guard=tols.pole_guard,
            )
        n = ctx.spec.n
        rows = [
            [
                *rec.point,
                rec.value if rec.value is not None else "",
                rec.min_eigenvalue,
                rec.verdict,
            ]
            for rec in result.points
        ]
        header = [f"x{i}" for i in range(n)] + ["value", "min_eigenvalue", "verdict"]
        values = [rec.value for rec in result.points if rec.value is not None]
        plots = {
            "values": line_plot(
                [("F", list(range(len(values))), sorted(values))],
                title="Operator values (sorted)",
                xlabel="rank",
                ylabel="F",
            )
        }
        return CommandResult(
            passed=result.aggregate is Aggregate.solution,
            summary=result.model_dump(),
            tables={"points": (header, rows)},
            plots=plots,
        )

    # -----------------------------------------------------------------------
    # mobius-invariance
    # -----------------------------------------------------------------------

    def mobius_invariance(
        self, subject: AnalyticField | GridField, ctx: RunContext
    ) -> CommandResult:
        w = _analytic(subject, Command.mobius_invariance)
        block = ctx.config.mobius_invariance or MobiusBlock()
        n = w.n
        if block.ops is not None:
            phi = mobius_map_of(n, list(block.ops))
        elif block.random_ops > 0:
            phi = random_mobius(ctx.rng, n, block.random_ops)
        else:
            phi = MobiusMap.identity(n)
        points = uniform_ball(ctx.rng, block.points, n, block.radius)
        keep = pole_distance(phi, points) > 1e3 * ctx.tols.pole_guard
        if not np.all(keep):
            logger.warning("Dropping %d sample points next to a pole", int(np.sum(~keep)))
        points = points[keep]
        report = check_conformal_invariance(
            w,
            phi,
            points,
            ctx.spec,
            tol=block.tol,
            jacobi_tol=ctx.tols.jacobi_tol,
            pole_guard=ctx.tols.pole_guard,
        )
        rows = [[*p, d] for p, d in zip(points.tolist(), report.discrepancies, strict=True)]
        header = [f"x{i}" for i in range(n)] + ["discrepancy"]
        summary = report.model_dump()
        summary["map"] = [repr(op) for op in phi.ops]
        return CommandResult(
            passed=report.passed,
            summary=summary,
            tables={"discrepancies": (header, rows)},
            plots={
                "discrepancies": line_plot(
                    [("|dF|", list(range(len(rows))), report.discrepancies)],
                    title="Invariance discrepancy per point",
                    xlabel="point",
                    ylabel="discrepancy",
                )
            },
        )

    # -----------------------------------------------------------------------
    # sup-convolve
    # -----------------------------------------------------------------------

    def sup_convolve(self, subject: AnalyticField | GridField, ctx: RunContext) -> CommandResult:
        block = ctx.config.sup_convolve
        assert block is not None
        tols = ctx.tols
        if isinstance(subject, GridField):
            psi = subject.as_psi()
        else:
            if block.grid is None:
                raise BadParams("sup-convolve on an analytic field needs a grid block")
            psi = sample(subject, _grid_of(block.grid, subject.n), kind=FieldKind.psi)
        result = viscosity.sup_convolve(psi, block.eps)
        hat = result.regularized
        above = float(np.min(hat.values - psi.values))

        brute_error = None
        if block.brute_force_stride is not None:
            stride = block.brute_force_stride
            sub_slices = tuple(slice(None, None, stride) for _ in range(psi.n))
            sub_values = psi.values[sub_slices]
            sub_grid = GridSpec(
                psi.grid.origin,
                tuple(h * stride for h in psi.grid.spacing),
                sub_values.shape,
            )
            sub = GridField(sub_grid, sub_values, FieldKind.psi)
            fast = viscosity.sup_convolve(sub, block.eps).regularized.values
            brute_error = float(np.max(np.abs(fast - viscosity.sup_convolve_brute(sub, block.eps))))

        semi = viscosity.certify_semiconvex(hat, 2.0 / block.eps, tols.stencil_tol)
        summary: dict[str, Any] = {
            "eps": block.eps,
            "grid_shape": list(psi.grid.shape),
            "min_regularized_minus_psi": above,
            "brute_force_max_error": brute_error,
            "semiconvexity": semi.model_dump(),
        }
        passed = above >= -1e-12 and semi.passed and (brute_error is None or brute_error <= 1e-12)

        if block.envelope:
            env = viscosity.concave_envelope(hat, tols.contact_rel_tol)
            summary["envelope"] = {
                "contact_nodes": len(env.contact_nodes),
                "contact_tol": env.contact_tol,
                "max_gap": float(np.max(env.envelope.values - hat.values)),
            }
        if block.c11_deltas is not None:
            c11 = viscosity.verify_c11_equivalence(
                hat,
                None,
                ctx.spec,
                grid_verdict_tol(hat.grid, tols.verdict_grid_factor),
                deltas=tuple(block.c11_deltas),
                hessian_bound=tols.c11_hessian_bound,
                max_kink_fraction=tols.c11_max_kink_fraction,
                jacobi_tol=tols.jacobi_tol,
            )
            summary["c11"] = c11.model_dump()

        n = psi.n
        nodes = np.stack(np.indices(psi.grid.shape), axis=-1).reshape((-1, n))
        argopt = result.argopt.reshape((-1, n))
        min_eig = _interior_min_eigenvalues(hat)
        rows = [
            [
                *node,
                float(psi.values[tuple(node)]),
                float(hat.values[tuple(node)]),
                *arg,
                min_eig.get(tuple(node), ""),
            ]
            for node, arg in zip(nodes.tolist(), argopt.tolist(), strict=True)
        ]
        header = (
            [f"i{d}" for d in range(n)]
            + ["psi", "psi_hat"]
            + [f"xstar{d}" for d in range(n)]
            + ["min_eigenvalue"]
        )
        return CommandResult(passed=passed, summary=summary, tables={"nodes": (header, rows)})

    # -----------------------------------------------------------------------
    # deformation
    # -----------------------------------------------------------------------

    def deformation(self, subject: AnalyticField | GridField, ctx: RunContext) -> CommandResult:
        psi = _analytic(subject, Command.deformation)
        block = ctx.config.deformation or DeformationBlock()
        tols = ctx.tols
        radius = block.R or tols.deformation_radius
        xhat = (radius,) + (0.0,) * (psi.n - 1)
        if block.alpha is None:
            params, report = comparison.auto_select_alpha(
                psi,
                ctx.spec,
                R=radius,
                xhat=xhat,
                rng=ctx.rng,
                case=block.case,
                doublings=tols.alpha_doublings,
                mu=block.mu,
                mu_fraction=tols.mu_fraction,
                mu_halvings=tols.mu_halvings,
                samples=tols.deformation_samples,
                jacobi_tol=tols.jacobi_tol,
                pole_guard=tols.pole_guard,
            )
        else:
            params = self._fixed_params(psi, block.alpha, block.mu, radius, xhat, ctx)
            points = comparison.sample_region(params, tols.deformation_samples, ctx.rng)
            report = self._verify(psi, params, ctx.spec, block.case, points, tols)

        summary: dict[str, Any] = {"selected": params.model_dump(), "report": report.model_dump()}
        if block.negative_control_alpha is not None:
            control = self._fixed_params(
                psi, block.negative_control_alpha, params.mu, radius, xhat, ctx
            )
            points = comparison.sample_region(control, tols.deformation_samples, ctx.rng)
            control_report = self._verify(psi, control, ctx.spec, block.case, points, tols)
            if not control_report.passed:
                logger.warning("Negative control alpha=%g failed as permitted", control.alpha)
            summary["negative_control"] = control_report.model_dump()
        if block.select_tau:
            summary["tau1"] = comparison.select_tau1(
                psi,
                psi,
                params,
                ctx.rng,
                case=block.case,
                samples=tols.deformation_samples,
                tol=tols.contact_tol,
                max_steps=tols.bisection_steps,
                pole_guard=tols.pole_guard,
            )

        margin_rows = [
            [m.tau, m.extreme_value, m.beta_meas, m.outside_cone] for m in report.margins
        ]
        trace_rows = [
            [t["alpha"], t["mu"], t["beta_meas"], t["passed"]] for t in report.search_trace
        ]
        plots = {}
        if trace_rows:
            plots["alpha-search"] = line_plot(
                [("beta", [r[0] for r in trace_rows], [r[2] for r in trace_rows])],
                title="Measured margin along the alpha search",
                xlabel="log10 alpha",
                ylabel="beta_meas",
                log_x=True,
            )
        return CommandResult(
            passed=report.passed,
            summary=summary,
            tables={
                "margins": (["tau", "extreme_value", "beta_meas", "outside_cone"], margin_rows),
                "alpha-search": (["alpha", "mu", "beta_meas", "passed"], trace_rows),
            },
            plots=plots,
        )

    @staticmethod
    def _fixed_params(
        psi: AnalyticField,
        alpha: float,
        mu: float | None,
        radius: float,
        xhat: tuple[float, ...],
        ctx: RunContext,
    ) -> DeformationParams:
        a_radius = min(np.pi / (3.0 * np.sqrt(alpha)), radius / 2.0)
        params = DeformationParams(alpha=alpha, mu=0.0, R=radius, xhat=xhat, A_radius=a_radius)
        if mu is None:
            probe = comparison.sample_region(params, ctx.tols.deformation_samples, ctx.rng)
            osc = float(np.ptp(psi_value(psi, probe, pole_guard=ctx.tols.pole_guard)))
            mu = ctx.tols.mu_fraction * (osc if osc > 0 else 1.0)
        return params.with_mu(mu)

    @staticmethod
    def _verify(
        psi: AnalyticField,
        params: DeformationParams,
        spec: OperatorSpec,
        case: DeformationCase,
        points: np.ndarray,
        tols: Tolerances,
    ) -> Any:
        verify = (
            comparison.verify_strict_supersolution
            if case is DeformationCase.super
            else comparison.verify_strict_subsolution
        )
        return verify(
            psi, params, spec, points, jacobi_tol=tols.jacobi_tol, pole_guard=tols.pole_guard
        )

    # -----------------------------------------------------------------------
    # hopf
    # -----------------------------------------------------------------------

    def hopf(self, subject: AnalyticField | GridField, ctx: RunContext) -> CommandResult:
        v = _analytic(subject, Command.hopf)
        block = ctx.config.hopf or HopfBlock()
        tols = ctx.tols
        n = v.n
        x = tuple(block.x) if block.x is not None else (0.0,) * n
        if len(x) != n:
            raise DomainMismatch(f"hopf centre has {len(x)} entries, expected {n}")
        if isinstance(v, Bubble):
            lam_bar = movingsphere.bubble_critical_radius(v, x)
        else:
            lam_bar = movingsphere.critical_radius(
                v, x, block.R, tol=tols.radius_rel_tol, compare_tol=tols.sphere_compare_tol
            ).lambda_bar
        lam = block.lam_fraction * lam_bar
        direction = tuple(block.direction) if block.direction is not None else None
        psi1, psi2, xhat, nu = comparison.sphere_contact_pair(v, x, lam, direction)
        s_min = block.s_min or tols.hopf_min_s
        quotient = comparison.hopf_quotient(
            psi1,
            psi2,
            xhat,
            nu,
            s_max=block.s_max,
            s_min=s_min,
            contact_tol=tols.contact_tol,
            hopf_tol=tols.hopf_tol,
            pole_guard=tols.pole_guard,
        )
        shell = movingsphere.exterior_points(
            np.asarray(x, dtype=np.float64),
            lam,
            float(np.linalg.norm(x)) + 4.0 * lam,
            movingsphere.default_directions(n, tols.sphere_directions),
            tols.sphere_radii,
        )
        contact = comparison.detect_contact(
            psi1, psi2, shell, tols.contact_tol, pole_guard=tols.pole_guard
        )
        summary: dict[str, Any] = {
            "lambda_bar": lam_bar,
            "lambda": lam,
            "quotient": quotient.model_dump(),
            "contact": {
                "verdict": contact.verdict,
                "contact_points": len(contact.contact_set),
                "min_gap": contact.min_gap,
            },
        }
        passed = quotient.passed
        series = [("contact pair", quotient.s_values, quotient.quotients)]
        if block.tangency_control:
            control = comparison.hopf_quotient(
                Constant(1.0, n),
                Bubble(1.0, 1.0, tuple(float(c) for c in xhat)),
                xhat,
                nu,
                s_max=block.s_max,
                s_min=s_min,
                contact_tol=tols.contact_tol,
                hopf_tol=tols.hopf_tol,
            )
            summary["tangency_control"] = control.model_dump()
            series.append(("quadratic tangency", control.s_values, control.quotients))
            passed = passed and not control.passed
        rows = [[s, q] for s, q in zip(quotient.s_values, quotient.quotients, strict=True)]
        return CommandResult(
            passed=passed,
            summary=summary,
            tables={"quotients": (["s", "quotient"], rows)},
            plots={
                "quotients": line_plot(
                    series,
                    title="Hopf difference quotients",
                    xlabel="log10 s",
                    ylabel="(psi2 - psi1)/s",
                    log_x=True,
                )
            },
        )

    # -----------------------------------------------------------------------
    # moving-sphere
    # -----------------------------------------------------------------------

    def moving_sphere(self, subject: AnalyticField | GridField, ctx: RunContext) -> CommandResult:
        block = ctx.config.moving_sphere
        assert block is not None
        tols = ctx.tols
        n = subject.n
        R = block.R
        dirs = movingsphere.default_directions(n, tols.sphere_directions)
        if block.centers is not None:
            centers = np.asarray(block.centers, dtype=np.float64).reshape((-1, n))
        else:
            centers = uniform_ball(ctx.rng, block.count, n, R / 20.0)

        def radius_of(v: AnalyticField | GridField, x: np.ndarray, ball: float) -> Any:
            return movingsphere.critical_radius(
                v,
                x,
                ball,
                tol=tols.radius_rel_tol,
                compare_tol=tols.sphere_compare_tol,
                directions=dirs,
                radii=tols.sphere_radii,
                probes=tols.sphere_probe_count,
                pole_guard=tols.pole_guard,
            )

        states = [radius_of(subject, c, R) for c in centers]
        alpha_hat, infinite = movingsphere.asymptotic_alpha(
            subject, R, directions=dirs, pole_guard=tols.pole_guard
        )
        values = movingsphere.u_at(subject, centers, pole_guard=tols.pole_guard)
        lambdas = np.asarray([s.lambda_bar for s in states])
        products = lambdas ** (n - 2) * values
        errors = np.abs(products - alpha_hat) / alpha_hat
        summary: dict[str, Any] = {
            "alpha": alpha_hat,
            "alpha_infinite": infinite,
            "lower_bound": movingsphere.lower_bound_measure(
                subject, R, directions=dirs, pole_guard=tols.pole_guard
            ),
            "states": [s.model_dump() for s in states],
            "identity_errors": errors.tolist(),
        }
        if infinite:
            passed = all(s.capped for s in states)
        else:
            passed = not any(s.capped for s in states) and float(np.max(errors)) <= (
                tols.identity_rel_tol
            )
        if isinstance(subject, Bubble):
            exact = np.asarray([movingsphere.bubble_critical_radius(subject, c) for c in centers])
            summary["closed_form_errors"] = (np.abs(lambdas - exact) / exact).tolist()
        if block.dilation is not None:
            v = _analytic(subject, Command.moving_sphere)
            r = block.dilation
            scaled = radius_of(movingsphere.dilated(v, r), centers[0] / r, R / r)
            expected = states[0].lambda_bar / r
            error = abs(scaled.lambda_bar - expected) / expected
            summary["dilation"] = {"r": r, "lambda_bar": scaled.lambda_bar, "relative_error": error}
            passed = passed and error <= tols.identity_rel_tol

        rows = [
            [*c, s.lambda_bar, p]
            for c, s, p in zip(centers.tolist(), states, products, strict=True)
        ]
        header = [f"x{i}" for i in range(n)] + ["lambda_bar", "lambda_bar_pow_v"]
        return CommandResult(
            passed=passed,
            summary=summary,
            tables={"centers": (header, rows)},
            plots={
                "lambda-bar": line_plot(
                    [("lambda_bar", list(range(len(states))), lambdas.tolist())],
                    title="Critical radius per centre",
                    xlabel="centre",
                    ylabel="lambda_bar",
                )
            },
        )

    # -----------------------------------------------------------------------
    # liouville
    # -----------------------------------------------------------------------

    def liouville(self, subject: AnalyticField | GridField, ctx: RunContext) -> CommandResult:
        block: LiouvilleBlock | None = ctx.config.liouville
        assert block is not None
        try:
            verdict = movingsphere.liouville_classify(
                subject, block.R, ctx.spec, ctx.tols, rng=ctx.rng, threads=self.threads
            )
        except NotASolution as exc:
            logger.warning("Liouville precondition failed: %s", exc)
            return CommandResult(
                passed=False,
                summary={"kind": "NotASolution", "reason": str(exc)},
                tables={"centers": (["kind"], [["NotASolution"]])},
            )
        n = subject.n
        rows = [
            [*s.x, s.lambda0, s.lambda_bar, s.violation_gap, e]
            for s, e in zip(verdict.states, verdict.identity_errors, strict=True)
        ]
        header = [f"x{i}" for i in range(n)] + [
            "lambda0",
            "lambda_bar",
            "violation_gap",
            "identity_error",
        ]
        plots = {}
        if rows:
            plots["lambda-bar"] = line_plot(
                [("lambda_bar", list(range(len(rows))), [s.lambda_bar for s in verdict.states])],
                title="Critical radius per fit centre",
                xlabel="centre",
                ylabel="lambda_bar",
            )
        return CommandResult(
            passed=verdict.kind is not LiouvilleKind.inconclusive,
            summary=verdict.model_dump(),
            tables={"centers": (header, rows)},
            plots=plots,
        )
