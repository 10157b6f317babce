"""Pipeline orchestration: configuration, staged runs, refinement studies.

A run walks, per grid and per fiber-family kind, through constants,
reference geometry, fiber solves, both base-form routes, the base
Monge-Ampere solves, and the selected residual and identity checks;
convergence orders are taken between consecutive grids.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import cohomology
from .basespace import (VARIANT_B, VARIANT_BPRIME, compute_gprime,
                        check_g_descends, integrated_ma_defect, solve_base_ma,
                        twisted_ke_residual, volume_identity_residual,
                        wpl_fs_residual)
from .errors import ConfigError, FanofibError
from .fiberwise import SKE, SPR, solve_spr, solve_ske, verify_fiber_family
from .grids import Grid
from .model import ModelSpec, build_reference, derive_constants
from .report import CheckRecord, Report, provenance
from .wpform import (SectionFamilySpec, volume_family_from_sections,
                     wp_from_residual, wp_from_sections)

ALL_CHECKS = ("fiber", "wp_routes", "gprime", "base_ma", "twisted_ke",
              "wpl_fs", "volume_identities", "cohomology")
PIPELINES = {"spr": (SPR,), "ske": (SKE,), "both": (SPR, SKE)}

_EXACT = "exact"
_TRUNC = "trunc"


@dataclass(frozen=True)
class PipelineConfig:
    a: Fraction = Fraction(2)
    c: Fraction = Fraction(1)
    warp_amplitude: float = 0.0
    warp_shape: str = "product_bump"
    grids: tuple = ((64, 64),)
    pipeline: str = "both"
    checks: tuple = ALL_CHECKS
    newton_tol: float = 1e-11
    residual_tol: float = 1e-8
    quadrature_tol: float = 1e-10
    h2_constant: float = 50.0
    eps_lp: float = 0.1

    def model_spec(self, grid: tuple[int, int]) -> ModelSpec:
        return ModelSpec.make(self.a, self.c, self.warp_amplitude,
                              self.warp_shape, grid[0], grid[1])

    def as_mapping(self) -> dict:
        return {"a": str(self.a), "c": str(self.c),
                "warp_amplitude": self.warp_amplitude,
                "warp_shape": self.warp_shape,
                "grids": ["x".join(map(str, g)) for g in self.grids],
                "pipeline": self.pipeline, "checks": list(self.checks),
                "newton_tol": self.newton_tol,
                "residual_tol": self.residual_tol,
                "quadrature_tol": self.quadrature_tol,
                "h2_constant": self.h2_constant, "eps_lp": self.eps_lp}


def parse_config(text: str) -> dict:
    """Parse the key = value configuration format ('#' starts a comment)."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def _parse_grid(token: str) -> tuple[int, int]:
    try:
        nf, nb = token.lower().split("x")
        return (int(nf), int(nb))
    except ValueError as exc:
        raise ConfigError(f"bad grid {token!r}, expected NxM") from exc


def config_from_mapping(mapping: dict) -> PipelineConfig:
    kw = {}
    m = dict(mapping)
    for key in ("a", "c"):
        if key in m:
            kw[key] = Fraction(str(m.pop(key)))
    for key in ("warp_amplitude", "newton_tol", "residual_tol",
                "quadrature_tol", "h2_constant", "eps_lp"):
        if key in m:
            kw[key] = float(m.pop(key))
    if "warp_shape" in m:
        kw["warp_shape"] = str(m.pop("warp_shape"))
    grids = []
    if "grids" in m:
        raw = m.pop("grids")
        tokens = raw.split(",") if isinstance(raw, str) else raw
        grids = [_parse_grid(t.strip()) for t in tokens if str(t).strip()]
    if "n_fiber" in m or "n_base" in m:
        nf = int(m.pop("n_fiber", 64))
        nb = int(m.pop("n_base", 64))
        if not grids:
            grids = [(nf, nb)]
    if grids:
        kw["grids"] = tuple(grids)
    if "pipeline" in m:
        p = str(m.pop("pipeline"))
        if p not in PIPELINES:
            raise ConfigError(f"pipeline must be one of {sorted(PIPELINES)}")
        kw["pipeline"] = p
    if "checks" in m:
        raw = m.pop("checks")
        names = [t.strip() for t in (raw.split(",") if isinstance(raw, str) else raw)]
        unknown = [n for n in names if n not in ALL_CHECKS]
        if unknown:
            raise ConfigError(f"unknown checks {unknown}; available {ALL_CHECKS}")
        kw["checks"] = tuple(names)
    m.pop("out", None)
    if m:
        raise ConfigError(f"unknown configuration keys {sorted(m)}")
    cfg = PipelineConfig(**kw)
    if not cfg.grids:
        raise ConfigError("at least one grid is required")
    for tol in (cfg.newton_tol, cfg.residual_tol, cfg.quadrature_tol):
        if tol <= 0:
            raise ConfigError("tolerances must be positive")
    return cfg


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        return config_from_mapping(parse_config(fh.read()))


# ---------------------------------------------------------------------------
# staged execution
# ---------------------------------------------------------------------------

class PipelineStageError(FanofibError):
    """A stage failed; carries the partial report for emission."""

    def __init__(self, stage: str, original: Exception, report: Report):
        super().__init__(f"stage {stage!r}: {original}")
        self.stage = stage
        self.original = original
        self.report = report


def _tolerance(cfg: PipelineConfig, grid: Grid, grade: str) -> float:
    if grade == _EXACT:
        return cfg.quadrature_tol
    h2 = grid.h("fiber")**2 + grid.h("base")**2
    return max(cfg.residual_tol, cfg.h2_constant * h2)


def run_pipeline(config: PipelineConfig) -> Report:
    report = Report(model={"a": config.a, "c": config.c,
                           "warp_amplitude": config.warp_amplitude,
                           "warp_shape": config.warp_shape},
                    constants={}, grids=list(config.grids),
                    checks=list(config.checks),
                    provenance=provenance(config.as_mapping()))
    stage = "derive_constants"
    try:
        consts = derive_constants(config.model_spec(config.grids[0]))
        report.constants = {"eT": consts.eT, "T": consts.T, "lambda": consts.lam,
                            "kappa": consts.kappa, "k": consts.k,
                            "kprime": consts.kprime, "alpha": consts.alpha,
                            "beta": consts.beta,
                            "D_base": consts.D_class[0],
                            "D_fiber": consts.D_class[1],
                            "p": consts.p, "q": consts.q, "r": consts.r}
        for grid_pair in config.grids:
            for kind in PIPELINES[config.pipeline]:
                stage = f"grid {grid_pair} / {kind}"
                _run_cell(config, grid_pair, kind, report)
    except FanofibError as exc:
        report.error = {"stage": stage, "message": str(exc),
                        "type": type(exc).__name__}
        raise PipelineStageError(stage, exc, report) from exc
    _attach_orders(report)
    return report


def _record(report: Report, cfg: PipelineConfig, grid: Grid, kind: str,
            name: str, residual: float, grade: str, t0: float, **values):
    tol = _tolerance(cfg, grid, grade)
    report.records.append(CheckRecord(
        name=name, pipeline=kind, grid=(grid.n_fiber, grid.n_base),
        residual=float(residual), tolerance=tol,
        passed=bool(residual <= tol), values=values,
        wall_time=time.perf_counter() - t0))


def _run_cell(cfg: PipelineConfig, grid_pair: tuple[int, int], kind: str,
              report: Report) -> None:
    spec = cfg.model_spec(grid_pair)
    ref = build_reference(spec)
    grid = ref.grid
    lam = float(ref.consts.lam)

    t0 = time.perf_counter()
    fiber = solve_spr(ref) if kind == SPR else solve_ske(ref, tol=cfg.newton_tol)

    if "fiber" in cfg.checks:
        audit = verify_fiber_family(ref, fiber)
        values = {"solver_residual": audit.solver_residual_sup,
                  "volume_defect": audit.volume_defect,
                  "positivity_margin": audit.positivity_margin,
                  "forward_residual": audit.forward_residual_sup}
        if audit.weight_forward_sup is not None:
            values["weight_forward"] = audit.weight_forward_sup
            values["exp_l2"] = audit.exp_l2_diagnostic
        _record(report, cfg, grid, kind, "fiber_solver", audit.solver_residual_sup,
                _EXACT, t0, **{k: v for k, v in values.items()
                               if k != "forward_residual"})
        _record(report, cfg, grid, kind, "fiber_forward",
                audit.forward_residual_sup, _TRUNC, t0)

    t0 = time.perf_counter()
    weight_kind = "hL" if kind == SPR else "hSKE"
    sfs = SectionFamilySpec.canonical(ref.consts, weight_kind)
    family = volume_family_from_sections(
        ref, sfs, ske=fiber if kind == SKE else None)
    wp_sections = wp_from_sections(ref, family)
    wp_residual = wp_from_residual(ref, fiber, family=family)

    if "wp_routes" in cfg.checks:
        diff = float(np.abs(wp_sections.wp_base -
                            wp_residual.wp_base).max())
        _record(report, cfg, grid, kind, "wp_routes", diff, _TRUNC, t0,
                verticality_defect=wp_residual.verticality_defect,
                ric_defect=family.ric_defect,
                wp_fs_min=float(wp_sections.wp_fs.min()))

    t0 = time.perf_counter()
    gprime = compute_gprime(ref, kind, fiber_sol=fiber, eps_lp=cfg.eps_lp)
    if "gprime" in cfg.checks:
        gp = gprime
        descend = check_g_descends(ref, fiber, gp)
        _record(report, cfg, grid, kind, "gprime", gp.normalization_defect,
                _EXACT, t0, delta_lower=gp.delta_lower,
                adjoint_defect=gp.adjoint_defect,
                **{f"lp_{p:g}": v for p, v in gp.lp_norms.items()})
        _record(report, cfg, grid, kind, "g_descends",
                max(descend.vertical_oscillation, descend.pullback_defect),
                _TRUNC, t0, vertical_oscillation=descend.vertical_oscillation,
                pullback_defect=descend.pullback_defect)

    t0 = time.perf_counter()
    sol_b = solve_base_ma(ref, gprime, VARIANT_B, tol=cfg.newton_tol)
    sol_bp = solve_base_ma(ref, gprime, VARIANT_BPRIME, tol=cfg.newton_tol)
    if "base_ma" in cfg.checks:
        for sol in (sol_b, sol_bp):
            _record(report, cfg, grid, kind, f"base_ma[{sol.variant}]",
                    sol.forward_residual, _EXACT, t0,
                    positivity_margin=sol.positivity_margin,
                    zeroth_order_min=sol.zeroth_order_min,
                    iterations=sol.iterations,
                    integrated_defect=integrated_ma_defect(ref, gprime, sol))

    if "twisted_ke" in cfg.checks:
        t0 = time.perf_counter()
        for sol in (sol_b, sol_bp):
            rep_s = twisted_ke_residual(ref, sol, wp_sections)
            rep_r = twisted_ke_residual(ref, sol, wp_residual)
            _record(report, cfg, grid, kind, f"twisted_ke[{sol.variant}]",
                    rep_r.relative, _TRUNC, t0,
                    residual_sections=rep_s.residual_sup,
                    residual_routes=rep_r.residual_sup, scale=rep_r.scale)

    if "wpl_fs" in cfg.checks and kind == SPR:
        t0 = time.perf_counter()
        rep = wpl_fs_residual(ref, wp_sections)
        rep_r = wpl_fs_residual(ref, wp_residual)
        _record(report, cfg, grid, kind, "wpl_fs", rep_r.relative, _TRUNC, t0,
                residual_sections=rep.residual_sup,
                residual_routes=rep_r.residual_sup)

    if "volume_identities" in cfg.checks:
        t0 = time.perf_counter()
        pairs = ((1, sol_b), (2, sol_bp)) if kind == SPR \
            else ((3, sol_b), (4, sol_bp))
        for which, sol in pairs:
            rep = volume_identity_residual(ref, which, fiber, sol)
            _record(report, cfg, grid, kind, f"volume_identity[{which}]",
                    rep.relative, _TRUNC, t0, **rep.extra)

    if "cohomology" in cfg.checks:
        t0 = time.perf_counter()
        base = cohomology.check_base_identity(ref, wp_sections)
        fiber_rep, total = cohomology.check_total_identity(ref, wp_sections)
        _record(report, cfg, grid, kind, "cohomology",
                max(base.relative, total.relative), _TRUNC, t0,
                base_measured=base.measured, base_expected=base.expected,
                total_base_defect=total.defect,
                fiber_defect_exact=float(fiber_rep.exact_defect))
        if fiber_rep.exact_defect != 0:
            report.records[-1].passed = False

    report.profiles[(kind, (grid.n_fiber, grid.n_base))] = {
        "x_b": grid.nodes_b,
        "gprime": gprime.gprime,
        "rho_B": sol_b.rho,
        "rho_Bprime": sol_bp.rho,
        "wp_sections_fs": wp_sections.wp_fs,
        "wp_residual_fs": wp_residual.wp_fs,
        "omega_B_fs": sol_b.dens_fs,
        "tke_B_residual": _tke_field(ref, sol_b, wp_sections, lam),
        "tke_Bprime_residual": _tke_field(ref, sol_bp, wp_sections, lam),
    }


def _tke_field(ref, sol, wp, lam):
    from .calculus import lap
    from .grids import BASE
    grid = ref.grid
    ric = 2.0 - lap(grid, np.log(sol.dens_fs), BASE)
    res = ric + sol.dens_fs - wp.wp_fs
    if sol.variant == VARIANT_B:
        res = res + lam * float(ref.eta_fs)
    return grid.g_b * res


def _attach_orders(report: Report) -> None:
    """Convergence order log2(r_h / r_{h/2}) between consecutive grids."""
    series: dict[tuple[str, str], list] = {}
    for rec in report.records:
        series.setdefault((rec.name, rec.pipeline), []).append(rec.residual)
    for (name, kind), residuals in series.items():
        if len(residuals) < 2:
            continue
        orders = []
        for a, b in zip(residuals, residuals[1:]):
            if a <= 0 or b <= 0:
                orders.append(float("nan"))
            else:
                orders.append(math.log2(a / b))
        report.orders[f"{name}[{kind}]"] = orders
