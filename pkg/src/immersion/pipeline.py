"""Geometry -> operator -> eigensystem -> kernels -> anomaly, with an invariant suite."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, anomaly, cache, catalog, dirac, io, spectra, spectral
from .config import RunConfig
from .errors import ImmersionError, NonConformalChartWarning
from .geometry import bundle_from_data, functionals

STAGES = ("geometry", "dirac", "spectra", "anomaly")
UNITS = ("grid units: q and all lengths in the parameter units of the chart definition; "
         "curvatures in inverse length, tau in length squared")


@dataclass(frozen=True)
class Check:
    name: str
    value: Optional[float]
    threshold: Optional[float]
    passed: bool
    informational: bool = False

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "threshold": self.threshold,
                "passed": bool(self.passed), "informational": self.informational}


def _le(name, value, threshold, informational=False) -> Check:
    value = float(value)
    return Check(name, value, float(threshold), bool(value <= threshold), informational)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


@dataclass
class PipelineResult:
    report: dict
    paths: list = field(default_factory=list)
    cache_hit: bool = False
    eigensystem: Optional[spectra.EigenSystem] = None

    @property
    def ok(self) -> bool:
        return self.report["status"] == "pass"

    @property
    def checks(self) -> list:
        return self.report["checks"]


def eigensystem_cached(op: dirac.DiracOperatorMatrix, store: Optional[cache.EigenCache]):
    """Eigen-solve, reusing a cached record keyed by the operator content hash."""
    key = cache.content_key(op.content_hash(), "eigensystem", spectra.CLUSTER_RTOL,
                            cache.FORMAT_VERSION)
    if store is not None:
        arrays = store.load(key)
        if arrays is not None:
            clusters = tuple(tuple(int(i) for i in c[c >= 0])
                             for c in arrays.get("clusters", np.zeros((0, 0), int)))
            return spectra.EigenSystem(arrays["eigenvalues"], arrays["right"], arrays["left"],
                                       arrays["omega"], op.domain, op.content_hash(),
                                       clusters), True
    eigs = spectra.eigensystem(op)
    if store is not None:
        width = max((len(c) for c in eigs.clusters), default=0)
        packed = np.full((len(eigs.clusters), width), -1, dtype=np.int64)
        for i, c in enumerate(eigs.clusters):
            packed[i, :len(c)] = c
        store.store(key, {**eigs.arrays(), "clusters": packed}, dims=list(op.matrix.shape),
                    domain=op.domain.key(), bc=list(op.bc))
    return eigs, False


class _Run:
    def __init__(self, config: RunConfig):
        self.config = config
        self.checks: list[Check] = []
        self.sections: dict = {}
        self.fields = None
        self.paths: list[Path] = []
        self.stage = None
        self.out_dir: Optional[Path] = None

    def add(self, *checks: Check):
        self.checks.extend(checks)


def run_pipeline(config: RunConfig, store: Optional[cache.EigenCache] = None,
                 stages=STAGES, write: bool = True) -> PipelineResult:
    """Run the requested stages for one catalog surface and emit the report.

    Any ImmersionError stops the run; the report then carries ``failed_at``
    with the stage name and is still written.
    """
    entry = catalog.get_entry(config.surface)
    if store is None and config.cache:
        store = cache.EigenCache()
    elif not config.cache:
        store = None
    run = _Run(config)
    out_dir = Path(config.out) / entry.name
    run.out_dir = out_dir if write else None
    failed_at = error = None
    cache_hit = False
    eigs = None
    try:
        run.stage = "geometry"
        geo = _geometry_stage(run, entry, out_dir if write else None)
        if entry.has_operator and any(s in stages for s in STAGES[1:]):
            run.stage = "dirac"
            op, data_bundle = _dirac_stage(run, entry)
            if "spectra" in stages or "anomaly" in stages:
                run.stage = "spectra"
                eigs, cache_hit, mu2 = _spectra_stage(run, entry, op, store,
                                                      out_dir if write else None)
                if "anomaly" in stages:
                    run.stage = "anomaly"
                    _anomaly_stage(run, entry, op, eigs, mu2, data_bundle, geo)
        elif "anomaly" in stages:
            run.stage = "anomaly"
            _analytic_anomaly_stage(run, entry, geo)
        run.stage = None
    except ImmersionError as exc:
        failed_at = run.stage
        error = f"{type(exc).__name__}: {exc}"

    hard = [c for c in run.checks if not c.informational]
    status = "error" if failed_at else ("pass" if all(c.passed for c in hard) else "fail")
    report = {"schema_version": io.REPORT_SCHEMA_VERSION, "surface": entry.name,
              "kind": entry.kind, "units": UNITS, "version": __version__,
              "config": config.as_dict(), "status": status, "failed_at": failed_at,
              "error": error, **run.sections,
              "checks": [c.as_dict() for c in run.checks]}
    if run.fields is not None:
        report["fields"] = run.fields
    report = _jsonable(report)
    io.validate_report(report)
    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "report.json"
        path.write_text(json.dumps(report, indent=1, sort_keys=True))
        run.paths.append(path)
    return PipelineResult(report, run.paths, cache_hit, eigs)


def _geometry_stage(run: _Run, entry, out_dir):
    cfg = run.config
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NonConformalChartWarning)
        bundle, chart = catalog.geometry(entry, cfg.n, cfg.orientation, cfg.params, cfg.route_tol)
    conformal_warning = any(issubclass(w.category, NonConformalChartWarning) for w in caught)
    fn = functionals(bundle)
    sec = {"n": bundle.domain.n1, "functionals": fn.as_dict(),
           "route_discrepancies": bundle.route_discrepancies(),
           "conformal_warning": conformal_warning}
    for key, exp in entry.expected.items():
        if key in ("W", "A", "chi") and not cfg.params:
            got = fn.as_dict()[key]
            tol = 1e-6 * max(1.0, abs(exp))
            run.add(_le(f"geometry.{key}_matches_closed_form", abs(got - exp), tol))
    if chart is not None:
        conf = float(np.max(np.abs(bundle.conformality_residual) / bundle.rho))
        sec["conformality_residual"] = conf
        run.add(_le("geometry.conformality_residual", conf, 1e-8,
                    informational=bundle.domain.n1 < 64))
        kk = dirac.kkwe_check(chart)
        sec["kkwe"] = kk
        run.add(_le("dirac.kkwe_residual", kk["max_residual"], 1e-6,
                    informational=not chart.analytic))
    run.sections["geometry"] = sec
    if out_dir is not None:
        q1, q2 = (chart.q1, chart.q2) if chart is not None else bundle.domain.grid()
        cols = {"q1": q1, "q2": q2, "rho": bundle.rho, "H": bundle.H, "K": bundle.K,
                "p": bundle.p}
        if bundle.k1 is not None:
            cols.update(k1=bundle.k1, k2=bundle.k2)
        run.paths.append(io.write_columns_csv(out_dir / "geometry.csv", cols))
    return {"bundle": bundle, "chart": chart, "functionals": fn}


def _dirac_stage(run: _Run, entry):
    cfg = run.config
    grid = cfg.spectrum_n or (cfg.n if entry.kind == "abstract-data" else None)
    domain, rho, p = catalog.operator_data(entry, grid, cfg.orientation, cfg.params)
    bc = (cfg.bc, cfg.bc)
    op = dirac.assemble_dirac(rho, p, domain, bc)
    data = bundle_from_data(rho, p, domain, entry.name)
    herm = dirac.hermiticity_residual(rho, domain, bc=bc)
    rng = np.random.default_rng(12345)
    sq = dirac.assemble_dirac_squared(rho, p, data.K, domain, bc)
    worst = 0.0
    gap = 0.0
    for _ in range(4):
        psi = dirac.SpinorField(spectral.band_limited_field(domain, rng),
                                spectral.band_limited_field(domain, rng))
        if cfg.bc == "antiperiodic":
            break
        v = psi.vector()
        lhs = -(op.matrix @ (op.matrix @ v))
        worst = max(worst, float(np.linalg.norm(lhs - sq @ v) / np.linalg.norm(lhs)))
        gap = max(gap, dirac.dirac_action(psi, rho, p, domain, bc).relative_gap)
    run.add(_le("dirac.kinetic_hermiticity", herm, 1e-10),
            # coarse immersion data is not band-limited, so products alias
            _le("dirac.square_identity", worst, 1e-8, informational=entry.kind == "immersion"),
            _le("dirac.action_routes", gap, 1e-10))
    run.sections["dirac"] = {"n": domain.n1, "dim": op.dim, "bc": list(bc),
                             "operator_hash": op.content_hash(),
                             "hermiticity_residual": herm, "square_residual": worst,
                             "action_route_gap": gap}
    return op, data


def _spectra_stage(run: _Run, entry, op, store, out_dir):
    cfg = run.config
    eigs, hit = eigensystem_cached(op, store)
    floor = spectra.mu_floor(eigs)
    if cfg.mu2 is not None:
        mu2 = cfg.mu2
    elif entry.mu2 is not None and entry.mu2 > floor:
        mu2 = entry.mu2
    else:
        mu2 = floor + 1.0
    reg = spectra.RegulatorConfig(mu2, tuple(cfg.s_values))
    reg.check(eigs)
    hk = spectra.heat_kernel_diag(eigs, mu2, reg.taus)
    run.add(_le("spectra.biorthogonality", eigs.biorthogonality_residual, 1e-8),
            _le("spectra.completeness", eigs.completeness_residual, 1e-6),
            _le("spectra.heat_trace_consistency", hk.trace_residual, 1e-8))
    z0 = spectra.zeta_function(eigs, mu2, 0.0)[0]
    run.add(_le("spectra.zeta0_equals_dimension", abs(z0 - op.dim), 1e-8 * op.dim))
    taus = spectra.mellin_taus()
    trace = spectra.heat_trace(eigs, mu2, taus)
    zetas = {}
    for s in reg.s_values:
        direct = spectra.zeta_function(eigs, mu2, s)[0]
        try:
            mel = spectra.zeta_via_mellin(taus, trace, s)
            rel = abs(mel.value - direct) / abs(direct)
            zetas[str(s)] = {"direct": direct, "mellin": mel.value, "mellin_error": mel.error,
                             "relative_gap": rel}
        except ImmersionError as exc:
            rel = np.inf
            zetas[str(s)] = {"direct": direct, "error": str(exc)}
        run.add(_le(f"spectra.mellin_vs_direct_s{s:g}", rel, 1e-6))
    lam = eigs.eigenvalues
    run.sections["spectrum"] = {
        "dim": int(lam.size), "mu2": mu2, "mu_floor": floor,
        "clusters": len(eigs.clusters), "max_abs_lambda": float(np.max(np.abs(lam))),
        "biorthogonality_residual": eigs.biorthogonality_residual,
        "completeness_residual": eigs.completeness_residual,
        "zeta": zetas, "heat_trace": {"tau": reg.taus, "trace": hk.trace.real}}
    if out_dir is not None:
        order = np.lexsort((lam.imag, lam.real))
        run.paths.append(io.write_columns_csv(out_dir / "spectrum.csv", {
            "re_lambda": lam.real[order], "im_lambda": lam.imag[order],
            "re_lambda2": (lam ** 2).real[order], "im_lambda2": (lam ** 2).imag[order]}))
        run.paths.append(io.write_columns_csv(out_dir / "heat_trace.csv", {
            "tau": reg.taus, "trace_re": hk.trace.real, "trace_im": hk.trace.imag}))
    return eigs, hit, mu2


def _anomaly_stage(run: _Run, entry, op, eigs, mu2, data, geo):
    cfg = run.config
    window = anomaly.select_fit_window(eigs, mu2)
    if cfg.tau_min is not None or cfg.tau_max is not None:
        window = anomaly.FitWindow(cfg.tau_min or window.tau_min, cfg.tau_max or window.tau_max)
    fit = anomaly.fit_heat_kernel(eigs, mu2, window, cfg.fit_degree)
    fn = functionals(data)
    w = data.domain.weights()
    rep = anomaly.anomaly_relation(data.rho, data.p, data.K, w, mu2, fn.willmore, fn.area,
                                   fn.euler, fit=fit, domain=data.domain,
                                   lap_log_rho=data.lap_log_rho)
    target = (fn.willmore - mu2 * fn.area) / (2 * np.pi) - anomaly.CURVATURE_COEFFICIENT * fn.euler
    int_gap = abs(rep.integrated_analytic - target) / max(abs(target), 1e-300)
    hk_form = anomaly.e1_analytic(data.rho, data.p, data.K, mu2, lap_log_rho=data.lap_log_rho,
                                  coefficient=anomaly.HEAT_KERNEL_CURVATURE_COEFFICIENT)
    rel_hk = anomaly.relative_l2(fit.e1, hk_form.field, w * data.rho)
    pred = rep.identity.predicted_action
    denom = max(abs(pred), mu2 * fn.area / (2 * np.pi))
    info = not entry.fit_resolved
    run.add(Check("anomaly.e0_in_range", float(np.max(np.abs(fit.e0 - 2))), 0.2,
                  bool(np.all((fit.e0 >= 1.8) & (fit.e0 <= 2.2))), info),
            Check("anomaly.fit_reliable", None, None, fit.reliable, info),
            _le("anomaly.integrated_analytic_identity", int_gap, 1e-6),
            _le("anomaly.e1_fit_vs_closed_form", rep.e1_relative_l2, 0.05, info),
            _le("anomaly.e1_fit_vs_heat_kernel_form", rel_hk, 0.05, informational=True),
            _le("anomaly.integrated_identity", abs(rep.identity.residual) / denom, 0.05, info))
    geo_fn = geo["functionals"]
    run.sections["anomaly"] = {
        **rep.summary(), "spectral_grid_functionals": fn.as_dict(),
        "geometry_grid_functionals": geo_fn.as_dict(),
        "curvature_coefficient": anomaly.CURVATURE_COEFFICIENT,
        "e1_relative_l2_heat_kernel_form": rel_hk,
        "predicted_action_geometry_grid": anomaly.predicted_action(
            geo_fn.willmore, geo_fn.area, geo_fn.euler, mu2)}
    q1, q2 = data.domain.grid()
    resid = fit.e1 - rep.e1_analytic
    run.fields = {"columns": ["q1", "q2", "e1_fit", "e1_analytic", "residual"],
                  "rows": np.column_stack([q1.ravel(), q2.ravel(), fit.e1.ravel(),
                                           rep.e1_analytic.ravel(), resid.ravel()])}
    if run.out_dir is not None:
        run.paths.append(io.write_columns_csv(run.out_dir / "anomaly.csv", {
            "q1": q1, "q2": q2, "e1_fit": fit.e1, "e1_analytic": rep.e1_analytic,
            "residual": resid}))


def _analytic_anomaly_stage(run: _Run, entry, geo):
    """Closed-form side only, for charts without a periodic operator."""
    cfg = run.config
    bundle, fn = geo["bundle"], geo["functionals"]
    mu2 = cfg.mu2 if cfg.mu2 is not None else (entry.mu2 or 0.0)
    rep = anomaly.anomaly_relation(bundle.rho, bundle.p, bundle.K, bundle.weights, mu2,
                                   fn.willmore, fn.area, fn.euler,
                                   lap_log_rho=bundle.lap_log_rho, form_tol=cfg.route_tol)
    run.add(_le("anomaly.integrated_analytic_identity",
                abs(rep.identity.residual) / max(abs(rep.identity.predicted_action), 1.0), 1e-6))
    run.sections["anomaly"] = {**rep.summary(), "analytic_only": True,
                               "curvature_coefficient": anomaly.CURVATURE_COEFFICIENT}
