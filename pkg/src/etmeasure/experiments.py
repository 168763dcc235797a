"""Config-driven experiments producing in-memory artifacts.

Each runner returns ``(report, files)`` where ``files`` maps artifact names to
text.  Nothing touches the disk here, which keeps failed runs artifact-free.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from typing import Any

import numpy as np

from . import __version__
from . import bounds as bd
from . import conditions as cd
from . import grids as gr
from . import lattice as lt
from . import measure as ms
from . import models as md
from .artifacts import csv_text, json_text, svg_plot
from .config import MODEL_KINDS, SWEEPABLE, ExperimentConfig
from .errors import ConfigFileError, ConfigurationError, ToleranceError
from .qcore import SX, SY, SZ

RICHARDSON_TOL = 1e-6
AUDIT_TOL = -1e-9


def _meta(cfg: ExperimentConfig, seed: int, kind: str) -> dict:
    return {"library": "etmeasure", "version": __version__, "config_sha256": cfg.sha256,
            "seed": seed, "experiment": kind, "units": cfg.get("experiment", "units", "natural")}


def _scalar_params(params: dict) -> dict:
    return {k: v for k, v in params.items() if isinstance(v, (int, float, str, bool))}


def build_model(model_cfg: dict[str, Any], seed: int = 0, grid_n: int | None = None,
                dt: float | None = None):
    """Instantiate a builtin model from a [model] section."""
    p = dict(model_cfg)
    kind = p.pop("kind")
    if kind not in MODEL_KINDS:
        raise ConfigurationError(f"unknown model kind {kind!r}")
    if kind == "stern_gerlach_2d":
        if grid_n:
            p["grid_nx"] = p["grid_nz"] = grid_n
        m = md.stern_gerlach_2d(**p)
    elif kind == "chiral":
        if grid_n:
            p["grid_n"] = grid_n
        m = md.chiral_model(**p)
    elif kind == "gaussian":
        if grid_n:
            p["grid_n"] = grid_n
        coupling = p.pop("coupling", "x")
        width = p.pop("v_width", None)
        n = p.pop("grid_n", None)
        pp = md.GaussianPacketParams(**p)
        b = SX if coupling == "x" else md.SIGMA_Z
        prof = gr.Bump(0.0, width if width else 2 * pp.sigma, 1.0)
        m = md.gaussian_model(pp, b, prof, grid_n=n)
    elif kind == "standard":
        if grid_n:
            p["grid_n"] = grid_n
        m = md.standard_model(**p)
    elif kind == "free":
        m = md.free_model(**p)
    elif kind == "controlled_shift":
        m = md.controlled_shift_model(**p)
    elif kind == "rotation_meter":
        m = md.rotation_meter_model(**p)
    else:
        p.setdefault("seed", seed)
        m = md.random_finite_model(**p)
    if dt is not None and m.kind == "grid":
        m = m.with_dt(dt)
    return m


def _grid_monitors(m, tau: float, method: str) -> dict:
    out: dict[str, Any] = {}
    if m.kind != "grid" or tau is None:
        return out
    resolved = m._method(method)
    leak = m.leakage(tau, resolved)
    out["leakage"] = leak
    if leak > gr.LEAKAGE_LIMIT:
        raise ToleranceError(f"boundary leakage {leak:.3g} exceeds {gr.LEAKAGE_LIMIT:g}; enlarge the grid")
    if resolved == "split":
        err = m.richardson_error(tau)
        out["richardson_error"] = err
        out["dt"] = m.step_size()
        if err > RICHARDSON_TOL:
            raise ToleranceError(f"time-step error estimate {err:.3g} exceeds {RICHARDSON_TOL:g}; reduce --dt")
    return out


def gaussian_observables(m, samples: int = 11) -> list[dict]:
    """Grid moments and leakage against the closed forms for s in [0, T] after preparation."""
    p: md.GaussianPacketParams = m.params["packet"]
    rows = []
    for s in np.linspace(0.0, p.T, samples):
        psi = m.free_state(s - p.T)
        mean, sd = gr.position_moments(psi)
        leak = gr.interval_probability(psi, 0.0)
        rows.append({
            "s": float(s), "mean_grid": mean, "mean_formula": float(p.mean_position(s)),
            "spread_grid": sd, "spread_formula": float(p.spread_formula(s)),
            "spread_exact": float(p.spread(s)), "leakage": leak,
            "chebyshev": float(p.chebyshev_bound(s)),
            "chebyshev_per_time": float(p.chebyshev_bound(s, per_time=True)),
        })
    return rows


def run_measure(cfg: ExperimentConfig, seed: int, grid_n: int | None = None,
                dt: float | None = None) -> tuple[dict, dict[str, str]]:
    proto = cfg.sections.get("protocol", {})
    dt = dt if dt is not None else proto.get("dt")
    m = build_model(cfg.model, seed, grid_n, dt)
    method = proto.get("method", "auto")
    tau = proto.get("tau") or m.tau
    horizon = proto.get("horizon") or tau or 1.0
    nsamp = proto.get("condition_samples", 50)
    svg = cfg.get("output", "svg", True)
    files: dict[str, str] = {}
    report: dict[str, Any] = {"meta": _meta(cfg, seed, "measure"),
                              "model": {"name": m.name, "kind": m.kind, "tau": tau,
                                        "params": _scalar_params(m.params)},
                              "notes": list(m.notes)}
    report["monitors"] = _grid_monitors(m, tau, method)

    c1 = cd.condition1_report(m, tau or 1.0, nsamp)
    conds: dict[str, Any] = {"condition1_residual": c1.residual,
                             "condition1_support_certified": c1.support_certified,
                             "condition2_strength": cd.condition2_strength(m, horizon, nsamp, method)}
    if tau:
        c3 = cd.condition3_check(m, m.t0 + tau, horizon, nsamp, method)
        conds.update(condition3_holds=c3.holds, condition3_residual=c3.residual)
    report["conditions"] = conds

    if m.pvm is not None and m.meter is not None and tau:
        run = ms.run_measurement(m, tau, proto.get("p_samples", 50), method, proto.get("pair", (0, 1)))
        report["measurement"] = run.to_dict()
        files["probabilities.csv"] = csv_text(
            ["input"] + [f"P{n}" for n in range(run.probabilities.shape[1])],
            [[lab, *row] for lab, row in zip(run.inputs, run.probabilities)])
        if run.p_curve is not None:
            files["p_curve.csv"] = csv_text(["t", "p", "cos2_bound"], _p_rows(m, run.p_curve))
            if svg:
                files["p_curve.svg"] = _p_svg(m, run.p_curve)
        audit = bd.audit_model(m, tau, cfg.get("audit", "alphas", bd.DEFAULT_ALPHAS), method, tau)
        report["audit"] = audit.to_dict()
        files["margins.csv"] = csv_text(["inequality", "lhs", "rhs", "margin", "verdict", "vacuous"],
                                        audit.margin_rows())
        bad = [e for e in audit.entries if e.verdict == "fails" and e.margin < AUDIT_TOL]
        if bad:
            raise ToleranceError("proven inequality violated beyond tolerance: "
                                 + ", ".join(f"{e.name} (margin {e.margin:.3g})" for e in bad))
    elif m.kind == "grid" and "packet" in m.params:
        rows = gaussian_observables(m)
        report["observables"] = rows
        files["observables.csv"] = csv_text(list(rows[0]), [list(r.values()) for r in rows])
    else:
        psi = md.KET[0] if m.d_s == 2 else np.eye(m.d_s)[0].astype(complex)
        curve = ms.p_curve(m, psi, tau or math.pi / 2, proto.get("p_samples", 50), method)
        files["p_curve.csv"] = csv_text(["t", "p", "cos2_bound"], _p_rows(m, curve))
        if svg:
            files["p_curve.svg"] = _p_svg(m, curve)
    files["report.json"] = json_text(report)
    return report, files


def _p_rows(m, curve: ms.PCurve):
    vn = m.v_norm if m.kind == "finite" else None
    for t, p in zip(curve.times, curve.p):
        bound = math.cos(vn * t) ** 2 if vn is not None and vn * t <= math.pi / 2 else None
        yield [t, p, bound]


def _p_svg(m, curve: ms.PCurve) -> str:
    series = {"p(t)": list(curve.p)}
    if m.kind == "finite":
        vn = m.v_norm
        series["cos^2(|V| t)"] = [math.cos(vn * t) ** 2 if vn * t <= math.pi / 2 else 0.0
                                  for t in curve.times]
    return svg_plot(list(curve.times), series, "t", "p", f"overlap p(t): {m.name}")


# sweeps --------------------------------------------------------------------------

def _sweep_point(args) -> dict:
    model_cfg, parameter, value, seed, grid_n, dt, method = args
    mc = dict(model_cfg)
    caster = MODEL_KINDS[mc["kind"]][parameter]
    mc[parameter] = caster(repr(value) if caster is not int else str(int(value)))
    m = build_model(mc, seed, grid_n, dt)
    row: dict[str, Any] = {parameter: value}
    if m.kind == "grid" and "packet" in m.params:
        p: md.GaussianPacketParams = m.params["packet"]
        psi = m.free_state(0.0)
        row.update(leakage=gr.interval_probability(psi, 0.0),
                   chebyshev=float(p.chebyshev_bound(p.T)),
                   chebyshev_per_time=float(p.chebyshev_bound(p.T, per_time=True)))
        return row
    tau = m.tau
    dh = m.apparatus_energy_fluctuation()
    switching = cd.condition1_report(m, tau, 20).holds
    row.update(tau=tau, delta_h_a=dh, product=tau * dh, condition1=switching,
               margin_main=bd.audit_main(tau, dh).margin if switching else None)
    if m.pvm is not None and m.meter is not None:
        row["p_error"] = ms.worst_case_error(m, tau, method).value
    if m.kind == "finite":
        row["v_norm"] = m.v_norm
        row["margin_interaction"] = bd.audit_interaction(tau, m.v_norm)[0].margin
    return row


def run_sweep(cfg: ExperimentConfig, seed: int, parameter: str | None = None, values=None,
              grid_n: int | None = None, dt: float | None = None,
              workers: int | None = None) -> tuple[dict, dict[str, str]]:
    sw = cfg.sections.get("sweep", {})
    parameter = parameter or sw.get("parameter")
    values = list(values) if values is not None else list(sw.get("values", ()))
    workers = workers or sw.get("workers", 1)
    kind = cfg.model.get("kind")
    if not parameter:
        raise ConfigFileError("sweep needs a parameter")
    if parameter not in SWEEPABLE.get(kind, ()):
        raise ConfigFileError(f"{parameter!r} is not sweepable for model {kind!r}; "
                              f"choose from {', '.join(SWEEPABLE.get(kind, ())) or 'nothing'}")
    if not values:
        raise ConfigFileError("sweep needs at least one value")
    method = cfg.get("protocol", "method", "auto")
    args = [(cfg.model, parameter, float(v), seed, grid_n, dt, method) for v in values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_point, args))
    else:
        rows = [_sweep_point(a) for a in args]
    header = list(rows[0])
    report: dict[str, Any] = {"meta": _meta(cfg, seed, "sweep"), "parameter": parameter, "rows": rows}
    files = {"sweep.csv": csv_text(header, [[r.get(h) for h in header] for r in rows])}
    x = [r[parameter] for r in rows]
    if "product" in rows[0]:
        prods = [r["product"] for r in rows]
        report["product_relative_spread"] = (max(prods) - min(prods)) / max(abs(max(prods)), 1e-300)
        if cfg.get("output", "svg", True):
            files["sweep.svg"] = svg_plot(x, {"tau * dH_A": prods}, parameter, "tau * dH_A",
                                          f"product vs {parameter}", hline=(math.pi / 4, "pi/4"),
                                          logx=min(x) > 0)
    elif "leakage" in rows[0] and cfg.get("output", "svg", True):
        files["sweep.svg"] = svg_plot(x, {"leakage": [max(r["leakage"], 1e-300) for r in rows],
                                          "chebyshev": [r["chebyshev"] for r in rows]},
                                      parameter, "mass in x >= 0", f"leakage vs {parameter}", logy=True)
    files["report.json"] = json_text(report)
    return report, files


# audit tables ----------------------------------------------------------------------

AUDIT_COLUMNS = ("tau", "delta_h_a", "delta_alpha", "alpha", "v_norm", "n", "p_error", "eps", "delta_h_box")


def audit_rows(rows: list[dict[str, Any]]) -> list[dict[str, Any]]:
    """Evaluate every inequality whose inputs are present in each row."""
    if not rows:
        raise ConfigFileError("audit input has no rows")
    cols = set().union(*(r.keys() for r in rows))
    if not cols & set(AUDIT_COLUMNS):
        raise ConfigFileError(f"no applicable columns; expected any of {', '.join(AUDIT_COLUMNS)}")
    out = []
    for i, r in enumerate(rows):
        def has(*ks):
            return all(r.get(k) is not None for k in ks)
        entries = []
        if has("tau", "delta_h_a"):
            entries.append(bd.audit_main(r["tau"], r["delta_h_a"]))
            if has("n"):
                entries.append(bd.audit_n_outcomes(r["tau"], r["delta_h_a"], r["n"]))
            if has("p_error"):
                entries.append(bd.audit_error_tolerant(r["tau"], r["delta_h_a"], r["p_error"]))
        if has("tau", "delta_alpha", "alpha"):
            entries.append(bd.audit_width(r["tau"], r["delta_alpha"], r["alpha"]))
        if has("tau", "v_norm"):
            entries.extend(bd.audit_interaction(r["tau"], r["v_norm"], r.get("n") or 2))
        if has("tau", "delta_h_box", "eps"):
            entries.append(bd.audit_lattice(r["tau"], r["delta_h_box"], r["eps"]))
        out.append({"row": i, "entries": entries})
    return out


def run_audit_table(rows: list[dict[str, Any]], source_sha: str) -> tuple[dict, dict[str, str]]:
    evaluated = audit_rows(rows)
    report = {"meta": {"library": "etmeasure", "version": __version__, "config_sha256": source_sha,
                       "experiment": "audit"},
              "rows": [{"row": e["row"], "entries": [vars(x) for x in e["entries"]]} for e in evaluated]}
    csv_rows = [[e["row"], x.name, x.lhs, x.rhs, x.margin, x.verdict, x.vacuous, " | ".join(x.notes)]
                for e in evaluated for x in e["entries"]]
    files = {"audit.json": json_text(report),
             "margins.csv": csv_text(["row", "inequality", "lhs", "rhs", "margin", "verdict", "vacuous", "notes"],
                                     csv_rows)}
    return report, files


# probe, chain, spacetime -----------------------------------------------------------

def run_probe(cfg: ExperimentConfig, seed: int, overrides: dict | None = None) -> tuple[dict, dict[str, str]]:
    pc = {"d_s": 2, "d_a": 2, "trials": 100, "seed": seed, "grid_window": True, "workers": 1}
    pc.update(cfg.sections.get("probe", {}))
    pc.update({k: v for k, v in (overrides or {}).items() if v is not None})
    rep = cd.nogo_probe(pc["d_s"], pc["d_a"], pc["trials"], pc["seed"], pc["workers"])
    records = [vars(r) for r in rep.records]
    report: dict[str, Any] = {"meta": _meta(cfg, pc["seed"], "probe"), "d_s": pc["d_s"], "d_a": pc["d_a"],
                              "trials": pc["trials"], "counterexamples": len(rep.counterexamples),
                              "records": records}
    if pc["grid_window"]:
        rec = cd.probe_grid_window(md.chiral_model(grid_n=64))
        report["grid_window"] = vars(rec)
    header = ["trial", "family", "residual", "strength", "certified", "verdict", "commutant_dim"]
    files = {"probe.csv": csv_text(header, [[r[h] for h in header] for r in records]),
             "probe.json": json_text(report)}
    if rep.counterexamples:
        raise ToleranceError(f"{len(rep.counterexamples)} certified counterexample(s) to the no-go statement")
    return report, files


_OBSERVABLES = {"x": SX, "y": SY, "z": SZ}


def run_chain(cfg: ExperimentConfig, seed: int, overrides: dict | None = None) -> tuple[dict, dict[str, str]]:
    cc = {"L": 8, "J": 1.0, "seed": seed, "t": 1.0, "eps": 0.125, "tau": 1.0, "observable": "x",
          "samples": 50}
    cc.update(cfg.sections.get("chain", {}))
    cc.update({k: v for k, v in (overrides or {}).items() if v is not None})
    chain = lt.random_chain(cc["L"], cc["seed"], cc["J"])
    a = _OBSERVABLES[cc["observable"]]
    prof = lt.locality_profile(chain, a, cc["t"])
    v_lr = 4 * cc["J"]  # nominal reference velocity, plotting only
    rng = np.random.default_rng(cc["seed"] + 1)
    states = [lt.random_product_state(cc["L"], rng) for _ in range(cc["samples"])]
    med = [float(np.median([lt.box_energy_fluctuation(chain, (0, r), w) for w in states]))
           for r in range(cc["L"])]
    radius = next((r for r, e in enumerate(prof) if e <= cc["eps"]), cc["L"] - 1)
    entry = bd.audit_lattice(cc["tau"], med[radius], cc["eps"])
    report = {"meta": _meta(cfg, cc["seed"], "chain"), "chain": {k: cc[k] for k in ("L", "J", "t", "eps", "tau")},
              "locality_error": prof.tolist(), "median_delta_h_box": med, "box_radius": radius,
              "audit_lattice": vars(entry),
              "notes": ["the full finite chain stands in for infinite volume",
                        "no measurement model is coupled to the chain; only the ingredients are evaluated"]}
    rows = [[r, prof[r], med[r], math.exp(-(r - v_lr * cc["t"])) if r > v_lr * cc["t"] else 1.0]
            for r in range(cc["L"])]
    files = {"locality.csv": csv_text(["radius", "locality_error", "median_delta_h_box", "reference"], rows),
             "chain.json": json_text(report)}
    if cfg.get("output", "svg", True):
        files["locality.svg"] = svg_plot(list(range(cc["L"])), {"locality error": [max(e, 1e-17) for e in prof]},
                                         "box radius", "||alpha_t(A) - alpha_t^box(A)||",
                                         f"locality error, L={cc['L']}, t={cc['t']:g}", logy=True)
    return report, files


def run_spacetime(cfg: ExperimentConfig, seed: int) -> tuple[dict, dict[str, str]]:
    sc = cfg.sections.get("spacetime", {})
    if "R" not in sc or "tau" not in sc:
        raise ConfigFileError("[spacetime] needs R and tau")
    if cfg.get("experiment", "units", "natural") == "si":
        rep = bd.spacetime_heuristic(sc["R"], sc["tau"])
    else:
        rep = bd.spacetime_heuristic(sc["R"], sc["tau"], 1.0, 1.0, 1.0)
    report = {"meta": _meta(cfg, seed, "spacetime"), "spacetime": vars(rep),
              "combined_margin": rep.combined_margin, "small_tau_margin": rep.small_tau_margin}
    return report, {"report.json": json_text(report)}


def run_config(cfg: ExperimentConfig, seed: int | None = None, grid_n: int | None = None,
               dt: float | None = None) -> tuple[dict, dict[str, str]]:
    seed = cfg.get("experiment", "seed", 0) if seed is None else seed
    kind = cfg.kind
    if kind == "measure":
        return run_measure(cfg, seed, grid_n, dt)
    if kind == "probe":
        return run_probe(cfg, seed)
    if kind == "chain":
        return run_chain(cfg, seed)
    return run_spacetime(cfg, seed)
