"""Scenario runners: each experiment writes CSV tables, SVG plots and a summary table.

Every summary row that quotes a theoretical rate also names where the rate
comes from.  ``Bundle.envelopes_ok`` is false as soon as one asserted
envelope or bound is violated.
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import io
from ..dynamics import (
    TrajectoryRecord,
    coupled_dissipation_run,
    particle_solve,
    pde_solve,
    pde_step,
)
from ..measures import moments, sample_from_grid
from ..potentials import PotentialSpec, builtin
from ..stationary import (
    StationaryState,
    coercivity_diagnostics,
    fixed_point_solve,
    minimizer_audit,
)
from ..transport import (
    hyp_u_constant,
    translation_probe,
    wasserstein2_empirical,
    wj_constant,
    wj_probe,
)
from .config import Scenario
from .fitting import (
    RateReport,
    default_window,
    dissipation_check,
    envelope_violations,
    exponential_envelope,
    fit_exponential,
    fit_polynomial_envelope,
    perturbed_wj_rate,
    polynomial_constant,
    polynomial_envelope,
    strictly_decreasing,
)
from .plotting import emit_plot

log = logging.getLogger(__name__)

DEFAULT_FLOOR = 1e-6
DEFAULT_SLACK = 0.02
RATE_TOL = 0.05

SUMMARY_HEADER = ["scenario", "item", "quantity", "fitted", "r_squared", "theory", "provenance", "holds"]

PROV_CONVEX = "alpha+beta contraction of convex V and W"
PROV_WJ = "explicit WJ constant from uniform convexity of W outside a ball and the log-density bound M"
PROV_PERTURBED = "(C - alpha) exp(-2K) + alpha + beta rate for a bounded non-convex interaction"
PROV_POLY = "polynomial contraction constant from the eps-optimized degenerate convexity bound"
PROV_ALPHA = "alpha-convexity of V gives J >= alpha W2^2"


@dataclass
class Bundle:
    scenario: str
    out_dir: Path
    files: list[Path] = field(default_factory=list)
    summary: list[list] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)

    @property
    def envelopes_ok(self) -> bool:
        return not self.violations

    def row(self, item, quantity, fitted, r2=None, theory=None, provenance="", holds=None):
        self.summary.append([
            self.scenario, item, quantity, _cell(fitted), _cell(r2), _cell(theory), provenance,
            "" if holds is None else ("yes" if holds else "no"),
        ])
        if holds is False:
            self.violations.append(f"{item}: {quantity}")

    def path(self, suffix: str) -> Path:
        p = self.out_dir / f"{self.scenario}_{suffix}"
        self.files.append(p)
        return p

    def write_summary(self) -> Path:
        p = self.path("summary.csv")
        io.write_table(p, SUMMARY_HEADER, self.summary)
        return p


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return f"{float(v):.6g}"


# --------------------------------------------------------------------------
# theory references


def k_outside_at(W_name: str, W_params: tuple, R: float) -> tuple[float, float] | None:
    """Uniform-convexity-outside data of a catalog interaction rebuilt for radius R."""
    if W_name == "cubic_abs":
        return builtin("cubic_abs", (R,)).k_outside
    if W_name == "power":
        return builtin("power", (W_params[0], R)).k_outside
    return None


def wj_reference(s: Scenario, state: StationaryState) -> tuple[float, float] | None:
    """Largest explicit WJ constant over the scenario's radii, with the radius used."""
    best = None
    for R in s.opt_floats("wj_R", [0.5, 1.0, 2.0]):
        ko = k_outside_at(s.W_name, s.W_params, R)
        if ko is None:
            return None
        C = wj_constant(ko[0], R, hyp_u_constant(state.mu, R), 1)
        if best is None or C > best[0]:
            best = (C, R)
    return best


def convergence_reference(s: Scenario, state: StationaryState | None) -> tuple[float, str] | None:
    V, W = s.V, s.W
    if W.sup_abs is not None and W.alpha < 0 and not V.is_zero:
        C = s.opt_float("wj_C", V.alpha if V.alpha > 0 else None)
        if C is None:
            return None
        return perturbed_wj_rate(C, V.alpha, W.alpha, W.sup_abs), PROV_PERTURBED
    if V.is_zero and state is not None:
        ref = wj_reference(s, state)
        if ref is not None:
            return ref[0], f"{PROV_WJ} (best R = {ref[1]:g})"
    beta = W.alpha if V.is_zero else min(W.alpha, 0.0)
    if V.alpha + beta > 0:
        return V.alpha + beta, PROV_CONVEX
    return None


# --------------------------------------------------------------------------
# shared pieces


def _pmap(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _stationary(s: Scenario, mean: float | None = None) -> StationaryState:
    pin = None
    if s.V.is_zero:
        pin = s.opt_float("pin_mean", 0.0) if mean is None else mean
    return fixed_point_solve(
        s.V, s.W, s.grid, pin_mean=pin,
        damping=s.opt_float("damping", 0.5),
        tol=s.opt_float("tol", 1e-11),
        max_iter=s.opt_int("max_iter", 20000),
    )


def _conservation_rows(b: Bundle, item: str, rec: TrajectoryRecord, V: PotentialSpec):
    b.row(item, "max mass error", rec.max_mass_error, holds=rec.max_mass_error < 1e-12)
    if V.is_zero:
        b.row(item, "max centre-of-mass drift", rec.max_mean_drift)
    b.row(item, "max per-step free-energy increase", rec.max_free_energy_increase,
          holds=rec.max_free_energy_increase < 1e-8)
    if rec.flags:
        b.row(item, "flags", " ".join(rec.flags))


def _fit(b: Bundle, s: Scenario, t, v) -> RateReport | None:
    floor = s.opt_float("floor", DEFAULT_FLOOR)
    window = default_window(t, v, floor, s.opt_float("transient", 0.1))
    try:
        return fit_exponential(t, v, window)
    except ValueError as e:
        log.warning("rate fit skipped: %s", e)
        return None


# --------------------------------------------------------------------------
# experiments


def run_converge(s: Scenario, out: Path, threads: int = 1) -> Bundle:
    b = Bundle(s.id, out)
    V, W = s.V, s.W
    mus = s.measures()
    floor = s.opt_float("floor", DEFAULT_FLOOR)
    slack = s.opt_float("slack", DEFAULT_SLACK)

    # V = 0 keeps the centre of mass, so each datum has its own limit
    states = {}
    for mu in mus:
        key = round(moments(mu)[0], 12) if V.is_zero else None
        if key not in states:
            states[key] = _stationary(s, key)

    def cell(k):
        mu = mus[k]
        key = round(moments(mu)[0], 12) if V.is_zero else None
        return pde_solve(mu, V, W, s.solver, ref=states[key].mu)

    recs = _pmap(cell, list(range(len(mus))), threads)
    first_state = next(iter(states.values()))
    ref = convergence_reference(s, first_state)
    fits = []
    for d, rec in zip(s.initial_data, recs):
        io.write_trajectory(rec, b.path(f"traj_{_slug(d.label)}.csv"))
        rep = _fit(b, s, rec.times, rec.w2_to_ref)
        fits.append(rep)
        theory, prov = ref if ref is not None else (None, "")
        if rep is None:
            b.row(d.label, "fitted rate", "no fit window", holds=False)
            continue
        holds = rep.lambda_fit > 0
        if theory is not None:
            holds = holds and rep.lambda_fit >= theory * (1 - RATE_TOL)
        b.row(d.label, "fitted rate", rep.lambda_fit, rep.r_squared, theory, prov, holds)
        _conservation_rows(b, d.label, rec, V)

    ok_fits = [f for f in fits if f is not None]
    if ok_fits:
        c_fit = min(f.lambda_fit for f in ok_fits)
        bad = 0
        for rec in recs:
            t = np.asarray(rec.times)
            w = np.asarray(rec.w2_to_ref)
            bad += envelope_violations(w, exponential_envelope(w[0], c_fit, t), slack, w >= floor).size
        b.row("all", "common envelope exp(-C_fit t) violations", bad, theory=c_fit,
              provenance="C_fit = min fitted rate", holds=(c_fit > 0 and bad == 0))
    emit_plot([(d.label, r.times, r.w2_to_ref) for d, r in zip(s.initial_data, recs)], "semilog_y",
              b.path("w2.svg"), title=f"{s.id}: W2 to the stationary state", ylabel="W2")
    for key, st in states.items():
        io.write_stationary(st, b.path(f"stationary_{'ref' if key is None else _slug(f'{key:g}')}.csv"))
    b.write_summary()
    return b


def run_contract_pair(s: Scenario, out: Path, threads: int = 1) -> Bundle:
    b = Bundle(s.id, out)
    V, W = s.V, s.W
    mu0, nu0 = s.measures()
    floor = s.opt_float("floor", DEFAULT_FLOOR)
    slack = s.opt_float("slack", DEFAULT_SLACK)
    rec = coupled_dissipation_run(mu0, nu0, V, W, s.solver)
    io.write_trajectory(rec, b.path("pair.csv"))
    t = np.asarray(rec.times)
    w = np.sqrt(np.maximum(np.asarray(rec.w2_pair_sq), 0.0))
    item = " vs ".join(d.label for d in s.initial_data)

    rep = _fit(b, s, t, w)
    series = [("W2(mu_t, nu_t)", t, w)]
    same_mean = abs(moments(mu0)[0] - moments(nu0)[0]) < 1e-9
    rate = V.alpha + W.alpha
    if rate > 0 and (W.alpha <= 0 or same_mean):
        env = exponential_envelope(w[0], rate, t)
        bad = envelope_violations(w, env, slack, w >= floor)
        b.row(item, "pair rate", rep.lambda_fit if rep else "no fit window", rep.r_squared if rep else None,
              rate, PROV_CONVEX, None)
        b.row(item, "envelope exp(-(alpha+beta) t) violations", bad.size, theory=rate,
              provenance=PROV_CONVEX, holds=bad.size == 0)
        series.append(("exp envelope", t, env))
    elif rep is not None:
        b.row(item, "pair rate", rep.lambda_fit, rep.r_squared)

    p = s.opt_float("p")
    if p is not None:
        c = polynomial_constant(p, s.opt_float("c_deg", 0.5))
        env = polynomial_envelope(w[0], p, c, t)
        bad = envelope_violations(w, env, s.opt_float("poly_slack", 0.05))
        c_fit, _ = fit_polynomial_envelope(t, w, p, c)
        b.row(item, "polynomial envelope violations", bad.size, theory=c, provenance=PROV_POLY,
              holds=bad.size == 0)
        b.row(item, "largest envelope constant c_fit", c_fit, theory=c, provenance=PROV_POLY)
        series.append(("polynomial envelope", t, env))

    ok, lhs = dissipation_check(t, rec.w2_pair_sq, rec.j)
    frac = float(np.mean(ok))
    flagged = [f"{t[k + 1]:.6g}" for k in np.flatnonzero(~ok)]
    b.row(item, "dissipation inequality pass fraction", frac, theory=0.95,
          provenance="dW2^2/dt <= -2J between two solutions", holds=frac >= 0.95)
    if flagged:
        b.row(item, "dissipation steps flagged as discretization", " ".join(flagged))
    _conservation_rows(b, item, rec, V)
    emit_plot(series, "semilog_y", b.path("pair.svg"), title=f"{s.id}: pair distance", ylabel="W2")
    b.write_summary()
    return b


def run_wj_probe(s: Scenario, out: Path, threads: int = 1) -> Bundle:
    b = Bundle(s.id, out)
    V, W = s.V, s.W
    state = _stationary(s)
    n = s.opt_int("n_probes", 1000)
    seed = s.seeds[0]
    res = wj_probe(state.mu, V, W, n, seed, preserve_mean=V.is_zero)
    io.write_probes(res.rows, b.path("probes.csv"))
    io.write_map(res.argmin, state.mu.centers, b.path("argmin_map.csv"))
    io.write_stationary(state, b.path("stationary.csv"))
    theory, prov = None, ""
    if V.is_zero:
        R = s.opt_float("R", 1.0)
        ko = k_outside_at(s.W_name, s.W_params, R)
        if ko is not None:
            M = hyp_u_constant(state.mu, R)
            theory = wj_constant(ko[0], R, M, 1)
            prov = f"{PROV_WJ} (R = {R:g}, M = {M:.6g})"
    elif W.is_zero and V.alpha > 0:
        theory, prov = V.alpha, PROV_ALPHA
    holds = None if theory is None else res.min_ratio >= theory
    b.row(f"{n} probes, seed {seed}", "min J / W2^2", res.min_ratio, theory=theory, provenance=prov, holds=holds)
    if theory is not None:
        below = sum(1 for r in res.rows if r.ratio < theory)
        b.row(f"{n} probes, seed {seed}", "probes below the constant", below, theory=0, provenance=prov,
              holds=below == 0)
    b.write_summary()
    return b


def run_counterexample(s: Scenario, out: Path, threads: int = 1) -> Bundle:
    b = Bundle(s.id, out)
    mu = s.measures()[0]
    ms = s.opt_floats("m_values")
    r = translation_probe(mu, s.V, ms)
    io.write_table(b.path("ratios.csv"), ["M", "r", "r_times_M"], [(m, x, x * m) for m, x in zip(ms, r)])
    dec = strictly_decreasing(r)
    b.row(s.initial_data[0].label, "r(M) strictly decreasing", "yes" if dec else "no",
          provenance="no uniform WJ constant for a linearly growing V", holds=dec)
    b.row(s.initial_data[0].label, f"r({ms[-1]:g})", r[-1])
    b.row(s.initial_data[0].label, f"r({ms[-1]:g}) * {ms[-1]:g}", r[-1] * ms[-1])
    emit_plot([("r(M)", ms, r)], "semilog_y", b.path("ratios.svg"), xlabel="M", ylabel="r(M)",
              title=f"{s.id}: J / W2^2 along translations")
    b.write_summary()
    return b


def run_stationary_only(s: Scenario, out: Path, threads: int = 1) -> Bundle:
    b = Bundle(s.id, out)
    V, W = s.V, s.W
    state = _stationary(s)
    io.write_stationary(state, b.path("stationary.csv"))
    item = f"V={V.describe()} W={W.describe()}"
    tol = s.opt_float("residual_tol", 1e-6)
    b.row(item, "residual_inf", state.residual_inf, theory=tol, provenance="Gibbs identity", holds=state.residual_inf < tol)
    b.row(item, "lambda", state.lambda_mult)
    dt = s.solver.dt
    moved = pde_step(state.mu, V, W, dt)
    l1 = float(np.sum(np.abs(moved.density - state.mu.density)) * state.mu.dx)
    b.row(item, "L1 move after one step / dt", l1 / dt, theory=1e-6, provenance="fixed point of the flow",
          holds=l1 < 1e-6 * dt)
    n = s.opt_int("n_perturbations", 200)
    audit = minimizer_audit(state, V, W, n, s.seeds[0])
    b.row(item, f"free energy minimal over {n} probes", "yes" if audit else "no",
          provenance="stationary states minimize the free energy", holds=audit)
    case = s.options.get("coercivity_case")
    if case:
        rep = coercivity_diagnostics(V, W, case)
        b.row(item, f"coercivity case {case}", "holds" if rep.holds else "not met",
              provenance=f"a={rep.a} a'={rep.a_prime} b={rep.b} b'={rep.b_prime} {rep.notes}".strip())
    emit_plot([("stationary density", state.mu.centers, state.mu.density)], "linear", b.path("stationary.svg"),
              xlabel="x", ylabel="density", title=f"{s.id}: stationary state")
    b.write_summary()
    return b


def run_simulate(s: Scenario, out: Path, threads: int = 1) -> Bundle:
    """Plain forward runs; with ``particles = N1 N2 ...`` also particle runs per seed."""
    b = Bundle(s.id, out)
    V, W = s.V, s.W
    mus = s.measures()
    recs = _pmap(lambda mu: pde_solve(mu, V, W, s.solver), mus, threads)
    for d, rec in zip(s.initial_data, recs):
        io.write_trajectory(rec, b.path(f"traj_{_slug(d.label)}.csv"))
        io.write_grid(rec.final, b.path(f"final_{_slug(d.label)}.csv"))
        _conservation_rows(b, d.label, rec, V)
    sizes = s.opt_floats("particles")
    if sizes:
        pdt = s.opt_float("particle_dt", s.solver.dt)
        rows = []
        for d, mu, rec in zip(s.initial_data, mus, recs):
            ref = rec.final.normalize()
            means = []
            for N in (int(x) for x in sizes):
                cells = [(N, seed) for seed in s.seeds]

                def run(cell, mu=mu, ref=ref):
                    N, seed = cell
                    p = particle_solve(sample_from_grid(mu, N, seed), V, W, pdt, s.solver.t_end, seed=seed)
                    return wasserstein2_empirical(p, ref)

                dists = _pmap(run, cells, threads)
                rows += [(d.label, N, seed, dist) for (N, seed), dist in zip(cells, dists)]
                means.append(float(np.mean(dists)))
                b.row(d.label, f"mean W2(particles, grid) at t={s.solver.t_end:g}, N={N}", means[-1])
            if len(means) > 1:
                b.row(d.label, "particle error decreases with N", "yes" if strictly_decreasing(means) else "no",
                      holds=strictly_decreasing(means))
        io.write_table(b.path("particles.csv"), ["datum", "n", "seed", "w2"], rows)
    emit_plot([(d.label, r.times, r.free_energy) for d, r in zip(s.initial_data, recs)], "linear",
              b.path("free_energy.svg"), ylabel="free energy", title=f"{s.id}: free energy")
    b.write_summary()
    return b


RUNNERS = {
    "converge": run_converge,
    "contract_pair": run_contract_pair,
    "wj_probe": run_wj_probe,
    "counterexample": run_counterexample,
    "stationary_only": run_stationary_only,
}


def run_scenario(s: Scenario, out, threads: int = 1, mode: str | None = None) -> Bundle:
    """Run the scenario's experiment (or ``mode``, e.g. ``"simulate"``) into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    runner = run_simulate if mode == "simulate" else RUNNERS[mode or s.experiment]
    try:
        return runner(s, out, threads)
    except Exception:
        (out / f"{s.id}_FAILED").write_text("run aborted; files present are partial\n")
        raise


def _slug(text: str) -> str:
    keep = [c if c.isalnum() or c in ".-" else "_" for c in text]
    return "".join(keep).strip("_").replace("__", "_")


def summary_table(out) -> list[list[str]]:
    """All summary rows found under ``out`` (sorted by file name)."""
    rows = []
    for p in sorted(Path(out).glob("*_summary.csv")):
        with open(p, newline="") as fh:
            r = list(csv.reader(fh))
        rows += r[1:]
    return rows


def envelope_status(rows) -> bool:
    return all(r[-1] != "no" for r in rows)

