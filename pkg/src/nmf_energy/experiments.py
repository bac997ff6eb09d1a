"""Configuration-driven experiment drivers.

Four pipelines, each generate -> formulate -> solve -> compare -> report:

* ``I``   -- square continuous planted cases; sum-constrained quartic solver
  (best-of-N runs by relative error) against the HALS baseline, per size and
  relaxation schedule.
* ``II``  -- 4x8 continuous cases (set A raw, set B planted, rank 3); the
  fusion pipeline (median-energy solver run warm-starting HALS) against plain
  NNDSVDA HALS, with win counts, binomial p-values and percentage-decrease
  histograms.
* ``III`` -- square integer planted cases (8 levels); discrete quartic solver
  vs the bit-encoded QUBO (simulated annealing) vs the budget-matched integer
  heuristic vs the exact oracle where enumerable, best-of-N comparison plus a
  variable-count table.
* ``IV``  -- 4x8 integer cases (sets A/B); median-run comparison of the
  discrete quartic solver against the heuristic under both integer
  objectives, with matched logical budgets.

Every case draws its RNG stream from (seed, case id), so reports are
reproducible byte for byte in logical-budget mode regardless of scheduling.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .classic import NndsvdaInit, fusion_pipeline, hals_fit
from .integer_solver import (ABS_DIFF, EVALS_PER_SECOND, SQ_DIFF, SearchBudget,
                             brute_force_optimum, heuristic_search)
from .matrices import (ContinuousDomain, IntegerDomain, error_metrics,
                       generate_case)
from .quartic import build_quartic_model
from .qubo import BitEncoding, build_binary_quartic, decode_bits, quadratize
from .solvers import (MAX_TOTAL_LEVELS, SCHEDULES, QuboSolveParams,
                      solve_continuous, solve_discrete, solve_qubo)
from .stats import (compare_deltas, comparison_summary, fit_curve,
                    histogram_bins, median_mad, median_select_index)

__all__ = ["ExperimentConfig", "ExperimentReport", "run_experiment",
           "default_config", "aggregate_records", "build_comparisons",
           "CASE_COLUMNS", "COMPARISON_COLUMNS"]

EXPERIMENTS = ("I", "II", "III", "IV")

CASE_COLUMNS = ["experiment", "set", "size", "case_id", "method", "schedule",
                "objective", "status", "epsilon", "delta", "energy", "evals",
                "elapsed"]

COMPARISON_COLUMNS = ["experiment", "set", "size", "schedule", "objective",
                      "baseline", "challenger", "n_b", "n_w", "ties", "skipped",
                      "p_value", "median_improvement", "mad_improvement",
                      "best_improvement", "worst_change"]


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    cases: int = 100
    sizes: tuple = (1, 2, 3, 4)          # experiments I and III
    dims: tuple = (4, 3, 8)              # (n, p, m) for experiments II and IV
    schedules: tuple = (1,)
    runs_per_case: int = 10
    seed: int = 0
    levels: int = 8                      # integer experiments
    max_quartic_vars: int = 39
    max_discrete_levels: int = MAX_TOTAL_LEVELS
    sa_sweeps: int = 64
    sa_restarts: int = 8
    hals_max_iter: int = 500
    hals_tol: float = 1e-6
    histogram_width: float = 10.0
    wallclock: bool = False
    output_dir: Optional[str] = None

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.cases < 1 or self.runs_per_case < 1:
            raise ValueError("cases and runs_per_case must be positive")
        if not self.schedules or any(s not in SCHEDULES for s in self.schedules):
            raise ValueError(f"schedules must be a non-empty subset of {sorted(SCHEDULES)}")
        if self.experiment in ("I", "III"):
            for s in self.sizes:
                vars_needed = 2 * s * s + 1
                if vars_needed > self.max_quartic_vars:
                    raise ValueError(
                        f"size {s} needs {vars_needed} variables, over the "
                        f"{self.max_quartic_vars}-variable budget")
        else:
            n, p, m = self.dims
            vars_needed = p * (n + m) + 1
            if vars_needed > self.max_quartic_vars:
                raise ValueError(
                    f"dims {self.dims} need {vars_needed} variables, over the "
                    f"{self.max_quartic_vars}-variable budget")
        if self.experiment in ("III", "IV") and self.levels < 2:
            raise ValueError("integer experiments need at least 2 levels")
        return self

    def to_json(self) -> dict:
        return {
            "experiment": self.experiment,
            "cases": self.cases,
            "sizes": list(self.sizes),
            "dims": list(self.dims),
            "schedules": list(self.schedules),
            "runs_per_case": self.runs_per_case,
            "seed": self.seed,
            "levels": self.levels,
            "max_quartic_vars": self.max_quartic_vars,
            "max_discrete_levels": self.max_discrete_levels,
            "sa_sweeps": self.sa_sweeps,
            "sa_restarts": self.sa_restarts,
            "hals_max_iter": self.hals_max_iter,
            "hals_tol": self.hals_tol,
            "histogram_width": self.histogram_width,
            "wallclock": self.wallclock,
            "output_dir": self.output_dir,
        }

    @staticmethod
    def from_json(doc: dict) -> "ExperimentConfig":
        base = default_config(doc["experiment"])
        fields = {k: v for k, v in doc.items() if k != "experiment"}
        for key in ("sizes", "dims", "schedules"):
            if key in fields:
                fields[key] = tuple(fields[key])
        return replace(base, **fields).validate()

    def config_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def default_config(experiment: str, **overrides) -> ExperimentConfig:
    """Spec defaults per experiment: schedules (I: 1-3, II: 1-2, III/IV: 1)."""
    schedules = {"I": (1, 2, 3), "II": (1, 2), "III": (1,), "IV": (1,)}
    if experiment not in schedules:
        raise ValueError(f"unknown experiment {experiment!r}")
    cfg = ExperimentConfig(experiment=experiment, schedules=schedules[experiment])
    return replace(cfg, **overrides).validate() if overrides else cfg.validate()


def derive_seed(*parts) -> int:
    material = ":".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(material, digest_size=8).digest(), "little") >> 1


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    records: list
    aggregates: dict
    comparisons: list
    histograms: dict
    provenance: dict = field(default_factory=dict)

    def save(self, out_dir) -> dict:
        """Write cases.csv, aggregates.json, comparisons.csv, histograms/*.csv
        and provenance.json; returns the written paths."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {}

        cases_path = out / "cases.csv"
        with open(cases_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CASE_COLUMNS)
            writer.writeheader()
            for row in self.records:
                writer.writerow({k: _fmt(row.get(k)) for k in CASE_COLUMNS})
        paths["cases"] = cases_path

        agg_path = out / "aggregates.json"
        with open(agg_path, "w") as fh:
            json.dump(self.aggregates, fh, sort_keys=True, indent=1)
        paths["aggregates"] = agg_path

        comp_path = out / "comparisons.csv"
        with open(comp_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=COMPARISON_COLUMNS)
            writer.writeheader()
            for row in self.comparisons:
                writer.writerow({k: _fmt(row.get(k)) for k in COMPARISON_COLUMNS})
        paths["comparisons"] = comp_path

        hist_dir = out / "histograms"
        hist_dir.mkdir(exist_ok=True)
        for name in sorted(self.histograms):
            hist_path = hist_dir / f"{name}.csv"
            with open(hist_path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["lo", "hi", "count"])
                for lo, hi, count in self.histograms[name]:
                    writer.writerow([_fmt(lo), _fmt(hi), count])
            paths[f"histogram:{name}"] = hist_path

        prov_path = out / "provenance.json"
        with open(prov_path, "w") as fh:
            json.dump(self.provenance, fh, sort_keys=True, indent=1)
        paths["provenance"] = prov_path
        return paths


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def _row(config, **kw) -> dict:
    row = {k: None for k in CASE_COLUMNS}
    row["experiment"] = config.experiment
    row.update(kw)
    return row


def _logical_elapsed(evals: int) -> float:
    return evals / EVALS_PER_SECOND


def _finish_row(row, config, evals, wall_elapsed):
    row["evals"] = evals
    row["elapsed"] = wall_elapsed if config.wallclock else _logical_elapsed(evals)
    return row


def _thread_pool_size() -> int:
    env = os.environ.get("NMF_ENERGY_THREADS")
    if env:
        return max(1, int(env))
    return 1


def _map_cases(fn, case_indices):
    workers = _thread_pool_size()
    if workers == 1:
        return [fn(i) for i in case_indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, case_indices))


def _delta_of(inst, factors) -> tuple[float, float]:
    return error_metrics(inst.V, factors.product())


# --------------------------------------------------------------------------
# Experiment I: square continuous, quartic solver vs HALS
# --------------------------------------------------------------------------

def _run_experiment_i(config: ExperimentConfig) -> list:
    records = []
    for size in config.sizes:
        def one_case(i, size=size):
            case_id = f"I-{size}x{size}-{i:03d}"
            inst = generate_case("continuous_planted", size, size, size,
                                 ContinuousDomain(), seed=config.seed, case_id=case_id)
            model = build_quartic_model(inst)
            rows = []
            for sched_id in config.schedules:
                best = None
                for r in range(config.runs_per_case):
                    run = solve_continuous(
                        model, SCHEDULES[sched_id],
                        seed=derive_seed(config.seed, case_id, sched_id, r),
                        max_vars=config.max_quartic_vars)
                    eps, delta = _delta_of(inst, model.decode(run.best_x))
                    if best is None or delta < best[0]:
                        best = (delta, eps, run)
                delta, eps, run = best
                rows.append(_finish_row(
                    _row(config, set="", size=size, case_id=case_id,
                         method="energy-continuous", schedule=sched_id, objective="",
                         status="ok", epsilon=eps, delta=delta,
                         energy=run.best_energy),
                    config, run.evals, run.elapsed))
            fit = hals_fit(inst.V, inst.p, NndsvdaInit(),
                           max_iter=config.hals_max_iter, tol=config.hals_tol)
            eps, delta = _delta_of(inst, fit.factors)
            rows.append(_row(config, set="", size=size, case_id=case_id,
                             method="hals", schedule="", objective="", status="ok",
                             epsilon=eps, delta=delta, energy=eps ** 2,
                             evals=fit.iterations, elapsed=None))
            return rows

        for rows in _map_cases(one_case, range(config.cases)):
            records.extend(rows)
    return records


# --------------------------------------------------------------------------
# Experiment II: rectangular continuous, fusion vs HALS
# --------------------------------------------------------------------------

def _run_experiment_ii(config: ExperimentConfig) -> list:
    n, p, m = config.dims
    records = []
    for set_name, kind in (("A", "continuous_raw"), ("B", "continuous_planted")):
        def one_case(i, set_name=set_name, kind=kind):
            case_id = f"II-{set_name}-{i:03d}"
            inst = generate_case(kind, n, m, p, ContinuousDomain(),
                                 seed=config.seed, case_id=case_id)
            model = build_quartic_model(inst)
            rows = []
            fit = hals_fit(inst.V, p, NndsvdaInit(),
                           max_iter=config.hals_max_iter, tol=config.hals_tol)
            eps, delta = _delta_of(inst, fit.factors)
            rows.append(_row(config, set=set_name, size="", case_id=case_id,
                             method="hals", schedule="", objective="", status="ok",
                             epsilon=eps, delta=delta, energy=eps ** 2,
                             evals=fit.iterations, elapsed=None))
            for sched_id in config.schedules:
                runs = [solve_continuous(
                            model, SCHEDULES[sched_id],
                            seed=derive_seed(config.seed, case_id, sched_id, r),
                            max_vars=config.max_quartic_vars)
                        for r in range(config.runs_per_case)]
                picked = []
                fusion = fusion_pipeline(inst, model.layout, runs,
                                         max_iter=config.hals_max_iter,
                                         tol=config.hals_tol, selected_index=picked)
                sel = runs[picked[0]]
                eps_raw, delta_raw = _delta_of(inst, model.decode(sel.best_x))
                rows.append(_finish_row(
                    _row(config, set=set_name, size="", case_id=case_id,
                         method="energy-continuous", schedule=sched_id, objective="",
                         status="ok", epsilon=eps_raw, delta=delta_raw,
                         energy=sel.best_energy),
                    config, sel.evals, sel.elapsed))
                eps_f, delta_f = _delta_of(inst, fusion.factors)
                total_evals = sum(r.evals for r in runs)
                rows.append(_finish_row(
                    _row(config, set=set_name, size="", case_id=case_id,
                         method="fusion", schedule=sched_id, objective="",
                         status="ok", epsilon=eps_f, delta=delta_f,
                         energy=eps_f ** 2),
                    config, total_evals, sum(r.elapsed for r in runs)))
            return rows

        for rows in _map_cases(one_case, range(config.cases)):
            records.extend(rows)
    return records


# --------------------------------------------------------------------------
# Experiment III: square integer, discrete quartic vs QUBO vs heuristic/oracle
# --------------------------------------------------------------------------

def _run_experiment_iii(config: ExperimentConfig) -> list:
    records = []
    encoding = BitEncoding.for_levels(config.levels)
    for size in config.sizes:
        num_entries = 2 * size * size
        oracle_feasible = config.levels ** num_entries <= 10_000_000

        def one_case(i, size=size, num_entries=num_entries,
                     oracle_feasible=oracle_feasible):
            case_id = f"III-{size}x{size}-{i:03d}"
            inst = generate_case("integer_planted", size, size, size,
                                 IntegerDomain(config.levels),
                                 seed=config.seed, case_id=case_id)
            model = build_quartic_model(inst)
            rows = []
            sched_id = config.schedules[0]
            levels_vec = [config.levels] * model.layout.num_entries + [1]

            disc_runs = []
            best = None
            for r in range(config.runs_per_case):
                run = solve_discrete(model.poly, levels_vec, SCHEDULES[sched_id],
                                     seed=derive_seed(config.seed, case_id, "disc", r),
                                     max_total_levels=config.max_discrete_levels)
                disc_runs.append(run)
                eps, delta = _delta_of(inst, model.decode(run.best_x))
                if best is None or delta < best[0]:
                    best = (delta, eps, run)
            delta, eps, run = best
            rows.append(_finish_row(
                _row(config, set="", size=size, case_id=case_id,
                     method="energy-discrete", schedule=sched_id, objective="",
                     status="ok", epsilon=eps, delta=delta, energy=run.best_energy),
                config, run.evals, run.elapsed))

            # Bit-encoded QUBO route; two levels per binary variable, skipped
            # (and recorded) when the collective level budget is exceeded.
            bin_poly, registry = build_binary_quartic(inst, encoding)
            qm = quadratize(bin_poly, registry=registry)
            qubo_levels = 2 * qm.num_vars
            if qubo_levels > config.max_discrete_levels:
                rows.append(_row(config, set="", size=size, case_id=case_id,
                                 method="qubo-sa", schedule=sched_id, objective="",
                                 status="budget_skipped", epsilon=None, delta=None,
                                 energy=None, evals=qm.num_vars, elapsed=None))
            else:
                best_q = None
                for r in range(config.runs_per_case):
                    qrun = solve_qubo(qm, QuboSolveParams(sweeps=config.sa_sweeps,
                                                          restarts=config.sa_restarts),
                                      seed=derive_seed(config.seed, case_id, "qubo", r))
                    factors = decode_bits(qrun.best_x, encoding, model.layout,
                                          qm.registry)
                    eps_q, delta_q = _delta_of(inst, factors)
                    if best_q is None or delta_q < best_q[0]:
                        best_q = (delta_q, eps_q, qrun)
                delta_q, eps_q, qrun = best_q
                rows.append(_finish_row(
                    _row(config, set="", size=size, case_id=case_id,
                         method="qubo-sa", schedule=sched_id, objective="",
                         status="ok", epsilon=eps_q, delta=delta_q,
                         energy=qrun.best_energy),
                    config, qrun.evals, qrun.elapsed))

            # Heuristic with the evaluation budget matched run-for-run to the
            # discrete solver; both integer objectives.
            for objective, obj_name in ((ABS_DIFF, "abs"), (SQ_DIFF, "sq")):
                best_h = None
                total_evals = 0
                for r, dr in enumerate(disc_runs):
                    budget = SearchBudget(
                        time_limit=max(dr.elapsed, 1e-9) if config.wallclock else 1.0,
                        seed=derive_seed(config.seed, case_id, "heur", obj_name, r),
                        restarts=4,
                        mode="wallclock" if config.wallclock else "logical",
                        evals=None if config.wallclock else dr.evals)
                    factors, _ = heuristic_search(inst, objective, budget)
                    total_evals += dr.evals
                    eps_h, delta_h = _delta_of(inst, factors)
                    if best_h is None or delta_h < best_h[0]:
                        best_h = (delta_h, eps_h)
                delta_h, eps_h = best_h
                rows.append(_finish_row(
                    _row(config, set="", size=size, case_id=case_id,
                         method="heuristic", schedule="", objective=obj_name,
                         status="ok", epsilon=eps_h, delta=delta_h, energy=eps_h ** 2),
                    config, total_evals // len(disc_runs), None))

            if oracle_feasible:
                for objective, obj_name in ((ABS_DIFF, "abs"), (SQ_DIFF, "sq")):
                    factors, _ = brute_force_optimum(inst, objective)
                    eps_o, delta_o = _delta_of(inst, factors)
                    rows.append(_row(config, set="", size=size, case_id=case_id,
                                     method="oracle", schedule="", objective=obj_name,
                                     status="ok", epsilon=eps_o, delta=delta_o,
                                     energy=eps_o ** 2,
                                     evals=config.levels ** num_entries, elapsed=None))
            return rows

        for rows in _map_cases(one_case, range(config.cases)):
            records.extend(rows)
    return records


def _variable_count_table(config: ExperimentConfig) -> list:
    """Closed-form and measured variable counts per size (experiment III)."""
    encoding = BitEncoding.for_levels(config.levels)
    table = []
    for size in config.sizes:
        inst = generate_case("integer_planted", size, size, size,
                             IntegerDomain(config.levels),
                             seed=config.seed, case_id=f"III-vars-{size}")
        bin_poly, registry = build_binary_quartic(inst, encoding)
        qm = quadratize(bin_poly, registry=registry)
        entries = 2 * size * size
        table.append({
            "size": size,
            "quartic_vars": entries + 1,
            "qubo_main_bits": encoding.bits_per_entry * entries,
            "qubo_aux_vars": qm.num_auxiliaries,
            "qubo_total_vars": qm.num_vars,
            "qubo_total_levels": 2 * qm.num_vars,
            "heuristic_vars": entries,
        })
    return table


# --------------------------------------------------------------------------
# Experiment IV: rectangular integer, median-run discrete solver vs heuristic
# --------------------------------------------------------------------------

def _run_experiment_iv(config: ExperimentConfig) -> list:
    n, p, m = config.dims
    records = []
    for set_name, kind in (("A", "integer_raw"), ("B", "integer_planted")):
        def one_case(i, set_name=set_name, kind=kind):
            case_id = f"IV-{set_name}-{i:03d}"
            inst = generate_case(kind, n, m, p, IntegerDomain(config.levels),
                                 seed=config.seed, case_id=case_id)
            model = build_quartic_model(inst)
            rows = []
            sched_id = config.schedules[0]
            levels_vec = [config.levels] * model.layout.num_entries + [1]

            disc_runs = []
            deltas = []
            for r in range(config.runs_per_case):
                run = solve_discrete(model.poly, levels_vec, SCHEDULES[sched_id],
                                     seed=derive_seed(config.seed, case_id, "disc", r),
                                     max_total_levels=config.max_discrete_levels)
                disc_runs.append(run)
                deltas.append(_delta_of(inst, model.decode(run.best_x))[1])
            pick = median_select_index(deltas)
            run = disc_runs[pick]
            eps, delta = _delta_of(inst, model.decode(run.best_x))
            rows.append(_finish_row(
                _row(config, set=set_name, size="", case_id=case_id,
                     method="energy-discrete", schedule=sched_id, objective="",
                     status="ok", epsilon=eps, delta=delta, energy=run.best_energy),
                config, run.evals, run.elapsed))

            for objective, obj_name in ((ABS_DIFF, "abs"), (SQ_DIFF, "sq")):
                h_deltas = []
                h_eps = []
                for r, dr in enumerate(disc_runs):
                    budget = SearchBudget(
                        time_limit=max(dr.elapsed, 1e-9) if config.wallclock else 1.0,
                        seed=derive_seed(config.seed, case_id, "heur", obj_name, r),
                        restarts=4,
                        mode="wallclock" if config.wallclock else "logical",
                        evals=None if config.wallclock else dr.evals)
                    factors, _ = heuristic_search(inst, objective, budget)
                    e, d = _delta_of(inst, factors)
                    h_eps.append(e)
                    h_deltas.append(d)
                hp = median_select_index(h_deltas)
                rows.append(_finish_row(
                    _row(config, set=set_name, size="", case_id=case_id,
                         method="heuristic", schedule="", objective=obj_name,
                         status="ok", epsilon=h_eps[hp], delta=h_deltas[hp],
                         energy=h_eps[hp] ** 2),
                    config, disc_runs[hp].evals, None))
            return rows

        for rows in _map_cases(one_case, range(config.cases)):
            records.extend(rows)
    return records


# --------------------------------------------------------------------------
# Aggregation, comparisons, reporting
# --------------------------------------------------------------------------

def _group_key(row) -> tuple:
    return (row["set"] or "", row["size"] or "", row["method"],
            row["schedule"] or "", row["objective"] or "")

def aggregate_records(records: list) -> dict:
    """Medians/MADs per (set, size, method, schedule, objective) group,
    recomputable from the per-case records alone."""
    groups: dict = {}
    skipped: dict = {}
    for row in records:
        key = _group_key(row)
        if row["status"] != "ok":
            skipped[key] = skipped.get(key, 0) + 1
            continue
        groups.setdefault(key, []).append(row)
    out = []
    for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
        rows = groups[key]
        deltas = [r["delta"] for r in rows]
        med, mad = median_mad(deltas)
        elapsed = [r["elapsed"] for r in rows if r["elapsed"] is not None]
        entry = {
            "set": key[0], "size": key[1], "method": key[2],
            "schedule": key[3], "objective": key[4],
            "count": len(rows),
            "skipped": skipped.get(key, 0),
            "median_delta": med,
            "mad_delta": mad,
        }
        if elapsed:
            emed, emad = median_mad(elapsed)
            entry["median_elapsed"] = emed
            entry["mad_elapsed"] = emad
        out.append(entry)
    for key in sorted(set(skipped) - set(groups), key=lambda k: tuple(str(x) for x in k)):
        out.append({"set": key[0], "size": key[1], "method": key[2],
                    "schedule": key[3], "objective": key[4],
                    "count": 0, "skipped": skipped[key],
                    "median_delta": None, "mad_delta": None})
    return {"groups": out}


def _curve_fits(aggregates: dict) -> list:
    """Plot-sidecar fits over per-size medians (experiments I and III)."""
    series: dict = {}
    for g in aggregates["groups"]:
        if g["size"] == "" or g["median_delta"] is None:
            continue
        key = (g["method"], g["schedule"], g["objective"])
        series.setdefault(key, []).append((float(g["size"]), g))
    fits = []
    for key in sorted(series, key=lambda k: tuple(str(x) for x in k)):
        pts = sorted(series[key])
        if len(pts) < 2:
            continue
        entry = {"method": key[0], "schedule": key[1], "objective": key[2]}
        delta_pts = [(x, g["median_delta"]) for x, g in pts]
        try:
            a, b, resid = fit_curve("log", delta_pts)
            entry["delta_log_fit"] = {"a": a, "b": b, "residual": resid}
        except ValueError:
            pass
        elapsed_pts = [(x, g["median_elapsed"]) for x, g in pts
                       if g.get("median_elapsed")]
        if len(elapsed_pts) >= 2 and all(y > 0 for _, y in elapsed_pts):
            a, b, resid = fit_curve("exp", elapsed_pts)
            entry["elapsed_exp_fit"] = {"a": a, "b": b, "residual": resid}
        fits.append(entry)
    return fits


def _pair_rows(records, base_filter, new_filter) -> list:
    """(baseline row, challenger row) per case_id where both are present."""
    base_by_case = {r["case_id"]: r for r in records if base_filter(r)}
    out = []
    for row in records:
        if new_filter(row) and row["case_id"] in base_by_case:
            out.append((base_by_case[row["case_id"]], row))
    return sorted(out, key=lambda pair: pair[0]["case_id"])


def _comparison_row(experiment, pairs, baseline, challenger, *, set_="",
                    size="", schedule="", objective="") -> dict:
    recs = []
    skipped = 0
    for brow, nrow in pairs:
        if brow["status"] != "ok" or nrow["status"] != "ok":
            skipped += 1
            continue
        recs.append(compare_deltas(brow["case_id"], brow["delta"], nrow["delta"]))
    summary = comparison_summary(recs)
    return {
        "experiment": experiment, "set": set_, "size": size,
        "schedule": schedule, "objective": objective,
        "baseline": baseline, "challenger": challenger,
        "n_b": summary["n_b"], "n_w": summary["n_w"], "ties": summary["ties"],
        "skipped": skipped,
        "p_value": summary["p_value"],
        "median_improvement": summary["median_improvement"],
        "mad_improvement": summary["mad_improvement"],
        "best_improvement": summary["best_improvement"],
        "worst_change": summary["worst_change"],
    }


def _winning_improvements(pairs) -> list:
    """Percentage decreases over the cases the challenger won (histogram input)."""
    values = []
    for brow, nrow in pairs:
        if brow["status"] != "ok" or nrow["status"] != "ok":
            continue
        if brow["delta"] and nrow["delta"] < brow["delta"]:
            values.append(100.0 * (brow["delta"] - nrow["delta"]) / brow["delta"])
    return values


def build_comparisons(records: list, config: ExperimentConfig) -> tuple[list, dict]:
    """Comparison tables (challenger vs baseline) and win histograms."""
    exp = config.experiment
    comparisons: list = []
    histograms: dict = {}
    if exp == "I":
        for size in config.sizes:
            for sched in config.schedules:
                pairs = _pair_rows(
                    records,
                    lambda r, s=size: r["method"] == "hals" and r["size"] == s,
                    lambda r, s=size, sc=sched: (r["method"] == "energy-continuous"
                                                 and r["size"] == s
                                                 and r["schedule"] == sc))
                comparisons.append(_comparison_row(
                    exp, pairs, "hals", "energy-continuous", size=size,
                    schedule=sched))
    elif exp == "II":
        for set_name in ("A", "B"):
            for sched in config.schedules:
                pairs = _pair_rows(
                    records,
                    lambda r, s=set_name: r["method"] == "hals" and r["set"] == s,
                    lambda r, s=set_name, sc=sched: (r["method"] == "fusion"
                                                     and r["set"] == s
                                                     and r["schedule"] == sc))
                comparisons.append(_comparison_row(
                    exp, pairs, "hals", "fusion", set_=set_name, schedule=sched))
                histograms[f"II-{set_name}-sched{sched}"] = histogram_bins(
                    _winning_improvements(pairs), config.histogram_width)                     if _winning_improvements(pairs) else []
    elif exp == "III":
        for size in config.sizes:
            for obj in ("abs", "sq"):
                pairs = _pair_rows(
                    records,
                    lambda r, s=size, o=obj: (r["method"] == "heuristic"
                                              and r["objective"] == o
                                              and r["size"] == s),
                    lambda r, s=size: (r["method"] == "energy-discrete"
                                       and r["size"] == s))
                comparisons.append(_comparison_row(
                    exp, pairs, f"heuristic[{obj}]", "energy-discrete",
                    size=size, objective=obj))
            pairs = _pair_rows(
                records,
                lambda r, s=size: r["method"] == "qubo-sa" and r["size"] == s,
                lambda r, s=size: r["method"] == "energy-discrete" and r["size"] == s)
            comparisons.append(_comparison_row(
                exp, pairs, "qubo-sa", "energy-discrete", size=size))
    else:  # IV
        for set_name in ("A", "B"):
            for obj in ("abs", "sq"):
                pairs = _pair_rows(
                    records,
                    lambda r, s=set_name, o=obj: (r["method"] == "heuristic"
                                                  and r["objective"] == o
                                                  and r["set"] == s),
                    lambda r, s=set_name: (r["method"] == "energy-discrete"
                                           and r["set"] == s))
                comparisons.append(_comparison_row(
                    exp, pairs, f"heuristic[{obj}]", "energy-discrete",
                    set_=set_name, objective=obj))
                histograms[f"IV-{set_name}-{obj}"] = histogram_bins(
                    _winning_improvements(pairs), config.histogram_width)                     if _winning_improvements(pairs) else []
    return comparisons, histograms


_DRIVERS = {
    "I": _run_experiment_i,
    "II": _run_experiment_ii,
    "III": _run_experiment_iii,
    "IV": _run_experiment_iv,
}


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    config.validate()
    records = _DRIVERS[config.experiment](config)
    aggregates = aggregate_records(records)
    if config.experiment in ("I", "III"):
        aggregates["curve_fits"] = _curve_fits(aggregates)
    if config.experiment == "III":
        aggregates["variable_counts"] = _variable_count_table(config)
    comparisons, histograms = build_comparisons(records, config)
    provenance = {
        "tool": "nmf-energy",
        "version": __version__,
        "config": config.to_json(),
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "budget_mode": "wallclock" if config.wallclock else "logical",
        "evals_per_second": EVALS_PER_SECOND,
    }
    report = ExperimentReport(config=config, records=records,
                              aggregates=aggregates, comparisons=comparisons,
                              histograms=histograms, provenance=provenance)
    if config.output_dir:
        report.save(config.output_dir)
    return report
