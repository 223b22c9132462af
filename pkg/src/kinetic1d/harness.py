"""Experiment configuration, trajectory-parallel Monte Carlo runs and artifacts.

Every trajectory is a pure function of ``(params, n, master_seed, index)``,
results are gathered in index order, and the written files carry no
timestamps or host details, so reruns are byte-identical for any worker
count.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .decomposition import TheoryConstants, decompose, finite_n_term_std, theory_constants
from .environment import GapDistSpec, sample_environment
from .errors import ConfigError, InvalidInputError
from .exact import coupling_report, fixed_step_reference, simulate_exact
from .model import ModelParams
from .modified import simulate_modified
from .stats import ks_normal, summarize

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EXPERIMENTS = ("constants", "lln", "clt_position", "clt_velocity", "decompose", "couple", "oracle_check")
WORKERS_ENV = "KINETIC1D_WORKERS"

# -- configuration -------------------------------------------------------------

_GAP_ARGS = {
    "exponential": ("mean",),
    "uniform": ("lo", "hi"),
    "gamma": ("shape", "scale"),
    "constant": ("value",),
}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GapConfig(_Strict):
    kind: Literal["exponential", "uniform", "gamma", "constant"] = "exponential"
    mean: Optional[float] = None
    lo: Optional[float] = None
    hi: Optional[float] = None
    shape: Optional[float] = None
    scale: Optional[float] = None
    value: Optional[float] = None

    @model_validator(mode="after")
    def _check_args(self):
        if self.kind == "exponential" and self.mean is None:
            self.mean = 1.0
        names = _GAP_ARGS[self.kind]
        missing = [k for k in names if getattr(self, k) is None]
        if missing:
            raise ValueError(f"{self.kind} gaps need {', '.join(missing)}")
        extra = [k for k in ("mean", "lo", "hi", "shape", "scale", "value") if k not in names and getattr(self, k) is not None]
        if extra:
            raise ValueError(f"{self.kind} gaps take no {', '.join(extra)}")
        try:
            self.to_spec()
        except InvalidInputError as exc:
            raise ValueError(str(exc)) from None
        return self

    def to_spec(self) -> GapDistSpec:
        return GapDistSpec(self.kind, tuple(getattr(self, k) for k in _GAP_ARGS[self.kind]))


class ParamsConfig(_Strict):
    force: float = 1.0
    stick_prob: float = 0.5
    tracer_mass0: float = 2.0
    gap_dist: GapConfig = Field(default_factory=GapConfig)

    @field_validator("force")
    @classmethod
    def _force(cls, v):
        if not math.isfinite(v) or v < 0:
            raise ValueError("force must be finite and >= 0")
        return v

    @field_validator("stick_prob")
    @classmethod
    def _stick(cls, v):
        if not (0.0 < v <= 1.0):
            raise ValueError("stick_prob must be in (0,1]")
        return v

    @field_validator("tracer_mass0")
    @classmethod
    def _mass(cls, v):
        if not math.isfinite(v) or v <= 1.0:
            raise ValueError("tracer_mass0 must be > 1")
        return v

    def to_params(self) -> ModelParams:
        return ModelParams(self.force, self.stick_prob, self.gap_dist.to_spec(), self.tracer_mass0)


class Tolerances(_Strict):
    sigma_w: float = 0.05
    sigma_z: float = 0.10
    sigma_q_hat: float = 0.10
    lln_modified: float = 0.01
    lln_exact: float = 0.02
    identity_rel: float = 1e-8
    oracle_time: float = 1e-4
    tail_zero_fraction: float = 0.90


class ExperimentConfig(_Strict):
    experiment: Literal[EXPERIMENTS] = "constants"  # type: ignore[valid-type]
    params: ParamsConfig = Field(default_factory=ParamsConfig)
    n: int = Field(1000, ge=1)
    num_trajectories: int = Field(1, ge=1)
    master_seed: int = Field(0, ge=0, lt=2**64)
    output_dir: str = "out"
    workers: int = Field(1, ge=1)
    ks_alpha: float = Field(0.005, gt=0, lt=1)
    # smaller size for the two-scale comparisons of decompose/couple
    n_compare: Optional[int] = Field(None, ge=1)
    # which process clt_position samples: collision-indexed modified, or exact along t_i
    process: Literal["modified", "exact"] = "modified"
    # lln: size of the exact trajectory (defaults to n)
    n_exact: Optional[int] = Field(None, ge=1)
    oracle_dt: float = Field(1e-6, gt=0)
    # couple: first-contact index beyond which delta tails should vanish
    tail_from: int = Field(1000, ge=1)
    tolerances: Tolerances = Field(default_factory=Tolerances)

    @model_validator(mode="after")
    def _sizes(self):
        if self.n_compare is not None and self.n_compare >= self.n:
            raise ValueError("n_compare must be smaller than n")
        return self

    def echo(self) -> dict:
        """Resolved configuration without run-placement fields."""
        return self.model_dump(mode="json", exclude={"workers", "output_dir"})


def _format_loc(loc) -> str:
    parts = []
    for p in loc:
        if isinstance(p, int):
            parts[-1] = f"{parts[-1]}[{p}]" if parts else f"[{p}]"
        else:
            parts.append(str(p))
    return ".".join(parts)


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Validate a JSON config document; unknown keys are rejected.

    ``overrides`` replace top-level keys after parsing of the document.
    """
    try:
        doc = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    doc.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig.model_validate(doc)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            msg = err["msg"].removeprefix("Value error, ")
            lines.append(f"{_format_loc(err['loc'])}: {msg}")
        raise ConfigError("; ".join(lines)) from None


def resolve_workers(config: ExperimentConfig, cli_workers: Optional[int] = None) -> int:
    """CLI flag, then an explicit config value, then the environment variable."""
    if cli_workers is not None:
        return max(1, int(cli_workers))
    if "workers" in config.model_fields_set:
        return config.workers
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return config.workers


# -- per-trajectory work ------------------------------------------------------


@dataclass(frozen=True)
class _Job:
    experiment: str
    params: ModelParams
    n: int
    seed: int
    index: int
    n_compare: Optional[int] = None
    process: str = "modified"
    n_exact: Optional[int] = None
    oracle_dt: float = 1e-6
    tail_from: int = 1000


def _lln_row(job: _Job, consts: TheoryConstants) -> dict:
    n_exact = job.n_exact or job.n
    env = sample_environment(job.params, max(job.n, n_exact), job.seed, job.index)
    mod = simulate_modified(env.head(job.n), job.params)
    rec = simulate_exact(env, job.params, n_exact)
    return {"v_bar_n": float(mod.v_out[-1]), "v_exact_n": float(rec.v_after_contact[-1])}


def _clt_row(job: _Job, consts: TheoryConstants) -> dict:
    n, params = job.n, job.params
    v_l = consts.v_limit
    rn = math.sqrt(n)
    if job.process == "exact":
        env = sample_environment(params, n, job.seed, job.index)
        rec = simulate_exact(env, params, n)
        t_n = float(rec.first_contact_times[-1])
        s_n = float(env.positions[n - 1])
        return {
            "exact_position_fluct": (s_n - t_n * v_l) / math.sqrt(t_n),
            "exact_s_minus_tv": (s_n - t_n * v_l) / rn,
            "v_exact_fluct": rn * (float(rec.v_after_contact[-1]) - v_l),
            "recollisions": len(rec.recollisions),
        }
    env = sample_environment(params, n + 1, job.seed, job.index)
    mod = simulate_modified(env.head(n), params)
    row = {
        "s_minus_tv": (float(env.positions[n - 1]) - float(mod.t_bar[-1]) * v_l) / rn,
        "v_fluct": rn * (float(mod.v_out[-1]) - v_l),
    }
    if job.experiment == "clt_position":
        rep = decompose(env, params, n)
        row.update({"W3n": rep.W3n, "Z4n": rep.Z4n, "Gn": rep.Gn, "Hn": rep.Hn})
    return row


_DECOMP_FIELDS = (
    "lhs", "V1n", "V2n", "W3n", "W4n", "Z1n", "Z2n", "Z3n_prime", "Z3n_tilde",
    "Z4n", "Z5n", "Z6n", "Gn", "Hn", "riemann", "residual", "z1_cancellation",
)


def _decompose_row(job: _Job, consts: TheoryConstants) -> dict:
    env = sample_environment(job.params, job.n + 1, job.seed, job.index)
    row = {}
    sizes = [job.n] if job.n_compare is None else [job.n_compare, job.n]
    for size in sizes:
        rep = decompose(env, job.params, size)
        suffix = "" if size == job.n else "_small"
        for name in _DECOMP_FIELDS:
            row[name + suffix] = float(getattr(rep, name))
        if size == job.n:
            scale = max(abs(getattr(rep, k)) for k in ("lhs", "W3n", "W4n", "V1n", "V2n", "Z1n", "Z2n", "Z3n_prime", "Z3n_tilde", "riemann"))
            row["identity_rel"] = abs(rep.identity_gap()) / max(scale, 1e-300)
            row["W3_coeff_rel"] = abs(rep.W3n_coeff - rep.W3n) / max(abs(rep.W3n), 1e-300)
    return row


def _couple_row(job: _Job, consts: TheoryConstants) -> dict:
    env = sample_environment(job.params, job.n, job.seed, job.index)
    rec = simulate_exact(env, job.params, job.n)
    row = {}
    sizes = [job.n] if job.n_compare is None else [job.n_compare, job.n]
    for size in sizes:
        rep = coupling_report(env, job.params, size, rec)
        suffix = "" if size == job.n else "_small"
        row["dt_scaled" + suffix] = float(rep.dt_scaled)
        row["dv2_scaled" + suffix] = float(rep.dv2_scaled)
        row["delta_sum" + suffix] = float(rep.delta_sum)
        row["recollisions" + suffix] = rep.recollision_count
        if size == job.n:
            row["identity_gap"] = float(rep.identity_gap)
    row["delta_tail"] = float(math.fsum(rec.delta_small[job.tail_from:]))
    row["grazing_drops"] = rec.grazing_drops
    return row


def _oracle_row(job: _Job, consts: TheoryConstants) -> dict:
    env = sample_environment(job.params, job.n, job.seed, job.index)
    rec = simulate_exact(env, job.params, job.n)
    ref = fixed_step_reference(env, job.params, job.n, dt=job.oracle_dt)
    times = np.array([e.time for e in rec.events])
    same = len(times) == len(ref.times)
    max_dt = float(np.max(np.abs(times - ref.times))) if same and len(times) else math.nan
    return {
        "events": len(times),
        "oracle_events": len(ref.times),
        "count_match": int(same),
        "max_time_diff": max_dt,
    }


_ROW_FUNCS: dict = {
    "lln": _lln_row,
    "clt_position": _clt_row,
    "clt_velocity": _clt_row,
    "decompose": _decompose_row,
    "couple": _couple_row,
    "oracle_check": _oracle_row,
}


def _run_job(job: _Job) -> dict:
    consts = theory_constants(job.params)
    return _ROW_FUNCS[job.experiment](job, consts)


# -- aggregation ---------------------------------------------------------------


@dataclass
class Assertion:
    name: str
    passed: bool
    value: Any = None
    threshold: Any = None
    detail: str = ""

    def as_dict(self) -> dict:
        return {"passed": bool(self.passed), "value": self.value, "threshold": self.threshold, "detail": self.detail}


@dataclass
class ExperimentResult:
    experiment: str
    rows: list
    results: dict
    assertions: list
    warnings: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def summary(self, config: ExperimentConfig) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "experiment": self.experiment,
            "master_seed": config.master_seed,
            "num_trajectories": config.num_trajectories,
            "n": config.n,
            "passed": self.passed,
            "assertions": {a.name: a.as_dict() for a in self.assertions},
            "results": self.results,
            "warnings": self.warnings,
        }


def _median_abs(rows, key) -> float:
    return float(np.median(np.abs([r[key] for r in rows])))


def _median_decrease(rows, key) -> Assertion:
    """Median of |key| must drop strictly from the small to the large size.

    A quantity that is identically zero at both sizes (e.g. no elastic
    particles at all) passes trivially; equal medians otherwise fail.
    """
    small_vals = np.abs([r[key + "_small"] for r in rows])
    big_vals = np.abs([r[key] for r in rows])
    small, big = float(np.median(small_vals)), float(np.median(big_vals))
    all_zero = not small_vals.any() and not big_vals.any()
    detail = "identically zero" if all_zero else f"nonzero fraction {np.mean(big_vals > 0):.3f}"
    return Assertion(f"{key}_median_decreases", big < small or all_zero, big, small, detail)


def _std_check(name, samples, target, tol) -> tuple[Assertion, dict]:
    s = summarize(samples)
    rel = abs(s.std / target - 1.0) if target > 0 else math.inf
    return (
        Assertion(name, rel <= tol, s.std, target, f"relative deviation {rel:.4f}, tolerance {tol}"),
        s.as_dict(),
    )


def _ks_check(name, samples, sigma, alpha, standardized=False) -> tuple[Assertion, dict]:
    res = ks_normal(samples, sigma, standardized=standardized)
    return (
        Assertion(name, res.p_value_approx > alpha, res.p_value_approx, alpha, f"D={res.ks_statistic:.5f}"),
        res.as_dict(),
    )


def _aggregate(config: ExperimentConfig, params: ModelParams, consts: TheoryConstants, rows: list) -> tuple[dict, list]:
    exp = config.experiment
    tol = config.tolerances
    results: dict = {"constants": consts.as_dict()}
    checks: list = []
    col = lambda k: np.array([r[k] for r in rows], dtype=np.float64)  # noqa: E731

    if exp == "lln":
        for key, t in (("v_bar_n", tol.lln_modified), ("v_exact_n", tol.lln_exact)):
            worst = float(np.max(np.abs(col(key) - consts.v_limit)))
            results[key] = {"max_abs_error": worst, "mean": float(np.mean(col(key)))}
            checks.append(Assertion(f"{key}_near_v_limit", worst <= t, worst, t))

    elif exp == "clt_position" and config.process == "modified":
        a, s = _std_check("s_minus_tv_std", col("s_minus_tv"), consts.sigma_q_hat, tol.sigma_q_hat)
        checks.append(a)
        results["s_minus_tv"] = s
        a, r = _ks_check("s_minus_tv_ks", col("s_minus_tv"), consts.sigma_q_hat, config.ks_alpha)
        checks.append(a)
        results["s_minus_tv_ks"] = r
        for key, target, t in (("W3n", consts.sigma_w, tol.sigma_w), ("Z4n", consts.sigma_z, tol.sigma_z)):
            a, s = _std_check(f"{key}_std", col(key), target, t)
            checks.append(a)
            results[key] = s
        # diagnostics: the exact finite-n variances of the two linear statistics
        results["finite_n_std"] = finite_n_term_std(params, config.n)
        results["G_plus_H_std"] = summarize(col("Gn") + col("Hn")).std

    elif exp == "clt_position":
        a, r = _ks_check("exact_position_ks", col("exact_position_fluct"), consts.sigma_q, config.ks_alpha)
        checks.append(a)
        results["exact_position_ks"] = r
        results["exact_position_fluct"] = summarize(col("exact_position_fluct")).as_dict()
        results["exact_s_minus_tv"] = summarize(col("exact_s_minus_tv")).as_dict()

    elif exp == "clt_velocity":
        v = col("v_fluct")
        s = summarize(v)
        results["v_fluct"] = s.as_dict()
        with_v = consts.with_sigma_v_hat(s.std, params.mu) if s.std > 0 else consts
        results["constants"] = with_v.as_dict()
        if s.std > 0:
            a, r = _ks_check("v_fluct_ks_standardized", (v - s.mean) / s.std, 1.0, config.ks_alpha, standardized=True)
            checks.append(a)
            results["v_fluct_ks"] = r
        else:
            checks.append(Assertion("v_fluct_ks_standardized", False, 0.0, None, "degenerate sample"))

    elif exp == "decompose":
        worst = float(np.max(col("identity_rel")))
        checks.append(Assertion("identity_audit", worst <= tol.identity_rel, worst, tol.identity_rel))
        worst = float(np.max(col("W3_coeff_rel")))
        checks.append(Assertion("W3_coefficient_form", worst <= 1e-10, worst, 1e-10))
        results["medians_abs"] = {k: _median_abs(rows, k) for k in _DECOMP_FIELDS}
        results["std"] = {k: float(np.std(col(k), ddof=1)) if len(rows) > 1 else 0.0 for k in _DECOMP_FIELDS}
        if config.n_compare is not None:
            results["medians_abs_small"] = {k: _median_abs(rows, k + "_small") for k in _DECOMP_FIELDS}
            for k in ("V1n", "V2n", "W4n", "Z5n", "Hn", "z1_cancellation"):
                checks.append(_median_decrease(rows, k))

    elif exp == "couple":
        neg = float(np.min(col("dv2_scaled")))
        checks.append(Assertion("dv2_nonnegative", neg >= -1e-9, neg, 0.0))
        gap = float(np.max(np.abs(col("identity_gap"))))
        checks.append(Assertion("coupling_identity", gap <= 1e-9, gap, 1e-9))
        results["medians_abs"] = {k: _median_abs(rows, k) for k in ("dt_scaled", "dv2_scaled", "delta_sum")}
        results["max_delta_sum"] = float(np.max(col("delta_sum")))
        results["recollisions_total"] = int(sum(r["recollisions"] for r in rows))
        zero_tail = float(np.mean(col("delta_tail") == 0.0))
        results["delta_tail_zero_fraction"] = zero_tail
        if config.n > config.tail_from:
            checks.append(Assertion("delta_tail_vanishes", zero_tail >= tol.tail_zero_fraction, zero_tail, tol.tail_zero_fraction))
        if config.n_compare is not None:
            results["medians_abs_small"] = {k: _median_abs(rows, k + "_small") for k in ("dt_scaled", "dv2_scaled", "delta_sum")}
            for k in ("dt_scaled", "dv2_scaled"):
                checks.append(_median_decrease(rows, k))

    elif exp == "oracle_check":
        mismatched = int(sum(1 - r["count_match"] for r in rows))
        checks.append(Assertion("event_counts_equal", mismatched == 0, mismatched, 0))
        diffs = [r["max_time_diff"] for r in rows if r["count_match"]]
        worst = float(max(diffs)) if diffs else math.nan
        checks.append(Assertion("event_times_close", bool(diffs) and worst <= tol.oracle_time, worst, tol.oracle_time))

    return results, checks


def run_trajectories(config: ExperimentConfig, workers: int = 1) -> list:
    params = config.params.to_params()
    jobs = [
        _Job(
            config.experiment, params, config.n, config.master_seed, i,
            config.n_compare, config.process, config.n_exact, config.oracle_dt, config.tail_from,
        )
        for i in range(config.num_trajectories)
    ]
    if workers <= 1 or len(jobs) == 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def execute(config: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Run an experiment in memory; no files are written."""
    params = config.params.to_params()
    consts = theory_constants(params)
    warnings = []
    if params.gap_dist.outside_theorem_hypotheses:
        warnings.append("constant gaps are not absolutely continuous; limit theorems need not apply")
    if params.degenerate:
        warnings.append("zero force: the tracer never moves")
    if config.experiment == "constants":
        rows = [{"name": k, "value": v} for k, v in consts.as_dict().items() if v is not None]
        finite = all(math.isfinite(r["value"]) for r in rows)
        checks = [Assertion("constants_finite", finite, None, None)]
        if params.stick_prob < 1 and params.sigma2 > 0:
            positive = all(r["value"] > 0 for r in rows)
            checks.append(Assertion("constants_positive", positive, None, None))
        return ExperimentResult("constants", rows, {"constants": consts.as_dict()}, checks, warnings)
    rows = run_trajectories(config, workers)
    rows = [{"trajectory_index": i, **r} for i, r in enumerate(rows)]
    results, checks = _aggregate(config, params, consts, rows)
    return ExperimentResult(config.experiment, rows, results, checks, warnings)


# -- serialization ------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def rows_to_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    if rows:
        header = list(rows[0].keys())
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in header])
    return buf.getvalue()


def _json_clean(obj):
    if isinstance(obj, dict):
        return {k: _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_artifacts(result: ExperimentResult, config: ExperimentConfig, out_dir: Path) -> Path:
    target = Path(out_dir) / result.experiment
    target.mkdir(parents=True, exist_ok=True)
    (target / "summary.json").write_text(json.dumps(_json_clean(result.summary(config)), indent=2) + "\n")
    with open(target / "samples.csv", "w", newline="") as fh:
        fh.write(rows_to_csv(result.rows))
    (target / "config.echo.json").write_text(json.dumps(config.echo(), indent=2) + "\n")
    return target


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None, out_dir: Optional[str] = None,
                   echo: Callable[[str], None] = print) -> int:
    """Run, write ``summary.json``/``samples.csv``/``config.echo.json`` and return the exit status.

    0 when every assertion passes, 1 when some assertion fails, 2 when a
    trajectory raised (a ``partial.json`` manifest is written instead).
    """
    n_workers = resolve_workers(config, workers)
    out = Path(out_dir if out_dir is not None else config.output_dir)
    try:
        result = execute(config, n_workers)
    except Exception as exc:  # a worker failure aborts the whole run
        target = out / config.experiment
        target.mkdir(parents=True, exist_ok=True)
        manifest = {"schema": SCHEMA_VERSION, "experiment": config.experiment, "error": f"{type(exc).__name__}: {exc}",
                    "completed": False}
        dump = getattr(exc, "dump", None)
        if dump:
            manifest["dump"] = {k: repr(v) for k, v in dump.items()}
        (target / "partial.json").write_text(json.dumps(manifest, indent=2) + "\n")
        (target / "config.echo.json").write_text(json.dumps(config.echo(), indent=2) + "\n")
        echo(f"{config.experiment}: aborted: {manifest['error']}")
        return 2
    target = write_artifacts(result, config, out)
    for w in result.warnings:
        echo(f"warning: {w}")
    if config.experiment == "constants":
        for r in result.rows:
            echo(f"{r['name']:>14s}  {r['value']:.6f}")
    for a in result.assertions:
        echo(f"{'PASS' if a.passed else 'FAIL'}  {a.name}  value={a.value}  threshold={a.threshold}  {a.detail}".rstrip())
    echo(f"{config.experiment}: {'passed' if result.passed else 'FAILED'}; artifacts in {target}")
    return 0 if result.passed else 1
