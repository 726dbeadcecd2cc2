"""Batch Monte Carlo runs: experiment specs, presets, reports.

Replica ``r`` of an experiment with master seed ``S`` draws its initial
configuration from Philox stream ``(S, 2r)`` and its interactions from
``(S, 2r + 1)``, so results do not depend on how replicas are scheduled.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .constructive import CounterexampleSpec, counterexample, counterexample_slack
from .engine import InterventionDistribution, SimulationParams, StopRule, run
from .errors import InvalidParams, InvalidSpec, IoError, NotOdd
from .generators import almost_orthogonal_configuration, uniform_configuration
from .geometry import Configuration
from .io import dump_json, read_opinions, write_opinions, write_trace_csv
from .rng import dynamics_stream_index, init_stream, philox
from .update_rules import UpdateSpec, classify

_STRICT = ConfigDict(extra="forbid", frozen=True)


class UniformSphereInit(BaseModel):
    model_config = _STRICT
    kind: Literal["uniform"] = "uniform"


class FromFileInit(BaseModel):
    model_config = _STRICT
    kind: Literal["file"] = "file"
    path: str


class AlmostOrthogonalInit(BaseModel):
    model_config = _STRICT
    kind: Literal["almost-orth"] = "almost-orth"
    low: float = 0.1
    high: float = 0.9
    bundles: int = 3

    @model_validator(mode="after")
    def _check(self):
        if not 0 <= self.low < self.high <= 1:
            raise ValueError("need 0 <= low < high <= 1")
        if self.bundles < 2:
            raise ValueError("need at least 2 bundles")
        return self


class ExplicitInit(BaseModel):
    model_config = _STRICT
    kind: Literal["explicit"] = "explicit"
    opinions: list[list[float]]


InitSpec = Annotated[
    Union[UniformSphereInit, FromFileInit, AlmostOrthogonalInit, ExplicitInit], Field(discriminator="kind")
]


class StopSpec(BaseModel):
    model_config = _STRICT
    polarized_tol: float | None = 1e-6
    inactive_eps: float | None = None


class OutputSpec(BaseModel):
    model_config = _STRICT
    summary_csv: str = "replicas.csv"
    summary_json: str = "summary.json"
    traces: bool = False
    snapshots: bool = True


class ExperimentSpec(BaseModel):
    """Everything needed to reproduce a batch of runs; JSON config files mirror these fields."""

    model_config = _STRICT
    name: str
    n: int = Field(ge=2)
    d: int = Field(ge=2)
    update: str
    max_steps: int = Field(default=1_000_000, ge=0)
    replicas: int = Field(default=1, ge=1)
    master_seed: int = Field(default=0, ge=0)
    init: InitSpec = Field(default_factory=UniformSphereInit)
    stop: StopSpec = Field(default_factory=StopSpec)
    record_every: int = Field(default=100, ge=1)
    snapshot_steps: tuple[int, ...] = ()
    # None means uniform over ordered pairs
    weights: list[list[float]] | None = None
    # if set, each replica reports whether any recorded state was activity_eps-active
    activity_eps: float | None = None
    outputs: OutputSpec = Field(default_factory=OutputSpec)

    @field_validator("update")
    @classmethod
    def _parse_update(cls, v: str) -> str:
        return str(UpdateSpec.parse(v))

    @model_validator(mode="after")
    def _check(self):
        if isinstance(self.init, AlmostOrthogonalInit) and self.init.bundles > self.d:
            raise ValueError("almost-orthogonal init needs bundles <= d")
        if isinstance(self.init, ExplicitInit):
            u = np.asarray(self.init.opinions, dtype=float)
            if u.shape != (self.n, self.d):
                raise ValueError(f"explicit opinions must be {self.n} x {self.d}")
        if self.weights is not None and np.shape(self.weights) != (self.n, self.n):
            raise ValueError("weights must be an n x n matrix")
        return self

    @property
    def update_spec(self) -> UpdateSpec:
        return UpdateSpec.parse(self.update)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        try:
            return cls.model_validate_json(text)
        except ValidationError as exc:
            raise InvalidSpec(str(exc)) from exc
        except InvalidParams as exc:
            raise InvalidSpec(str(exc)) from exc

    @classmethod
    def from_file(cls, path) -> "ExperimentSpec":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
        return cls.from_json(text)

    def with_overrides(self, **kw) -> "ExperimentSpec":
        data = self.model_dump()
        data.update({k: v for k, v in kw.items() if v is not None})
        try:
            return ExperimentSpec.model_validate(data)
        except ValidationError as exc:
            raise InvalidSpec(str(exc)) from exc


def build_spec(**kw) -> ExperimentSpec:
    try:
        return ExperimentSpec(**kw)
    except ValidationError as exc:
        raise InvalidSpec(str(exc)) from exc


def preset_figure1(replicas: int = 100, master_seed: int = 0) -> ExperimentSpec:
    """Asymmetric linear rule from uniform random opinions, snapshot at t = 2500."""
    return build_spec(
        name="figure1",
        n=100,
        d=3,
        update="asym-linear:eta_plus=0.9,eta_minus=0.1",
        max_steps=1_000_000,
        replicas=replicas,
        master_seed=master_seed,
        init=UniformSphereInit(),
        stop=StopSpec(polarized_tol=1e-6),
        snapshot_steps=(2500,),
    )


def preset_figure2(replicas: int = 100, master_seed: int = 0, bundles: int = 3) -> ExperimentSpec:
    """Linear rule from an almost-orthogonal start (every |A| <= 0.1 or >= 0.9)."""
    return build_spec(
        name="figure2",
        n=100,
        d=3,
        update="linear:eta=0.1",
        max_steps=1_000_000,
        replicas=replicas,
        master_seed=master_seed,
        init=AlmostOrthogonalInit(low=0.1, high=0.9, bundles=bundles),
        stop=StopSpec(polarized_tol=1e-6),
        activity_eps=0.1,
    )


def preset_concentration(replicas: int = 400, master_seed: int = 0, n: int = 101) -> ExperimentSpec:
    """Odd linear rule from uniform random opinions; cluster sizes feed the concentration check."""
    return build_spec(
        name="concentration",
        n=n,
        d=3,
        update="linear:eta=0.1",
        max_steps=1_000_000,
        replicas=replicas,
        master_seed=master_seed,
        init=UniformSphereInit(),
        stop=StopSpec(polarized_tol=1e-6),
    )


PRESETS = {
    "figure1": preset_figure1,
    "figure2": preset_figure2,
    "concentration": preset_concentration,
}


def initial_configuration(spec: ExperimentSpec, replica: int) -> Configuration:
    rng = init_stream(spec.master_seed, replica)
    init = spec.init
    if isinstance(init, UniformSphereInit):
        return uniform_configuration(spec.n, spec.d, rng)
    if isinstance(init, AlmostOrthogonalInit):
        return almost_orthogonal_configuration(spec.n, spec.d, rng, init.low, init.high, init.bundles)
    if isinstance(init, FromFileInit):
        cfg = read_opinions(init.path)
    else:
        cfg = Configuration(init.opinions, renormalize=True)
    if cfg.n != spec.n or cfg.d != spec.d:
        raise InvalidSpec(f"initial opinions are {cfg.n}x{cfg.d}, spec says {spec.n}x{spec.d}")
    return cfg


def simulation_params(spec: ExperimentSpec, replica: int) -> SimulationParams:
    dist = None if spec.weights is None else InterventionDistribution(spec.weights)
    return SimulationParams(
        n=spec.n,
        d=spec.d,
        update=spec.update_spec,
        max_steps=spec.max_steps,
        seed=spec.master_seed,
        stream=dynamics_stream_index(replica),
        distribution=dist,
        stop=StopRule(spec.stop.polarized_tol, spec.stop.inactive_eps),
        record_every=spec.record_every,
        snapshot_steps=tuple(spec.snapshot_steps),
        keep_interactions=False,
    )


@dataclass
class ReplicaResult:
    row: dict
    trace: object = None
    snapshots: dict = field(default_factory=dict)


def run_replica(spec: ExperimentSpec, replica: int, keep_trace: bool = False) -> ReplicaResult:
    cfg = initial_configuration(spec, replica)
    params = simulation_params(spec, replica)
    trace, summary = run(params, cfg)
    row = {
        "replica": replica,
        "seed": summary.seed,
        "stream": summary.stream,
        "polarized": summary.polarized,
        "steps": summary.steps,
        "stop_reason": summary.stop_reason,
        "agent1_cluster_size": summary.cluster_sizes[0],
        "other_cluster_size": summary.cluster_sizes[1],
        "final_min_abs_corr": summary.final_min_abs_corr,
    }
    if spec.activity_eps is not None:
        row["became_active"] = trace.became_active(spec.activity_eps)
    return ReplicaResult(row, trace if keep_trace else None, trace.snapshots)


def _quantiles(values) -> dict | None:
    if len(values) == 0:
        return None
    q = np.quantile(np.asarray(values, dtype=float), [0.0, 0.25, 0.5, 0.75, 1.0])
    return dict(zip(["min", "q25", "median", "q75", "max"], (float(x) for x in q)))


def aggregate(rows: list[dict], n: int | None = None) -> dict:
    """Report aggregates, recomputable from the per-replica rows alone."""
    total = len(rows)
    pol = [r for r in rows if r["polarized"]]
    sizes = [int(r["agent1_cluster_size"]) for r in pol]
    hist: dict[str, int] = {}
    for s in sorted(sizes):
        hist[str(s)] = hist.get(str(s), 0) + 1
    out = {
        "replicas": total,
        "polarized_count": len(pol),
        "polarization_rate": len(pol) / total if total else 0.0,
        "steps_to_polarization": _quantiles([r["steps"] for r in pol]),
        "agent1_cluster_size_histogram": hist,
        "agent1_cluster_size_mean": float(np.mean(sizes)) if sizes else None,
        "verdict_kind": "tolerance-surrogate",
    }
    if rows and "became_active" in rows[0]:
        act = sum(bool(r["became_active"]) for r in rows)
        out["became_active_count"] = act
        out["became_active_rate"] = act / total
        both = sum(bool(r["became_active"]) and bool(r["polarized"]) for r in rows)
        out["active_and_polarized_rate"] = both / total
    return out


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    rows: list[dict]
    aggregates: dict
    traces: dict = field(default_factory=dict)
    snapshots: dict = field(default_factory=dict)

    def summary_json(self) -> dict:
        return {
            "name": self.spec.name,
            "spec": json.loads(self.spec.model_dump_json()),
            "intervention_distribution": "uniform" if self.spec.weights is None else "weighted",
            "aggregates": self.aggregates,
            "replicas": self.rows,
        }


CSV_COLUMNS = [
    "replica", "seed", "stream", "polarized", "steps", "stop_reason",
    "agent1_cluster_size", "other_cluster_size", "final_min_abs_corr",
]


def _csv_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def read_replica_csv(path) -> list[dict]:
    """Parse a replica CSV back into rows (used to recompute aggregates)."""
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {}
            for k, v in rec.items():
                if v in ("true", "false"):
                    row[k] = v == "true"
                elif k in ("final_min_abs_corr",):
                    row[k] = float(v)
                elif k == "stop_reason":
                    row[k] = v
                else:
                    row[k] = int(v)
            out.append(row)
    return out


def run_experiment(spec: ExperimentSpec, out_dir=None, workers: int = 1, keep_traces: bool = False) -> ExperimentReport:
    """Run all replicas (concurrently with ``workers`` threads) and write outputs to ``out_dir``."""
    keep = keep_traces or (out_dir is not None and spec.outputs.traces)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda r: run_replica(spec, r, keep), range(spec.replicas)))
    else:
        results = [run_replica(spec, r, keep) for r in range(spec.replicas)]
    rows = [res.row for res in results]
    report = ExperimentReport(
        spec=spec,
        rows=rows,
        aggregates=aggregate(rows, spec.n),
        traces={r: res.trace for r, res in enumerate(results) if res.trace is not None},
        snapshots={r: res.snapshots for r, res in enumerate(results) if res.snapshots},
    )
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def write_report(report: ExperimentReport, out_dir) -> None:
    out = Path(out_dir)
    spec = report.spec
    try:
        out.mkdir(parents=True, exist_ok=True)
        columns = CSV_COLUMNS + (["became_active"] if spec.activity_eps is not None else [])
        with open(out / spec.outputs.summary_csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in report.rows:
                w.writerow([_csv_value(row[c]) for c in columns])
        (out / spec.outputs.summary_json).write_text(dump_json(report.summary_json()))
    except OSError as exc:
        raise IoError(f"cannot write experiment outputs to {out}: {exc}") from exc
    if spec.outputs.snapshots and report.snapshots:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        for r, snaps in sorted(report.snapshots.items()):
            for t, u in sorted(snaps.items()):
                write_opinions(snap_dir / f"replica{r:04d}_t{t}.txt", u)
    if spec.outputs.traces and report.traces:
        trace_dir = out / "traces"
        trace_dir.mkdir(exist_ok=True)
        for r, trace in sorted(report.traces.items()):
            write_trace_csv(trace_dir / f"replica{r:04d}.csv", trace)


# ---------------------------------------------------------------------------
# concentration of the cluster sizes


@dataclass
class TailRow:
    c: float
    bound: float
    empirical: float
    sigma: float
    exceed_count: int
    conditioned_on: int
    passed: bool


@dataclass
class ConcentrationReport:
    n: int
    replicas: int
    polarized: int
    excluded: int
    rows: list[TailRow]
    sizes: list[int]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "replicas": self.replicas,
            "polarized": self.polarized,
            "excluded_not_polarized": self.excluded,
            "passed": self.passed,
            "tail": [r.__dict__ for r in self.rows],
        }


def tail_table(sizes, n: int, c_values, excluded: int = 0, replicas: int | None = None) -> ConcentrationReport:
    """Empirical P[|S - (n+1)/2| >= c sqrt(n-1)] against 2 exp(-c^2/2) with 3-sigma binomial slack."""
    sizes = np.asarray(sizes, dtype=float)
    m = len(sizes)
    rows = []
    for c in c_values:
        bound = 2.0 * math.exp(-c * c / 2.0)
        p = min(bound, 1.0)
        sigma = math.sqrt(p * (1.0 - p) / m) if m else 0.0
        hits = int(np.count_nonzero(np.abs(sizes - (n + 1) / 2) >= c * math.sqrt(n - 1)))
        emp = hits / m if m else 0.0
        rows.append(TailRow(float(c), bound, emp, sigma, hits, m, bool(emp <= bound + 3.0 * sigma)))
    return ConcentrationReport(n, replicas if replicas is not None else m + excluded, m, excluded, rows,
                               [int(s) for s in sizes])


def concentration_experiment(n: int = 101, c_values=(0.0, 1.0, 2.0, 3.0), replicas: int = 400,
                             update: str = "linear:eta=0.1", d: int = 3, master_seed: int = 0,
                             max_steps: int = 1_000_000, workers: int = 1, out_dir=None) -> ConcentrationReport:
    """Cluster-size tails for an odd rule from uniform starts, conditioned on polarization.

    Replicas that do not polarize within ``max_steps`` are excluded and counted.
    """
    spec_u = UpdateSpec.parse(update)
    if not classify(spec_u).is_odd:
        raise NotOdd(f"{spec_u} is not odd; the concentration bound needs f(-A) = -f(A)")
    spec = preset_concentration(replicas, master_seed, n).with_overrides(update=update, d=d, max_steps=max_steps)
    report = run_experiment(spec, out_dir, workers)
    sizes = [r["agent1_cluster_size"] for r in report.rows if r["polarized"]]
    excluded = len(report.rows) - len(sizes)
    table = tail_table(sizes, n, c_values, excluded, len(report.rows))
    if out_dir is not None:
        (Path(out_dir) / "concentration.json").write_text(dump_json(table.to_json()))
    return table


# ---------------------------------------------------------------------------
# no short sequence convexifies the three-opinion counterexample

PAIRS3 = np.array([(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)], dtype=np.int64)
_TRIANGLE = ((0, 1), (0, 2), (1, 2))


def _linear_step(U: np.ndarray, code: int, eta: float) -> np.ndarray:
    """Apply pair PAIRS3[code] to a batch of three-opinion states (N, 3, d)."""
    i, j = PAIRS3[code]
    out = U.copy()
    a = np.einsum("nk,nk->n", U[:, i], U[:, j])
    w = U[:, i] + (eta * a)[:, None] * U[:, j]
    out[:, i] = w / np.linalg.norm(w, axis=1, keepdims=True)
    return out


def _triangle_corr(U: np.ndarray) -> np.ndarray:
    return np.stack([np.einsum("nk,nk->n", U[:, a], U[:, b]) for a, b in _TRIANGLE], axis=1)


def convex3(corr3: np.ndarray) -> np.ndarray:
    """Strict convexity of three opinions from (A_12, A_13, A_23).

    With b_1 = +1 the signs b_2, b_3 are forced by A_12, A_13, and the one
    remaining condition is b_2 b_3 A_23 > 0; this is A_12 A_13 A_23 > 0.
    """
    return np.prod(corr3, axis=1) > 0


@dataclass
class CounterexampleVerdict:
    passed: bool
    inequality_ok: bool
    epsilon: float
    eta: float
    T: int
    mode: str
    sequences: int = 0
    states_checked: int = 0
    max_drift_toward_zero: float = 0.0
    max_abs_change: float = 0.0
    first_failure: list | None = None
    message: str = ""

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _first_bad(corr3: np.ndarray, c0: np.ndarray, eps: float) -> np.ndarray:
    sign0 = np.sign(c0)
    flipped = np.any(np.sign(corr3) != sign0, axis=1)
    # shrinkage toward zero is what the admissibility inequality bounds; growth is unbounded
    drift = np.any(np.abs(c0) - corr3 * sign0 > eps / 2, axis=1)
    return convex3(corr3) | flipped | drift


def verify_counterexample(cx: CounterexampleSpec, samples: int | None = None, seed: int = 0,
                          chunk: int = 20_000) -> CounterexampleVerdict:
    """Check every prefix of every sequence of T interventions (or ``samples`` random ones).

    At each prefix the configuration must be refuted as strictly convex, no
    correlation may change sign, and no |A_ij| may shrink by more than eps/2.
    """
    eps, eta, T = cx.epsilon, cx.eta, cx.T
    verdict = CounterexampleVerdict(False, cx.admissible, eps, eta, T, "sampled" if samples else "exhaustive")
    if not verdict.inequality_ok:
        verdict.message = (f"admissibility inequality fails for epsilon={eps}, eta={eta}, T={T} "
                           f"(slack {counterexample_slack(eps, eta, T):.3g}); nothing was run")
        return verdict
    U0 = cx.opinions[None]
    c0 = _triangle_corr(U0)[0]
    sign0 = np.sign(c0)
    max_drift = 0.0
    max_change = 0.0
    states = 0

    def account(U, codes):
        nonlocal max_drift, max_change, states
        corr3 = _triangle_corr(U)
        states += len(U)
        max_drift = max(max_drift, float(np.max(np.abs(c0) - corr3 * sign0)))
        max_change = max(max_change, float(np.max(np.abs(corr3 - c0))))
        bad = _first_bad(corr3, c0, eps)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            return [tuple(int(x) for x in PAIRS3[c]) for c in codes[k]]
        return None

    failure = account(U0, np.zeros((1, 0), dtype=np.int64))
    if samples is None:
        U, codes = U0, np.zeros((1, 0), dtype=np.int64)
        for _ in range(T):
            if failure:
                break
            U = np.concatenate([_linear_step(U, c, eta) for c in range(6)])
            codes = np.concatenate([np.column_stack([codes, np.full(len(codes), c)]) for c in range(6)])
            failure = account(U, codes)
        sequences = 6**T
    else:
        rng = philox(seed, 0)
        done = 0
        while done < samples and not failure:
            m = min(chunk, samples - done)
            seqs = rng.integers(0, 6, size=(m, T))
            U = np.repeat(U0, m, axis=0)
            for t in range(T):
                for c in range(6):
                    sel = seqs[:, t] == c
                    if sel.any():
                        U[sel] = _linear_step(U[sel], c, eta)
                failure = account(U, seqs[:, : t + 1])
                if failure:
                    break
            done += m
        sequences = samples
    verdict.sequences = sequences
    verdict.states_checked = states
    verdict.max_drift_toward_zero = max_drift
    verdict.max_abs_change = max_change
    verdict.first_failure = failure
    verdict.passed = failure is None
    verdict.message = "ok" if failure is None else f"failed along {failure}"
    return verdict


def counterexample_experiment(eta: float = 0.1, T: int = 6, samples: int | None = None, epsilon: float | None = None,
                              d: int = 3, seed: int = 0) -> CounterexampleVerdict:
    """Build the counterexample and verify it exhaustively (T <= 6) or on ``samples`` random sequences."""
    if samples is None and T > 6:
        raise InvalidParams("exhaustive verification is limited to T <= 6; pass samples for longer horizons")
    cx = counterexample(d, eta, T, epsilon, check=False)
    return verify_counterexample(cx, samples, seed)

