"""Seeded Monte Carlo grids with deterministic, parallelism-proof outputs.

An ensemble is a Cartesian grid of parameter cells, each run for a fixed
number of trials.  Every trial derives its seed as

    trial_seed = derive_seed(derive_seed(master_seed, cell_index), trial_index)

so the result set is a pure function of the spec and is invariant under how
trials get scheduled across worker processes.  Aggregation sorts by
(cell, trial) before reducing, and the file writers emit no wall-clock data,
so raw JSONL and summary CSV bytes are identical for any parallelism degree.

Two experiment kinds:

- "carpet-hole": emission runs from the neat state; per-cell estimates of
  P(Frozen >= n/4) and the mean frozen / exited fractions.
- "stabilize-origin": i.i.d. density-zeta configurations on [-L, L],
  stabilized; per-cell estimate of P(odometer at the origin >= k).
"""

from __future__ import annotations

import configparser
import itertools
import json
import math
import multiprocessing
import time
from dataclasses import dataclass, field

import numpy as np

from . import streams
from .carpet import CarpetParams, PropertyViolationError, build_neat_with_mass, run_carpet_hole
from .core import DEFAULT_TOPPLING_BUDGET, BudgetExceededError, ParameterError, odometer_at_origin

TRIAL_SCHEMA = "arwlab/ensemble-trial/v1"
SUMMARY_SCHEMA = "arwlab/ensemble-summary/v1"
PLOT_SCHEMA = "arwlab/phase-grid/v1"

KIND_CARPET = "carpet-hole"
KIND_ORIGIN = "stabilize-origin"

# fixed summary-CSV column orders (documented contract; see README)
CARPET_PARAM_KEYS = ("lam", "a", "K", "n")
ORIGIN_PARAM_KEYS = ("lam", "zeta", "L", "k")
CARPET_STAT_KEYS = ("p_frozen_ge_quarter", "mean_frozen_frac", "mean_exit_frac")
ORIGIN_STAT_KEYS = ("p_active", "mean_odometer")


def _param_keys(kind):
    return CARPET_PARAM_KEYS if kind == KIND_CARPET else ORIGIN_PARAM_KEYS


def _stat_keys(kind):
    return CARPET_STAT_KEYS if kind == KIND_CARPET else ORIGIN_STAT_KEYS


def summary_columns(kind: str) -> list[str]:
    cols = ["cell", *_param_keys(kind), "trials", "ok"]
    for key in _stat_keys(kind):
        cols += [key, f"se_{key}"]
    return cols


@dataclass(frozen=True)
class EnsembleSpec:
    """Declarative description of one ensemble; results depend only on this
    (minus the parallelism hint)."""

    kind: str
    master_seed: int
    trials: int
    lam: tuple[float, ...]
    # carpet-hole grid; empty K means K = a*a per entry
    a: tuple[int, ...] = ()
    K: tuple[int, ...] = ()
    n: tuple[int, ...] = ()
    # stabilize-origin grid
    zeta: tuple[float, ...] = ()
    L: tuple[int, ...] = ()
    k: int = 1
    parallelism: int = 1
    check: bool = False
    max_topplings: int = DEFAULT_TOPPLING_BUDGET

    def __post_init__(self):
        if self.kind not in (KIND_CARPET, KIND_ORIGIN):
            raise ParameterError(f"unknown ensemble kind {self.kind!r}")
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        if self.parallelism < 1:
            raise ParameterError("parallelism must be >= 1")
        if not self.lam or any(l < 0 for l in self.lam):
            raise ParameterError("need a nonempty list of sleep rates >= 0")
        if self.kind == KIND_CARPET:
            if not self.a or not self.n:
                raise ParameterError("carpet-hole grid needs a and n lists")
            ks = self.resolved_K()
            for a_, K_ in zip(self.a, ks):
                if K_ <= 2 * a_:
                    raise ParameterError(f"need K > 2a, got a={a_} K={K_}")
            if len(self.K) not in (0, len(self.a)):
                raise ParameterError("K list must be empty or match a list")
            if any(n_ < 2 or n_ % 2 for n_ in self.n):
                raise ParameterError("block counts must be positive and even")
        else:
            if not self.zeta or not self.L:
                raise ParameterError("stabilize-origin grid needs zeta and L lists")
            if any(not 0.0 <= z <= 2.0 for z in self.zeta):
                raise ParameterError("densities must lie in [0, 2]")
            if any(l < 1 for l in self.L):
                raise ParameterError("interval half-widths must be >= 1")
            if self.k < 1:
                raise ParameterError("activity threshold k must be >= 1")

    def resolved_K(self) -> tuple[int, ...]:
        return self.K if self.K else tuple(a * a for a in self.a)

    def cells(self) -> list[dict]:
        """Parameter dicts in the documented deterministic order."""
        if self.kind == KIND_CARPET:
            geo = list(zip(self.a, self.resolved_K()))
            return [{"lam": lam, "a": a, "K": K, "n": n}
                    for lam, (a, K), n in itertools.product(self.lam, geo, self.n)]
        return [{"lam": lam, "zeta": z, "L": L, "k": self.k}
                for lam, z, L in itertools.product(self.lam, self.zeta, self.L)]

    def header(self) -> dict:
        grid = {"lam": list(self.lam)}
        if self.kind == KIND_CARPET:
            grid.update(a=list(self.a), K=list(self.resolved_K()), n=list(self.n))
        else:
            grid.update(zeta=list(self.zeta), L=list(self.L), k=self.k)
        return {"schema": TRIAL_SCHEMA, "kind": self.kind,
                "master_seed": self.master_seed, "trials": self.trials,
                "grid": grid}


@dataclass
class CellSummary:
    kind: str
    cell: int
    params: dict
    trials: int
    ok: bool
    estimates: dict
    errors: dict
    runtime: float = 0.0  # in-memory only, never written to files
    diagnostic: str | None = None

    def csv_row(self) -> list:
        row = [self.cell, *(self.params[k] for k in _param_keys(self.kind)),
               self.trials, int(self.ok)]
        for key in _stat_keys(self.kind):
            row += [self.estimates[key], self.errors[key]]
        return row


def load_spec(path, **overrides) -> EnsembleSpec:
    """Read a run-spec INI file ([ensemble] + [grid] sections).

    Keyword overrides win over file values, so CLI flags can shadow the file.
    """
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise ParameterError(f"cannot read run-spec file {path}")
    if "ensemble" not in cp:
        raise ParameterError("run-spec file needs an [ensemble] section")
    ens = cp["ensemble"]
    grid = cp["grid"] if "grid" in cp else {}

    def numbers(section, key, conv):
        raw = section.get(key, "")
        return tuple(conv(tok.strip()) for tok in raw.split(",") if tok.strip())

    fields = dict(
        kind=ens.get("kind", KIND_CARPET),
        master_seed=ens.getint("seed", 0),
        trials=ens.getint("trials", 100),
        parallelism=ens.getint("parallelism", 1),
        k=ens.getint("k", 1),
        check=ens.getboolean("check", False),
        max_topplings=ens.getint("max_topplings", DEFAULT_TOPPLING_BUDGET),
        lam=numbers(grid, "lam", float),
        a=numbers(grid, "a", int),
        K=numbers(grid, "K", int),
        n=numbers(grid, "n", int),
        zeta=numbers(grid, "zeta", float),
        L=numbers(grid, "L", int),
    )
    fields.update(overrides)
    return EnsembleSpec(**fields)


def _carpet_trial(spec, cell, seed):
    params = CarpetParams(lam=cell["lam"], n=cell["n"], K=cell["K"], a=cell["a"],
                          check=spec.check, trace=False,
                          max_topplings=spec.max_topplings)
    rec = run_carpet_hole(params, seed)
    return {"exit": rec.exit, "frozen": rec.frozen, "n_attempts": rec.n_attempts,
            "topplings": rec.topplings, "M": rec.M, "L": rec.L, "S": rec.S}


def _origin_trial(spec, cell, seed):
    odo0, res = odometer_at_origin(cell["lam"], cell["zeta"], cell["L"], seed,
                                   max_topplings=spec.max_topplings)
    return {"odometer_origin": odo0, "topplings": res.topplings,
            "exit_left": res.exit_left, "exit_right": res.exit_right}


def _run_one(item):
    """One trial; top-level so fork-based worker pools can run it."""
    spec, cell_index, trial_index = item
    cell = spec.cells()[cell_index]
    seed = streams.derive_seed(streams.derive_seed(spec.master_seed, cell_index),
                               trial_index)
    t0 = time.perf_counter()
    ok, diagnostic = True, None
    try:
        if spec.kind == KIND_CARPET:
            record = _carpet_trial(spec, cell, seed)
        else:
            record = _origin_trial(spec, cell, seed)
    except BudgetExceededError as exc:
        ok, diagnostic, record = False, f"budget exceeded: {exc.args[0]}", {}
    except PropertyViolationError as exc:
        ok, diagnostic, record = False, f"property violation: {exc.args[0]}", {}
    record = {"schema": TRIAL_SCHEMA, "cell": cell_index, "trial": trial_index,
              "seed": seed, **record}
    if diagnostic is not None:
        record["error"] = diagnostic
    return cell_index, trial_index, ok, diagnostic, record, time.perf_counter() - t0


def _validate_carpet_record(rec, n):
    if rec["exit"] + rec["frozen"] != n // 2:
        return f"exit+frozen != n/2 in trial {rec['trial']}"
    if rec["frozen"] != sum(rec["S"]):
        return f"frozen != sum(S) in trial {rec['trial']}"
    if any(s not in (0, 1) for s in rec["S"]):
        return f"frozen flag outside {{0,1}} in trial {rec['trial']}"
    if rec["M"][n] != 0:
        return f"mass arriving from beyond the domain in trial {rec['trial']}"
    if any(rec["L"][i] != rec["M"][i - 1] for i in range(1, n + 1)):
        return f"left emissions != arrivals one block over in trial {rec['trial']}"
    return None


def _mean_se(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), se


def _aggregate(spec, cell_index, cell, rows) -> CellSummary:
    records = [r[4] for r in rows]
    runtime = sum(r[5] for r in rows)
    diagnostic = next((r[3] for r in rows if not r[2]), None)
    if diagnostic is None and spec.kind == KIND_CARPET:
        for rec in records:
            diagnostic = _validate_carpet_record(rec, cell["n"])
            if diagnostic:
                break
    elif diagnostic is None:
        diagnostic = next((f"negative count in trial {rec['trial']}"
                           for rec in records if min(rec["odometer_origin"],
                                                     rec["exit_left"],
                                                     rec["exit_right"]) < 0), None)

    keys = _stat_keys(spec.kind)
    if diagnostic is not None:
        nan = float("nan")
        return CellSummary(spec.kind, cell_index, cell, spec.trials, False,
                           {k: nan for k in keys}, {k: nan for k in keys},
                           runtime, diagnostic)

    estimates, errors = {}, {}
    if spec.kind == KIND_CARPET:
        n = cell["n"]
        hits = [rec["frozen"] >= n / 4 for rec in records]
        assert sum(hits) + sum(not h for h in hits) == spec.trials
        for key, vals in (("p_frozen_ge_quarter", [float(h) for h in hits]),
                          ("mean_frozen_frac", [rec["frozen"] / n for rec in records]),
                          ("mean_exit_frac", [rec["exit"] / n for rec in records])):
            estimates[key], errors[key] = _mean_se(vals)
    else:
        k = cell["k"]
        for key, vals in (("p_active", [float(rec["odometer_origin"] >= k)
                                        for rec in records]),
                          ("mean_odometer", [rec["odometer_origin"]
                                             for rec in records])):
            estimates[key], errors[key] = _mean_se(vals)
    return CellSummary(spec.kind, cell_index, cell, spec.trials, True,
                       estimates, errors, runtime)


def run_ensemble(spec: EnsembleSpec, jsonl_path=None, csv_path=None) -> list[CellSummary]:
    """Run every (cell, trial) pair, aggregate, optionally write files.

    Output bytes are a function of the spec alone: trials are keyed by
    (cell, trial) and sorted before aggregation and writing.
    """
    cells = spec.cells()
    work = [(spec, ci, t)
            for ci in range(len(cells)) for t in range(spec.trials)]
    if spec.parallelism > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(spec.parallelism) as pool:
            rows = pool.map(_run_one, work, chunksize=max(1, len(work) // (4 * spec.parallelism)))
    else:
        rows = [_run_one(item) for item in work]
    rows.sort(key=lambda r: (r[0], r[1]))

    summaries = [_aggregate(spec, ci, cell, rows[ci * spec.trials:(ci + 1) * spec.trials])
                 for ci, cell in enumerate(cells)]
    if jsonl_path is not None:
        write_trial_jsonl(jsonl_path, spec, rows)
    if csv_path is not None:
        write_summary_csv(csv_path, spec, summaries)
    return summaries


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_trial_jsonl(path, spec, rows):
    """One header line, then one record per trial in (cell, trial) order."""
    lines = [_dumps(spec.header())]
    lines += [_dumps(r[4]) for r in rows]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _fmt(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def write_summary_csv(path, spec, summaries):
    """Fixed-column summary, one row per cell, # header with the seed."""
    cols = summary_columns(spec.kind)
    lines = [f"# {SUMMARY_SCHEMA}", f"# kind={spec.kind}",
             f"# master_seed={spec.master_seed}", f"# trials={spec.trials}",
             ",".join(cols)]
    lines += [",".join(_fmt(v) for v in s.csv_row()) for s in summaries]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_phase_plot_csv(path, spec, summaries):
    """Long-format activity grid: one (lam, zeta) point per line."""
    if spec.kind != KIND_ORIGIN:
        raise ParameterError("phase plot data comes from stabilize-origin runs")
    lines = [f"# {PLOT_SCHEMA}", f"# master_seed={spec.master_seed}",
             f"# trials={spec.trials}", f"# k={spec.k}",
             "lam,zeta,p_active,se_p_active"]
    for s in summaries:
        lines.append(",".join(_fmt(v) for v in (
            s.params["lam"], s.params["zeta"],
            s.estimates["p_active"], s.errors["p_active"])))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def sweep_phase(lams, zetas, L, k, trials, seed, parallelism=1,
                jsonl_path=None, csv_path=None, plot_path=None,
                max_topplings=DEFAULT_TOPPLING_BUDGET) -> list[CellSummary]:
    """Activity estimates P(odometer at the origin >= k) over a density grid."""
    spec = EnsembleSpec(kind=KIND_ORIGIN, master_seed=seed, trials=trials,
                        lam=tuple(lams), zeta=tuple(zetas), L=(L,), k=k,
                        parallelism=parallelism, max_topplings=max_topplings)
    summaries = run_ensemble(spec, jsonl_path=jsonl_path, csv_path=csv_path)
    if plot_path is not None:
        write_phase_plot_csv(plot_path, spec, summaries)
    return summaries


# --- exponential-moment probe ----------------------------------------------

E3_REFERENCE = float(math.exp(3))


@dataclass
class FrozenMoment:
    theta: float
    log_estimate: float
    estimate: float | None  # None when exp() would overflow
    max_share: float        # weight of the largest single term in the mean


@dataclass
class BlockMomentRow:
    block: int
    ell: int
    mean: float
    se: float
    n_seeds: int


@dataclass
class MomentProbeReport:
    n_runs: int
    frozen_moments: list[FrozenMoment]
    block_theta: float
    m_max: int
    block_rows: list[BlockMomentRow]
    monotone_violations: int
    reference: float = field(default=E3_REFERENCE)

    def to_text(self) -> str:
        lines = [f"exponential moment probe over {self.n_runs} runs",
                 f"{'theta':>8}  {'log E[exp(theta*Frozen)]':>26}  "
                 f"{'estimate':>12}  {'top share':>9}"]
        for fm in self.frozen_moments:
            est = "overflow" if fm.estimate is None else f"{fm.estimate:.6g}"
            lines.append(f"{fm.theta:>8g}  {fm.log_estimate:>26.6g}  "
                         f"{est:>12}  {fm.max_share:>9.3f}")
        lines.append(f"per-block sums of exp(theta*S) over parked mass m <= "
                     f"{self.m_max} at theta={self.block_theta:g} "
                     f"(reference e^3 = {self.reference:.4f})")
        lines.append(f"{'block':>5} {'ell':>4} {'mean':>10} {'se':>10} {'seeds':>6}")
        for row in self.block_rows:
            lines.append(f"{row.block:>5} {row.ell:>4} {row.mean:>10.4f} "
                         f"{row.se:>10.4f} {row.n_seeds:>6}")
        lines.append(f"left-emission monotonicity violations: {self.monotone_violations}")
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps({
            "n_runs": self.n_runs,
            "frozen_moments": [vars(f) for f in self.frozen_moments],
            "block_theta": self.block_theta, "m_max": self.m_max,
            "block_rows": [vars(r) for r in self.block_rows],
            "monotone_violations": self.monotone_violations,
            "reference": self.reference,
        }, sort_keys=True)


def exponential_moment_probe(records, thetas=(0.5, 1.0, 2.0, 16.0),
                             block_theta=1.0, blocks=(1,), m_max=12) -> MomentProbeReport:
    """Estimate E[exp(theta*Frozen)] and the per-block sums behind it.

    Frozen moments are computed in the log-sum-exp domain, so huge theta
    degrades gracefully (the report shows how dominated the mean is by its
    single largest term).  For each recorded run's stacks, the block sums
    replay the prefix domain with m = 0..m_max parked particles and total
    exp(theta * frozen-flag) over the m whose left-emission count lands on
    each ell; only ell values strictly below the count at m_max are reported
    (larger parked mass can only push the count up, so those are complete).
    """
    if not records:
        raise ParameterError("need at least one recorded run")
    lam, K, a = records[0].lam, records[0].K, records[0].a
    if any((r.lam, r.K, r.a) != (lam, K, a) for r in records):
        raise ParameterError("records mix parameters; probe one cell at a time")

    frozen = np.array([r.frozen for r in records], dtype=float)
    moments = []
    for theta in thetas:
        vals = theta * frozen
        mx = float(vals.max())
        lse = mx + math.log(float(np.exp(vals - mx).sum()))
        log_est = lse - math.log(len(records))
        est = math.exp(log_est) if log_est < 700 else None
        moments.append(FrozenMoment(theta, log_est, est, math.exp(mx - lse)))

    per_key: dict[tuple[int, int], list[float]] = {}
    violations = 0
    for r in records:
        for i in blocks:
            if not 1 <= i <= r.n:
                raise ParameterError(f"block {i} outside 1..{r.n}")
            ls, ss = [], []
            for m in range(m_max + 1):
                sub = build_neat_with_mass(i, K, a, m, lam, r.master_seed,
                                           r.run_index, trace=False, check=False)
                rec = sub.run()
                ls.append(rec.L[i])
                ss.append(rec.S[i])
            violations += sum(1 for x, y in zip(ls, ls[1:]) if y < x)
            sums: dict[int, float] = {}
            for l, s in zip(ls, ss):
                if l < ls[-1]:
                    sums[l] = sums.get(l, 0.0) + math.exp(block_theta * s)
            for l in range(ls[-1]):
                per_key.setdefault((i, l), []).append(sums.get(l, 0.0))

    rows = []
    for (i, l) in sorted(per_key):
        mean, se = _mean_se(per_key[i, l])
        rows.append(BlockMomentRow(i, l, mean, se, len(per_key[i, l])))
    return MomentProbeReport(len(records), moments, block_theta, m_max, rows,
                             violations)
