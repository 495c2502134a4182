"""End-to-end acceptance checks, one callable per numbered criterion.

Each criterion returns a CriterionResult with a PASS/FAIL verdict, a detail
string carrying the measured numbers, and its wall time.  Two profiles:

- "full": the contractual ensemble sizes and runtime budgets.
- "quick": reduced sizes for a fast smoke pass (the CLI's verify --quick).

Statistical criteria fail by returning passed=False, never by raising; an
exception here means a bug, not a failed check.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import _kernels, blockstats, ensemble, streams
from .carpet import (CarpetParams, PropertyViolationError, mass_balance_replay,
                     run_carpet_hole)
from .core import Configuration, StackSystem, stabilize


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    elapsed: float
    budget: float | None  # seconds; None = no stated runtime cap

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"[{verdict}] {self.number:>2}. {self.name}: {self.detail} "
                f"[{self.elapsed:.1f}s]")


def _result(number, name, t0, passed, detail, budget=None) -> CriterionResult:
    return CriterionResult(number, name, bool(passed), detail,
                           time.perf_counter() - t0, budget)


# -- 1: abelian property ----------------------------------------------------

def criterion_1_abelian(profile="full") -> CriterionResult:
    """Leftmost-priority vs random toppling orders on small configurations."""
    t0 = time.perf_counter()
    n_configs, n_orders = (200, 50) if profile == "full" else (40, 10)
    rng = np.random.default_rng(20261)
    lams = (0.0, 0.3, 1.0, 5.0)
    mismatches = 0
    for idx in range(n_configs):
        length = int(rng.integers(2, 13))
        counts = np.zeros(length, np.int64)
        for _ in range(int(rng.integers(1, 7))):
            counts[rng.integers(0, length)] += 1
        for i in range(length):
            if counts[i] == 1 and rng.random() < 0.3:
                counts[i] = -1  # a lone particle may start asleep
        lo = -int(rng.integers(0, length))
        seed = streams.derive_seed(20261, idx)
        lam = lams[idx % len(lams)]
        ref_cfg = Configuration.from_states(lo, counts)
        ref = stabilize(ref_cfg, StackSystem(seed, lam),
                        policy="leftmost", engine="python")
        for order in range(n_orders):
            cfg = Configuration.from_states(lo, counts)
            res = stabilize(cfg, StackSystem(seed, lam), policy="random",
                            rng=np.random.default_rng(streams.derive_seed(seed, order)),
                            engine="python")
            if cfg != ref_cfg or res.odometer.tolist() != ref.odometer.tolist() \
                    or res.topplings != ref.topplings:
                mismatches += 1
    return _result(1, "abelian stabilization", t0, mismatches == 0,
                   f"{n_configs} configs x {n_orders} random orders, "
                   f"{mismatches} mismatches", budget=30)


# -- 2 + 3: shared check-mode carpet ensemble -------------------------------

_GRID_LAMS = (0.0, 0.2, 1.0, 5.0)
_GRID_AS = (3, 4, 5, 6)
_FULL_ALLOC = {4: 35, 8: 16, 16: 8, 32: 4}   # 16 cells x 63 = 1008 runs
_QUICK_ALLOC = {4: 3, 8: 1}


@lru_cache(maxsize=None)
def _carpet_grid(profile):
    """Run the criterion-2/3 ensemble once (check-mode on), cache results."""
    alloc = _FULL_ALLOC if profile == "full" else _QUICK_ALLOC
    t0 = time.perf_counter()
    records, violations = [], 0
    cell = 0
    for lam in _GRID_LAMS:
        for a in _GRID_AS:
            for n, trials in alloc.items():
                cell_seed = streams.derive_seed(20262, cell)
                cell += 1
                for t in range(trials):
                    params = CarpetParams(lam=lam, n=n, K=a * a, a=a,
                                          check=True, trace=False)
                    try:
                        rec = run_carpet_hole(params,
                                              streams.derive_seed(cell_seed, t))
                        records.append(rec)
                    except PropertyViolationError:
                        violations += 1
    return records, violations, time.perf_counter() - t0


def criterion_2_conservation(profile="full") -> CriterionResult:
    """Exit + Frozen = n/2 and Frozen = sum of per-block flags, exactly."""
    t0 = time.perf_counter()
    records, _, _ = _carpet_grid(profile)
    bad = sum(1 for r in records
              if r.exit + r.frozen != r.n // 2 or r.frozen != sum(r.S))
    want = 1000 if profile == "full" else 1
    return _result(2, "conservation identities", t0,
                   bad == 0 and len(records) >= want,
                   f"{len(records)} runs over "
                   f"{len(_GRID_LAMS) * len(_GRID_AS)} cells, {bad} violations",
                   budget=120)


def criterion_3_properties(profile="full") -> CriterionResult:
    """Structural checks stayed silent throughout the same ensemble."""
    t0 = time.perf_counter()
    records, violations, _ = _carpet_grid(profile)
    return _result(3, "structural properties during runs", t0, violations == 0,
                   f"{violations} violations in {len(records)} check-mode runs",
                   budget=None)


# -- 4: mass-balance replay -------------------------------------------------

def criterion_4_replay(profile="full") -> CriterionResult:
    """Per-block frozen flags and left emissions replay exactly from arrivals."""
    t0 = time.perf_counter()
    alloc = {4: 34, 8: 33, 16: 33} if profile == "full" else {4: 6, 8: 3, 16: 3}
    lams = (0.2, 1.0, 5.0)
    geos = ((6, 36), (4, 16), (3, 9))
    failures = runs = 0
    for n, trials in alloc.items():
        for t in range(trials):
            lam = lams[t % len(lams)]
            a, K = geos[t % len(geos)]
            params = CarpetParams(lam=lam, n=n, K=K, a=a, check=False,
                                  trace=False)
            report = mass_balance_replay(params, streams.derive_seed(20264, n, t))
            rec = report.record
            ok = report.ok and rec.M[n] == 0 and rec.M[0] <= n // 2
            ok = ok and all(row.L_replay == rec.M[row.i - 1]
                            for row in report.rows)
            failures += not ok
            runs += 1
    return _result(4, "mass-balance replay", t0, failures == 0,
                   f"{runs} runs, every block compared, {failures} failures",
                   budget=120)


# -- 5: excursion-max law ---------------------------------------------------

def criterion_5_excursions(profile="full") -> CriterionResult:
    """Walked excursion maxima match 1/(z(z+1)) per bin within 4 SE."""
    t0 = time.perf_counter()
    n = 10**6 if profile == "full" else 2 * 10**5
    base = np.uint64(streams.stream_base(20265, 0, streams.LANE_SINGLE))
    counts = _kernels.excursion_max_batch(base, n, 11)
    worst = 0.0
    for z in range(1, 11):
        p = float(blockstats.excursion_max_pmf(z))
        se = math.sqrt(p * (1 - p) / n)
        worst = max(worst, abs(counts[z] / n - p) / se)
    return _result(5, "excursion-max law", t0, worst < 4.0,
                   f"{n} excursions, worst bin deviation {worst:.2f} SE",
                   budget=60)


# -- 6: drift identities ----------------------------------------------------

def criterion_6_drift(profile="full") -> CriterionResult:
    t0 = time.perf_counter()
    exact_bad = 0
    for lam in (Fraction(0), Fraction(1, 5), Fraction(1), Fraction(5)):
        for a, K in ((3, 9), (6, 36)):
            for v in range(0, min(a, K - 2 * a) + 1):
                spec = blockstats.JumpLawSpec(lam, a, K, v)
                e_y, e_yt = blockstats.drift(spec)
                if e_yt - e_y != (v + 1) * spec.delta:
                    exact_bad += 1
                if e_y != sum(x * p for x, p in spec.y_masses().items()):
                    exact_bad += 1

    n = 10**6 if profile == "full" else 10**5
    worst = 0.0
    rng = np.random.default_rng(20266)
    for v, sampler, which in ((1, blockstats.sample_Y_tilde, 1),
                              (3, blockstats.sample_Y_tilde, 1),
                              (6, blockstats.sample_Y_tilde, 1),
                              (3, blockstats.sample_Y, 0)):
        spec = blockstats.JumpLawSpec(Fraction(1), 6, 36, v)
        x = sampler(spec, rng, size=n)
        target = float(blockstats.drift(spec)[which])
        worst = max(worst, abs(x.mean() - target) / (x.std(ddof=1) / math.sqrt(n)))

    scale_ok = all(
        blockstats.paper_scale_drift_bound(lam, math.log(12) + 100 * (lam + 1))
        <= -48 for lam in (1.0, 2.0, 5.0))
    passed = exact_bad == 0 and worst < 4.0 and scale_ok
    return _result(6, "drift identities", t0, passed,
                   f"exact identities {exact_bad} failures, sampler worst "
                   f"{worst:.2f} SE over {n} draws, paper-scale bound <= -48: "
                   f"{scale_ok}", budget=60)


# -- 7: tail-bound formula --------------------------------------------------

def criterion_7_tail_formula(profile="full") -> CriterionResult:
    t0 = time.perf_counter()
    top = 10**4 if profile == "full" else 10**3
    bad = 0
    for a in range(12, top + 1, 6):
        # integrality of gamma*b needs a divisible by 6 for the first pair
        # and even for the second; multiples of 6 satisfy both
        e1 = blockstats.hoeffding_exponent(Fraction(a, 6), 1, -40)
        e2 = blockstats.hoeffding_exponent(Fraction(2 * a, 3), Fraction(3, 4), -40)
        if e1 != -507 * a or e2 != -841 * a or e1 > -a or e2 > -a:
            bad += 1
    closed_form = math.isclose(blockstats.hoeffding_tail(2, 1, -2),
                               math.exp(-4), rel_tol=1e-12)
    return _result(7, "tail-bound formula", t0, bad == 0 and closed_form,
                   f"a = 12..{top} step 6: exponents -507a and -841a <= -a, "
                   f"{bad} failures; closed form reproduced: {closed_form}",
                   budget=None)


# -- 8: left-emission frequency --------------------------------------------

def criterion_8_ruin(profile="full") -> CriterionResult:
    """Pooled chance of a left emission within two consecutive attempts."""
    t0 = time.perf_counter()
    n_runs = 550 if profile == "full" else 80
    records = [run_carpet_hole(
        CarpetParams(lam=0.5, n=8, K=36, a=6, check=False),
        streams.derive_seed(20268, s)) for s in range(n_runs)]
    attempts = sum(r.n_attempts for r in records)
    report = blockstats.hole_lemma_stats(records)
    stat = next(s for s in report.stats if s.name == "left-within-two-attempts")
    floor = 1 / 3 - 3 * stat.se
    want = 10**4 if profile == "full" else 10**3
    passed = attempts >= want and stat.estimate >= floor
    return _result(8, "left-emission frequency", t0, passed,
                   f"{attempts} attempts pooled, freq {stat.estimate:.4f} "
                   f"(n={stat.n}) vs floor 1/3 - 3SE = {floor:.4f}",
                   budget=120)


# -- 9: parallel determinism ------------------------------------------------

def criterion_9_determinism(profile="full") -> CriterionResult:
    t0 = time.perf_counter()
    trials = 30 if profile == "full" else 8
    spec = dict(kind="carpet-hole", master_seed=20269, trials=trials,
                lam=(0.2, 1.0), a=(3,), n=(4, 8))
    blobs = {}
    with tempfile.TemporaryDirectory() as tmp:
        for workers in (1, 8):
            jp = Path(tmp) / f"r{workers}.jsonl"
            cp = Path(tmp) / f"s{workers}.csv"
            ensemble.run_ensemble(
                ensemble.EnsembleSpec(**spec, parallelism=workers),
                jsonl_path=jp, csv_path=cp)
            blobs[workers] = (jp.read_bytes(), cp.read_bytes())
    same = blobs[1] == blobs[8]
    return _result(9, "parallel determinism", t0, same,
                   f"{trials} trials x 4 cells, parallelism 1 vs 8, "
                   f"byte-identical: {same}", budget=None)


# -- 10: freezing decay shape ----------------------------------------------

def criterion_10_decay(profile="full") -> CriterionResult:
    t0 = time.perf_counter()
    ns = (8, 16, 32) if profile == "full" else (8, 16)
    trials = 100 if profile == "full" else 30
    stats = []
    for n in ns:
        hits, fracs = [], []
        for t in range(trials):
            rec = run_carpet_hole(
                CarpetParams(lam=0.1, n=n, K=36, a=6, check=False),
                streams.derive_seed(202610, n, t))
            hits.append(float(rec.frozen >= n / 4))
            fracs.append(rec.frozen / n)
        arr = np.array(hits)
        se = float(arr.std(ddof=1) / math.sqrt(trials))
        stats.append((n, float(arr.mean()), se, float(np.mean(fracs))))
    ok = all(stats[i + 1][1] <= stats[i][1]
             + 3 * math.hypot(stats[i][2], stats[i + 1][2])
             for i in range(len(stats) - 1))
    shown = ", ".join(f"n={n}: {p:.3f}+-{se:.3f}" for n, p, se, _ in stats)
    return _result(10, "freezing decay shape", t0, ok,
                   f"{trials} trials each, P(Frozen >= n/4) {shown}, "
                   f"non-increasing within 3 SE: {ok}", budget=180)


# -- 11: phase-sweep monotonicity ------------------------------------------

def criterion_11_sweep(profile="full") -> CriterionResult:
    t0 = time.perf_counter()
    if profile == "full":
        zetas, trials = [round(0.1 * i, 1) for i in range(1, 10)], 300
    else:
        zetas, trials = [0.1, 0.3, 0.5, 0.7, 0.9], 60
    summaries = ensemble.sweep_phase([0.2, 2.0], zetas, L=200, k=10,
                                     trials=trials, seed=202611)
    worst = math.inf
    for lam in (0.2, 2.0):
        row = [s for s in summaries if s.params["lam"] == lam]
        row.sort(key=lambda s: s.params["zeta"])
        for lo, hi in zip(row, row[1:]):
            d = hi.estimates["p_active"] - lo.estimates["p_active"]
            tol = 3 * math.hypot(lo.errors["p_active"], hi.errors["p_active"])
            worst = min(worst, d + tol)
    ok = worst >= 0
    return _result(11, "phase-sweep monotonicity", t0, ok,
                   f"{trials} trials/cell, zeta grid {zetas[0]}..{zetas[-1]}, "
                   f"worst adjacent margin {worst:.3f} (>= 0 required)",
                   budget=300)


ALL_CRITERIA = (
    criterion_1_abelian,
    criterion_2_conservation,
    criterion_3_properties,
    criterion_4_replay,
    criterion_5_excursions,
    criterion_6_drift,
    criterion_7_tail_formula,
    criterion_8_ruin,
    criterion_9_determinism,
    criterion_10_decay,
    criterion_11_sweep,
)


def run_all(profile="full", echo=print) -> list[CriterionResult]:
    """Run every criterion in order, echoing one verdict line per criterion."""
    results = []
    for fn in ALL_CRITERIA:
        res = fn(profile)
        results.append(res)
        if echo is not None:
            echo(res.line())
    return results
