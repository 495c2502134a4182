"""Jump laws and tail analysis for the hole process.

The hole of a block moves by one unit per departure event of the hot
particle: +1 on a sleep, 0 on an excursion that returns from the right (or a
vacuous left return at the centre), and -min(Z, v) on a left excursion, where
v is the current hole offset and Z is the maximum depth of a simple-random-
walk excursion, P(Z = z) = 1/(z(z+1)).  This module provides those laws
exactly (plain, and compensated by the per-event emission bound delta so that
the compensated law stochastically dominates the conditioned displacement),
their drifts in exact rational arithmetic, the printed Hoeffding-style tail
formula used with them, the auxiliary height chain driven by the plain law,
and empirical reports aggregated from run records.

Analytic identities are computed with Fractions end to end; floats appear
only in Monte Carlo sampling and in report aggregates.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field, asdict
from fractions import Fraction

import numpy as np

from .core import ParameterError

EMIT_LEFT = "emit-left"
EMIT_RIGHT = "emit-right"
FAILURE = "failure"


# -- excursion maximum -----------------------------------------------------

def excursion_max_pmf(z: int) -> Fraction:
    """P(Z = z) = 1/(z(z+1)) for the max depth of a walk excursion."""
    if z < 1:
        raise ParameterError(f"excursion maximum is >= 1, got {z}")
    return Fraction(1, z * (z + 1))


def excursion_max_cdf(z: int) -> Fraction:
    """P(Z <= z) = z/(z+1)."""
    if z < 0:
        raise ParameterError(f"negative excursion maximum {z}")
    return Fraction(z, z + 1)


def sample_excursion_max(rng: np.random.Generator, size=None):
    """Inverse-CDF sampling: smallest z with z/(z+1) >= U."""
    u = rng.random(size)
    z = np.ceil(u / (1.0 - u))
    z = np.maximum(z, 1.0)
    if size is None:
        return int(z)
    return z.astype(np.int64)


# -- the two jump laws -----------------------------------------------------

@dataclass(frozen=True)
class JumpLawSpec:
    """Parameters of the per-event hole displacement laws at offset v.

    delta = 1/(2(lam+1)(K-2a)) upper-bounds the probability that a single
    departure event ends in an emission on a given side.  The compensated law
    shifts delta of mass from the deepest left jump to +1; the residual mass
    at -v must stay non-negative, which is validated here.
    """

    lam: Fraction
    a: int
    K: int
    v: int

    def __post_init__(self):
        object.__setattr__(self, "lam", Fraction(self.lam))
        if self.lam < 0:
            raise ParameterError(f"sleep rate must be >= 0, got {self.lam}")
        if self.a < 1:
            raise ParameterError(f"block half-width must be >= 1, got {self.a}")
        if self.K <= 2 * self.a:
            raise ParameterError(f"need K > 2a, got K={self.K}, a={self.a}")
        if not 0 <= self.v <= self.a:
            raise ParameterError(f"offset v must lie in [0, {self.a}], got {self.v}")
        residual = self.y_tilde_masses()[-self.v]
        if residual < 0:
            raise ParameterError(
                f"compensated law has negative residual mass {residual} at -v"
            )

    @property
    def delta(self) -> Fraction:
        return Fraction(1, 2) / ((self.lam + 1) * (self.K - 2 * self.a))

    def y_masses(self) -> dict[int, Fraction]:
        """Plain law: +1 sleep mass, 0 right-return mass, -min(Z, v) left."""
        lam, v = self.lam, self.v
        half = Fraction(1, 2) / (lam + 1)
        if v == 0:
            return {1: lam / (lam + 1), 0: 2 * half}
        m = {1: lam / (lam + 1), 0: half}
        for k in range(1, v):
            m[-k] = half * Fraction(1, k * (k + 1))
        m[-v] = half * Fraction(1, v)  # tail mass P(Z >= v) = 1/v
        return m

    def y_tilde_masses(self) -> dict[int, Fraction]:
        """Compensated law: delta moved from the -v bucket to +1."""
        m = dict(self.y_masses())
        m[1] = m[1] + self.delta
        m[-self.v] = m[-self.v] - self.delta
        return m


def _cumulative_table(masses: dict[int, Fraction]):
    xs = np.array(sorted(masses), dtype=np.int64)
    cum = np.cumsum([float(masses[int(x)]) for x in xs])
    cum[-1] = 1.0
    return xs, cum


def _sample_from_masses(masses, rng, size):
    xs, cum = _cumulative_table(masses)
    u = rng.random(size)
    out = xs[np.searchsorted(cum, u, side="right")]
    if size is None:
        return int(out)
    return out


def sample_Y(spec: JumpLawSpec, rng: np.random.Generator, size=None):
    """Sample the plain displacement law of spec."""
    return _sample_from_masses(spec.y_masses(), rng, size)


def sample_Y_tilde(spec: JumpLawSpec, rng: np.random.Generator, size=None):
    """Sample the compensated displacement law of spec."""
    return _sample_from_masses(spec.y_tilde_masses(), rng, size)


def drift(spec: JumpLawSpec) -> tuple[Fraction, Fraction]:
    """Exact means of the plain and compensated laws.

    E[plain] = lam/(lam+1) - H_v/(2(lam+1)) with H_v the harmonic number
    (that is E[min(Z, v)]); the compensated mean exceeds it by exactly
    (v+1)*delta.
    """
    lam, v = spec.lam, spec.v
    harmonic = sum((Fraction(1, j) for j in range(1, v + 1)), Fraction(0))
    e_y = lam / (lam + 1) - harmonic / (2 * (lam + 1))
    return e_y, e_y + (v + 1) * spec.delta


def paper_scale_drift_bound(lam: float, log_a: float) -> float:
    """Upper bound on the drift at offsets v >= a/3, taking log(a) directly.

    1 - 1/(lam+1) - (log(a/3) - log 2)/(2(lam+1)); usable when a itself is
    far beyond any representable integer.
    """
    if lam < 0:
        raise ParameterError(f"sleep rate must be >= 0, got {lam}")
    return 1.0 - 1.0 / (lam + 1.0) - (log_a - math.log(6.0)) / (2.0 * (lam + 1.0))


# -- tail bound ------------------------------------------------------------

def hoeffding_exponent(b, gamma, nu) -> Fraction:
    """Exponent of the printed tail formula, exact for rational inputs.

    Bounds P(sum of gamma*b i.i.d. summands > -b) by exp of this value for
    summands with mean nu < -1/gamma.  The printed form also assumes the
    summands lie in [-b, 1]; that range is the caller's responsibility (it
    cannot be checked from these three numbers alone).
    """
    b, gamma, nu = Fraction(b), Fraction(gamma), Fraction(nu)
    if b <= 0 or gamma <= 0:
        raise ParameterError("b and gamma must be positive")
    if (gamma * b).denominator != 1:
        raise ParameterError(f"gamma*b must be an integer, got {gamma * b}")
    if nu >= -1 / gamma:
        raise ParameterError(f"need mean nu < -1/gamma, got nu={float(nu):g}")
    return -2 * gamma * (1 + gamma * nu) ** 2 * b


def hoeffding_tail(b, gamma, nu) -> float:
    """exp of hoeffding_exponent; underflows to 0.0 for large arguments."""
    return math.exp(float(hoeffding_exponent(b, gamma, nu)))


# -- auxiliary height chain ------------------------------------------------

def simulate_W(spec: JumpLawSpec, steps: int, rng: np.random.Generator,
               cap: int | None = None) -> np.ndarray:
    """Height chain started at 0 whose increment at height v follows the
    plain law at offset v (spec supplies lam; its own v is ignored).

    The chain lives on [0, infinity); left jumps are clipped at the current
    height so it never goes negative.  With cap set, the state is clipped
    above at cap, which keeps long-run occupation statistics meaningful for
    sleep rates large enough to make the free chain transient upward.
    """
    if steps < 0:
        raise ParameterError("steps must be >= 0")
    lam = float(spec.lam)
    p_up = lam / (lam + 1.0)
    p_flat = p_up + 0.5 / (lam + 1.0)
    w = np.zeros(steps + 1, dtype=np.int64)
    h = 0
    for t in range(1, steps + 1):
        u = rng.random()
        if u < p_up:
            h += 1
        elif u >= p_flat:
            z = int(sample_excursion_max(rng))
            h -= min(z, h)
        if cap is not None and h > cap:
            h = cap
        w[t] = h
    return w


def occupation_fraction(w: np.ndarray, lo: float, hi: float) -> float:
    """Fraction of time (excluding the start) the chain spends in [lo, hi]."""
    tail = w[1:]
    if tail.size == 0:
        return math.nan
    return float(((tail >= lo) & (tail <= hi)).mean())


# -- per-block trajectories from run records -------------------------------

@dataclass
class HoleProcessStats:
    """Hole trajectory of one block over one run, indexed by attempt."""

    block: int
    offsets: list[int]        # hole offset after each attempt
    steps: list[int]          # departure events consumed by each attempt
    outcomes: list[str]
    lefts: list[int]          # cumulative left emissions after each attempt
    frozen_flags: list[int]   # 1 iff the offset sits at the right edge
    tau: list[int]            # tau[l] = first attempt index with lefts == l
    g_flags: list[bool]       # per left-count epoch: never frozen inside it
    violations: Counter = field(default_factory=Counter)


def extract_hole_stats(record) -> list[HoleProcessStats]:
    """Split a traced run record into per-block hole trajectories.

    Counts structural violations instead of raising: a failure must pin the
    hole at the right edge, the pinned state persists until an attempt that
    recalls the hole to the centre, and the edge is unreachable otherwise.
    """
    if record.attempts is None:
        raise ParameterError("run record carries no attempt trace")
    a = record.a
    per_block: dict[int, list] = {}
    for att in record.attempts:
        per_block.setdefault(att[0], []).append(att)
    out = []
    for block in sorted(per_block):
        atts = per_block[block]
        offsets, steps, outcomes, lefts, flags = [], [], [], [], []
        violations = Counter()
        left = 0
        prev_off = 0
        for _, outcome, off, t in atts:
            if outcome == FAILURE and off != a:
                violations["failure-not-at-edge"] += 1
            if off == a and outcome != FAILURE and prev_off != a:
                violations["edge-without-failure"] += 1
            if prev_off == a and off != a and off != 0:
                violations["partial-recall"] += 1
            if outcome == EMIT_LEFT:
                left += 1
            offsets.append(off)
            steps.append(t)
            outcomes.append(outcome)
            lefts.append(left)
            flags.append(1 if off == a else 0)
            prev_off = off
        # attempt index 0 = before any attempt: zero emissions, not frozen
        lefts_full = [0] + lefts
        flags_full = [0] + flags
        tau = [next(j for j, l in enumerate(lefts_full) if l == ell)
               for ell in range(left + 1)]
        if tau != sorted(set(tau)):
            violations["tau-not-increasing"] += 1
        g_flags = [not any(f for l, f in zip(lefts_full, flags_full) if l == ell)
                   for ell in range(left + 1)]
        out.append(HoleProcessStats(block, offsets, steps, outcomes, lefts,
                                    flags, tau, g_flags, violations))
    return out


# -- reporting -------------------------------------------------------------

@dataclass
class Stat:
    name: str
    n: int
    estimate: float
    se: float
    reference: float | None = None
    note: str = ""


@dataclass
class Report:
    title: str
    stats: list[Stat]
    violations: dict[str, int]

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))

    def to_text(self) -> str:
        w = max([len(s.name) for s in self.stats] + [10])
        lines = [self.title,
                 f"{'statistic':<{w}}  {'n':>8}  {'estimate':>10}  "
                 f"{'se':>10}  {'reference':>10}  note"]
        for s in self.stats:
            ref = f"{s.reference:>10.4g}" if s.reference is not None else f"{'-':>10}"
            lines.append(f"{s.name:<{w}}  {s.n:>8}  {s.estimate:>10.4g}  "
                         f"{s.se:>10.2g}  {ref}  {s.note}")
        if any(self.violations.values()):
            lines.append(f"violations: {self.violations}")
        else:
            lines.append("violations: none")
        return "\n".join(lines)


def _freq_stat(name, hits, n, reference=None, note="") -> Stat:
    if n == 0:
        return Stat(name, 0, math.nan, math.nan, reference,
                    (note + " " if note else "") + "[insufficient samples]")
    p = hits / n
    return Stat(name, n, p, math.sqrt(p * (1 - p) / n), reference, note)


def hole_lemma_stats(records) -> Report:
    """Pool hole trajectories and report the deviation statistics.

    Conditional frequencies for: escaping above a/2 from a low or pinned
    hole; sitting strictly between a/2 and the edge; emitting left within
    two attempts (disjoint attempt pairs); an attempt consuming more than
    a^3 events; a quick emission from a low hole.  Reference columns carry
    the analytic bound lines; the two e^-100 lines hold at scales far beyond
    simulation, so they are reported without any pass/fail judgement.
    """
    records = list(records)
    if not records:
        raise ParameterError("no run records")
    a, K = records[0].a, records[0].K
    if any(r.a != a or r.K != K for r in records):
        raise ParameterError("records mix different block geometries")
    trajs = [t for r in records for t in extract_hole_stats(r)]

    escape_hits = escape_n = 0
    mid_hits = mid_n = 0
    pair_hits = pair_n = 0
    slow_hits = slow_n = 0
    quick_hits = quick_n = 0
    left_emits = emits = 0
    g_hits = g_n = 0
    tau_gaps = []
    violations = Counter()
    for t in trajs:
        violations.update(t.violations)
        prev = 0
        for off, outc, steps in zip(t.offsets, t.outcomes, t.steps):
            if prev <= a / 2 or prev == a:
                escape_n += 1
                escape_hits += off > a / 2
            mid_n += 1
            mid_hits += a / 2 < off < a
            slow_n += 1
            slow_hits += steps > a**3
            if prev <= a / 2:
                quick_n += 1
                quick_hits += steps < a / 2
            if outc in (EMIT_LEFT, EMIT_RIGHT):
                emits += 1
                left_emits += outc == EMIT_LEFT
            prev = off
        for j in range(0, len(t.outcomes) - 1, 2):
            pair_n += 1
            pair_hits += EMIT_LEFT in t.outcomes[j:j + 2]
        g_n += len(t.g_flags)
        g_hits += sum(t.g_flags)
        tau_gaps.extend(np.diff(t.tau).tolist())

    stats = [
        _freq_stat("escape-above-half", escape_hits, escape_n, math.exp(-100),
                   "upper bound at paper scale"),
        _freq_stat("strictly-mid-zone", mid_hits, mid_n, math.exp(-100),
                   "upper bound at paper scale"),
        _freq_stat("left-within-two-attempts", pair_hits, pair_n, 1 / 3,
                   "lower bound"),
        _freq_stat("events-above-a-cubed", slow_hits, slow_n, 1 / a,
                   "upper bound"),
        _freq_stat("quick-emission-low-hole", quick_hits, quick_n, 1 / (4 * a),
                   "upper bound"),
        _freq_stat("left-fraction-of-emissions", left_emits, emits,
                   0.5 - a / (2 * K), "lower bound"),
        _freq_stat("never-frozen-epoch", g_hits, g_n),
    ]
    if tau_gaps:
        gaps = np.asarray(tau_gaps, dtype=float)
        stats.append(Stat("attempts-per-left-emission", gaps.size,
                          float(gaps.mean()),
                          float(gaps.std(ddof=1) / math.sqrt(gaps.size))
                          if gaps.size > 1 else math.nan,
                          6.0, "upper bound"))
    return Report(
        title=f"hole process over {len(trajs)} block trajectories "
              f"({len(records)} runs, a={a}, K={K})",
        stats=stats,
        violations=dict(violations),
    )


@dataclass
class DominancePoint:
    v: int
    x: int
    model_cdf: float
    empirical_cdf: float
    se: float

    def ok(self, tol_se: float = 3.0) -> bool:
        return self.model_cdf <= self.empirical_cdf + tol_se * self.se


@dataclass
class DominanceReport:
    points: list[DominancePoint]
    events_per_offset: dict[int, int]
    tol_se: float = 3.0

    @property
    def ok(self) -> bool:
        return all(p.ok(self.tol_se) for p in self.points)

    def worst_margin_se(self) -> float:
        """min over points of (empirical - model)/se; ok iff >= -tol_se."""
        return min(((p.empirical_cdf - p.model_cdf) / p.se if p.se > 0
                    else math.inf) for p in self.points)

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))


def dominance_report(records, tol_se: float = 3.0,
                     min_samples: int = 200) -> DominanceReport:
    """Check that the compensated law sits stochastically above the observed
    hole displacement conditioned on no emission.

    Pools the per-offset step statistics of the records (they must be run
    with step statistics enabled) and compares, offset by offset, the exact
    CDF of the compensated law against the empirical CDF of the recorded
    no-emission displacements: dominance means the model CDF never exceeds
    the empirical one, here within tol_se binomial standard errors.
    """
    records = list(records)
    if not records:
        raise ParameterError("no run records")
    lam, a, K = records[0].lam, records[0].a, records[0].K
    if any(r.a != a or r.K != K or r.lam != lam for r in records):
        raise ParameterError("records mix different parameters")
    moves: dict[int, Counter] = {}
    for r in records:
        if r.step_stats is None:
            raise ParameterError("run record carries no step statistics")
        for v, kind, val, cnt in r.step_stats:
            if kind == "move":
                moves.setdefault(v, Counter())[val] += cnt

    points = []
    events = {}
    for v in sorted(moves):
        counts = moves[v]
        n = sum(counts.values())
        events[v] = n
        if n < min_samples:
            continue
        model = JumpLawSpec(Fraction(lam), a, K, v).y_tilde_masses()
        support = sorted(set(model) | set(counts))
        f_model = 0.0
        f_emp = 0.0
        for x in support[:-1]:  # both CDFs are 1 at the top point
            f_model += float(model.get(x, 0))
            f_emp += counts.get(x, 0) / n
            se = math.sqrt(max(f_emp * (1 - f_emp), 1e-12) / n)
            points.append(DominancePoint(v, x, f_model, f_emp, se))
    return DominanceReport(points, events, tol_se)
