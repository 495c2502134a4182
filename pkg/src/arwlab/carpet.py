"""Block/hole bookkeeping for emission runs on the comb initial state.

The initial state ("neat") is empty on multiples of 2K and holds one active
particle everywhere else on the open interval D_n = (a, nK + K - a).  Around
each center iK (i = 1..n) sits block i = [iK - a, iK + a]; the gaps between
blocks are transit regions whose sites carry dual instruction stacks (lanes
L/R picked by which side the walker last came from).  Each block has one
hole, the single site of the block without a resting "carpet" particle, and
the remaining particles are "free": n/2 of them, initially at the odd centers
K, 3K, ...  Free particles are thawed, hot (the one currently walking) or
frozen (parked for good at the block's right edge).

One attempt takes the hot particle through legal topplings only:

- Block with a frozen particle: every site of the block is occupied, so the
  walker does plain steps (sleep instructions no-op) until it reaches a
  neighbouring block edge.  If along the way it covered all of [iK, iK + a],
  the hole returns to iK, the frozen particle rejoins the carpet and the
  carpet particle at iK thaws into a new free particle.
- Otherwise the walker heads for the hole.  At the hole it is alone:  a sleep
  instruction turns it into a resting carpet particle and shifts the hole one
  site right (hitting iK + a freezes the new hot particle: a failed attempt);
  a step starts an excursion that either reaches a neighbouring block edge
  (successful emission) or returns to the hole, and a returning left
  excursion drags the hole left to the leftmost block site it visited, waking
  every sleeper it passed.

The run loop always picks the leftmost block holding a thawed particle
(preferring iK, then iK - a, then iK + a) and stops when none remain.  The
conservation identity Exit + Frozen = n/2 holds exactly, as do the
mass-balance equalities checked by mass_balance_replay: rerunning the prefix
domain D_i with M_i extra particles parked at iK + a on the *same* stacks
reproduces block i's frozen count and left-emission count.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels, streams
from .core import BudgetExceededError, Configuration, ParameterError
from .streams import LANE_L, LANE_R, LANE_SINGLE

EMIT_LEFT = "emit-left"
EMIT_RIGHT = "emit-right"
FAILURE = "failure"

RUN_RECORD_SCHEMA = "arwlab/run-record/v1"

# check-mode default: full property validation is O(n*K) per attempt and is
# affordable up to this many blocks
CHECK_MODE_MAX_N = 64


class PropertyViolationError(RuntimeError):
    """A structural property of the block/hole state failed."""

    def __init__(self, message: str, details: dict | None = None):
        super().__init__(message)
        self.details = details or {}


@dataclass(frozen=True)
class BlockLayout:
    """Geometry of the block decomposition of D_n = (a, nK + K - a)."""

    n: int
    K: int
    a: int

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"need at least one block, got n={self.n}")
        if self.a < 1:
            raise ParameterError(f"block half-width must be >= 1, got a={self.a}")
        if self.K <= 2 * self.a:
            raise ParameterError(
                f"block spacing must exceed the block width: K={self.K}, a={self.a}"
            )

    @property
    def left_end(self) -> int:
        return self.a

    @property
    def right_end(self) -> int:
        return self.n * self.K + self.K - self.a

    def center(self, i: int) -> int:
        return i * self.K

    def block_lo(self, i: int) -> int:
        return i * self.K - self.a

    def block_hi(self, i: int) -> int:
        return i * self.K + self.a

    def interior_size(self) -> int:
        return self.right_end - self.left_end - 1

    def block_of(self, site: int) -> int | None:
        i = round(site / self.K)
        if 1 <= i <= self.n and abs(site - i * self.K) <= self.a:
            return i
        return None


@dataclass
class CarpetParams:
    """Run parameters.  check=None enables property checks for n <= 64."""

    lam: float
    n: int
    K: int
    a: int
    m_boundary: int = 0
    check: bool | None = None
    trace: bool = True
    step_stats: bool = False
    max_topplings: int = 10**9

    def layout(self) -> BlockLayout:
        return BlockLayout(self.n, self.K, self.a)

    @property
    def check_enabled(self) -> bool:
        return self.n <= CHECK_MODE_MAX_N if self.check is None else self.check


@dataclass
class RunRecord:
    """Everything recorded about one run.  Vectors are indexed by block
    (entry 0 of L and S is padding; M[0] counts left exits)."""

    lam: float
    n: int
    K: int
    a: int
    m_boundary: int
    master_seed: int
    run_index: int
    exit: int
    frozen: int
    M: list[int]
    L: list[int]
    S: list[int]
    n_attempts: int
    topplings: int
    properties_checked: bool
    attempts: list[tuple[int, str, int, int]] | None = None
    step_stats: list[tuple[int, str, int, int]] | None = None

    def free_initial(self) -> int:
        return (self.n + 1) // 2 + self.m_boundary

    def to_json(self) -> str:
        d = {"schema": RUN_RECORD_SCHEMA}
        d.update(self.__dict__)
        if self.attempts is not None:
            d["attempts"] = [list(t) for t in self.attempts]
        if self.step_stats is not None:
            d["step_stats"] = [list(t) for t in self.step_stats]
        return json.dumps(d, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "RunRecord":
        d = json.loads(line)
        schema = d.pop("schema", None)
        if schema != RUN_RECORD_SCHEMA:
            raise ParameterError(f"unexpected record schema {schema!r}")
        if d.get("attempts") is not None:
            d["attempts"] = [tuple(t) for t in d["attempts"]]
        if d.get("step_stats") is not None:
            d["step_stats"] = [tuple(t) for t in d["step_stats"]]
        return cls(**d)


class CarpetState:
    """Mutable run state: ledger of holes and free particles per block,
    carpet occupancy/rest arrays, stack cursors and counters."""

    def __init__(self, params: CarpetParams, master_seed: int, run_index: int = 0):
        if params.lam < 0:
            raise ParameterError(f"sleep rate must be >= 0, got {params.lam}")
        if params.m_boundary < 0:
            raise ParameterError("added boundary mass must be >= 0")
        self.params = params
        self.layout = params.layout()
        self.lam = params.lam
        self.master_seed = master_seed
        self.run_index = run_index

        lay = self.layout
        size = lay.right_end + 1  # arrays indexed by absolute site, 0..right_end
        material = streams.derive_seed(master_seed, run_index)
        sites = np.arange(size)
        self.bases_single = streams.bases_for_sites(material, sites, LANE_SINGLE)
        self.bases_l = streams.bases_for_sites(material, sites, LANE_L)
        self.bases_r = streams.bases_for_sites(material, sites, LANE_R)
        self.cur_single = np.zeros(size, np.int64)
        self.cur_l = np.zeros(size, np.int64)
        self.cur_r = np.zeros(size, np.int64)

        n = lay.n
        self.hole = np.zeros(n + 1, np.int64)
        self.thawed_c = np.zeros(n + 1, np.int64)
        self.thawed_l = np.zeros(n + 1, np.int64)
        self.thawed_r = np.zeros(n + 1, np.int64)
        self.frozen = np.zeros(n + 1, np.int64)
        self.carpet = np.zeros(size, bool)
        self.asleep = np.zeros(size, bool)

        # neat state: holes at the centers, a carpet particle everywhere else,
        # free particles standing on the odd (occupied) centers
        self.carpet[lay.left_end + 1:lay.right_end] = True
        for i in range(1, n + 1):
            c = lay.center(i)
            self.hole[i] = c
            self.carpet[c] = False
            if i % 2 == 1:
                self.thawed_c[i] = 1
        self.thawed_r[n] += params.m_boundary

        self.exit_right = 0
        self.M = np.zeros(n + 1, np.int64)
        self.L = np.zeros(n + 1, np.int64)
        self.topplings = 0
        self.attempts: list[tuple[int, str, int, int]] = []
        self.step_counter: Counter = Counter()
        self.free_initial = (n + 1) // 2 + params.m_boundary

    # -- hot selection ----------------------------------------------------

    def choose_hot(self) -> tuple[int, int] | None:
        """Leftmost block with a thawed particle; inside a block prefer the
        center, then the left edge, then the right edge.  Pure."""
        lay = self.layout
        for i in range(1, lay.n + 1):
            if self.thawed_c[i]:
                return i, lay.center(i)
            if self.thawed_l[i]:
                return i, lay.block_lo(i)
            if self.thawed_r[i]:
                return i, lay.block_hi(i)
        return None

    def _take_hot(self, i: int, site: int) -> None:
        lay = self.layout
        if site == lay.center(i):
            arr = self.thawed_c
        elif site == lay.block_lo(i):
            arr = self.thawed_l
        elif site == lay.block_hi(i):
            arr = self.thawed_r
        else:
            raise PropertyViolationError(f"no thawed slot at site {site} in block {i}")
        if arr[i] < 1:
            raise PropertyViolationError(f"no thawed particle at site {site}")
        arr[i] -= 1
        # hole vacancy in the hot particle's block (unless pinned at the
        # right edge by a frozen particle): the only free-particle site the
        # hole can coincide with is the center
        if self.hole[i] != lay.block_hi(i) and self.hole[i] == lay.center(i):
            if self.thawed_c[i] != 0:
                raise PropertyViolationError(
                    f"hole at center of block {i} occupied by a non-hot particle"
                )

    # -- walking ----------------------------------------------------------

    def _walk(self, pos: int, hole: int, i: int) -> tuple[int, int, int, int]:
        """Run the kernel walk for an attempt from block i; wake sleepers on
        the visited range.  Returns (reason, pos, mn, mx)."""
        lay = self.layout
        budget = self.params.max_topplings - self.topplings
        if budget <= 0:
            raise BudgetExceededError(
                f"toppling budget {self.params.max_topplings} exhausted",
                partial=self._record(),
            )
        reason, pos, mn, mx, nt = _kernels.walk(
            pos, hole,
            (i - 1) * lay.K + lay.a, (i + 1) * lay.K - lay.a,
            lay.block_lo(i), lay.block_hi(i),
            self.bases_single, self.bases_l, self.bases_r,
            self.cur_single, self.cur_l, self.cur_r,
            1.0 + self.lam, budget,
        )
        self.topplings += int(nt)
        if reason == _kernels.REASON_BUDGET:
            raise BudgetExceededError(
                f"toppling budget {self.params.max_topplings} exhausted",
                partial=self._record(),
            )
        self._wake(i, mn, mx)
        return int(reason), int(pos), int(mn), int(mx)

    def _wake(self, i: int, mn: int, mx: int) -> None:
        # sleepers only ever sit on [iK, iK + a - 1]; every visited one wakes
        lo = max(mn, self.layout.center(i))
        hi = min(mx, self.layout.block_hi(i) - 1)
        if lo <= hi:
            self.asleep[lo:hi + 1] = False

    def _draw_at_hole(self, h: int) -> int:
        if self.topplings >= self.params.max_topplings:
            raise BudgetExceededError(
                f"toppling budget {self.params.max_topplings} exhausted",
                partial=self._record(),
            )
        k = int(self.cur_single[h])
        self.cur_single[h] = k + 1
        self.topplings += 1
        u = streams.uniform_at(int(self.bases_single[h]), k)
        return streams.kind_from_uniform(u, self.lam)

    # -- one attempt ------------------------------------------------------

    def attempt_emission(self, i: int, site: int) -> tuple[int, str, int, int]:
        """Run one attempt with the thawed particle at `site` of block i.
        Returns and records (block, outcome, hole offset after, steps)."""
        self._take_hot(i, site)
        lay = self.layout
        c = lay.center(i)
        if self.frozen[i]:
            outcome, steps = self._attempt_blocked(i, site)
        else:
            if self.hole[i] == lay.block_hi(i):
                raise PropertyViolationError(
                    f"hole of block {i} at the right edge without a frozen particle"
                )
            outcome, steps = self._attempt_via_hole(i, site)
        rec = (i, outcome, int(self.hole[i] - c), steps)
        self.attempts.append(rec)
        if outcome == EMIT_LEFT:
            self.L[i] += 1
            self.M[i - 1] += 1
            if i > 1:
                self.thawed_r[i - 1] += 1
        elif outcome == EMIT_RIGHT:
            if i == lay.n:
                self.exit_right += 1
            else:
                self.thawed_l[i + 1] += 1
        if self.params.check_enabled:
            self.check_properties()
        return rec

    def _attempt_blocked(self, i: int, start: int) -> tuple[str, int]:
        """Block i holds a frozen particle: every site is occupied, the hot
        particle walks straight through to a neighbouring block edge."""
        lay = self.layout
        c = lay.center(i)
        reason, _, mn, mx = self._walk(start, -1, i)
        if mn <= c and mx >= c + lay.a:
            # covered the whole right half: recall the hole, absorb the
            # frozen particle into the carpet, thaw the carpet center
            self._expect(bool(self.carpet[c]), "carpet missing at center")
            self.hole[i] = c
            self.frozen[i] = 0
            self.carpet[c + lay.a] = True
            self.asleep[c + lay.a] = False
            self.carpet[c] = False
            self.thawed_c[i] += 1
        return (EMIT_LEFT if reason == _kernels.REASON_LEFT else EMIT_RIGHT), 1

    def _attempt_via_hole(self, i: int, start: int) -> tuple[str, int]:
        lay = self.layout
        c = lay.center(i)
        h = int(self.hole[i])
        steps = 0
        if start != h:
            reason, _, _, _ = self._walk(start, h, i)
            if reason == _kernels.REASON_LEFT:
                return EMIT_LEFT, 1
            if reason == _kernels.REASON_RIGHT:
                return EMIT_RIGHT, 1
        record_steps = self.params.step_stats
        while True:
            v = h - c
            instr = self._draw_at_hole(h)
            steps += 1
            if instr == streams.SLEEP:
                # the hot particle rests and joins the carpet; the hole moves
                # right and its carpet particle becomes the new hot particle
                self._expect(not self.carpet[h], "sleeping onto an occupied hole")
                self.carpet[h] = True
                self.asleep[h] = True
                if record_steps:
                    self.step_counter[(v, "move", 1)] += 1
                if h == c + lay.a - 1:
                    self._expect(bool(self.carpet[c + lay.a]), "right edge carpet missing")
                    self.hole[i] = c + lay.a
                    self.carpet[c + lay.a] = False
                    self.frozen[i] = 1
                    return FAILURE, steps
                self._expect(bool(self.carpet[h + 1]) and not self.asleep[h + 1],
                             "active carpet missing right of the hole")
                self.carpet[h + 1] = False
                h += 1
                self.hole[i] = h
                continue
            if instr == streams.STEP_RIGHT:
                reason, _, _, _ = self._walk(h + 1, h, i)
                if reason == _kernels.REASON_RIGHT:
                    if record_steps:
                        self.step_counter[(v, "emit", 1)] += 1
                    return EMIT_RIGHT, steps
                self._expect(reason == _kernels.REASON_HOLE,
                             "right excursion crossed the hole")
                if record_steps:
                    self.step_counter[(v, "move", 0)] += 1
                continue
            # step left
            reason, _, mn, _ = self._walk(h - 1, h, i)
            if reason == _kernels.REASON_LEFT:
                if record_steps:
                    self.step_counter[(v, "emit", -1)] += 1
                return EMIT_LEFT, steps
            self._expect(reason == _kernels.REASON_HOLE,
                         "left excursion crossed the hole")
            if h > c:
                # drag the hole to the leftmost visited block site; the hot
                # particle fills the old hole, the carpet there takes over
                h2 = max(c, mn)
                self._expect(not self.asleep[h2], "visited carpet still asleep")
                self.carpet[h] = True
                self.asleep[h] = False
                self.carpet[h2] = False
                self.hole[i] = h2
                if record_steps:
                    self.step_counter[(v, "move", h2 - h)] += 1
                h = h2
            elif record_steps:
                self.step_counter[(v, "move", 0)] += 1

    def _expect(self, cond: bool, message: str) -> None:
        if not cond:
            raise PropertyViolationError(message, details={"state": self.summary()})

    # -- run loop ---------------------------------------------------------

    def run(self) -> RunRecord:
        if self.params.check_enabled:
            self.check_properties()
        while True:
            sel = self.choose_hot()
            if sel is None:
                break
            self.attempt_emission(*sel)
        rec = self._record()
        if rec.exit + rec.frozen != self.free_initial:
            raise PropertyViolationError(
                f"conservation broken: exit {rec.exit} + frozen {rec.frozen} "
                f"!= {self.free_initial}", details={"state": self.summary()},
            )
        return rec

    def _record(self) -> RunRecord:
        p = self.params
        return RunRecord(
            lam=p.lam, n=p.n, K=p.K, a=p.a, m_boundary=p.m_boundary,
            master_seed=self.master_seed, run_index=self.run_index,
            exit=int(self.M[0] + self.exit_right),
            frozen=int(self.frozen.sum()),
            M=self.M.tolist(), L=self.L.tolist(),
            S=self.frozen.tolist(),
            n_attempts=len(self.attempts), topplings=self.topplings,
            properties_checked=p.check_enabled,
            attempts=list(self.attempts) if p.trace else None,
            step_stats=(
                sorted((v, kind, val, cnt)
                       for (v, kind, val), cnt in self.step_counter.items())
                if p.step_stats else None
            ),
        )

    # -- validation and export -------------------------------------------

    def check_properties(self) -> None:
        """Full structural validation of the ledger; raises on violation."""
        lay = self.layout
        n = lay.n
        holes = self.hole[1:]
        centers = np.arange(1, n + 1) * lay.K
        if not ((holes >= centers) & (holes <= centers + lay.a)).all():
            raise PropertyViolationError("hole outside [iK, iK + a]",
                                         {"holes": holes.tolist()})
        interior = np.arange(lay.left_end + 1, lay.right_end)
        expected = np.ones(interior.size, bool)
        expected[holes - (lay.left_end + 1)] = False
        if not (self.carpet[interior] == expected).all():
            raise PropertyViolationError("carpet must cover every non-hole site")
        if int(self.carpet.sum()) != lay.interior_size() - n:
            raise PropertyViolationError("carpet count drifted")
        pos = np.flatnonzero(self.asleep)
        if pos.size:
            # every sleeper must sit in some block's [center, hole - 1]
            j = pos // lay.K
            good = (j >= 1) & (j <= n)
            jj = np.clip(j, 1, n)
            good &= (pos >= jj * lay.K) & (pos < self.hole[jj])
            if not good.all():
                x = int(pos[~good][0])
                i = min(max(round(x / lay.K), 1), n)
                c = lay.center(i)
                if c - lay.a <= x < c:
                    raise PropertyViolationError(
                        f"sleeper in the left half of block {i}")
                if self.hole[i] <= x <= c + lay.a:
                    raise PropertyViolationError(
                        f"sleeper between the hole and the right edge in block {i}")
                raise PropertyViolationError("sleeper outside all block interiors")
        if (self.thawed_c[1:] > 1).any():
            raise PropertyViolationError("more than one free particle at a center")
        if ((self.frozen[1:] < 0) | (self.frozen[1:] > 1)).any():
            raise PropertyViolationError("frozen count per block must be 0 or 1")
        pinned = holes == centers + lay.a
        if not (pinned == (self.frozen[1:] == 1)).all():
            raise PropertyViolationError(
                "frozen particle iff the hole sits at the right edge")
        free_now = int(self.thawed_c.sum() + self.thawed_l.sum()
                       + self.thawed_r.sum() + self.frozen.sum())
        if free_now + int(self.M[0]) + self.exit_right != self.free_initial:
            raise PropertyViolationError(
                "free particle count drifted",
                {"free_now": free_now, "exited": int(self.M[0]) + self.exit_right},
            )
        if self.M[n] != 0:
            raise PropertyViolationError("no emissions can enter block n from the right")
        bad = np.flatnonzero(self.L[1:] != self.M[:n])
        if bad.size:
            raise PropertyViolationError(
                f"left emissions from block {bad[0] + 1} out of sync with arrivals")

    def summary(self) -> dict:
        return {
            "hole": self.hole[1:].tolist(),
            "thawed_c": self.thawed_c[1:].tolist(),
            "thawed_l": self.thawed_l[1:].tolist(),
            "thawed_r": self.thawed_r[1:].tolist(),
            "frozen": self.frozen[1:].tolist(),
            "M": self.M.tolist(),
            "L": self.L[1:].tolist(),
            "exit_right": self.exit_right,
            "attempts": len(self.attempts),
        }

    def to_configuration(self) -> Configuration:
        """Current particle configuration on the open interval
        (left_end, right_end) as seen by the site-wise model; particles that
        reached the ends count as absorbed exits."""
        lay = self.layout
        cfg = Configuration(lay.left_end + 1, lay.right_end - 1)
        for x in range(lay.left_end + 1, lay.right_end):
            if self.carpet[x]:
                cfg.states[x - cfg.lo] = -1 if self.asleep[x] else 1
        for i in range(1, lay.n + 1):
            for site, cnt in (
                (lay.center(i), int(self.thawed_c[i])),
                (lay.block_lo(i), int(self.thawed_l[i])),
                (lay.block_hi(i), int(self.thawed_r[i]) + int(self.frozen[i])),
            ):
                for _ in range(cnt):
                    cfg.add_particle(site)
        cfg.exit_left = int(self.M[0])
        cfg.exit_right = self.exit_right
        return cfg


# -- public operations ----------------------------------------------------


def build_neat(n: int, K: int, a: int, lam: float, master_seed: int,
               run_index: int = 0, **kw) -> CarpetState:
    """Fresh neat state on D_n.  n must be even (half the centers occupied)."""
    if n % 2 != 0:
        raise ParameterError(f"block count must be even, got n={n}")
    return CarpetState(CarpetParams(lam=lam, n=n, K=K, a=a, **kw),
                       master_seed, run_index)


def build_neat_with_mass(n_or_i: int, K: int, a: int, m: int, lam: float,
                         master_seed: int, run_index: int = 0, **kw) -> CarpetState:
    """Neat state on D_i plus m extra thawed particles parked at iK + a.

    Used by the replay check; any i >= 1 is allowed (prefix domains of an
    even-n run include odd ones).  The parked particles are drained one at a
    time by the leftmost-priority rule, mirroring how emissions from the
    right arrive one by one in the full run.
    """
    if m < 0:
        raise ParameterError("added mass must be >= 0")
    return CarpetState(
        CarpetParams(lam=lam, n=n_or_i, K=K, a=a, m_boundary=m, **kw),
        master_seed, run_index,
    )


def choose_hot(state: CarpetState) -> tuple[int, int] | None:
    return state.choose_hot()


def attempt_emission(state: CarpetState, block: int, site: int):
    return state.attempt_emission(block, site)


def run_carpet_hole(params: CarpetParams, master_seed: int,
                    run_index: int = 0) -> RunRecord:
    """Run the full emission procedure from the neat state on D_n."""
    if params.n % 2 != 0:
        raise ParameterError(f"block count must be even, got n={params.n}")
    if params.m_boundary != 0:
        raise ParameterError("boundary mass only enters via replay domains")
    return CarpetState(params, master_seed, run_index).run()


@dataclass
class ReplayRow:
    i: int
    m: int
    S_full: int
    L_full: int
    S_replay: int
    L_replay: int

    @property
    def ok(self) -> bool:
        return self.S_full == self.S_replay and self.L_full == self.L_replay


@dataclass
class ReplayReport:
    record: RunRecord
    rows: list[ReplayRow]

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)


def mass_balance_replay(params: CarpetParams, master_seed: int,
                        run_index: int = 0) -> ReplayReport:
    """Check the exact replay identities block by block.

    After a full run on D_n with per-block arrival counts M, rerun each
    prefix domain D_i from the neat state with M[i] particles parked at
    iK + a, on the same stacks.  Block i must end with the same frozen count
    and the same number of left emissions, and the latter must equal M[i-1]:
    emissions out of a block are a function of what ever arrived at it.
    """
    rec = run_carpet_hole(params, master_seed, run_index)
    rows = []
    for i in range(1, params.n + 1):
        m_i = rec.M[i]
        sub = CarpetState(
            replace(params, n=i, m_boundary=m_i, trace=False, step_stats=False),
            master_seed, run_index,
        )
        sub_rec = sub.run()
        rows.append(ReplayRow(
            i=i, m=m_i,
            S_full=rec.S[i], L_full=rec.L[i],
            S_replay=sub_rec.S[i], L_replay=sub_rec.L[i],
        ))
    return ReplayReport(record=rec, rows=rows)
