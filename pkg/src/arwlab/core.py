"""Site-wise model on an integer interval.

A configuration assigns each site one of: empty, a single sleeping particle,
or k >= 1 active particles.  A site is unstable iff it holds an active
particle.  Toppling an unstable site consumes the next unused instruction of
that site's stack: a step moves one particle to the neighbour (waking a
sleeper there, sleeping + 1 = 2 active), a sleep instruction puts the particle
to rest when it is alone and is a consumed no-op otherwise.  Stabilization
topples unstable sites in some order until none remain; by the abelian
property the final configuration and the per-site toppling counts (the
odometer) do not depend on the order, which the test suite checks by brute
force over random orders.

Boundary policies: "absorb" removes particles stepping off the interval
(tallied per side), "closed" leaves the particle in place with the
instruction consumed.  Stabilization is guaranteed to terminate under absorb;
a toppling budget guards against misuse elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels, streams
from .streams import LANE_SINGLE, SLEEP, STEP_LEFT, STEP_RIGHT

SLEEPING = -1
EMPTY = 0

DEFAULT_TOPPLING_BUDGET = 10**9

# Tag folded into a trial seed before drawing an initial configuration, so
# that configuration draws and instruction stacks never share a stream.
CONFIG_DRAW_TAG = 11


class ParameterError(ValueError):
    """Invalid model or run parameters."""


class IllegalTopplingError(RuntimeError):
    """A toppling was attempted at a site with no active particle."""


class BudgetExceededError(RuntimeError):
    """The toppling budget ran out; carries partial results."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class Configuration:
    """Particle configuration on the interval [lo, hi]."""

    def __init__(self, lo: int, hi: int, boundary: str = "absorb"):
        if hi < lo:
            raise ParameterError(f"empty interval [{lo}, {hi}]")
        if boundary not in ("absorb", "closed"):
            raise ParameterError(f"unknown boundary policy {boundary!r}")
        self.lo = lo
        self.hi = hi
        self.boundary = boundary
        self.states = np.zeros(hi - lo + 1, dtype=np.int64)
        self.exit_left = 0
        self.exit_right = 0

    @classmethod
    def from_states(cls, lo: int, values, boundary: str = "absorb") -> "Configuration":
        cfg = cls(lo, lo + len(values) - 1, boundary)
        vals = np.asarray(values, dtype=np.int64)
        if (vals < SLEEPING).any():
            raise ParameterError("site states must be -1 (sleeping) or >= 0")
        cfg.states[:] = vals
        return cfg

    def idx(self, site: int) -> int:
        if not (self.lo <= site <= self.hi):
            raise ParameterError(f"site {site} outside [{self.lo}, {self.hi}]")
        return site - self.lo

    def state_at(self, site: int) -> int:
        return int(self.states[self.idx(site)])

    def set_state(self, site: int, value: int) -> None:
        if value < SLEEPING:
            raise ParameterError("site states must be -1 (sleeping) or >= 0")
        self.states[self.idx(site)] = value

    def add_particle(self, site: int) -> None:
        i = self.idx(site)
        s = self.states[i]
        self.states[i] = 2 if s == SLEEPING else s + 1

    def is_unstable(self, site: int) -> bool:
        return self.state_at(site) >= 1

    def unstable_sites(self) -> list[int]:
        return [int(i) + self.lo for i in np.flatnonzero(self.states >= 1)]

    def is_stable(self) -> bool:
        return not (self.states >= 1).any()

    def particles_inside(self) -> int:
        """Particle count on the interval, sleepers included."""
        s = self.states
        return int(s[s >= 1].sum() + (s == SLEEPING).sum())

    def copy(self) -> "Configuration":
        cfg = Configuration(self.lo, self.hi, self.boundary)
        cfg.states[:] = self.states
        cfg.exit_left = self.exit_left
        cfg.exit_right = self.exit_right
        return cfg

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Configuration)
            and self.lo == other.lo
            and self.hi == other.hi
            and self.boundary == other.boundary
            and bool((self.states == other.states).all())
            and self.exit_left == other.exit_left
            and self.exit_right == other.exit_right
        )

    def __repr__(self) -> str:
        return (
            f"Configuration(lo={self.lo}, hi={self.hi}, states={self.states.tolist()}, "
            f"exits=({self.exit_left}, {self.exit_right}))"
        )


class StackSystem:
    """Instruction stacks for one run: pure streams plus consumption cursors.

    Instructions are a pure function of (master_seed, run_index, site, lane);
    the cursors only record how many have been consumed at each (site, lane).
    Cursors are monotone and never rewind; replaying with a fresh StackSystem
    re-reads the identical instructions.
    """

    def __init__(self, master_seed: int, lam: float, run_index: int = 0):
        if lam < 0:
            raise ParameterError(f"sleep rate must be >= 0, got {lam}")
        self.master_seed = master_seed
        self.lam = lam
        self.run_index = run_index
        self.material = streams.derive_seed(master_seed, run_index)
        self.cursors: dict[tuple[int, int], int] = {}
        self._bases: dict[tuple[int, int], int] = {}

    def base(self, site: int, lane: int = LANE_SINGLE) -> int:
        key = (site, lane)
        b = self._bases.get(key)
        if b is None:
            b = streams.stream_base(self.material, site, lane)
            self._bases[key] = b
        return b

    def cursor(self, site: int, lane: int = LANE_SINGLE) -> int:
        return self.cursors.get((site, lane), 0)

    def instruction(self, site: int, lane: int, k: int) -> int:
        return streams.instruction_at(self.base(site, lane), k, self.lam)

    def peek(self, site: int, lane: int = LANE_SINGLE) -> int:
        return self.instruction(site, lane, self.cursor(site, lane))

    def consume(self, site: int, lane: int = LANE_SINGLE) -> int:
        key = (site, lane)
        k = self.cursors.get(key, 0)
        self.cursors[key] = k + 1
        return self.instruction(site, lane, k)

    def bases_array(self, lo: int, hi: int, lane: int) -> np.ndarray:
        """uint64 stack bases for sites lo..hi at one lane."""
        return streams.bases_for_sites(self.material, np.arange(lo, hi + 1), lane)

    def total_consumed(self) -> int:
        return sum(self.cursors.values())


def topple(config: Configuration, stacks: StackSystem, site: int,
           lane: int = LANE_SINGLE) -> int:
    """Apply the next unused instruction at an unstable site.

    Returns the instruction that was applied.  Raises IllegalTopplingError if
    the site holds no active particle.
    """
    i = config.idx(site)
    if config.states[i] < 1:
        raise IllegalTopplingError(
            f"site {site} is stable (state {int(config.states[i])})"
        )
    instr = stacks.consume(site, lane)
    if instr == SLEEP:
        if config.states[i] == 1:
            config.states[i] = SLEEPING
        return instr
    dest = site + 1 if instr == STEP_RIGHT else site - 1
    if config.lo <= dest <= config.hi:
        config.states[i] -= 1
        config.add_particle(dest)
    elif config.boundary == "absorb":
        config.states[i] -= 1
        if dest < config.lo:
            config.exit_left += 1
        else:
            config.exit_right += 1
    # closed boundary: the particle stays put, instruction consumed
    return instr


@dataclass
class StabilizeResult:
    """Outcome of a stabilization: odometer and bookkeeping."""

    lo: int
    odometer: np.ndarray
    topplings: int
    exit_left: int
    exit_right: int

    def at(self, site: int) -> int:
        i = site - self.lo
        if not (0 <= i < len(self.odometer)):
            raise ParameterError(f"site {site} outside odometer range")
        return int(self.odometer[i])


def stabilize(config: Configuration, stacks: StackSystem, policy: str = "leftmost",
              rng: np.random.Generator | None = None,
              max_topplings: int = DEFAULT_TOPPLING_BUDGET,
              engine: str = "auto") -> StabilizeResult:
    """Stabilize config in place, consuming from stacks (single lane).

    policy "leftmost" always topples the leftmost unstable site, "random"
    picks uniformly among unstable sites using rng.  engine "kernel" runs the
    compiled worklist loop (final state and odometer are policy-independent,
    so this is valid for any requested policy); "python" forces the literal
    per-policy loop; "auto" uses the kernel for "leftmost" and the literal
    loop otherwise.
    """
    if policy not in ("leftmost", "random"):
        raise ParameterError(f"unknown policy {policy!r}")
    if policy == "random" and rng is None and engine != "kernel":
        raise ParameterError("random policy needs an rng")
    if engine == "auto":
        engine = "kernel" if policy == "leftmost" else "python"
    if engine == "kernel":
        return _stabilize_kernel(config, stacks, max_topplings)
    if engine != "python":
        raise ParameterError(f"unknown engine {engine!r}")

    odo = np.zeros(config.hi - config.lo + 1, dtype=np.int64)
    total = 0
    while True:
        unstable = config.unstable_sites()
        if not unstable:
            break
        if total >= max_topplings:
            raise BudgetExceededError(
                f"toppling budget {max_topplings} exhausted",
                partial=StabilizeResult(config.lo, odo, total,
                                        config.exit_left, config.exit_right),
            )
        if policy == "leftmost":
            site = unstable[0]
        else:
            site = unstable[int(rng.integers(len(unstable)))]
        topple(config, stacks, site)
        odo[site - config.lo] += 1
        total += 1
    return StabilizeResult(config.lo, odo, total, config.exit_left, config.exit_right)


def _stabilize_kernel(config: Configuration, stacks: StackSystem,
                      max_topplings: int) -> StabilizeResult:
    bases = stacks.bases_array(config.lo, config.hi, LANE_SINGLE)
    odo, cur, exl, exr, total, done = _kernels.stabilize(
        config.states, bases, 1.0 + stacks.lam,
        config.boundary == "absorb", max_topplings,
    )
    config.exit_left += int(exl)
    config.exit_right += int(exr)
    for i in np.flatnonzero(cur):
        key = (config.lo + int(i), LANE_SINGLE)
        stacks.cursors[key] = stacks.cursors.get(key, 0) + int(cur[i])
    result = StabilizeResult(config.lo, odo, int(total),
                             config.exit_left, config.exit_right)
    if not done:
        raise BudgetExceededError(
            f"toppling budget {max_topplings} exhausted", partial=result
        )
    return result


def sample_density_config(zeta: float, half_width: int, seed: int,
                          boundary: str = "absorb") -> Configuration:
    """i.i.d. initial configuration on [-half_width, half_width].

    Density zeta in [0, 1] draws Bernoulli(zeta) particles per site; zeta in
    (1, 2] draws 1 + Bernoulli(zeta - 1).  The draw uses numpy's PCG64 seeded
    with derive_seed(seed, CONFIG_DRAW_TAG), independent of instruction
    stacks by construction.
    """
    if not (0.0 <= zeta <= 2.0):
        raise ParameterError(f"density must lie in [0, 2], got {zeta}")
    rng = np.random.default_rng(streams.derive_seed(seed, CONFIG_DRAW_TAG))
    n = 2 * half_width + 1
    if zeta <= 1.0:
        vals = (rng.random(n) < zeta).astype(np.int64)
    else:
        vals = 1 + (rng.random(n) < zeta - 1.0).astype(np.int64)
    return Configuration.from_states(-half_width, vals, boundary)


def odometer_at_origin(lam: float, zeta: float, half_width: int, seed: int,
                       max_topplings: int = DEFAULT_TOPPLING_BUDGET) -> tuple[int, StabilizeResult]:
    """Draw an i.i.d. configuration, stabilize it, read the origin odometer.

    This is the Monte Carlo primitive behind activity estimates: the chance
    that the origin topples at least k times under increasing interval sizes.
    Returns (odometer at 0, full StabilizeResult).
    """
    cfg = sample_density_config(zeta, half_width, seed)
    stacks = StackSystem(seed, lam)
    res = stabilize(cfg, stacks, max_topplings=max_topplings)
    return res.at(0), res
