"""Counter-based instruction streams.

Every site carries an endless stack of i.i.d. toppling instructions.  Rather
than storing stacks, instructions are a pure function of
(seed, site, lane, index): a splitmix64-style hash turns the tuple into a
uniform in [0, 1), which is sliced into step-right / step-left / sleep with
probabilities 1/(2(1+lam)), 1/(2(1+lam)), lam/(1+lam).  This makes replays
exact (rerunning with the same seed re-reads the same stacks) and keeps hot
loops allocation-free.

Sites in transit regions carry two independent stacks (lanes L and R) selected
by which side the walking particle last came from; ordinary sites use the
single lane.  The derivation convention, stable across versions:

    run material   = derive(master_seed, run_index)
    stack base     = derive(run_material, site, lane)
    instruction k  = mix64(base + (k + 1) * GOLDEN)  ->  uniform  ->  kind

`derive` folds each part into the seed with the same mixer, so any tuple of
integers (cell index, trial index, ...) can be used to split seeds without
correlation.  Negative integers (sites left of the origin) are folded via
their 64-bit two's complement.

The arithmetic here is plain Python masked to 64 bits; `_kernels` repeats it
in numba and a test pins the two implementations bit-for-bit.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

# Instruction kinds.  Order matches the threshold tests in kind_from_uniform.
STEP_RIGHT = 0
STEP_LEFT = 1
SLEEP = 2

KIND_NAMES = {STEP_RIGHT: "step-right", STEP_LEFT: "step-left", SLEEP: "sleep"}

# Lanes.  SINGLE for ordinary sites, L/R for the dual stacks on transit sites:
# L is read by particles whose last visited block lies to the left, R by
# particles coming from the right.
LANE_SINGLE = 0
LANE_L = 1
LANE_R = 2

LANE_NAMES = {LANE_SINGLE: "single", LANE_L: "L", LANE_R: "R"}


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *parts: int) -> int:
    """Fold integer parts into seed, one mix per part.  Stable convention."""
    x = seed & MASK64
    for p in parts:
        x = mix64(x ^ mix64(((p & MASK64) + GOLDEN) & MASK64))
    return x


def stream_base(run_material: int, site: int, lane: int = LANE_SINGLE) -> int:
    """Base hash of the instruction stack at (site, lane)."""
    return derive_seed(run_material, site, lane)


def uniform_at(base: int, k: int) -> float:
    """k-th uniform of the stack with the given base, in [0, 1)."""
    state = (base + ((k + 1) * GOLDEN)) & MASK64
    return (mix64(state) >> 11) * 2.0**-53


def kind_from_uniform(u: float, lam: float) -> int:
    """Slice a uniform into an instruction kind at sleep rate lam."""
    r = u * (1.0 + lam)
    if r < 0.5:
        return STEP_RIGHT
    if r < 1.0:
        return STEP_LEFT
    return SLEEP


def instruction_at(base: int, k: int, lam: float) -> int:
    """k-th instruction of the stack with the given base."""
    return kind_from_uniform(uniform_at(base, k), lam)


def instruction_probabilities(lam: float) -> tuple[float, float, float]:
    """(step-right, step-left, sleep) probabilities at sleep rate lam."""
    if lam < 0:
        raise ValueError(f"sleep rate must be >= 0, got {lam}")
    p_step = 0.5 / (1.0 + lam)
    return p_step, p_step, lam / (1.0 + lam)


# numpy twins of the scalar functions above, for bulk work.  Same bits.

_U = np.uint64


def mix64_vec(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z = (z ^ (z >> _U(30))) * _U(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U(27))) * _U(0x94D049BB133111EB)
    return z ^ (z >> _U(31))


def bases_for_sites(run_material: int, sites: np.ndarray, lane: int) -> np.ndarray:
    """stream_base for an array of sites at one lane, as uint64."""
    s = np.asarray(sites).astype(np.int64).view(np.uint64)
    x = _U(run_material & MASK64) ^ mix64_vec(s + _U(GOLDEN))
    x = mix64_vec(x)
    x = x ^ mix64(((lane & MASK64) + GOLDEN) & MASK64)
    return mix64_vec(x)


def uniforms_block(base: int, k0: int, count: int) -> np.ndarray:
    """Uniforms at indices k0 .. k0+count-1 of one stack, as float64."""
    ks = np.arange(k0 + 1, k0 + 1 + count, dtype=np.uint64)
    z = _U(base & MASK64) + ks * _U(GOLDEN)
    return (mix64_vec(z) >> _U(11)) * 2.0**-53
