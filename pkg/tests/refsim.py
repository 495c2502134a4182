"""Straight-line reference implementation of the emission procedure.

Deliberately naive and independent of arwlab.carpet: explicit particle
objects, literal visited sets, linear scans, and every toppling goes through
arwlab.core.topple on a real Configuration, so legality and particle
conservation are enforced on the spot.  Tests pin the production engine to
this implementation attempt for attempt on the same stacks.
"""

from __future__ import annotations

from arwlab import core, streams


class Particle:
    __slots__ = ("pos", "kind", "rest", "role", "order")

    def __init__(self, pos, kind, role=None, order=0):
        self.pos = pos
        self.kind = kind      # "carpet" | "free"
        self.rest = False     # True = sleeping
        self.role = role      # free particles: "thawed" | "hot" | "frozen"
        self.order = order


class RefSim:
    def __init__(self, lam, n, K, a, master_seed, run_index=0, m=0):
        self.lam, self.n, self.K, self.a = lam, n, K, a
        self.left_end = a
        self.right_end = n * K + K - a
        self.cfg = core.Configuration(self.left_end + 1, self.right_end - 1)
        self.stacks = core.StackSystem(master_seed, lam, run_index)
        self.holes = {}
        self.particles = []
        self._order = 0
        for x in range(self.left_end + 1, self.right_end):
            if x % K == 0:
                i = x // K
                self.holes[i] = x
                if i % 2 == 1:
                    self._add(Particle(x, "free", "thawed", self._next_order()))
            else:
                self._add(Particle(x, "carpet"))
        for _ in range(m):
            self._add(Particle(n * K + a, "free", "thawed", self._next_order()))
        self.M = [0] * (n + 1)
        self.Lcount = [0] * (n + 1)
        self.exit_right = 0
        self.attempts = []

    def _next_order(self):
        self._order += 1
        return self._order

    def _add(self, p):
        self.particles.append(p)
        self.cfg.add_particle(p.pos)

    def at(self, x):
        return [p for p in self.particles if p.pos == x]

    def block_of(self, x):
        for i in range(1, self.n + 1):
            if abs(x - i * self.K) <= self.a:
                return i
        return None

    def lane(self, x, attempt_block):
        if self.block_of(x) is not None:
            return streams.LANE_SINGLE
        j = x // self.K  # x lies strictly between block j and block j + 1
        if attempt_block == j:
            return streams.LANE_L
        assert attempt_block == j + 1, (x, attempt_block)
        return streams.LANE_R

    def topple_hot(self, hot, attempt_block):
        x = hot.pos
        instr = core.topple(self.cfg, self.stacks, x, self.lane(x, attempt_block))
        if instr == streams.SLEEP:
            here = self.at(x)
            if len(here) == 1:
                assert here[0] is hot
                hot.rest = True
            return instr
        dest = x + 1 if instr == streams.STEP_RIGHT else x - 1
        hot.pos = dest
        if self.cfg.lo <= dest <= self.cfg.hi:
            for p in self.at(dest):
                if p is not hot:
                    p.rest = False
        else:
            self.particles.remove(hot)  # absorbed at a domain end
        self.cross_check()
        return instr

    def cross_check(self):
        counts = {}
        rests = {}
        for p in self.particles:
            counts[p.pos] = counts.get(p.pos, 0) + 1
            rests[p.pos] = rests.get(p.pos, False) or p.rest
        for x in range(self.cfg.lo, self.cfg.hi + 1):
            s = self.cfg.state_at(x)
            c = counts.get(x, 0)
            if rests.get(x, False):
                assert c == 1 and s == -1, (x, c, s)
            else:
                assert s == c, (x, c, s)

    def choose(self):
        for i in range(1, self.n + 1):
            cands = [p for p in self.particles
                     if p.kind == "free" and p.role == "thawed"
                     and self.block_of(p.pos) == i]
            if cands:
                for target in (i * self.K, i * self.K - self.a, i * self.K + self.a):
                    here = [p for p in cands if p.pos == target]
                    if here:
                        return i, min(here, key=lambda p: p.order)
        return None

    def frozen_in(self, i):
        for p in self.particles:
            if p.kind == "free" and p.role == "frozen" and self.block_of(p.pos) == i:
                return p
        return None

    def carpet_at(self, x):
        here = [p for p in self.at(x) if p.kind == "carpet"]
        assert len(here) == 1, (x, len(here))
        return here[0]

    def attempt(self, i, hot):
        hot.role = "hot"
        K, a, c = self.K, self.a, i * self.K
        left_t, right_t = (i - 1) * K + a, (i + 1) * K - a
        frozen = self.frozen_in(i)
        if frozen is not None:
            visited = {hot.pos}
            while hot.pos not in (left_t, right_t):
                self.topple_hot(hot, i)
                visited.add(hot.pos)
            if set(range(c, c + a + 1)) <= visited:
                self.holes[i] = c
                frozen.kind = "carpet"
                frozen.role = None
                thawed = self.carpet_at(c)
                thawed.kind = "free"
                thawed.role = "thawed"
                thawed.order = self._next_order()
            outcome, steps = self._finish(i, hot, left_t), 1
        else:
            outcome, steps = self._via_hole(i, hot, left_t, right_t)
        self.attempts.append((i, outcome, self.holes[i] - c, steps))
        if outcome == "emit-left":
            self.Lcount[i] += 1
            self.M[i - 1] += 1
        elif outcome == "emit-right" and i == self.n:
            self.exit_right += 1

    def _finish(self, i, hot, left_t):
        if hot.pos == left_t:
            outcome = "emit-left"
        else:
            outcome = "emit-right"
        if self.block_of(hot.pos) is None:
            # arrived at a domain end: absorbed, already off the particle list
            hot.role = None
        else:
            hot.role = "thawed"
            hot.order = self._next_order()
        return outcome

    def _via_hole(self, i, hot, left_t, right_t):
        K, a, c = self.K, self.a, i * self.K
        h = self.holes[i]
        while hot.pos not in (left_t, right_t, h):
            self.topple_hot(hot, i)
        if hot.pos in (left_t, right_t):
            return self._finish(i, hot, left_t), 1
        steps = 0
        while True:
            assert self.at(h) == [hot] and not hot.rest
            instr = self.topple_hot(hot, i)
            steps += 1
            if instr == streams.SLEEP:
                assert hot.rest
                hot.kind = "carpet"
                hot.role = None
                if h == c + a - 1:
                    self.holes[i] = c + a
                    frozen = self.carpet_at(c + a)
                    assert not frozen.rest
                    frozen.kind = "free"
                    frozen.role = "frozen"
                    return "failure", steps
                self.holes[i] = h + 1
                hot = self.carpet_at(h + 1)
                assert not hot.rest
                hot.kind = "free"
                hot.role = "hot"
                h += 1
                continue
            excursion = {hot.pos}
            while hot.pos not in (left_t, right_t, h):
                self.topple_hot(hot, i)
                excursion.add(hot.pos)
            if hot.pos != h:
                return self._finish(i, hot, left_t), steps
            if instr == streams.STEP_LEFT:
                just_visited = sorted(x for x in excursion - {h} if c <= x <= c + a)
                if just_visited:
                    h2 = just_visited[0]
                    hot.kind = "carpet"
                    hot.role = None
                    hot = self.carpet_at(h2)
                    assert not hot.rest
                    hot.kind = "free"
                    hot.role = "hot"
                    self.holes[i] = h2
                    h = h2
                else:
                    assert h == c

    def run(self):
        while True:
            sel = self.choose()
            if sel is None:
                break
            self.attempt(*sel)
        frozen = sum(1 for p in self.particles
                     if p.kind == "free" and p.role == "frozen")
        exits = self.M[0] + self.exit_right
        return {
            "attempts": self.attempts,
            "M": self.M,
            "L": self.Lcount,
            "S": [0] + [1 if self.frozen_in(i) else 0 for i in range(1, self.n + 1)],
            "exit": exits,
            "frozen": frozen,
        }
