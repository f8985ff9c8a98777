"""Reference single-tape Turing machine interpreter.

Symbol 0 is the blank.  The tape is two-way infinite; a configuration keeps a
finite window of it and grows the window with blanks whenever the head walks
off either edge.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

__all__ = [
    "TuringMachine",
    "TmConfig",
    "RunResult",
    "UndefinedTransitionError",
    "tm_validate",
    "tm_step",
    "tm_run",
    "initial_config",
    "random_tm",
    "write_one_at_end",
    "format_trace",
]

BLANK = 0


class UndefinedTransitionError(RuntimeError):
    """No rule for (state, symbol) in a state that is not final."""


@dataclass(frozen=True)
class TuringMachine:
    """``rules[(state, read)] = (write, next_state, move)`` with ``move`` in {-1, 0, +1}.

    Final states (``halt`` and every accepting state) need no rules; they
    behave as if they carried the absorbing self-loop ``<r, z | r, z, 0>``.
    """

    n: int
    m: int
    rules: Mapping[tuple[int, int], tuple[int, int, int]]
    start: int = 0
    halt: int = 1
    accepting: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "rules", {tuple(k): tuple(v) for k, v in dict(self.rules).items()})
        object.__setattr__(self, "accepting", frozenset(self.accepting))

    @property
    def final_states(self) -> frozenset[int]:
        return self.accepting | {self.halt}

    def is_final(self, q: int) -> bool:
        return q == self.halt or q in self.accepting

    def transition(self, q: int, r: int) -> tuple[int, int, int]:
        """The rule applied in state ``q`` reading ``r``, including the final self-loop."""
        if self.is_final(q):
            return self.rules.get((q, r), (r, q, 0))
        try:
            return self.rules[(q, r)]
        except KeyError:
            raise UndefinedTransitionError(f"no rule for state {q} reading symbol {r}") from None


@dataclass(frozen=True)
class TmConfig:
    tape: tuple[int, ...]
    head: int
    state: int
    steps: int = 0

    def read(self) -> int:
        if 0 <= self.head < len(self.tape):
            return self.tape[self.head]
        return BLANK

    def normalized(self) -> "TmConfig":
        """Trim blanks on both sides while keeping the head cell inside the window."""
        nonblank = [i for i, s in enumerate(self.tape) if s != BLANK]
        lo = min([self.head] + nonblank[:1])
        hi = max([self.head] + nonblank[-1:])
        tape = tuple(self.tape[i] if 0 <= i < len(self.tape) else BLANK for i in range(lo, hi + 1))
        return TmConfig(tape, self.head - lo, self.state, self.steps)

    def same_as(self, other: "TmConfig") -> bool:
        """Equality of machine state, ignoring window padding and the step counter."""
        a, b = self.normalized(), other.normalized()
        return (a.tape, a.head, a.state) == (b.tape, b.head, b.state)

    def __str__(self) -> str:
        return f"state={self.state} head={self.head} tape={''.join(map(str, self.tape))}"


class RunResult(NamedTuple):
    halted: bool
    accepted: bool
    config: TmConfig
    trace: list[TmConfig] | None


def tm_validate(tm: TuringMachine) -> list[str]:
    problems = []
    if tm.n < 1 or tm.m < 1:
        return [f"machine needs n >= 1 and m >= 1 (got n={tm.n}, m={tm.m})"]
    for name, q in (("start", tm.start), ("halt", tm.halt)):
        if not 0 <= q < tm.n:
            problems.append(f"{name} state {q} out of range")
    for q in sorted(tm.accepting):
        if not 0 <= q < tm.n:
            problems.append(f"accepting state {q} out of range")
    for (q, r), (w, v, a) in sorted(tm.rules.items()):
        tag = f"rule <{r}, {q} | {w}, {v}, {a}>"
        if not 0 <= q < tm.n:
            problems.append(f"{tag}: state {q} out of range")
        if not 0 <= r < tm.m:
            problems.append(f"{tag}: read symbol {r} out of range")
        if not 0 <= w < tm.m:
            problems.append(f"{tag}: write symbol {w} out of range")
        if not 0 <= v < tm.n:
            problems.append(f"{tag}: next state {v} out of range")
        if a not in (-1, 0, 1):
            problems.append(f"{tag}: move {a} not in {{-1, 0, +1}}")
        if tm.is_final(q) and (w, v, a) != (r, q, 0):
            kind = "halt" if q == tm.halt else "final"
            problems.append(f"{tag}: {kind} not absorbing")
    for q in range(tm.n):
        if tm.is_final(q):
            continue
        for r in range(tm.m):
            if (q, r) not in tm.rules:
                problems.append(f"missing rule for state {q} reading symbol {r}")
    return problems


def initial_config(tm: TuringMachine, tape: Sequence[int]) -> TmConfig:
    return TmConfig(tuple(tape) or (BLANK,), 0, tm.start, 0)


def tm_step(tm: TuringMachine, c: TmConfig) -> TmConfig:
    tape = list(c.tape)
    head = c.head
    if head < 0:
        tape[:0] = [BLANK] * -head
        head = 0
    if head >= len(tape):
        tape.extend([BLANK] * (head - len(tape) + 1))
    write, nxt, move = tm.transition(c.state, tape[head])
    tape[head] = write
    head += move
    if head < 0:
        tape.insert(0, BLANK)
        head = 0
    elif head == len(tape):
        tape.append(BLANK)
    return TmConfig(tuple(tape), head, nxt, c.steps + 1)


def tm_run(tm: TuringMachine, tape: Sequence[int], max_steps: int = 10_000,
           trace: bool = False) -> RunResult:
    """Run from ``(tape, head=0, start)`` until a final state or ``max_steps`` steps."""
    if max_steps < 0:
        raise ValueError("max_steps must be >= 0")
    c = initial_config(tm, tape)
    history = [c] if trace else None
    while not tm.is_final(c.state) and c.steps < max_steps:
        c = tm_step(tm, c)
        if history is not None:
            history.append(c)
    halted = tm.is_final(c.state)
    return RunResult(halted, c.state in tm.accepting, c, history)


def format_trace(configs: Sequence[TmConfig]) -> str:
    return "".join(
        f"t={c.steps} state={c.state} head={c.head} tape={''.join(map(str, c.tape))}\n"
        for c in configs
    )


def random_tm(n: int, m: int, seed: int, accepting: bool = True) -> TuringMachine:
    """Uniformly random rules on states ``0..n-2``; state ``n-1`` halts."""
    if n < 2 or m < 2:
        raise ValueError("random machines need n >= 2 and m >= 2")
    rng = random.Random(seed)
    rules = {
        (q, r): (rng.randrange(m), rng.randrange(n), rng.choice((-1, 0, 1)))
        for q in range(n - 1)
        for r in range(m)
    }
    acc = frozenset({n - 1}) if accepting else frozenset()
    return TuringMachine(n, m, rules, start=0, halt=n - 1, accepting=acc)


def write_one_at_end() -> TuringMachine:
    """Scan right over 1s, write a 1 on the first blank, halt (accepting)."""
    rules = {
        (0, 1): (1, 0, +1),
        (0, 0): (1, 1, 0),
    }
    return TuringMachine(2, 2, rules, start=0, halt=1, accepting=frozenset({1}))
