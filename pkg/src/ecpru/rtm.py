"""Reversible Turing machines on a fixed-size circular tape.

A configuration is embedded in a ring of ``tape_length + 1`` sites: one site
holds the machine state, the others hold the tape symbols in order.  The state
site sits immediately to the left of the scanned cell, so moving the head is a
swap of the state site with one of its neighbours.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import Iterable, Sequence

__all__ = [
    "Move",
    "Form",
    "Halt",
    "MachineError",
    "TransitionRule",
    "TuringMachine",
    "Configuration",
    "ReversibilityReport",
    "check_reversible",
    "successor",
    "duplicate",
    "input_configuration",
    "parse_machine",
    "dumps_machine",
    "load_machine",
    "sweep_machine",
    "parity_machine",
    "disjunction_machine",
    "builtin_machine",
    "BUILTIN_MACHINES",
]


class MachineError(ValueError):
    """Malformed machine description or rule."""


class Move(IntEnum):
    LEFT = -1
    STAY = 0
    RIGHT = 1


class Form(Enum):
    STANDARD = "std"
    REVERSE = "rev"


class Halt(Enum):
    """Outcome of :func:`successor` when no next configuration exists."""

    HALTED = "halted"
    STUCK = "stuck"


_MOVE_TOKENS = {"L": Move.LEFT, "R": Move.RIGHT, "S": Move.STAY}
_MOVE_NAMES = {v: k for k, v in _MOVE_TOKENS.items()}


@dataclass(frozen=True)
class TransitionRule:
    """One transition.

    Standard form reads and writes the scanned cell, then moves.  Reverse form
    moves first, then reads and writes the newly scanned cell.  A reverse rule
    with a stay move is the same thing as a standard one and is normalised.
    """

    form: Form
    state_in: int
    symbol_in: int
    state_out: int
    symbol_out: int
    move: Move

    def __post_init__(self):
        object.__setattr__(self, "move", Move(self.move))
        if self.form is Form.REVERSE and self.move is Move.STAY:
            object.__setattr__(self, "form", Form.STANDARD)

    @property
    def read_offset(self) -> int:
        """Chain offset of the read cell relative to the old state site."""
        if self.form is Form.STANDARD:
            return 1
        return 2 if self.move is Move.RIGHT else -1

    @property
    def write_offset(self) -> int:
        """Chain offset of the written cell relative to the new state site."""
        if self.form is Form.STANDARD:
            return {Move.RIGHT: -1, Move.LEFT: 2, Move.STAY: 1}[self.move]
        return 1


@dataclass(frozen=True)
class Configuration:
    """Tape contents, head cell and state.

    ``head`` is the chain position of the state site, in ``[0, tape_length]``.
    The scanned cell is ``tape[head % tape_length]``; positions 0 and
    ``tape_length`` both scan cell 0 but are distinct chain configurations.
    """

    tape: tuple[int, ...]
    head: int
    state: int


@dataclass(frozen=True)
class TuringMachine:
    symbols: tuple[str, ...]
    blank: int
    states: tuple[str, ...]
    initial: int
    accept: int
    reject: int
    rules: tuple[TransitionRule, ...]
    tape_length: int
    halt_accept: int = -1
    halt_reject: int = -1
    flavors: tuple[str, ...] = ()
    duplicated: bool = False
    _by_state: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        object.__setattr__(self, "symbols", tuple(self.symbols))
        object.__setattr__(self, "states", tuple(self.states))
        if self.halt_accept < 0:
            object.__setattr__(self, "halt_accept", self.accept)
        if self.halt_reject < 0:
            object.__setattr__(self, "halt_reject", self.reject)
        if not self.flavors:
            object.__setattr__(self, "flavors", ("",) * len(self.states))
        self._validate()
        by_state: dict[int, list[TransitionRule]] = {}
        for rule in self.rules:
            by_state.setdefault(rule.state_in, []).append(rule)
        object.__setattr__(self, "_by_state", by_state)

    def _validate(self):
        nq, ng = len(self.states), len(self.symbols)
        if len(set(self.states)) != nq or len(set(self.symbols)) != ng:
            raise MachineError("duplicate state or symbol names")
        for name, idx, bound in (
            ("blank", self.blank, ng),
            ("initial", self.initial, nq),
            ("accept", self.accept, nq),
            ("reject", self.reject, nq),
            ("halt_accept", self.halt_accept, nq),
            ("halt_reject", self.halt_reject, nq),
        ):
            if not 0 <= idx < bound:
                raise MachineError(f"{name} index {idx} out of range")
        if self.tape_length < 2:
            raise MachineError("tape_length must be at least 2")
        if len(self.flavors) != nq:
            raise MachineError("flavors must list one entry per state")
        halting = self.halting_states
        for i, r in enumerate(self.rules):
            where = f"rule {i} {self.format_rule(r) if self._refs_ok(r) else r}"
            if not self._refs_ok(r):
                raise MachineError(f"{where}: unknown state or symbol")
            if r.state_in in halting:
                raise MachineError(f"{where}: leaves a halting state")
            if r.state_out == self.initial:
                raise MachineError(f"{where}: enters the initial state")

    def _refs_ok(self, r: TransitionRule) -> bool:
        nq, ng = len(self.states), len(self.symbols)
        return 0 <= r.state_in < nq and 0 <= r.state_out < nq and 0 <= r.symbol_in < ng and 0 <= r.symbol_out < ng

    @property
    def halting_states(self) -> frozenset[int]:
        return frozenset((self.halt_accept, self.halt_reject))

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_symbols(self) -> int:
        return len(self.symbols)

    def rules_from(self, state: int) -> list[TransitionRule]:
        return self._by_state.get(state, [])

    def state_id(self, name: str) -> int:
        try:
            return self.states.index(name)
        except ValueError:
            raise MachineError(f"unknown state {name!r}") from None

    def symbol_id(self, name: str) -> int:
        try:
            return self.symbols.index(name)
        except ValueError:
            raise MachineError(f"unknown symbol {name!r}") from None

    def with_tape_length(self, tape_length: int) -> "TuringMachine":
        return TuringMachine(
            self.symbols, self.blank, self.states, self.initial, self.accept, self.reject,
            self.rules, tape_length, self.halt_accept, self.halt_reject, self.flavors, self.duplicated,
        )

    def format_rule(self, r: TransitionRule) -> str:
        q, q2 = self.states[r.state_in], self.states[r.state_out]
        x, x2 = self.symbols[r.symbol_in], self.symbols[r.symbol_out]
        m = _MOVE_NAMES[r.move]
        if r.form is Form.STANDARD:
            return f"std {q} {x} {q2} {x2} {m}"
        return f"rev {q} {m} {x} {q2} {x2}"

    def validate_configuration(self, c: Configuration) -> None:
        if len(c.tape) != self.tape_length:
            raise MachineError(f"tape has {len(c.tape)} cells, expected {self.tape_length}")
        if not 0 <= c.head <= self.tape_length:
            raise MachineError(f"head {c.head} outside [0, {self.tape_length}]")
        if not 0 <= c.state < self.n_states:
            raise MachineError(f"state {c.state} out of range")
        if any(not 0 <= s < self.n_symbols for s in c.tape):
            raise MachineError("tape symbol out of range")


# ---------------------------------------------------------------------------
# reversibility


@dataclass(frozen=True)
class ReversibilityReport:
    ok: bool
    violations: tuple[tuple[int, int, str], ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def check_reversible(tm: TuringMachine) -> ReversibilityReport:
    """Check forward determinism and backward determinism of the rule table.

    Two rules leaving the same state must inspect the same chain offset and
    read different symbols.  Two rules entering the same state must leave the
    head in the same relative place (unidirection) and write different
    symbols, so every configuration has at most one predecessor.
    """
    violations = []
    rules = tm.rules
    for i in range(len(rules)):
        a = rules[i]
        for j in range(i + 1, len(rules)):
            b = rules[j]
            if a.state_in == b.state_in:
                if a.read_offset != b.read_offset:
                    violations.append((i, j, f"{tm.states[a.state_in]} left with two different read positions"))
                elif a.symbol_in == b.symbol_in:
                    violations.append((i, j, f"{tm.states[a.state_in]} has two rules for one scanned symbol"))
            if a.state_out == b.state_out:
                if a.write_offset != b.write_offset:
                    violations.append((i, j, f"{tm.states[a.state_out]} reached with two different moves"))
                elif a.symbol_out == b.symbol_out:
                    violations.append((i, j, f"{tm.states[a.state_out]} reached writing one symbol twice"))
    return ReversibilityReport(not violations, tuple(violations))


# ---------------------------------------------------------------------------
# stepping


def _sites(tm: TuringMachine, c: Configuration) -> list:
    sites: list = list(c.tape)
    sites.insert(c.head, ("q", c.state))
    return sites


def _from_sites(sites: list) -> Configuration:
    head = next(i for i, s in enumerate(sites) if isinstance(s, tuple))
    tape = tuple(s for s in sites if not isinstance(s, tuple))
    return Configuration(tape, head, sites[head][1])


def _shift(sites: list, pos: int, move: int) -> int:
    """Swap the state at ``pos`` with its neighbour in direction ``move``."""
    if move == 0:
        return pos
    n = len(sites)
    other = (pos + move) % n
    sites[pos], sites[other] = sites[other], sites[pos]
    return other


def _try_rule(tm: TuringMachine, c: Configuration, rule: TransitionRule) -> Configuration | None:
    sites = _sites(tm, c)
    n = len(sites)
    pos = c.head
    if rule.form is Form.REVERSE:
        pos = _shift(sites, pos, int(rule.move))
    scanned = (pos + 1) % n
    if sites[scanned] != rule.symbol_in:
        return None
    sites[scanned] = rule.symbol_out
    sites[pos] = ("q", rule.state_out)
    if rule.form is Form.STANDARD:
        _shift(sites, pos, int(rule.move))
    return _from_sites(sites)


def successor(tm: TuringMachine, c: Configuration) -> Configuration | Halt:
    """Apply the unique applicable rule, or report halting/stuck."""
    if c.state in tm.halting_states:
        return Halt.HALTED
    found = None
    for rule in tm.rules_from(c.state):
        nxt = _try_rule(tm, c, rule)
        if nxt is not None:
            if found is not None:
                raise MachineError(f"nondeterministic step from state {tm.states[c.state]}")
            found = nxt
    return Halt.STUCK if found is None else found


def input_configuration(tm: TuringMachine, x: str | Sequence) -> Configuration:
    """Initial configuration for input ``x``: cells from 0, rest blank, state q0."""
    ids = [tm.symbol_id(s) if isinstance(s, str) else int(s) for s in x]
    if len(ids) > tm.tape_length:
        raise MachineError(f"input of length {len(ids)} exceeds tape_length {tm.tape_length}")
    if any(i == tm.blank for i in ids):
        raise MachineError("input may not contain the blank symbol")
    tape = tuple(ids) + (tm.blank,) * (tm.tape_length - len(ids))
    c = Configuration(tape, 0, tm.initial)
    tm.validate_configuration(c)
    return c


# ---------------------------------------------------------------------------
# duplication


def duplicate(tm: TuringMachine) -> TuringMachine:
    """Build the machine that, on halting, retraces its run in relabelled states.

    States ``q`` gain copies ``q^a`` and ``q^r``.  The accepting (rejecting)
    state hands over to its ``^a`` (``^r``) copy without touching the tape, and
    the inverted rule table then walks back to ``q0^a`` (``q0^r``).
    """
    if tm.duplicated:
        raise MachineError("machine is already duplicated")
    if any(r.form is not Form.STANDARD for r in tm.rules):
        raise MachineError("duplicate expects a machine written with standard-form rules")
    report = check_reversible(tm)
    if not report.ok:
        raise MachineError(f"machine is not reversible: {report.violations[0][2]}")
    nq = tm.n_states
    states = tm.states + tuple(f"{s}^a" for s in tm.states) + tuple(f"{s}^r" for s in tm.states)
    flavors = ("",) * nq + ("a",) * nq + ("r",) * nq
    rules = list(tm.rules)
    for offset in (nq, 2 * nq):
        for r in tm.rules:
            rules.append(
                TransitionRule(
                    Form.REVERSE if r.move is not Move.STAY else Form.STANDARD,
                    r.state_out + offset,
                    r.symbol_out,
                    r.state_in + offset,
                    r.symbol_in,
                    Move(-int(r.move)),
                )
            )
    for x in range(tm.n_symbols):
        rules.append(TransitionRule(Form.STANDARD, tm.accept, x, tm.accept + nq, x, Move.STAY))
        rules.append(TransitionRule(Form.STANDARD, tm.reject, x, tm.reject + 2 * nq, x, Move.STAY))
    return TuringMachine(
        tm.symbols, tm.blank, states, tm.initial, tm.accept, tm.reject, tuple(rules), tm.tape_length,
        halt_accept=tm.initial + nq, halt_reject=tm.initial + 2 * nq, flavors=flavors, duplicated=True,
    )


# ---------------------------------------------------------------------------
# text format


def parse_machine(text: str, tape_length: int | None = None) -> TuringMachine:
    """Parse the line-based machine format (see README)."""
    header: dict[str, list[str]] = {}
    rule_lines: list[tuple[int, list[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" in line:
            key, _, rest = line.partition(":")
            header[key.strip()] = rest.split()
        else:
            rule_lines.append((lineno, line.split()))
    for key in ("symbols", "blank", "states", "initial", "accept", "reject"):
        if key not in header:
            raise MachineError(f"missing header {key!r}")
    symbols, states = tuple(header["symbols"]), tuple(header["states"])

    def sid(name, lineno):
        if name not in states:
            raise MachineError(f"line {lineno}: unknown state {name!r}")
        return states.index(name)

    def yid(name, lineno):
        if name not in symbols:
            raise MachineError(f"line {lineno}: unknown symbol {name!r}")
        return symbols.index(name)

    def mv(tok, lineno):
        if tok not in _MOVE_TOKENS:
            raise MachineError(f"line {lineno}: move must be one of L, R, S")
        return _MOVE_TOKENS[tok]

    rules = []
    for lineno, toks in rule_lines:
        if len(toks) != 6 or toks[0] not in ("std", "rev"):
            raise MachineError(f"line {lineno}: expected 'std q x q2 x2 M' or 'rev q M x q2 x2'")
        if toks[0] == "std":
            _, q, x, q2, x2, m = toks
            rules.append(TransitionRule(Form.STANDARD, sid(q, lineno), yid(x, lineno), sid(q2, lineno), yid(x2, lineno), mv(m, lineno)))
        else:
            _, q, m, x, q2, x2 = toks
            rules.append(TransitionRule(Form.REVERSE, sid(q, lineno), yid(x, lineno), sid(q2, lineno), yid(x2, lineno), mv(m, lineno)))
    if tape_length is None:
        if "tape_length" not in header:
            raise MachineError("tape_length neither in the file nor given")
        tape_length = int(header["tape_length"][0])
    one = lambda key: header[key][0]  # noqa: E731
    duplicated = header.get("duplicated", ["false"])[0].lower() in ("true", "yes", "1")
    kwargs = {}
    if duplicated:
        kwargs = dict(
            halt_accept=states.index(one("halt_accept")),
            halt_reject=states.index(one("halt_reject")),
            flavors=tuple("a" if s.endswith("^a") else "r" if s.endswith("^r") else "" for s in states),
            duplicated=True,
        )
    return TuringMachine(
        symbols, symbols.index(one("blank")), states, states.index(one("initial")),
        states.index(one("accept")), states.index(one("reject")), tuple(rules), tape_length, **kwargs,
    )


def dumps_machine(tm: TuringMachine) -> str:
    lines = [
        "symbols: " + " ".join(tm.symbols),
        f"blank: {tm.symbols[tm.blank]}",
        "states: " + " ".join(tm.states),
        f"initial: {tm.states[tm.initial]}",
        f"accept: {tm.states[tm.accept]}",
        f"reject: {tm.states[tm.reject]}",
        f"tape_length: {tm.tape_length}",
    ]
    if tm.duplicated:
        lines += [
            "duplicated: true",
            f"halt_accept: {tm.states[tm.halt_accept]}",
            f"halt_reject: {tm.states[tm.halt_reject]}",
        ]
    lines += [tm.format_rule(r) for r in tm.rules]
    return "\n".join(lines) + "\n"


def load_machine(path: str | Path, tape_length: int | None = None) -> TuringMachine:
    return parse_machine(Path(path).read_text(), tape_length)


# ---------------------------------------------------------------------------
# bundled machines


def _build(symbols, states, rules: Iterable[tuple], tape_length, accept="qa", reject="qr") -> TuringMachine:
    rs = [
        TransitionRule(Form.STANDARD, states.index(q), symbols.index(x), states.index(q2), symbols.index(x2), _MOVE_TOKENS[m])
        for q, x, q2, x2, m in rules
    ]
    return TuringMachine(
        tuple(symbols), symbols.index("b"), tuple(states), states.index("q0"),
        states.index(accept), states.index(reject), tuple(rs), tape_length,
    )


def sweep_machine(tape_length: int = 4) -> TuringMachine:
    """Scan the input left to right and accept at the first blank.

    The first cell is blanked and its symbol carried in the state, which keeps
    the rule table injective; the carried symbol is written back at the end.
    """
    rules = [
        ("q0", "0", "c0", "b", "R"),
        ("q0", "1", "c1", "b", "R"),
        ("q0", "b", "qa", "b", "S"),
    ]
    for c in "01":
        rules += [
            (f"c{c}", "0", f"c{c}", "0", "R"),
            (f"c{c}", "1", f"c{c}", "1", "R"),
            (f"c{c}", "b", "qa", c, "S"),
        ]
    return _build(["b", "0", "1"], ["q0", "c0", "c1", "qa", "qr"], rules, tape_length)


def parity_machine(tape_length: int = 4) -> TuringMachine:
    """Accept inputs with an even number of ones, reject the rest."""
    rules = [
        ("q0", "0", "e0", "b", "R"),
        ("q0", "1", "o1", "b", "R"),
        ("q0", "b", "qa", "b", "S"),
    ]
    for c in "01":
        rules += [
            (f"e{c}", "0", f"e{c}", "0", "R"),
            (f"e{c}", "1", f"o{c}", "1", "R"),
            (f"o{c}", "0", f"o{c}", "0", "R"),
            (f"o{c}", "1", f"e{c}", "1", "R"),
            (f"e{c}", "b", "qa", c, "S"),
            (f"o{c}", "b", "qr", c, "S"),
        ]
    return _build(["b", "0", "1"], ["q0", "e0", "e1", "o0", "o1", "qa", "qr"], rules, tape_length)


def disjunction_machine(tape_length: int = 4) -> TuringMachine:
    """Accept iff the input contains a ``1``.

    The first cell becomes the marker ``m`` and the first ``1`` after it is
    blanked, which records enough history for the table to stay injective.
    Reading the marker again (after wrapping round a full tape) ends the scan.
    """
    rules = [
        ("q0", "0", "n", "m", "R"),
        ("q0", "1", "f", "m", "R"),
        ("q0", "b", "qr", "m", "S"),
        ("n", "0", "n", "0", "R"),
        ("n", "1", "f", "b", "R"),
        ("n", "b", "qr", "b", "S"),
        ("n", "m", "qr", "0", "S"),
        ("f", "0", "f", "0", "R"),
        ("f", "1", "f", "1", "R"),
        ("f", "b", "qa", "b", "S"),
        ("f", "m", "qa", "0", "S"),
    ]
    return _build(["b", "0", "1", "m"], ["q0", "n", "f", "qa", "qr"], rules, tape_length)


BUILTIN_MACHINES = {
    "sweep": sweep_machine,
    "parity": parity_machine,
    "disjunction": disjunction_machine,
}


def builtin_machine(name: str, tape_length: int) -> TuringMachine:
    try:
        return BUILTIN_MACHINES[name](tape_length)
    except KeyError:
        raise MachineError(f"unknown machine {name!r}; choose from {sorted(BUILTIN_MACHINES)}") from None
