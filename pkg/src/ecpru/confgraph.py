"""Configuration space enumeration and the successor graph's path/loop decomposition."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .rtm import Configuration, Halt, TuringMachine, input_configuration, successor

__all__ = [
    "GraphError",
    "Kind",
    "Component",
    "ConfigGraph",
    "config_count",
    "config_index",
    "config_at",
    "build_graph",
    "graph_summary",
    "dumps_graph",
]

DEFAULT_CAP = 10**7


class GraphError(RuntimeError):
    pass


class Kind(Enum):
    LOOP = "loop"
    PATH = "path"


def config_count(tm: TuringMachine) -> int:
    """Number of chain configurations with exactly one state site.

    The ring has ``L + 1`` sites: ``L + 1`` positions for the state site,
    ``|Q|`` states and ``|Γ|^L`` tape contents.
    """
    L = tm.tape_length
    return (L + 1) * tm.n_states * tm.n_symbols**L


def config_index(tm: TuringMachine, c: Configuration) -> int:
    g = tm.n_symbols
    code = 0
    for s in c.tape:
        code = code * g + s
    return (c.head * tm.n_states + c.state) * g**tm.tape_length + code


def config_at(tm: TuringMachine, index: int) -> Configuration:
    g, L = tm.n_symbols, tm.tape_length
    rest, code = divmod(index, g**L)
    head, state = divmod(rest, tm.n_states)
    tape = []
    for _ in range(L):
        code, s = divmod(code, g)
        tape.append(s)
    return Configuration(tuple(reversed(tape)), head, state)


@dataclass(frozen=True)
class Component:
    kind: Kind
    type_label: str
    nodes: tuple[int, ...]
    source_state: int
    sink_state: int

    @property
    def length(self) -> int:
        return len(self.nodes)


@dataclass
class ConfigGraph:
    tm: TuringMachine
    next: np.ndarray  # successor index or -1
    halted: np.ndarray  # bool: no successor because the state halts
    components: list[Component]
    component_of: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.next)

    def configuration(self, index: int) -> Configuration:
        return config_at(self.tm, index)

    def index(self, c: Configuration) -> int:
        return config_index(self.tm, c)

    def component_containing(self, c: Configuration | int) -> Component:
        i = c if isinstance(c, (int, np.integer)) else self.index(c)
        return self.components[int(self.component_of[i])]

    def path_of_input(self, x) -> Component:
        return self.component_containing(input_configuration(self.tm, x))

    def state_of(self, index: int) -> int:
        return config_at(self.tm, index).state


def _type_label(tm: TuringMachine, kind: Kind, source: int, sink: int) -> str:
    if kind is Kind.LOOP:
        return "T1"
    flavor = "a" if sink == tm.halt_accept else "r" if sink == tm.halt_reject else ""
    if source == tm.initial:
        return f"T5{flavor}" if flavor else "T3"
    return f"T4{flavor}" if flavor else "T2"


def build_graph(tm: TuringMachine, cap: int = DEFAULT_CAP) -> ConfigGraph:
    """Enumerate every configuration and split the successor graph into components."""
    n = config_count(tm)
    if n > cap:
        raise GraphError(
            f"{n} configurations ((L+1)·|Q|·|Γ|^L = {tm.tape_length + 1}·{tm.n_states}·{tm.n_symbols}^{tm.tape_length}) exceed cap {cap}"
        )
    nxt = np.full(n, -1, dtype=np.int64)
    halted = np.zeros(n, dtype=bool)
    for i in range(n):
        s = successor(tm, config_at(tm, i))
        if isinstance(s, Halt):
            halted[i] = s is Halt.HALTED
        else:
            nxt[i] = config_index(tm, s)
    indeg = np.bincount(nxt[nxt >= 0], minlength=n)
    if indeg.max(initial=0) > 1:
        bad = int(np.argmax(indeg))
        raise GraphError(f"configuration {bad} has {indeg[bad]} predecessors; machine is not reversible")

    component_of = np.full(n, -1, dtype=np.int64)
    states = (np.arange(n) // tm.n_symbols**tm.tape_length) % tm.n_states
    components: list[Component] = []

    def add(nodes: list[int], kind: Kind):
        source, sink = int(states[nodes[0]]), int(states[nodes[-1]])
        component_of[nodes] = len(components)
        components.append(Component(kind, _type_label(tm, kind, source, sink), tuple(nodes), source, sink))

    for start in np.flatnonzero(indeg == 0):
        nodes = [int(start)]
        while nxt[nodes[-1]] >= 0:
            nodes.append(int(nxt[nodes[-1]]))
        add(nodes, Kind.PATH)
    for start in range(n):
        if component_of[start] >= 0:
            continue
        nodes = [start]
        while (j := int(nxt[nodes[-1]])) != start:
            if j < 0 or component_of[j] >= 0:
                raise GraphError("inconsistent successor map while tracing a loop")
            nodes.append(j)
        add(nodes, Kind.LOOP)
    return ConfigGraph(tm, nxt, halted, components, component_of)


def graph_summary(graph: ConfigGraph) -> dict:
    tm = graph.tm
    counts: dict[str, int] = {}
    for comp in graph.components:
        counts[comp.type_label] = counts.get(comp.type_label, 0) + 1
    return {
        "tape_length": tm.tape_length,
        "n_states": tm.n_states,
        "n_symbols": tm.n_symbols,
        "n_nodes": graph.n_nodes,
        "n_components": len(graph.components),
        "type_counts": dict(sorted(counts.items())),
        "components": [
            {
                "id": i,
                "kind": c.kind.value,
                "type": c.type_label,
                "length": c.length,
                "source_state": tm.states[c.source_state],
                "sink_state": tm.states[c.sink_state],
                "nodes": list(c.nodes),
            }
            for i, c in enumerate(graph.components)
        ],
    }


def dumps_graph(graph: ConfigGraph) -> str:
    return json.dumps(graph_summary(graph), sort_keys=True)

