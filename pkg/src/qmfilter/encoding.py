"""Divide-and-conquer amplitude loading.

Each node of a binary tree over the (padded) probability vector gets one
qubit and one RY rotation that splits its mass between the left (lower
indices) and right halves. Subtrees are then merged bottom-up: the node's
qubit controls SWAPs between the leftmost paths of its two child
subtrees. After the last merge the leftmost path from the root carries the
encoded index, root qubit as most significant bit.

Qubit layout is heap order: node ``k`` of level ``l`` sits on qubit
``2**l - 1 + k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import EncodedSegment, next_pow2

#: CNOT-equivalent weight of each gate kind, used by the noise model.
DEFAULT_GATE_WEIGHTS = {"RY": 0, "X": 0, "CNOT": 1, "CSWAP": 8}


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    theta: float | None = None

    _ARITY = {"RY": 1, "X": 1, "CNOT": 2, "CSWAP": 3}

    def __post_init__(self):
        if self.kind not in self._ARITY:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        qubits = tuple(int(q) for q in self.qubits)
        if len(qubits) != self._ARITY[self.kind]:
            raise ValueError(f"{self.kind} acts on {self._ARITY[self.kind]} qubits")
        if len(set(qubits)) != len(qubits) or min(qubits) < 0:
            raise ValueError(f"invalid qubit indices {qubits}")
        if (self.kind == "RY") != (self.theta is not None):
            raise ValueError("only RY carries an angle")
        object.__setattr__(self, "qubits", qubits)

    @property
    def is_multi_qubit(self) -> bool:
        return len(self.qubits) > 1

    def shifted(self, offset: int) -> "Gate":
        return Gate(self.kind, tuple(q + offset for q in self.qubits), self.theta)

    def __str__(self) -> str:
        qs = " ".join(f"q{q}" for q in self.qubits)
        if self.theta is None:
            return f"{self.kind} {qs}"
        return f"{self.kind} {qs} {self.theta!r}"


def RY(target: int, theta: float) -> Gate:
    return Gate("RY", (target,), float(theta))


def CSWAP(control: int, a: int, b: int) -> Gate:
    return Gate("CSWAP", (control, a, b))


def CNOT(control: int, target: int) -> Gate:
    return Gate("CNOT", (control, target))


def X(target: int) -> Gate:
    return Gate("X", (target,))


def layered_depth(gates: Iterable[Gate], num_qubits: int) -> int:
    """Depth under as-soon-as-possible scheduling."""
    front = [0] * num_qubits
    for g in gates:
        layer = max(front[q] for q in g.qubits) + 1
        for q in g.qubits:
            front[q] = layer
    return max(front, default=0)


@dataclass(frozen=True)
class CircuitDescription:
    num_qubits: int
    gates: tuple[Gate, ...]
    output_register: tuple[int, ...]
    depth: int = field(default=-1)

    def __post_init__(self):
        gates = tuple(self.gates)
        out = tuple(int(q) for q in self.output_register)
        if self.num_qubits < 1:
            raise ValueError("circuit needs at least one qubit")
        for g in gates:
            if max(g.qubits) >= self.num_qubits:
                raise ValueError(f"gate {g} exceeds {self.num_qubits} qubits")
        if len(set(out)) != len(out) or any(not 0 <= q < self.num_qubits for q in out):
            raise ValueError(f"invalid output register {out}")
        object.__setattr__(self, "gates", gates)
        object.__setattr__(self, "output_register", out)
        object.__setattr__(self, "depth", layered_depth(gates, self.num_qubits))

    def count(self, kind: str) -> int:
        return sum(g.kind == kind for g in self.gates)

    def dumps(self) -> str:
        lines = [f"qubits {self.num_qubits}",
                 "output " + ",".join(str(q) for q in self.output_register)]
        lines += [str(g) for g in self.gates]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "CircuitDescription":
        num_qubits = None
        output: tuple[int, ...] = ()
        gates = []
        for lineno, line in enumerate(text.splitlines(), 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            head = parts[0]
            try:
                if head == "qubits":
                    num_qubits = int(parts[1])
                elif head == "output":
                    output = tuple(int(q) for q in parts[1].split(",")) if len(parts) > 1 else ()
                else:
                    qubits = tuple(int(p[1:]) for p in parts[1:] if p.startswith("q"))
                    theta = float(parts[-1]) if head == "RY" else None
                    gates.append(Gate(head, qubits, theta))
            except (IndexError, ValueError) as exc:
                raise ValueError(f"line {lineno}: cannot parse {line!r}: {exc}") from None
        if num_qubits is None:
            raise ValueError("missing 'qubits' header")
        return cls(num_qubits, tuple(gates), output)


@dataclass(frozen=True)
class AngleTree:
    """Per-level RY angles, level 0 is the root."""

    depth: int
    nodes: tuple[tuple[float, ...], ...]

    @property
    def num_nodes(self) -> int:
        return sum(len(level) for level in self.nodes)

    @property
    def padded_len(self) -> int:
        return 1 << self.depth

    def amplitudes(self) -> np.ndarray:
        """Leaf amplitudes implied by the angles (product along each root path)."""
        amps = np.ones(1)
        for level in self.nodes:
            half = np.asarray(level) / 2
            amps = np.stack([amps * np.cos(half), amps * np.sin(half)], axis=1).ravel()
        return amps


def angle_tree(seg: EncodedSegment | Sequence[float]) -> AngleTree:
    """Rotation angles that split each node's mass between its two halves.

    ``theta = 2 * atan2(sqrt(P_right), sqrt(P_left))`` so that RY(theta)
    puts ``sqrt(P_left / P_node)`` on ``|0>``. Empty nodes get ``theta = 0``.
    """
    probs = np.asarray(seg.probs if isinstance(seg, EncodedSegment) else seg, dtype=float)
    n = probs.size
    if n < 2 or n & (n - 1):
        raise ValueError(f"need a power-of-two length >= 2, got {n}")
    depth = n.bit_length() - 1
    levels = []
    # mass[k] of the current level, built bottom-up from the leaves
    sums = [probs]
    for _ in range(depth):
        sums.append(sums[-1].reshape(-1, 2).sum(axis=1))
    for lvl in range(depth):
        children = sums[depth - lvl - 1].reshape(-1, 2)
        left, right = children[:, 0], children[:, 1]
        theta = 2 * np.arctan2(np.sqrt(np.clip(right, 0, None)), np.sqrt(np.clip(left, 0, None)))
        levels.append(tuple(float(t) for t in theta))
    return AngleTree(depth, tuple(levels))


def _qubit(level: int, k: int) -> int:
    return (1 << level) - 1 + k


def _leftmost_path(level: int, k: int, depth: int) -> list[int]:
    return [_qubit(level + t, k << t) for t in range(depth - level)]


def combine(control: int, left: Sequence[int], right: Sequence[int],
            control_angle: float | None = None) -> list[Gate]:
    """Controlled swap of two equal-size registers.

    With the control in ``a|0> + b|1>`` this maps ``|psi>|phi>`` to
    ``a|0>|psi>|phi> + b|1>|phi>|psi>``. If ``control_angle`` is given the
    control is first rotated from ``|0>`` with RY.
    """
    left, right = list(left), list(right)
    if len(left) != len(right):
        raise ValueError("registers must have equal size")
    used = [control, *left, *right]
    if len(set(used)) != len(used):
        raise ValueError("control and registers must be disjoint")
    gates = [] if control_angle is None else [RY(control, control_angle)]
    gates += [CSWAP(control, a, b) for a, b in zip(left, right)]
    return gates


def build_loader(tree: AngleTree) -> CircuitDescription:
    """Compile an angle tree into the bottom-up loading circuit."""
    depth = tree.depth
    gates = [RY(_qubit(lvl, k), theta)
             for lvl, level in enumerate(tree.nodes)
             for k, theta in enumerate(level)]
    for lvl in range(depth - 2, -1, -1):
        for k in range(1 << lvl):
            left = _leftmost_path(lvl + 1, 2 * k, depth)
            right = _leftmost_path(lvl + 1, 2 * k + 1, depth)
            gates += combine(_qubit(lvl, k), left, right)
    num_qubits = (1 << depth) - 1
    return CircuitDescription(num_qubits, tuple(gates), tuple(_leftmost_path(0, 0, depth)))


def joint_circuit(template_seg: EncodedSegment, data_seg: EncodedSegment) -> CircuitDescription:
    """Template and data loaders side by side on disjoint qubits.

    The template loader comes first, so the joint output register reads
    template index bits followed by data index bits.
    """
    tc = build_loader(angle_tree(template_seg))
    dc = build_loader(angle_tree(data_seg))
    off = tc.num_qubits
    gates = tc.gates + tuple(g.shifted(off) for g in dc.gates)
    output = tc.output_register + tuple(q + off for q in dc.output_register)
    return CircuitDescription(tc.num_qubits + dc.num_qubits, gates, output)


def cswap_count(padded_len: int) -> int:
    """CSWAPs emitted for one loader: sum over levels of register size x combines."""
    depth = int(padded_len).bit_length() - 1
    return sum((depth - 1 - lvl) * (1 << lvl) for lvl in range(depth - 1))


@dataclass(frozen=True)
class ResourceReport:
    N: int
    L: int
    k_d: int
    k_t: int
    data_qubits: int          # per data segment loader
    template_qubits: int      # per template chunk loader
    runs: int
    total_loader_qubits: int  # every segment and chunk loaded at once
    combine_layers: int
    circuit_depth: int
    cswaps_per_run: int
    lags_per_segment: int
    total_shots: int
    outcomes_per_run: int
    # Decoder gate counts below are order-of-magnitude estimates with unit
    # constants: OR ~ N*L, AND+NOT ~ N*L*log2(N*L), OR depth ~ log2(L).
    or_gates: int
    and_not_gates: int
    or_depth: int
    and_depth: int

    def summary(self) -> str:
        def plural(n, word):
            return f"{n} {word}" + ("" if n == 1 else "s")
        return (f"{plural(self.data_qubits, 'data qubit')} + "
                f"{plural(self.template_qubits, 'template qubit')} per run; "
                f"{self.lags_per_segment} lags per segment; {self.runs} runs; "
                f"depth {self.circuit_depth}; {self.total_shots} shots")

    def as_rows(self) -> list[tuple[str, int]]:
        return [(k, getattr(self, k)) for k in self.__dataclass_fields__]


def resource_report(N: int, L: int, plan) -> ResourceReport:
    """Concrete qubit, depth, shot and decoder-size counts for a segment plan."""
    if N > L:
        raise ValueError(f"template length {N} exceeds data length {L}")
    k_d, k_t = plan.k_d, plan.k_t
    if k_t < 1 or k_d < k_t:
        raise ValueError(f"invalid plan: k_t={k_t}, k_d={k_d}")
    pd_len, pt_len = next_pow2(k_d), next_pow2(k_t)
    dq, tq = pd_len - 1, pt_len - 1
    runs = plan.n_segments * plan.n_chunks
    # any valid vectors give the same gate structure
    joint = joint_circuit(_uniform_segment(k_t), _uniform_segment(k_d))
    nl = max(N * L, 2)
    return ResourceReport(
        N=N, L=L, k_d=k_d, k_t=k_t,
        data_qubits=dq, template_qubits=tq, runs=runs,
        total_loader_qubits=plan.n_segments * dq + plan.n_chunks * tq,
        combine_layers=max(pd_len.bit_length() - 2, 0),
        circuit_depth=joint.depth,
        cswaps_per_run=cswap_count(pd_len) + cswap_count(pt_len),
        lags_per_segment=k_d - k_t + 1,
        total_shots=runs * plan.shots_per_segment,
        outcomes_per_run=pd_len * pt_len,
        or_gates=N * L,
        and_not_gates=int(math.ceil(N * L * math.log2(nl))),
        or_depth=int(math.ceil(math.log2(max(L, 2)))),
        and_depth=int(math.ceil(math.log2(max(math.log2(nl), 2)))),
    )


def _uniform_segment(k: int) -> EncodedSegment:
    from .core import preprocess

    return preprocess(np.arange(k, dtype=float), margin=1.0)
