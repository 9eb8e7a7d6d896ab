"""Dense statevector execution, shot sampling and Pauli-trajectory noise.

Bit order: qubit 0 is the most significant bit of every basis index and of
every bitstring.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import EncodedSegment
from .encoding import DEFAULT_GATE_WEIGHTS, CircuitDescription, Gate

MAX_QUBITS = 24


def make_rng(seed, *stream) -> np.random.Generator:
    """Philox generator for the stream ``(seed, *stream)``.

    Independent streams per (segment, chunk) keep parallel runs reproducible
    regardless of execution order. A Generator passes through unchanged.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    num_qubits: int

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.size != 1 << self.num_qubits:
            raise ValueError("amplitude count must be 2**num_qubits")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1) > 1e-10:
            raise ValueError(f"state is not normalised (|psi|^2 = {norm})")
        amps = amps.copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def marginal(self, qubits: Sequence[int]) -> np.ndarray:
        """Distribution over ``qubits`` (first listed = most significant)."""
        return marginal_probs(self.probabilities(), self.num_qubits, qubits)


def marginal_probs(probs: np.ndarray, num_qubits: int, qubits: Sequence[int]) -> np.ndarray:
    qubits = list(qubits)
    t = np.asarray(probs).reshape([2] * num_qubits)
    others = tuple(q for q in range(num_qubits) if q not in qubits)
    t = t.sum(axis=others) if others else t
    # remaining axes are in ascending qubit order; reorder to the request
    kept = sorted(qubits)
    t = np.transpose(t, [kept.index(q) for q in qubits])
    return t.reshape(-1)


def _ry(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


_PAULI = (
    None,
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def _apply_1q(psi: np.ndarray, matrix: np.ndarray, q: int) -> np.ndarray:
    psi = np.tensordot(matrix, psi, axes=([1], [q]))
    return np.moveaxis(psi, 0, q)


def _index(n: int, fixed: Mapping[int, int]) -> tuple:
    idx = [slice(None)] * n
    for q, v in fixed.items():
        idx[q] = v
    return tuple(idx)


def _swap_slices(psi: np.ndarray, a: tuple, b: tuple) -> None:
    tmp = psi[a].copy()
    psi[a] = psi[b]
    psi[b] = tmp


def apply_gate(psi: np.ndarray, gate: Gate) -> np.ndarray:
    """Apply ``gate`` to a state tensor of shape ``[2] * n``."""
    n = psi.ndim
    if gate.kind == "RY":
        return _apply_1q(psi, _ry(gate.theta), gate.qubits[0])
    if gate.kind == "X":
        return np.flip(psi, axis=gate.qubits[0]).copy()
    psi = psi.copy()
    if gate.kind == "CNOT":
        c, t = gate.qubits
        _swap_slices(psi, _index(n, {c: 1, t: 0}), _index(n, {c: 1, t: 1}))
    elif gate.kind == "CSWAP":
        c, a, b = gate.qubits
        _swap_slices(psi, _index(n, {c: 1, a: 0, b: 1}), _index(n, {c: 1, a: 1, b: 0}))
    else:
        raise ValueError(f"unsupported gate {gate.kind}")
    return psi


def apply_pauli(psi: np.ndarray, qubits: Sequence[int], code: int) -> np.ndarray:
    """Apply the Pauli string encoded base-4 in ``code`` (first qubit = highest digit)."""
    for pos, q in enumerate(reversed(qubits)):
        p = (code >> (2 * pos)) & 3
        if p:
            psi = _apply_1q(psi, _PAULI[p], q)
    return psi


def _check_size(circuit: CircuitDescription, max_qubits: int) -> None:
    if circuit.num_qubits > max_qubits:
        raise ValueError(f"{circuit.num_qubits} qubits exceeds the simulator cap of {max_qubits}")


def _run(circuit: CircuitDescription, insertions: Mapping[int, int] | None = None,
         initial: np.ndarray | None = None) -> np.ndarray:
    n = circuit.num_qubits
    if initial is None:
        psi = np.zeros([2] * n, dtype=complex)
        psi[(0,) * n] = 1.0
    else:
        psi = np.asarray(initial, dtype=complex).reshape([2] * n)
    for i, gate in enumerate(circuit.gates):
        psi = apply_gate(psi, gate)
        if insertions and insertions.get(i):
            psi = apply_pauli(psi, gate.qubits, insertions[i])
    return psi.reshape(-1)


def simulate(circuit: CircuitDescription, max_qubits: int = MAX_QUBITS,
             initial: StateVector | None = None) -> StateVector:
    """Exact statevector after applying every gate to ``|0...0>`` (or ``initial``)."""
    _check_size(circuit, max_qubits)
    if initial is not None and initial.num_qubits != circuit.num_qubits:
        raise ValueError("initial state width does not match the circuit")
    init = None if initial is None else initial.amplitudes
    return StateVector(_run(circuit, initial=init), circuit.num_qubits)


@dataclass(frozen=True)
class ShotHistogram:
    """Counts per measured bitstring."""

    counts: Mapping[str, int]
    total_shots: int
    num_bits: int = field(default=-1)

    def __post_init__(self):
        counts = {k: int(v) for k, v in self.counts.items() if int(v) != 0}
        if self.total_shots <= 0:
            raise ValueError("total_shots must be positive")
        if any(v < 0 for v in counts.values()):
            raise ValueError("counts must be nonnegative")
        if sum(counts.values()) != self.total_shots:
            raise ValueError("counts do not sum to total_shots")
        widths = {len(k) for k in counts}
        nb = self.num_bits if self.num_bits >= 0 else (widths.pop() if len(widths) == 1 else -1)
        if len(widths) > 1 or any(len(k) != nb or set(k) - {"0", "1"} for k in counts):
            raise ValueError("bitstrings must be equal-length strings of 0/1")
        object.__setattr__(self, "counts", dict(sorted(counts.items())))
        object.__setattr__(self, "num_bits", nb)

    @classmethod
    def from_array(cls, counts: np.ndarray, num_bits: int) -> "ShotHistogram":
        counts = np.asarray(counts)
        nz = np.flatnonzero(counts)
        return cls({format(int(i), f"0{num_bits}b"): int(counts[i]) for i in nz},
                   int(counts.sum()), num_bits)

    def to_array(self) -> np.ndarray:
        arr = np.zeros(1 << self.num_bits, dtype=np.int64)
        for k, v in self.counts.items():
            arr[int(k, 2)] = v
        return arr

    def marginal(self, positions: Sequence[int]) -> "ShotHistogram":
        out: Counter = Counter()
        for k, v in self.counts.items():
            out["".join(k[p] for p in positions)] += v
        return ShotHistogram(dict(out), self.total_shots, len(positions))

    def merge(self, other: "ShotHistogram") -> "ShotHistogram":
        if self.num_bits != other.num_bits:
            raise ValueError("cannot merge histograms of different widths")
        out = Counter(self.counts)
        out.update(other.counts)
        return ShotHistogram(dict(out), self.total_shots + other.total_shots, self.num_bits)

    def dumps(self) -> str:
        lines = [f"# shots={self.total_shots}", "bitstring,count"]
        lines += [f"{k},{v}" for k, v in self.counts.items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ShotHistogram":
        total = None
        counts = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                if key.strip() == "shots":
                    total = int(val)
                continue
            if line == "bitstring,count":
                continue
            bits, cnt = line.split(",")
            counts[bits.strip()] = int(cnt)
        if total is None:
            raise ValueError("missing '# shots=' header")
        width = len(next(iter(counts))) if counts else 0
        return cls(counts, total, width)


def _multinomial(rng: np.random.Generator, shots: int, probs: np.ndarray) -> np.ndarray:
    p = np.clip(np.asarray(probs, dtype=float), 0, None)
    return rng.multinomial(shots, p / p.sum())


def sample(state: StateVector, shots: int, seed, qubits: Sequence[int] | None = None) -> ShotHistogram:
    """Multinomial draw of ``shots`` measurements, optionally of a qubit subset."""
    if shots <= 0:
        raise ValueError("shots must be positive")
    rng = make_rng(seed)
    if qubits is None:
        probs, width = state.probabilities(), state.num_qubits
    else:
        probs, width = state.marginal(qubits), len(qubits)
    return ShotHistogram.from_array(_multinomial(rng, shots, probs), width)


def sample_ideal(template_seg: EncodedSegment, data_seg: EncodedSegment, shots: int,
                 seed) -> ShotHistogram:
    """Draw joint (template, data) outcomes straight from the product distribution.

    Keys are template index bits followed by data index bits, the same
    layout as the joint loader's output register.
    """
    if shots <= 0:
        raise ValueError("shots must be positive")
    rng = make_rng(seed)
    joint = np.outer(template_seg.probs, data_seg.probs).ravel()
    return ShotHistogram.from_array(_multinomial(rng, shots, joint),
                                    template_seg.num_bits + data_seg.num_bits)


def exact_histogram_probs(template_seg: EncodedSegment, data_seg: EncodedSegment) -> np.ndarray:
    return np.outer(template_seg.probs, data_seg.probs).ravel()


@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing Pauli errors after multi-qubit gates plus readout flips.

    A gate with CNOT-equivalent weight ``w`` is followed by a uniformly random
    non-identity Pauli on its qubits with probability ``min(1, w * p_two_qubit)``.
    """

    p_two_qubit: float = 0.0
    p_readout: float = 0.0
    gate_weights: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_GATE_WEIGHTS))

    def __post_init__(self):
        for name in ("p_two_qubit", "p_readout"):
            p = getattr(self, name)
            if not 0 <= p <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        object.__setattr__(self, "gate_weights", dict(self.gate_weights))

    def gate_error(self, gate: Gate) -> float:
        if not gate.is_multi_qubit:
            return 0.0
        return min(1.0, self.p_two_qubit * self.gate_weights.get(gate.kind, 1))

    @classmethod
    def from_totals(cls, circuit: CircuitDescription, gate_total: float, readout_total: float,
                    gate_weights: Mapping[str, float] | None = None) -> "NoiseModel":
        """Spread circuit-level error totals over its gates and output qubits.

        ``gate_total`` is the summed CNOT-equivalent error probability;
        ``readout_total`` the chance that at least one output bit is flipped.
        """
        weights = dict(DEFAULT_GATE_WEIGHTS if gate_weights is None else gate_weights)
        load = sum(weights.get(g.kind, 1) for g in circuit.gates if g.is_multi_qubit)
        p2 = gate_total / load if load else 0.0
        m = max(len(circuit.output_register), 1)
        pro = 1 - (1 - readout_total) ** (1 / m)
        return cls(p2, pro, weights)


def apply_noise(circuit: CircuitDescription, model: NoiseModel, shots: int, seed,
                qubits: Sequence[int] | None = None,
                max_qubits: int = MAX_QUBITS) -> ShotHistogram:
    """Sample ``shots`` noisy measurements by Pauli-trajectory unravelling.

    Shots sharing the same error pattern share one statevector run.
    Every qubit is measured; ``qubits`` selects the reported bits.
    """
    if shots <= 0:
        raise ValueError("shots must be positive")
    _check_size(circuit, max_qubits)
    rng = make_rng(seed)
    n = circuit.num_qubits
    noisy = [(i, g, model.gate_error(g)) for i, g in enumerate(circuit.gates)]
    noisy = [(i, g, p) for i, g, p in noisy if p > 0]

    counts = np.zeros(1 << n, dtype=np.int64)
    if noisy:
        pattern = np.zeros((shots, len(noisy)), dtype=np.int64)
        for col, (_, g, p) in enumerate(noisy):
            hit = rng.random(shots) < p
            pattern[hit, col] = rng.integers(1, 4 ** len(g.qubits), size=int(hit.sum()))
        hit = pattern.any(axis=1)
        uniq, mult = np.unique(pattern[hit], axis=0, return_counts=True)
        clean = shots - int(hit.sum())
        if clean:
            uniq = np.vstack([np.zeros((1, len(noisy)), dtype=np.int64), uniq])
            mult = np.concatenate([[clean], mult])
    else:
        uniq, mult = np.zeros((1, 0), dtype=np.int64), np.array([shots])

    # Walk the patterns as a prefix tree so shared gate prefixes run once.
    def descend(psi, start, col, rows):
        stop = noisy[col][0] + 1 if col < len(noisy) else len(circuit.gates)
        for gate in circuit.gates[start:stop]:
            psi = apply_gate(psi, gate)
        if col == len(noisy):
            probs = np.abs(psi.reshape(-1)) ** 2
            counts[:] += _multinomial(rng, int(mult[rows].sum()), probs)
            return
        gate = circuit.gates[noisy[col][0]]
        for code in np.unique(uniq[rows, col]):
            branch = apply_pauli(psi, gate.qubits, int(code)) if code else psi
            descend(branch, stop, col + 1, rows[uniq[rows, col] == code])

    psi0 = np.zeros([2] * n, dtype=complex)
    psi0[(0,) * n] = 1.0
    descend(psi0, 0, 0, np.arange(len(uniq)))

    if model.p_readout > 0:
        outcomes = np.repeat(np.arange(1 << n, dtype=np.int64), counts)
        flips = rng.random((shots, n)) < model.p_readout
        weights = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
        outcomes ^= flips.astype(np.int64) @ weights
        counts = np.bincount(outcomes, minlength=1 << n)

    hist = ShotHistogram.from_array(counts, n)
    return hist if qubits is None else hist.marginal(list(qubits))
