"""Dense state-vector / density-matrix engine for small registers.

Conventions used everywhere in this package:

* Qubit 0 is the least-significant bit of the amplitude index, so the
  amplitude of |q_{n-1} ... q_1 q_0> sits at index sum(q_i << i).
* Two-qubit gate matrices are written in np.kron(U_high, U_low) order,
  i.e. the 4x4 index bit 0 belongs to the *first* target.
* Measured qubits are removed from the register (the state shrinks by
  one qubit; indices above the measured one shift down by one).
* State comparisons are insensitive to global phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, DegenerateMeasurementError

# Dense simulation budget: 2^14 amplitudes keeps every test well under a second.
CAPACITY = 14

STATE_TOL = 1e-10
MATRIX_TOL = 1e-12


@dataclass(frozen=True)
class Angle:
    """A rotation angle restricted to the eighth-turn grid theta = k*pi/4."""

    k: int

    def __post_init__(self):
        object.__setattr__(self, "k", self.k % 8)

    @property
    def radians(self) -> float:
        return self.k * np.pi / 4.0

    def __neg__(self) -> "Angle":
        return Angle(-self.k % 8)

    def __add__(self, other: "Angle") -> "Angle":
        return Angle((self.k + other.k) % 8)

    def __repr__(self):
        return f"Angle({self.k})"


ALL_ANGLES = tuple(Angle(k) for k in range(8))
# The subset a compiled program ever commands: 0, pi/2, -pi/4, pi/4.
SCHEDULE_ANGLES = (Angle(0), Angle(2), Angle(7), Angle(1))


class GateMatrix:
    """A 2x2 or 4x4 unitary; unitarity is enforced at construction."""

    def __init__(self, entries, name: str = ""):
        m = np.asarray(entries, dtype=complex)
        if m.shape not in ((2, 2), (4, 4)):
            raise ValueError(f"gate must be 2x2 or 4x4, got {m.shape}")
        if np.abs(m.conj().T @ m - np.eye(m.shape[0])).max() > MATRIX_TOL:
            raise ValueError(f"matrix is not unitary within {MATRIX_TOL}")
        self.entries = m
        self.entries.setflags(write=False)
        self.name = name

    @property
    def num_qubits(self) -> int:
        return 1 if self.entries.shape[0] == 2 else 2

    def __repr__(self):
        return f"GateMatrix({self.name or self.entries.shape})"


def rotation(theta: Angle) -> GateMatrix:
    """R_theta = diag(1, e^{i theta}); S = R_{pi/2}, T = R_{-pi/4}."""
    return GateMatrix(np.diag([1.0, np.exp(1j * theta.radians)]), f"R{theta.k}")


I = GateMatrix(np.eye(2), "I")
H = GateMatrix(np.array([[1, 1], [1, -1]]) / np.sqrt(2), "H")
X = GateMatrix(np.array([[0, 1], [1, 0]]), "X")
Z = GateMatrix(np.diag([1.0, -1.0]), "Z")
S = rotation(Angle(2))
SDG = rotation(Angle(6))
T = rotation(Angle(7))
TDG = rotation(Angle(1))
CZ = GateMatrix(np.diag([1.0, 1.0, 1.0, -1.0]), "CZ")
# Control = 4x4 index bit 0 (the first target wire), target = bit 1.
CNOT = GateMatrix(
    np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=float),
    "CNOT",
)


class StateVector:
    def __init__(self, amplitudes, check: bool = True):
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        n = int(np.log2(len(amps)))
        if 2**n != len(amps) or n < 1:
            raise ValueError(f"amplitude length {len(amps)} is not a power of two >= 2")
        if n > CAPACITY:
            raise CapacityError(f"{n} qubits exceeds capacity {CAPACITY}")
        if check and abs(np.linalg.norm(amps) - 1.0) > STATE_TOL:
            raise ValueError("state vector is not normalized")
        self.num_qubits = n
        self.amplitudes = amps

    def tensor(self, other: "StateVector") -> "StateVector":
        """Append `other`'s qubits above this register's (they get the high indices)."""
        return StateVector(np.kron(other.amplitudes, self.amplitudes), check=False)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), check=False)

    def __repr__(self):
        return f"StateVector(n={self.num_qubits})"


class DensityMatrix:
    def __init__(self, entries, check: bool = True):
        m = np.asarray(entries, dtype=complex)
        n = int(np.log2(m.shape[0]))
        if m.shape != (2**n, 2**n):
            raise ValueError("density matrix must be square with power-of-two size")
        if check:
            if np.abs(m - m.conj().T).max() > MATRIX_TOL:
                raise ValueError("density matrix is not Hermitian")
            if abs(np.trace(m).real - 1.0) > MATRIX_TOL:
                raise ValueError("density matrix trace differs from 1")
            if np.linalg.eigvalsh(m).min() < -STATE_TOL:
                raise ValueError("density matrix has a negative eigenvalue")
        self.num_qubits = n
        self.entries = m

    def __repr__(self):
        return f"DensityMatrix(n={self.num_qubits})"


def basis_state(num_qubits: int, index: int = 0) -> StateVector:
    if num_qubits > CAPACITY:
        raise CapacityError(f"{num_qubits} qubits exceeds capacity {CAPACITY}")
    amps = np.zeros(2**num_qubits, dtype=complex)
    amps[index] = 1.0
    return StateVector(amps, check=False)


def plus_state(num_qubits: int = 1) -> StateVector:
    if num_qubits > CAPACITY:
        raise CapacityError(f"{num_qubits} qubits exceeds capacity {CAPACITY}")
    amps = np.full(2**num_qubits, 2.0 ** (-num_qubits / 2), dtype=complex)
    return StateVector(amps, check=False)


def random_state(num_qubits: int, rng: np.random.Generator) -> StateVector:
    amps = rng.normal(size=2**num_qubits) + 1j * rng.normal(size=2**num_qubits)
    return StateVector(amps / np.linalg.norm(amps), check=False)


def bell_pair() -> StateVector:
    """(|00> + |11>)/sqrt(2) on a fresh 2-qubit register."""
    return StateVector(np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2), check=False)


def _as_tensor(state: StateVector) -> np.ndarray:
    # Fortran order makes tensor axis j correspond to qubit j.
    return state.amplitudes.reshape([2] * state.num_qubits, order="F")


def _from_tensor(tensor: np.ndarray) -> np.ndarray:
    return tensor.reshape(-1, order="F")


def apply_gate(state: StateVector, gate: GateMatrix, targets) -> StateVector:
    """Return gate applied to the given target qubits (no in-place mutation)."""
    targets = [int(t) for t in (targets if hasattr(targets, "__iter__") else [targets])]
    if len(set(targets)) != len(targets):
        raise ValueError("duplicate target qubit")
    for t in targets:
        if not 0 <= t < state.num_qubits:
            raise IndexError(f"target {t} out of range for {state.num_qubits} qubits")
    if gate.num_qubits != len(targets):
        raise ValueError("gate dimension does not match target count")

    psi = _as_tensor(state)
    if len(targets) == 1:
        out = np.tensordot(gate.entries, psi, axes=([1], [targets[0]]))
        out = np.moveaxis(out, 0, targets[0])
    else:
        t0, t1 = targets
        # 4x4 index bit 0 <-> targets[0]: reshape to (out1, out0, in1, in0).
        g = gate.entries.reshape(2, 2, 2, 2)
        out = np.tensordot(g, psi, axes=([3, 2], [t0, t1]))
        out = np.moveaxis(out, [1, 0], [t0, t1])
    return StateVector(_from_tensor(out), check=False)


def expand_gate(gate: GateMatrix, targets, num_qubits: int) -> np.ndarray:
    """Full 2^n x 2^n matrix of `gate` acting on `targets` (reference circuits only)."""
    if num_qubits > 6:
        raise CapacityError("expand_gate is for small reference unitaries only")
    dim = 2**num_qubits
    cols = []
    for idx in range(dim):
        col = apply_gate(basis_state(num_qubits, idx), gate, targets)
        cols.append(col.amplitudes)
    return np.stack(cols, axis=1)


def _projected(state: StateVector, qubit: int, bra: np.ndarray) -> np.ndarray:
    psi = _as_tensor(state)
    out = np.tensordot(bra.conj(), psi, axes=([0], [qubit]))
    return _from_tensor(out)


def _finish_measurement(state, qubit, bra0, bra1, rand):
    branch0 = _projected(state, qubit, bra0)
    p0 = float(np.vdot(branch0, branch0).real)
    p0 = min(max(p0, 0.0), 1.0)
    outcome = 0 if rand < p0 else 1
    if outcome == 0:
        prob, branch = p0, branch0
    else:
        branch = _projected(state, qubit, bra1)
        prob = 1.0 - p0
    if prob < 1e-12:
        raise DegenerateMeasurementError(
            f"outcome {outcome} has probability {prob:.3e}"
        )
    post = StateVector(branch / np.sqrt(prob), check=False)
    return outcome, post, prob


def measure_rotated(state: StateVector, qubit: int, theta: Angle, rand: float):
    """Measure in the basis {(|0> + e^{-i theta}|1>)/sqrt2, (|0> - e^{-i theta}|1>)/sqrt2}.

    Outcome a=0 projects onto the '+' element. Returns (outcome, post_state, prob)
    with the measured qubit removed from the register; `rand` in [0,1) picks the
    branch by comparison against the a=0 probability.
    """
    if not 0 <= qubit < state.num_qubits:
        raise IndexError(f"qubit {qubit} out of range")
    if state.num_qubits == 1:
        raise ValueError("cannot remove the last qubit of a register")
    phase = np.exp(-1j * theta.radians)
    bra0 = np.array([1.0, phase], dtype=complex) / np.sqrt(2)
    bra1 = np.array([1.0, -phase], dtype=complex) / np.sqrt(2)
    return _finish_measurement(state, qubit, bra0, bra1, rand)


def measure_x(state: StateVector, qubit: int, rand: float):
    """Measurement in the {|+>, |->} basis; outcome 0 means |+>."""
    return measure_rotated(state, qubit, Angle(0), rand)


def measure_z(state: StateVector, qubit: int, rand: float):
    """Computational-basis measurement; the measured qubit is removed."""
    if not 0 <= qubit < state.num_qubits:
        raise IndexError(f"qubit {qubit} out of range")
    if state.num_qubits == 1:
        # Allow reading out the final qubit: report the bit, keep a dummy state.
        p0 = float(abs(state.amplitudes[0]) ** 2)
        p0 = min(max(p0, 0.0), 1.0)
        outcome = 0 if rand < p0 else 1
        prob = p0 if outcome == 0 else 1.0 - p0
        if prob < 1e-12:
            raise DegenerateMeasurementError(f"outcome {outcome} has probability {prob:.3e}")
        return outcome, basis_state(1, outcome), prob
    bra0 = np.array([1.0, 0.0], dtype=complex)
    bra1 = np.array([0.0, 1.0], dtype=complex)
    return _finish_measurement(state, qubit, bra0, bra1, rand)


def partial_trace(obj, keep) -> DensityMatrix:
    """Reduced density matrix on the qubits in `keep` (ascending index order)."""
    keep = sorted(set(int(q) for q in keep))
    if not keep:
        raise ValueError("keep set must be nonempty")
    n = obj.num_qubits
    for q in keep:
        if not 0 <= q < n:
            raise IndexError(f"qubit {q} out of range")
    rest = [q for q in range(n) if q not in keep]
    k, r = len(keep), len(rest)
    if isinstance(obj, StateVector):
        psi = _as_tensor(obj)
        # Fortran reshape keeps keep[0] as the least-significant output bit.
        a = np.transpose(psi, axes=keep + rest).reshape(2**k, 2**r, order="F")
        rho = a @ a.conj().T
    else:
        rho_t = obj.entries.reshape([2] * (2 * n), order="F")
        # Row axes are 0..n-1, column axes n..2n-1 under Fortran reshape.
        perm = keep + rest + [n + q for q in keep] + [n + q for q in rest]
        rho_t = np.transpose(rho_t, axes=perm).reshape(
            2**k, 2**r, 2**k, 2**r, order="F"
        )
        rho = np.einsum("arbr->ab", rho_t)
    return DensityMatrix(rho, check=False)


def equal_up_to_global_phase(a: StateVector, b: StateVector, tol: float = STATE_TOL) -> bool:
    """True iff a = phase * b for some unit phase, within `tol` in 2-norm."""
    va, vb = a.amplitudes, b.amplitudes
    if va.shape != vb.shape:
        return False
    idx = int(np.argmax(np.abs(va) * np.abs(vb)))
    if abs(va[idx]) * abs(vb[idx]) == 0.0:
        return bool(np.linalg.norm(va - vb) < tol)
    phase = va[idx] / vb[idx]
    phase /= abs(phase)
    return bool(np.linalg.norm(va - phase * vb) < tol)


def matrices_equal_up_to_phase(a: np.ndarray, b: np.ndarray, tol: float = STATE_TOL) -> bool:
    """True iff a = phase * b as matrices (both assumed similar norm scale)."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        return False
    flat_a, flat_b = a.reshape(-1), b.reshape(-1)
    idx = int(np.argmax(np.abs(flat_a) * np.abs(flat_b)))
    if abs(flat_a[idx]) * abs(flat_b[idx]) == 0.0:
        return bool(np.abs(a - b).max() < tol)
    phase = flat_a[idx] / flat_b[idx]
    phase /= abs(phase)
    return bool(np.abs(a - phase * b).max() < tol)


def fidelity(a: StateVector, b: StateVector) -> float:
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def frobenius_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    return float(np.linalg.norm(a.entries - b.entries))
