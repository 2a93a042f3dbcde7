"""What the server can see, and checks that it is independent of the secret.

The quantum side reduces to small density matrices: the server's share of a
joint state after the client measures her share, or the fresh pair half left
behind by one round. The classical side is the exact distribution of the
message transcript, which factorizes into per-round resend counts and
reported X-bits.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import protocols, qsim
from .errors import DegenerateMeasurementError
from .qsim import Angle, DensityMatrix, StateVector

BLINDNESS_TOL = 1e-9


def _as_density(obj) -> np.ndarray:
    if isinstance(obj, StateVector):
        v = obj.amplitudes
        return np.outer(v, v.conj())
    if isinstance(obj, DensityMatrix):
        return obj.entries
    return np.asarray(obj, dtype=complex)


def _num_qubits(mat: np.ndarray) -> int:
    n = int(round(np.log2(mat.shape[0])))
    if 2**n != mat.shape[0]:
        raise ValueError("operator dimension is not a power of two")
    return n


def _ptrace_raw(mat: np.ndarray, keep) -> np.ndarray:
    """Partial trace for possibly subnormalized operators; qubit 0 is the
    least-significant index and the kept qubits stay in ascending order."""
    n = _num_qubits(mat)
    keep = sorted(keep)
    drop = [q for q in range(n) if q not in keep]
    t = mat.reshape([2] * (2 * n), order="F")
    # Row axis of qubit q is q, column axis is n + q.
    perm = keep + drop + [n + q for q in keep] + [n + q for q in drop]
    t = np.transpose(t, perm)
    k, d = len(keep), len(drop)
    t = t.reshape((2**k, 2**d, 2**k, 2**d), order="F")
    return np.einsum("arbr->ab", t)


@dataclass
class BobView:
    marginal: DensityMatrix
    transcript_dist: dict = field(default_factory=lambda: {"": 1.0})


class Povm:
    """A finite set of PSD elements summing to the identity."""

    def __init__(self, elements):
        self.elements = [np.asarray(e, dtype=complex) for e in elements]
        total = sum(self.elements)
        dim = total.shape[0]
        if not np.allclose(total, np.eye(dim), atol=1e-12):
            raise ValueError("POVM elements must sum to the identity")
        for e in self.elements:
            if not np.allclose(e, e.conj().T, atol=1e-12):
                raise ValueError("POVM elements must be Hermitian")
            if np.linalg.eigvalsh(e).min() < -1e-10:
                raise ValueError("POVM elements must be positive semidefinite")

    def __len__(self):
        return len(self.elements)


def random_povm(dim: int, n_elements: int, rng) -> Povm:
    """Draw Wishart factors and normalize them into a complete POVM."""
    raws = []
    for _ in range(n_elements):
        g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        raws.append(g.conj().T @ g)
    total = sum(raws)
    vals, vecs = np.linalg.eigh(total)
    inv_sqrt = vecs @ np.diag(vals**-0.5) @ vecs.conj().T
    elements = [inv_sqrt @ e @ inv_sqrt for e in raws]
    elements = [(e + e.conj().T) / 2 for e in elements]
    return Povm(elements)


def povm_distribution(view, povm: Povm) -> np.ndarray:
    rho = _as_density(view.marginal if isinstance(view, BobView) else view)
    return np.array([float(np.real(np.trace(e @ rho))) for e in povm.elements])


def _rotated_bra(theta: Angle, outcome: int):
    sign = 1.0 if outcome == 0 else -1.0
    return np.array([1.0, sign * np.exp(-1j * theta.radians)], dtype=complex) / np.sqrt(2.0)


def bob_view_protocol1(joint, alice_qubits, alice_angles) -> BobView:
    """Sum the server's conditional states over the client's outcome strings.

    The client holds `alice_qubits` of the joint state and measures qubit q in
    the rotated basis at the matching angle; no outcome-dependent message ever
    reaches the server, so the classical view is constant.
    """
    rho = _as_density(joint)
    n = _num_qubits(rho)
    alice_qubits = list(alice_qubits)
    angles = [a if isinstance(a, Angle) else Angle(a) for a in alice_angles]
    if len(alice_qubits) != len(angles):
        raise ValueError("one angle per client qubit")
    bob_qubits = [q for q in range(n) if q not in alice_qubits]
    if not bob_qubits:
        raise ValueError("server must retain at least one qubit")

    total = np.zeros((2 ** len(bob_qubits),) * 2, dtype=complex)
    for outcomes in itertools.product((0, 1), repeat=len(alice_qubits)):
        proj = np.eye(1, dtype=complex)
        for q in range(n):
            if q in alice_qubits:
                bra = _rotated_bra(angles[alice_qubits.index(q)], outcomes[alice_qubits.index(q)])
                block = np.outer(bra.conj(), bra)
            else:
                block = np.eye(2, dtype=complex)
            proj = np.kron(block, proj)  # qubit q occupies index bit q
        branch = proj @ rho @ proj.conj().T
        total += _ptrace_raw(branch, bob_qubits)
    return BobView(marginal=DensityMatrix(total), transcript_dist={"": 1.0})


def bob_view_protocol2_round(theta: Angle) -> DensityMatrix:
    """The server-side pair half after the client's rotated measurement,
    averaged over her (unsent) outcome; equals I/2 for every angle."""
    theta = theta if isinstance(theta, Angle) else Angle(theta)
    plus = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)
    v = np.diag([1.0, np.exp(1j * theta.radians)]) @ plus
    pure = np.outer(v, v.conj())
    z = qsim.Z.entries
    return DensityMatrix(0.5 * pure + 0.5 * (z @ pure @ z))


# --------------------------------------------------------------------------
# Exact classical view of the pair-per-round protocol
# --------------------------------------------------------------------------


def resend_distribution(loss_prob: float, cap: int = 8):
    """P(resend count) per delivery, with the tail bucketed at `cap`."""
    if loss_prob >= 1.0:
        return [0.0] * cap + [1.0]
    probs = [(1.0 - loss_prob) * loss_prob**r for r in range(cap)]
    return probs + [1.0 - sum(probs)]

def m_string_distribution(program, input_state) -> dict:
    """Exact distribution of the reported X-bit string, by branch enumeration."""
    dist = {}
    channel = protocols.ChannelModel(0.0)
    n = program.num_rounds
    for bits in itertools.product((0, 1), repeat=2 * n):
        pairs = [(bits[2 * i], bits[2 * i + 1]) for i in range(n)]
        try:
            result = protocols.run_protocol2(
                program, input_state, channel, forced_outcomes=pairs
            )
        except DegenerateMeasurementError:
            continue
        key = "".join(str(p[1]) for p in pairs)
        dist[key] = dist.get(key, 0.0) + result.branch_probability
    return dist


def biases_from_distribution(dist: dict, num_rounds: int):
    """|P(m_r = 0) - 1/2| per round position of a string distribution."""
    biases = []
    for r in range(num_rounds):
        p0 = sum(p for s, p in dist.items() if s[r] == "0")
        biases.append(abs(p0 - 0.5))
    return biases


def m_bit_biases(program, input_state):
    """|P(m_r = 0) - 1/2| per round, from the exact string distribution."""
    dist = m_string_distribution(program, input_state)
    return biases_from_distribution(dist, program.num_rounds)


def _round_angle_options(plan):
    if plan.adapt3 is not None and plan.round_in_group == 2:
        wants = set(plan.adapt3)
    else:
        wants = {plan.base_angle.k}
    ks = set()
    for k in wants:
        ks.add(k % 8)
        ks.add((-k) % 8)
    return [Angle(k) for k in sorted(ks)]


# --------------------------------------------------------------------------
# Certification report
# --------------------------------------------------------------------------


@dataclass
class ReportLine:
    check: str
    secrets: tuple
    povm: int = None
    max_dev: float = 0.0
    passed: bool = True

    def render(self) -> str:
        i, j = self.secrets
        povm = "-" if self.povm is None else str(self.povm)
        flag = "true" if self.passed else "false"
        return (
            f"check={self.check} secrets={i},{j} povm={povm} "
            f"max_dev={self.max_dev:.12g} pass={flag}"
        )


@dataclass
class BlindnessReport:
    lines: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(line.passed for line in self.lines)

    def render(self) -> str:
        return "\n".join(line.render() for line in self.lines) + "\n"

    def add(self, check, secrets, dev, povm=None, tol=BLINDNESS_TOL):
        self.lines.append(ReportLine(check, secrets, povm, float(dev), bool(dev < tol)))


def _max_abs(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def _frob(a, b) -> float:
    return float(np.linalg.norm(_as_density(a) - _as_density(b)))


def certify_protocol1(secrets, bob_strategy="honest", n_povms: int = 4,
                      rng=None) -> BlindnessReport:
    """Compare the server's quantum marginal across client secrets.

    `secrets` are equal-length angle vectors for the measured vertices; the
    honest joint state is the linear cluster with one retained output vertex,
    an adversarial strategy supplies its own joint state instead.
    """
    from . import graphs

    rng = rng if rng is not None else np.random.default_rng(0)
    secrets = [[a if isinstance(a, Angle) else Angle(a) for a in s] for s in secrets]
    width = len(secrets[0])
    if any(len(s) != width for s in secrets):
        raise ValueError("all secrets must measure the same number of qubits")

    if isinstance(bob_strategy, str):
        if bob_strategy != "honest":
            raise ValueError(f"unknown strategy {bob_strategy!r}")
        joint = graphs.build_graph_state(graphs.linear_cluster(width + 1)).state
    else:
        joint = bob_strategy.state if hasattr(bob_strategy, "state") else bob_strategy
    n = _num_qubits(_as_density(joint))
    alice_qubits = list(range(width))
    bob_dim = 2 ** (n - width)

    views = [bob_view_protocol1(joint, alice_qubits, s) for s in secrets]
    povms = [random_povm(bob_dim, 4, rng) for _ in range(n_povms)]
    report = BlindnessReport()
    for i, j in itertools.combinations(range(len(secrets)), 2):
        report.add("p1-marginal", (i, j), _frob(views[i].marginal, views[j].marginal))
        report.add(
            "p1-transcript", (i, j),
            _max_abs(
                [views[i].transcript_dist.get(k, 0.0) for k in ("",)],
                [views[j].transcript_dist.get(k, 0.0) for k in ("",)],
            ),
        )
        for p, povm in enumerate(povms):
            dev = _max_abs(
                povm_distribution(views[i], povm), povm_distribution(views[j], povm)
            )
            report.add("p1-povm", (i, j), dev, povm=p)
    return report


def certify_protocol2(secrets, loss_prob: float = 0.0, n_povms: int = 4,
                      rng=None, resend_cap: int = 8) -> BlindnessReport:
    """Compare everything the server obtains across secret circuits.

    Each secret is a gate list; programs are padded to a common round count so
    the message pattern matches, then the per-round pair marginals, the exact
    reported-bit distribution, and the resend-count distribution are compared.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    programs = [protocols.compile_circuit(s) for s in secrets]
    wires = max(p.num_wires for p in programs)
    rounds = max(p.num_rounds for p in programs)
    programs = [
        protocols.compile_circuit(s, num_wires=wires, pad_to=rounds) for s in secrets
    ]
    input_state = qsim.basis_state(wires, 0)

    round_views = []
    for prog in programs:
        per_round = []
        for plan in prog.rounds:
            views = [bob_view_protocol2_round(t) for t in _round_angle_options(plan)]
            per_round.append(views)
        round_views.append(per_round)
    m_dists = [m_string_distribution(p, input_state) for p in programs]
    # The loss pattern of each delivery is channel randomness only; with the
    # padded round counts the whole classical loss view is one dist per round.
    resends = [
        (p.num_rounds, resend_distribution(loss_prob, cap=resend_cap))
        for p in programs
    ]
    povms = [random_povm(2, 4, rng) for _ in range(n_povms)]

    report = BlindnessReport()
    for i in range(len(secrets)):
        biases = biases_from_distribution(m_dists[i], rounds)
        report.add("p2-m-bias", (i, i), max(biases))
    for i, j in itertools.combinations(range(len(secrets)), 2):
        dev = 0.0
        for r in range(rounds):
            for vi in round_views[i][r]:
                for vj in round_views[j][r]:
                    dev = max(dev, _frob(vi, vj))
        report.add("p2-round-view", (i, j), dev)

        keys = sorted(set(m_dists[i]) | set(m_dists[j]))
        dev = max(abs(m_dists[i].get(k, 0.0) - m_dists[j].get(k, 0.0)) for k in keys)
        report.add("p2-m-dist", (i, j), dev)
        dev = 0.0 if resends[i][0] == resends[j][0] else 1.0
        dev = max(dev, _max_abs(resends[i][1], resends[j][1]))
        report.add("p2-resend", (i, j), dev)
        for p, povm in enumerate(povms):
            dev = 0.0
            for r in range(rounds):
                for vi in round_views[i][r]:
                    for vj in round_views[j][r]:
                        dev = max(
                            dev,
                            _max_abs(
                                povm_distribution(vi, povm),
                                povm_distribution(vj, povm),
                            ),
                        )
            report.add("p2-povm", (i, j), dev, povm=p)
    return report


def certify_B1_B2(protocol, secrets, bob_strategy="honest", n_povms: int = 4,
                  rng=None, loss_prob: float = 0.0) -> BlindnessReport:
    """Render a pass/fail line per comparison; `protocol` selects the family."""
    if int(protocol) == 1:
        return certify_protocol1(secrets, bob_strategy, n_povms, rng)
    if int(protocol) == 2:
        return certify_protocol2(secrets, loss_prob, n_povms, rng)
    raise ValueError("protocol must be 1 or 2")
