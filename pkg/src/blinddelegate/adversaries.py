"""Dishonest servers, a leaking measurement device, and the countermeasure.

The side channel: the client's loss reports are the one message stream a
compromised measurement device can steer. A device that withholds clicks can
spell out a captured command digit in unary through resend counts. The
countermeasure randomizes the reports with a coin the client commits to
before consulting the device, restoring independence at the price of extra
deliveries.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import blindness, protocols, qsim
from .qsim import DensityMatrix

HONEST = "HONEST"
SUBSTITUTE_STATE = "SUBSTITUTE_STATE"
LOSS_SIGNAL_DEVICE = "LOSS_SIGNAL_DEVICE"

_KINDS = (HONEST, SUBSTITUTE_STATE, LOSS_SIGNAL_DEVICE)


@dataclass
class AdversaryStrategy:
    kind: str
    state: object = None      # pair state handed out instead of fresh pairs
    device: object = None     # client-side measurement device under server control

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown adversary kind {self.kind!r}")
        if self.kind == SUBSTITUTE_STATE and self.state is None:
            raise ValueError("SUBSTITUTE_STATE requires a state")
        if self.kind == LOSS_SIGNAL_DEVICE and self.device is None:
            raise ValueError("LOSS_SIGNAL_DEVICE requires a device")


class EvilDevice:
    """Captures the first command digit, then fakes that many no-clicks.

    The faked losses start with the next delivery, so the digit shows up as
    the resend count of the round after the capture.
    """

    def __init__(self):
        self.captured = None
        self._fakes_left = 0

    def observe_angle(self, k: int):
        if self.captured is None:
            self.captured = k % 8
            self._fakes_left = self.captured

    def claim_no_click(self) -> bool:
        if self._fakes_left > 0:
            self._fakes_left -= 1
            return True
        return False


def random_mixed_state(num_qubits: int, rng) -> DensityMatrix:
    dim = 2**num_qubits
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return DensityMatrix(rho / np.trace(rho).real)


def make_signal_program(first_digit: int, extra_rounds: int = 1):
    """A round sequence whose first command digit is the secret under attack."""
    return protocols.make_raw_program([first_digit % 8] + [0] * extra_rounds)


def decode_digit_from_transcript(transcript) -> int:
    """Max-likelihood guess from the resend count of the post-capture round:
    r faked + geometric real losses is most likely explained by digit = r."""
    count = sum(
        1 for m in transcript if m.kind == "LOST_RESEND" and m.round == 2
    )
    return min(count, 7)


def run_with_evil_device(program, countermeasure: bool,
                         channel: protocols.ChannelModel, rng):
    """Returns (server_guess, transcript, success) for one attacked run."""
    device = EvilDevice()
    adversary = AdversaryStrategy(LOSS_SIGNAL_DEVICE, device=device)
    input_state = qsim.basis_state(program.num_wires, 0)
    result = protocols.run_protocol2(
        program, input_state, channel,
        adversary=adversary, rng=rng, loss_masking=countermeasure,
    )
    guess = decode_digit_from_transcript(result.transcript)
    secret = program.rounds[0].base_angle.k
    return guess, result.transcript, guess == secret


def run_with_substituted_state(protocol, substitute, alice_angles):
    """Server view when it hands out `substitute` instead of the resource."""
    if int(protocol) != 1:
        raise ValueError("substituted-state analysis is defined for protocol 1")
    return blindness.bob_view_protocol1(
        substitute, list(range(len(alice_angles))), alice_angles
    )


# --------------------------------------------------------------------------
# Side-channel capacity measurement
# --------------------------------------------------------------------------


def _resend_counts(transcript, round_indices, cap: int):
    counts = Counter(
        m.round for m in transcript if m.kind == "LOST_RESEND"
    )
    return tuple(min(counts.get(r, 0), cap) for r in round_indices)


def collect_attack_samples(n_trials: int, countermeasure: bool,
                           loss_prob: float, seed: int = 0, cap: int = 8):
    """(secret digit, post-capture resend counts) pairs over fresh runs."""
    secret_rng = np.random.default_rng([seed, 3])
    samples = []
    for t in range(n_trials):
        k = int(secret_rng.integers(8))
        program = make_signal_program(k)
        channel = protocols.ChannelModel(loss_prob, rng_seed=(seed << 24) + 7 + t)
        rng = np.random.default_rng([seed, 0, t])
        device = EvilDevice()
        adversary = AdversaryStrategy(LOSS_SIGNAL_DEVICE, device=device)
        result = protocols.run_protocol2(
            program, qsim.basis_state(1, 0), channel,
            adversary=adversary, rng=rng, loss_masking=countermeasure,
        )
        stat = _resend_counts(result.transcript, range(2, program.num_rounds + 1), cap)
        samples.append((k, stat))
    return samples


def _entropy_mm(counts, n: int) -> float:
    # Plug-in entropy with the Miller-Madow bias correction.
    h = 0.0
    for c in counts.values():
        p = c / n
        h -= p * math.log2(p)
    support = len(counts)
    return h + (support - 1) / (2.0 * n * math.log(2.0))


def estimate_mutual_information(samples) -> float:
    """Bias-corrected plug-in mutual information (bits) of (x, y) samples."""
    n = len(samples)
    if n < 100:
        raise ValueError("need at least 100 samples for a stable estimate")
    cx = Counter(x for x, _ in samples)
    cy = Counter(y for _, y in samples)
    cxy = Counter(samples)
    return _entropy_mm(cx, n) + _entropy_mm(cy, n) - _entropy_mm(cxy, n)


def attack_mutual_information(n_trials: int, countermeasure: bool,
                              loss_prob: float = 0.0, seed: int = 0) -> float:
    samples = collect_attack_samples(n_trials, countermeasure, loss_prob, seed)
    return estimate_mutual_information(samples)


def countermeasure_overhead(n_trials: int = 200, loss_prob: float = 0.0,
                            seed: int = 0):
    """Mean deliveries per accepted particle, (masked, unmasked)."""
    def mean_deliveries(masked: bool) -> float:
        total_rounds = 0
        total_sends = 0
        for t in range(n_trials):
            program = make_signal_program(0)
            channel = protocols.ChannelModel(loss_prob, rng_seed=(seed << 20) + t)
            rng = np.random.default_rng([seed, 1, t])
            result = protocols.run_protocol2(
                program, qsim.basis_state(1, 0), channel,
                rng=rng, loss_masking=masked,
            )
            total_rounds += result.rounds_completed
            total_sends += result.rounds_completed + result.retransmission_count
        return total_sends / total_rounds

    return mean_deliveries(True), mean_deliveries(False)
