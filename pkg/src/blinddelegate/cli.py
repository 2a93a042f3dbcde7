"""Command-line front end: run a delegation, verify invariants, print the
calibrated unit cell, or measure the loss-report side channel."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import adversaries, blindness, graphs, pauli, protocols, qsim
from .errors import BlindDelegateError, ConfigError, FormatError, RetryLimitError

ENV_SEED = "BLINDDELEGATE_SEED"
DEFAULT_CHECKS = ("identities", "unitcell", "stabilizers", "blindness")


@dataclass
class ScenarioConfig:
    command: str
    protocol: str = "2"
    circuit: str = None
    loss: float = 0.0
    seed: int = 0
    adversary: str = "honest"
    countermeasure: bool = False
    checks: tuple = DEFAULT_CHECKS
    outdir: str = "."
    trials: int = 2000


def parse_config(argv) -> ScenarioConfig:
    parser = argparse.ArgumentParser(
        prog="blinddelegate",
        description="Delegated-computation runner and verifier.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="delegate a circuit over the channel")
    run_p.add_argument("--protocol", choices=("1", "2", "tp"), required=True)
    run_p.add_argument("--circuit", required=True, help="circuit file path")
    run_p.add_argument("--loss", type=float, default=0.0)
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--adversary", choices=("honest", "loss-device"),
                       default="honest")
    run_p.add_argument("--countermeasure", action="store_true")
    run_p.add_argument("--outdir", default=".")

    verify_p = sub.add_parser("verify", help="run invariant check suites")
    verify_p.add_argument("--checks", default=",".join(DEFAULT_CHECKS))
    verify_p.add_argument("--seed", type=int, default=0)
    verify_p.add_argument("--outdir", default=".")

    cal_p = sub.add_parser("calibrate", help="print the resource unit cell")
    cal_p.add_argument("--outdir", default=".")

    attack_p = sub.add_parser("attack", help="loss side channel measurements")
    attack_p.add_argument("--trials", type=int, default=2000)
    attack_p.add_argument("--loss", type=float, default=0.0)
    attack_p.add_argument("--seed", type=int, default=0)
    attack_p.add_argument("--outdir", default=".")

    args = parser.parse_args(argv)
    config = ScenarioConfig(command=args.command)
    for name in ("protocol", "circuit", "loss", "seed", "adversary",
                 "countermeasure", "outdir", "trials"):
        if hasattr(args, name):
            setattr(config, name, getattr(args, name))
    if hasattr(args, "checks"):
        config.checks = tuple(c.strip() for c in args.checks.split(",") if c.strip())
        unknown = set(config.checks) - set(DEFAULT_CHECKS)
        if unknown:
            raise ConfigError(f"unknown checks: {sorted(unknown)}")
    if os.environ.get(ENV_SEED):
        try:
            config.seed = int(os.environ[ENV_SEED])
        except ValueError as exc:
            raise ConfigError(f"{ENV_SEED} must be an integer") from exc
    if not 0.0 <= config.loss <= 1.0:
        raise ConfigError("loss must lie in [0, 1]")
    return config


def _frame_label(frame) -> str:
    text = ("X" if frame.x else "") + ("Z" if frame.z else "")
    return text or "I"


def _write(outdir, name, text):
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, name)
    with open(path, "w") as fh:
        fh.write(text)
    return path


def _run(config) -> int:
    with open(config.circuit) as fh:
        gates = protocols.parse_circuit(fh.read())
    channel = protocols.ChannelModel(config.loss, rng_seed=config.seed)
    rng = np.random.default_rng([config.seed, 0])
    lines = [f"run protocol={config.protocol} seed={config.seed} "
             f"loss={protocols.format_loss(config.loss)}"]

    if config.protocol == "2":
        program = protocols.compile_circuit(gates)
        input_state = qsim.basis_state(program.num_wires, 0)
        adversary = None
        if config.adversary == "loss-device":
            adversary = adversaries.AdversaryStrategy(
                adversaries.LOSS_SIGNAL_DEVICE, device=adversaries.EvilDevice()
            )
        result = protocols.run_protocol2(
            program, input_state, channel, adversary=adversary, rng=rng,
            loss_masking=config.countermeasure,
        )
        corrected = protocols.correct_output(result)
        reference = protocols.circuit_unitary(gates, program.num_wires)
        expected = qsim.StateVector(reference @ input_state.amplitudes, check=False)
        match = qsim.equal_up_to_global_phase(corrected, expected)
        lines.append(f"rounds={result.rounds_completed} "
                     f"retransmissions={result.retransmission_count}")
        lines.append("frames=" + ",".join(
            f"w{w}:{_frame_label(f)}" for w, f in enumerate(result.final_frames)))
        lines.append(f"output_match={'true' if match else 'false'}")
        ok = bool(match)
    else:
        plan = protocols.circuit_to_chain(gates)
        resource = graphs.build_graph_state(graphs.linear_cluster(len(plan) + 1))
        if config.protocol == "1":
            result = protocols.run_protocol1(resource, plan, rng=rng)
        else:
            result = protocols.run_teleport_variant(resource, plan, channel, rng=rng)
        lines.append(f"rounds={result.rounds_completed} "
                     f"retransmissions={result.retransmission_count}")
        lines.append(f"outcome={result.outcome_bits[0]}")
        lines.append("frames=w0:" + _frame_label(result.final_frames[0]))
        ok = True

    transcript_text = protocols.format_transcript(
        config.protocol, config.seed, config.loss, result.transcript
    )
    _write(config.outdir, "transcript.txt", transcript_text)
    report_text = "\n".join(lines) + "\n"
    _write(config.outdir, "report.txt", report_text)
    sys.stdout.write(report_text)
    return 0 if ok else 1


def _verify(config) -> int:
    lines = []
    if "identities" in config.checks:
        for name, ok in pauli.verify_all_identities():
            lines.append(f"check=identities case={name} pass={'true' if ok else 'false'}")
    if "unitcell" in config.checks:
        cal = graphs.calibrate_unit_cell()
        for name in sorted(cal.entries):
            entry = cal.entries[name]
            i, j = entry.bridge if entry.bridge is not None else ("-", "-")
            lines.append(
                f"check=unitcell op={name} bridge={i},{j} pass=true"
            )
    if "stabilizers" in config.checks:
        for label, graph in (
            ("chain5", graphs.linear_cluster(5)),
            ("unitcell", graphs.build_unit_cell()),
            ("tile1x2", graphs.tile(1, 2)),
        ):
            resource = graphs.build_graph_state(graph)
            worst = min(
                graphs.stabilizer_expectation(resource, v)
                for v in range(graph.num_vertices)
            )
            ok = worst > 1.0 - 1e-12
            lines.append(
                f"check=stabilizers graph={label} min_expect={worst:.12g} "
                f"pass={'true' if ok else 'false'}"
            )
    if "blindness" in config.checks:
        rng = np.random.default_rng([config.seed, 11])
        report1 = blindness.certify_B1_B2(
            1, [(0, 2, 7), (1, 4, 2), (7, 7, 0)], n_povms=2, rng=rng
        )
        lines.extend(report1.render().splitlines())
        report2 = blindness.certify_B1_B2(
            2, [[protocols.Gate("H", (0,))], [protocols.Gate("T", (0,))]],
            n_povms=2, rng=rng,
        )
        lines.extend(report2.render().splitlines())

    text = "\n".join(lines) + "\n"
    _write(config.outdir, "report.txt", text)
    sys.stdout.write(text)
    ok = all("pass=false" not in ln for ln in lines)
    return 0 if ok else 1


def _format_schedule(schedule) -> str:
    base = ",".join(str(k) for k in schedule.base)
    if schedule.adapt3 is not None:
        return f"{base} adapt3={schedule.adapt3[0]},{schedule.adapt3[1]}"
    return base


def _calibrate(config) -> int:
    cal = graphs.calibrate_unit_cell()
    lines = [f"calibration bridge={cal.bridge[0]},{cal.bridge[1]}"]
    for name in sorted(cal.entries):
        entry = cal.entries[name]
        parts = [f"op={name}", f"wire0={_format_schedule(entry.wire0)}"]
        if entry.wire1 is not None:
            parts.append(f"wire1={_format_schedule(entry.wire1)}")
        if entry.bridge is not None:
            parts.append(f"bridge={entry.bridge[0]},{entry.bridge[1]}")
        lines.append(" ".join(parts))
    text = "\n".join(lines) + "\n"
    _write(config.outdir, "calibration.txt", text)
    sys.stdout.write(text)
    return 0


def _attack(config) -> int:
    lines = []
    for k in range(8):
        program = adversaries.make_signal_program(k)
        channel = protocols.ChannelModel(config.loss, rng_seed=config.seed + k)
        rng = np.random.default_rng([config.seed, 0, k])
        guess, _, success = adversaries.run_with_evil_device(
            program, False, channel, rng
        )
        lines.append(
            f"attack digit={k} guess={guess} success={'true' if success else 'false'}"
        )
    for masked, label in ((False, "off"), (True, "on")):
        bits = adversaries.attack_mutual_information(
            config.trials, masked, config.loss, config.seed
        )
        lines.append(f"mi countermeasure={label} bits={bits:.12g}")
    text = "\n".join(lines) + "\n"
    _write(config.outdir, "attack.txt", text)
    sys.stdout.write(text)
    return 0


def run_scenario(config: ScenarioConfig) -> int:
    handlers = {"run": _run, "verify": _verify, "calibrate": _calibrate,
                "attack": _attack}
    return handlers[config.command](config)


def main(argv=None) -> int:
    try:
        config = parse_config(argv)
        return run_scenario(config)
    except RetryLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (BlindDelegateError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
