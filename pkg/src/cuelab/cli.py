"""Command-line entry point.

Exit codes: 0 success or transfer pass, 2 transfer fail, 64 usage or
configuration error, 65 data error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import audit, protocol, reports, sim
from .classifier import WanderingModel, build_training_set_multi, train
from .config import RunConfig, load_config
from .errors import ConfigError, CueLabError, OutOfRange
from .fast import FEATURE_NAMES, extract_fast_features_batch
from .protocol import IntervalMethod, Phase
from .runner import run_simulated_session
from .sessionlog import load_session_log
from .signal import StreamBuffer, StreamId
from .stim import set_amplitude

EX_OK = 0
EX_TRANSFER_FAIL = 2
EX_USAGE = 64
EX_DATAERR = 65

log = logging.getLogger("cuelab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d, help="master seed (overrides config)")
    p.add_argument("--config", default=d, help="YAML run configuration")
    p.add_argument("--out", default=d if suppress else "out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true",
                   default=d if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cuelab", description="closed-loop attention cueing toolkit")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        return p

    p = add("simulate", "closed-loop bandit runs, or a simulated study")
    p.add_argument("--device", choices=sorted(sim.DEVICES), default="muse-like")
    p.add_argument("--episodes", type=int)
    p.add_argument("--study-dir", help="write session logs for a whole A/B/C study here")
    p.add_argument("--strategy", choices=[s.value for s in sim.Strategy],
                   help="practice strategy for --study-dir")

    p = add("features", "batch fast-feature extraction from an EEG CSV")
    p.add_argument("--input", required=True, help="CSV with t_ms and one column per channel")
    p.add_argument("--sample-rate", type=float, default=256.0)

    p = add("train", "train the wandering model")
    p.add_argument("--logs", nargs="*", default=[], help="session logs with features and probes")
    p.add_argument("--sim-sessions", type=int, default=10,
                   help="simulated Phase-A sessions when no logs are given")
    p.add_argument("--trees", type=int, default=100)

    p = add("run-session", "simulate one session through the full pipeline")
    p.add_argument("--phase", choices=["A", "B", "C"], required=True)
    p.add_argument("--session-id", default="session")
    p.add_argument("--duration-s", type=int, default=600)
    p.add_argument("--strategy", choices=[s.value for s in sim.Strategy])
    p.add_argument("--model", help="model file (needed for cueing)")
    p.add_argument("--cue-free", action="store_true")
    p.add_argument("--sham", action="store_true", help="log would-be cues without rendering")
    p.add_argument("--amplitude", type=float, help="enable taVNS at this amplitude (mA)")

    p = add("evaluate-transfer", "Phase A vs Phase C transfer test")
    p.add_argument("--study", required=True, help="directory of session logs")
    p.add_argument("--model", help="model for EEG-estimated intervals")
    p.add_argument("--method", default="auto",
                   choices=["auto"] + [m.value for m in IntervalMethod])

    p = add("audit", "four-criteria audit of device descriptors")
    p.add_argument("--devices", help="YAML device descriptors (default: shipped set)")

    add("demo", "failure-mode demonstration suite")
    return parser


def _setup(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise UsageError("--seed must be non-negative")
        cfg = dataclasses.replace(cfg, seed=args.seed,
                                  study=dataclasses.replace(cfg.study, seed=args.seed))
    return cfg


def cmd_simulate(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    if args.study_dir:
        d = Path(args.study_dir)
        d.mkdir(parents=True, exist_ok=True)
        plan = protocol.plan_study(cfg.study)
        duration = int(round(cfg.study.session_minutes * 60_000))
        for k, s in enumerate(plan.sessions):
            lg = run_simulated_session(
                s.session_id, s.phase, cfg.seed * 1000 + k, duration,
                args.strategy if s.phase is not Phase.A else None,
                cueing=s.cueing_enabled, sham=cfg.study.sham)
            lg.write(d / f"{s.session_id}.log")
        print(f"wrote {len(plan.sessions)} session logs to {d}")
        return EX_OK
    dev = sim.DEVICES[args.device]
    traj = sim.run_closed_loop(dev, cfg.sim, args.episodes, cfg.seed, cue_config=cfg.cue)
    probs = traj.final_policy.probabilities()
    lines = [f"device: {dev.name} ({dev.reward_rule.value})",
             f"episodes: {len(traj.records)}",
             f"terminal mode: {traj.final_policy.mode().value}"]
    lines += [f"  p[{s.value}] = {p:.4f}" for s, p in zip(sim.STRATEGIES, probs)]
    lines.append("mean cues per episode by strategy:")
    lines += [f"  {k}: {v:.4f}" for k, v in traj.cues_by_strategy().items()]
    text = "\n".join(lines) + "\n"
    reports.write_reports({"trajectory": traj, "simulate_summary.txt": text}, out)
    sys.stdout.write(text)
    return EX_OK


def _read_eeg_csv(path, sample_rate: float) -> StreamBuffer:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "t_ms":
        raise UsageError("EEG CSV must start with a 't_ms' column header")
    data = np.array(rows[1:], dtype=float)
    return StreamBuffer.from_array(StreamId.EEG, rows[0][1:], sample_rate, data[:, 1:],
                                   int(data[0, 0]))


def cmd_features(args, cfg: RunConfig) -> int:
    buf = _read_eeg_csv(args.input, args.sample_rate)
    fvs = extract_fast_features_batch(buf)
    header = ("t_ms",) + FEATURE_NAMES + ("quality_flag",)
    rows = [(f.t_ms,) + tuple(f.as_array()) + (f.quality_flag,) for f in fvs]
    reports.write_reports({"features.csv": (header, rows)}, args.out)
    print(f"{len(rows)} windows, {sum(f.quality_flag for f in fvs)} usable")
    return EX_OK


def cmd_train(args, cfg: RunConfig) -> int:
    if args.logs:
        logs = [load_session_log(p) for p in args.logs]
        ts = build_training_set_multi({lg.header.session_id: (lg.probes(), lg.feature_vectors())
                                       for lg in logs})
    else:
        ts = sim.phase_a_training_set(sim.simulate_phase_a(cfg.seed, args.sim_sessions))
    model = train(ts, cfg.seed, n_trees=args.trees)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "model.cuelab")
    n0, n1 = ts.class_counts()
    print(f"rows: settled={n0} wandering={n1}; 5-fold CV accuracy {model.cv_accuracy:.4f}")
    return EX_OK


def cmd_run_session(args, cfg: RunConfig) -> int:
    model = WanderingModel.load(args.model) if args.model else None
    stim_cfg = None
    if args.amplitude is not None:
        try:
            stim_cfg = set_amplitude(dataclasses.replace(cfg.stim, enabled=True), args.amplitude)
        except OutOfRange as exc:
            raise UsageError(f"--amplitude: {exc}") from None
    cueing = args.phase == "B" and not args.cue_free
    if cueing and model is None:
        raise UsageError("a cueing session needs --model")
    lg = run_simulated_session(args.session_id, args.phase, cfg.seed, args.duration_s * 1000,
                               args.strategy, model, cfg.cue, stim_cfg, cueing,
                               args.sham or cfg.study.sham)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{args.session_id}.log"
    lg.write(path)
    print(f"wrote {path} ({len(lg)} records, {len(lg.records_of('cue'))} cues)")
    return EX_OK


def cmd_evaluate_transfer(args, cfg: RunConfig) -> int:
    paths = sorted(Path(args.study).glob("*.log"))
    model = WanderingModel.load(args.model) if args.model else None
    method = None if args.method == "auto" else args.method
    groups = {"A": [], "C": []}
    for p in paths:
        lg = load_session_log(p)
        if lg.header.phase in groups:
            groups[lg.header.phase] += protocol.estimate_correction_intervals(
                lg, model, cfg.cue, method)
    verdict = protocol.transfer_test(groups["A"], groups["C"])
    reports.write_reports({"transfer": verdict}, args.out)
    sys.stdout.write(reports.transfer_report(verdict))
    return EX_OK if verdict.passed else EX_TRANSFER_FAIL


def cmd_audit(args, cfg: RunConfig) -> int:
    results = [audit.audit_device(d) for d in audit.load_devices(args.devices)]
    table = audit.render_audit_table(results)
    warnings = "".join(w + "\n" for r in results for w in r.warnings)
    reports.write_reports({"audit.txt": table, "audit_warnings.txt": warnings}, args.out)
    sys.stdout.write(table)
    return EX_OK


def cmd_demo(args, cfg: RunConfig) -> int:
    rep = sim.demo_failure_modes(cfg.seed, cfg.sim)
    reports.write_reports({"demo": rep}, args.out)
    sys.stdout.write(rep.text())
    return EX_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "features": cmd_features,
    "train": cmd_train,
    "run-session": cmd_run_session,
    "evaluate-transfer": cmd_evaluate_transfer,
    "audit": cmd_audit,
    "demo": cmd_demo,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse: usage errors and --help
        return exc.code if isinstance(exc.code, int) else EX_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _setup(args)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"cuelab: {exc}", file=sys.stderr)
        return EX_USAGE
    except (CueLabError, OSError, ValueError) as exc:
        print(f"cuelab: {exc}", file=sys.stderr)
        return EX_DATAERR


if __name__ == "__main__":
    sys.exit(main())
