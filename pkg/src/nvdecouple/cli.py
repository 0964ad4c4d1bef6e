"""
Command-line entry point.

    nvdecouple [--model M] [--out PATH] [--seed S] [--threads K] COMMAND ...

Outputs are CSV (or one JSON record per line) preceded by '#' metadata lines.
Each output is assembled in memory and written in one go, so a failing run
leaves no partial file. Exit codes: 0 ok, 2 invalid input, 3 fit did not
converge, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import os
import shlex
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import dd_sweep, ramsey_trace
from .estimation import (FitError, fit_envelope, fit_fidelity_crossing, fit_ramsey, fit_scaling,
                         fit_t1)
from .figures import FIGURES, csv_text, fmt, json_line, oracle_rows, pair_class_rows, reproduce
from .lattice import BathConfig, generate_bath
from .model import EnvironmentModel, ModelError, Trace, load_model, reference_model
from .protocols import ScalingLaw, pair_resonance_taus, revival_grid, tailor_sequence

EXIT_OK, EXIT_INPUT, EXIT_NOCONV, EXIT_IO = 0, 2, 3, 4


class CliIOError(Exception):
    pass


# -- I/O helpers -------------------------------------------------------------------

def header(args, model: EnvironmentModel) -> str:
    cmd = " ".join(shlex.quote(a) for a in args.argv)
    return (f"# nvdecouple {__version__}\n# model {model.digest()}\n"
            f"# seed {args.seed}\n# command {cmd}\n")


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(args, text: str) -> None:
    if args.out in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        write_atomic(Path(args.out), text)
    except OSError as exc:
        raise CliIOError(f"cannot write {args.out}: {exc}") from exc


def read_table(path):
    """Rows of a CSV with '#' comments skipped; returns (header, float array)."""
    try:
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    except OSError as exc:
        raise CliIOError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(lines))
    if not rows:
        raise ModelError(f"{path}: no data")
    head = [h.strip() for h in rows[0]]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ModelError(f"{path}: non-numeric entry ({exc})") from exc
    if data.size == 0:
        raise ModelError(f"{path}: no data rows")
    return head, data


def read_trace(path) -> Trace:
    """Trace from a CSV: 't_s' and 'F' columns if present, else first and last columns."""
    head, data = read_table(path)
    ti = head.index("t_s") if "t_s" in head else 0
    vi = head.index("F") if "F" in head else len(head) - 1
    meta = {}
    if "N" in head:
        ns = np.unique(data[:, head.index("N")])
        if ns.size != 1:
            raise ModelError(f"{path}: trace mixes several pulse numbers")
        meta["N"] = str(int(ns[0]))
    return Trace(data[:, ti], data[:, vi], meta)


def int_list(text: str):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") \
            from exc


# -- commands -------------------------------------------------------------------------

def cmd_enumerate_pairs(args, model):
    _, text = pair_class_rows(args.x_min, model)
    emit(args, header(args, model) + text)
    return EXIT_OK


def cmd_bath_gen(args, model):
    cfg = BathConfig(seed=args.seed, count=args.count, coupling_cutoff=args.cutoff,
                     shell=(args.r_min, args.r_max))
    bath = generate_bath(cfg, model.field)
    if args.format == "model":
        text = model.with_(bath=bath).to_json() + "\n"
    else:
        text = csv_text(["label", "a_par_Hz", "a_perp_Hz"],
                        [(b.label, b.a_par, b.a_perp) for b in bath])
    emit(args, header(args, model) + "# rng numpy.random.Philox\n" + text)
    return EXIT_OK


def sweep_taus(args, model):
    if args.m_min is not None or args.m_max is not None:
        if args.m_max is None:
            raise ModelError("revival sweep needs --m-max")
        return revival_grid(model.field, args.m_max, args.m_min or 1)
    if args.tau_min is None or args.tau_max is None:
        raise ModelError("give --tau-min/--tau-max (ns) or --m-min/--m-max")
    if args.tau_step < 1 or args.tau_min < 1 or args.tau_max < args.tau_min:
        raise ModelError("need 1 <= tau-min <= tau-max and tau-step >= 1 ns")
    return np.arange(args.tau_min, args.tau_max + 1, args.tau_step, dtype=np.int64)


def cmd_simulate_dd(args, model):
    taus = sweep_taus(args, model)
    f = dd_sweep(model, args.n_pulses, taus, apply_envelope=not args.no_envelope,
                 include_carbons=not args.no_carbons, include_bath=not args.no_bath,
                 threads=args.threads)
    n = args.n_pulses
    rows = [(fmt(2 * n * tn * 1e-9), fmt(tn * 1e-9), str(n), fmt(v)) for tn, v in zip(taus, f)]
    emit(args, header(args, model) + csv_text(["t_s", "tau_s", "N", "F"], rows))
    return EXIT_OK


def cmd_simulate_ramsey(args, model):
    spins = {c.label: c for c in (*model.carbons, *model.bath)}
    if args.spin not in spins:
        raise ModelError(f"no spin labelled {args.spin!r} in the model")
    if args.points < 2 or not args.t_max > 0:
        raise ModelError("need --points >= 2 and --t-max > 0")
    times = np.linspace(0, args.t_max, args.points)
    tr = ramsey_trace(spins[args.spin], args.ms, args.detuning, args.t2_star, times,
                      model.field, frequency=args.frequency)
    emit(args, header(args, model) + csv_text(["t_s", "F"], zip(tr.times, tr.values)))
    return EXIT_OK


def cmd_resonances(args, model):
    k = args.k_max
    rows = []
    for p in model.pairs:
        r = pair_resonance_taus(p, k)
        rows.append((p.label, fmt(r.omega), r.regime, *[fmt(t) for t in r.taus]))
    cols = ["pair", "omega_Hz", "regime"] + [f"tau{i}_s" for i in range(1, k + 1)]
    emit(args, header(args, model) + csv_text(cols, rows))
    return EXIT_OK


def cmd_tailor(args, model):
    scaling = None
    if args.t_ref is not None or args.eta is not None:
        if args.t_ref is None or args.eta is None:
            raise ModelError("give both --t-ref and --eta")
        scaling = ScalingLaw(args.t_ref, args.eta)
    sched = tailor_sequence(model, args.t_target, args.n_candidates, scaling,
                            window_ns=args.window_ns)
    emit(args, header(args, model) + json_line(sched.to_record()))
    return EXIT_OK


def cmd_fit(args, model):
    if args.kind == "scaling":
        head, data = read_table(args.input)
        if data.shape[1] < 2:
            raise ModelError("scaling input needs N and T columns")
        _, fit = fit_scaling(data[:, :2], return_fit=True)
    else:
        trace = read_trace(args.input)
        if args.kind == "t1":
            fit = fit_t1(trace)
        elif args.kind == "envelope":
            fit = fit_envelope(trace, model, args.n_pulses)
        elif args.kind == "ramsey":
            fit = fit_ramsey(trace, with_beating=args.beating)
        else:
            fit, _ = fit_fidelity_crossing(trace)
    emit(args, header(args, model) + json_line({"fit": args.kind, **fit.to_record()}))
    return EXIT_OK if fit.converged else EXIT_NOCONV


def cmd_oracle_check(args, model):
    text, checks = oracle_rows(model, args.n_list, args.tau_max, args.tol)
    emit(args, header(args, model) + text)
    return EXIT_OK


def cmd_reproduce(args, model):
    out = Path(args.out if args.out not in (None, "-") else f"reproduce_{args.tag}")
    artifacts, checks = reproduce(args.tag, model, seed=args.seed, threads=args.threads)
    head = header(args, model)
    check_text = "".join(c.line() + "\n" for c in checks)
    summary = "PASS" if checks and all(c.passed for c in checks) else "FAIL"
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in sorted(artifacts.items()):
            write_atomic(out / name, head + text)
        write_atomic(out / "checks.txt", head + check_text + f"{summary} {args.tag}\n")
    except OSError as exc:
        raise CliIOError(f"cannot write into {out}: {exc}") from exc
    sys.stdout.write(check_text + f"{summary} {args.tag}\n")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------

def _global_flags(p, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--model", default=d(None), help="model JSON (default: bundled reference)")
    p.add_argument("--out", default=d(None), help="output file ('-' or absent: stdout)")
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("--threads", type=int, default=d(1))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nvdecouple", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"nvdecouple {__version__}")
    _global_flags(ap, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate-pairs", parents=[common], help="lattice pair classes")
    p.add_argument("--x-min", type=float, default=61.0, help="Hz")
    p.set_defaults(func=cmd_enumerate_pairs)

    p = sub.add_parser("bath-gen", parents=[common], help="random weakly coupled 13C bath")
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--cutoff", type=float, default=10e3, help="Hz")
    p.add_argument("--r-min", type=float, default=1.5, help="nm")
    p.add_argument("--r-max", type=float, default=6.0, help="nm")
    p.add_argument("--format", choices=("csv", "model"), default="csv")
    p.set_defaults(func=cmd_bath_gen)

    p = sub.add_parser("simulate-dd", parents=[common], help="decoupling sweep over tau")
    p.add_argument("-N", "--n-pulses", type=int, required=True)
    p.add_argument("--tau-min", type=int, help="ns")
    p.add_argument("--tau-max", type=int, help="ns")
    p.add_argument("--tau-step", type=int, default=1, help="ns")
    p.add_argument("--m-min", type=int)
    p.add_argument("--m-max", type=int)
    p.add_argument("--no-envelope", action="store_true")
    p.add_argument("--no-carbons", action="store_true")
    p.add_argument("--no-bath", action="store_true")
    p.set_defaults(func=cmd_simulate_dd)

    p = sub.add_parser("simulate-ramsey", parents=[common], help="nuclear Ramsey fringe")
    p.add_argument("--spin", required=True)
    p.add_argument("--ms", type=int, choices=(0, -1, 1), default=0)
    p.add_argument("--detuning", type=float, default=0.0, help="Hz")
    p.add_argument("--t-max", type=float, required=True, help="s")
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--t2-star", type=float, help="s (default: the spin's value)")
    p.add_argument("--frequency", type=float, help="Hz, overrides the computed frequency")
    p.set_defaults(func=cmd_simulate_ramsey)

    p = sub.add_parser("resonances", parents=[common], help="pair resonance table")
    p.add_argument("--k-max", type=int, default=3)
    p.set_defaults(func=cmd_resonances)

    p = sub.add_parser("tailor", parents=[common], help="choose N and tau for a storage time")
    p.add_argument("--t-target", type=float, required=True, help="s")
    p.add_argument("--n-candidates", type=int_list, default=[4, 8, 16, 32, 64, 128, 256, 512,
                                                            1024, 2048, 4096, 10240])
    p.add_argument("--t-ref", type=float, help="s, coherence time at N = 4")
    p.add_argument("--eta", type=float)
    p.add_argument("--window-ns", type=int, default=20)
    p.set_defaults(func=cmd_tailor)

    p = sub.add_parser("fit", parents=[common], help="fit a trace CSV")
    p.add_argument("kind", choices=("t1", "envelope", "ramsey", "scaling", "crossing"))
    p.add_argument("--input", required=True)
    p.add_argument("--beating", action="store_true", help="ramsey: include a beat note")
    p.add_argument("-N", "--n-pulses", type=int, help="envelope: pulse number")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("oracle-check", parents=[common],
                       help="pseudo-spin factor vs exact two-nucleus factor")
    p.add_argument("--n-list", type=int_list, default=[8, 16, 32])
    p.add_argument("--tau-max", type=float, default=300e-6, help="s")
    p.add_argument("--tol", type=float, default=0.05)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("reproduce", parents=[common],
                       help="synthetic figure/table bundle plus checks.txt")
    p.add_argument("tag", choices=FIGURES)
    p.set_defaults(func=cmd_reproduce)
    return ap


def _load(args) -> EnvironmentModel:
    if args.model is None:
        return reference_model()
    path = Path(args.model)
    try:
        return load_model(path)
    except OSError as exc:
        raise CliIOError(f"cannot read model {path}: {exc}") from exc


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = ["nvdecouple", *argv]
    if args.threads < 1:
        print("nvdecouple: --threads must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        model = _load(args)
        return args.func(args, model)
    except CliIOError as exc:
        print(f"nvdecouple: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ModelError, FitError, ValueError) as exc:
        print(f"nvdecouple: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
