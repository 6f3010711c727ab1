"""``qmetro`` command line: bound | fisher | simulate | optimize.

Exit codes: 0 ok, 2 config/parse error, 3 zero eigenvalue spread,
4 derivative cross-check failure (or non-regular with ``--strict``),
5 enumeration failure (history cap, missing policy entry, size cap).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__
from .codec import encode_array, encode_state
from .config import ConfigError, ExperimentConfig, load_config
from .errors import Blowup, CapExceeded, CrossCheckFailure, NonRegular, PolicyGap, QMetroError, ZeroSpread
from .fisher import (
    classical_fisher,
    linearize_povm,
    optimal_configuration,
    quantum_crb,
    saturation_ratio,
    two_level_optimum_scan,
)
from .linalg import eig_hermitian, spectral_spread
from .montecarlo import bound_audit, run_experiment
from .protocols import MultiRoundSpec, run_feedback_distribution, run_multiround_distribution

SCHEMA_VERSION = 1

EXIT_OK, EXIT_PARSE, EXIT_ZERO_SPREAD, EXIT_CROSS_CHECK, EXIT_ENUMERATION = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


def _finite(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _label(lab) -> str:
    if isinstance(lab, tuple):
        if lab and isinstance(lab[0], tuple):
            return "|".join(_label(x) for x in lab)
        return "-".join(str(x) for x in lab)
    return str(lab)


def _report(command: str, **body) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": command, "qmetro_version": __version__, **body}


def cmd_bound(cfg: ExperimentConfig, args) -> tuple[dict, list]:
    cfg.require("hamiltonian", "tau")
    w = eig_hermitian(cfg.hamiltonian).eigenvalues
    spread = spectral_spread(cfg.hamiltonian)
    if spread <= 0:
        raise ZeroSpread("zero eigenvalue spread")
    delta = quantum_crb(cfg.hamiltonian, cfg.tau, cfg.shots)
    rep = _report("bound", max_eigenvalue=float(w[-1]), min_eigenvalue=float(w[0]), spread=spread,
                  tau=cfg.tau, shots=cfg.shots, delta_b_min=delta)
    print(f"Lambda = {w[-1]:.6f}  lambda = {w[0]:.6f}  spread = {spread:.6f}  delta_b_min = {delta:.6f}",
          file=sys.stderr)
    rows = [["key", "value"]] + [[k, rep[k]] for k in ("max_eigenvalue", "min_eigenvalue", "spread", "delta_b_min")]
    return rep, rows


def _quantum_bound(h, tau, n):
    try:
        return quantum_crb(h, tau, n)
    except (ZeroSpread, ValueError):
        return None


def cmd_fisher(cfg: ExperimentConfig, args) -> tuple[dict, list]:
    if cfg.protocol is None:
        cfg.require("state", "hamiltonian", "povm", "tau")
        lin = linearize_povm(cfg.state, cfg.hamiltonian, cfg.povm, cfg.tau)
        fd = lin.fd_residual
        labels = lin.labels
        n = cfg.shots
        residuals = {"finite_difference_max_abs": _finite(fd)}
        qb = _quantum_bound(cfg.hamiltonian, cfg.tau, n)
    else:
        spec = cfg.protocol
        multi = isinstance(spec, MultiRoundSpec)
        dist = run_multiround_distribution(spec) if multi else run_feedback_distribution(spec)
        lin = dist.linearized()
        labels = dist.labels
        n = cfg.shots if multi else spec.rounds
        residuals = {"finite_difference_max_abs": float(np.max(np.abs(dist.dp - dist.dp_analytic))),
                     "normalization_projection": dist.fd_residual}
        per_shot = spec.rounds if multi else 1
        qb = _quantum_bound(cfg.hamiltonian, cfg.tau, n * per_shot) if cfg.hamiltonian is not None else None
    rep_f = classical_fisher(lin, n, quantum_bound=qb, strict=args.strict)
    rep = _report(
        "fisher",
        labels=[_label(x) for x in labels],
        p0=lin.p0.tolist(),
        dp=lin.dp.tolist(),
        fisher_per_shot=rep_f.fisher_per_shot,
        fisher_total=rep_f.fisher_per_shot * n,
        shots=n,
        delta_b_min=_finite(rep_f.delta_b_min),
        quantum_bound=qb,
        bound_respected=None if qb is None else bool(rep_f.delta_b_min >= qb * (1 - 1e-9)),
        regular=rep_f.regular,
        irregular_outcomes=[_label(labels[i]) for i in rep_f.irregular_outcomes],
        cross_check=residuals,
    )
    rows = [["label", "p0", "dp"]] + [[_label(x), p, d] for x, p, d in zip(labels, lin.p0, lin.dp)]
    return rep, rows


def cmd_simulate(cfg: ExperimentConfig, args) -> tuple[dict, list]:
    if args.seed is None:
        raise UsageError("simulate needs an explicit --seed")
    spec = cfg.resolved_protocol()
    multi = isinstance(spec, MultiRoundSpec)
    n = cfg.shots if multi else spec.rounds
    run = run_experiment(spec, cfg.b_true, n, args.seed, cfg.estimator, cfg.repeats, strict=args.strict)
    dist = run_multiround_distribution(spec, cfg.b_true) if multi else run_feedback_distribution(spec, cfg.b_true)
    audit = bound_audit(run)
    rep = _report(
        "simulate",
        distribution={"labels": [_label(x) for x in dist.labels], "probabilities": dist.probabilities.tolist(),
                      "p0": dist.p0.tolist(), "dp": dist.dp.tolist(), "b": dist.b},
        run=run.as_dict(),
        audit=audit.as_dict(),
    )
    rows = [["trial", "label", "count"]]
    for t, counts in enumerate(run.counts):
        rows += [[t, _label(lab), int(c)] for lab, c in zip(run.labels, counts)]
    if args.format == "json":
        rep["samples"] = {"labels": [_label(x) for x in run.labels], "counts": run.counts.tolist()}
    return rep, rows


def cmd_optimize(cfg: ExperimentConfig, args) -> tuple[dict, list]:
    cfg.require("hamiltonian")
    h = cfg.hamiltonian
    spread = spectral_spread(h)
    if spread <= 0:
        raise ZeroSpread("zero eigenvalue spread")
    tau = cfg.tau if cfg.tau is not None else 1.0
    state, obs = optimal_configuration(h)
    body = {
        "dimension": h.shape[0],
        "spread": spread,
        "analytic": {
            "state": encode_state(state),
            "observable": encode_array(obs.operator),
            "saturation_ratio": saturation_ratio(state, h, obs),
            "delta_b": quantum_crb(h, tau, cfg.shots),
        },
    }
    rows = [["key", "value"], ["spread", spread], ["saturation_ratio", body["analytic"]["saturation_ratio"]]]
    if h.shape[0] == 2:
        kw = {} if cfg.phi is None else {"phi": cfg.phi}
        scan = two_level_optimum_scan(h, cfg.grid, tau, cfg.shots, **kw)
        body["scan"] = {"alpha": scan.alpha, "theta": scan.theta, "delta_b": _finite(scan.delta_b), "grid": cfg.grid}
        rows += [["alpha", scan.alpha], ["theta", scan.theta], ["scan_delta_b", scan.delta_b]]
    return _report("optimize", **body), rows


COMMANDS = {"bound": cmd_bound, "fisher": cmd_fisher, "simulate": cmd_simulate, "optimize": cmd_optimize}


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qmetro", description=__doc__.split("\n")[0],
                                formatter_class=argparse.RawDescriptionHelpFormatter,
                                epilog="exit codes: 0 ok, 2 parse, 3 zero spread, 4 cross-check, 5 enumeration")
    p.add_argument("--version", action="version", version=f"qmetro {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, metavar="PATH")
        s.add_argument("--seed", type=_seed, metavar="U64")
        s.add_argument("--out", metavar="PATH")
        s.add_argument("--format", choices=("json", "csv"), default="json")
        s.add_argument("--strict", action="store_true", help="treat non-regular distributions as errors")
    return p


def _csv_text(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _emit(report: dict, rows: list, args):
    text = json.dumps(report, indent=2, sort_keys=False)
    if args.format == "csv":
        table = _csv_text(rows)
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(table)
            print(text)
        else:
            sys.stdout.write(table)
            print(text, file=sys.stderr)
    elif args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config)
        report, rows = COMMANDS[args.command](cfg, args)
        _emit(report, rows, args)
        return EXIT_OK
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ZeroSpread as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ZERO_SPREAD
    except (CrossCheckFailure, NonRegular) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CROSS_CHECK
    except (Blowup, PolicyGap, CapExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENUMERATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except QMetroError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
