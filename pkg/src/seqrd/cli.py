"""Command-line front end.

``seqrd {rates,sweep,simulate,verify} --config FILE [--out FILE] [--seed N]
[--format {csv,text}] [--kinds LIST] [--check NAME]``

Exit codes: 0 ok, 1 verification failure, 2 configuration error,
3 infeasible or out-of-region request. Data goes to ``--out`` or standard
output; diagnostics go to standard error.
"""
from __future__ import annotations

import argparse
import io
import logging
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import config as cfgmod
from .closed_forms import (cc_sum_rate_gm, cnc_sum_rate_gm, counter_example_gap,
                           dpcm_stage_rates, jc_rate_gm, transform_rates)
from .discrete_rd import (DiscreteProblem, cnc_sum_rate_discrete, equivalence_scan,
                          jc_rd_discrete, scan_to_csv, source_pmf)
from .errors import ConfigError, InfeasibleError, NoClosedFormError, OutOfRegionError
from .gauss_opt import SolverOptions, min_sum_rate, verify_corollary, OptProblem
from .info import entropy, kdirect_identity_residual
from .mc_sim import simulate_dpcm, simulate_jc_testchannel
from .model import (JC, SourceSpec, SystemKind, build_covariance, in_region_cc, in_region_jc,
                    jc_hypercube_bound, markov_constraints, parse_kind)

log = logging.getLogger("seqrd")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_REGION = 0, 1, 2, 3
RATES_SCHEMA = "#schema=rates.v1"
SWEEP_SCHEMA = "#schema=sweep.v1"
VERIFY_SCHEMA = "#schema=verify.v1"


@dataclass
class RunConfig:
    subcommand: str
    config: str | None
    out: str | None = None
    seed: int | None = None
    format: str = "text"
    kinds: str | None = None
    check: str | None = None
    verbosity: int = 0


def _fmt(x: float, digits: int) -> str:
    if math.isinf(x):
        return "inf"
    return f"{x:.{digits}f}"


def _flag(value) -> str:
    return "na" if value is None else ("yes" if value else "no")


def _text_table(header, rows) -> str:
    cells = [list(map(str, header))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
                     for r in cells) + "\n"


def _csv(schema, header, rows) -> str:
    import csv

    buf = io.StringIO()
    buf.write(schema + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# -- rate routing ----------------------------------------------------------------

def gaussian_rate(spec: SourceSpec, D, kind: SystemKind, options: SolverOptions):
    """``(rate_bits, method)``: closed form where valid, else the numerical solver."""
    S = build_covariance(spec)
    try:
        if kind.tag == JC:
            return jc_rate_gm(S, D), "closed_form"
        k = kind.total_delay(spec.T)
        if k == 0:
            return cc_sum_rate_gm(spec, D), "closed_form"
        return cnc_sum_rate_gm(spec, D, k), "closed_form"
    except (OutOfRegionError, NoClosedFormError) as exc:
        log.info("%s: %s; using the numerical solver", kind, exc)
    res = min_sum_rate(OptProblem(S, D, markov_constraints(kind, spec.T), options))
    if not res.converged:
        log.warning("%s: solver did not converge (%s)", kind, res.message)
    return res.rate, "numerical"


def binary_rate(spec: SourceSpec, D, kind: SystemKind, options):
    pmf = source_pmf(spec)
    if kind.tag == JC:
        res = jc_rd_discrete(DiscreteProblem(pmf, D, options=options))
    else:
        res = cnc_sum_rate_discrete(DiscreteProblem(pmf, D, delay=kind.total_delay(spec.T),
                                                    options=options))
    if not res.converged:
        log.warning("%s: %s", kind, res.message)
    return res.rate, "numerical"


def _regions(spec, D):
    if not spec.is_gaussian:
        return None, None
    try:
        cc = in_region_cc(spec, D)
    except NoClosedFormError:
        cc = None
    return cc, in_region_jc(build_covariance(spec), D)


def _rate(spec, D, kind, cfg, seed):
    if spec.is_gaussian:
        return gaussian_rate(spec, D, kind, cfgmod.parse_solver(cfg, seed))
    return binary_rate(spec, D, kind, cfgmod.parse_discrete_options(cfg))


# -- subcommands -------------------------------------------------------------------

def cmd_rates(run: RunConfig, cfg) -> tuple:
    spec = cfgmod.parse_source(cfg)
    D = cfgmod.parse_distortion(cfg, spec.T)
    kinds = cfgmod.parse_system(cfg, run.kinds)
    in_cc, in_jc = _regions(spec, D)
    rows = []
    for kind in kinds:
        try:
            kind.total_delay(spec.T)
        except ValueError as exc:
            raise ConfigError(str(exc), key="system.kinds") from None
        rate, method = _rate(spec, D, kind, cfg, run.seed)
        rows.append((str(kind), rate, method))
    if run.format == "csv":
        return EXIT_OK, _csv(RATES_SCHEMA, ["kind", "rate_bits", "method", "in_cc_region",
                                            "in_jc_region"],
                             [(k, _fmt(r, 10), m, _flag(in_cc), _flag(in_jc)) for k, r, m in rows])
    head = (f"source: {spec.kind}  T={spec.T}\n"
            f"D: {', '.join(repr(d) for d in D)}\n"
            f"in_cc_region: {_flag(in_cc)}  in_jc_region: {_flag(in_jc)}\n")
    return EXIT_OK, head + _text_table(["kind", "rate_bits", "method"],
                                       [(k, _fmt(r, 4), m) for k, r, m in rows])


def cmd_sweep(run: RunConfig, cfg) -> tuple:
    spec = cfgmod.parse_source(cfg)
    grid = cfgmod.parse_sweep(cfg, spec.T)
    if not spec.is_gaussian:
        if spec.T != 3:
            raise ConfigError("binary sweeps need three frames", key="source.crossovers")
        tol = cfgmod.get_float(cfg, "sweep", "equal_tol", 1e-3)
        rows = equivalence_scan(spec.crossovers[0], spec.crossovers[1], grid, tol=tol,
                                options=cfgmod.parse_discrete_options(cfg))
        text = scan_to_csv(rows)
        if run.format == "text":
            lines = text.splitlines()
            table = [line.split(",") for line in lines[2:]]
            return EXIT_OK, _text_table(lines[1].split(","), table)
        return EXIT_OK, text

    kinds = cfgmod.parse_system(cfg, run.kinds)
    names = [str(k) for k in kinds]
    header = [f"D{j + 1}" for j in range(spec.T)] + [f"R_{n}_bits" for n in names]
    header += [f"gap_{n}_bits" for n in names if n != JC]
    header += ["in_cc_region", "in_jc_region"]
    rows = []
    jc = SystemKind(JC)
    for D in grid:
        rates = [_rate(spec, D, k, cfg, run.seed)[0] for k in kinds]
        jc_rate = rates[names.index(JC)] if JC in names else _rate(spec, D, jc, cfg, run.seed)[0]
        gaps = [r - jc_rate for r, n in zip(rates, names) if n != JC]
        in_cc, in_jc = _regions(spec, D)
        digits = 10 if run.format == "csv" else 4
        rows.append([f"{d:.6g}" for d in D] + [_fmt(r, digits) for r in rates]
                    + [_fmt(g, digits) for g in gaps] + [_flag(in_cc), _flag(in_jc)])
    if run.format == "csv":
        return EXIT_OK, _csv(SWEEP_SCHEMA, header, rows)
    return EXIT_OK, _text_table(header, rows)


def cmd_simulate(run: RunConfig, cfg) -> tuple:
    spec = cfgmod.parse_source(cfg)
    D = cfgmod.parse_distortion(cfg, spec.T)
    sim, backend, extra = cfgmod.parse_sim(cfg, spec, D, run.seed)
    if sim is None:
        if not spec.is_gaussian:
            raise ConfigError("simulation needs a Gaussian source", key="source.kind")
        report = simulate_jc_testchannel(build_covariance(spec), D, **extra)
    else:
        report = simulate_dpcm(sim)
    if run.format == "csv":
        return EXIT_OK, report.to_csv()
    return EXIT_OK, report.to_json() + "\n"


# -- verification checks -------------------------------------------------------------

def _check_closed_forms(ctx):
    spec = SourceSpec.gauss_markov([1, 1, 1], [0.9, 0.9])
    D = [0.05] * 3
    got = [cc_sum_rate_gm(spec, D), jc_rate_gm(build_covariance(spec), D),
           *dpcm_stage_rates(spec, D).rates]
    want = [4.3658, 4.0870, 2.1610, 1.1024, 1.1024]
    err = max(abs(g - w) for g, w in zip(got, want))
    return err <= 1e-4, f"max error {err:.2e}"


def _check_corollary(ctx):
    spec = SourceSpec.gauss_markov([1, 1, 1], [0.9, 0.9])
    cnc = verify_corollary(spec, [0.05] * 3, parse_kind("CNC1"))
    cc = verify_corollary(spec, [0.05] * 3, parse_kind("CC"))
    ok = cnc.gap <= 1e-3 and abs(cc.gap - 0.2788) <= 2e-3
    return ok, f"CNC1 gap {cnc.gap:.2e}, CC gap {cc.gap:.4f}"


def _check_counter_example(ctx):
    gap = counter_example_gap(0.9, 0.05, 0.05)
    return abs(gap - 0.1394) <= 5e-3 and gap > 0, f"gap {gap:.4f}"


def _check_identity(ctx):
    rng = np.random.default_rng(ctx["seed"])
    worst = 0.0
    for i in range(60):
        T = (2, 3, 4)[i % 3]
        k = (0, 1, 2)[(i // 3) % 3]
        if k + 1 > T:
            continue
        p = rng.random((2,) * (2 * T))
        worst = max(worst, kdirect_identity_residual(p / p.sum(), k))
    return worst <= 1e-10, f"max residual {worst:.1e}"


def _check_transforms(ctx):
    cases = [("CNC1", "NCC1", (1, 2, 3), (3, 3, 0)),
             ("NCC1", "CNC1", (1, 2, 3), (0, 1, 5)),
             ("CNC2", "NCNC(1,1)", (1, 1, 1, 1), (2, 1, 1, 0))]
    ok = all(transform_rates(parse_kind(a), parse_kind(b), R) == want
             for a, b, R, want in cases)
    return ok, f"{len(cases)} fixtures"


def _check_binary_zero(ctx):
    pmf = source_pmf(SourceSpec.binary_markov([0.1, 0.1]))
    h = entropy(pmf)
    jc = jc_rd_discrete(DiscreteProblem(pmf, [0, 0, 0])).rate
    cnc = cnc_sum_rate_discrete(DiscreteProblem(pmf, [0, 0, 0])).rate
    err = max(abs(jc - h), abs(cnc - h))
    return err <= 1e-6, f"H = {h:.6f}, max error {err:.1e}"


def _check_regions(ctx):
    rng = np.random.default_rng(ctx["seed"])
    for _ in range(100):
        T = int(rng.integers(2, 6))
        B = rng.standard_normal((T, T))
        S = B @ B.T + 0.1 * np.eye(T)
        bound = jc_hypercube_bound(S)
        if not in_region_jc(S, rng.random(T) * bound):
            return False, "hypercube point outside the JC region"
    return True, "100 instances"


def _check_dpcm(ctx):
    from .mc_sim import SimConfig

    spec = SourceSpec.gauss_markov([1, 1, 1], [0.9, 0.9])
    rep = simulate_dpcm(SimConfig(spec, (0.05,) * 3, n=200_000, seed=ctx["seed"]))
    err = max(abs(m - 0.05) / 0.05 for m in rep.mse)
    return err <= 0.02, f"max relative MSE error {err:.2e}"


def _check_rates(ctx):
    cfg = ctx["cfg"]
    if cfg is None or not cfg.has_option("verify", "expected"):
        return True, "no expected rates configured"
    spec = cfgmod.parse_source(cfg)
    D = cfgmod.parse_distortion(cfg, spec.T)
    tol = cfgmod.get_float(cfg, "verify", "tol", 1e-3)
    worst = 0.0
    for item in cfg.get("verify", "expected").split(","):
        if not item.strip():
            continue
        try:
            name, value = item.split(":")
            kind, want = parse_kind(name), float(value)
        except ValueError:
            raise ConfigError(f"expected KIND:VALUE, got {item.strip()!r}",
                              key="verify.expected") from None
        got = _rate(spec, D, kind, cfg, ctx["seed"])[0]
        worst = max(worst, abs(got - want))
    return worst <= tol, f"max error {worst:.2e} (tol {tol:g})"


CHECKS = {
    "closed_forms": _check_closed_forms,
    "corollary": _check_corollary,
    "counter_example": _check_counter_example,
    "identity": _check_identity,
    "transforms": _check_transforms,
    "binary_zero": _check_binary_zero,
    "regions": _check_regions,
    "dpcm": _check_dpcm,
    "rates": _check_rates,
}


def cmd_verify(run: RunConfig, cfg) -> tuple:
    names = list(CHECKS)
    selected = run.check
    if not selected and cfg is not None and cfg.has_option("verify", "checks"):
        selected = cfg.get("verify", "checks")
    if selected and selected.strip() != "all":
        names = [n.strip() for n in selected.split(",") if n.strip()]
        unknown = [n for n in names if n not in CHECKS]
        if unknown:
            raise ConfigError(f"unknown check(s) {', '.join(unknown)}; "
                              f"known: {', '.join(CHECKS)}", key="--check")
    ctx = {"cfg": cfg, "seed": 0 if run.seed is None else run.seed}
    rows = []
    for name in names:
        ok, detail = CHECKS[name](ctx)
        rows.append((name, "PASS" if ok else "FAIL", detail))
    code = EXIT_OK if all(r[1] == "PASS" for r in rows) else EXIT_VERIFY
    if run.format == "csv":
        return code, _csv(VERIFY_SCHEMA, ["check", "status", "detail"], rows)
    return code, _text_table(["check", "status", "detail"], rows)


COMMANDS = {"rates": cmd_rates, "sweep": cmd_sweep, "simulate": cmd_simulate,
            "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqrd",
                                     description="Sequential coding rate computations.")
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="INI configuration file")
    parser.add_argument("--out", help="output file (default: standard output)")
    parser.add_argument("--seed", type=int, help="seed for solvers and simulations")
    parser.add_argument("--format", choices=("csv", "text"), default="text")
    parser.add_argument("--kinds", help="comma-separated architectures, e.g. CC,CNC1,JC")
    parser.add_argument("--check", help="verification check name(s)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    run = RunConfig(subcommand=args.subcommand, config=args.config, out=args.out,
                    seed=args.seed, format=args.format, kinds=args.kinds, check=args.check,
                    verbosity=args.verbose)
    logging.basicConfig(level=logging.WARNING - 10 * min(run.verbosity, 2),
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    if run.seed is not None and not 0 <= run.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if run.config is None:
            if run.subcommand != "verify":
                raise ConfigError("--config is required", key="--config")
            cfg = None
        else:
            cfg = cfgmod.read_config(run.config)
        code, text = COMMANDS[run.subcommand](run, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OutOfRegionError, InfeasibleError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_REGION
    if run.out:
        with open(run.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
