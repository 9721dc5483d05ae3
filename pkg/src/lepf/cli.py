"""Command-line entry point: ``lepf <subcommand> [options]``.

Every subcommand writes CSV (header row, ``.`` decimals) to ``--out`` or
stdout. Options may also come from a flat ``key=value`` file passed with
``--config``; command-line flags take precedence.

Exit codes: 0 success, 1 invalid input or failed check, 2 runtime
invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import warnings
from pathlib import Path

import numpy as np

from . import acceptance
from .collision import ZLawSpec, sample_ij_chain, z_mgf, z_pmf
from .experiments import exact_truth, make_scheme, mse_ratio, reference_truth, run_scheme
from .hmm import (
    FiniteHmm,
    GenericHmm,
    binary_toy,
    c_constant,
    gaussian_toy,
    is_iid,
    load_finite_hmm,
    simulate_hmm,
    stoch_vol,
)
from .interaction import build_alpha, load_alpha_csv, verify_assumptions
from .smc import InvariantViolation, replicate_rng
from .variance import (
    T0,
    centered_phi,
    ratio_Rn,
    scaling_study,
    sigma2_simple_model,
    sigma2_pattern_sum,
    sigma2_path_enumeration,
    theta_sweep,
)

DEFAULTS = {
    "scheme": "lepf",
    "M": 3,
    "m": 3,
    "theta": 1,
    "n": 20,
    "replicates": 100,
    "seed": 0,
    "workers": 1,
    "method": None,
    "model": "gaussian_toy",
    "t": None,
    "samples": 100_000,
    "study": "sigma2",
    "exponents": "0.75,0.90,1.00,1.11,1.33",
    "n_values": "10,30,100,300,1000,3000,10000",
    "truth": "exact",
    "n_ref": None,
    "phi": None,
    "alpha_file": None,
    "summary_out": None,
    "ess_out": None,
    "out": None,
    "mgf": False,
}

INT_KEYS = {"M", "m", "theta", "n", "replicates", "seed", "workers", "samples", "n_ref"}
FLOAT_KEYS = {"t"}
BOOL_KEYS = {"mgf"}


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


def read_config(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _coerce(key, value):
    if value is None or not isinstance(value, str):
        return value
    if key in INT_KEYS:
        return int(value)
    if key in FLOAT_KEYS:
        return float(value)
    if key in BOOL_KEYS:
        return value.lower() in ("1", "true", "yes", "on")
    return value


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Merge defaults < config file < explicit flags."""
    file_values = read_config(args.config) if args.config else {}
    for key, default in DEFAULTS.items():
        if getattr(args, key, None) is None or (key in BOOL_KEYS and not getattr(args, key)):
            setattr(args, key, _coerce(key, file_values.get(key, default)))
    if args.seed < 0:
        raise UsageError("--seed must be non-negative")
    return args


def parse_model(spec: str):
    """``name[:k=v,...]`` for zoo models, or a path to a finite model file."""
    name, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        k, _, v = item.partition("=")
        params[k.strip()] = float(v)
    if name == "gaussian_toy":
        return gaussian_toy(**params)
    if name == "binary_toy":
        return binary_toy(params.get("p", 0.25), params.get("delta", 0.01))
    if name == "stoch_vol":
        return stoch_vol(params.get("a", 0.9), params.get("b", 0.1), params.get("sigma_v", 0.5), params.get("x0"))
    path = Path(spec)
    if path.exists():
        return load_finite_hmm(path)
    raise UsageError(f"unknown model {spec!r} (zoo: gaussian_toy, binary_toy, stoch_vol; or a model file)")


def parse_phi(text, model):
    if text is None:
        return None
    values = np.array([float(v) for v in text.split(",")])
    if isinstance(model, FiniteHmm) and values.size != model.n_states:
        raise UsageError(f"--phi needs {model.n_states} values")
    return values


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text):
    return [int(float(v)) for v in str(text).split(",") if v.strip()]


class Output:
    """CSV sink for ``--out`` or stdout."""

    def __init__(self, path):
        self.path = path
        self.buffer = io.StringIO(newline="")
        self.writer = csv.writer(self.buffer, lineterminator="\n")

    def row(self, *values):
        self.writer.writerow([_fmt(v) for v in values])

    def close(self):
        text = self.buffer.getvalue()
        if self.path in (None, "-"):
            sys.stdout.write(text)
        else:
            Path(self.path).write_text(text)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _scheme(args, kind=None):
    kind = kind or args.scheme
    if kind not in ("lepf", "ibpf"):
        raise UsageError(f"--scheme must be lepf or ibpf here, got {kind!r}")
    return make_scheme(kind, args.M, args.theta)


# ---------------------------------------------------------------------------
# subcommands


def cmd_check_alpha(args) -> int:
    scheme = _scheme(args)
    if args.alpha_file:
        alpha = load_alpha_csv(args.alpha_file, args.M, scheme)
    else:
        alpha = build_alpha(scheme, args.m)
    report = verify_assumptions(alpha, scheme)
    out = Output(args.out)
    out.row("assumption", "status", "witness", "note")
    for c in report.checks:
        out.row(c.name, "PASS" if c.passed else "FAIL", "" if c.witness is None else " ".join(map(str, c.witness)), c.note)
    out.close()
    return 0 if report.passed else 1


def cmd_zlaw(args) -> int:
    scheme = _scheme(args)
    method = args.method or "dp"
    out = Output(args.out)
    if args.mgf:
        t = T0 if args.t is None else args.t
        out.row("n", "log_mgf")
        for n in range(args.n + 1):
            out.row(n, z_mgf(ZLawSpec(scheme, n), t))
    elif method == "mc":
        rng = replicate_rng(args.seed, 0, 0)
        z = sample_ij_chain(scheme, args.n, (1, 1), rng, args.samples)
        counts = np.bincount(z, minlength=args.n + 1)
        out.row("z", "probability")
        for k, cnt in enumerate(counts):
            out.row(k, cnt / args.samples)
    elif method in ("dp", "mixture"):
        pmf = z_pmf(ZLawSpec(scheme, args.n), method)
        out.row("z", "probability")
        for k, p in zip(pmf.support, pmf.probs):
            out.row(int(k), p)
    else:
        raise UsageError(f"zlaw --method must be dp, mixture or mc, got {method!r}")
    out.close()
    return 0


def _variance_sigma2(args, out):
    model = parse_model(args.model)
    method = args.method or "all"
    if method not in ("all", "closed", "patterns", "paths"):
        raise UsageError(f"variance --method must be closed, patterns, paths or all, got {method!r}")
    kinds = ("lepf", "ibpf") if args.scheme == "both" else (args.scheme,)
    out.row("n", "scheme", "method", "sigma2", "log_sigma2")
    for kind in kinds:
        scheme = _scheme(args, kind)
        for n in range(args.n + 1):
            results = []
            closed_ok = not isinstance(model, FiniteHmm) or is_iid(model)
            if method == "closed" and not closed_ok:
                raise UsageError("the closed form needs an i.i.d. model (transition rows equal pi0)")
            if method in ("all", "closed") and closed_ok:
                if isinstance(model, FiniteHmm):
                    phi = parse_phi(args.phi, model)
                    phi = np.arange(model.n_states, dtype=float) if phi is None else phi
                    phi_var = float(model.pi0 @ centered_phi(model, phi, n) ** 2)
                else:
                    phi_var = 1.0
                results.append(sigma2_simple_model(c_constant(model), n, scheme, phi_var))
            if method in ("all", "patterns", "paths") and isinstance(model, FiniteHmm):
                phi = parse_phi(args.phi, model)
                phi = np.arange(model.n_states, dtype=float) if phi is None else phi
                if method in ("all", "patterns") and n <= 14:
                    results.append(sigma2_pattern_sum(model, phi, n, scheme))
                if method == "paths" or (method == "all" and n <= 3):
                    results.append(sigma2_path_enumeration(model, phi, n, scheme))
            elif method in ("patterns", "paths"):
                raise UsageError("patterns/paths need a finite model")
            for r in results:
                out.row(n, kind, r.method, r.sigma2, r.log_sigma2)


def cmd_variance(args) -> int:
    out = Output(args.out)
    t = T0 if args.t is None else args.t
    study = args.study
    if study == "sigma2":
        _variance_sigma2(args, out)
    elif study == "ratio":
        out.row("n", "R_n")
        for n in range(args.n + 1):
            out.row(n, ratio_Rn(n, args.M, args.theta, t))
    elif study == "theta-sweep":
        out.row("theta", "R_n")
        for th, r in enumerate(theta_sweep(args.M, args.n, t), start=1):
            out.row(th, r)
    elif study == "scaling":
        kind = "ibpf" if args.scheme == "ibpf" else "lepf"
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            curves = scaling_study(_floats(args.exponents), _ints(args.n_values), t, args.theta, kind)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        out.row("exponent", "n", "M", "theta", "log_mgf", "mgf")
        for p, rows in curves.items():
            for r in rows:
                out.row(p, r["n"], r["M"], r["theta"], r["log_mgf"], r["mgf"])
    else:
        raise UsageError(f"unknown --study {study!r}")
    out.close()
    return 0


def cmd_simulate(args) -> int:
    model = parse_model(args.model)
    steps = args.n
    if isinstance(model, GenericHmm) and model.name == "stoch_vol":
        _, obs = simulate_hmm(model, steps + 1, replicate_rng(args.seed, 7, 0))
        model = model.with_observations(obs)
    phi = parse_phi(args.phi, model)
    N = args.M * args.m
    if args.truth == "exact":
        truth = exact_truth(model, steps, phi)
    elif args.truth == "reference_bpf":
        n_ref = args.n_ref or 100 * N
        if n_ref < 10 * N:
            raise UsageError(f"--n-ref must be at least 10*M*m = {10 * N}")
        if isinstance(model, FiniteHmm):
            print("warning: exact truth is available for finite models", file=sys.stderr)
        truth = reference_truth(model, steps, n_ref, args.seed, phi)
    else:
        raise UsageError(f"unknown --truth {args.truth!r}")

    kinds = ("ibpf", "lepf") if args.scheme == "both" else (args.scheme,)
    records = {}
    for kind in kinds:
        _scheme(args, kind)
        records[kind] = run_scheme(model, kind, args.M, args.m, args.theta, steps, args.replicates, args.seed, phi, args.workers)

    out = Output(args.out)
    cols = ["estimate", "normalizer_log", "ess", "neff", "max_group_weight", "quad_concentration"]
    out.row("replicate", "n", "scheme", "M", "m", "theta", *cols, "error")
    for kind in kinds:
        for row in records[kind].rows():
            n = row["n"]
            out.row(row["replicate"], n, kind, row["M"], row["m"], row["theta"], *(row[c] for c in cols), row["estimate"] - truth[n])
    out.close()

    if args.summary_out:
        if len(kinds) != 2:
            raise UsageError("--summary-out needs --scheme both")
        summary = Output(args.summary_out)
        summary.row("n", "mse_ibpf", "mse_lepf", "ratio")
        for r in mse_ratio(records["ibpf"], records["lepf"], truth):
            summary.row(r.n, r.mse_ibpf, r.mse_lepf, r.ratio)
        summary.close()
    if args.ess_out:
        trace = Output(args.ess_out)
        trace.row("n", "scheme", "ess", "running_min")
        for kind in kinds:
            ess = records[kind]["ess"][0]
            for n, (e, lo) in enumerate(zip(ess, np.minimum.accumulate(ess))):
                trace.row(n, kind, e, lo)
        trace.close()
    return 0


def cmd_selftest(args) -> int:
    results = acceptance.run_all()
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    for r in failed:
        print(f"failed: {r.key} {r.name}")
    return 1 if failed else 0


COMMANDS = {
    "check-alpha": cmd_check_alpha,
    "zlaw": cmd_zlaw,
    "variance": cmd_variance,
    "simulate": cmd_simulate,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file; flags override it")
    common.add_argument("--scheme", choices=["lepf", "ibpf", "both"])
    common.add_argument("--M", type=int, help="group size")
    common.add_argument("--m", type=int, help="number of groups")
    common.add_argument("--theta", type=int, help="exchange shift (local exchange only)")
    common.add_argument("--n", type=int, help="horizon / number of steps")
    common.add_argument("--replicates", type=int)
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--workers", type=int, help="threads for replicate blocks")
    common.add_argument("--out", help="output CSV path (default stdout)")
    common.add_argument("--model", help="gaussian_toy | binary_toy:p=..,delta=.. | stoch_vol:a=..,b=..,sigma_v=.. | model file")
    common.add_argument("--method", help="dp|mixture|mc for zlaw; closed|patterns|paths|all for variance")
    common.add_argument("--phi", help="comma-separated test function values (finite models)")

    parser = argparse.ArgumentParser(prog="lepf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("check-alpha", parents=[common], help="verify structural properties of an interaction matrix")
    p.add_argument("--alpha-file", dest="alpha_file", help="dense CSV matrix to check instead of the built one")
    p = sub.add_parser("zlaw", parents=[common], help="collision-count pmf or mgf curve")
    p.add_argument("--samples", type=int)
    p.add_argument("--mgf", action="store_true", help="emit n,log_mgf for n = 0..N")
    p.add_argument("--t", type=float, help="mgf argument (default: Gaussian toy constant)")
    p = sub.add_parser("variance", parents=[common], help="asymptotic variance studies")
    p.add_argument("--study", choices=["sigma2", "ratio", "theta-sweep", "scaling"])
    p.add_argument("--t", type=float)
    p.add_argument("--exponents", help="comma-separated exponents p of M(n) = n^p")
    p.add_argument("--n-values", dest="n_values", help="comma-separated horizons for the scaling study")
    p = sub.add_parser("simulate", parents=[common], help="run particle filters and record per-step diagnostics")
    p.add_argument("--truth", choices=["exact", "reference_bpf"])
    p.add_argument("--n-ref", dest="n_ref", type=int, help="particles of the reference bootstrap filter")
    p.add_argument("--summary-out", dest="summary_out", help="MSE ratio CSV (needs --scheme both)")
    p.add_argument("--ess-out", dest="ess_out", help="ESS trace with running minimum for replicate 0")
    sub.add_parser("selftest", parents=[common], help="run the acceptance checks")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = resolve(args)
        return COMMANDS[args.command](args)
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
