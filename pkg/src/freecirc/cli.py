"""Command-line front end.

Every output carries a metadata header with the package version, the
resolved configuration and its hash. The timestamp is written last and is
not part of the hash, so identical runs differ only in that line.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import sys

import numpy as np

from . import __version__
from .errors import NumericalError, ValidationError
from .finite_algebra import (block_swap, build_irreduc_matrix, commutant_basis, example_3x3,
                             example_6x6, example_10x10, invariance_witness, jordan_similarity_6x6,
                             orthogonal_range_projection, search_generating_a, star_algebra_dimension)
from .hyperinvariant import (CriterionConfig, CriterionRefused, criterion_report,
                             quasinilpotence_certificate, strip_sup)
from .matrix_model import (max_abs_eigenvalue, mean_trace_moments, run_trials, sample,
                           singular_values, spectral_radius_estimate)
from .moment_engine import StarWord, moment, parse_word
from .step_algebra import PRESETS, BlockDensity, CovariancePair, grid_index, make_preset
from .transforms import cauchy_scalar, spectral_density

DEFAULT_SEED = 20240101
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- helpers

def _num(x) -> str:
    return format(float(x), ".17g")


def _cplx(z) -> dict:
    z = complex(z)
    return {"re": z.real, "im": z.imag}


def _parse_complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise ValidationError(f"cannot parse complex number {text!r}") from None


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _load_density(args) -> BlockDensity:
    if args.density:
        try:
            with open(args.density) as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read density file: {exc}") from None
        return BlockDensity.from_json(obj)
    if not args.preset:
        raise ValidationError("give --preset or --density")
    params = {}
    for item in args.param or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ValidationError(f"--param expects key=value, got {item!r}")
        params[key] = _parse_value(val)
    return make_preset(args.preset, args.m, params)


def _config(args) -> dict:
    skip = {"func", "out", "format"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _meta(args) -> dict:
    cfg = _config(args)
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return {
        "version": __version__,
        "command": args.command,
        "seed": getattr(args, "seed", None),
        "config": cfg,
        "config_hash": hashlib.sha256(blob).hexdigest()[:16],
    }


def _timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _emit(args, header, rows, payload):
    """Write ``rows`` as CSV or ``payload`` as JSON, with metadata."""
    meta = _meta(args)
    buf = io.StringIO()
    if args.format == "json":
        doc = {"meta": meta, **payload}
        doc["meta"]["timestamp"] = _timestamp()
        json.dump(doc, buf, indent=2, default=str)
        buf.write("\n")
    else:
        buf.write(f"# freecirc {meta['version']}\n")
        buf.write(f"# command: {meta['command']}\n")
        buf.write(f"# seed: {meta['seed']}\n")
        buf.write(f"# config: {json.dumps(meta['config'], sort_keys=True, default=str)}\n")
        buf.write(f"# config_hash: {meta['config_hash']}\n")
        for key, val in payload.items():
            if key != "rows" and not isinstance(val, (list, dict)):
                buf.write(f"# {key}: {val}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in r])
        buf.write(f"# timestamp: {_timestamp()}\n")
    text = buf.getvalue()
    if args.out and args.out != "-":
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ------------------------------------------------------------ subcommands

def cmd_moments(args):
    dens = _load_density(args)
    cov = CovariancePair.from_density(dens)
    if args.word:
        coeffs = {}
        for item in args.coef or []:
            name, sep, val = item.partition("=")
            if not sep:
                raise ValidationError(f"--coef expects name=values, got {item!r}")
            vals = [_parse_complex(v) for v in val.split(",")]
            coeffs[name] = vals[0] if len(vals) == 1 else vals
        word = parse_word(args.word, dens.m, coeffs)
        f = moment(cov, word)
        rows = [(i, v.real, v.imag) for i, v in enumerate(f.values)]
        payload = {"word": args.word, "values": [_cplx(v) for v in f.values],
                   "trace": _cplx(f.trace()), "rows": rows}
        _emit(args, ["cell", "re", "im"], rows, payload)
        return
    rows = []
    for n in range(1, args.n_max + 1):
        w = StarWord.from_symbols(["*", "1"] * n, dens.m)
        rows.append((n, float(moment(cov, w).trace().real)))
    _emit(args, ["n", "trace_moment"], rows, {"rows": rows})


def _grid(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValidationError("--density-grid expects start:stop:num")
    lo, hi, num = float(parts[0]), float(parts[1]), int(parts[2])
    if num < 2 or hi <= lo:
        raise ValidationError("--density-grid needs stop > start and num >= 2")
    return np.linspace(lo, hi, num)


def cmd_transform(args):
    dens = _load_density(args)
    cov = CovariancePair.from_density(dens)
    if args.density_grid:
        out = spectral_density(cov, _grid(args.density_grid), args.epsilon)
        rows = [(float(x), float(y)) for x, y in out]
        _emit(args, ["x", "density"], rows, {"rows": rows})
        return
    if args.zeta is None:
        raise ValidationError("give --zeta or --density-grid")
    zeta = _parse_complex(args.zeta)
    g = complex(cauchy_scalar(cov, zeta))
    rows = [(zeta.real, zeta.imag, g.real, g.imag)]
    _emit(args, ["zeta_re", "zeta_im", "G_re", "G_im"], rows,
          {"zeta": _cplx(zeta), "G": _cplx(g), "rows": rows})


def cmd_simulate(args):
    dens = _load_density(args)
    if args.kind == "moments":
        emp = mean_trace_moments(dens, args.N, args.powers, args.trials, args.seed)
        cov = CovariancePair.from_density(dens)
        rows = []
        for n in range(1, args.powers + 1):
            exact = moment(cov, StarWord.from_symbols(["*", "1"] * n, dens.m)).trace().real
            rows.append((n, float(emp[n - 1]), float(exact)))
        _emit(args, ["n", "empirical", "exact"], rows, {"rows": rows})
    elif args.kind == "norms":
        res = spectral_radius_estimate(dens, args.N, args.powers, args.trials, args.seed)
        rows = [(n, r, e) for n, r, e in res]
        _emit(args, ["n", "norm_root", "max_abs_eig"], rows, {"rows": rows})
    elif args.kind == "singular":
        sv = np.mean(run_trials(lambda s: singular_values(sample(dens, args.N, s).data),
                                args.trials, args.seed), axis=0)
        rows = [((k + 0.5) / args.N, float(v)) for k, v in enumerate(sv)]
        _emit(args, ["t", "singular_value"], rows, {"rows": rows})
    else:
        eig = np.concatenate(run_trials(lambda s: np.linalg.eigvals(sample(dens, args.N, s).data),
                                        args.trials, args.seed))
        counts, edges = np.histogram(np.abs(eig), bins=args.bins)
        rows = [(float(edges[k]), float(edges[k + 1]), int(counts[k])) for k in range(args.bins)]
        _emit(args, ["abs_lo", "abs_hi", "count"], rows, {"rows": rows})


def _criterion_config(args, dens) -> CriterionConfig:
    m = dens.m
    ic = grid_index(args.c, m, "c")
    r = args.r if args.r is not None else float(dens.H[ic, ic]) if 0 <= ic < m else 0.0
    R = args.R if args.R is not None else strip_sup(dens, args.a)
    return CriterionConfig(dens, a=args.a, c=args.c, d=args.d, r=r, R=R if R > 0 else 1.0,
                           theta=args.theta, gamma=args.gamma, n_max=args.n_max,
                           N=args.N, trials=args.trials, seed=args.seed)


def cmd_criterion(args):
    dens = _load_density(args)
    cfg = _criterion_config(args, dens)
    try:
        rep = criterion_report(cfg)
    except CriterionRefused as exc:
        _emit(args, ["condition", "holds"],
              [(k, v) for k, v in exc.report.as_dict().items() if k != "details"],
              {"verdict": "REFUSED", "conditions": exc.report.as_dict()})
        raise
    keys = ["n", "mu", "s_sq", "lower_bound_sq", "ratio", "log_ratio", "step_slope"]
    rows = [tuple(row[k] for k in keys) for row in rep.rows]
    payload = {
        "verdict": rep.verdict, "note": rep.note, "K": rep.K, "gamma": rep.gamma,
        "s_hat": rep.s_hat, "alpha_hat": rep.alpha_hat, "slope": rep.slope, "r2": rep.r2,
        "decreasing": rep.decreasing, "conditions": rep.conditions.as_dict(), "rows": rep.rows,
    }
    _emit(args, keys, rows, payload)


def cmd_quasinil(args):
    dens = _load_density(args)
    eps = args.eps or [2.0**-k for k in range(1, 7)]
    delta = args.delta if args.delta is not None else max(eps)
    cert = quasinilpotence_certificate(dens, delta, eps)
    payload = {"verdict": cert.verdict, "note": cert.note, "H_delta_sup": cert.H_delta_sup,
               "min_bound": cert.min_bound}
    if args.N:
        payload["mc_max_abs_eig"] = float(np.mean(run_trials(
            lambda s: max_abs_eigenvalue(sample(dens, args.N, s)), args.trials, args.seed)))
    rows = [(e, a, b) for e, a, b in cert.rows]
    payload["rows"] = rows
    _emit(args, ["eps", "crude_bound", "sharp_bound"], rows, payload)


def _matrix_json(M) -> list:
    M = np.asarray(M)
    if np.iscomplexobj(M) and np.any(np.abs(M.imag) > 0):
        return [[_cplx(v) for v in row] for row in M]
    return np.real(M).tolist()


def cmd_algebra(args):
    ex = args.example
    report: dict = {"example": ex}
    if ex == "3x3":
        A, P, B = example_3x3()
        W = invariance_witness(A, P, args.tol)
        report.update(dimension=star_algebra_dimension(A, None),
                      commutant_dimension=len(commutant_basis(A, args.tol)),
                      B_commutes=bool(np.allclose(A @ B, B @ A)),
                      witness=None if W is None else _matrix_json(W))
    elif ex == "6x6":
        search = search_generating_a(example_6x6, args.a)
        S, J = jordan_similarity_6x6(search.a)
        A = example_6x6(search.a)
        P = orthogonal_range_projection(S[:, :3])
        X = S @ block_swap() @ np.linalg.inv(S)
        moved = float(np.linalg.norm((np.eye(6) - P) @ X @ P, 2))
        report.update(a=search.a, halvings=search.halvings, dimension=search.dimension,
                      target=search.target,
                      star_commutant_dimension=len(commutant_basis(A, args.tol, star=True)),
                      jordan_ok=bool(np.allclose(A @ S, S @ J)),
                      witness=_matrix_json(X), witness_moves_range=moved)
    elif ex == "10x10":
        search = search_generating_a(lambda a: example_10x10(a) @ example_10x10(a), args.a)
        report.update(a=search.a, halvings=search.halvings, dimension_F2=search.dimension,
                      target=search.target,
                      dimension_F=star_algebra_dimension(example_10x10(search.a)))
    else:
        if args.b is None:
            raise ValidationError("--example irreduc needs --b")
        b = [float(v) for v in args.b.split(",")]
        p = args.p
        n = len(b) + p
        search = search_generating_a(lambda a: build_irreduc_matrix(n, p, b, [a] * (p - 1)), args.a)
        report.update(n=n, p=p, a=search.a, halvings=search.halvings,
                      dimension=search.dimension, target=search.target)
    rows = [(k, v) for k, v in report.items() if not isinstance(v, (list, dict))]
    _emit(args, ["key", "value"], rows, report)


# ----------------------------------------------------------------- parser

def _add_density(p):
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--m", type=int, default=8, help="grid size (default 8)")
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="preset parameter")
    p.add_argument("--density", metavar="FILE", help="density JSON file")


def _add_output(p, fmt="csv"):
    p.add_argument("--out", default="-", help="output path (default stdout)")
    p.add_argument("--format", choices=["csv", "json"], default=fmt)


def _add_mc(p, N=1024, trials=4):
    p.add_argument("--N", type=int, default=N)
    p.add_argument("--trials", type=int, default=trials)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="freecirc", description="B-circular operators over step functions")
    ap.add_argument("--version", action="version", version=f"freecirc {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("moments", help="B-valued moments of a star word")
    _add_density(p)
    p.add_argument("--word", help='word such as "b0 z b1 z* b2"')
    p.add_argument("--coef", action="append", metavar="NAME=V1,V2,..", help="coefficient values")
    p.add_argument("--n-max", type=int, default=6, help="without --word: tau((z*z)^n), n <= n-max")
    _add_output(p)
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("transform", help="Cauchy transform and spectral density of z*z")
    _add_density(p)
    p.add_argument("--zeta", help="point such as 5+0i")
    p.add_argument("--density-grid", metavar="START:STOP:NUM")
    p.add_argument("--epsilon", type=float, default=1e-3)
    _add_output(p)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("simulate", help="Gaussian random matrix model")
    _add_density(p)
    _add_mc(p, trials=20)
    p.add_argument("--powers", type=int, default=3)
    p.add_argument("--kind", choices=["moments", "norms", "singular", "eigs"], default="moments")
    p.add_argument("--bins", type=int, default=32)
    _add_output(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("criterion", help="hyperinvariant-subspace criterion table")
    _add_density(p)
    for name in ("c", "d", "a", "theta"):
        p.add_argument(f"--{name}", type=float, required=True)
    p.add_argument("--r", type=float)
    p.add_argument("--R", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--n-max", type=int, default=8)
    _add_mc(p)
    _add_output(p, "json")
    p.set_defaults(func=cmd_criterion)

    p = sub.add_parser("quasinil", help="band-restriction quasinilpotence bounds")
    _add_density(p)
    p.add_argument("--delta", type=float)
    p.add_argument("--eps", type=float, nargs="+")
    p.add_argument("--N", type=int, default=0, help="also estimate max|eig| at this N")
    p.add_argument("--trials", type=int, default=2)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    _add_output(p, "json")
    p.set_defaults(func=cmd_quasinil)

    p = sub.add_parser("algebra", help="finite *-algebra generation and invariance")
    p.add_argument("--example", choices=["3x3", "6x6", "10x10", "irreduc"], default="6x6")
    p.add_argument("--a", type=float, default=0.01)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--b", help="comma-separated b_k for --example irreduc")
    _add_output(p, "json")
    p.set_defaults(func=cmd_algebra)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"freecirc: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"freecirc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
