"""Command line interface: prove, continue, verify and export.

Exit codes are 0 on success, 2 when a proof fails, 3 when verification
rejects a certificate and 4 on bad input.  Errors are reported as one JSON
object on standard error.
"""

import argparse
import csv
import json
import logging
import math
import sys
import time

import numpy as np

from .chebbvp import (BvpData, CircleChart, LogDomain, OrbitPoint, bvp_bounds, eval_orbit,
                      reconstruct_u)
from .continuation import (DEFAULT_ETA_MARGIN, DEFAULT_RHO, ConfigError, ContinuationConfig,
                           LedgerMismatch, StepFailed, StepUnderflow, bootstrap,
                           continue_range, continue_range_split, step)
from .interval_core import IntervalError
from .manifold import (ManifoldData, NewtonDiverged, NoValidGamma, NoValidRadius, eval_chart,
                       lam_float, manifold_bounds, radii_coefficients, _poly_eval)
from .records import (CertificateFormatError, dumps, load_records, make_record, read_record)

EXIT_OK = 0
EXIT_PROOF = 2
EXIT_VERIFY = 3
EXIT_INPUT = 4

log = logging.getLogger("bridgeorbit")


class BadInput(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise BadInput(message)


# -- verification -------------------------------------------------------------------

def _radii_negative(Y, Zs, r):
    return all(float(_poly_eval(cs, r).hi) < 0 for cs in radii_coefficients(Y, Zs))


def _finite(*arrays):
    return all(np.all(np.isfinite(np.asarray(a))) for a in arrays)


def verify_pair(mc, bc, deep=True):
    """Check one (manifold, orbit) certificate pair; returns a list of failures.

    The quick checks use the stored bounds only.  With ``deep`` the bounds are
    recomputed in interval arithmetic from the stored coefficients (no Newton
    step is repeated) and the radii polynomials are checked with the new
    values.
    """
    bad = []
    if not (0.0 < mc.beta0 < mc.beta1 < 2.0):
        bad.append("parameter range must satisfy 0 < beta0 < beta1 < 2")
    if not (mc.gamma > 0 and mc.r_m > 0 and bc.r > 0):
        bad.append("radii and rescaling must be positive")
    if not (0.0 < bc.rho < mc.nu_tilde and bc.nu > 1.0):
        bad.append("need 0 < rho < nu_tilde and nu > 1")
    if not _finite(mc.a0.real, mc.a0.imag, mc.a1.real, mc.a1.imag, bc.x0.x, bc.x1.x,
                   mc.Y, mc.Z0, mc.Z1, mc.Z2, bc.Y, bc.Z0, bc.Z1, bc.Z2, bc.Z3,
                   [bc.x0.L, bc.x1.L, bc.x0.psi, bc.x1.psi]):
        bad.append("non-finite payload entries")
    if bad:
        return bad
    if not mc.recheck():
        bad.append("manifold radii polynomials are not negative at r_m (stored bounds)")
    if not bc.recheck():
        bad.append("orbit radii polynomials are not negative at r (stored bounds)")
    if bad or not deep:
        return bad
    try:
        md = ManifoldData(N=mc.N, beta0=mc.beta0, beta1=mc.beta1, a0=mc.a0, a1=mc.a1,
                          gamma=mc.gamma, nu_tilde=mc.nu_tilde)
        Y, Z0, Z1, Z2 = manifold_bounds(md)
        if not _radii_negative(Y, (Z0, Z1, Z2), mc.r_m):
            bad.append("manifold radii polynomials fail at r_m with recomputed bounds")
        bd = BvpData(bc.beta0, bc.beta1, bc.x0, bc.x1, CircleChart(mc.a0, bc.rho),
                     CircleChart(mc.a1, bc.rho), mc.r_m, bc.nu, mc.nu_tilde)
        Yb, *Zb = bvp_bounds(bd)
        if not _radii_negative(Yb, tuple(Zb), bc.r):
            bad.append("orbit radii polynomials fail at r with recomputed bounds")
    except (IntervalError, LogDomain, ValueError, np.linalg.LinAlgError) as exc:
        bad.append(f"bound recomputation failed: {exc}")
    return bad


def verify_file(path, deep=True):
    """Report dict for a certificate file (single record or JSON-lines ledger)."""
    records = load_records(path)
    report = {"path": str(path), "records": [], "ok": True}
    prev = None
    for k, body in enumerate(records):
        entry = {"index": k}
        try:
            mc, bc = read_record(body)
        except CertificateFormatError as exc:
            entry.update(ok=False, failures=[str(exc)])
            report["records"].append(entry)
            report["ok"] = False
            continue
        failures = verify_pair(mc, bc, deep=deep)
        if prev is not None and prev != mc.beta0:
            failures.append("interval does not abut the previous record")
        prev = mc.beta1
        entry.update(beta0=mc.beta0, beta1=mc.beta1, r=bc.r, r_m=mc.r_m, L_bar=bc.L_bar,
                     ok=not failures, failures=failures)
        report["records"].append(entry)
        report["ok"] = report["ok"] and not failures
    if report["records"] and all(e.get("ok") for e in report["records"]):
        report["covered"] = [report["records"][0]["beta0"], report["records"][-1]["beta1"]]
    return report


# -- exports -------------------------------------------------------------------------

def orbit_at(bc, s=0.0):
    """Float approximation x_s = x0 + s (x1 - x0) at beta_s."""
    if not 0.0 <= s <= 1.0:
        raise BadInput("s must lie in [0, 1]")
    x = bc.x0.x + s * (bc.x1.x - bc.x0.x)
    return (bc.beta0 + s * (bc.beta1 - bc.beta0),
            OrbitPoint(bc.x0.L + s * (bc.x1.L - bc.x0.L), bc.x0.psi + s * (bc.x1.psi - bc.x0.psi), x))


def chart_at(mc, rho, s=0.0):
    a = mc.a0 + s * (mc.a1 - mc.a0)
    return CircleChart(a, rho)


def export_orbit(mc, bc, samples=201, s=0.0):
    """Rows (t, tau, v1..v4, u); tau = L (t + 1) is time from the symmetric point."""
    _, x = orbit_at(bc, s)
    t = np.linspace(-1.0, 1.0, samples)
    v = eval_orbit(x, t)
    u = reconstruct_u(v[0])
    header = ["t", "tau", "v1", "v2", "v3", "v4", "u"]
    rows = np.column_stack([t, x.L * (t + 1.0), v.T, u])
    return header, rows


def export_decay(mc, bc, samples=None, s=0.0):
    """Rows (k, log10|x_k| per component); zeros are floored at the smallest subnormal."""
    _, x = orbit_at(bc, s)
    n = x.m if samples is None else min(int(samples), x.m)
    mag = np.maximum(np.abs(x.x[:, :n]), 5e-324)
    header = ["k"] + [f"log10_abs_x{i + 1}" for i in range(4)]
    return header, np.column_stack([np.arange(n), np.log10(mag).T])


def export_manifold(mc, bc, samples=64, s=0.0, n_radial=11):
    """Rows (sigma, psi, P1..P4) on the real chart sigma e^{i psi}, 0 <= sigma <= rho."""
    chart = chart_at(mc, bc.rho, s)
    sig = np.linspace(0.0, bc.rho, n_radial)
    psi = np.linspace(0.0, 2.0 * math.pi, samples, endpoint=False)
    S, Q = np.meshgrid(sig, psi, indexing="ij")
    th = (S * np.exp(1j * Q)).ravel()
    P = eval_chart(chart.a, th, np.conj(th)).real
    header = ["sigma", "psi", "P1", "P2", "P3", "P4"]
    return header, np.column_stack([S.ravel(), Q.ravel(), P])


def export_u_profile(mc, bc, samples=401, s=0.0, tail=None):
    """Rows (tau, u) for the full symmetric orbit, extended along the manifold.

    Past the chart point the orbit is P(rho e^{i psi} e^{lambda (tau - 2L)}),
    the conjugacy of the chart with the linear flow.
    """
    beta, x = orbit_at(bc, s)
    chart = chart_at(mc, bc.rho, s)
    T = 2.0 * x.L
    tail = T if tail is None else float(tail)
    tau = np.linspace(0.0, T + tail, samples)
    u = np.empty_like(tau)
    inside = tau <= T
    u[inside] = reconstruct_u(eval_orbit(x, tau[inside] / x.L - 1.0)[0])
    lam = lam_float(beta)
    th = bc.rho * np.exp(1j * x.psi) * np.exp(lam * (tau[~inside] - T))
    u[~inside] = reconstruct_u(eval_chart(chart.a, th, np.conj(th)).real[:, 0])
    full_tau = np.concatenate([-tau[:0:-1], tau])
    full_u = np.concatenate([u[:0:-1], u])
    return ["tau", "u"], np.column_stack([full_tau, full_u])


EXPORTS = {"orbit": export_orbit, "decay": export_decay, "manifold": export_manifold,
           "u-profile": export_u_profile}


def write_csv(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) for v in row])


# -- commands --------------------------------------------------------------------------

def _config(args, beta0, beta1):
    kw = dict(N=args.N, nu=args.nu, rho=args.rho, eta=args.eta, eta_margin=args.eta_margin)
    if args.m is not None:
        kw.update(m_low=args.m, m_high=args.m)
    if getattr(args, "dbeta", None) is not None:
        kw["dbeta"] = args.dbeta
    if getattr(args, "min_dbeta", None) is not None:
        kw["min_dbeta"] = args.min_dbeta
    return ContinuationConfig(beta0, beta1, **kw)


def cmd_prove(args):
    cfg = _config(args, args.beta0, args.beta1)
    t0 = time.perf_counter()
    st = bootstrap(cfg)
    try:
        mc, bc = step(cfg, st, cfg.beta_end, {})
    except StepFailed as exc:
        return _fail(EXIT_PROOF, "ProofFailed", str(exc), stage=exc.stage,
                     component=None if exc.component is None else exc.component + 1)
    body = make_record(mc, bc, config=cfg.echo(), meta={"kind": "single"})
    with open(args.out, "w", encoding="ascii") as fh:
        fh.write(dumps(body) + "\n")
    out = {"status": "proved", "beta0": mc.beta0, "beta1": mc.beta1, "r": bc.r, "r_m": mc.r_m,
           "gamma": mc.gamma, "L_bar": bc.L_bar, "L0": bc.x0.L, "L1": bc.x1.L,
           "elapsed_s": round(time.perf_counter() - t0, 3), "certificate": args.out}
    print(json.dumps(out))
    return EXIT_OK


def cmd_continue(args):
    cfg = _config(args, args.beta0, args.beta1)
    t0 = time.perf_counter()
    try:
        if args.jobs and args.jobs > 1:
            if args.resume:
                raise BadInput("--resume cannot be combined with --jobs")
            ledger = continue_range_split(cfg, args.jobs, args.out)
        else:
            ledger = continue_range(cfg, resume=args.resume, path=args.out)
    except StepUnderflow as exc:
        return _fail(EXIT_PROOF, "StepUnderflow", str(exc), beta=exc.beta, dbeta=exc.dbeta,
                     stage=exc.stage, component=None if exc.component is None else exc.component + 1)
    out = {"status": "proved", "steps": len(ledger), "covered": list(ledger.covered),
           "abutting": ledger.abutting(), "elapsed_s": round(time.perf_counter() - t0, 3),
           "ledger": args.out}
    print(json.dumps(out))
    return EXIT_OK


def cmd_verify(args):
    try:
        report = verify_file(args.path, deep=not args.quick)
    except CertificateFormatError as exc:
        return _fail(EXIT_VERIFY, "CertificateFormatError", str(exc))
    print(json.dumps(report))
    return EXIT_OK if report["ok"] else EXIT_VERIFY


def cmd_export(args):
    records = load_records(args.path)
    if not 0 <= args.record < len(records):
        raise BadInput(f"record index {args.record} out of range (file has {len(records)})")
    mc, bc = read_record(records[args.record])
    kw = {"s": args.s}
    if args.samples is not None:
        kw["samples"] = args.samples
    header, rows = EXPORTS[args.what](mc, bc, **kw)
    if args.out in (None, "-"):
        write_csv(sys.stdout, header, rows)
    else:
        with open(args.out, "w", encoding="ascii", newline="") as fh:
            write_csv(fh, header, rows)
    return EXIT_OK


def _fail(code, kind, message, **extra):
    err = {"error": kind, "message": message, "exit_code": code}
    err.update({k: v for k, v in extra.items() if v is not None})
    print(json.dumps(err), file=sys.stderr)
    return code


def _positive_int(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser():
    p = _Parser(prog="bridgeorbit", description="Computer-assisted proofs of symmetric homoclinic orbits "
                "of u'''' + beta u'' + exp(u) - 1 = 0.")
    p.add_argument("-v", "--verbose", action="store_true", help="progress log on standard error")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(q):
        q.add_argument("--N", type=_positive_int, default=30, help="Taylor order of the chart")
        q.add_argument("--m", type=_positive_int, default=None,
                       help="Chebyshev modes (default 350 for beta <= 1.8, else 400)")
        q.add_argument("--nu", type=float, default=1.05, help="Chebyshev weight")
        q.add_argument("--rho", type=float, default=DEFAULT_RHO, help="chart radius used at t = 1")
        q.add_argument("--eta", type=float, default=0.5, help="Z0 + Z1 cap for the rescaling search")
        q.add_argument("--eta-margin", type=float, default=DEFAULT_ETA_MARGIN,
                       help="slack above the unreducible part of Z1 when it exceeds eta")

    q = sub.add_parser("prove", help="prove one parameter interval")
    q.add_argument("--beta0", type=float, required=True)
    q.add_argument("--beta1", type=float, required=True)
    q.add_argument("--out", default="certificate.json")
    common(q)
    q.set_defaults(func=cmd_prove)

    q = sub.add_parser("continue", help="prove a parameter range by continuation")
    q.add_argument("--beta0", "--from", dest="beta0", type=float, required=True)
    q.add_argument("--beta1", "--to", dest="beta1", type=float, required=True)
    q.add_argument("--dbeta", type=float, default=None, help="initial and maximal step")
    q.add_argument("--min-dbeta", type=float, default=None, help="smallest step before giving up")
    q.add_argument("--out", default="ledger.jsonl")
    q.add_argument("--resume", default=None, help="ledger to continue from")
    q.add_argument("--jobs", type=_positive_int, default=1, help="pre-split the range into chunks")
    common(q)
    q.set_defaults(func=cmd_continue)

    q = sub.add_parser("verify", help="re-check a certificate or ledger")
    q.add_argument("path")
    q.add_argument("--quick", action="store_true", help="stored bounds and integrity only")
    q.set_defaults(func=cmd_verify)

    q = sub.add_parser("export", help="write plot data of a certified solution as CSV")
    q.add_argument("what", choices=sorted(EXPORTS))
    q.add_argument("path")
    q.add_argument("--record", type=int, default=0, help="record index in a ledger")
    q.add_argument("--s", type=float, default=0.0, help="position in the parameter interval")
    q.add_argument("--samples", type=_positive_int, default=None)
    q.add_argument("--out", default=None, help="CSV file (default standard output)")
    q.set_defaults(func=cmd_export)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise BadInput("a subcommand is required: prove, continue, verify or export")
    except BadInput as exc:
        return _fail(EXIT_INPUT, "BadInput", str(exc))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(message)s")
    try:
        return args.func(args)
    except (BadInput, ConfigError, LedgerMismatch) as exc:
        return _fail(EXIT_INPUT, type(exc).__name__, str(exc))
    except CertificateFormatError as exc:
        return _fail(EXIT_VERIFY if args.command == "verify" else EXIT_INPUT, type(exc).__name__, str(exc))
    except OSError as exc:
        return _fail(EXIT_INPUT, type(exc).__name__, str(exc))
    except (NoValidRadius, NoValidGamma, NewtonDiverged, IntervalError, LogDomain) as exc:
        return _fail(EXIT_PROOF, type(exc).__name__, str(exc))
