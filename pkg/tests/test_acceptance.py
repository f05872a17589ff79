"""Acceptance suite: one printed PASS/FAIL line per criterion.

Criteria 1 and 3 run the command line at full size and take several
minutes.  The random continuation window of criterion 3 is drawn from a
fresh seed unless BRIDGEORBIT_WINDOW_SEED is set; the seed is printed.
"""

import contextlib
import io
import json
import math
import os
import secrets
import time
from fractions import Fraction

import mpmath
import numpy as np
import pytest

import envelopes
import oracles
from conftest import record_acceptance
from bridgeorbit.chebbvp import CircleChart, diagnostics, eval_orbit
from bridgeorbit.cli_io import EXIT_OK, EXIT_VERIFY, main, verify_pair
from bridgeorbit.continuation import ContinuationConfig, bootstrap
from bridgeorbit.interval_core import CInterval, Interval
from bridgeorbit.manifold import derivative_error_bound, eigen_data
from bridgeorbit.records import load_records, read_record
from bridgeorbit.seq_space import (cauchy2, conv1, norm_cheb, norm_taylor, opnorm_block_cheb,
                                   opnorm_block_taylor, qk_all, triangle)

L_REF = {0.5: 3.1312, 1.2: 1.7671, 1.9: 2.6170}


def run_cli(argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def proof(tmp_path_factory):
    path = tmp_path_factory.mktemp("accept") / "proof.json"
    t0 = time.perf_counter()
    code, out, err = run_cli(["prove", "--beta0", "1.2", "--beta1", "1.20025", "--N", "30",
                              "--m", "350", "--out", str(path)])
    elapsed = time.perf_counter() - t0
    pair = read_record(load_records(path)[0]) if code == EXIT_OK else None
    return dict(code=code, out=out, err=err, elapsed=elapsed, path=path, pair=pair)


def _continue(path, beta0, beta1):
    t0 = time.perf_counter()
    code, out, err = run_cli(["continue", "--from", repr(beta0), "--to", repr(beta1), "--out", str(path)])
    return dict(code=code, out=out, err=err, elapsed=time.perf_counter() - t0, path=path,
                beta0=beta0, beta1=beta1)


@pytest.fixture(scope="module")
def ledgers(tmp_path_factory):
    d = tmp_path_factory.mktemp("ledgers")
    seed = int(os.environ.get("BRIDGEORBIT_WINDOW_SEED", secrets.randbits(32)))
    rng = np.random.default_rng(seed)
    lo = round(float(rng.uniform(0.6, 1.69)), 4)
    hi = round(lo + 0.01, 4)
    print(f"random window seed={seed} window=[{lo}, {hi}]")
    return [_continue(d / "fixed.jsonl", 1.2, 1.21),
            dict(_continue(d / "window.jsonl", lo, hi), seed=seed)]


# -- 1 ------------------------------------------------------------------------------------

def test_criterion_1_single_interval_proof(proof):
    ok = proof["code"] == EXIT_OK
    detail = f"exit {proof['code']} {proof['err'].strip()}"
    if ok:
        mc, bc = proof["pair"]
        dev = abs(bc.L_bar - L_REF[1.2])
        ok = bc.r > 0 and dev <= 5e-3 and proof["elapsed"] <= 120.0
        detail = (f"r={bc.r:.3e} r_m={mc.r_m:.3e} L_bar={bc.L_bar:.5f} |dL|={dev:.2e} "
                  f"time={proof['elapsed']:.1f}s")
    assert record_acceptance(1, ok, detail)


# -- 2 ------------------------------------------------------------------------------------

def test_criterion_2_endpoint_values():
    parts, ok = [], True
    for beta in (0.5, 1.9):
        st = bootstrap(ContinuationConfig(beta, beta + 1e-3))
        dev = abs(st.x.L - L_REF[beta])
        ok = ok and dev <= 5e-3
        parts.append(f"beta={beta} m={st.x.m} L={st.x.L:.5f} |dL|={dev:.2e}")
    assert record_acceptance(2, ok, "; ".join(parts))


# -- 3 ------------------------------------------------------------------------------------

def _ledger_ok(run):
    if run["code"] != EXIT_OK:
        return False, f"[{run['beta0']}, {run['beta1']}] exit {run['code']} {run['err'].strip()}"
    pairs = [read_record(b) for b in load_records(run["path"])]
    abut = all(p[0].beta1 == q[0].beta0 for p, q in zip(pairs[:-1], pairs[1:]))
    exact = pairs[0][0].beta0 == run["beta0"] and pairs[-1][0].beta1 == run["beta1"]
    ok = abut and exact and len(pairs) <= 60
    return ok, (f"[{run['beta0']}, {run['beta1']}] steps={len(pairs)} abutting={abut} "
                f"exact={exact} time={run['elapsed']:.0f}s")


def test_criterion_3_mini_continuation(ledgers):
    fixed, window = ledgers
    ok1, d1 = _ledger_ok(fixed)
    ok2, d2 = _ledger_ok(window)
    assert record_acceptance(3, ok1 and ok2, f"{d1}; window seed={window['seed']} {d2}")


# -- 4 ------------------------------------------------------------------------------------

def _endpoints(rng, n, lo_exp, hi_exp, signed=True):
    def draw():
        v = 10.0 ** rng.uniform(lo_exp, hi_exp, n)
        return v * rng.choice([-1.0, 1.0], n) if signed else v
    a, b = draw(), draw()
    return np.minimum(a, b), np.maximum(a, b)


def _inside(rng, lo, hi):
    p = lo + rng.uniform(0, 1, lo.size) * (hi - lo)
    return np.clip(p, lo, hi)


def _check_exact(z, op, px, py):
    for k in range(px.size):
        v = oracles.exact_binary(op, px[k], py[k])
        if not Fraction(float(z.lo[k])) <= v <= Fraction(float(z.hi[k])):
            return False
    return True


def _check_mp(z, op, px):
    f = {"sqrt": mpmath.sqrt, "exp": mpmath.exp, "log": mpmath.log, "sin": mpmath.sin,
         "cos": mpmath.cos, "sqr": lambda v: v * v}[op]
    for k in range(px.size):
        v = f(mpmath.mpf(float(px[k])))
        if not mpmath.mpf(float(z.lo[k])) <= v <= mpmath.mpf(float(z.hi[k])):
            return False
    return True


def test_criterion_4_interval_core_properties():
    rng = np.random.default_rng(4)
    n = 100_000
    results = {}
    xl, xh = _endpoints(rng, n, -8, 8)
    yl, yh = _endpoints(rng, n, -8, 8)
    X, Y = Interval(xl, xh), Interval(yl, yh)
    px, py = _inside(rng, xl, xh), _inside(rng, yl, yh)
    results["add"] = _check_exact(X + Y, "add", px, py)
    results["sub"] = _check_exact(X - Y, "sub", px, py)
    results["mul"] = _check_exact(X * Y, "mul", px, py)
    dl, dh = _endpoints(rng, n, -8, 8, signed=False)
    sign = rng.choice([-1.0, 1.0], n)
    dl, dh = np.where(sign > 0, dl, -dh), np.where(sign > 0, dh, -dl)
    results["div"] = _check_exact(X / Interval(dl, dh), "div", px, _inside(rng, dl, dh))
    results["sqr"] = _check_mp(X.sqr(), "sqr", px)
    pl, ph = _endpoints(rng, n, -300, 300, signed=False)
    pp = _inside(rng, pl, ph)
    P = Interval(pl, ph)
    results["sqrt"] = _check_mp(P.sqrt(), "sqrt", pp)
    results["log"] = _check_mp(P.log(), "log", pp)
    el = rng.uniform(-700, 700, n)
    eh = np.minimum(el + rng.uniform(0, 5, n), 700)
    pe = _inside(rng, el, eh)
    results["exp"] = _check_mp(Interval(el, eh).exp(), "exp", pe)
    tl = rng.uniform(-50, 50, n)
    th = tl + rng.uniform(0, 4, n) * rng.uniform(0, 1, n) ** 2
    pt = _inside(rng, tl, th)
    T = Interval(tl, th)
    results["sin"] = _check_mp(T.sin(), "sin", pt)
    results["cos"] = _check_mp(T.cos(), "cos", pt)

    m = 10_000
    ol, oh = _endpoints(rng, m, -3, 3)
    s, t = rng.uniform(0, 0.5, m), rng.uniform(0, 0.5, m)
    il, ih = ol + s * (oh - ol), oh - t * (oh - ol)
    il, ih = np.clip(np.minimum(il, ih), ol, oh), np.clip(np.maximum(il, ih), ol, oh)
    outer, inner = Interval(ol, oh), Interval(il, ih)
    Yb = Interval(*_endpoints(rng, m, -3, 3))
    pos_o = Interval(np.abs(ol) + 1e-3, np.abs(ol) + 1e-3 + (oh - ol))
    pos_i = Interval(pos_o.lo + s * (oh - ol), pos_o.hi - t * (oh - ol))
    mono = {
        "add": (inner + Yb).subset(outer + Yb), "sub": (inner - Yb).subset(outer - Yb),
        "mul": (inner * Yb).subset(outer * Yb), "div": (Yb / pos_i).subset(Yb / pos_o),
        "sqr": inner.sqr().subset(outer.sqr()), "abs": abs(inner).subset(abs(outer)),
        "sqrt": pos_i.sqrt().subset(pos_o.sqrt()), "log": pos_i.log().subset(pos_o.log()),
        "exp": inner.exp().subset(outer.exp()), "sin": inner.sin().subset(outer.sin()),
        "cos": inner.cos().subset(outer.cos()),
    }
    mono_ok = {k: bool(np.all(v)) for k, v in mono.items()}
    ok = all(results.values()) and all(mono_ok.values())
    failed = [k for k, v in results.items() if not v] + [f"mono:{k}" for k, v in mono_ok.items() if not v]
    detail = (f"{n} containment samples x {len(results)} ops, {m} monotonicity samples x {len(mono)} ops"
              + (f"; failed {failed}" if failed else ""))
    assert record_acceptance(4, ok, detail)


# -- 5 ------------------------------------------------------------------------------------

def test_criterion_5_sequence_spaces():
    rng = np.random.default_rng(5)
    bad = []
    for _ in range(1000):
        nu = rng.uniform(1.0, 1.3)
        a = rng.standard_normal(rng.integers(1, 12))
        b = rng.standard_normal(rng.integers(1, 12))
        lhs = norm_cheb(conv1(Interval(a), Interval(b)), nu)
        rhs = norm_cheb(Interval(a), nu) * norm_cheb(Interval(b), nu)
        if float(lhs.lo) > float(rhs.hi):
            bad.append("cheb")
        u = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        v = rng.standard_normal((4, 4))
        w = cauchy2(u, v)
        lhs_t = oracles.taylor_norm(w, nu)
        if lhs_t > oracles.taylor_norm(u, nu) * oracles.taylor_norm(v, nu) * (1 + 1e-13):
            bad.append("taylor")
        if float(norm_taylor(Interval(np.abs(w)), nu).lo) > lhs_t * (1 + 1e-13):
            bad.append("taylor-norm")
    opdev = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 15))
        nu = rng.uniform(1.0, 1.2)
        G = rng.standard_normal((n, n))
        ref = oracles.brute_opnorm(G, oracles.cheb_weights(n, nu))
        opdev = max(opdev, abs(opnorm_block_cheb(G, nu) - ref) / ref)
        N = int(rng.integers(2, 6))
        H = rng.standard_normal((triangle(N).size,) * 2)
        ref = oracles.brute_opnorm(H, oracles.taylor_weights(N, nu))
        opdev = max(opdev, abs(opnorm_block_taylor(H, nu, N) - ref) / ref)
    if opdev > 1e-12:
        bad.append("opnorm")
    nu, mq, kmax, length = 1.05, 8, 12, 40
    a = rng.standard_normal(10) * 0.6 ** np.arange(10)
    Q, Qhat = qk_all(a, nu, mq, k_max=kmax)
    w = np.array(oracles.cheb_weights(length, nu))
    worst = 0.0
    for trial in range(1000):
        if trial % 2 == 0:
            j = int(rng.integers(0, length))
            v = np.zeros(length)
            v[j] = 1.0 / w[j]
            tail_only = j >= mq
        else:
            v = rng.standard_normal(length) * rng.uniform(0, 1, length) ** 4
            tail_only = trial % 4 == 1
            if tail_only:
                v[:mq] = 0.0
            v /= float(np.sum(np.abs(v) * w))
        c = np.abs(oracles.cheb_conv_fast(a, v)[:kmax + 1])
        bound = Qhat if tail_only else Q
        worst = max(worst, float(np.max(c / (bound * (1 + 1e-12)))))
    if worst > 1.0:
        bad.append("qk")
    detail = (f"1000 pairs per convolution, opnorm rel dev {opdev:.1e}, "
              f"max |(a*v)_k|/Q_k {worst:.3f} over 1000 vectors" + (f"; failed {sorted(set(bad))}" if bad else ""))
    assert record_acceptance(5, not bad, detail)


# -- 6 ------------------------------------------------------------------------------------

def test_criterion_6_bounds_dominate_float_samples(proof):
    if proof["pair"] is None:
        assert record_acceptance(6, False, "no certificate from criterion 1")
    mc, bc = proof["pair"]
    my, mz = envelopes.manifold_envelope(mc, 20, 20, seed=6)
    by, bz = envelopes.bvp_envelope(mc, bc, 20, 20, seed=6)
    ok = max(my, mz, by, bz) <= 1.0
    detail = (f"max sample/envelope ratios: manifold Y {my:.3f} Z(r_m) {mz:.3f}; "
              f"orbit Y {by:.3f} Z(r) {bz:.3f} (20 s-points x 20 draws)")
    assert record_acceptance(6, ok, detail)


# -- 7 ------------------------------------------------------------------------------------

def _end_value(x):
    """Interval enclosure of v(1) = x_0 + 2 sum x_k."""
    X = Interval(x)
    w = np.full(x.shape[1], 2.0)
    w[0] = 1.0
    acc = X[:, 0] * 0.0
    for k in range(x.shape[1]):
        acc = acc + X[:, k] * w[k]
    return acc


def test_criterion_7_structural_checks(proof):
    if proof["pair"] is None:
        assert record_acceptance(7, False, "no certificate from criterion 1")
    mc, bc = proof["pair"]
    r = bc.r
    sym = max(max(abs(eval_orbit(x, -1.0)[1]), abs(eval_orbit(x, -1.0)[3])) for x in (bc.x0, bc.x1))
    gap, limit, ode = 0.0, float((2.0 * Interval(r) + Interval(bc.rho) * mc.r_m / mc.nu_tilde).hi), 0.0
    for x, a, beta in ((bc.x0, mc.a0, bc.beta0), (bc.x1, mc.a1, bc.beta1)):
        chart = CircleChart(a, bc.rho)
        diff = _end_value(x.x) - chart.enclose(Interval(x.psi))
        gap = max(gap, float(np.max(abs(diff).hi)))
        ode = max(ode, diagnostics(x, beta, chart, n_samples=64)["ode_residual"])
    rng = np.random.default_rng(7)
    eig_ok = True
    for beta in rng.uniform(0.01, 1.99, 50):
        ed = eigen_data(Interval(beta))
        lam, V = ed.lam, ed.V
        rows = [V[1] - lam * V[0], V[2] - lam * V[1], V[3] - lam * V[2],
                -V[0] - V[2] * Interval(beta) - lam * V[3]]
        eig_ok = eig_ok and all(bool(np.all(row.contains(0.0))) for row in rows)
    ok = sym <= r and gap <= limit and ode <= 1e-8 and eig_ok
    detail = (f"symmetry {sym:.2e} <= r={r:.2e}; |v(1)-P(psi)| {gap:.2e} <= {limit:.2e}; "
              f"ODE residual {ode:.2e}; eigen identity at 50 beta {'ok' if eig_ok else 'FAILED'}")
    assert record_acceptance(7, ok, detail)


# -- 8 ------------------------------------------------------------------------------------

def test_criterion_8_certificate_integrity(proof, ledgers, tmp_path):
    if proof["code"] != EXIT_OK:
        assert record_acceptance(8, False, "no certificate from criterion 1")
    code, out, _ = run_cli(["verify", str(proof["path"])])
    accepted = code == EXIT_OK
    n_records = 1
    for run in ledgers:
        if run["code"] != EXIT_OK:
            accepted = False
            continue
        code, _, _ = run_cli(["verify", "--quick", str(run["path"])])
        accepted = accepted and code == EXIT_OK
        bodies = load_records(run["path"])
        n_records += len(bodies)
        for k in sorted({0, len(bodies) // 2, len(bodies) - 1}):
            accepted = accepted and verify_pair(*read_record(bodies[k]), deep=True) == []
    raw = proof["path"].read_bytes()
    rng = np.random.default_rng(8)
    bad = tmp_path / "flipped.json"
    rejected = 0
    for bit in rng.choice(8 * len(raw), 100, replace=False):
        flipped = bytearray(raw)
        flipped[bit // 8] ^= 1 << (bit % 8)
        bad.write_bytes(bytes(flipped))
        code, _, _ = run_cli(["verify", str(bad)])
        rejected += code == EXIT_VERIFY
    ok = accepted and rejected == 100
    detail = (f"accepted {n_records} records (deep proof, quick ledgers plus deep samples): "
              f"{accepted}; rejected {rejected}/100 single-bit flips")
    assert record_acceptance(8, ok, detail)


# -- 9 ------------------------------------------------------------------------------------

def _test_functions(delta, nu):
    """(name, callable h(theta1, theta2)) with coefficient norm delta in the nu-weighted l1."""
    q = 0.5 / nu
    # sum_{alpha} q^{|alpha|} nu^{|alpha|} = 1 / (1 - 1/2)^2 = 4
    geo = lambda t1, t2: delta / 4.0 / ((1 - q * t1) * (1 - q * t2))
    out = [("geometric", geo)]
    for k in (1, 3, 10, 40):
        out.append((f"monomial{k}", lambda t1, t2, k=k: delta * (t1 / nu) ** k))
        out.append((f"mixed{k}", lambda t1, t2, k=k: delta * 0.5 * ((t1 / nu) ** k - (t2 / nu) ** (k + 1))))
    return out


def test_criterion_9_derivative_bound():
    delta, h = 1e-6, 1e-6
    psi = np.linspace(0.0, 2 * math.pi, 721)
    worst, ok = 0.0, True
    for nu in (1.0, 1.05):
        for rho in (0.25, 0.5, 0.9):
            bound = float(derivative_error_bound(delta, nu, rho).hi)
            for name, f in _test_functions(delta, nu):
                def on_circle(p):
                    th = rho * np.exp(1j * p)
                    return f(th, np.conj(th))
                d = np.abs((on_circle(psi + h) - on_circle(psi - h)) / (2 * h))
                worst = max(worst, float(np.max(d)) / bound)
                ok = ok and float(np.max(d)) <= bound
    detail = f"max FD derivative / bound = {worst:.3f} over rho in (0.25, 0.5, 0.9), nu in (1, 1.05)"
    assert record_acceptance(9, ok, detail)
