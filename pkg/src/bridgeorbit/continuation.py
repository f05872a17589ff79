"""Validated continuation of the symmetric homoclinic orbit in beta.

Each step proves the manifold chart and then the boundary value problem on
one parameter interval.  The right end of a certified interval becomes the
left end of the next one, so certificates abut exactly.  Records are
appended to a JSON-lines ledger after every step, which makes a killed run
resumable with an identical result.
"""

import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .chebbvp import (CircleChart, LogDomain, OrbitPoint, initial_orbit, newton_solve_bvp,
                      validate_bvp_range)
from .interval_core import IntervalError
from .manifold import (NewtonDiverged, NoValidGamma, NoValidRadius, SingularJacobian,
                       degree_grid, maximize_gamma, newton_solve_manifold, rescale,
                       validate_manifold_range)
from .records import dumps, load_records, make_record, read_record

log = logging.getLogger("bridgeorbit")

DEFAULT_RHO = 0.896
DEFAULT_ETA_MARGIN = 0.09

# failures that mean "this step is too ambitious", handled by halving
STEP_FAILURES = (NoValidRadius, NewtonDiverged, SingularJacobian, IntervalError, LogDomain,
                 np.linalg.LinAlgError, FloatingPointError)


class ConfigError(ValueError):
    pass


class StepUnderflow(RuntimeError):
    """The step size fell below the configured minimum."""

    def __init__(self, beta, dbeta, stage, component=None):
        self.beta = beta
        self.dbeta = dbeta
        self.stage = stage
        self.component = component
        where = f" ({stage} bound, component {component + 1})" if component is not None else f" ({stage})"
        super().__init__(f"step size {dbeta:.3e} below minimum at beta={beta!r}{where}")


class LedgerMismatch(ValueError):
    """A ledger given for resumption does not belong to this configuration."""


@dataclass(frozen=True)
class ContinuationConfig:
    beta_start: float
    beta_end: float
    N: int = 30
    m_low: int = 350
    m_high: int = 400
    m_switch: float = 1.8
    nu: float = 1.05
    rho: float = DEFAULT_RHO
    eta: float = 0.5
    eta_margin: float = DEFAULT_ETA_MARGIN
    dbeta: float = 2.5e-4
    min_dbeta: float = 2e-6
    growth: float = 1.2
    max_retries: int = 60

    def __post_init__(self):
        if not (math.isfinite(self.beta_start) and math.isfinite(self.beta_end)):
            raise ConfigError("beta range must be finite")
        if not self.beta_start < self.beta_end:
            raise ConfigError("beta_start must be smaller than beta_end")
        if not (0.0 < self.beta_start and self.beta_end < 2.0):
            raise ConfigError("beta must stay inside (0, 2)")
        if not 0.0 < self.min_dbeta <= self.dbeta:
            raise ConfigError("need 0 < min_dbeta <= dbeta")
        if self.growth < 1.0:
            raise ConfigError("growth factor must be at least 1")
        if self.N < 3 or self.m_low < 8 or self.m_high < self.m_low:
            raise ConfigError("need N >= 3 and 8 <= m_low <= m_high")
        if not 0.0 < self.rho < 1.0:
            raise ConfigError("rho must lie in (0, 1)")
        if not self.nu > 1.0:
            raise ConfigError("nu must exceed 1")
        if not 0.0 < self.eta < 1.0:
            raise ConfigError("eta must lie in (0, 1)")

    def m_for(self, beta):
        return self.m_low if beta <= self.m_switch else self.m_high

    def echo(self):
        return {k: (float(v).hex() if isinstance(v, float) else v) for k, v in asdict(self).items()}

    def chunk(self, beta_start, beta_end):
        d = asdict(self)
        d.update(beta_start=beta_start, beta_end=beta_end)
        return ContinuationConfig(**d)


@dataclass
class StepState:
    """Data at the left end of the next step; everything is taken from a certificate."""

    beta: float
    gamma: float
    a: np.ndarray           # rescaled chart coefficients
    x: OrbitPoint
    dbeta: float
    gamma_fresh: bool = False


@dataclass
class ProofLedger:
    config: dict
    records: list = field(default_factory=list)
    pairs: list = field(default_factory=list)
    timings: list = field(default_factory=list)
    path: str = None

    def append(self, body, pair, elapsed=None):
        if self.pairs and self.pairs[-1][0].beta1 != pair[0].beta0:
            raise ValueError("certified intervals must abut exactly")
        self.records.append(body)
        self.pairs.append(pair)
        if elapsed is not None:
            self.timings.append(elapsed)
        if self.path is not None:
            with open(self.path, "a", encoding="ascii") as fh:
                fh.write(dumps(body) + "\n")
                fh.flush()
                os.fsync(fh.fileno())

    @property
    def covered(self):
        if not self.pairs:
            return None
        return (self.pairs[0][0].beta0, self.pairs[-1][0].beta1)

    def abutting(self):
        return all(p[0].beta1 == q[0].beta0 for p, q in zip(self.pairs[:-1], self.pairs[1:]))

    def __len__(self):
        return len(self.pairs)


def load_ledger(path, config=None):
    """Read a JSON-lines ledger; a torn last line (killed writer) is dropped."""
    ledger = ProofLedger(config=config.echo() if config else {}, path=path)
    if not os.path.exists(path) or os.path.getsize(path) == 0:
        return ledger
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().split("\n")
    good = []
    for n, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            body = json.loads(line)
        except ValueError:
            if n >= len(lines) - 2:
                log.warning("dropping incomplete last ledger line")
                break
            raise
        good.append(body)
    with open(path, "w", encoding="ascii") as fh:
        for body in good:
            fh.write(dumps(body) + "\n")
    for body in good:
        if config is not None and body.get("config") != ledger.config:
            raise LedgerMismatch("ledger was written with a different configuration")
        pair = read_record(body)
        ledger.records.append(body)
        if ledger.pairs and ledger.pairs[-1][0].beta1 != pair[0].beta0:
            raise LedgerMismatch("ledger intervals do not abut")
        ledger.pairs.append(pair)
    return ledger


def unscale(a, gamma):
    return a / float(gamma) ** degree_grid(a.shape[-1])


def transport_guess(prev, beta_next):
    """Newton seeds at beta_next: the previous right-end data, unchanged.

    ``prev`` is (rescaled chart coefficients, gamma, OrbitPoint).  Returns an
    unscaled manifold seed and an orbit seed.
    """
    a, gamma, orbit = prev
    return unscale(a, gamma), orbit


def _state_from(pair, body):
    mc, bc = pair
    meta = body.get("meta", {})
    return StepState(beta=mc.beta1, gamma=mc.gamma, a=mc.a1, x=bc.x1,
                     dbeta=float.fromhex(meta["next_dbeta"]))


def bootstrap(cfg, beta=None):
    """First Newton solves at a fresh left end: manifold, gamma, shooting, BVP."""
    beta = cfg.beta_start if beta is None else beta
    a = newton_solve_manifold(beta, cfg.N)
    gamma = maximize_gamma(beta, a, cfg.N, cfg.eta, margin=cfg.eta_margin)
    s = rescale(a, gamma)
    chart = CircleChart(s, cfg.rho)
    m = cfg.m_for(min(beta + cfg.dbeta, cfg.beta_end))
    x = newton_solve_bvp(beta, m, chart, initial_orbit(beta, chart, m), nu=cfg.nu)
    return StepState(beta=beta, gamma=gamma, a=s, x=x, dbeta=cfg.dbeta, gamma_fresh=True)


def _refresh_gamma(cfg, st):
    """Recompute gamma at the left end; returns True if the chart changed."""
    a = newton_solve_manifold(st.beta, cfg.N, guess=unscale(st.a, st.gamma))
    gamma = maximize_gamma(st.beta, a, cfg.N, cfg.eta, margin=cfg.eta_margin)
    st.gamma_fresh = True
    if gamma == st.gamma:
        return False
    s = rescale(a, gamma)
    x = newton_solve_bvp(st.beta, st.x.m, CircleChart(s, cfg.rho), st.x, nu=cfg.nu)
    st.gamma, st.a, st.x = gamma, s, x
    log.info("beta=%.8f: rescaling changed to gamma=%.6f", st.beta, gamma)
    return True


def _match_m(cfg, st, beta1):
    m = cfg.m_for(beta1)
    if st.x.m != m:
        chart = CircleChart(st.a, cfg.rho)
        st.x = newton_solve_bvp(st.beta, m, chart, st.x.resized(m), nu=cfg.nu)


class StepFailed(RuntimeError):
    """A single attempt failed; ``stage`` is "newton", "manifold" or "bvp"."""

    def __init__(self, stage, component=None, cause=None):
        self.stage = stage
        self.component = component
        super().__init__(f"{stage}: {cause}")


def _attempt(stage, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except NoValidRadius as exc:
        raise StepFailed(stage, getattr(exc, "component", None), exc) from exc
    except STEP_FAILURES as exc:
        raise StepFailed("newton" if isinstance(exc, NewtonDiverged) else stage, None, exc) from exc


def step(cfg, st, beta1, cache):
    """Prove [st.beta, beta1]; returns (ManifoldCertificate, BvpCertificate).

    ``cache`` keeps the approximate inverses built at st.beta so that retries
    with a smaller step reuse them.
    """
    a_seed, x_seed = transport_guess((st.a, st.gamma, st.x), beta1)
    a1 = rescale(_attempt("newton", newton_solve_manifold, beta1, cfg.N, guess=a_seed), st.gamma)
    mc, md = _attempt("manifold", validate_manifold_range, st.beta, beta1, cfg.N, st.gamma,
                      st.a, a1, scaled=True, reuse=cache.get("manifold"))
    cache["manifold"] = md
    chart0 = CircleChart(st.a, cfg.rho)
    chart1 = CircleChart(mc.a1, cfg.rho)
    x1 = _attempt("newton", newton_solve_bvp, beta1, st.x.m, chart1, x_seed, nu=cfg.nu)
    key = (st.beta, st.gamma, st.x.m, st.x.L, st.x.psi)
    A = cache.get("A") if cache.get("A_key") == key else None
    bc, bd = _attempt("bvp", validate_bvp_range, st.beta, beta1, st.x, x1, chart0, chart1,
                      mc.r_m, nu=cfg.nu, nu_tilde=1.0, A=A)
    cache["A"], cache["A_key"] = bd.A, key
    return mc, bc


def _advance(cfg, st, ledger):
    """One certified step, halving the step on failure; appends to the ledger."""
    cache = {}
    dbeta = st.dbeta
    t0 = time.perf_counter()
    attempts = 0
    while True:
        attempts += 1
        beta1 = st.beta + dbeta
        if beta1 >= cfg.beta_end or cfg.beta_end - beta1 < 1e-3 * dbeta:
            beta1 = cfg.beta_end
        _match_m(cfg, st, beta1)
        try:
            mc, bc = step(cfg, st, beta1, cache)
            break
        except StepFailed as exc:
            failure = exc
        if failure.stage == "manifold" and not st.gamma_fresh:
            try:
                changed = _refresh_gamma(cfg, st)
            except (NoValidGamma,) + STEP_FAILURES:
                changed = False
            if changed:
                cache.clear()
                continue
        dbeta *= 0.5
        if dbeta < cfg.min_dbeta or attempts >= cfg.max_retries:
            raise StepUnderflow(st.beta, dbeta, failure.stage, failure.component) from failure
        log.info("beta=%.8f: step failed (%s); halving to %.3e", st.beta, failure, dbeta)
    next_dbeta = min(dbeta * cfg.growth, cfg.dbeta)
    meta = {"step": len(ledger), "next_dbeta": float(next_dbeta).hex(), "attempts": attempts}
    body = make_record(mc, bc, config=ledger.config, meta=meta)
    elapsed = time.perf_counter() - t0
    ledger.append(body, (mc, bc), elapsed)
    log.info("certified [%.8f, %.8f] r=%.3e L=%.6f (%.1f s)", mc.beta0, mc.beta1, bc.r,
             bc.L_bar, elapsed)
    return StepState(beta=mc.beta1, gamma=mc.gamma, a=mc.a1, x=bc.x1, dbeta=next_dbeta)


def continue_range(cfg, resume=None, path=None, max_steps=None):
    """Certify [cfg.beta_start, cfg.beta_end] by abutting intervals.

    ``resume`` is a ledger path (or ProofLedger) to continue from; new records
    go to ``path`` (defaults to the resumed file).  ``max_steps`` stops early,
    which is used to simulate interrupted runs.
    """
    if isinstance(resume, ProofLedger):
        ledger = resume
        if path is not None:
            ledger.path = path
    elif resume is not None:
        ledger = load_ledger(resume, cfg)
        if path is not None and path != resume:
            ledger.path = path
            with open(path, "w", encoding="ascii") as fh:
                for body in ledger.records:
                    fh.write(dumps(body) + "\n")
    else:
        ledger = ProofLedger(config=cfg.echo(), path=path)
        if path is not None:
            open(path, "w").close()
    if ledger.pairs:
        if ledger.pairs[0][0].beta0 != cfg.beta_start:
            raise LedgerMismatch("ledger does not start at beta_start")
        st = _state_from(ledger.pairs[-1], ledger.records[-1])
    else:
        st = bootstrap(cfg)
    steps = 0
    while st.beta < cfg.beta_end:
        if max_steps is not None and steps >= max_steps:
            break
        st = _advance(cfg, st, ledger)
        steps += 1
    return ledger


def _run_chunk(args):
    cfg, path = args
    ledger = continue_range(cfg, path=path)
    return path, len(ledger)


def split_range(beta_start, beta_end, jobs):
    """Chunk boundaries shared exactly by neighbouring chunks."""
    jobs = max(int(jobs), 1)
    pts = [beta_start + (beta_end - beta_start) * k / jobs for k in range(jobs)] + [beta_end]
    return list(zip(pts[:-1], pts[1:]))


def continue_range_split(cfg, jobs, path):
    """Pre-split mode: chunks are continued independently in parallel and merged.

    Each chunk bootstraps its own first Newton solve.  The merged ledger keeps
    each record's own chunk configuration.
    """
    parts = split_range(cfg.beta_start, cfg.beta_end, jobs)
    tasks = [(cfg.chunk(b0, b1), f"{path}.part{k}") for k, (b0, b1) in enumerate(parts)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_run_chunk, tasks))
    else:
        for t in tasks:
            _run_chunk(t)
    merged = ProofLedger(config=cfg.echo(), path=path)
    open(path, "w").close()
    for sub_cfg, part in tasks:
        for body in load_records(part):
            merged.append(body, read_record(body))
        os.remove(part)
    return merged
