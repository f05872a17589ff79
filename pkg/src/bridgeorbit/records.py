"""Exact JSON encoding of proof certificates.

Every float is stored as a hexadecimal binary64 literal so that a decoded
certificate is bit-identical to the one that was proved.  A SHA-256 digest
over the canonical payload detects any change to the file.
"""

import hashlib
import json

import numpy as np

from .chebbvp import BvpCertificate, OrbitPoint
from .interval_core import hex_decode, hex_encode
from .manifold import ManifoldCertificate
from .seq_space import triangle

SCHEMA = "hbcert/1"


class CertificateFormatError(ValueError):
    """Malformed, tampered or unsupported certificate payload."""


def _h(x):
    return float(x).hex()


def _f(s):
    if not isinstance(s, str):
        raise CertificateFormatError(f"expected a hex float literal, got {type(s).__name__}")
    return float.fromhex(s)


def _vec(obj, n=None):
    arr = hex_decode(obj)
    if arr.ndim != 1 or (n is not None and arr.size != n):
        raise CertificateFormatError("bound vector has the wrong length")
    return arr


def encode_taylor(a):
    """Triangle entries alpha1 + alpha2 < N of a (4, N, N) complex array."""
    tri = triangle(a.shape[-1])
    vals = a[:, tri.alpha1, tri.alpha2]
    return {"re": hex_encode(vals.real), "im": hex_encode(vals.imag)}


def decode_taylor(obj, N):
    tri = triangle(N)
    re = hex_decode(obj["re"])
    im = hex_decode(obj["im"])
    if re.shape != (4, tri.size) or im.shape != (4, tri.size):
        raise CertificateFormatError("Taylor coefficient block has the wrong shape")
    a = np.zeros((4, N, N), dtype=complex)
    a[:, tri.alpha1, tri.alpha2] = re + 1j * im
    return a


def encode_manifold(c):
    return {
        "beta0": _h(c.beta0), "beta1": _h(c.beta1), "N": int(c.N),
        "gamma": _h(c.gamma), "nu_tilde": _h(c.nu_tilde), "r_m": _h(c.r_m),
        "Y": hex_encode(c.Y), "Z0": hex_encode(c.Z0), "Z1": hex_encode(c.Z1), "Z2": hex_encode(c.Z2),
        "a0_coeffs": encode_taylor(c.a0), "a1_coeffs": encode_taylor(c.a1),
    }


def decode_manifold(d):
    N = int(d["N"])
    if N < 2:
        raise CertificateFormatError("Taylor order must be at least 2")
    return ManifoldCertificate(
        beta0=_f(d["beta0"]), beta1=_f(d["beta1"]), N=N, gamma=_f(d["gamma"]),
        nu_tilde=_f(d["nu_tilde"]), r_m=_f(d["r_m"]),
        Y=_vec(d["Y"], 4), Z0=_vec(d["Z0"], 4), Z1=_vec(d["Z1"], 4), Z2=_vec(d["Z2"], 4),
        a0=decode_taylor(d["a0_coeffs"], N), a1=decode_taylor(d["a1_coeffs"], N),
    )


def encode_bvp(c):
    return {
        "beta0": _h(c.beta0), "beta1": _h(c.beta1), "m": int(c.m), "nu": _h(c.nu), "rho": _h(c.rho),
        "r": _h(c.r), "r_m": _h(c.r_m),
        "Y": hex_encode(c.Y), "Z0": hex_encode(c.Z0), "Z1": hex_encode(c.Z1),
        "Z2": hex_encode(c.Z2), "Z3": hex_encode(c.Z3),
        "L0": _h(c.x0.L), "L1": _h(c.x1.L), "psi0": _h(c.x0.psi), "psi1": _h(c.x1.psi),
        "x0_coeffs": hex_encode(c.x0.x), "x1_coeffs": hex_encode(c.x1.x),
    }


def decode_bvp(d):
    m = int(d["m"])
    x0 = hex_decode(d["x0_coeffs"])
    x1 = hex_decode(d["x1_coeffs"])
    if x0.shape != (4, m) or x1.shape != (4, m):
        raise CertificateFormatError("Chebyshev coefficient block has the wrong shape")
    return BvpCertificate(
        beta0=_f(d["beta0"]), beta1=_f(d["beta1"]), m=m, nu=_f(d["nu"]), rho=_f(d["rho"]),
        r=_f(d["r"]), r_m=_f(d["r_m"]),
        Y=_vec(d["Y"], 6), Z0=_vec(d["Z0"], 6), Z1=_vec(d["Z1"], 6), Z2=_vec(d["Z2"], 6),
        Z3=_vec(d["Z3"], 6),
        x0=OrbitPoint(_f(d["L0"]), _f(d["psi0"]), x0),
        x1=OrbitPoint(_f(d["L1"]), _f(d["psi1"]), x1),
    )


def digest(body):
    """SHA-256 of the canonical JSON text of ``body`` (without its digest field)."""
    body = {k: v for k, v in body.items() if k != "digest"}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("ascii")).hexdigest()


def make_record(mcert, bcert, config=None, meta=None):
    body = {
        "schema": SCHEMA,
        "config": config or {},
        "manifold": encode_manifold(mcert),
        "bvp": encode_bvp(bcert),
        "meta": meta or {},
    }
    body["digest"] = digest(body)
    return body


def read_record(body, check_digest=True):
    """(ManifoldCertificate, BvpCertificate) from a record, after integrity checks."""
    if not isinstance(body, dict):
        raise CertificateFormatError("certificate record must be a JSON object")
    if body.get("schema") != SCHEMA:
        raise CertificateFormatError(f"unsupported schema {body.get('schema')!r}")
    if check_digest and body.get("digest") != digest(body):
        raise CertificateFormatError("digest mismatch: the certificate payload was modified")
    try:
        mc = decode_manifold(body["manifold"])
        bc = decode_bvp(body["bvp"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CertificateFormatError):
            raise
        raise CertificateFormatError(f"malformed certificate: {exc}") from exc
    if (mc.beta0, mc.beta1) != (bc.beta0, bc.beta1):
        raise CertificateFormatError("manifold and orbit certificates cover different parameter ranges")
    if bc.r_m != mc.r_m:
        raise CertificateFormatError("orbit certificate uses a different manifold error than certified")
    return mc, bc


def dumps(body):
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


def load_records(path):
    """All records in a certificate file, one canonical JSON object per line.

    Anything but the exact text written by ``dumps`` (plus newlines) is
    rejected, so that no byte of a certificate file can change unnoticed.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError as exc:
        raise CertificateFormatError(f"certificate file is not ASCII text (byte {exc.start})") from exc
    out = []
    for n, line in enumerate(text.split("\n"), 1):
        if not line:
            continue
        try:
            body = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CertificateFormatError(f"line {n} is not valid JSON: {exc.msg}") from exc
        if dumps(body) != line:
            raise CertificateFormatError(f"line {n} is not in canonical form")
        out.append(body)
    if not out:
        raise CertificateFormatError("empty certificate file")
    return out
