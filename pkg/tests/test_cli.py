import csv
import io
import json

import numpy as np
import pytest

from bridgeorbit.cli_io import (EXIT_INPUT, EXIT_OK, EXIT_PROOF, EXIT_VERIFY, EXPORTS, main,
                                verify_file, verify_pair)
from bridgeorbit.records import (CertificateFormatError, digest, dumps, load_records, make_record,
                                 read_record)


def flip_bit(src, dst, bit):
    raw = bytearray(src.read_bytes())
    raw[bit // 8] ^= 1 << (bit % 8)
    dst.write_bytes(bytes(raw))


def test_record_roundtrip_is_bit_exact(small_pair):
    mc, bc = small_pair
    body = make_record(mc, bc, config={"N": 20}, meta={"kind": "single"})
    mc2, bc2 = read_record(json.loads(dumps(body)))
    assert np.array_equal(mc2.a0, mc.a0) and np.array_equal(mc2.a1, mc.a1)
    assert np.array_equal(bc2.x0.x, bc.x0.x) and np.array_equal(bc2.x1.x, bc.x1.x)
    assert (mc2.r_m, bc2.r, bc2.x0.L, bc2.x1.psi) == (mc.r_m, bc.r, bc.x0.L, bc.x1.psi)
    assert dumps(make_record(mc2, bc2, config={"N": 20}, meta={"kind": "single"})) == dumps(body)


def test_digest_detects_edits(small_pair):
    body = make_record(*small_pair)
    assert body["digest"] == digest(body)
    body["bvp"]["r"] = body["bvp"]["r"][:-1] + ("0" if body["bvp"]["r"][-1] != "0" else "1")
    with pytest.raises(CertificateFormatError):
        read_record(body)


def test_non_canonical_text_is_rejected(small_certificate, tmp_path):
    body = load_records(small_certificate)[0]
    pretty = tmp_path / "pretty.json"
    pretty.write_text(json.dumps(body, indent=1))
    with pytest.raises(CertificateFormatError):
        load_records(pretty)


def test_verify_accepts_the_proof(small_certificate, capsys):
    assert main(["verify", str(small_certificate)]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["ok"] and report["covered"] == [1.2, 1.20025]
    assert main(["verify", "--quick", str(small_certificate)]) == EXIT_OK


def test_verify_rejects_single_bit_flips(small_certificate, tmp_path, capsys):
    rng = np.random.default_rng(17)
    nbits = 8 * small_certificate.stat().st_size
    bad = tmp_path / "bad.json"
    for bit in rng.choice(nbits, 20, replace=False):
        flip_bit(small_certificate, bad, int(bit))
        assert main(["verify", "--quick", str(bad)]) == EXIT_VERIFY
    capsys.readouterr()


def test_deep_verify_catches_inconsistent_payload(small_pair):
    """A record whose stored bounds were forged is caught by the recomputation."""
    mc, bc = small_pair
    forged = bc.__class__(**{**bc.__dict__, "x0": bc.x0.__class__(bc.x0.L * 1.01, bc.x0.psi, bc.x0.x)})
    assert verify_pair(mc, bc) == []
    assert verify_pair(mc, forged, deep=False) == []
    assert verify_pair(mc, forged)


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["prove", "--beta0", "1.2"],
    ["prove", "--beta0", "1.3", "--beta1", "1.2"],
    ["prove", "--beta0", "1.2", "--beta1", "2.5"],
    ["prove", "--beta0", "1.2", "--beta1", "1.3", "--N", "0"],
    ["verify", "/nonexistent/cert.json"],
])
def test_bad_input_exits_with_code_4(argv, capsys):
    assert main(argv) == EXIT_INPUT
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == EXIT_INPUT and err["message"]


def test_failed_proof_exits_with_code_2(tmp_path, capsys):
    code = main(["prove", "--beta0", "1.2", "--beta1", "1.3", "--N", "20", "--m", "80",
                 "--out", str(tmp_path / "x.json")])
    assert code == EXIT_PROOF
    err = json.loads(capsys.readouterr().err)
    assert err["stage"] in ("manifold", "bvp")
    assert not (tmp_path / "x.json").exists()


@pytest.mark.parametrize("what", sorted(EXPORTS))
def test_exports_are_finite_csv(what, small_certificate, tmp_path):
    out = tmp_path / f"{what}.csv"
    assert main(["export", what, str(small_certificate), "--out", str(out)]) == EXIT_OK
    rows = list(csv.reader(io.StringIO(out.read_text())))
    header, data = rows[0], np.array(rows[1:], float)
    assert len(header) == data.shape[1] and len(data) > 5
    assert np.all(np.isfinite(data))


def test_u_profile_is_symmetric_and_decays(small_pair):
    mc, bc = small_pair
    header, rows = EXPORTS["u-profile"](mc, bc, samples=801)
    tau, u = rows[:, 0], rows[:, 1]
    assert np.allclose(u, u[::-1]) and np.allclose(tau, -tau[::-1])
    assert abs(u[0]) < 0.1 * np.max(np.abs(u))
    T = 2 * bc.x0.L
    k = np.searchsorted(tau, T)
    assert abs(u[k] - u[k - 1]) < 0.05 * np.max(np.abs(u))


def test_export_record_index_is_checked(small_certificate, capsys):
    assert main(["export", "orbit", str(small_certificate), "--record", "3"]) == EXIT_INPUT
    assert main(["export", "orbit", str(small_certificate), "--s", "2"]) == EXIT_INPUT


def test_continue_command_and_quick_ledger_verify(tmp_path, capsys):
    path = tmp_path / "ledger.jsonl"
    code = main(["continue", "--from", "1.2", "--to", "1.2004", "--dbeta", "2e-4", "--N", "20",
                 "--m", "80", "--out", str(path)])
    assert code == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["covered"] == [1.2, 1.2004] and out["abutting"]
    report = verify_file(path, deep=False)
    assert report["ok"] and report["covered"] == [1.2, 1.2004]
    lines = path.read_text().splitlines()
    path.write_text(lines[1] + "\n" + lines[0] + "\n")
    assert main(["verify", "--quick", str(path)]) == EXIT_VERIFY
