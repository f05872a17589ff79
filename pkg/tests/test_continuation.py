import numpy as np
import pytest

from bridgeorbit.continuation import (ConfigError, ContinuationConfig, LedgerMismatch,
                                      StepUnderflow, continue_range, continue_range_split,
                                      load_ledger, split_range, transport_guess)

SMALL = dict(N=20, m_low=80, m_high=80)


def test_config_validation():
    with pytest.raises(ConfigError):
        ContinuationConfig(1.3, 1.2)
    with pytest.raises(ConfigError):
        ContinuationConfig(1.2, 2.1)
    with pytest.raises(ConfigError):
        ContinuationConfig(1.2, 1.3, dbeta=1e-4, min_dbeta=1e-3)
    with pytest.raises(ConfigError):
        ContinuationConfig(1.2, 1.3, rho=1.0)


def test_m_schedule():
    cfg = ContinuationConfig(1.7, 1.9)
    assert cfg.m_for(1.8) == 350 and cfg.m_for(1.8001) == 400


def test_split_range_abuts_exactly():
    parts = split_range(0.6, 0.61, 3)
    assert parts[0][0] == 0.6 and parts[-1][1] == 0.61
    assert all(a[1] == b[0] for a, b in zip(parts[:-1], parts[1:]))


def test_transport_guess_is_identity_on_rescaled_data():
    a = np.ones((4, 3, 3), complex)
    seed, orbit = transport_guess((a, 0.5, "orbit"), 1.0)
    assert orbit == "orbit"
    assert seed[0, 1, 1] == 4.0 and seed[0, 0, 0] == 1.0


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    path = tmp_path_factory.mktemp("cont") / "full.jsonl"
    cfg = ContinuationConfig(1.2, 1.2005, **SMALL)
    return cfg, continue_range(cfg, path=str(path)), path


def test_small_range_abuts_and_covers(full_run):
    cfg, ledger, path = full_run
    assert ledger.covered == (1.2, 1.2005)
    assert ledger.abutting() and len(ledger) == 2
    assert all(bc.r > 0 and mc.r_m > 0 for mc, bc in ledger.pairs)


def test_resume_gives_identical_ledger(full_run, tmp_path):
    cfg, ledger, path = full_run
    part = tmp_path / "part.jsonl"
    first = continue_range(cfg, path=str(part), max_steps=1)
    assert len(first) == 1
    with open(part, "a") as fh:
        fh.write('{"schema": "hbcert/1", "trunc')
    resumed = continue_range(cfg, resume=str(part))
    assert len(resumed) == 2
    assert part.read_bytes() == path.read_bytes()


def test_resume_rejects_other_configuration(full_run):
    cfg, ledger, path = full_run
    other = ContinuationConfig(1.2, 1.2005, N=20, m_low=80, m_high=80, rho=0.8)
    with pytest.raises(LedgerMismatch):
        load_ledger(str(path), other)


def test_step_underflow_reports_position():
    cfg = ContinuationConfig(1.2, 1.3, dbeta=0.1, min_dbeta=0.03, **SMALL)
    with pytest.raises(StepUnderflow) as err:
        continue_range(cfg)
    assert err.value.beta == 1.2 and err.value.dbeta < 0.03


def test_pre_split_mode_merges_abutting_chunks(tmp_path):
    cfg = ContinuationConfig(1.2, 1.2004, dbeta=2e-4, **SMALL)
    merged = continue_range_split(cfg, 2, str(tmp_path / "split.jsonl"))
    assert merged.covered == (1.2, 1.2004) and merged.abutting()
    assert not list(tmp_path.glob("*.part*"))
