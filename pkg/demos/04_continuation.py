"""
Continuation over a parameter range
===================================

Abutting single-interval proofs cover a range of beta.  The ledger is
written one JSON line per proof and can be resumed after an interruption;
the resumed ledger is byte-identical to an uninterrupted run.
"""

import tempfile
from pathlib import Path

from bridgeorbit.continuation import ContinuationConfig, continue_range

cfg = ContinuationConfig(1.2, 1.2005, N=20, m_low=80, m_high=80)
path = Path(tempfile.mkdtemp()) / "ledger.jsonl"

# stop after one proof, as if the job had been killed
partial = continue_range(cfg, path=str(path), max_steps=1)
print("after interruption:", partial.covered)

# pick up where the ledger ends
ledger = continue_range(cfg, resume=str(path))
print("covered:", ledger.covered, "proofs:", len(ledger), "abutting:", ledger.abutting())
for mc, bc in ledger.pairs:
    print(f"  [{mc.beta0:.6f}, {mc.beta1:.6f}]  r = {bc.r:.2e}  r_m = {mc.r_m:.2e}  L = {bc.L_bar:.5f}")
