"""
One computer-assisted proof, end to end
=======================================

Solve for the orbit at the left end, continue the Newton solution to the
right end, validate manifold and boundary value problem on the whole
parameter interval, then write, verify and export the certificate.

A small truncation (N = 20, m = 80) keeps this to a few seconds; the
command line default is N = 30, m = 350.
"""

import io
import sys
import tempfile
from pathlib import Path

from bridgeorbit.cli_io import export_u_profile, main, write_csv
from bridgeorbit.records import load_records, read_record

out = Path(tempfile.mkdtemp()) / "proof.json"
main(["prove", "--beta0", "1.2", "--beta1", "1.20025", "--N", "20", "--m", "80", "--out", str(out)])

# the certificate alone is enough to re-check the proof
main(["verify", str(out)])

mc, bc = read_record(load_records(out)[0])
# along the interval the half period lies within r of the segment from L0 to L1
lo, hi = min(bc.x0.L, bc.x1.L) - bc.r, max(bc.x0.L, bc.x1.L) + bc.r
print(f"half period L in [{lo:.6f}, {hi:.6f}] for every beta in [{bc.beta0}, {bc.beta1}]")

# the profile of u over the whole symmetric orbit, as CSV
header, rows = export_u_profile(mc, bc, samples=11)
buf = io.StringIO()
write_csv(buf, header, rows)
sys.stdout.write(buf.getvalue())
