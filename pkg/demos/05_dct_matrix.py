"""Run a small completion-time matrix and compare two protocol variants.

The harness runs every (scenario, variant, size) cell over several seeded
repetitions, keeps the median, and writes CSV; the comparison pairs each
FEC cell with its baseline twin and reports per-pair ratios plus an ECDF.
"""

import tempfile
from pathlib import Path

from fecsim import experiments as xp
from fecsim.transport import FecConfig

scenario = xp.preset("da2gc")
variants = {"baseline": None, "rlc": FecConfig.rlc(3, 2, 20)}
sizes = {"1k": 1_000, "10k": 10_000, "50k": 50_000}

records = xp.run_matrix([scenario], variants, sizes, reps=5, base_seed=1)

print(f"{'variant':<10} {'size':<5} {'median dct':>12} {'wire bytes':>11}")
for r in records:
    dct = "never" if r.dct_us is None else f"{r.dct_us/1000:.1f} ms"
    print(f"{r.variant:<10} {r.size_label:<5} {dct:>12} {r.wire_bytes:>11}")

# --- pairwise comparison ----------------------------------------------------

base = [r for r in records if r.variant == "baseline"]
fec = [r for r in records if r.variant == "rlc"]
result = xp.compare_records(fec, base)

print()
print("completion-time ratios (rlc / baseline):")
for pair in result.pairs:
    print(f"  {pair.size_label:<5} ratio {pair.ratio:.3f}")
print(f"fraction of cells at ratio <= 1: {result.fraction_le_one:.2f}")

# --- the same flow through the file formats ---------------------------------

with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "matrix.csv"
    xp.write_run_csv(records, str(out))
    again = xp.read_run_csv(str(out))
    print()
    print(f"CSV round-trip: {len(again)} records, "
          f"equal: {again == records}")
