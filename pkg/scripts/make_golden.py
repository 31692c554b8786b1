"""Regenerate tests/data/golden.{ini,csv}.

Run only after an intentional change to the numerics; the diff of the CSV
is the review artefact.
"""
import os
import sys

from vmfp.cli import simulate
from vmfp.diagnostics import emit_csv
from vmfp.scenario import parse_config

GOLDEN_INI = """\
[grid]
nx = 16
x_len = 4.0
nv = 16
v_max = 8.0

[scenario]
name = beam
amplitude = 0.2
u2 = 0.5
e2_amp = 0.05
b_amp = 0.05

[run]
T = 1.0
friction = true
"""


def main(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "golden.ini"), "w") as fh:
        fh.write(GOLDEN_INI)
    records, _ = simulate(parse_config(GOLDEN_INI))
    emit_csv(records, os.path.join(out_dir, "golden.csv"))
    print(f"wrote {len(records)} records to {out_dir}", file=sys.stderr)


if __name__ == "__main__":
    here = os.path.dirname(os.path.abspath(__file__))
    main(sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, "..", "tests", "data"))
