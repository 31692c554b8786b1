"""Run all acceptance criteria and print one line per criterion.

Equivalent to ``vmfp verify`` without writing files.  Exit status 1 if any
criterion fails.
"""
import sys

from vmfp.acceptance import run_all

if __name__ == "__main__":
    results = run_all(log=lambda m: print(m, file=sys.stderr, flush=True))
    for r in results:
        print(r.line())
    sys.exit(0 if all(r.passed for r in results) else 1)
