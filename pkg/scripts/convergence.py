"""Refinement table for the discretisation-order claims.

Prints, per level, the force-free/kernel mismatch, the Green's semigroup
defect and the energy-slope error under simultaneous (dt, dx, dv) halving.
Level 2 of the energy study takes several minutes.
"""
import argparse
import math

from vmfp import acceptance as acc
from vmfp.phase_space import PhaseGrid


def order(a, b):
    return math.log2(a / b) if a > 0 and b > 0 else float("nan")


def main(levels):
    base = acc.named_config("reference").phase_grid
    grids = [PhaseGrid(base.nx * 2**k, base.x_len, base.nv * 2**k, base.v_max) for k in range(levels)]
    print(f"{'nx':>5} {'nv':>5} {'force-free':>12} {'order':>6} {'sg ratio':>12} {'energy slope':>13} {'order':>6}")
    prev = None
    for g in grids:
        ff = acc.force_free_error(g)
        sg = acc.semigroup_ratio(g) if g is grids[0] else float("nan")
        tr = acc.run_named("reference", acc._grid_overrides(g))
        es = acc.energy_slope_error(tr)
        o1 = order(prev[0], ff) if prev else float("nan")
        o2 = order(prev[1], es) if prev else float("nan")
        print(f"{g.nx:5d} {g.nv:5d} {ff:12.3e} {o1:6.2f} {sg:12.3g} {es:13.3e} {o2:6.2f}")
        prev = (ff, es)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, default=2)
    main(ap.parse_args().levels)
