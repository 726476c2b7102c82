"""Visible fraction of the support region per access set and reflection budget.

    python scripts/visibility.py [--nx 32] [--ntheta 180]
"""
import argparse

import numpy as np

from brokenray.field import SupportRegion
from brokenray.geometry import AccessSet
from brokenray.normal_op import visible_set_map


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--nx", type=int, default=32)
    p.add_argument("--ntheta", type=int, default=180)
    a = p.parse_args()
    K = SupportRegion()
    sets = {"full": AccessSet.preset("full"), "adjacent": AccessSet.preset("adjacent"),
            "opposite": AccessSet.preset("opposite"), "left": AccessSet(((3.0, 4.0),))}
    print(f"{'E':<10}" + "".join(f"{'n=' + str(n):>8}" for n in range(5)))
    for name, E in sets.items():
        fr = []
        for n in range(5):
            m = visible_set_map(E, n, a.nx, a.ntheta)
            fr.append(float(np.mean(m.values[K.grid_mask(m)])))
        print(f"{name:<10}" + "".join(f"{v:>8.3f}" for v in fr), flush=True)


if __name__ == "__main__":
    main()
