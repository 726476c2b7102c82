"""Smallest relative singular value of the restricted transform across presets and grids.

    python scripts/injectivity.py [--grids 12 16 24]
"""
import argparse

from brokenray.field import SupportRegion
from brokenray.geometry import AccessSet
from brokenray.recon import OperatorConfig, injectivity_probe

CASES = [("full", 0), ("adjacent", 2), ("opposite", 3)]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--grids", type=int, nargs="+", default=[12, 16, 24])
    a = p.parse_args()
    K = SupportRegion()
    print(f"{'E':<10}{'n_max':>6}" + "".join(f"{n:>12}" for n in a.grids))
    for preset, n_max in CASES:
        row = [injectivity_probe(None, None, K, OperatorConfig(AccessSet.preset(preset), n_max, nx=n,
                                                              s_per_unit=2 * n, n_phi=2 * n),
                                 relative=True) for n in a.grids]
        print(f"{preset:<10}{n_max:>6}" + "".join(f"{v:>12.3e}" for v in row), flush=True)


if __name__ == "__main__":
    main()
