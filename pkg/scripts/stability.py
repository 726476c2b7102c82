"""Log-log response of the normal operator to attenuation perturbations.

    python scripts/stability.py [--nx 32] [--fields 10] [--out stability.json]
"""
import argparse
import json

from brokenray.field import BumpAttenuation
from brokenray.geometry import AccessSet
from brokenray.phantoms import ensemble
from brokenray.recon import OperatorConfig, stability_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--nx", type=int, default=32)
    p.add_argument("--fields", type=int, default=10)
    p.add_argument("--n-max", type=int, default=2)
    p.add_argument("--out")
    a = p.parse_args()
    setup = OperatorConfig(AccessSet.preset("adjacent"), a.n_max, nx=a.nx,
                           s_per_unit=2 * a.nx, n_phi=2 * a.nx)
    sigma0 = BumpAttenuation((0.5, 0.5), 0.28, 0.5)
    eta = BumpAttenuation((0.45, 0.55), 0.3, 1.0, aniso=0.3, theta0=0.7)
    rep = stability_experiment(sigma0, eta, [0.0, 0.1, 0.03, 0.01, 0.003],
                               ensemble(a.nx, a.fields, seed=11), setup=setup)
    for d, r in zip(rep.deltas, rep.response_norms):
        print(f"delta {d:<6g} response {r:.4e}")
    print(f"slope {rep.fitted_slope:.4f}  C {rep.empirical_C:.4g}  C' {rep.empirical_C_perturbed:.4g}")
    if a.out:
        with open(a.out, "w") as fh:
            json.dump(rep.to_json(), fh, indent=2)


if __name__ == "__main__":
    main()
