"""Forward a phantom, invert with CGLS and report the error per access set.

    python scripts/reconstruct.py [--nx 64] [--n-max 3] [--iters 200]
"""
import argparse
import json
import time

import numpy as np

from brokenray.geometry import AccessSet
from brokenray.phantoms import disk, stripes
from brokenray.recon import OperatorConfig, ReconConfig, reconstruct


def run(preset: str, f, n_max: int, iters: int) -> dict:
    t0 = time.time()
    op = OperatorConfig(AccessSet.preset(preset), n_max, nx=f.nx).build()
    res = reconstruct(op.forward(f), cfg=ReconConfig(max_iters=iters), op=op, return_result=True)
    err = float(np.linalg.norm(res.f.values - f.values) / np.linalg.norm(f.values))
    return {"E": preset, "relative_error": err, "iterations": res.iterations,
            "relative_residual": res.relative_residual, "seconds": round(time.time() - t0, 1)}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--nx", type=int, default=64)
    p.add_argument("--n-max", type=int, default=3)
    p.add_argument("--iters", type=int, default=200)
    a = p.parse_args()
    cases = [("adjacent", "disk", disk(a.nx)), ("full", "disk", disk(a.nx)),
             ("adjacent", "stripes", stripes(a.nx, axis=0, n=10)),
             ("opposite", "stripes", stripes(a.nx, axis=0, n=10))]
    for preset, name, f in cases:
        print(json.dumps({"phantom": name, **run(preset, f, a.n_max, a.iters)}), flush=True)


if __name__ == "__main__":
    main()
