"""Normal-equation reconstruction and empirical stability experiments."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg

from .cutoff import Cutoff
from .field import H_SIGMA, AttenuationField, FieldError, GridFunction, SupportRegion, ZeroAttenuation
from .geometry import AccessSet, GeometryError
from .transform import BrokenRayTransform, SinogramGrid


class Solver(str, Enum):
    CGLS = "CGLS"
    Landweber = "Landweber"


@dataclass
class ReconConfig:
    max_iters: int = 200
    tol_residual: float = 1e-6
    solver: Solver = Solver.CGLS
    step: float = 0.0  # Landweber step; <= 0 picks 1.9 / ||I||^2
    seed: int = 0

    def __post_init__(self):
        self.solver = Solver(self.solver)
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol_residual > 0:
            raise ValueError("tol_residual must be positive")


@dataclass
class ReconResult:
    f: GridFunction
    residuals: list[float]  # ||I f_k - g||, k = 0, 1, ...
    iterations: int
    converged: bool

    @property
    def relative_residual(self) -> float:
        return self.residuals[-1] / self.residuals[0] if self.residuals[0] > 0 else 0.0


@dataclass
class StabilityReport:
    deltas: list[float]
    response_norms: list[float]  # mean over the ensemble of ||(N' - N) f||_H1 / ||f||
    fitted_slope: float
    empirical_C: float
    empirical_C_perturbed: float
    per_field_slopes: list[float] = field(default_factory=list)
    upper_C: float = 0.0  # max ||N f||_H1 / ||f||_L2(K), the other side of the sandwich

    def __post_init__(self):
        if len(self.deltas) != len(self.response_norms):
            raise ValueError("deltas and response_norms differ in length")
        if any(r < 0 for r in self.response_norms):
            raise ValueError("response norms must be nonnegative")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class OperatorConfig:
    """Everything needed to build the discrete operator pair except sigma and alpha."""

    E: AccessSet
    n_max: int
    nx: int = 64
    s_per_unit: int = 128
    n_phi: int = 128
    h_sigma: float = H_SIGMA

    def sinogram(self) -> SinogramGrid:
        return SinogramGrid(self.E, self.n_max, self.s_per_unit, self.n_phi)

    def build(self, sigma: AttenuationField | None = None, alpha=None) -> BrokenRayTransform:
        sino = self.sinogram()
        a = alpha.on_grid(sino) if isinstance(alpha, Cutoff) else alpha
        return BrokenRayTransform(sino, self.nx, sigma=sigma, alpha=a, h_sigma=self.h_sigma)


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def _forward_diff(v: np.ndarray, h: float, axis: int) -> np.ndarray:
    d = np.diff(v, axis=axis) / h
    last = np.take(d, [-1], axis=axis)  # one-sided stencil at the far edge
    return np.concatenate([d, last], axis=axis)


def h1_norm(g: GridFunction) -> float:
    v = g.values
    d1 = _forward_diff(v, g.dx, 0)
    d2 = _forward_diff(v, g.dy, 1)
    return math.sqrt(g.cell_area * float(np.sum(v * v + d1 * d1 + d2 * d2)))


def l2_norm_on(g: GridFunction, K: SupportRegion) -> float:
    m = K.grid_mask(g)
    return math.sqrt(g.cell_area * float(np.sum(g.values[m] ** 2)))


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

def _inner_sino(op: BrokenRayTransform, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(a * b * op.sino.weights))


def cgls(op: BrokenRayTransform, g: SinogramGrid, mask: np.ndarray, cfg: ReconConfig) -> ReconResult:
    """CGLS for min ||I P f - g|| with P the projection onto ``mask``."""
    area = op.dx * op.dy
    x = np.zeros(op.grid_shape)
    r = np.where(op.mask, g.values, 0.0)
    res = [math.sqrt(_inner_sino(op, r, r))]
    if res[0] == 0.0:
        return ReconResult(GridFunction(x), res, 1, True)
    s = np.where(mask, op.adjoint(r).values, 0.0)
    p = s.copy()
    gamma = area * float(np.sum(s * s))
    it = 0
    converged = False
    while it < cfg.max_iters:
        it += 1
        q = op.forward(p).values
        qq = _inner_sino(op, q, q)
        if qq <= 0.0 or gamma <= 0.0:
            converged = True
            break
        a = gamma / qq
        x += a * p
        r -= a * q
        res.append(math.sqrt(max(_inner_sino(op, r, r), 0.0)))
        if res[-1] <= cfg.tol_residual * res[0]:
            converged = True
            break
        s = np.where(mask, op.adjoint(r).values, 0.0)
        gamma_new = area * float(np.sum(s * s))
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
    return ReconResult(GridFunction(x), res, it, converged)


def operator_norm(op: BrokenRayTransform, mask: np.ndarray, iters: int = 30, seed: int = 0) -> float:
    """Power iteration estimate of ||I P||."""
    rng = np.random.default_rng(seed)
    v = np.where(mask, rng.standard_normal(op.grid_shape), 0.0)
    lam = 0.0
    for _ in range(iters):
        nv = math.sqrt(op.dx * op.dy * float(np.sum(v * v)))
        if nv == 0.0:
            return 0.0
        v /= nv
        w = np.where(mask, op.normal(v).values, 0.0)
        lam = op.dx * op.dy * float(np.sum(v * w))
        v = w
    return math.sqrt(max(lam, 0.0))


def landweber(op: BrokenRayTransform, g: SinogramGrid, mask: np.ndarray, cfg: ReconConfig) -> ReconResult:
    step = cfg.step
    if step <= 0.0:
        step = 1.9 / max(operator_norm(op, mask, seed=cfg.seed) ** 2, 1e-300)
    x = np.zeros(op.grid_shape)
    r = np.where(op.mask, g.values, 0.0)
    res = [math.sqrt(_inner_sino(op, r, r))]
    if res[0] == 0.0:
        return ReconResult(GridFunction(x), res, 1, True)
    it = 0
    converged = False
    while it < cfg.max_iters:
        it += 1
        x += step * np.where(mask, op.adjoint(r).values, 0.0)
        r = np.where(op.mask, g.values, 0.0) - op.forward(x).values
        res.append(math.sqrt(max(_inner_sino(op, r, r), 0.0)))
        if res[-1] <= cfg.tol_residual * res[0]:
            converged = True
            break
    return ReconResult(GridFunction(x), res, it, converged)


def reconstruct(sino: SinogramGrid, sigma: AttenuationField | None = None, alpha=None,
                cfg: ReconConfig = ReconConfig(), K: SupportRegion = SupportRegion(),
                nx: int = 64, op: BrokenRayTransform | None = None,
                return_result: bool = False):
    """Least-squares inversion of I_alpha restricted to K from data ``sino``.

    ``op`` reuses a prebuilt operator; otherwise one is built on an ``nx`` grid.
    """
    if op is None:
        grid = SinogramGrid(sino.E, sino.n_max, sino.s_per_unit, sino.n_phi)
        a = alpha.on_grid(grid) if isinstance(alpha, Cutoff) else alpha
        op = BrokenRayTransform(grid, nx, sigma=sigma, alpha=a)
    if not op.sino.compatible(sino):
        raise GeometryError("sinogram does not match the operator's sampling")
    mask = K.grid_mask(GridFunction(np.zeros(op.grid_shape)))
    solve = cgls if cfg.solver == Solver.CGLS else landweber
    result = solve(op, sino, mask, cfg)
    return result if return_result else result.f


# ---------------------------------------------------------------------------
# stability
# ---------------------------------------------------------------------------

def _check_sigma(sigma: AttenuationField, what: str):
    if not sigma.margin > 0.0:
        raise FieldError(f"{what} does not vanish near the boundary")


def unit_c2(eta: AttenuationField) -> AttenuationField:
    c = eta.c2_bound
    if not (0.0 < c < math.inf):
        raise FieldError("perturbation has no finite nonzero C2 norm estimate")
    return eta.scaled(1.0 / c)


def _fit_slope(deltas, norms) -> float:
    d = np.log(np.asarray(deltas, dtype=float))
    n = np.log(np.maximum(np.asarray(norms, dtype=float), 1e-300))
    return float(np.polyfit(d, n, 1)[0])


def _ratios(op: BrokenRayTransform, fs, K: SupportRegion):
    lo, hi = [], []
    for f in fs:
        nf = h1_norm(op.normal(f))
        fk = l2_norm_on(f, K)
        lo.append(fk / nf if nf > 0 else math.inf)
        hi.append(nf / fk if fk > 0 else 0.0)
    return np.array(lo), np.array(hi)


def stability_experiment(sigma0: AttenuationField | None, eta: AttenuationField, deltas,
                         f_ensemble, alpha=None, *, setup: OperatorConfig,
                         K: SupportRegion = SupportRegion(), c_ensemble=None,
                         c_delta: float = 0.05) -> StabilityReport:
    """Perturbation response of N and the empirical stability constant.

    ``eta`` is rescaled to unit C2 norm. The response at each delta is the
    ensemble mean of ||(N_{sigma0 + delta eta} - N_{sigma0}) f||_H1 / ||f||.
    ``empirical_C`` is max ||f||_L2(K) / ||N f||_H1 over ``c_ensemble``
    (default ``f_ensemble``) for sigma0 and for sigma0 + c_delta eta.
    """
    sigma0 = sigma0 if sigma0 is not None else ZeroAttenuation()
    eta = unit_c2(eta)
    _check_sigma(sigma0, "sigma0")
    _check_sigma(eta, "eta")
    deltas = [float(d) for d in deltas]
    op0 = setup.build(sigma0, alpha)
    n0 = [op0.normal(f) for f in f_ensemble]
    fn = [f.norm() for f in f_ensemble]
    per = np.zeros((len(f_ensemble), len(deltas)))
    for k, d in enumerate(deltas):
        if d == 0.0:
            continue
        op = setup.build(sigma0 + eta.scaled(d), alpha)
        for i, f in enumerate(f_ensemble):
            diff = GridFunction(op.normal(f).values - n0[i].values)
            per[i, k] = h1_norm(diff) / fn[i]
    norms = per.mean(axis=0).tolist()
    pos = [k for k, d in enumerate(deltas) if d > 0]
    slope = _fit_slope([deltas[k] for k in pos], [norms[k] for k in pos]) if len(pos) > 1 else math.nan
    per_slopes = ([_fit_slope([deltas[k] for k in pos], per[i, pos]) for i in range(len(f_ensemble))]
                  if len(pos) > 1 else [])
    cs = f_ensemble if c_ensemble is None else c_ensemble
    lo0, hi0 = _ratios(op0, cs, K)
    lo1, hi1 = _ratios(setup.build(sigma0 + eta.scaled(c_delta), alpha), cs, K)
    return StabilityReport(deltas=deltas, response_norms=norms, fitted_slope=slope,
                           empirical_C=float(lo0.max()), empirical_C_perturbed=float(lo1.max()),
                           per_field_slopes=per_slopes, upper_C=float(max(hi0.max(), hi1.max())))


# ---------------------------------------------------------------------------
# injectivity
# ---------------------------------------------------------------------------

def restricted_matrix(op: BrokenRayTransform, K: SupportRegion) -> np.ndarray:
    """Matrix of I_alpha : L2(K) -> L2(Sigma) in orthonormal pixel and sinogram bases."""
    grid = GridFunction(np.zeros(op.grid_shape))
    idx = np.flatnonzero(K.grid_mask(grid))
    sw = np.sqrt(op.sino.weights.ravel())
    keep = sw > 0
    B = np.zeros((int(keep.sum()), idx.size))
    scale = 1.0 / math.sqrt(op.dx * op.dy)
    e = np.zeros(op.grid_shape)
    for c, j in enumerate(idx):
        e.flat[j] = scale
        B[:, c] = (op.forward(e).values.ravel() * sw)[keep]
        e.flat[j] = 0.0
    return B


def singular_values(op: BrokenRayTransform, K: SupportRegion) -> np.ndarray:
    return scipy.linalg.svd(restricted_matrix(op, K), compute_uv=False)


def injectivity_probe(sigma: AttenuationField | None, alpha, K: SupportRegion,
                      grid: OperatorConfig, relative: bool = False) -> float:
    """Smallest singular value of the discretised I_alpha on L2(K) (dense SVD).

    With ``relative`` the value is divided by the largest singular value.
    """
    sv = singular_values(grid.build(sigma, alpha), K)
    smin = float(max(sv[-1], 0.0))
    return smin / float(sv[0]) if relative and sv[0] > 0 else smin
