"""Attenuated broken ray transform on the unit square."""
import os as _os

# the bundled TBB is often too old for numba; OpenMP is always present
_os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

from .cutoff import Beam, Cutoff, alpha_pullback, classify_beams  # noqa: E402
from .field import (  # noqa: E402
    AttenuationField, BoxAttenuation, BumpAttenuation, GridAttenuation, GridFunction,
    SupportRegion, ZeroAttenuation, line_integral, weight_w, weight_w_reg,
)
from .geometry import (  # noqa: E402
    AccessSet, BoundaryPoint, BrokenRay, Termination, UnitTangent, billiard_map,
    first_exit, trace_broken_ray, trace_many,
)
from .normal_op import (  # noqa: E402
    backproject_analytic, backproject_discrete, normal_apply, normal_split, principal_symbol,
    reflect_kernel, visible_set_map,
)
from .recon import (  # noqa: E402
    OperatorConfig, ReconConfig, StabilityReport, h1_norm, injectivity_probe, reconstruct,
    stability_experiment,
)
from .transform import BrokenRayTransform, SinogramGrid, forward_one  # noqa: E402
from .unfolding import ReflectionSignature, fold_point, unfold_ray  # noqa: E402

__all__ = [
    "AccessSet", "AttenuationField", "Beam", "BoundaryPoint", "BoxAttenuation", "BrokenRay",
    "BrokenRayTransform", "BumpAttenuation", "Cutoff", "GridAttenuation", "GridFunction",
    "OperatorConfig", "ReconConfig", "ReflectionSignature", "SinogramGrid", "StabilityReport",
    "SupportRegion", "Termination", "UnitTangent", "ZeroAttenuation", "alpha_pullback",
    "backproject_analytic", "backproject_discrete", "billiard_map", "classify_beams",
    "first_exit", "fold_point", "forward_one", "h1_norm", "injectivity_probe", "line_integral",
    "normal_apply", "normal_split", "principal_symbol", "reconstruct", "reflect_kernel",
    "stability_experiment", "trace_broken_ray", "trace_many", "unfold_ray", "visible_set_map",
    "weight_w", "weight_w_reg",
]
