"""Clusterpath estimation of Gaussian graphical models.

Joint variable clustering and sparse estimation of precision (or covariance)
matrices via penalized maximum likelihood, solved by cyclic block coordinate
descent. The heavy lifting lives in the compiled extension ``_cggm``; this
package re-exports its public surface.
"""

import os
import sys

# Allow running the tests against a build tree without installing: point
# CGGM_MODULE_DIR at the directory containing the compiled module.
_module_dir = os.environ.get("CGGM_MODULE_DIR")
if _module_dir and _module_dir not in sys.path:
    sys.path.insert(0, _module_dir)

from _cggm import (  # noqa: E402,F401
    Clusterpath,
    CvEntry,
    CvResult,
    EvalReport,
    FitResult,
    InputError,
    Model,
    NumericalError,
    PathPoint,
    adjusted_rand_index,
    build_weights,
    compute_path,
    evaluate,
    fit,
    generate,
    lambda_s_grid,
    pairwise_distance,
    refit,
    select,
)

__all__ = [
    "Clusterpath",
    "CvEntry",
    "CvResult",
    "EvalReport",
    "FitResult",
    "InputError",
    "Model",
    "NumericalError",
    "PathPoint",
    "adjusted_rand_index",
    "build_weights",
    "compute_path",
    "evaluate",
    "fit",
    "generate",
    "lambda_s_grid",
    "pairwise_distance",
    "refit",
    "select",
]

__version__ = "0.1.0"
