"""Joint search of a base architecture and its depth/width/resolution scaling strategies."""

import os as _os

# cap BLAS threads before numpy loads; the CLI validates the value
_threads = _os.environ.get("SCALENAS_THREADS", "")
if _threads.isdigit() and int(_threads) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .flops import BudgetPlan, FlopsReport, count_flops, path_flops, select_budgets, within_budget
from .space import (
    IDENTITY,
    BaseArch,
    ScalingStrategy,
    SearchSpace,
    apply_strategy,
    builtin_space,
    enumerate_grid,
    load_space,
    random_base,
)

__version__ = "0.1.0"
