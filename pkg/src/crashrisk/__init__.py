"""Stock price crash risk from robust (MCD) outlier detection, classical
crash measures, a firm-level sentiment index, and the panel regressions
that connect them."""

__version__ = "0.1.0"

from ._backend import BACKEND  # noqa: E402
from .errors import (  # noqa: E402
    ConfigError,
    CrashRiskError,
    DataError,
    NumericError,
)
from .mcd import McdConfig, McdFit, fast_mcd, mcd_exact, negoutlier  # noqa: E402
from .measures import crash_indicator, duvol, ncskew  # noqa: E402

__all__ = [
    "__version__", "BACKEND", "ConfigError", "CrashRiskError", "DataError", "NumericError",
    "McdConfig", "McdFit", "fast_mcd", "mcd_exact", "negoutlier", "crash_indicator", "duvol", "ncskew",
]
