"""plugest: plug-in estimation of distribution functionals.

Split-sample and direct substitution combiners, closed-form influence
functions for six worked observation models, and a seeded Monte Carlo
harness that checks asymptotic linearity and efficiency predictions at desk
scale.
"""
from . import distkit, models, plugin, estimators, influence, mcverify

__version__ = "0.1.0"

__all__ = ["distkit", "models", "plugin", "estimators", "influence", "mcverify",
           "__version__"]
