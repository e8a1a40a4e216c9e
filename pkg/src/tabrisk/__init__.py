"""tabrisk: tabular risk modelling from scratch on numpy and scipy.

Transformer-based contextual feature extraction for mixed categorical and
numeric tables, tree-ensemble feature ranking, classical classifiers with
leak-free cross-validation and hyperparameter search, and a points-based
risk nomogram.
"""

__version__ = "0.1.0"

from .data import Dataset, Schema, heart_schema, load_csv  # noqa: E402

__all__ = ["Dataset", "Schema", "__version__", "heart_schema", "load_csv"]
