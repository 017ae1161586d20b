"""Statistical protocol: cleaning, normality, correlation, VIF, logistic regression, ROC."""

from .correlation import correlate
from .logistic import LogisticFit, Term, fit_logistic, lr_test, univariate_screen
from .matrix import CleaningReport, DataMatrix, clean
from .normality import shapiro_wilk
from .protocol import compare_with_without_dp, run_protocol, stratified_split
from .roc import ClassificationMetrics, RocCurve, auc_mann_whitney, classify_metrics, roc, youden_threshold
from .vif import vif, vif_values

__all__ = [
    "ClassificationMetrics", "CleaningReport", "DataMatrix", "LogisticFit", "RocCurve", "Term",
    "auc_mann_whitney", "classify_metrics", "clean", "compare_with_without_dp", "correlate",
    "fit_logistic", "lr_test", "roc", "run_protocol", "shapiro_wilk", "stratified_split",
    "univariate_screen", "vif", "vif_values", "youden_threshold",
]
