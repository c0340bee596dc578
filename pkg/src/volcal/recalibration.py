"""Post-hoc Platt scaling.

The fitted map is ``sigmoid(a * z + b)`` on logits ``z``. Parameters maximize
the Bernoulli log-likelihood with a damped Newton method started from the
identity map ``(a, b) = (1, 0)``, so the fitted negative log-likelihood can
never exceed that of the uncalibrated scores.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit, log_expit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._summation import fsum
from ._validation import check_binary_labels, check_logits, check_same_length, check_scores
from .exceptions import DegenerateLabelsError

__all__ = [
    "PlattParams",
    "PlattScaler",
    "TemperatureDistorter",
    "platt_apply",
    "platt_fit",
    "sigmoid",
    "temperature_distort",
    "to_logit",
]

DEFAULT_EPS = 1e-7

sigmoid = expit


def to_logit(p, eps=DEFAULT_EPS):
    """Log-odds of ``p`` after clamping it to ``[eps, 1 - eps]``.

    Accepts a scalar or an array; returns the same kind.
    """
    if not 0.0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 0.5)")
    arr = np.asarray(p, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    q = np.clip(arr, eps, 1.0 - eps)
    out = np.log(q) - np.log1p(-q)
    return float(out) if out.ndim == 0 else out


def temperature_distort(scores, T):
    """Rescale the logits of ``scores`` by ``1/T``; ``T > 1`` pulls toward 0.5."""
    if not T > 0 or not np.isfinite(T):
        raise ValueError("temperature must be finite and positive")
    scores = np.asarray(scores, dtype=np.float64)
    out = expit(to_logit(scores) / T)
    # Exact fixed point at 0.5, independent of rounding in the logit.
    return np.where(scores == 0.5, 0.5, out)


@dataclass(frozen=True)
class PlattParams:
    a: float
    b: float
    converged: bool = True
    iterations: int = 0
    final_gradient_norm: float = 0.0

    def to_json_dict(self):
        d = asdict(self)
        del d["final_gradient_norm"]
        return d


def _nll(a, b, z, t):
    eta = a * z + b
    # -[t log s(eta) + (1 - t) log s(-eta)]
    return -fsum(t * log_expit(eta) + (1.0 - t) * log_expit(-eta))


def _grad_hess(a, b, z, t):
    p = expit(a * z + b)
    r = p - t
    w = p * (1.0 - p)
    g = np.array([fsum(r * z), fsum(r)])
    h = np.array([[fsum(w * z * z), fsum(w * z)], [fsum(w * z), fsum(w)]])
    return g, h


def _targets(labels, label_smoothing):
    t = labels.astype(np.float64)
    if label_smoothing:
        n_pos = int(labels.sum())
        n_neg = labels.size - n_pos
        t = np.where(labels == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    return t


def platt_fit(logits, labels, max_iterations=100, grad_tol=1e-10, label_smoothing=False):
    """Maximum-likelihood ``(a, b)`` for ``P(y=1 | z) = sigmoid(a z + b)``.

    Raises :class:`DegenerateLabelsError` when only one class is present.
    Returns parameters with ``converged=False`` if the gradient norm has not
    reached ``grad_tol`` within ``max_iterations`` Newton steps.
    """
    z = check_logits(logits)
    y = check_binary_labels(labels)
    check_same_length(z, y, names=["logits", "labels"])
    if z.size < 2:
        raise ValueError("need at least two points")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise DegenerateLabelsError("labels contain a single class; slope diverges")
    t = _targets(y, label_smoothing)

    if np.ptp(z) == 0.0:
        # Slope is unidentifiable; fix it at 0 and fit the intercept alone.
        prevalence = fsum(t) / t.size
        b = math.log(prevalence) - math.log1p(-prevalence)
        g, _ = _grad_hess(0.0, b, z, t)
        return PlattParams(0.0, b, True, 0, float(abs(g[1])))

    a, b = 1.0, 0.0
    nll = _nll(a, b, z, t)
    g, h = _grad_hess(a, b, z, t)
    gnorm = float(np.hypot(*g))
    it = 0
    while gnorm > grad_tol and it < max_iterations:
        it += 1
        try:
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(h, g, rcond=None)[0]
        scale = 1.0
        accepted = False
        for _ in range(60):
            a_new, b_new = a - scale * step[0], b - scale * step[1]
            nll_new = _nll(a_new, b_new, z, t)
            # Slack covers rounding once the NLL is flat at the optimum.
            if nll_new <= nll + 1e-15 * max(1.0, abs(nll)):
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            break
        a, b, nll = a_new, b_new, min(nll, nll_new)
        g, h = _grad_hess(a, b, z, t)
        gnorm = float(np.hypot(*g))
    return PlattParams(float(a), float(b), gnorm <= grad_tol, it, gnorm)


def platt_apply(params, logits):
    z = check_logits(logits)
    return expit(params.a * z + params.b)


class PlattScaler(TransformerMixin, BaseEstimator):
    """Platt scaling as a scikit-learn transformer.

    Parameters
    ----------
    input : {"probability", "logit"}
        Whether ``X`` holds scores in [0, 1] (converted with :func:`to_logit`)
        or raw logits.
    max_iter, tol : Newton iteration limit and gradient-norm tolerance.
    label_smoothing : use Platt's Bayesian targets instead of raw labels.
    eps : logit clamp for probability inputs.

    Attributes
    ----------
    params_ : PlattParams
    """

    def __init__(self, input="probability", max_iter=100, tol=1e-10,
                 label_smoothing=False, eps=DEFAULT_EPS):
        self.input = input
        self.max_iter = max_iter
        self.tol = tol
        self.label_smoothing = label_smoothing
        self.eps = eps

    def _logits(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            if X.shape[1] != 1:
                raise ValueError("PlattScaler expects a single feature column")
            X = X[:, 0]
        if self.input == "probability":
            return to_logit(check_scores(X, name="X"), self.eps)
        if self.input == "logit":
            return check_logits(X, name="X")
        raise ValueError(f"input must be 'probability' or 'logit', got {self.input!r}")

    def fit(self, X, y):
        self.params_ = platt_fit(
            self._logits(X), y, max_iterations=self.max_iter, grad_tol=self.tol,
            label_smoothing=self.label_smoothing,
        )
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        return platt_apply(self.params_, self._logits(X))

    def predict_proba(self, X):
        p = self.transform(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X, threshold=0.5):
        return (self.transform(X) >= threshold).astype(np.int8)


class TemperatureDistorter(TransformerMixin, BaseEstimator):
    """Stateless transformer applying :func:`temperature_distort`."""

    def __init__(self, temperature=1.0):
        self.temperature = temperature

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return temperature_distort(check_scores(X, name="X"), self.temperature)
