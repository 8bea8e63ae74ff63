"""scikit-learn shaped front ends.

HeatKernelEstimator evaluates p(t, x, y) on rows ``[t, x..., y...]``.
IndexEstimator runs both sides of the index computation in ``fit``.
"""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .clifford import build_spin_rep
from .geometry import catalog, monopole_twist
from .heatkernel import kernel_for
from .index import index_report
from .stochastic import RandomSource


class HeatKernelEstimator(BaseEstimator):
    """Heat kernel of (1/2) Laplacian on the base of a catalog space."""

    def __init__(self, space="hopf", q=None):
        self.space = space
        self.q = q

    def fit(self, X=None, y=None):
        sp = catalog(self.space, **({"q": self.q} if self.q else {}))
        self.geometry_ = sp.base
        self.kernel_ = kernel_for(sp.base)
        self.n_coords_ = np.asarray(sp.base.random_points(np.random.default_rng(0), 1)).shape[-1]
        return self

    def _split(self, X):
        check_is_fitted(self, "kernel_")
        X = check_array(X, dtype=float)
        c = self.n_coords_
        if X.shape[1] != 1 + 2 * c:
            raise ValueError(f"expected {1 + 2 * c} columns [t, x({c}), y({c})], got {X.shape[1]}")
        if np.any(X[:, 0] <= 0):
            raise ValueError("t must be positive")
        return X[:, 0], X[:, 1:1 + c], X[:, 1 + c:]

    def predict(self, X):
        t, x, y = self._split(X)
        out = np.empty(len(t))
        for tv in np.unique(t):
            sel = t == tv
            out[sel] = self.kernel_(tv, x[sel], y[sel])
        return out

    def log_gradient(self, X):
        t, x, y = self._split(X)
        out = np.empty_like(x)
        for tv in np.unique(t):
            sel = t == tv
            out[sel] = self.kernel_.log_gradient(tv, x[sel], y[sel])
        return out


class IndexEstimator(BaseEstimator):
    """Stochastic supertrace integral beside the characteristic-form integral.

    ``fit`` ignores its arguments; the space, twist and budgets are parameters.
    """

    def __init__(self, space="hopf", twist=1, t=0.05, n_paths=20_000, seed=0, order=4,
                 cw_order=12, workers=1):
        self.space = space
        self.twist = twist
        self.t = t
        self.n_paths = n_paths
        self.seed = seed
        self.order = order
        self.cw_order = cw_order
        self.workers = workers

    def fit(self, X=None, y=None):
        if self.seed is None:
            raise ValueError("seed is required")
        sp = catalog(self.space)
        tw = monopole_twist(self.twist, area=sp.base.volume())
        self.report_ = index_report(sp, kernel_for(sp.base), build_spin_rep(sp.base.dim), tw,
                                    self.t, self.n_paths, RandomSource(self.seed),
                                    {"k": self.twist}, self.order, None, self.workers,
                                    self.cw_order)
        self.analytic_ = self.report_.analytic.value
        self.stderr_ = self.report_.analytic.stderr
        self.geometric_ = self.report_.geometric
        return self

    def score(self, X=None, y=None):
        """Negative z-score distance between the two sides (0 is perfect)."""
        check_is_fitted(self, "report_")
        return -abs(self.analytic_ - self.geometric_) / max(self.stderr_, 1e-300)
