"""Joint multi-level structures: trend matrix, covariance blocks, covariance
vectors, and the level-by-level (recursive) inverse of the joint covariance.

Levels are 0-based in code: level 0 is the cheapest code, level s-1 the most
accurate one. ``rho[k]`` links level k to level k + 1, so that

    Z_{k+1}(x) = rho[k](x) Z_k(x) + delta_{k+1}(x).

Every routine assumes sorted nested designs (the trailing rows of level k are
exactly the points of level k + 1, in order); see :func:`designs.sort_nested`.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .kernels import FactoredCorrelation, Kernel, as_points


@dataclass(frozen=True)
class Basis:
    """Regression functions: constants and per-coordinate monomials of degree <= 2.

    Each term is ``(coord, degree)``; degree 0 is the constant function and
    ``coord`` is then ignored.
    """

    terms: tuple = ((0, 0),)

    def __post_init__(self):
        terms = tuple((int(c), int(g)) for c, g in self.terms)
        if not terms:
            raise ValueError("a basis needs at least one function")
        for c, g in terms:
            if g not in (0, 1, 2) or c < 0:
                raise ValueError(f"unsupported basis term (coord={c}, degree={g})")
        terms = tuple((0, 0) if g == 0 else (c, g) for c, g in terms)
        object.__setattr__(self, "terms", terms)

    @classmethod
    def constant(cls) -> Basis:
        return cls(((0, 0),))

    @classmethod
    def linear(cls, d: int) -> Basis:
        return cls(((0, 0),) + tuple((k, 1) for k in range(d)))

    @classmethod
    def parse(cls, text: str) -> Basis:
        """Parse ``"1,x1,x2^2"`` (coordinates are 1-based in the text form)."""
        terms = []
        for tok in text.replace(" ", "").split(","):
            if tok == "1":
                terms.append((0, 0))
                continue
            m = re.fullmatch(r"x(\d+)(?:\^([12]))?", tok)
            if not m or int(m.group(1)) < 1:
                raise ValueError(f"cannot parse basis term {tok!r}")
            terms.append((int(m.group(1)) - 1, int(m.group(2) or 1)))
        return cls(tuple(terms))

    def __str__(self):
        parts = []
        for c, g in self.terms:
            if g == 0:
                parts.append("1")
            else:
                parts.append(f"x{c + 1}" + ("" if g == 1 else f"^{g}"))
        return ",".join(parts)

    @property
    def size(self) -> int:
        return len(self.terms)

    def is_constant(self) -> bool:
        return self.terms == ((0, 0),)

    def __call__(self, X) -> np.ndarray:
        X = as_points(X)
        F = np.empty((X.shape[0], len(self.terms)))
        for j, (c, g) in enumerate(self.terms):
            if g == 0:
                F[:, j] = 1.0
            else:
                if c >= X.shape[1]:
                    raise ValueError(f"basis term x{c + 1} exceeds input dimension {X.shape[1]}")
                F[:, j] = X[:, c] ** g
        return F


@dataclass(frozen=True)
class ScaleModel:
    """Scale factors between adjacent levels.

    ``kind`` is ``"constant"`` (one scalar per pair) or ``"basis"``
    (``rho_k(x) = f_k(x)^T beta_k``). A constant factor is stored as a basis
    holding only the constant function, so both forms share one code path.
    """

    bases: tuple
    coefs: tuple = field(repr=False)
    kind: str = "basis"

    def __post_init__(self):
        if len(self.bases) != len(self.coefs):
            raise ValueError("one coefficient vector per scale basis is required")
        coefs = []
        for b, c in zip(self.bases, self.coefs):
            c = np.atleast_1d(np.asarray(c, dtype=float)).copy()
            if c.shape != (b.size,):
                raise ValueError(f"scale coefficients {c} do not match basis {b}")
            c.setflags(write=False)
            coefs.append(c)
        object.__setattr__(self, "coefs", tuple(coefs))
        if self.kind not in ("constant", "basis"):
            raise ValueError(f"unknown scale kind {self.kind!r}")
        if self.kind == "constant" and not all(b.is_constant() for b in self.bases):
            raise ValueError("constant scale factors need constant bases")

    @classmethod
    def constant(cls, rhos) -> ScaleModel:
        rhos = np.atleast_1d(np.asarray(rhos, dtype=float))
        return cls(tuple(Basis.constant() for _ in rhos), tuple([r] for r in rhos), "constant")

    @classmethod
    def basis(cls, bases, coefs) -> ScaleModel:
        return cls(tuple(bases), tuple(coefs), "basis")

    @property
    def n_links(self) -> int:
        return len(self.bases)

    def with_coefs(self, coefs) -> ScaleModel:
        return ScaleModel(self.bases, tuple(coefs), self.kind)

    def values(self, k: int, X) -> np.ndarray:
        """rho[k] evaluated at the rows of X."""
        return self.bases[k](X) @ self.coefs[k]

    def product(self, j: int, t: int, X) -> np.ndarray:
        """prod_{i=j}^{t-1} rho[i](X); the empty product is 1."""
        X = as_points(X)
        out = np.ones(X.shape[0])
        for i in range(j, t):
            out = out * self.values(i, X)
        return out


@dataclass(frozen=True)
class LevelCorrelation:
    """Regularized correlation matrix of one level on its own design, plus its factor."""

    kernel: Kernel
    X: np.ndarray = field(repr=False)
    R: np.ndarray = field(repr=False)
    factor: FactoredCorrelation = field(repr=False)

    @property
    def nugget(self) -> float:
        return self.factor.nugget

    @property
    def n(self) -> int:
        return self.X.shape[0]


class JointStructures:
    """Trend matrix, covariance blocks and covariance vectors of the s-level model.

    Parameters
    ----------
    levels : list of LevelCorrelation
        One per level, designs sorted and nested.
    sigma2 : sequence of float
        Variances of the level processes (delta_t, and Z_1 for level 0).
    scale : ScaleModel
        ``s - 1`` scale factors.
    bases : list of Basis
        Trend regression functions per level.
    """

    def __init__(self, levels, sigma2, scale: ScaleModel, bases):
        self.levels = tuple(levels)
        self.sigma2 = np.asarray(sigma2, dtype=float).copy()
        self.scale = scale
        self.bases = tuple(bases)
        s = len(self.levels)
        if self.sigma2.shape != (s,):
            raise ValueError(f"expected {s} variances, got {self.sigma2.shape}")
        if scale.n_links != s - 1:
            raise ValueError(f"expected {s - 1} scale factors, got {scale.n_links}")
        if len(self.bases) != s:
            raise ValueError(f"expected {s} trend bases, got {len(self.bases)}")
        for k in range(1, s):
            n_prev, n_k = self.levels[k - 1].n, self.levels[k].n
            if n_k > n_prev or not np.array_equal(self.levels[k - 1].X[n_prev - n_k:], self.levels[k].X):
                raise ValueError(f"designs are not sorted/nested at level {k + 1}")
        self.sizes = np.array([lv.n for lv in self.levels])
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        self.trend_sizes = np.array([b.size for b in self.bases])
        self.trend_offsets = np.concatenate([[0], np.cumsum(self.trend_sizes)])
        self._rho_design = [scale.values(k, self.levels[k + 1].X) for k in range(s - 1)]

    @property
    def s(self) -> int:
        return len(self.levels)

    @property
    def N(self) -> int:
        return int(self.offsets[-1])

    def with_parameters(self, sigma2=None, scale=None) -> JointStructures:
        return JointStructures(
            self.levels,
            self.sigma2 if sigma2 is None else sigma2,
            self.scale if scale is None else scale,
            self.bases,
        )

    def split(self, v) -> list:
        return [v[self.offsets[k] : self.offsets[k + 1]] for k in range(self.s)]

    def _R_sub(self, j: int, t: int, u: int) -> np.ndarray:
        """R_j(D_t, D_u) taken from the regularized level-j matrix (t, u >= j)."""
        R = self.levels[j].R
        n = self.levels[j].n
        nt, nu = self.levels[t].n, self.levels[u].n
        return R[n - nt :, n - nu :]

    # ----- trend -----

    def trend_blocks(self, X, top: int) -> np.ndarray:
        """Row block of the joint trend for points X seen at level ``top``:
        ``[(prod_{i=k}^{top-1} rho_i) * F_k(X)]_{k <= top}``, zero beyond."""
        X = as_points(X)
        out = np.zeros((X.shape[0], int(self.trend_offsets[-1])))
        for k in range(top + 1):
            a, b = self.trend_offsets[k], self.trend_offsets[k + 1]
            out[:, a:b] = self.scale.product(k, top, X)[:, None] * self.bases[k](X)
        return out

    def H(self) -> np.ndarray:
        """Block lower-triangular trend matrix H_s."""
        return np.vstack([self.trend_blocks(self.levels[t].X, t) for t in range(self.s)])

    def h(self, X) -> np.ndarray:
        """Trend vectors h'_s(x) stacked by row."""
        return self.trend_blocks(X, self.s - 1)

    # ----- covariance -----

    def V_block(self, t: int, u: int) -> np.ndarray:
        """Block (t, u) of V_s."""
        if t > u:
            return self.V_block(u, t).T
        Xt, Xu = self.levels[t].X, self.levels[u].X
        B = np.zeros((Xt.shape[0], Xu.shape[0]))
        for j in range(t + 1):
            rt = self.scale.product(j, t, Xt)
            ru = self.scale.product(j, t, Xu)
            B += self.sigma2[j] * np.outer(rt, ru) * self._R_sub(j, t, u)
        if u > t:
            B = B * self.scale.product(t, u, Xu)[None, :]
        return B

    def V(self) -> np.ndarray:
        out = np.empty((self.N, self.N))
        for t in range(self.s):
            for u in range(t, self.s):
                B = self.V_block(t, u)
                out[self.offsets[t] : self.offsets[t + 1], self.offsets[u] : self.offsets[u + 1]] = B
                if u != t:
                    out[self.offsets[u] : self.offsets[u + 1], self.offsets[t] : self.offsets[t + 1]] = B.T
        return out

    def t(self, X) -> np.ndarray:
        """Covariances between Z_s(x) and the observation vector, one row per x."""
        X = as_points(X)
        s = self.s
        rows = np.empty((X.shape[0], self.N))
        prev = None
        for k in range(s):
            Dk = self.levels[k].X
            own = self.sigma2[k] * self.scale.product(k, s - 1, X)[:, None] * self.levels[k].kernel(X, Dk)
            if k == 0:
                cur = own
            else:
                tail = prev[:, self.levels[k - 1].n - self.levels[k].n :]
                cur = tail * self._rho_design[k - 1][None, :] + own
            rows[:, self.offsets[k] : self.offsets[k + 1]] = cur
            prev = cur
        return rows

    def prior_variance(self, X) -> np.ndarray:
        """Var Z_s(x) = sum_j sigma_j^2 prod_{i=j}^{s-1} rho_i(x)^2."""
        X = as_points(X)
        out = np.zeros(X.shape[0])
        for j in range(self.s):
            out += self.sigma2[j] * self.scale.product(j, self.s - 1, X) ** 2
        return out

    # ----- inverse -----

    def apply_Vinv(self, v) -> np.ndarray:
        """V_s^{-1} v using only the per-level factorizations.

        Accepts a vector of length N or an (N, m) array.
        """
        v = np.asarray(v, dtype=float)
        squeeze = v.ndim == 1
        if squeeze:
            v = v[:, None]
        blocks = self.split(v)
        res = [self.levels[0].factor.solve(blocks[0]) / self.sigma2[0]]
        for k in range(1, self.s):
            n_prev, n_k = self.levels[k - 1].n, self.levels[k].n
            rho = self._rho_design[k - 1][:, None]
            res.append(self.levels[k].factor.solve(blocks[k] - rho * blocks[k - 1][n_prev - n_k :]) / self.sigma2[k])
        # each level is corrected by the uncorrected solve of the level above
        for k in range(1, self.s):
            n_prev, n_k = self.levels[k - 1].n, self.levels[k].n
            res[k - 1][n_prev - n_k :] -= self._rho_design[k - 1][:, None] * res[k]
        r = np.vstack(res)
        return r[:, 0] if squeeze else r

    def Vinv(self) -> np.ndarray:
        """Dense V_s^{-1} assembled level by level from the explicit R_t^{-1}."""
        Vi = self.levels[0].factor.inverse() / self.sigma2[0]
        for k in range(1, self.s):
            n_prev_total = Vi.shape[0]
            n_k = self.levels[k].n
            B = self.levels[k].factor.inverse() / self.sigma2[k]
            rho = self._rho_design[k - 1]
            new = np.zeros((n_prev_total + n_k, n_prev_total + n_k))
            new[:n_prev_total, :n_prev_total] = Vi
            tail = slice(n_prev_total - n_k, n_prev_total)
            new[tail, tail] += np.outer(rho, rho) * B
            new[tail, n_prev_total:] = -rho[:, None] * B
            new[n_prev_total:, tail] = -B * rho[None, :]
            new[n_prev_total:, n_prev_total:] = B
            Vi = new
        return Vi

    def weights(self, X) -> np.ndarray:
        """Kriging weights V_s^{-1} t_s(x) (one row per x), free of every sigma_t^2."""
        X = as_points(X)
        W = None
        for k in range(self.s):
            lv = self.levels[k]
            w = lv.factor.solve(lv.kernel(lv.X, X)).T
            if k == 0:
                W = w
                continue
            n_prev, n_k = self.levels[k - 1].n, lv.n
            rho_x = self.scale.values(k - 1, X)[:, None]
            W = rho_x * W
            W[:, W.shape[1] - n_k :] -= self._rho_design[k - 1][None, :] * w
            W = np.hstack([W, w])
        return W
