"""Nested experimental designs: validation, canonical ordering and index maps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import as_points

DEFAULT_TOL = 1e-9


class DesignError(ValueError):
    pass


class NotNested(DesignError):
    def __init__(self, level: int, point):
        self.level = level
        self.point = np.asarray(point)
        super().__init__(
            f"design of level {level} is not contained in level {level - 1}: "
            f"point {self.point.tolist()} has no match"
        )


class DuplicatePoint(DesignError):
    def __init__(self, level: int, point):
        self.level = level
        self.point = np.asarray(point)
        super().__init__(f"level {level} contains duplicate point {self.point.tolist()}")


@dataclass(frozen=True)
class NestedDesigns:
    """Design sets D_1 ⊇ D_2 ⊇ ... ⊇ D_s, cheapest level first.

    ``index_maps[t - 1]`` (for t >= 1, 0-based level t) holds, for every point of
    level t, its row in level t - 1. ``index_maps[0]`` is ``None``.
    """

    levels: tuple
    index_maps: tuple
    tol: float = DEFAULT_TOL

    @property
    def s(self) -> int:
        return len(self.levels)

    @property
    def dim(self) -> int:
        return self.levels[0].shape[1]

    @property
    def sizes(self) -> tuple:
        return tuple(X.shape[0] for X in self.levels)

    def is_sorted(self) -> bool:
        """True when each level's trailing block is the next level, in order."""
        for t in range(1, self.s):
            n_prev, n_t = self.levels[t - 1].shape[0], self.levels[t].shape[0]
            if not np.array_equal(self.index_maps[t], np.arange(n_prev - n_t, n_prev)):
                return False
        return True

    def map_between(self, upper: int, lower: int) -> np.ndarray:
        """Rows in level ``lower`` of the points of level ``upper`` (0-based, upper >= lower)."""
        if upper < lower:
            raise ValueError("upper level must not be below lower level")
        idx = np.arange(self.levels[upper].shape[0])
        for t in range(upper, lower, -1):
            idx = self.index_maps[t][idx]
        return idx


def _match_rows(A: np.ndarray, B: np.ndarray, tol: float) -> np.ndarray:
    """For each row of ``A`` the index of the matching row of ``B`` or -1."""
    out = np.full(A.shape[0], -1, dtype=int)
    if B.shape[0] == 0:
        return out
    for i, a in enumerate(A):
        hit = np.flatnonzero(np.all(np.abs(B - a) <= tol, axis=1))
        if hit.size:
            out[i] = hit[0]
    return out


def _check_duplicates(X: np.ndarray, level: int, tol: float):
    for i in range(1, X.shape[0]):
        close = np.all(np.abs(X[:i] - X[i]) <= tol, axis=1)
        if np.any(close):
            raise DuplicatePoint(level, X[i])


def validate_nesting(levels, tol: float = DEFAULT_TOL) -> NestedDesigns:
    """Check D_t ⊆ D_{t-1} for every level and return the index maps.

    Levels are numbered from 1 in error messages.
    """
    if len(levels) < 1:
        raise DesignError("at least one level is required")
    pts = [as_points(X).copy() for X in levels]
    d = pts[0].shape[1]
    for t, X in enumerate(pts, start=1):
        if X.shape[1] != d:
            raise DesignError(f"level {t} has dimension {X.shape[1]}, expected {d}")
        if X.shape[0] == 0:
            raise DesignError(f"level {t} has 0 points")
        _check_duplicates(X, t, tol)
    maps = [None]
    for t in range(1, len(pts)):
        idx = _match_rows(pts[t], pts[t - 1], tol)
        bad = np.flatnonzero(idx < 0)
        if bad.size:
            raise NotNested(t + 1, pts[t][bad[0]])
        maps.append(idx)
    for X in pts:
        X.setflags(write=False)
    return NestedDesigns(tuple(pts), tuple(maps), tol)


def sort_nested(designs: NestedDesigns, observations=None):
    """Reorder every level so that its trailing rows are the next level's points.

    The top level keeps its order; within each lower level the points not in
    the level above keep their relative order. Observation vectors (one per
    level, optional) are permuted consistently.

    Returns ``(sorted_designs, sorted_observations, permutations)`` where
    ``permutations[t]`` gives, for each new row of level t, its original row.
    Matched points take the coordinates of the highest level holding them, so
    sorted levels share bit-identical values.
    """
    s = designs.s
    perms = [None] * s
    perms[s - 1] = np.arange(designs.levels[s - 1].shape[0])
    for t in range(s - 1, 0, -1):
        n_prev = designs.levels[t - 1].shape[0]
        upper_in_prev = designs.index_maps[t][perms[t]]
        mask = np.ones(n_prev, dtype=bool)
        mask[upper_in_prev] = False
        perms[t - 1] = np.concatenate([np.flatnonzero(mask), upper_in_prev])
    new_levels = [designs.levels[t][perms[t]] for t in range(s)]
    # matched points take the coordinates of the most accurate level holding them
    for t in range(s - 1, 0, -1):
        new_levels[t - 1][new_levels[t - 1].shape[0] - new_levels[t].shape[0] :] = new_levels[t]
    for X in new_levels:
        X.setflags(write=False)
    maps = [None]
    for t in range(1, s):
        n_prev, n_t = new_levels[t - 1].shape[0], new_levels[t].shape[0]
        maps.append(np.arange(n_prev - n_t, n_prev))
    out = NestedDesigns(tuple(new_levels), tuple(maps), designs.tol)
    new_obs = None
    if observations is not None:
        if len(observations) != s:
            raise DesignError(f"expected {s} observation vectors, got {len(observations)}")
        new_obs = []
        for t, z in enumerate(observations):
            z = np.asarray(z, dtype=float).ravel()
            if z.shape[0] != designs.levels[t].shape[0]:
                raise DesignError(
                    f"level {t + 1} has {designs.levels[t].shape[0]} points but {z.shape[0]} observations"
                )
            new_obs.append(z[perms[t]])
    return out, new_obs, perms
