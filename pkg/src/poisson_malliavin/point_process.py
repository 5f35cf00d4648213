"""Finite-mass intensity measures and Poisson point configurations.

Two intensity families are supported:

* ``lebesgue`` -- a density against Lebesgue measure on an axis-aligned
  box, integrated with a tensor-product midpoint rule (half-open cells,
  so indicators of dyadic sub-boxes integrate exactly);
* ``atomic`` -- a finite list of weighted atoms, integrated exactly.

Both expose the same ``nodes``/``weights`` quadrature interface, which
is what the rest of the package consumes: every integral against the
intensity is a weighted sum over ``nodes``.

Coordinate convention: arrays handed to densities, regions, kernels and
fields have shape ``(m,)`` when the window is one-dimensional and
``(m, dim)`` otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import as_rng


class QuadratureError(RuntimeError):
    """An intensity integral could not be evaluated to a finite value."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lo, hi)`` in R^dim."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box corners must be 1-d arrays of equal length")
        if not np.all(hi > lo):
            raise ValueError("box must have positive extent on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, coords) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(coords, dtype=float))
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=-1)


def _squeeze_coords(points: np.ndarray) -> np.ndarray:
    """(n, 1) -> (n,); higher dims pass through."""
    if points.ndim == 2 and points.shape[1] == 1:
        return points[:, 0]
    return points


class IntensityMeasure:
    """A finite-total-mass measure on a window, with quadrature hooks."""

    def __init__(self, kind, *, window=None, density=None, cells=None,
                 atoms=None, masses=None):
        self.kind = kind
        if kind == "lebesgue":
            if window is None:
                raise ValueError("lebesgue intensity needs a window")
            self.window = window
            self.density = density
            if cells is None:
                cells = 1024 if window.dim == 1 else 32
            cells = np.broadcast_to(np.asarray(cells, dtype=int), (window.dim,)).copy()
            if np.any(cells < 1):
                raise ValueError("cells per axis must be >= 1")
            self.cells = cells
            self._build_lebesgue_grid()
        elif kind == "atomic":
            locs = np.atleast_2d(np.asarray(atoms, dtype=float))
            if locs.shape[0] == 0:
                raise ValueError("atomic intensity needs at least one atom")
            mass = np.asarray(masses, dtype=float)
            if mass.shape != (locs.shape[0],) or np.any(mass <= 0):
                raise ValueError("each atom needs a mass > 0")
            self.window = Box(locs.min(axis=0), locs.max(axis=0) + 1.0)
            self.cells = None
            self.density = None
            self._atoms = locs
            self._nodes = _squeeze_coords(locs)
            self._weights = mass
        else:
            raise ValueError(f"unknown intensity kind {kind!r}")
        total = float(np.sum(self._weights))
        if not np.isfinite(total):
            raise QuadratureError("intensity has non-finite total mass")
        self.total_mass = total

    # -- constructors ------------------------------------------------------

    @classmethod
    def lebesgue(cls, lo, hi, density=1.0, cells=None) -> "IntensityMeasure":
        """Density against Lebesgue measure on the box [lo, hi).

        ``density`` may be a nonnegative constant or a vectorized callable
        on window coordinates.
        """
        return cls("lebesgue", window=Box(lo, hi), density=density, cells=cells)

    @classmethod
    def atomic(cls, atoms, masses) -> "IntensityMeasure":
        """Finite atomic measure sum_i masses[i] * delta_atoms[i]."""
        return cls("atomic", atoms=atoms, masses=masses)

    # -- quadrature --------------------------------------------------------

    def _build_lebesgue_grid(self):
        axes = [
            lo + (np.arange(m) + 0.5) * (hi - lo) / m
            for lo, hi, m in zip(self.window.lo, self.window.hi, self.cells)
        ]
        if self.window.dim == 1:
            nodes = axes[0]
        else:
            mesh = np.meshgrid(*axes, indexing="ij")
            nodes = np.stack([g.ravel() for g in mesh], axis=-1)
        cell_volume = self.window.volume / float(np.prod(self.cells))
        dens = self._density_at(nodes)
        if np.any(dens < 0) or not np.all(np.isfinite(dens)):
            raise ValueError("density must be finite and >= 0 on the window")
        self._nodes = nodes
        self._weights = dens * cell_volume
        self._density_max = float(dens.max()) if dens.size else 0.0

    def _density_at(self, coords) -> np.ndarray:
        n = coords.shape[0]
        if callable(self.density):
            return np.broadcast_to(np.asarray(self.density(coords), dtype=float), (n,))
        return np.full(n, float(self.density))

    @property
    def nodes(self) -> np.ndarray:
        """Quadrature nodes, shape (M,) in 1-d else (M, dim)."""
        return self._nodes

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights; integrate(f) == sum(weights * f(nodes))."""
        return self._weights

    @property
    def dim(self) -> int:
        return self.window.dim

    def integrate(self, f) -> float:
        """nu(f) by quadrature (exact sum for atomic intensities)."""
        vals = np.asarray(f(self._nodes), dtype=float)
        out = float(np.sum(self._weights * vals))
        if not np.isfinite(out):
            raise QuadratureError("integral of f against the intensity is not finite")
        return out

    def with_cells(self, cells) -> "IntensityMeasure":
        """Same measure, re-gridded at a different per-axis resolution."""
        if self.kind != "lebesgue":
            raise ValueError("only lebesgue intensities carry a grid resolution")
        return IntensityMeasure("lebesgue", window=self.window,
                                density=self.density, cells=cells)

    def __repr__(self):
        if self.kind == "lebesgue":
            return (f"IntensityMeasure(lebesgue, window=[{self.window.lo}, "
                    f"{self.window.hi}), mass={self.total_mass:g})")
        return f"IntensityMeasure(atomic, {len(self._weights)} atoms, mass={self.total_mass:g})"


class PointConfiguration:
    """A proper realization eta = sum_i delta_{z_i} of a point process."""

    __slots__ = ("points", "intensity_ref", "_coords")

    def __init__(self, points, intensity_ref: IntensityMeasure):
        pts = np.asarray(points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, intensity_ref.dim)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[1] != intensity_ref.dim:
            raise ValueError("point dimension does not match the window")
        if pts.shape[0] and not np.all(intensity_ref.window.contains(pts)):
            raise ValueError("all points must lie in the window")
        pts = np.ascontiguousarray(pts)
        pts.flags.writeable = False
        self.points = pts
        self.intensity_ref = intensity_ref
        self._coords = _squeeze_coords(pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def coords(self) -> np.ndarray:
        """Points as (n,) in 1-d windows, (n, dim) otherwise."""
        return self._coords

    def __repr__(self):
        return f"PointConfiguration({len(self)} points)"


def sample_ppp(intensity: IntensityMeasure, seed) -> PointConfiguration:
    """Draw one Poisson configuration with the given intensity.

    Deterministic given ``seed`` (an int or a ``numpy.random.Generator``).
    The count is Poisson(total_mass); locations are i.i.d. proportional
    to the density (rejection sampling) or to the atom masses.
    """
    rng = as_rng(seed)
    n = int(rng.poisson(intensity.total_mass))
    if intensity.kind == "atomic":
        if n == 0:
            return PointConfiguration(np.empty((0, intensity.dim)), intensity)
        idx = rng.choice(len(intensity._weights), size=n,
                         p=intensity._weights / intensity.total_mass)
        return PointConfiguration(intensity._atoms[idx], intensity)
    lo, hi = intensity.window.lo, intensity.window.hi
    if not callable(intensity.density):
        pts = rng.uniform(lo, hi, size=(n, intensity.dim))
        return PointConfiguration(pts, intensity)
    # Rejection against the grid maximum of the density.  The density is
    # assumed to attain its bound on the quadrature grid (true for the
    # piecewise-flat and smooth families used here).
    bound = intensity._density_max
    if bound == 0.0:
        return PointConfiguration(np.empty((0, intensity.dim)), intensity)
    accepted = []
    remaining = n
    while remaining > 0:
        cand = rng.uniform(lo, hi, size=(remaining, intensity.dim))
        dens = intensity._density_at(_squeeze_coords(cand))
        keep = rng.uniform(0.0, bound, size=remaining) < dens
        accepted.append(cand[keep])
        remaining -= int(keep.sum())
    pts = np.concatenate(accepted, axis=0) if accepted else np.empty((0, intensity.dim))
    return PointConfiguration(pts, intensity)


def count(config: PointConfiguration, region) -> int:
    """Number of configuration points in a region.

    ``region`` is a vectorized predicate on coordinates; a pair
    ``(lo, hi)`` is also accepted and means the half-open box [lo, hi).
    """
    if len(config) == 0:
        return 0
    mask = region_mask(config.coords, region)
    return int(np.count_nonzero(mask))


def region_mask(coords, region) -> np.ndarray:
    if callable(region):
        return np.asarray(region(coords), dtype=bool)
    lo, hi = region
    return box_indicator(lo, hi)(coords).astype(bool)


def box_indicator(lo, hi):
    """Vectorized indicator of the half-open box [lo, hi)."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))

    def indic(coords):
        pts = np.asarray(coords, dtype=float)
        if pts.ndim == 1 and lo.size == 1:
            return ((pts >= lo[0]) & (pts < hi[0])).astype(float)
        pts = np.atleast_2d(pts)
        return np.all((pts >= lo) & (pts < hi), axis=-1).astype(float)

    return indic


def integrate_config(config: PointConfiguration, f) -> float:
    """eta(f) = sum over configuration points of f."""
    if len(config) == 0:
        return 0.0
    return float(np.sum(np.asarray(f(config.coords), dtype=float)))


def compensated_integrate(config: PointConfiguration, intensity: IntensityMeasure, f) -> float:
    """eta(f) - nu(f); the nu part is evaluated by quadrature."""
    return integrate_config(config, f) - intensity.integrate(f)


def factorial_power(config: PointConfiguration, q: int) -> np.ndarray:
    """All ordered q-tuples of pairwise-distinct points.

    Returns an array of shape ``(n!/(n-q)!, q)`` in 1-d windows and
    ``(..., q, dim)`` otherwise; q = 0 yields a single empty tuple.
    """
    if q < 0:
        raise ValueError("q must be >= 0")
    n = len(config)
    dim = config.intensity_ref.dim
    tail = () if dim == 1 else (dim,)
    if q == 0:
        return np.empty((1, 0) + tail)
    if q > n:
        return np.empty((0, q) + tail)
    from itertools import permutations

    idx = np.array(list(permutations(range(n), q)), dtype=int)
    return config.coords[idx]


def add_point(config: PointConfiguration, z) -> PointConfiguration:
    """Configuration with one point appended (eta + delta_z)."""
    z = np.atleast_1d(np.asarray(z, dtype=float)).reshape(1, -1)
    if config.intensity_ref.kind == "lebesgue" and len(config):
        if np.any(np.all(config.points == z, axis=1)):
            raise ValueError("duplicate locations are only allowed for atomic intensities")
    return PointConfiguration(np.concatenate([config.points, z], axis=0), config.intensity_ref)


def drop_point(config: PointConfiguration, z) -> PointConfiguration:
    """Configuration with one occurrence of z removed (eta - delta_z).

    Location matching is exact (bitwise) on every coordinate: points are
    only dropped at locations previously produced by the sampler or by
    ``add_point``.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float)).reshape(1, -1)
    matches = np.flatnonzero(np.all(config.points == z, axis=1))
    if matches.size == 0:
        raise ValueError(f"point {z.ravel()} is not in the configuration")
    keep = np.ones(len(config), dtype=bool)
    keep[matches[0]] = False
    return PointConfiguration(config.points[keep], config.intensity_ref)


def drop_index(config: PointConfiguration, i: int) -> PointConfiguration:
    """Configuration with the i-th listed point removed."""
    keep = np.ones(len(config), dtype=bool)
    keep[i] = False
    return PointConfiguration(config.points[keep], config.intensity_ref)


def with_added(config: PointConfiguration, z) -> PointConfiguration:
    """eta + delta_z without the duplicate check (internal fast path)."""
    z = np.atleast_1d(np.asarray(z, dtype=float)).reshape(1, -1)
    return PointConfiguration(np.concatenate([config.points, z], axis=0), config.intensity_ref)
