"""Pathwise functionals, random fields, and the add/drop operators.

A :class:`PathwiseFunctional` is an evaluation rule on configurations;
the add operator is literally "evaluate on the configuration with one
point added, subtract".  Because the Monte Carlo estimators integrate
difference operators over the quadrature grid for every replica, the
class carries optional vectorized hooks:

* ``value_add(config, zs)`` -- values on ``config + delta_z`` for a whole
  array of candidate points ``zs`` at once;
* ``value_drop(config, i)`` -- value on ``config - delta_{z_i}``.

The constructors below (counts, sums over points, arithmetic on
functionals) all supply these hooks, so the common test functionals are
cheap.  Anything built with :func:`from_closure` falls back to building
modified configurations point by point, which is exact but slow; keep
those to small replica counts.

Functionals built from externally sampled randomness (a factor
independent of the configuration) just close over the sampled value:
the add/drop operators then automatically leave that factor untouched.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from . import point_process as pp
from .montecarlo import mean_se, replicate
from .rng import CONFIG_STREAM


def _as_batch(zs, dim):
    zs = np.asarray(zs, dtype=float)
    if dim == 1:
        return np.atleast_1d(zs)
    return np.atleast_2d(zs)


class PathwiseFunctional:
    """F = f(eta): deterministic evaluation rule on configurations."""

    __slots__ = ("dim", "label", "_value", "_value_add", "_value_drop")

    def __init__(self, value, dim=1, label="F", value_add=None, value_drop=None):
        self._value = value
        self.dim = dim
        self.label = label
        self._value_add = value_add
        self._value_drop = value_drop

    # -- evaluation --------------------------------------------------------

    def value(self, config):
        return self._value(config)

    def value_add(self, config, zs):
        """F(config + delta_z) for every z in zs."""
        zs = _as_batch(zs, config.intensity_ref.dim)
        if self._value_add is not None:
            return self._value_add(config, zs)
        out = [self._value(pp.with_added(config, z)) for z in zs]
        return np.asarray(out, dtype=float)

    def value_drop(self, config, i):
        """F(config - delta_{z_i}) for the i-th listed point."""
        if self._value_drop is not None:
            return self._value_drop(config, i)
        return self._value(pp.drop_index(config, i))

    # -- algebra -----------------------------------------------------------

    def _binary(self, other, op, symbol):
        if isinstance(other, PathwiseFunctional):
            g_value, g_add, g_drop = other._value_wrappers()
            label = f"({self.label}{symbol}{other.label})"
        else:
            c = other

            def g_value(config):
                return c

            def g_add(config, zs):
                return c

            def g_drop(config, i):
                return c

            label = f"({self.label}{symbol}{other!r})"
        f_value, f_add, f_drop = self._value_wrappers()
        return PathwiseFunctional(
            lambda config: op(f_value(config), g_value(config)),
            dim=self.dim,
            label=label,
            value_add=lambda config, zs: op(f_add(config, zs), g_add(config, zs)),
            value_drop=lambda config, i: op(f_drop(config, i), g_drop(config, i)),
        )

    def _value_wrappers(self):
        return self.value, self.value_add, self.value_drop

    def __add__(self, other):
        return self._binary(other, np.add, "+")

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract, "-")

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: np.subtract(b, a), "-r")

    def __mul__(self, other):
        return self._binary(other, np.multiply, "*")

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide, "/")

    def __pow__(self, k):
        return self._binary(k, np.power, "**")

    def __neg__(self):
        return self * (-1.0)

    def fmap(self, phi, label=None):
        """phi(F) for a vectorized numpy function phi."""
        f_value, f_add, f_drop = self._value_wrappers()
        return PathwiseFunctional(
            lambda config: phi(f_value(config)),
            dim=self.dim,
            label=label or f"phi({self.label})",
            value_add=lambda config, zs: phi(f_add(config, zs)),
            value_drop=lambda config, i: phi(f_drop(config, i)),
        )


# -- constructors ------------------------------------------------------------


def count_in(region, label=None) -> PathwiseFunctional:
    """eta(A) for a region A (an (lo, hi) pair or vectorized indicator)."""
    if not callable(region):
        lo, hi = region
        indic = pp.box_indicator(lo, hi)
        label = label or f"eta[{np.atleast_1d(lo)},{np.atleast_1d(hi)})"
    else:
        indic = lambda zs: np.asarray(region(zs), dtype=float)
        label = label or "eta(A)"

    def value(config):
        if len(config) == 0:
            return 0.0
        return float(np.sum(indic(config.coords)))

    return PathwiseFunctional(
        value,
        label=label,
        value_add=lambda config, zs: value(config) + indic(zs),
        value_drop=lambda config, i: value(config) - float(indic(config.coords[i : i + 1])[0]),
    )


def eta_integral(h, label="eta(h)") -> PathwiseFunctional:
    """eta(h) = sum of h over the configuration points (h vectorized)."""

    def value(config):
        if len(config) == 0:
            return 0.0
        return float(np.sum(np.asarray(h(config.coords), dtype=float)))

    return PathwiseFunctional(
        value,
        label=label,
        value_add=lambda config, zs: value(config) + np.asarray(h(zs), dtype=float),
        value_drop=lambda config, i: value(config) - float(np.asarray(h(config.coords[i : i + 1]), dtype=float)[0]),
    )


def compensated_count(region, intensity, label=None) -> PathwiseFunctional:
    """eta(A) - nu(A)."""
    F = count_in(region, label=label)
    if callable(region):
        nu_a = intensity.integrate(lambda zs: np.asarray(region(zs), dtype=float))
    else:
        nu_a = intensity.integrate(pp.box_indicator(*region))
    out = F - nu_a
    out.label = (label or F.label) + "-nu(A)"
    return out


def constant(c, label=None) -> PathwiseFunctional:
    """A functional that ignores the configuration.

    Close over per-replica external randomness with this to realize
    factors independent of eta: their add/drop derivatives vanish.
    """
    c = float(c)
    return PathwiseFunctional(
        lambda config: c,
        label=label or f"{c:g}",
        value_add=lambda config, zs: np.full(len(_as_batch(zs, config.intensity_ref.dim)), c),
        value_drop=lambda config, i: c,
    )


def from_closure(fn, dim=1, label="F") -> PathwiseFunctional:
    """Wrap an arbitrary configuration -> value rule (generic slow path)."""
    return PathwiseFunctional(fn, dim=dim, label=label)


# -- difference operators -----------------------------------------------------


def add_op(F: PathwiseFunctional, config, z):
    """D+_z F = F(eta + delta_z) - F(eta)."""
    return F.value_add(config, [z] if config.intensity_ref.dim == 1 else [np.atleast_1d(z)])[0] - F.value(config)


def add_grid(F: PathwiseFunctional, config, zs):
    """D+_z F for every z in zs (vectorized where F allows)."""
    return F.value_add(config, zs) - F.value(config)


def drop_op(F: PathwiseFunctional, config, z):
    """D-_z F = (F(eta) - F(eta - delta_z)) 1_{z in eta}."""
    z_arr = np.atleast_1d(np.asarray(z, dtype=float)).reshape(1, -1)
    matches = np.flatnonzero(np.all(config.points == z_arr, axis=1))
    if matches.size == 0:
        return 0.0
    return F.value(config) - F.value_drop(config, int(matches[0]))


def iterated_add_op(F: PathwiseFunctional, config, zs):
    """D^q F(z_1, ..., z_q) by inclusion-exclusion over subsets.

    Equals the nested application D+_{z_1} ... D+_{z_q} F and is exactly
    symmetric in the arguments.
    """
    zs = list(zs)
    q = len(zs)
    if q == 0:
        return F.value(config)
    total = 0.0
    for size in range(q + 1):
        sign = (-1.0) ** (q - size)
        for subset in combinations(range(q), size):
            cfg = config
            for j in subset:
                cfg = pp.with_added(cfg, zs[j])
            total += sign * F.value(cfg)
    return total


# -- random fields ------------------------------------------------------------


class RandomField:
    """u = {u(z); z in the window}: evaluable at any z, not only at points.

    ``at(config, zs)`` must be vectorized over the z batch.  The optional
    hooks mirror :class:`PathwiseFunctional` and exist so that divergence
    and bracket estimators stay cheap:

    * ``at_add_diag(config, zs)``: u(config + delta_z, z) along the batch;
    * ``at_added(config, z, zs)``: u(config + delta_z, .) on a batch;
    * ``at_dropped(config, i, zs)``: u(config - delta_{z_i}, .) on a batch.
    """

    __slots__ = ("dim", "label", "_at", "_at_add_diag", "_at_added", "_at_dropped")

    def __init__(self, at, dim=1, label="u", at_add_diag=None, at_added=None, at_dropped=None):
        self._at = at
        self.dim = dim
        self.label = label
        self._at_add_diag = at_add_diag
        self._at_added = at_added
        self._at_dropped = at_dropped

    def at(self, config, zs):
        return np.asarray(self._at(config, _as_batch(zs, config.intensity_ref.dim)), dtype=float)

    def at_add_diag(self, config, zs):
        zs = _as_batch(zs, config.intensity_ref.dim)
        if self._at_add_diag is not None:
            return np.asarray(self._at_add_diag(config, zs), dtype=float)
        out = [self.at(pp.with_added(config, z), [z])[0] for z in zs]
        return np.asarray(out, dtype=float)

    def at_added(self, config, z, zs):
        if self._at_added is not None:
            return np.asarray(self._at_added(config, z, _as_batch(zs, config.intensity_ref.dim)), dtype=float)
        return self.at(pp.with_added(config, z), zs)

    def at_dropped(self, config, i, zs):
        if self._at_dropped is not None:
            return np.asarray(self._at_dropped(config, i, _as_batch(zs, config.intensity_ref.dim)), dtype=float)
        return self.at(pp.drop_index(config, i), zs)

    def __mul__(self, c):
        c = float(c)
        return RandomField(
            lambda config, zs: self._at(config, zs) * c,
            dim=self.dim,
            label=f"{c:g}*{self.label}",
            at_add_diag=(lambda config, zs: self.at_add_diag(config, zs) * c),
            at_added=(lambda config, z, zs: self.at_added(config, z, zs) * c),
            at_dropped=(lambda config, i, zs: self.at_dropped(config, i, zs) * c),
        )

    __rmul__ = __mul__


def deterministic_field(h, label="h") -> RandomField:
    """u(z) = h(z), independent of the configuration."""
    hv = lambda zs: np.asarray(h(zs), dtype=float)
    return RandomField(
        lambda config, zs: hv(zs),
        label=label,
        at_add_diag=lambda config, zs: hv(zs),
        at_added=lambda config, z, zs: hv(zs),
        at_dropped=lambda config, i, zs: hv(zs),
    )


def scaled_field(F: PathwiseFunctional, h, label=None) -> RandomField:
    """u(z) = F(eta) h(z)."""
    hv = lambda zs: np.asarray(h(zs), dtype=float)
    return RandomField(
        lambda config, zs: F.value(config) * hv(zs),
        label=label or f"{F.label}*h",
        at_add_diag=lambda config, zs: F.value_add(config, zs) * hv(zs),
        at_added=lambda config, z, zs: F.value_add(config, [z] if config.intensity_ref.dim == 1 else [np.atleast_1d(z)])[0] * hv(zs),
        at_dropped=lambda config, i, zs: F.value_drop(config, i) * hv(zs),
    )


def field_from_closure(fn, dim=1, label="u") -> RandomField:
    """Wrap an arbitrary (config, zs) -> values rule (generic slow path)."""
    return RandomField(fn, dim=dim, label=label)


def functional_times_field(F: PathwiseFunctional, u: RandomField, label=None) -> RandomField:
    """(F u)(z) = F(eta) u(z); used by the divergence product rule."""
    return RandomField(
        lambda config, zs: F.value(config) * u.at(config, zs),
        dim=u.dim,
        label=label or f"{F.label}*{u.label}",
        at_add_diag=lambda config, zs: F.value_add(config, zs) * u.at_add_diag(config, zs),
        at_added=lambda config, z, zs: F.value_add(config, [z] if config.intensity_ref.dim == 1 else [np.atleast_1d(z)])[0] * u.at_added(config, z, zs),
        at_dropped=lambda config, i, zs: F.value_drop(config, i) * u.at_dropped(config, i, zs),
    )


def derivative_field(F: PathwiseFunctional, label=None) -> RandomField:
    """DF as a random field: (DF)(eta, z) = F(eta + delta_z) - F(eta)."""
    return RandomField(
        lambda config, zs: F.value_add(config, zs) - F.value(config),
        dim=F.dim,
        label=label or f"D{F.label}",
        at_add_diag=None,  # needs F on eta+2 points; generic fallback below
        at_added=None,
        at_dropped=None,
    )


# -- Mecke formula verifier ---------------------------------------------------


def mecke_check(f: RandomField, intensity, replicas, master_seed=0, threads=1):
    """Monte Carlo check of E int f(eta, z) eta(dz) = int E f(eta+delta_z, z) nu(dz).

    Both sides share the same configurations (common random numbers);
    the right side integrates ``f(eta + delta_z, z)`` over the intensity
    quadrature grid for every replica.  Returns the two estimates, their
    standard errors, and the standard error of the paired difference.
    """
    nodes, weights = intensity.nodes, intensity.weights

    def worker(r, rng):
        cfg = pp.sample_ppp(intensity, rng)
        lhs = float(np.sum(f.at(cfg, cfg.coords))) if len(cfg) else 0.0
        rhs = float(np.sum(weights * f.at_add_diag(cfg, nodes)))
        return (lhs, rhs)

    rows = replicate(replicas, worker, master_seed, CONFIG_STREAM, threads=threads, width=2)
    (lhs, rhs), (se_lhs, se_rhs) = mean_se(rows)
    _, se_diff = mean_se(rows[:, 0] - rows[:, 1])
    return {
        "lhs_estimate": float(lhs),
        "rhs_estimate": float(rhs),
        "std_errors": {"lhs": float(se_lhs), "rhs": float(se_rhs), "diff": float(se_diff)},
    }
