"""Kernels on nu^q, multiple Poisson integrals, contractions, products.

Kernels are vectorized callables over window coordinates plus the shared
intensity quadrature; no dense tensor is ever stored.  A multiple
integral of order q is evaluated pointwise through its alternating-sum
representation over subsets J of the argument slots: slots in J run over
ordered tuples of distinct configuration points (the factorial measure),
the rest are integrated against the intensity.

Supported orders: integrals up to q = 3, products up to p + q = 4,
symmetrization up to q = 4.
"""

from __future__ import annotations

from itertools import combinations, permutations
from math import comb, factorial

import numpy as np

from . import point_process as pp
from .functionals import PathwiseFunctional
from .montecarlo import mean_se, replicate
from .rng import CONFIG_STREAM

MAX_INTEGRAL_ORDER = 3
MAX_PRODUCT_ORDER = 4
_CHUNK = 1 << 21


class UnsupportedOrderError(ValueError):
    """Requested chaos order beyond the enumeration caps."""


class Kernel:
    """A function on Z^q, evaluated on equal-length coordinate batches."""

    __slots__ = ("order", "symmetric", "label", "_eval")

    def __init__(self, order, eval, symmetric=False, label="f"):
        if order < 0:
            raise ValueError("kernel order must be >= 0")
        self.order = order
        self._eval = eval
        self.symmetric = symmetric
        self.label = label

    def __call__(self, *coords):
        if len(coords) != self.order:
            raise ValueError(f"kernel of order {self.order} got {len(coords)} arguments")
        if self.order == 0:
            return float(self._eval())
        return np.asarray(self._eval(*coords), dtype=float)

    def __repr__(self):
        return f"Kernel(order={self.order}, symmetric={self.symmetric}, {self.label})"


def constant_kernel(c) -> Kernel:
    return Kernel(0, lambda: float(c), symmetric=True, label=f"{float(c):g}")


def kernel_from(fn, order, symmetric=False, label="f") -> Kernel:
    return Kernel(order, fn, symmetric=symmetric, label=label)


def indicator_product_kernel(regions, label=None) -> Kernel:
    """f(x_1, .., x_q) = prod_j 1_{A_j}(x_j) for boxes A_j = (lo, hi)."""
    indics = [pp.box_indicator(lo, hi) for lo, hi in regions]

    def eval(*coords):
        out = indics[0](coords[0])
        for ind, c in zip(indics[1:], coords[1:]):
            out = out * ind(c)
        return out

    return Kernel(len(indics), eval, symmetric=all(
        np.array_equal(a[0], regions[0][0]) and np.array_equal(a[1], regions[0][1]) for a in regions
    ), label=label or "indicator")


def symmetrize(f: Kernel) -> Kernel:
    """Average of f over all permutations of its arguments (order <= 4)."""
    if f.order > 4:
        raise UnsupportedOrderError("symmetrization enumerates S_q; q <= 4 only")
    if f.symmetric or f.order <= 1:
        return Kernel(f.order, f._eval, symmetric=True, label=f.label)
    perms = list(permutations(range(f.order)))
    inv = 1.0 / len(perms)

    def eval(*coords):
        total = f(*[coords[j] for j in perms[0]])
        for sigma in perms[1:]:
            total = total + f(*[coords[j] for j in sigma])
        return total * inv

    return Kernel(f.order, eval, symmetric=True, label=f"sym({f.label})")


def nu_tensor_integral(f: Kernel, intensity, chunk=_CHUNK) -> float:
    """Integral of f against nu^q on the intensity's tensor grid."""
    q = f.order
    if q == 0:
        return float(f())
    nodes, weights = intensity.nodes, intensity.weights
    m = len(weights)
    total_combos = m**q
    acc = 0.0
    for start in range(0, total_combos, chunk):
        stop = min(start + chunk, total_combos)
        flat = np.arange(start, stop)
        args, wprod = [], None
        for pos in range(q):
            idx = (flat // (m ** (q - 1 - pos))) % m
            args.append(nodes[idx])
            wprod = weights[idx] if wprod is None else wprod * weights[idx]
        acc += float(np.sum(wprod * f(*args)))
    if not np.isfinite(acc):
        raise pp.QuadratureError(f"nu^{q} integral of {f.label} is not finite")
    return acc


def kernel_inner_product(f: Kernel, g: Kernel, intensity) -> float:
    """<f, g> in L^2(nu^q)."""
    if f.order != g.order:
        raise ValueError("inner product needs equal orders")
    prod = Kernel(f.order, lambda *xs: f(*xs) * g(*xs), label=f"{f.label}*{g.label}")
    return nu_tensor_integral(prod, intensity)


# -- multiple Wiener-Ito Poisson integrals ------------------------------------


class _MultipleIntegralFunctional(PathwiseFunctional):
    """I_q(f) as a pathwise functional with vectorized add/drop hooks."""

    __slots__ = ("kernel", "intensity", "_c_empty", "_gsum_nodes")

    def __init__(self, kernel: Kernel, intensity):
        q = kernel.order
        if q > MAX_INTEGRAL_ORDER:
            raise UnsupportedOrderError(f"multiple integrals support order <= {MAX_INTEGRAL_ORDER}")
        self.kernel = kernel
        self.intensity = intensity
        # Config-independent term: J = empty set, sign (-1)^q.
        self._c_empty = nu_tensor_integral(kernel, intensity) if q else float(kernel())
        self._gsum_nodes = None
        add = self._value_add_fast if q <= 2 else None
        drop = self._value_drop_fast if q <= 2 else None
        super().__init__(self._eval_config, dim=1, label=f"I{q}({kernel.label})",
                         value_add=add, value_drop=drop)

    # full alternating sum over subsets J of [q]
    def _eval_config(self, config):
        q = self.kernel.order
        if q == 0:
            return self._c_empty
        total = (-1.0) ** q * self._c_empty
        for j in range(1, q + 1):
            tuples = pp.factorial_power(config, j)
            if tuples.shape[0] == 0:
                continue
            sign = (-1.0) ** (q - j)
            for slots in combinations(range(q), j):
                total += sign * self._partial_integral(tuples, slots)
        return total

    def _partial_integral(self, tuples, slots):
        """sum over tuples of int f(points in `slots`, nodes elsewhere) d nu^(q-j)."""
        q = self.kernel.order
        nodes, weights = self.intensity.nodes, self.intensity.weights
        m = len(weights)
        t = tuples.shape[0]
        free = [p for p in range(q) if p not in slots]
        n_free = len(free)
        combos = m**n_free
        acc = 0.0
        # batch = tuples x node-combos, chunked on the node side
        max_combo_chunk = max(1, _CHUNK // max(t, 1))
        for start in range(0, combos, max_combo_chunk):
            stop = min(start + max_combo_chunk, combos)
            flat = np.arange(start, stop)
            args = [None] * q
            wprod = np.ones((t, stop - start))
            for s_i, p in enumerate(slots):
                col = tuples[:, s_i]
                args[p] = np.repeat(col, stop - start, axis=0)
            for f_i, p in enumerate(free):
                idx = (flat // (m ** (n_free - 1 - f_i))) % m
                args[p] = np.tile(nodes[idx], t) if nodes.ndim == 1 else np.tile(nodes[idx], (t, 1))
                wprod = wprod * weights[idx][None, :]
            vals = self.kernel(*args).reshape(t, stop - start)
            acc += float(np.sum(wprod * vals))
        return acc

    # -- fast paths for q <= 2 ----------------------------------------------

    def _g_sums_at(self, zs):
        """g(z) = int [f(z, y) + f(y, z)] nu(dy), cached on the grid."""
        nodes, weights = self.intensity.nodes, self.intensity.weights
        if zs is nodes:
            if self._gsum_nodes is None:
                self._gsum_nodes = self._g_sums_at(np.array(nodes, copy=True))
            return self._gsum_nodes
        m = len(weights)
        t = len(zs)
        z_rep = np.repeat(zs, m, axis=0)
        nd_tile = np.tile(nodes, t) if nodes.ndim == 1 else np.tile(nodes, (t, 1))
        vals = self.kernel(z_rep, nd_tile) + self.kernel(nd_tile, z_rep)
        return (vals.reshape(t, m) @ weights)

    def _value_add_fast(self, config, zs):
        q = self.kernel.order
        base = self._eval_config(config)
        if q == 0:
            return np.full(len(zs), base)
        if q == 1:
            return base + self.kernel(zs)
        # q == 2: new point pairs with every existing point, both orders,
        # and contributes -int [f(z,y) + f(y,z)] d nu.
        out = np.full(len(zs), base) - self._g_sums_at(zs)
        if len(config):
            xs = config.coords
            t, k = len(zs), len(xs)
            z_rep = np.repeat(zs, k, axis=0)
            x_tile = np.tile(xs, t) if xs.ndim == 1 else np.tile(xs, (t, 1))
            cross = self.kernel(z_rep, x_tile) + self.kernel(x_tile, z_rep)
            out = out + cross.reshape(t, k).sum(axis=1)
        return out

    def _value_drop_fast(self, config, i):
        q = self.kernel.order
        base = self._eval_config(config)
        if q == 0:
            return base
        zi = config.coords[i : i + 1]
        if q == 1:
            return base - float(self.kernel(zi)[0])
        out = base + float(self._g_sums_at(zi)[0])
        keep = np.ones(len(config), dtype=bool)
        keep[i] = False
        xs = config.coords[keep]
        if len(xs):
            zi_rep = np.repeat(zi, len(xs), axis=0)
            cross = self.kernel(zi_rep, xs) + self.kernel(xs, zi_rep)
            out = out - float(np.sum(cross))
        return out


def multiple_integral(f: Kernel, intensity) -> PathwiseFunctional:
    """I_q(f) as a reusable pathwise functional (precomputes nu^q terms)."""
    return _MultipleIntegralFunctional(f, intensity)


def eval_multiple_integral(f: Kernel, config, intensity) -> float:
    """One-off pointwise evaluation of I_q(f) on a configuration."""
    return _MultipleIntegralFunctional(f, intensity).value(config)


# -- star contractions and the product formula --------------------------------


def star_contraction(f: Kernel, g: Kernel, r: int, l: int, intensity) -> Kernel:
    """f *_r^l g: l shared arguments integrated out, r - l shared free.

    Requires 0 <= r <= min(p, q) and 0 <= l <= r, with f and g symmetric.
    """
    p, q = f.order, g.order
    if not (0 <= r <= min(p, q)) or not (0 <= l <= r):
        raise ValueError(f"contraction indices out of range: r={r}, l={l} for orders ({p}, {q})")
    n_out = p + q - r - l
    nodes, weights = intensity.nodes, intensity.weights
    m = len(weights)

    def eval(*xs):
        b = len(xs[0]) if n_out else 1
        if l == 0:
            f_args = list(xs[:p]) if n_out else []
            g_args = [*xs[:r], *xs[p:]]
            fv = f(*f_args) if p else f()
            gv = g(*g_args) if q else g()
            return fv * gv
        # integrate the l shared slots over the quadrature grid
        combos = m**l
        acc = np.zeros(b)
        chunk = max(1, _CHUNK // max(b, 1))
        for start in range(0, combos, chunk):
            stop = min(start + chunk, combos)
            flat = np.arange(start, stop)
            c = stop - start
            ys, wprod = [], np.ones(c)
            for pos in range(l):
                idx = (flat // (m ** (l - 1 - pos))) % m
                ys.append(nodes[idx])
                wprod = wprod * weights[idx]

            def expand_y(arr):
                return np.tile(arr, b) if arr.ndim == 1 else np.tile(arr, (b, 1))

            def expand_x(arr):
                return np.repeat(arr, c, axis=0)

            f_args = [expand_y(y) for y in ys] + [expand_x(x) for x in xs[: p - l]]
            g_args = (
                [expand_y(y) for y in ys]
                + [expand_x(x) for x in xs[: r - l]]
                + [expand_x(x) for x in xs[p - l :]]
            )
            vals = (f(*f_args) * g(*g_args)).reshape(b, c)
            acc = acc + vals @ wprod
        return acc if n_out else float(acc[0])

    if n_out == 0:
        val = eval()
        return constant_kernel(val)
    return Kernel(n_out, eval, symmetric=False, label=f"{f.label}*_{r}^{l}{g.label}")


def combine_kernels(order, weighted, label="sum") -> Kernel:
    """Linear combination sum_i c_i K_i of kernels of one order."""

    def eval(*xs):
        total = weighted[0][0] * weighted[0][1](*xs)
        for c, k in weighted[1:]:
            total = total + c * k(*xs)
        return total

    if order == 0:
        return constant_kernel(sum(c * k() for c, k in weighted))
    return Kernel(order, eval, symmetric=all(k.symmetric for _, k in weighted), label=label)


class ChaosFunctional:
    """A finite chaos expansion F = sum_q I_q(h_q), distinct orders.

    Kernels are symmetrized on construction so that the spectral
    operators can scale terms order by order.
    """

    def __init__(self, terms):
        seen = set()
        clean = []
        for q, h in sorted(terms, key=lambda t: t[0]):
            if q in seen:
                raise ValueError("chaos terms must have distinct orders")
            seen.add(q)
            if not isinstance(h, Kernel):
                if q != 0:
                    raise TypeError("non-constant terms need Kernel instances")
                h = constant_kernel(h)
            clean.append((q, h if h.symmetric else symmetrize(h)))
        self.terms = clean
        self._fn_cache = {}

    @property
    def orders(self):
        return [q for q, _ in self.terms]

    def kernel(self, q) -> Kernel:
        for order, h in self.terms:
            if order == q:
                return h
        raise KeyError(f"no term of order {q}")

    def constant_part(self) -> float:
        for q, h in self.terms:
            if q == 0:
                return float(h())
        return 0.0

    def scale_terms(self, factor) -> "ChaosFunctional":
        """New expansion with each order-q kernel multiplied by factor(q)."""
        return ChaosFunctional(
            [(q, combine_kernels(q, [(factor(q), h)], label=h.label) if q else constant_kernel(factor(0) * h()))
             for q, h in self.terms]
        )

    def as_functional(self, intensity) -> PathwiseFunctional:
        key = id(intensity)
        if key not in self._fn_cache:
            parts = [multiple_integral(h, intensity) for _, h in self.terms]
            total = parts[0]
            for part in parts[1:]:
                total = total + part
            total.label = "+".join(p.label for p in parts)
            self._fn_cache[key] = (intensity, total)
        return self._fn_cache[key][1]


def chaos_eval(F: ChaosFunctional, config, intensity) -> float:
    """Pathwise evaluation sum_q I_q(h_q) on one configuration."""
    return F.as_functional(intensity).value(config)


def product_expand(f: Kernel, g: Kernel, intensity) -> ChaosFunctional:
    """Chaos expansion of I_p(f) I_q(g) through star contractions."""
    p, q = f.order, g.order
    if p + q > MAX_PRODUCT_ORDER:
        raise UnsupportedOrderError(f"product formula supports p + q <= {MAX_PRODUCT_ORDER}")
    fs, gs = symmetrize(f), symmetrize(g)
    per_order = {}
    for r in range(min(p, q) + 1):
        for l in range(r + 1):
            coef = factorial(r) * comb(p, r) * comb(q, r) * comb(r, l)
            order = p + q - r - l
            per_order.setdefault(order, []).append(
                (float(coef), star_contraction(fs, gs, r, l, intensity))
            )
    terms = []
    for order, weighted in per_order.items():
        combined = combine_kernels(order, weighted, label=f"prod[{order}]")
        terms.append((order, combined if order == 0 else symmetrize(combined)))
    return ChaosFunctional(terms)


# -- isometry and kernel estimation -------------------------------------------


def ito_isometry_check(f: Kernel, g: Kernel, intensity, replicas, master_seed=0, threads=1):
    """MC estimate of E I_q(f) I_q'(g) against q! <f_s, g_s> 1_{q=q'}."""
    if max(f.order, g.order) > MAX_INTEGRAL_ORDER:
        raise UnsupportedOrderError("isometry check supports orders <= 3")
    F = multiple_integral(f, intensity)
    G = multiple_integral(g, intensity) if g is not f else F
    if f.order == g.order:
        analytic = factorial(f.order) * kernel_inner_product(symmetrize(f), symmetrize(g), intensity)
    else:
        analytic = 0.0

    def worker(r, rng):
        cfg = pp.sample_ppp(intensity, rng)
        return F.value(cfg) * G.value(cfg)

    rows = replicate(replicas, worker, master_seed, CONFIG_STREAM, threads=threads)
    mc, se = mean_se(rows)
    return {"mc_estimate": float(mc), "analytic_value": float(analytic), "std_error": float(se)}


class GridKernel(Kernel):
    """Kernel backed by values on the tensor grid of a 1-d window."""

    __slots__ = ("axis_nodes", "values")

    def __init__(self, axis_nodes, values, symmetric=False, label="grid"):
        axis_nodes = np.asarray(axis_nodes, dtype=float)
        values = np.asarray(values, dtype=float)
        order = values.ndim
        self.axis_nodes = axis_nodes
        self.values = values

        def eval(*coords):
            idx = [np.clip(np.searchsorted(axis_nodes, c), 0, len(axis_nodes) - 1) for c in coords]
            # snap to nearest node
            for j, c in enumerate(coords):
                left = np.clip(idx[j] - 1, 0, len(axis_nodes) - 1)
                use_left = np.abs(axis_nodes[left] - c) < np.abs(axis_nodes[idx[j]] - c)
                idx[j] = np.where(use_left, left, idx[j])
            return values[tuple(idx)]

        super().__init__(order, eval, symmetric=symmetric, label=label)


def chaos_kernel_estimate(F: PathwiseFunctional, q, intensity, replicas,
                          master_seed=0, grid_cells=32, threads=1) -> GridKernel:
    """Estimate T_q F = E D^q F pointwise on a coarse grid (q <= 2).

    Returns the Monte Carlo average of the iterated add operator at the
    grid nodes as a :class:`GridKernel`.
    """
    if q not in (1, 2):
        raise UnsupportedOrderError("kernel estimation supports q in {1, 2}")
    if intensity.kind != "lebesgue" or intensity.dim != 1:
        raise ValueError("kernel estimation needs a 1-d lebesgue window")
    grid = intensity.with_cells(grid_cells).nodes
    m = len(grid)

    if q == 1:

        def worker(r, rng):
            cfg = pp.sample_ppp(intensity, rng)
            return F.value_add(cfg, grid) - F.value(cfg)

        rows = replicate(replicas, worker, master_seed, CONFIG_STREAM, threads=threads, width=m)
        mean, _ = mean_se(rows)
        return GridKernel(grid, mean, symmetric=True, label=f"T1[{F.label}]")

    def worker(r, rng):
        cfg = pp.sample_ppp(intensity, rng)
        base = F.value(cfg)
        a = F.value_add(cfg, grid) - base  # D+_z F
        rows = np.empty((m, m))
        for j in range(m):
            cfg_j = pp.with_added(cfg, grid[j])
            rows[j] = F.value_add(cfg_j, grid) - F.value(cfg_j) - a
        return rows.ravel()

    rows = replicate(replicas, worker, master_seed, CONFIG_STREAM, threads=threads, width=m * m)
    mean, _ = mean_se(rows)
    return GridKernel(grid, mean.reshape(m, m), symmetric=True, label=f"T2[{F.label}]")
