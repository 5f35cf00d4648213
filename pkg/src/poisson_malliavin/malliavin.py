"""Divergence, Ornstein-Uhlenbeck operators, energy, and brackets.

The divergence is computed by its pathwise representation

    delta u = sum_{z in eta} u(eta - delta_z, z) - int u(eta, z) nu(dz),

never through the adjoint characterisation (that one is a test, see
:func:`ibp_check`).  The spectral operators L and L^-1 act term by term
on explicit chaos expansions.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from . import point_process as pp
from .chaos import ChaosFunctional, Kernel, kernel_inner_product, symmetrize
from .functionals import PathwiseFunctional, RandomField, add_grid, from_closure
from .montecarlo import mean_se, replicate
from .rng import CONFIG_STREAM


# -- divergence ----------------------------------------------------------------


def divergence(u: RandomField, config, intensity):
    """delta u at one configuration, by the pathwise formula."""
    nu_part = np.sum(intensity.weights * u.at(config, intensity.nodes), axis=0)
    eta_part = 0.0
    for i in range(len(config)):
        zi = config.coords[i : i + 1]
        eta_part = eta_part + u.at_dropped(config, i, zi)[0]
    return eta_part - nu_part


def divergence_functional(u: RandomField, intensity, label=None) -> PathwiseFunctional:
    """delta u wrapped as a pathwise functional (for D delta u etc.)."""
    out = from_closure(lambda config: divergence(u, config, intensity),
                       dim=u.dim, label=label or f"delta({u.label})")
    return out


# -- spectral operators ---------------------------------------------------------


def ou_generator(F: ChaosFunctional) -> ChaosFunctional:
    """L F: the order-q term is scaled by -q."""
    return F.scale_terms(lambda q: -float(q))


def pseudo_inverse(F: ChaosFunctional) -> ChaosFunctional:
    """L^-1 F for centered F: the order-q term is scaled by -1/q."""
    if F.constant_part() != 0.0:
        raise ValueError("pseudo-inverse needs a centered expansion (no order-0 mass)")
    terms = [(q, h) for q, h in F.terms if q > 0]
    return ChaosFunctional(terms).scale_terms(lambda q: -1.0 / q)


def chaos_derivative_norm_sq(F: ChaosFunctional, intensity, pseudo=False) -> float:
    """E int |D_z F|^2 nu(dz) = sum_q q q! |h_q|^2, via the isometry.

    With ``pseudo=True`` the same quantity for L^-1 F, i.e. the kernels
    scaled by 1/q; used for the pseudo-inverse contraction check.
    """
    total = 0.0
    for q, h in F.terms:
        if q == 0:
            continue
        norm_sq = kernel_inner_product(h, h, intensity)
        scale = (factorial(q) / q) if pseudo else (q * factorial(q))
        total += scale * norm_sq
    return total


# -- Dirichlet energy and carre du champ ----------------------------------------


def dirichlet_energy(F: PathwiseFunctional, G: PathwiseFunctional, intensity,
                     replicas, master_seed=0, threads=1) -> dict:
    """E int D+_z F D+_z G nu(dz), Monte Carlo over replicas."""
    nodes, weights = intensity.nodes, intensity.weights

    def worker(r, rng):
        cfg = pp.sample_ppp(intensity, rng)
        return float(np.sum(weights * add_grid(F, cfg, nodes) * add_grid(G, cfg, nodes)))

    rows = replicate(replicas, worker, master_seed, CONFIG_STREAM, threads=threads)
    est, se = mean_se(rows)
    return {"estimate": float(est), "std_error": float(se)}


def carre_du_champ(F: PathwiseFunctional, config, intensity) -> float:
    """Gamma(F) = 1/2 int (D+F)^2 dnu + 1/2 int (D-F)^2 deta, pathwise."""
    nodes, weights = intensity.nodes, intensity.weights
    nu_part = float(np.sum(weights * add_grid(F, config, nodes) ** 2))
    base = F.value(config)
    eta_part = 0.0
    for i in range(len(config)):
        d_minus = base - F.value_drop(config, i)
        eta_part += float(np.sum(np.square(d_minus)))
    return 0.5 * nu_part + 0.5 * eta_part


# -- energy brackets -------------------------------------------------------------


@dataclass(frozen=True)
class EnergyBracketResult:
    """A d_u x d_v bracket matrix of one of the three kinds."""

    matrix: np.ndarray
    kind: str

    @property
    def scalar(self) -> float:
        return float(self.matrix.reshape(-1)[0]) if self.matrix.size == 1 else float("nan")


def _outer_integral(a_vals, b_vals, weights):
    """int a(z) (x) b(z) w(dz) with a_vals, b_vals of shape (m,) or (m, d)."""
    a = a_vals if a_vals.ndim == 2 else a_vals[:, None]
    b = b_vals if b_vals.ndim == 2 else b_vals[:, None]
    return np.einsum("mi,mj,m->ij", a, b, weights)


def energy_bracket(u: RandomField, v: RandomField, config, intensity, kind="gamma") -> EnergyBracketResult:
    """[u, v]_Gamma / _nu / _eta at one configuration.

    gamma = (nu-part + eta-part) / 2 exactly; the eta part evaluates the
    fields on the configuration with the integration point removed.
    """
    if kind not in ("gamma", "nu", "eta"):
        raise ValueError(f"unknown bracket kind {kind!r}")
    d_u = max(u.dim, 1)
    d_v = max(v.dim, 1)
    if kind in ("gamma", "nu"):
        nu_mat = _outer_integral(u.at(config, intensity.nodes), v.at(config, intensity.nodes),
                                 intensity.weights)
    if kind in ("gamma", "eta"):
        eta_mat = np.zeros((d_u, d_v))
        for i in range(len(config)):
            zi = config.coords[i : i + 1]
            a = np.atleast_1d(u.at_dropped(config, i, zi)[0])
            b = np.atleast_1d(v.at_dropped(config, i, zi)[0])
            eta_mat += np.outer(a, b)
    if kind == "nu":
        return EnergyBracketResult(nu_mat, "nu")
    if kind == "eta":
        return EnergyBracketResult(eta_mat, "eta")
    return EnergyBracketResult(0.5 * nu_mat + 0.5 * eta_mat, "gamma")


# -- integration-by-parts verifier ----------------------------------------------


def ibp_check(F: PathwiseFunctional, u: RandomField, intensity, replicas,
              master_seed=0, threads=1) -> dict:
    """MC check of the duality E F delta(u) = E int u(z) D_z F nu(dz)."""
    nodes, weights = intensity.nodes, intensity.weights

    def worker(r, rng):
        cfg = pp.sample_ppp(intensity, rng)
        lhs = F.value(cfg) * divergence(u, cfg, intensity)
        rhs = float(np.sum(weights * u.at(cfg, nodes) * add_grid(F, cfg, nodes)))
        return (lhs, rhs)

    rows = replicate(replicas, worker, master_seed, CONFIG_STREAM, threads=threads, width=2)
    (lhs, rhs), (se_lhs, se_rhs) = mean_se(rows)
    _, se_diff = mean_se(rows[:, 0] - rows[:, 1])
    return {
        "lhs": float(lhs),
        "rhs": float(rhs),
        "std_errors": {"lhs": float(se_lhs), "rhs": float(se_rhs), "diff": float(se_diff)},
    }


# -- canonical solution of delta u = F for chaos expansions ----------------------


def canonical_field(F: ChaosFunctional, intensity) -> RandomField:
    """u = -D L^-1 F, the canonical solution of delta u = F.

    For F = sum_q I_q(h_q) (centered), u(z) = sum_q I_{q-1}(h_q(z, .)).
    Other solutions exist; this is the spectral one.  Orders up to 3.
    """
    if F.constant_part() != 0.0:
        raise ValueError("canonical field needs a centered expansion")
    from .chaos import multiple_integral

    nodes, weights = intensity.nodes, intensity.weights
    terms = [(q, h) for q, h in F.terms if q > 0]
    cache = {}

    def slice_values(h, q, config, zs, added=None):
        """I_{q-1}(h(z, .)) evaluated at the points of ``zs``."""
        if q == 1:
            return h(zs)
        if q == 2:
            # I_1(h(z, .)) = sum_i h(z, x_i) - int h(z, y) nu(dy)
            key = id(h)
            if zs is nodes:
                if key not in cache:
                    m = len(nodes)
                    z_rep = np.repeat(nodes, m, axis=0)
                    n_tile = np.tile(nodes, m) if nodes.ndim == 1 else np.tile(nodes, (m, 1))
                    cache[key] = h(z_rep, n_tile).reshape(m, m) @ weights
                g = cache[key]
            else:
                m = len(weights)
                t = len(zs)
                z_rep = np.repeat(zs, m, axis=0)
                n_tile = np.tile(nodes, t) if nodes.ndim == 1 else np.tile(nodes, (t, 1))
                g = h(z_rep, n_tile).reshape(t, m) @ weights
            out = -g
            xs = config.coords if added is None else None
            if added is not None:
                xs = np.concatenate([np.atleast_1d(config.coords), np.atleast_1d(added)]) \
                    if config.intensity_ref.dim == 1 else np.concatenate([config.points, np.atleast_2d(added)])
            if len(xs):
                t, k = len(zs), len(xs)
                z_rep = np.repeat(zs, k, axis=0)
                x_tile = np.tile(xs, t) if np.ndim(xs) == 1 else np.tile(xs, (t, 1))
                out = out + h(z_rep, x_tile).reshape(t, k).sum(axis=1)
            return out
        # q == 3: evaluate I_2(h(z, ., .)) per z through the generic machinery
        out = np.empty(len(zs))
        for j, z in enumerate(zs):
            z_arr = np.full(1, z) if np.ndim(z) == 0 else np.asarray(z)[None]
            hz = Kernel(2, lambda x, y: h(np.broadcast_to(z_arr, (len(x),) + z_arr.shape[1:]).reshape(len(x), -1).squeeze() if z_arr.ndim > 1 else np.full(len(x), float(z_arr[0])), x, y), label="h(z,.,.)")
            cfg = config if added is None else pp.with_added(config, added)
            out[j] = multiple_integral(hz, intensity).value(cfg)
        return out

    def at(config, zs):
        total = np.zeros(len(zs))
        for q, h in terms:
            total = total + slice_values(h, q, config, zs)
        return total

    def at_add_diag(config, zs):
        # u(eta + delta_z, z): the added point also enters the point sums
        total = np.zeros(len(zs))
        for q, h in terms:
            if q == 1:
                total = total + h(zs)
            elif q == 2:
                base = slice_values(h, q, config, zs)
                diag = h(zs, zs)
                total = total + base + diag
            else:
                for j, z in enumerate(zs):
                    cfg_z = pp.with_added(config, z)
                    total[j] += slice_values(h, q, cfg_z, zs[j : j + 1])[0]
        return total

    return RandomField(at, label="-DL^-1F", at_add_diag=at_add_diag)
