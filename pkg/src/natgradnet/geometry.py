"""Fisher-Rao geometry of coarse grainings.

Tools for comparing natural gradients on a model of joint distributions
with natural gradients on its coarse-grained image: the Fisher-Rao inner
product, push-forwards and their differentials, the orthogonal
horizontal/vertical decomposition of tangent vectors, isometric Markov
embeddings, a numerical cylindricity test, and the product extensions
that restore gradient invariance for non-cylindrical models.

Parametrised families are passed as a pair of callables:

    dist_fn(params)     -> (N,) strictly positive probability vector
    log_grad_fn(params) -> (N, d) per-config score matrix

so the same machinery drives DAG models, tabular simplices, embedded
simplices, and one-parameter curves.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .fisher import full_fisher_oracle, pseudoinverse


# ---------------------------------------------------------------------------
# coarse grainings, inner products, decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoarseGraining:
    """Surjection Z -> X given as an array of atom labels per z."""

    map_zx: np.ndarray
    n_x: int

    def __post_init__(self):
        m = np.asarray(self.map_zx, dtype=np.int64)
        object.__setattr__(self, "map_zx", m)
        if m.ndim != 1:
            raise ValueError("map_zx must be one-dimensional")
        if self.n_x < 1 or m.min(initial=0) < 0 or (m.size and m.max() >= self.n_x):
            raise ValueError("atom labels out of range")
        present = np.bincount(m, minlength=self.n_x)
        if np.any(present == 0):
            raise ValueError("coarse graining must be onto")

    @property
    def n_z(self) -> int:
        return int(self.map_zx.size)

    def atoms(self) -> list[np.ndarray]:
        return [np.nonzero(self.map_zx == x)[0] for x in range(self.n_x)]

    @classmethod
    def identity(cls, n: int) -> "CoarseGraining":
        return cls(np.arange(n), n)


def visible_coarse_graining(model) -> CoarseGraining:
    """The marginalisation map of a DAG model as a coarse graining."""
    from .objective import visible_index_col
    from .state_space import config_count

    return CoarseGraining(
        visible_index_col(model), config_count(model.space, model.space.visible)
    )


def fisher_inner(p: np.ndarray, V: np.ndarray, W: np.ndarray) -> float:
    """<V, W>_p = sum_s V(s) W(s) / p(s)."""
    p, V, W = (np.asarray(a, dtype=np.float64) for a in (p, V, W))
    if not (p.shape == V.shape == W.shape):
        raise ValueError("p, V, W must share a shape")
    return float(np.sum(V * W / p))


def pushforward(cg: CoarseGraining, p: np.ndarray) -> np.ndarray:
    """Sum probabilities within atoms; preserves total mass."""
    return np.bincount(cg.map_zx, weights=np.asarray(p, dtype=np.float64), minlength=cg.n_x)


def pushforward_diff(cg: CoarseGraining, V: np.ndarray) -> np.ndarray:
    """The differential of the push-forward (same atom sums on tangents)."""
    return pushforward(cg, V)


def horizontal_lift(cg: CoarseGraining, p: np.ndarray, U: np.ndarray) -> np.ndarray:
    """The unique horizontal vector at p whose push-forward is U."""
    px = pushforward(cg, p)
    return np.asarray(p) * (np.asarray(U) / px)[cg.map_zx]


def hv_decompose(
    cg: CoarseGraining, p: np.ndarray, V: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Split V into its horizontal and vertical parts at p.

    V_H(z) = p(z)/p(x) * (atom sum of V), V_V = V - V_H; the parts are
    Fisher-Rao orthogonal, so norms satisfy Pythagoras.
    """
    V = np.asarray(V, dtype=np.float64)
    vh = horizontal_lift(cg, p, pushforward_diff(cg, V))
    return vh, V - vh


def horizontal_inner_invariance(
    cg: CoarseGraining, p: np.ndarray, U_x: np.ndarray, V_x: np.ndarray
) -> tuple[float, float]:
    """(<lift U, lift V>_p, <U, V>_{p_X}); the two sides agree.

    This is the compatibility condition that makes gradients of coarse
    functions survive the push-forward.
    """
    lhs = fisher_inner(p, horizontal_lift(cg, p, U_x), horizontal_lift(cg, p, V_x))
    rhs = fisher_inner(pushforward(cg, p), U_x, V_x)
    return lhs, rhs


# ---------------------------------------------------------------------------
# Markov kernels and embeddings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarkovKernelMatrix:
    """Column-stochastic matrix k(z | x) of shape (|Z|, |X|)."""

    k: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.k, dtype=np.float64)
        object.__setattr__(self, "k", k)
        if k.ndim != 2:
            raise ValueError("kernel must be a matrix")
        if np.any(k < 0):
            raise ValueError("kernel entries must be nonnegative")
        if np.abs(k.sum(axis=0) - 1.0).max() > 1e-12:
            raise ValueError("kernel columns must sum to 1")

    def coupled_with(self, cg: CoarseGraining) -> bool:
        """Support exactly on the atoms: k(z|x) > 0 iff X(z) = x."""
        if self.k.shape != (cg.n_z, cg.n_x):
            return False
        on_atom = self.k[np.arange(cg.n_z), cg.map_zx] > 0
        mask = np.zeros_like(self.k, dtype=bool)
        mask[np.arange(cg.n_z), cg.map_zx] = True
        return bool(on_atom.all() and np.all(self.k[~mask] == 0))


def kernel_from_conditional(cg: CoarseGraining, cond_z: np.ndarray) -> MarkovKernelMatrix:
    """Coupled kernel from per-z conditional probabilities given the atom."""
    cond_z = np.asarray(cond_z, dtype=np.float64)
    k = np.zeros((cg.n_z, cg.n_x))
    k[np.arange(cg.n_z), cg.map_zx] = cond_z
    return MarkovKernelMatrix(k)


def markov_embed(K: MarkovKernelMatrix, cg: CoarseGraining, p_x: np.ndarray) -> np.ndarray:
    """K_*(p)(z) = p(X(z)) k(z | X(z)); a right inverse of the push-forward."""
    if not K.coupled_with(cg):
        raise ValueError("kernel is not coupled with the coarse graining")
    return np.asarray(p_x)[cg.map_zx] * K.k[np.arange(cg.n_z), cg.map_zx]


def markov_embed_diff(K: MarkovKernelMatrix, cg: CoarseGraining, U_x: np.ndarray) -> np.ndarray:
    """dK_*(U)(z) = U(X(z)) k(z | X(z)); isometric for the Fisher-Rao metrics."""
    if not K.coupled_with(cg):
        raise ValueError("kernel is not coupled with the coarse graining")
    return np.asarray(U_x)[cg.map_zx] * K.k[np.arange(cg.n_z), cg.map_zx]


# ---------------------------------------------------------------------------
# parametrised families
# ---------------------------------------------------------------------------

DistFn = Callable[[np.ndarray], np.ndarray]
LogGradFn = Callable[[np.ndarray], np.ndarray]


def model_family(model) -> tuple[DistFn, LogGradFn]:
    """A DAG model as a (dist_fn, log_grad_fn) pair on its full space."""
    return model.joint_probs, model.log_grad_matrix


def tabular_family(n: int) -> tuple[DistFn, LogGradFn]:
    """Softmax parametrisation of the whole simplex P({1..n})."""

    def dist(theta: np.ndarray) -> np.ndarray:
        z = theta - theta.max()
        e = np.exp(z)
        return e / e.sum()

    def log_grad(theta: np.ndarray) -> np.ndarray:
        p = dist(theta)
        return np.eye(n) - p[None, :]

    return dist, log_grad


def embedded_family(
    K: MarkovKernelMatrix, cg: CoarseGraining, base: tuple[DistFn, LogGradFn]
) -> tuple[DistFn, LogGradFn]:
    """The image family K_*(base) inside P(Z); its scores lift atom-wise."""
    base_dist, base_log_grad = base

    def dist(theta: np.ndarray) -> np.ndarray:
        return markov_embed(K, cg, base_dist(theta))

    def log_grad(theta: np.ndarray) -> np.ndarray:
        # ln p(z) = ln q(X(z)) + ln k(z | X(z)); the kernel term is constant in theta
        return base_log_grad(theta)[cg.map_zx]

    return dist, log_grad


def exp_curve_family(p0: np.ndarray, u: np.ndarray) -> tuple[DistFn, LogGradFn]:
    """One-parameter exponential arc t -> p0 * exp(t u) / Z(t) through p0."""
    p0 = np.asarray(p0, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)

    def dist(theta: np.ndarray) -> np.ndarray:
        w = p0 * np.exp(float(theta[0]) * u)
        return w / w.sum()

    def log_grad(theta: np.ndarray) -> np.ndarray:
        p = dist(theta)
        return (u - float(p @ u))[:, None]

    return dist, log_grad


def pushed_family(
    cg: CoarseGraining, family: tuple[DistFn, LogGradFn]
) -> tuple[DistFn, LogGradFn]:
    """The coarse-grained family X_*(M) with its induced scores."""
    dist_fn, log_grad_fn = family

    def dist(theta: np.ndarray) -> np.ndarray:
        return pushforward(cg, dist_fn(theta))

    def log_grad(theta: np.ndarray) -> np.ndarray:
        p = dist_fn(theta)
        jac = p[:, None] * log_grad_fn(theta)  # columns d_i p
        px = dist(theta)
        jac_x = np.zeros((cg.n_x, jac.shape[1]))
        np.add.at(jac_x, cg.map_zx, jac)
        return jac_x / px[:, None]

    return dist, log_grad


def model_jacobian(
    family: tuple[DistFn, LogGradFn], params: np.ndarray
) -> np.ndarray:
    """(N, d) matrix of tangent columns d_i p; each column sums to zero."""
    dist_fn, log_grad_fn = family
    return dist_fn(params)[:, None] * log_grad_fn(params)


def fd_jacobian(dist_fn: DistFn, params: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference Jacobian of a distribution map (oracle)."""
    params = np.asarray(params, dtype=np.float64)
    cols = []
    for i in range(params.size):
        ep = params.copy()
        ep[i] += h
        em = params.copy()
        em[i] -= h
        cols.append((dist_fn(ep) - dist_fn(em)) / (2 * h))
    return np.stack(cols, axis=1)


# ---------------------------------------------------------------------------
# ranks, cylindricity, gradient invariance
# ---------------------------------------------------------------------------


def numerical_rank(M: np.ndarray, rel_tol: float = 1e-9) -> tuple[int, bool]:
    """(rank, unstable) via singular values with a relative cutoff.

    ``unstable`` flags singular values within a decade of the cutoff,
    where the rank decision is fragile.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.size == 0:
        return 0, False
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0, False
    cutoff = rel_tol * s[0]
    rank = int((s >= cutoff).sum())
    unstable = bool(np.any((s > cutoff / 10) & (s < cutoff * 10)))
    return rank, unstable


def _tangent_basis_x(n_x: int) -> np.ndarray:
    """(n_x, n_x - 1) basis of the tangent space of P(X)."""
    basis = np.zeros((n_x, n_x - 1))
    basis[0, :] = -1.0
    basis[np.arange(1, n_x), np.arange(n_x - 1)] = 1.0
    return basis


@dataclass
class CylindricityResult:
    is_cylindrical: bool
    dim_T: int
    dim_TH: int
    dim_TV: int
    rank_unstable: bool


def cylindricity_check(
    jacobian: np.ndarray, cg: CoarseGraining, p: np.ndarray, rank_tol: float = 1e-9
) -> CylindricityResult:
    """Test T = (T cap H_p) + (T cap V_p) by numerical rank arithmetic.

    dim(T cap V) falls out of rank-nullity applied to the push-forward
    restricted to T; dim(T cap H) uses dim(A cap B) =
    dim A + dim B - dim(A + B) with an explicit horizontal basis.
    """
    J = np.asarray(jacobian, dtype=np.float64)
    # scale columns to unit norm so the rank cutoff treats them evenly
    norms = np.linalg.norm(J, axis=0)
    norms[norms == 0] = 1.0
    Jn = J / norms
    dim_T, u1 = numerical_rank(Jn, rank_tol)
    PJ = np.zeros((cg.n_x, J.shape[1]))
    np.add.at(PJ, cg.map_zx, Jn)
    rank_push, u2 = numerical_rank(PJ, rank_tol)
    dim_TV = dim_T - rank_push
    H = np.empty((cg.n_z, cg.n_x - 1))
    bx = _tangent_basis_x(cg.n_x)
    for j in range(cg.n_x - 1):
        H[:, j] = horizontal_lift(cg, p, bx[:, j])
    hn = np.linalg.norm(H, axis=0)
    hn[hn == 0] = 1.0
    H = H / hn
    dim_sum, u3 = numerical_rank(np.concatenate([Jn, H], axis=1), rank_tol)
    dim_TH = dim_T + (cg.n_x - 1) - dim_sum
    return CylindricityResult(
        is_cylindrical=(dim_TH + dim_TV == dim_T),
        dim_T=dim_T,
        dim_TH=dim_TH,
        dim_TV=dim_TV,
        rank_unstable=(u1 or u2 or u3),
    )


def grad_on_model(
    family: tuple[DistFn, LogGradFn],
    params: np.ndarray,
    df: np.ndarray,
    pinv_rel_tol: float = 1e-12,
) -> np.ndarray:
    """Natural gradient of f at p as a tangent vector of the ambient simplex.

    ``df`` holds the per-config derivatives of f at the current point.
    Coefficients solve G L = grad_params f through the Moore-Penrose
    inverse; the returned vector sum_i L_i d_i p does not depend on which
    solution is picked.
    """
    G = full_fisher_oracle(family[0], params, family[1])
    J = model_jacobian(family, params)
    grad_params = J.T @ np.asarray(df, dtype=np.float64)
    L = pseudoinverse(G, pinv_rel_tol) @ grad_params
    return J @ L


def simplex_gradient(p: np.ndarray, df: np.ndarray) -> np.ndarray:
    """Closed-form Fisher-Rao gradient on the full simplex: p (df - p.df)."""
    p = np.asarray(p, dtype=np.float64)
    df = np.asarray(df, dtype=np.float64)
    return p * (df - float(p @ df))


def gradient_invariance_residual(
    family: tuple[DistFn, LogGradFn],
    params: np.ndarray,
    cg: CoarseGraining,
    df_x: np.ndarray,
    pinv_rel_tol: float = 1e-12,
) -> float:
    """Fisher-Rao norm of dX_*(grad^M (f o X_*)) - grad^{M_X} f.

    Vanishes (to numerical precision) exactly for cylindrical models;
    generically of order one on non-cylindrical ones.
    """
    dist_fn, _ = family
    p = dist_fn(params)
    df_z = np.asarray(df_x, dtype=np.float64)[cg.map_zx]
    pushed = pushforward_diff(cg, grad_on_model(family, params, df_z, pinv_rel_tol))
    fam_x = pushed_family(cg, family)
    direct = grad_on_model(fam_x, params, df_x, pinv_rel_tol)
    diff = pushed - direct
    return float(np.sqrt(fisher_inner(pushforward(cg, p), diff, diff)))


def properness_probe(
    family: tuple[DistFn, LogGradFn],
    params: np.ndarray,
    rng: np.random.Generator,
    n_probes: int = 10,
    rel_perturbation: float = 1e-4,
    rank_tol: float = 1e-9,
) -> dict:
    """Flag spurious-critical-point suspects by rank instability.

    Compares the Jacobian rank at the point with ranks at nearby
    perturbed parameters; a drop at the point means the parametrisation
    cannot be trusted to span the tangent space there.  Diagnostic only.
    """
    J = model_jacobian(family, params)
    rank_here, unstable = numerical_rank(J, rank_tol)
    scale = max(1.0, float(np.abs(params).max()))
    nearby = []
    for _ in range(n_probes):
        q = params + rng.standard_normal(params.shape) * rel_perturbation * scale
        nearby.append(numerical_rank(model_jacobian(family, q), rank_tol)[0])
    max_nearby = max(nearby)
    return {
        "rank": rank_here,
        "max_nearby_rank": max_nearby,
        "flagged": rank_here < max_nearby or unstable,
    }


def subspace_hv_split(
    cg: CoarseGraining, p: np.ndarray, basis: np.ndarray, rank_tol: float = 1e-9
) -> tuple[np.ndarray, np.ndarray]:
    """(A^V basis, A^H basis) of the subspace spanned by ``basis`` columns.

    A^V = A cap ker dX_*; A^H is its Fisher-Rao orthocomplement inside A.
    Used to test which subspaces keep the push-forward an isometry on
    their horizontal part.
    """
    A = np.asarray(basis, dtype=np.float64)
    PA = np.zeros((cg.n_x, A.shape[1]))
    np.add.at(PA, cg.map_zx, A)
    # nullspace of the pushed basis = coefficients of vertical members
    u, s, vt = np.linalg.svd(PA)
    cutoff = rank_tol * (s[0] if s.size and s[0] > 0 else 1.0)
    null_dim = A.shape[1] - int((s >= cutoff).sum())
    AV = A @ vt[vt.shape[0] - null_dim :].T if null_dim else np.zeros((A.shape[0], 0))
    # orthocomplement of AV inside A under the Fisher inner product at p
    w = 1.0 / np.asarray(p, dtype=np.float64)
    gram = A.T @ (AV * w[:, None])  # (dim A, dim AV)
    if AV.shape[1]:
        gram_vv = AV.T @ (AV * w[:, None])
        coeff = np.linalg.lstsq(gram_vv, gram.T, rcond=None)[0]
        AH = A - AV @ coeff
        # drop the (numerically) zero columns that were vertical themselves
        keep = np.linalg.norm(AH, axis=0) > rank_tol * max(
            1.0, float(np.linalg.norm(A))
        )
        AH = AH[:, keep]
    else:
        AH = A
    return AV, AH


# ---------------------------------------------------------------------------
# product extensions
# ---------------------------------------------------------------------------

CondFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class ConditionalFamily:
    """Family of coupled conditionals q(z | X(z); eta) on a coarse graining.

    ``cond(eta)`` returns the (N,) vector of q(z | X(z); eta) and
    ``cond_log_grad(eta)`` the (N, d') score matrix in eta.
    """

    cond: CondFn
    cond_log_grad: CondFn
    dim: int


def recognition_conditional_family(recog) -> ConditionalFamily:
    """Recognition model as the conditional family of the product extension."""
    return ConditionalFamily(recog.cond_probs, recog.cond_log_grad_matrix, recog.param_count)


def model_conditional_family(model) -> ConditionalFamily:
    """The model's own conditionals p(z | x; xi') (product extension I)."""
    cg = visible_coarse_graining(model)

    def cond(xi: np.ndarray) -> np.ndarray:
        p = model.joint_probs(xi)
        return p / pushforward(cg, p)[cg.map_zx]

    def cond_log_grad(xi: np.ndarray) -> np.ndarray:
        p = model.joint_probs(xi)
        S = model.log_grad_matrix(xi)
        jac_x = np.zeros((cg.n_x, S.shape[1]))
        np.add.at(jac_x, cg.map_zx, p[:, None] * S)
        S_x = jac_x / pushforward(cg, p)[:, None]
        return S - S_x[cg.map_zx]

    return ConditionalFamily(cond, cond_log_grad, model.param_count)


@dataclass
class ProductExtension:
    """Assembled point and split tangents of a product extension.

    ``horizontal``/``vertical`` hold the tangent columns of the xi and
    eta directions; ``gh`` is the Gram matrix of the horizontal block
    (equal to the marginal Fisher of xi -> p(x; xi)) and ``gv`` of the
    vertical block.
    """

    point: np.ndarray
    horizontal: np.ndarray
    vertical: np.ndarray
    gh: np.ndarray
    gv: np.ndarray

    def jacobian(self) -> np.ndarray:
        return np.concatenate([self.horizontal, self.vertical], axis=1)

    def max_cross_inner(self) -> float:
        """Largest |<H_i, V_j>| at the assembled point (0 in exact arithmetic)."""
        w = 1.0 / self.point
        cross = self.horizontal.T @ (self.vertical * w[:, None])
        return float(np.abs(cross).max()) if cross.size else 0.0


def product_extension_assemble(
    model, cond_family: ConditionalFamily, xi: np.ndarray, eta: np.ndarray
) -> ProductExtension:
    """Build p(z; xi, eta) = p(x; xi) q(z | x; eta) with its H/V tangents.

    Horizontal tangents move the marginal with the conditional frozen;
    vertical tangents move the conditional with the marginal frozen.
    They are Fisher-Rao orthogonal and the joint metric is block
    diagonal in (xi, eta).
    """
    cg = visible_coarse_graining(model)
    p_z = model.joint_probs(xi)
    p_x = pushforward(cg, p_z)
    q_z = cond_family.cond(eta)
    point = p_x[cg.map_zx] * q_z

    S = model.log_grad_matrix(xi)
    jac_x = np.zeros((cg.n_x, S.shape[1]))
    np.add.at(jac_x, cg.map_zx, p_z[:, None] * S)  # columns d_i p(x; xi)
    horizontal = jac_x[cg.map_zx] * q_z[:, None]
    vertical = point[:, None] * cond_family.cond_log_grad(eta)

    gh = jac_x.T @ (jac_x / p_x[:, None])
    gv = vertical.T @ (vertical / point[:, None])
    return ProductExtension(point, horizontal, vertical, 0.5 * (gh + gh.T), 0.5 * (gv + gv.T))


def fit_jacobian_fd(
    eta_of_xi: Callable[[np.ndarray], np.ndarray], xi: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """(d', d) central finite-difference Jacobian of the fit xi -> eta(xi)."""
    xi = np.asarray(xi, dtype=np.float64)
    cols = []
    for i in range(xi.size):
        ep = xi.copy()
        ep[i] += h
        em = xi.copy()
        em[i] -= h
        cols.append((eta_of_xi(ep) - eta_of_xi(em)) / (2 * h))
    return np.stack(cols, axis=1)


def analytic_fit_jacobian(model, xi: np.ndarray, recog) -> np.ndarray:
    """(d', d) Jacobian of the log-conditional tabular fit, in closed form.

    With logits eta_(k; c, y) = ln p(x_r = y | x_pa' = c; xi), the chain
    rule gives d eta / d xi_i = E[s_i | y, c] - E[s_i | c] for the model
    score s_i, both expectations enumerable.
    """
    p = model.joint_probs(xi)
    S = model.log_grad_matrix(xi)
    pS = p[:, None] * S
    rows = []
    for k, r in enumerate(recog.hidden):
        card = model.space.cardinalities[r]
        joint_col = recog._pa_col(k) * card + recog._state_col(k)
        n_rows = int(np.prod(recog.parent_cards(k))) if recog.parents[k] else 1
        mass_cy = np.bincount(joint_col, weights=p, minlength=n_rows * card)
        num_cy = np.zeros((n_rows * card, S.shape[1]))
        np.add.at(num_cy, joint_col, pS)
        e_cy = num_cy / mass_cy[:, None]
        mass_c = np.bincount(recog._pa_col(k), weights=p, minlength=n_rows)
        num_c = np.zeros((n_rows, S.shape[1]))
        np.add.at(num_c, recog._pa_col(k), pS)
        e_c = num_c / mass_c[:, None]
        rows.append(e_cy - np.repeat(e_c, card, axis=0))
    return np.concatenate(rows, axis=0)


def gh_via_diffcompl(
    model,
    xi: np.ndarray,
    recog,
    eta_of_xi: Callable[[np.ndarray], np.ndarray] | None = None,
    jac_mode: str = "fd",
    h: float = 1e-5,
) -> dict:
    """Marginal Fisher via the correction G^H = G - J^T G^V J.

    G is the (block-diagonal) Fisher of the joint model, G^V the vertical
    Gram at the fitted recognition point, and J the Jacobian of the fit
    xi -> eta(xi).  The correction term mixes node blocks: the returned
    ``off_block_norms`` matrix records the Frobenius norm of each (r, s)
    block of J^T G^V J, exhibiting how the coupling overwrites the block
    structure of G.
    """
    from .fisher import model_fisher_oracle
    from .wake_sleep import exact_posterior_fit

    if eta_of_xi is None:
        eta_of_xi = lambda v: exact_posterior_fit(model, v, recog)
    eta0 = eta_of_xi(xi)
    G = model_fisher_oracle(model, xi)
    ext = product_extension_assemble(model, recognition_conditional_family(recog), xi, eta0)
    if jac_mode == "fd":
        J = fit_jacobian_fd(eta_of_xi, xi, h)
    elif jac_mode == "analytic":
        J = analytic_fit_jacobian(model, xi, recog)
    else:
        raise ValueError(f"unknown jac_mode {jac_mode!r}")
    correction = J.T @ ext.gv @ J
    gh = G - correction
    n_nodes = model.dag.node_count
    off = np.zeros((n_nodes, n_nodes))
    for r in range(n_nodes):
        for s in range(n_nodes):
            off[r, s] = np.linalg.norm(correction[model.block_slice(r), model.block_slice(s)])
    return {
        "gh": 0.5 * (gh + gh.T),
        "g": G,
        "gv": ext.gv,
        "jacobian": J,
        "off_block_norms": off,
    }
