"""The learning objective E(xi) = D(p* || p_V(xi)) and its gradients.

The Euclidean gradient has the local form

    dE/dxi_(r;i) = -sum_{x_pa, x_r} p*(x_pa, x_r; xi) d_i ln k^r(x_r | x_pa)

where p*(x_V, x_H; xi) = p*(x_V) p(x_H | x_V; xi) reweights the model
joint by the target on the visible units.  The exact version enumerates
that expectation; the Monte Carlo version averages scores over samples
from any posterior sampler.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dag_model import DagModel, JointTable
from .fisher import block_fisher, pseudoinverse
from .state_space import config_count


class NumericsError(RuntimeError):
    """Raised when training produces non-finite values."""


def _probs(x) -> np.ndarray:
    if isinstance(x, JointTable):
        return x.probs
    return np.asarray(x, dtype=np.float64)


def kl_divergence(p, q) -> float:
    """Kullback-Leibler divergence sum_x p(x) ln(p(x)/q(x))."""
    p, q = _probs(p), _probs(q)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    if np.any(q <= 0):
        raise ValueError("KL divergence needs strictly positive q")
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def check_target(model: DagModel, target) -> np.ndarray:
    """Validate a target distribution over the visible units.

    Zero entries are allowed (point targets are legitimate); the model
    side stays strictly positive, so the objective remains finite.
    """
    target = _probs(target)
    n = config_count(model.space, model.space.visible)
    if target.shape != (n,):
        raise ValueError(f"target must have {n} entries, got shape {target.shape}")
    if np.any(target < 0):
        raise ValueError("target entries must be nonnegative")
    if abs(float(target.sum()) - 1.0) > 1e-12:
        raise ValueError("target must sum to 1 within 1e-12")
    return target


def visible_index_col(model: DagModel) -> np.ndarray:
    from .state_space import subset_index_of_joint

    return subset_index_of_joint(model.space, model.space.visible)


def objective_E(model: DagModel, params: np.ndarray, target) -> float:
    """D(p* || visible marginal of the model)."""
    target = check_target(model, target)
    probs = model.joint_probs(params)
    p_vis = np.bincount(visible_index_col(model), weights=probs, minlength=len(target))
    return kl_divergence(target, p_vis)


def target_weighted_joint(model: DagModel, params: np.ndarray, target) -> np.ndarray:
    """p*(x_V, x_H; xi) = p*(x_V) p(x_H | x_V; xi) over the full space."""
    target = check_target(model, target)
    probs = model.joint_probs(params)
    vis_col = visible_index_col(model)
    p_vis = np.bincount(vis_col, weights=probs, minlength=len(target))
    return probs * (target / p_vis)[vis_col]


def euclidean_grad_exact(model: DagModel, params: np.ndarray, target) -> np.ndarray:
    """Exact Euclidean gradient of E, component (r;i) = -E_{p*_xi}[d_i ln k^r]."""
    pstar = target_weighted_joint(model, params, target)
    return -(model.log_grad_matrix(params).T @ pstar)


def euclidean_grad_mc(
    model: DagModel,
    params: np.ndarray,
    target,
    posterior_sampler: Callable[[int, np.random.Generator], np.ndarray],
    n_samples: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Monte Carlo gradient estimate from posterior samples.

    ``posterior_sampler(n, rng)`` must return an (n, n_units) state array
    with x_V distributed as p* and x_H as the clamped conditional; the
    estimate is then unbiased for :func:`euclidean_grad_exact`.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    check_target(model, target)
    states = posterior_sampler(n_samples, rng)
    scores = model.config_scores(params, states)
    return -scores.mean(axis=0)


def natural_grad(
    model: DagModel,
    params: np.ndarray,
    target,
    mode: str = "exact",
    pinv_rel_tol: float = 1e-12,
    posterior_sampler: Callable[[int, np.random.Generator], np.ndarray] | None = None,
    n_samples: int = 1000,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Per-node natural gradient L_r = G_r^+ grad_{xi_r} E, concatenated.

    The Fisher blocks are always computed by exact enumeration; ``mode``
    selects how the Euclidean gradient is obtained ("exact" or "mc").
    """
    if mode == "exact":
        grad = euclidean_grad_exact(model, params, target)
    elif mode == "mc":
        if posterior_sampler is None or rng is None:
            raise ValueError("mc mode needs a posterior_sampler and rng")
        grad = euclidean_grad_mc(model, params, target, posterior_sampler, n_samples, rng)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    bm = block_fisher(model, params)
    out = np.empty_like(grad)
    for r in range(model.dag.node_count):
        sl = model.block_slice(r)
        out[sl] = pseudoinverse(bm.blocks[r], pinv_rel_tol) @ grad[sl]
    return out


@dataclass
class TrainConfig:
    """Fixed-step descent schedule; the defaults favour reproducibility."""

    step_size: float = 0.05
    max_iters: int = 5000
    grad_mode: str = "euclidean"  # or "natural"
    expectation_mode: str = "exact"  # or "mc"
    n_samples: int = 1000
    pinv_rel_tol: float = 1e-12
    stop_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.step_size < 0:
            raise ValueError("step_size must be >= 0")
        if self.grad_mode not in ("euclidean", "natural"):
            raise ValueError(f"unknown grad_mode {self.grad_mode!r}")
        if self.expectation_mode not in ("exact", "mc"):
            raise ValueError(f"unknown expectation_mode {self.expectation_mode!r}")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


@dataclass
class Trajectory:
    """Per-iteration record of a descent run (row 0 is the initial point)."""

    iters: np.ndarray
    E: np.ndarray
    grad_norm: np.ndarray
    params: list[np.ndarray] = field(repr=False)

    @property
    def final_params(self) -> np.ndarray:
        return self.params[-1]


def train(
    model: DagModel,
    params0: np.ndarray,
    target,
    config: TrainConfig,
    posterior_sampler_factory: Callable[..., Callable] | None = None,
) -> Trajectory:
    """Fixed-step descent xi <- xi - step * direction.

    Stops at ``max_iters`` or when the gradient norm falls below
    ``stop_tol``; aborts with :class:`NumericsError` on non-finite
    values.  With ``expectation_mode="mc"``, fresh posterior samples are
    drawn each iteration from ``posterior_sampler_factory(model, params)``.
    """
    target = check_target(model, target)
    params = model.check_params(params0).copy()
    rng = np.random.default_rng(config.seed)
    iters, es, norms, history = [], [], [], []

    for it in range(config.max_iters + 1):
        try:
            e = objective_E(model, params, target)
            if config.expectation_mode == "exact":
                grad = euclidean_grad_exact(model, params, target)
            else:
                sampler = posterior_sampler_factory(model, params)
                grad = euclidean_grad_mc(
                    model, params, target, sampler, config.n_samples, rng
                )
        except ValueError as err:
            # saturated kernels underflow the marginal before producing NaN
            raise NumericsError(f"evaluation failed at iteration {it}: {err}") from err
        if not (np.isfinite(e) and np.all(np.isfinite(grad))):
            raise NumericsError(f"non-finite objective or gradient at iteration {it}")
        if config.grad_mode == "natural":
            bm = block_fisher(model, params)
            direction = np.empty_like(grad)
            for r in range(model.dag.node_count):
                sl = model.block_slice(r)
                direction[sl] = pseudoinverse(bm.blocks[r], config.pinv_rel_tol) @ grad[sl]
        else:
            direction = grad
        gnorm = float(np.linalg.norm(grad))
        iters.append(it)
        es.append(e)
        norms.append(gnorm)
        history.append(params.copy())
        if it == config.max_iters or gnorm < config.stop_tol:
            break
        params = params - config.step_size * direction

    return Trajectory(
        np.asarray(iters), np.asarray(es), np.asarray(norms), history
    )
