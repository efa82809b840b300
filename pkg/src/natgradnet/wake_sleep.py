"""Recognition models and the wake-sleep updates.

A recognition model q(x_H | x_V; eta) factorises over its own DAG whose
hidden nodes may condition on visible units and on earlier hidden units.
The wake phase updates the generative parameters using samples from
p*(x_V) q(x_H | x_V; eta); the sleep phase updates eta using samples
from the generative model alone, descending the recognition gap

    D(xi || eta) = sum_{x_V} p(x_V; xi)
                   sum_{x_H} p(x_H | x_V; xi) ln [p(x_H|x_V;xi) / q(x_H|x_V;eta)].

When eta reproduces the exact posterior, the wake gradient IS the
gradient of E, which is why running sleep to convergence between wake
steps turns wake-sleep into plain (natural) gradient descent on E.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dag_model import (
    Dag,
    DagModel,
    KernelFamily,
    KernelSpec,
    TABULAR_LOGIT,
    kernel_log_grad_table,
    kernel_param_dim,
    kernel_table,
    validate_dag,
)
from .fisher import pseudoinverse
from .objective import NumericsError, check_target, euclidean_grad_exact, objective_E
from .state_space import (
    Config,
    ConfigSpaceError,
    StateSpace,
    _strides,
    config_count,
    enumerate_configs,
    subset_index_of_joint,
)


class RepresentabilityError(ValueError):
    """The recognition structure cannot express the exact posterior."""

    def __init__(self, message: str, gap: float):
        super().__init__(message)
        self.gap = gap


class RecognitionModel:
    """Factorised conditional family q(x_H | x_V; eta) on a model's space.

    ``parents[k]`` lists the conditioning units (visible or hidden) of
    the k-th hidden unit in ascending hidden order; hidden-to-hidden
    edges must be acyclic.  Parameter blocks follow ascending hidden
    unit order.
    """

    def __init__(
        self,
        space: StateSpace,
        parents: Sequence[tuple[int, ...]],
        kernels: Sequence[KernelSpec] | None = None,
    ):
        self.space = space
        self.hidden = tuple(space.hidden)
        if len(parents) != len(self.hidden):
            raise ConfigSpaceError("one parent list per hidden unit is required")
        self.parents = tuple(tuple(int(p) for p in ps) for ps in parents)
        for r, ps in zip(self.hidden, self.parents):
            for p in ps:
                space.check_units((p,))
                if p == r:
                    raise ConfigSpaceError(f"hidden unit {r} cannot condition on itself")
        if kernels is None:
            kernels = [TABULAR_LOGIT] * len(self.hidden)
        self.kernels = tuple(kernels)
        # acyclicity over hidden units (visible parents are exogenous)
        hpos = {u: k for k, u in enumerate(self.hidden)}
        hdag = Dag(
            tuple(
                tuple(hpos[p] for p in ps if p in hpos) for ps in self.parents
            )
        )
        self.hidden_topo = tuple(self.hidden[k] for k in validate_dag(hdag))
        cards = space.cardinalities
        self.block_dims = tuple(
            kernel_param_dim(k, len(ps), [cards[p] for p in ps], cards[r])
            for k, ps, r in zip(self.kernels, self.parents, self.hidden)
        )
        offsets = np.zeros(len(self.hidden) + 1, dtype=np.int64)
        np.cumsum(self.block_dims, out=offsets[1:])
        self.block_offsets = offsets
        self.param_count = int(offsets[-1])
        self._pa_cols: dict[int, np.ndarray] = {}
        self._state_cols: dict[int, np.ndarray] = {}

    def block_slice(self, k: int) -> slice:
        return slice(int(self.block_offsets[k]), int(self.block_offsets[k + 1]))

    def check_params(self, eta: np.ndarray) -> np.ndarray:
        eta = np.asarray(eta, dtype=np.float64)
        if eta.shape != (self.param_count,):
            raise ValueError(
                f"recognition parameters must have shape ({self.param_count},)"
            )
        return eta

    def parent_cards(self, k: int) -> tuple[int, ...]:
        return tuple(self.space.cardinalities[p] for p in self.parents[k])

    def kernel_table(self, k: int, eta: np.ndarray) -> np.ndarray:
        eta = self.check_params(eta)
        return kernel_table(
            self.kernels[k],
            self.parent_cards(k),
            self.space.cardinalities[self.hidden[k]],
            eta[self.block_slice(k)],
        )

    def _pa_col(self, k: int) -> np.ndarray:
        if k not in self._pa_cols:
            self._pa_cols[k] = subset_index_of_joint(self.space, self.parents[k])
        return self._pa_cols[k]

    def _state_col(self, k: int) -> np.ndarray:
        if k not in self._state_cols:
            self._state_cols[k] = subset_index_of_joint(self.space, (self.hidden[k],))
        return self._state_cols[k]

    def cond_probs(self, eta: np.ndarray) -> np.ndarray:
        """(N,) values q(x_H(z) | x_V(z); eta) over the full config space."""
        n_joint = config_count(self.space, self.space.units)
        logq = np.zeros(n_joint)
        for k in range(len(self.hidden)):
            ktab = self.kernel_table(k, eta)
            logq += np.log(ktab[self._pa_col(k), self._state_col(k)])
        return np.exp(logq)

    def cond_log_grad_matrix(self, eta: np.ndarray) -> np.ndarray:
        """(N, d') per-config scores d ln q / d eta."""
        eta = self.check_params(eta)
        n_joint = config_count(self.space, self.space.units)
        out = np.empty((n_joint, self.param_count))
        for k in range(len(self.hidden)):
            glt = kernel_log_grad_table(
                self.kernels[k],
                self.parent_cards(k),
                self.space.cardinalities[self.hidden[k]],
                eta[self.block_slice(k)],
            )
            out[:, self.block_slice(k)] = glt[:, self._pa_col(k), self._state_col(k)].T
        return out

    def sample_hidden(
        self, eta: np.ndarray, states: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray:
        """Fill the hidden columns of ``states`` by ancestral sampling."""
        eta = self.check_params(eta)
        n = states.shape[0]
        for r in self.hidden_topo:
            k = self.hidden.index(r)
            ktab = self.kernel_table(k, eta)
            strides = _strides(self.parent_cards(k))
            pa_idx = np.zeros(n, dtype=np.int64)
            for pos, p in enumerate(self.parents[k]):
                pa_idx += states[:, p] * strides[pos]
            cdf = np.cumsum(ktab[pa_idx], axis=1)
            u = rng.random(n)
            states[:, r] = np.minimum(
                (u[:, None] >= cdf).sum(axis=1), self.space.cardinalities[r] - 1
            )
        return states


def chain_recognition(model: DagModel) -> RecognitionModel:
    """Tabular recognition with pa'(r) = V plus all earlier hidden units.

    Rich enough to represent every posterior of the generative model, so
    :func:`exact_posterior_fit` always succeeds on it.
    """
    hidden = model.space.hidden
    visible = model.space.visible
    parents = [tuple(visible) + tuple(h for h in hidden if h < r) for r in hidden]
    return RecognitionModel(model.space, parents)


def recog_conditional(recog: RecognitionModel, eta: np.ndarray, x_v: Config) -> np.ndarray:
    """Distribution over hidden configurations given the visible states."""
    for u in recog.space.visible:
        if u not in x_v.units:
            raise ConfigSpaceError(f"visible unit {u} missing from conditioning config")
    hidden = recog.hidden
    hid_cfgs = enumerate_configs(recog.space, hidden)
    states = np.zeros((len(hid_cfgs), recog.space.unit_count), dtype=np.int64)
    for u in x_v.units:
        states[:, u] = x_v.state_of(u)
    states[:, list(hidden)] = hid_cfgs
    logq = np.zeros(len(hid_cfgs))
    for k in range(len(hidden)):
        ktab = recog.kernel_table(k, eta)
        strides = _strides(recog.parent_cards(k))
        pa_idx = np.zeros(len(hid_cfgs), dtype=np.int64)
        for pos, p in enumerate(recog.parents[k]):
            pa_idx += states[:, p] * strides[pos]
        logq += np.log(ktab[pa_idx, states[:, hidden[k]]])
    return np.exp(logq)


def recognition_gap(
    model: DagModel, xi: np.ndarray, recog: RecognitionModel, eta: np.ndarray
) -> float:
    """D(xi || eta): expected KL from the true posterior to the recognition."""
    p = model.joint_probs(xi)
    from .objective import visible_index_col

    vis_col = visible_index_col(model)
    p_vis = np.bincount(vis_col, weights=p)
    log_post = np.log(p) - np.log(p_vis[vis_col])
    log_q = np.log(recog.cond_probs(eta))
    return float(np.sum(p * (log_post - log_q)))


def _wake_weights(model, recog, eta, target) -> np.ndarray:
    """q*(x_V, x_H; eta) = p*(x_V) q(x_H | x_V; eta) over the full space."""
    from .objective import visible_index_col

    target = check_target(model, target)
    return target[visible_index_col(model)] * recog.cond_probs(eta)


def wake_gradient(
    model: DagModel,
    xi: np.ndarray,
    recog: RecognitionModel,
    eta: np.ndarray,
    target,
    mode: str = "exact",
    n_samples: int = 1000,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Approximate gradient of E: component (r;i) = -E_{q*}[d_i ln k^r].

    Exact (equal to the true gradient) whenever eta matches the model's
    posterior.  ``mode="mc"`` samples x_V from the target and x_H from
    the recognition model instead of enumerating.
    """
    if mode == "exact":
        qstar = _wake_weights(model, recog, eta, target)
        return -(model.log_grad_matrix(xi).T @ qstar)
    if mode != "mc":
        raise ValueError(f"unknown mode {mode!r}")
    if rng is None:
        raise ValueError("mc mode needs an rng")
    target = check_target(model, target)
    from .sampler import draw_from_table

    vis_cfgs = enumerate_configs(model.space, model.space.visible)
    states = np.zeros((n_samples, model.space.unit_count), dtype=np.int64)
    states[:, list(model.space.visible)] = vis_cfgs[draw_from_table(target, n_samples, rng)]
    recog.sample_hidden(eta, states, rng)
    return -model.config_scores(xi, states).mean(axis=0)


def sleep_gradient(
    model: DagModel,
    xi: np.ndarray,
    recog: RecognitionModel,
    eta: np.ndarray,
    mode: str = "exact",
    n_samples: int = 1000,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Gradient of D(xi || .) in eta: component (r;j) = -E_{p_xi}[d_j ln l^r].

    Sampling (``mode="mc"``) uses the generative model only; the target
    distribution never enters the sleep phase.
    """
    if mode == "exact":
        p = model.joint_probs(xi)
        return -(recog.cond_log_grad_matrix(eta).T @ p)
    if mode != "mc":
        raise ValueError(f"unknown mode {mode!r}")
    if rng is None:
        raise ValueError("mc mode needs an rng")
    from .dag_model import ancestral_samples

    states = ancestral_samples(model, xi, n_samples, rng)
    return -recog_config_scores(recog, eta, states).mean(axis=0)


def recog_config_scores(recog: RecognitionModel, eta: np.ndarray, states: np.ndarray) -> np.ndarray:
    """(n, d') recognition score rows at the given full configurations."""
    eta = recog.check_params(eta)
    states = np.asarray(states, dtype=np.int64)
    out = np.empty((states.shape[0], recog.param_count))
    for k in range(len(recog.hidden)):
        glt = kernel_log_grad_table(
            recog.kernels[k],
            recog.parent_cards(k),
            recog.space.cardinalities[recog.hidden[k]],
            eta[recog.block_slice(k)],
        )
        strides = _strides(recog.parent_cards(k))
        pa_idx = np.zeros(states.shape[0], dtype=np.int64)
        for pos, p in enumerate(recog.parents[k]):
            pa_idx += states[:, p] * strides[pos]
        out[:, recog.block_slice(k)] = glt[:, pa_idx, states[:, recog.hidden[k]]].T
    return out


def exact_posterior_fit(
    model: DagModel, xi: np.ndarray, recog: RecognitionModel
) -> np.ndarray:
    """eta minimising the recognition gap for tabular recognition kernels.

    The gap is additive over factors, so each l^r is fit independently to
    the enumerated conditional p(x_r | x_pa'(r); xi); logits are the log
    conditionals.  Raises :class:`RepresentabilityError` when the
    residual gap exceeds 1e-8 (the structure cannot express the
    posterior, e.g. a missing explaining-away edge).
    """
    p = model.joint_probs(xi)
    eta = np.empty(recog.param_count)
    for k, r in enumerate(recog.hidden):
        if recog.kernels[k].family is not KernelFamily.TABULAR_LOGIT:
            raise ValueError("exact_posterior_fit needs TABULAR_LOGIT recognition kernels")
        card = recog.space.cardinalities[r]
        joint_col = recog._pa_col(k) * card + recog._state_col(k)
        n_rows = int(np.prod(recog.parent_cards(k))) if recog.parents[k] else 1
        table = np.bincount(joint_col, weights=p, minlength=n_rows * card).reshape(
            n_rows, card
        )
        cond = table / table.sum(axis=1, keepdims=True)
        eta[recog.block_slice(k)] = np.log(cond).reshape(-1)
    gap = recognition_gap(model, xi, recog, eta)
    if gap > 1e-8:
        raise RepresentabilityError(
            f"recognition structure leaves a residual gap of {gap:.3e}", gap
        )
    return eta


def recog_fisher_block(
    model: DagModel, xi: np.ndarray, recog: RecognitionModel, eta: np.ndarray, k: int
) -> np.ndarray:
    """Fisher block of hidden unit k of the recognition model.

    Same local form as the generative blocks, with the conditioning
    distribution p(x_pa'(r); xi) enumerated under the generative model.
    """
    p = model.joint_probs(xi)
    n_rows = int(np.prod(recog.parent_cards(k))) if recog.parents[k] else 1
    p_pa = np.bincount(recog._pa_col(k), weights=p, minlength=n_rows)
    ktab = recog.kernel_table(k, eta)
    glt = kernel_log_grad_table(
        recog.kernels[k],
        recog.parent_cards(k),
        recog.space.cardinalities[recog.hidden[k]],
        eta[recog.block_slice(k)],
    )
    g = np.einsum("c,cx,icx,jcx->ij", p_pa, ktab, glt, glt)
    return 0.5 * (g + g.T)


@dataclass
class WakeSleepSchedule:
    """Asymmetric phase schedule: K sleep steps per wake step.

    ``exact_resleep`` is the K -> infinity limit (refit eta exactly each
    iteration); ``sleep_gap_tol`` stops the sleep loop early once the
    recognition gap falls below it.
    """

    iters: int = 100
    k_sleep_per_wake: int = 1
    step_xi: float = 0.05
    step_eta: float = 0.05
    natural: bool = False
    pinv_rel_tol: float = 1e-12
    mode: str = "exact"  # or "mc"
    n_samples: int = 1000
    sleep_gap_tol: float | None = None
    exact_resleep: bool = False

    def __post_init__(self):
        if self.k_sleep_per_wake < 1:
            raise ValueError("k_sleep_per_wake must be >= 1")
        if self.iters < 0:
            raise ValueError("iters must be >= 0")
        if self.mode not in ("exact", "mc"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class WakeSleepTrajectory:
    iters: np.ndarray
    E: np.ndarray
    gap: np.ndarray
    wake_norm: np.ndarray
    sleep_norm: np.ndarray
    xi: np.ndarray
    eta: np.ndarray


def _natural_direction_xi(model, xi, grad, rel_tol):
    from .fisher import block_fisher

    bm = block_fisher(model, xi)
    out = np.empty_like(grad)
    for r in range(model.dag.node_count):
        sl = model.block_slice(r)
        out[sl] = pseudoinverse(bm.blocks[r], rel_tol) @ grad[sl]
    return out


def _natural_direction_eta(model, xi, recog, eta, grad, rel_tol):
    out = np.empty_like(grad)
    for k in range(len(recog.hidden)):
        sl = recog.block_slice(k)
        block = recog_fisher_block(model, xi, recog, eta, k)
        out[sl] = pseudoinverse(block, rel_tol) @ grad[sl]
    return out


def wake_sleep_train(
    model: DagModel,
    xi0: np.ndarray,
    recog: RecognitionModel,
    eta0: np.ndarray,
    target,
    schedule: WakeSleepSchedule,
    rng: np.random.Generator | None = None,
) -> WakeSleepTrajectory:
    """Alternate K sleep steps on eta with one wake step on xi.

    ``natural=True`` applies the blockwise pseudoinverse of the matching
    block Fisher (generative blocks for xi, recognition blocks for eta)
    to each phase's gradient.  Records E(xi), the recognition gap, and
    both gradient norms once per wake iteration.
    """
    target = check_target(model, target)
    xi = model.check_params(xi0).copy()
    eta = recog.check_params(eta0).copy()
    if rng is None:
        rng = np.random.default_rng(0)

    iters, es, gaps, wnorms, snorms = [], [], [], [], []
    xis, etas = [xi.copy()], [eta.copy()]

    def record(it, wn, sn):
        iters.append(it)
        es.append(objective_E(model, xi, target))
        gaps.append(recognition_gap(model, xi, recog, eta))
        wnorms.append(wn)
        snorms.append(sn)

    record(0, np.nan, np.nan)
    for it in range(1, schedule.iters + 1):
        sn = np.nan
        if schedule.exact_resleep:
            eta = exact_posterior_fit(model, xi, recog)
            sn = 0.0
        else:
            for _ in range(schedule.k_sleep_per_wake):
                g_eta = sleep_gradient(
                    model, xi, recog, eta, schedule.mode, schedule.n_samples, rng
                )
                if not np.all(np.isfinite(g_eta)):
                    raise NumericsError(f"non-finite sleep gradient at iteration {it}")
                sn = float(np.linalg.norm(g_eta))
                if schedule.natural:
                    g_eta = _natural_direction_eta(
                        model, xi, recog, eta, g_eta, schedule.pinv_rel_tol
                    )
                eta = eta - schedule.step_eta * g_eta
                if (
                    schedule.sleep_gap_tol is not None
                    and recognition_gap(model, xi, recog, eta) < schedule.sleep_gap_tol
                ):
                    break
        g_xi = wake_gradient(
            model, xi, recog, eta, target, schedule.mode, schedule.n_samples, rng
        )
        if not np.all(np.isfinite(g_xi)):
            raise NumericsError(f"non-finite wake gradient at iteration {it}")
        wn = float(np.linalg.norm(g_xi))
        if schedule.natural:
            g_xi = _natural_direction_xi(model, xi, g_xi, schedule.pinv_rel_tol)
        xi = xi - schedule.step_xi * g_xi
        record(it, wn, sn)
        xis.append(xi.copy())
        etas.append(eta.copy())

    return WakeSleepTrajectory(
        np.asarray(iters),
        np.asarray(es),
        np.asarray(gaps),
        np.asarray(wnorms),
        np.asarray(snorms),
        np.asarray(xis),
        np.asarray(etas),
    )
