"""Fisher information for DAG models.

The information matrix of a DAG-factorised model is block diagonal, one
symmetric d_r x d_r block per node:

    g_(r;i,j) = sum_{x_pa} p(x_pa; xi) sum_{x_r} k^r(x_r | x_pa; xi_r)
                * d_i ln k^r * d_j ln k^r

:func:`local_fisher_block` evaluates that formula directly, while
:func:`full_fisher_oracle` builds the dense matrix by brute-force
summation over the whole configuration space and knows nothing about the
block structure.  The two are kept as independent routes so the block
claim can be verified numerically rather than assumed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dag_model import DagModel, KernelFamily, exp_family, sigmoid_as_expfam
from .state_space import enumerate_configs, binary_space


@dataclass
class BlockMatrix:
    """Symmetric block-diagonal matrix, one block per node (ascending order)."""

    blocks: list[np.ndarray]

    def __post_init__(self):
        self.blocks = [np.asarray(b, dtype=np.float64) for b in self.blocks]
        for b in self.blocks:
            if b.ndim != 2 or b.shape[0] != b.shape[1]:
                raise ValueError(f"blocks must be square, got shape {b.shape}")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(b.shape[0] for b in self.blocks)

    @property
    def dim(self) -> int:
        return sum(self.dims)

    def block_slices(self) -> list[slice]:
        offsets = np.concatenate([[0], np.cumsum(self.dims)])
        return [slice(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:])]

    def dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        for sl, b in zip(self.block_slices(), self.blocks):
            out[sl, sl] = b
        return out


def parent_marginal(model: DagModel, params: np.ndarray, r: int) -> np.ndarray:
    """p(x_pa(r); xi) by exact enumeration, indexed like the kernel table rows."""
    probs = model.joint_probs(params)
    n_pa_cfg = model.kernel_table(r, params).shape[0]
    return np.bincount(model.pa_index_col(r), weights=probs, minlength=n_pa_cfg)


def local_fisher_block(model: DagModel, params: np.ndarray, r: int) -> np.ndarray:
    """The d_r x d_r Fisher block of node r (symmetric, PSD)."""
    p_pa = parent_marginal(model, params, r)
    ktab = model.kernel_table(r, params)
    glt = model.kernel_log_grad_table(r, params)
    g = np.einsum("c,cx,icx,jcx->ij", p_pa, ktab, glt, glt)
    return 0.5 * (g + g.T)


def block_fisher(model: DagModel, params: np.ndarray) -> BlockMatrix:
    """All local Fisher blocks, assembled in node order."""
    return BlockMatrix([local_fisher_block(model, params, r) for r in range(model.dag.node_count)])


def full_fisher_oracle(
    dist_fn: Callable[[np.ndarray], np.ndarray],
    params: np.ndarray,
    log_grad_fn: Callable[[np.ndarray], np.ndarray],
) -> np.ndarray:
    """Dense Fisher matrix g_ij = sum_x p(x) d_i ln p(x) d_j ln p(x).

    ``dist_fn`` maps parameters to the full probability vector and
    ``log_grad_fn`` to the (N, d) per-config score matrix.  Direct
    summation over all configurations; this is the brute-force oracle
    against which the block formula is checked.
    """
    p = np.asarray(dist_fn(params), dtype=np.float64)
    scores = np.asarray(log_grad_fn(params), dtype=np.float64)
    g = scores.T @ (scores * p[:, None])
    return 0.5 * (g + g.T)


def model_fisher_oracle(model: DagModel, params: np.ndarray) -> np.ndarray:
    """Brute-force dense Fisher of a DAG model (no block shortcut)."""
    return full_fisher_oracle(model.joint_probs, params, model.log_grad_matrix)


def expfam_fisher_block(model: DagModel, params: np.ndarray, r: int) -> np.ndarray:
    """Fisher block as a mixture of conditional statistic covariances.

    Valid for EXP_FAMILY nodes and, through the pair-statistic rewriting,
    for SIGMOID nodes; algebraically equal to :func:`local_fisher_block`.
    """
    spec = model.kernels[r]
    if spec.family is KernelFamily.SIGMOID:
        spec = sigmoid_as_expfam(len(model.dag.parents[r]))
    elif spec.family is not KernelFamily.EXP_FAMILY:
        raise ValueError(f"node {r} is neither EXP_FAMILY nor SIGMOID")
    stats = spec.stats
    from .dag_model import kernel_table

    ktab = kernel_table(
        spec, model.parent_cards(r), model.space.cardinalities[r], params[model.block_slice(r)]
    )
    p_pa = parent_marginal(model, params, r)
    mean = np.einsum("cx,icx->ic", ktab, stats)
    second = np.einsum("c,cx,icx,jcx->ij", p_pa, ktab, stats, stats)
    centred = np.einsum("c,ic,jc->ij", p_pa, mean, mean)
    g = second - centred
    return 0.5 * (g + g.T)


def rbm_joint_fisher(visible_count: int, hidden_count: int, W: np.ndarray) -> np.ndarray:
    """Fisher of the bipartite Boltzmann family, in weight coordinates.

    p(x_V, x_H; W) is proportional to exp(sum_ij w_ij x_i x_j); the Fisher
    entry for weight pairs (i,j),(k,l) is Cov(X_i X_j, X_k X_l) under the
    joint distribution, computed by enumeration.  Unlike DAG models, this
    undirected family has no architecture-imposed zeros.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.shape != (visible_count, hidden_count):
        raise ValueError(f"W must have shape ({visible_count}, {hidden_count})")
    n = visible_count + hidden_count
    space = binary_space(n, visible=tuple(range(visible_count)))
    spins = 2 * enumerate_configs(space) - 1  # (N, n) in {-1, +1}
    vis = spins[:, :visible_count].astype(np.float64)
    hid = spins[:, visible_count:].astype(np.float64)
    energy = np.einsum("ni,ij,nj->n", vis, W, hid)
    p = np.exp(energy - energy.max())
    p /= p.sum()
    pair = (vis[:, :, None] * hid[:, None, :]).reshape(len(p), -1)  # (N, n_vis*n_hid)
    mean = pair.T @ p
    second = pair.T @ (pair * p[:, None])
    cov = second - np.outer(mean, mean)
    return 0.5 * (cov + cov.T)


def pseudoinverse(matrix: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
    """Moore-Penrose inverse of a symmetric matrix via spectral cutoff.

    Eigenvalues with |lambda| < rel_tol * max|lambda| * dim are treated
    as zero.  Satisfies the four Penrose identities; reduces to the
    ordinary inverse on full-rank input.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {matrix.shape}")
    if matrix.size == 0:
        return matrix.copy()
    scale = max(1.0, float(np.abs(matrix).max()))
    if float(np.abs(matrix - matrix.T).max()) > 1e-12 * scale:
        raise ValueError("pseudoinverse requires a symmetric matrix")
    sym = 0.5 * (matrix + matrix.T)
    lam, vec = np.linalg.eigh(sym)
    lam_max = float(np.abs(lam).max())
    if lam_max == 0.0:
        return np.zeros_like(sym)
    cutoff = rel_tol * lam_max * matrix.shape[0]
    inv = np.zeros_like(lam)
    keep = np.abs(lam) >= cutoff
    inv[keep] = 1.0 / lam[keep]
    out = (vec * inv) @ vec.T
    return 0.5 * (out + out.T)


def block_pseudoinverse(bm: BlockMatrix, rel_tol: float = 1e-12) -> BlockMatrix:
    """Blockwise pseudoinverse; equals the dense pseudoinverse reassembled."""
    return BlockMatrix([pseudoinverse(b, rel_tol) for b in bm.blocks])


def sparsity_report(
    matrix: np.ndarray, abs_tol: float = 1e-10, block_dims: Sequence[int] | None = None
) -> dict:
    """Count entries below ``abs_tol`` in a square matrix.

    ``block_dims`` adds a per-block breakdown (zeros inside each diagonal
    block) for reporting the layered-architecture comparison.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("sparsity_report expects a square matrix")
    zero_mask = np.abs(matrix) < abs_tol
    total = matrix.size
    zeros = int(zero_mask.sum())
    report = {"total": total, "zeros": zeros, "nonzeros": total - zeros}
    if block_dims is not None:
        per_block = []
        offset = 0
        for dim in block_dims:
            sl = slice(offset, offset + dim)
            per_block.append(
                {
                    "dim": int(dim),
                    "offset": offset,
                    "zeros": int(zero_mask[sl, sl].sum()),
                }
            )
            offset += dim
        if offset != matrix.shape[0]:
            raise ValueError("block_dims do not tile the matrix")
        report["per_block"] = per_block
    return report


def structural_zero_mask(matrices: Sequence[np.ndarray], abs_tol: float = 1e-10) -> np.ndarray:
    """Entries below ``abs_tol`` in every supplied matrix.

    Zeros imposed by the architecture survive independent parameter
    draws; accidental zeros do not, so use >= 5 draws.
    """
    mats = [np.asarray(m) for m in matrices]
    if not mats:
        raise ValueError("need at least one matrix")
    mask = np.abs(mats[0]) < abs_tol
    for m in mats[1:]:
        mask &= np.abs(m) < abs_tol
    return mask


def weight_coordinate_indices(model: DagModel) -> np.ndarray:
    """Flat parameter indices of all sigmoid weights (thresholds excluded).

    The layered-architecture zero counts are stated for weights only.
    """
    idx = []
    for r in range(model.dag.node_count):
        if model.kernels[r].family is not KernelFamily.SIGMOID:
            continue
        sl = model.block_slice(r)
        idx.extend(range(sl.start, sl.stop - 1))
    return np.asarray(idx, dtype=np.int64)
