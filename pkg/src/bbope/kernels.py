"""Kernels on state-action pairs and the flow-discrepancy matrix blocks.

A state-action pair is embedded as the concatenation of a state part
(one-hot for tabular states, optionally shifted/scaled coordinates for
continuous states) and a one-hot action part scaled by ``action_scale``.
The Gaussian kernel on that embedding factorizes as

    k((s,a), (t,b)) = k_state(s,t) * gamma ** [a != b],
    gamma = exp(-action_scale**2 / bandwidth**2),

which the large-scale assembly path exploits: only state-by-state Gram
matrices are exponentiated, and the action structure enters through
cheap elementwise factors.

`assemble_matrices` builds the three n-by-n blocks that the weighted
flow discrepancy needs: the point block (logged pairs against logged
pairs), the cross block (logged pairs against policy-averaged successor
pairs), and the successor block (policy-averaged successors against
themselves).  Their combination  point - 2*cross + successor  is the
matrix of the quadratic loss; its symmetrization is stored as well
because the cross block is not symmetric and gradients must see the
symmetric part only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .oracle import state_action_chain

__all__ = [
    "Kernel",
    "RbfKernel",
    "DeltaKernel",
    "TransformedKernel",
    "KernelMatrices",
    "rbf_kernel",
    "delta_kernel",
    "transformed_kernel",
    "median_bandwidth",
    "state_standardizer",
    "assemble_matrices",
    "assemble_combined",
    "smoothed_transition_matrix",
]


class Kernel:
    """Positive-definite kernel on state-action pairs.

    Subclasses implement ``gram((states_x, actions_x), (states_y,
    actions_y))``; ``evaluate`` is the single-pair convenience wrapper.
    """

    def gram(self, sa_x, sa_y):
        raise NotImplementedError

    def evaluate(self, x, x_bar):
        g = self.gram(
            (np.asarray(x[0])[None], np.array([x[1]])),
            (np.asarray(x_bar[0])[None], np.array([x_bar[1]])),
        )
        return float(g[0, 0])


class RbfKernel(Kernel):
    def __init__(self, bandwidth, action_scale=1.0, num_actions=None, num_states=None,
                 state_shift=None, state_scale=None):
        if bandwidth <= 0:
            raise ValueError(f"bandwidth must be positive, got {bandwidth}")
        if num_actions is None:
            raise ValueError("num_actions is required")
        self.bandwidth = float(bandwidth)
        self.action_scale = float(action_scale)
        self.num_actions = int(num_actions)
        self.num_states = None if num_states is None else int(num_states)
        self.state_shift = None if state_shift is None else np.asarray(state_shift, dtype=np.float64)
        self.state_scale = None if state_scale is None else np.asarray(state_scale, dtype=np.float64)

    @property
    def action_factor(self):
        """gamma in the factorization k = k_state * gamma ** [a != b]."""
        return float(np.exp(-(self.action_scale**2) / self.bandwidth**2))

    def state_features(self, states):
        states = np.asarray(states)
        if np.issubdtype(states.dtype, np.integer):
            if self.num_states is None:
                raise ValueError("tabular states need num_states at kernel construction")
            out = np.zeros((len(states), self.num_states))
            out[np.arange(len(states)), states] = 1.0
            return out
        feats = states.astype(np.float64, copy=True)
        if feats.ndim == 1:
            feats = feats[:, None]
        if self.state_shift is not None:
            feats -= self.state_shift
        if self.state_scale is not None:
            feats /= self.state_scale
        return feats

    def features(self, states, actions):
        phi_s = self.state_features(states)
        actions = np.asarray(actions, dtype=np.int64)
        phi_a = np.zeros((len(actions), self.num_actions))
        phi_a[np.arange(len(actions)), actions] = self.action_scale
        return np.concatenate([phi_s, phi_a], axis=1)

    def state_gram(self, states_x, states_y, dtype=np.float64):
        """exp(-||phi_x - phi_y||^2 / (2 b^2)) on the state part only."""
        fx = self.state_features(states_x).astype(dtype)
        fy = self.state_features(states_y).astype(dtype)
        sq = (
            np.sum(fx * fx, axis=1)[:, None]
            + np.sum(fy * fy, axis=1)[None, :]
            - 2.0 * (fx @ fy.T)
        )
        np.maximum(sq, 0.0, out=sq)
        sq *= -1.0 / (2.0 * self.bandwidth**2)
        return np.exp(sq, out=sq)

    def gram(self, sa_x, sa_y):
        g = self.state_gram(sa_x[0], sa_y[0])
        ax = np.asarray(sa_x[1], dtype=np.int64)
        ay = np.asarray(sa_y[1], dtype=np.int64)
        gamma = self.action_factor
        g *= gamma + (1.0 - gamma) * (ax[:, None] == ay[None, :])
        return g


class DeltaKernel(Kernel):
    """Exact-match kernel for tabular pairs: k = 1 iff (s,a) == (t,b)."""

    def __init__(self, num_actions):
        self.num_actions = int(num_actions)

    def gram(self, sa_x, sa_y):
        sx = np.asarray(sa_x[0])
        sy = np.asarray(sa_y[0])
        if not (np.issubdtype(sx.dtype, np.integer) and np.issubdtype(sy.dtype, np.integer)):
            raise ValueError("the exact-match kernel is defined for tabular states only")
        cx = sx * self.num_actions + np.asarray(sa_x[1], dtype=np.int64)
        cy = sy * self.num_actions + np.asarray(sa_y[1], dtype=np.int64)
        return (cx[:, None] == cy[None, :]).astype(np.float64)


def rbf_kernel(bandwidth, action_scale=1.0, **kwargs):
    return RbfKernel(bandwidth, action_scale, **kwargs)


def delta_kernel(num_actions):
    return DeltaKernel(num_actions)


def median_bandwidth(features, percentile=50.0):
    """Bandwidth from pairwise distances at a lower nearest-rank percentile.

    Sorts all m*(m-1)/2 pairwise Euclidean distances ascending and picks
    entry ceil(q * count) (1-based) -- no interpolation, so the result is
    always an actually-occurring distance and is permutation invariant.
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim == 1:
        feats = feats[:, None]
    m = feats.shape[0]
    if m < 2:
        raise ValueError("need at least two points for a bandwidth estimate")
    if not 0.0 < percentile <= 100.0:
        raise ValueError(f"percentile must be in (0, 100], got {percentile}")
    sq = (
        np.sum(feats * feats, axis=1)[:, None]
        + np.sum(feats * feats, axis=1)[None, :]
        - 2.0 * (feats @ feats.T)
    )
    iu = np.triu_indices(m, k=1)
    dists = np.sqrt(np.maximum(sq[iu], 0.0))
    dists.sort()
    rank = int(np.ceil(percentile / 100.0 * len(dists)))
    value = float(dists[max(rank - 1, 0)])
    if value <= 0.0:
        raise ValueError("degenerate point set: selected pairwise distance is zero")
    return value


def state_standardizer(states):
    """Per-coordinate mean and std of a continuous state array (std floor 1e-8)."""
    states = np.asarray(states, dtype=np.float64)
    if states.ndim == 1:
        states = states[:, None]
    return states.mean(axis=0), np.maximum(states.std(axis=0), 1e-8)


@dataclass
class KernelMatrices:
    """The assembled n-by-n blocks of the weighted flow discrepancy.

    combined = point - 2 * cross + successor;  sym = (combined +
    combined^T) / 2.  The quadratic loss w^T combined w equals
    w^T sym w, and gradients are always taken through sym.  The
    block-level fields are None when assembly used the factorized
    large-scale path, which only materializes the combination.
    """

    point: np.ndarray | None
    cross: np.ndarray | None
    successor: np.ndarray | None
    combined: np.ndarray | None
    sym: np.ndarray

    @property
    def n(self):
        return self.sym.shape[0]


def assemble_matrices(dataset, policy, kernel):
    """Dense float64 assembly of all blocks (small and mid-size n).

    cross[i, j] = sum_b pi(b | s'_j) k(x_i, (s'_j, b));
    successor[i, j] = sum_{a, b} pi(a | s'_i) pi(b | s'_j)
                      k((s'_i, a), (s'_j, b)).
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("empty dataset")
    src = (dataset.states, dataset.actions)
    pi_next = policy.prob_matrix(dataset.next_states)  # (n, A)
    A = pi_next.shape[1]

    point = kernel.gram(src, src)
    cross = np.zeros((n, n))
    for b in range(A):
        acts = np.full(n, b, dtype=np.int64)
        cross += kernel.gram(src, (dataset.next_states, acts)) * pi_next[None, :, b]
    successor = np.zeros((n, n))
    for a in range(A):
        for b in range(A):
            g = kernel.gram(
                (dataset.next_states, np.full(n, a, dtype=np.int64)),
                (dataset.next_states, np.full(n, b, dtype=np.int64)),
            )
            contrib = g * pi_next[:, a][:, None] * pi_next[:, b][None, :]
            successor += contrib
    combined = point - 2.0 * cross + successor
    return KernelMatrices(
        point=point,
        cross=cross,
        successor=successor,
        combined=combined,
        sym=0.5 * (combined + combined.T),
    )


def _symmetrize_inplace(buf, block=2048):
    n = buf.shape[0]
    for i0 in range(0, n, block):
        i1 = min(i0 + block, n)
        for j0 in range(i0, n, block):
            j1 = min(j0 + block, n)
            upper = buf[i0:i1, j0:j1]
            lower = buf[j0:j1, i0:i1]
            avg = 0.5 * (upper + lower.T)
            buf[i0:i1, j0:j1] = avg
            buf[j0:j1, i0:i1] = avg.T
    return buf


def assemble_combined(dataset, policy, kernel, dtype=np.float64, block=1024):
    """Memory-lean assembly of the symmetrized combination only.

    Works in row blocks so peak memory is the output matrix plus
    O(block * n) temporaries.  For the Gaussian kernel the state-gram x
    action-factor factorization means only state distances are ever
    exponentiated; for the exact-match kernel everything reduces to
    integer comparisons.  Other kernels fall back to the dense path.
    Intended for benchmark-scale n where the full block set (and float64)
    would not fit; float32 costs ~1e-7 relative error, far below the
    statistical noise of any benchmark estimate.
    """
    if not isinstance(kernel, (RbfKernel, DeltaKernel)):
        mats = assemble_matrices(dataset, policy, kernel)
        return KernelMatrices(None, None, None, None, mats.sym.astype(dtype))

    n = len(dataset)
    pi_next = np.asarray(policy.prob_matrix(dataset.next_states), dtype=dtype)
    acts = np.asarray(dataset.actions, dtype=np.int64)
    buf = np.empty((n, n), dtype=dtype)

    if isinstance(kernel, RbfKernel):
        gamma = dtype(kernel.action_factor)
        f_src = kernel.state_features(dataset.states).astype(dtype)
        f_nxt = kernel.state_features(dataset.next_states).astype(dtype)
        nrm_src = np.sum(f_src * f_src, axis=1)
        nrm_nxt = np.sum(f_nxt * f_nxt, axis=1)
        scale = dtype(-1.0 / (2.0 * kernel.bandwidth**2))

        def gram_rows(fa, na, r0, r1, fb, nb):
            sq = na[r0:r1, None] + nb[None, :] - 2.0 * (fa[r0:r1] @ fb.T)
            np.maximum(sq, 0.0, out=sq)
            sq *= scale  # negative, so sq is now the exponent
            return np.exp(sq, out=sq)

        for r0 in range(0, n, block):
            r1 = min(r0 + block, n)
            piece = gram_rows(f_src, nrm_src, r0, r1, f_src, nrm_src)
            piece *= gamma + (1.0 - gamma) * (acts[r0:r1, None] == acts[None, :])
            g1 = gram_rows(f_src, nrm_src, r0, r1, f_nxt, nrm_nxt)
            g1 *= pi_next[:, acts[r0:r1]].T * (1.0 - gamma) + gamma
            piece -= 2.0 * g1
            g2 = gram_rows(f_nxt, nrm_nxt, r0, r1, f_nxt, nrm_nxt)
            g2 *= gamma + (1.0 - gamma) * (pi_next[r0:r1] @ pi_next.T)
            piece += g2
            buf[r0:r1] = piece
    else:
        states = np.asarray(dataset.states)
        nexts = np.asarray(dataset.next_states)
        for r0 in range(0, n, block):
            r1 = min(r0 + block, n)
            piece = (
                (states[r0:r1, None] == states[None, :])
                & (acts[r0:r1, None] == acts[None, :])
            ).astype(dtype)
            piece -= 2.0 * (states[r0:r1, None] == nexts[None, :]) * pi_next[:, acts[r0:r1]].T
            piece += (nexts[r0:r1, None] == nexts[None, :]) * (pi_next[r0:r1] @ pi_next.T)
            buf[r0:r1] = piece

    _symmetrize_inplace(buf, block=max(block, 1024))
    return KernelMatrices(None, None, None, None, buf)


def smoothed_transition_matrix(dataset, policy, kernel, ridge=1e-6, counts=None,
                               dtype=np.float64, block=1024):
    """Row-stochastic chain over the logged pairs by kernel regression.

    Row i describes where the process goes after sample i: it lands in
    s'_i, the policy picks b, and the successor pair (s'_i, b) is
    located among the logged anchor pairs by a normalized kernel
    smoother -- each successor pair's kernel weights over the anchors
    are normalized *before* the policy average, so

        raw[i, j] = sum_b pi(b | s'_i) *
                    k((s_j, a_j), (s'_i, b)) m_j / sum_l k((s_l, a_l), (s'_i, b)) m_l

    with anchor multiplicities m (all ones by default; the duplicate
    counts for compressed tabular data).  With the exact-match kernel on
    tabular data this is exactly the empirical count-based transition
    chain; a successor pair that matches no anchor contributes nothing
    and its policy mass renormalizes over the matched ones.  `ridge` is
    added on the diagonal so no row can be all zero, and rows are
    renormalized to sum to one.  The stationary distribution of the
    result is the model-based estimate of the target policy's long-run
    pair distribution on the sample.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("empty dataset")
    counts = np.ones(n) if counts is None else np.asarray(counts, dtype=np.float64)
    counts = counts.astype(dtype)
    pi_next = np.asarray(policy.prob_matrix(dataset.next_states), dtype=dtype)
    acts = np.asarray(dataset.actions, dtype=np.int64)
    A = pi_next.shape[1]
    act_onehot = np.zeros((n, A), dtype=dtype)
    act_onehot[np.arange(n), acts] = 1.0
    raw = np.empty((n, n), dtype=dtype)

    if isinstance(kernel, RbfKernel):
        gamma = dtype(kernel.action_factor)
        f_src = kernel.state_features(dataset.states).astype(dtype)
        f_nxt = kernel.state_features(dataset.next_states).astype(dtype)
        nrm_src = np.sum(f_src * f_src, axis=1)
        nrm_nxt = np.sum(f_nxt * f_nxt, axis=1)
        scale = dtype(-1.0 / (2.0 * kernel.bandwidth**2))
        for r0 in range(0, n, block):
            r1 = min(r0 + block, n)
            sq = nrm_nxt[r0:r1, None] + nrm_src[None, :] - 2.0 * (f_nxt[r0:r1] @ f_src.T)
            np.maximum(sq, 0.0, out=sq)
            sq *= scale
            g = np.exp(sq, out=sq)
            g *= counts[None, :]
            per_action = g @ act_onehot  # (rows, A): anchor kernel mass per action
            denom = gamma * g.sum(axis=1)[:, None] + (1.0 - gamma) * per_action
            ratio = pi_next[r0:r1] / denom  # Gaussian denominators are never zero
            g *= gamma * ratio.sum(axis=1)[:, None] + (1.0 - gamma) * ratio[:, acts]
            raw[r0:r1] = g
    elif isinstance(kernel, DeltaKernel):
        states = np.asarray(dataset.states)
        nexts = np.asarray(dataset.next_states)
        for r0 in range(0, n, block):
            r1 = min(r0 + block, n)
            match = (nexts[r0:r1, None] == states[None, :]).astype(dtype)
            match *= counts[None, :]
            per_action = match @ act_onehot
            ratio = np.divide(
                pi_next[r0:r1], per_action,
                out=np.zeros_like(per_action), where=per_action > 0,
            )
            match *= ratio[:, acts]
            raw[r0:r1] = match
    else:
        raw[:] = 0.0
        for b in range(A):
            g = np.asarray(
                kernel.gram(
                    (dataset.next_states, np.full(n, b, dtype=np.int64)),
                    (dataset.states, dataset.actions),
                ),
                dtype=dtype,
            )
            g *= counts[None, :]
            denom = g.sum(axis=1)
            weight = np.divide(
                pi_next[:, b], denom, out=np.zeros_like(denom), where=denom > 0
            )
            raw += weight[:, None] * g

    raw = raw.astype(np.float64, copy=False)
    raw[np.arange(n), np.arange(n)] += float(ridge)
    sums = raw.sum(axis=1)
    if np.any(sums <= 0.0):
        raise ValueError("a transition row has no mass even after the ridge term")
    raw /= sums[:, None]
    return raw


class TransformedKernel(Kernel):
    """Base kernel conjugated by the one-step flow of an MDP + policy.

    For tabular pairs x, the transformed kernel subtracts the expected
    kernel values against one-step successors:

        kt(x, y) = E[ k(x, y) - k(x, Y') - k(X', y) + k(X', Y') ],

    with X' drawn by following the MDP one step from x and then the
    policy, independently of Y' from y.  In matrix form over the full
    pair space this is (I - Q) G (I - Q)^T for the pair-chain matrix Q,
    which is how it is computed here.
    """

    def __init__(self, base, mdp, policy):
        S, A = mdp.num_states, mdp.num_actions
        all_states = np.repeat(np.arange(S), A)
        all_actions = np.tile(np.arange(A), S)
        G = base.gram((all_states, all_actions), (all_states, all_actions))
        Q = state_action_chain(mdp, policy)
        M = np.eye(S * A) - Q
        self._gram_table = M @ G @ M.T
        self._num_actions = A
        self.base = base

    def gram(self, sa_x, sa_y):
        sx = np.asarray(sa_x[0])
        sy = np.asarray(sa_y[0])
        if not (np.issubdtype(sx.dtype, np.integer) and np.issubdtype(sy.dtype, np.integer)):
            raise ValueError("the transformed kernel is defined for tabular states only")
        cx = sx * self._num_actions + np.asarray(sa_x[1], dtype=np.int64)
        cy = sy * self._num_actions + np.asarray(sa_y[1], dtype=np.int64)
        return self._gram_table[np.ix_(cx, cy)]


def transformed_kernel(base, mdp, policy):
    return TransformedKernel(base, mdp, policy)
