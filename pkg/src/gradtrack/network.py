"""Graph topologies, mixing weights, spectral quantities, and time-varying digraph sequences.

All communication in this package is simulated in-process: a static undirected
network is a doubly stochastic mixing matrix applied to stacked agent states,
and a time-varying directed network is a sequence of column-stochastic
matrices driving a push-sum correction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .errors import ConfigError

STOCHASTICITY_TOL = 1e-12
ER_RETRY_BUDGET = 100

TOPOLOGY_KINDS = ("erdos_renyi", "star", "path", "cycle", "complete", "custom")
TV_KINDS = ("alternating_subgraphs", "random_spanning", "static_as_tv")


# ---------------------------------------------------------------------------
# topologies


@dataclass(frozen=True)
class Topology:
    """A communication graph on nodes 0..m-1.

    For undirected graphs the edge set is stored symmetric-closed, i.e. it
    contains (i, j) and (j, i) for every link. Directed edges (i, j) mean
    node i sends to node j.
    """

    node_count: int
    edges: frozenset
    directed: bool = False

    def __post_init__(self):
        m = self.node_count
        if m < 1:
            raise ConfigError(f"node_count must be positive, got {m}")
        for (i, j) in self.edges:
            if not (0 <= i < m and 0 <= j < m):
                raise ConfigError(f"edge ({i},{j}) out of range for m={m}")
            if i == j:
                raise ConfigError("self-loops are implicit; do not list them")
            if not self.directed and (j, i) not in self.edges:
                raise ConfigError(f"undirected edge set not symmetric-closed at ({i},{j})")

    def neighbors(self, i):
        """In undirected graphs, all nodes linked to i."""
        return sorted(j for (a, j) in self.edges if a == i)

    def out_neighbors(self, i):
        return sorted(j for (a, j) in self.edges if a == i)

    def degree(self, i):
        return sum(1 for (a, _) in self.edges if a == i)

    def as_networkx(self):
        g = nx.DiGraph() if self.directed else nx.Graph()
        g.add_nodes_from(range(self.node_count))
        g.add_edges_from(self.edges)
        return g

    def is_connected(self):
        g = self.as_networkx()
        if self.directed:
            return nx.is_strongly_connected(g)
        return nx.is_connected(g)


def _symmetric_closure(pairs):
    out = set()
    for (i, j) in pairs:
        out.add((i, j))
        out.add((j, i))
    return frozenset(out)


def generate_topology(kind, m, seed=0, p=None, edges=None):
    """Build a named topology on m nodes.

    Parameters
    ----------
    kind : str
        One of ``erdos_renyi``, ``star``, ``path``, ``cycle``, ``complete``,
        ``custom``.
    m : int
        Number of nodes, at least 2.
    seed : int
        Seed for the Erdos-Renyi sampler; unused by deterministic kinds.
    p : float, optional
        Edge probability for ``erdos_renyi``, in (0, 1].
    edges : iterable of (i, j), optional
        Undirected link list for ``custom``.

    Returns
    -------
    Topology
        A connected undirected topology. Erdos-Renyi graphs are resampled
        up to a fixed retry budget until connected.
    """
    if m < 2:
        raise ConfigError(f"need at least 2 nodes, got {m}")
    if kind == "star":
        base = [(0, i) for i in range(1, m)]
    elif kind == "path":
        base = [(i, i + 1) for i in range(m - 1)]
    elif kind == "cycle":
        base = [(i, (i + 1) % m) for i in range(m)]
    elif kind == "complete":
        base = [(i, j) for i in range(m) for j in range(i + 1, m)]
    elif kind == "custom":
        if edges is None:
            raise ConfigError("custom topology requires an edge list")
        base = [tuple(e) for e in edges]
    elif kind == "erdos_renyi":
        if p is None or not (0.0 < p <= 1.0):
            raise ConfigError(f"erdos_renyi needs edge probability p in (0,1], got {p}")
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        for _ in range(ER_RETRY_BUDGET):
            mask = rng.random((m, m)) < p
            base = [(i, j) for i in range(m) for j in range(i + 1, m) if mask[i, j]]
            topo = Topology(m, _symmetric_closure(base))
            if topo.is_connected():
                return topo
        raise ConfigError(
            f"no connected Erdos-Renyi graph in {ER_RETRY_BUDGET} draws (m={m}, p={p})"
        )
    else:
        raise ConfigError(f"unknown topology kind {kind!r}")
    topo = Topology(m, _symmetric_closure(base))
    if not topo.is_connected():
        raise ConfigError(f"{kind} topology on {m} nodes is not connected")
    return topo


# ---------------------------------------------------------------------------
# static mixing matrices


@dataclass(frozen=True)
class MixingMatrix:
    """A doubly stochastic consensus matrix together with its spectral gap.

    ``rho`` is the largest singular value of W - (1/m) 11^T; consensus
    disagreement contracts by at least this factor per multiplication.
    """

    weights: np.ndarray
    rho: float

    @property
    def node_count(self):
        return self.weights.shape[0]


def spectral_rho(W):
    """Largest singular value of W - (1/m) 11^T.

    Accepts a MixingMatrix or a square array. The value is < 1 exactly when
    the underlying graph is connected (for doubly stochastic W with positive
    diagonal).
    """
    A = W.weights if isinstance(W, MixingMatrix) else np.asarray(W, dtype=float)
    m = A.shape[0]
    return float(np.linalg.svd(A - np.full((m, m), 1.0 / m), compute_uv=False)[0])


def validate_mixing(W, topology=None, tol=STOCHASTICITY_TOL):
    """Check double stochasticity, nonnegativity, and sparsity compliance."""
    A = W.weights
    m = A.shape[0]
    if A.shape != (m, m):
        raise ConfigError("mixing matrix must be square")
    if np.any(A < -tol):
        raise ConfigError("mixing weights must be nonnegative")
    if np.max(np.abs(A.sum(axis=1) - 1.0)) > tol:
        raise ConfigError("row sums deviate from 1")
    if np.max(np.abs(A.sum(axis=0) - 1.0)) > tol:
        raise ConfigError("column sums deviate from 1")
    if np.any(np.diag(A) <= 0):
        raise ConfigError("diagonal weights must be positive")
    if topology is not None:
        for i in range(m):
            for j in range(m):
                if i == j:
                    continue
                on_edge = (i, j) in topology.edges
                if on_edge and A[i, j] <= 0:
                    raise ConfigError(f"edge ({i},{j}) has zero weight")
                if not on_edge and abs(A[i, j]) > tol:
                    raise ConfigError(f"nonzero weight off the graph at ({i},{j})")
    return True


def metropolis_weights(topology):
    """Metropolis weights w_ij = 1/(1 + max(deg_i, deg_j)) on the edges.

    The result is symmetric and doubly stochastic; requires a connected
    undirected topology (otherwise the spectral gap closes and rho = 1).
    """
    if topology.directed:
        raise ConfigError("Metropolis weights need an undirected topology")
    if not topology.is_connected():
        raise ConfigError("Metropolis weights need a connected topology")
    m = topology.node_count
    deg = [topology.degree(i) for i in range(m)]
    W = np.zeros((m, m))
    for (i, j) in topology.edges:
        if i < j:
            w = 1.0 / (1.0 + max(deg[i], deg[j]))
            W[i, j] = W[j, i] = w
    for i in range(m):
        W[i, i] = 1.0 - W[i].sum()
    mat = MixingMatrix(W, spectral_rho(W))
    validate_mixing(mat, topology)
    return mat


def star_master_matrix(m):
    """Rank-one averaging matrix used by the master/worker variant.

    Every entry is 1/m, so one multiplication reaches exact consensus
    (rho = 0).
    """
    if m < 2:
        raise ConfigError(f"need at least 2 nodes, got {m}")
    W = np.full((m, m), 1.0 / m)
    return MixingMatrix(W, 0.0)


# ---------------------------------------------------------------------------
# Chebyshev-accelerated mixing


def chebyshev_contraction(rho, K):
    """Contraction factor of K Chebyshev-accelerated rounds on a matrix with gap rho."""
    if not (0.0 <= rho < 1.0):
        raise ConfigError(f"need rho in [0,1), got {rho}")
    if rho == 0.0:
        return 0.0
    c = (1.0 - math.sqrt(1.0 - rho * rho)) / rho
    return 2.0 * c**K / (1.0 + c ** (2 * K))


def chebyshev_mix(W, V, K):
    """Apply a degree-K Chebyshev polynomial in W to the stacked matrix V.

    The polynomial is T_K(W/rho) / T_K(1/rho), where T_K is the Chebyshev
    polynomial of the first kind. It maps the consensus eigenvalue 1 to 1,
    so column means of V are preserved, and contracts every eigenvalue in
    [-rho, rho] by at least ``chebyshev_contraction(rho, K)``. This is the
    minimax-optimal degree-K acceleration for symmetric W; K = 1 reduces to
    one plain multiplication by W.
    """
    if K < 1:
        raise ConfigError(f"need K >= 1, got {K}")
    A = W.weights
    rho = W.rho
    if K == 1 or rho == 0.0:
        return A @ V
    prev, cur = V, (A @ V) / rho
    t_prev, t_cur = 1.0, 1.0 / rho
    for _ in range(K - 1):
        prev, cur = cur, 2.0 * (A @ cur) / rho - prev
        t_prev, t_cur = t_cur, 2.0 * t_cur / rho - t_prev
    return cur / t_cur


# ---------------------------------------------------------------------------
# time-varying directed sequences


def column_stochastic_weights(topology):
    """Uniform column-stochastic weights on a (directed) frame.

    Sender j splits its mass evenly over its out-neighbors and itself, so
    every nonzero entry is at least 1/m.
    """
    m = topology.node_count
    C = np.zeros((m, m))
    for j in range(m):
        receivers = topology.out_neighbors(j)
        share = 1.0 / (1.0 + len(receivers))
        C[j, j] = share
        for i in receivers:
            C[i, j] = share
    return C


def _tv_constants(m, B, c_ell):
    """Worst-case push-sum constants implied by (m, B, c_ell).

    These are deliberately conservative bounds driven by the weight floor
    c_ell, not estimates from a particular realization. 1 - rho_B is
    returned separately because for realistic sizes rho_B rounds to 1.0
    in double precision while its gap is still representable.
    """
    n = (m - 1) * B
    phi_lb = c_ell ** (2 * n)
    phi_ub = m - phi_lb
    log_ct = (2 * n + 1) * math.log(c_ell) - math.log(m)
    c_ell_tilde = math.exp(log_ct)
    t = math.exp(n * log_ct)  # c_ell_tilde^{(m-1)B}; may underflow to 0
    if t > 0.0:
        one_minus_rho_B = -math.expm1(math.log1p(-t) / n)
        try:
            inv_t = math.exp(-n * log_ct)
        except OverflowError:
            inv_t = math.inf
        c0 = 2.0 * m * (1.0 + inv_t) / (1.0 - t)
    else:
        one_minus_rho_B = 0.0
        c0 = math.inf
    return phi_lb, phi_ub, c0, 1.0 - one_minus_rho_B, one_minus_rho_B, c_ell_tilde


@dataclass(frozen=True)
class TimeVaryingNetwork:
    """A deterministic sequence nu -> (frame topology, column-stochastic C^nu).

    Periodic kinds store one period of frames; ``random_spanning`` draws a
    strongly connected frame per step from a counter-split seed, so the
    sequence is reproducible without being stored.
    """

    node_count: int
    B: int
    c_ell: float
    kind: str
    seed: int
    phi_lb: float
    phi_ub: float
    c0: float
    rho_B: float
    one_minus_rho_B: float
    c_ell_tilde: float
    _frames: tuple = field(default=(), repr=False)

    def frame(self, nu):
        """Topology and weight matrix for step nu."""
        if self.kind == "random_spanning":
            rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(nu,)))
            perm = rng.permutation(self.node_count)
            pairs = [(int(perm[k]), int(perm[(k + 1) % self.node_count])) for k in range(self.node_count)]
            topo = Topology(self.node_count, frozenset(pairs), directed=True)
            return topo, column_stochastic_weights(topo)
        return self._frames[nu % len(self._frames)]


def _frame_partition(base, B):
    """Split a base digraph's edges round-robin into B frames."""
    all_edges = sorted(base.edges)
    frames = []
    m = base.node_count
    for r in range(B):
        part = frozenset(e for k, e in enumerate(all_edges) if k % B == r)
        frames.append(Topology(m, part, directed=True))
    return frames


def generate_tv_network(kind, base, B, c_ell, seed=0):
    """Build a B-strongly-connected time-varying directed network.

    Parameters
    ----------
    kind : str
        ``alternating_subgraphs`` partitions the base graph's directed edges
        into B frames cycled forever; ``random_spanning`` draws a random
        spanning cycle per step; ``static_as_tv`` repeats the base graph with
        its (doubly stochastic) Metropolis weights.
    base : Topology
        The base graph. For directed kinds an undirected base is taken as
        its symmetric closure.
    B : int
        Window length over which edge unions must be strongly connected.
    c_ell : float
        Weight floor, in (0, 1/m]. The uniform column splitting used here
        guarantees all nonzero entries are >= 1/m >= c_ell.
    seed : int
        Seed for the randomized kinds.
    """
    m = base.node_count
    if B < 1:
        raise ConfigError(f"need B >= 1, got {B}")
    if not (0.0 < c_ell <= 1.0 / m):
        raise ConfigError(f"need 0 < c_ell <= 1/m = {1.0/m:.6g}, got {c_ell}")
    if kind not in TV_KINDS:
        raise ConfigError(f"unknown time-varying kind {kind!r}")

    consts = _tv_constants(m, B, c_ell)
    if kind == "static_as_tv":
        W = metropolis_weights(base)
        directed = Topology(m, base.edges, directed=True)
        frames = ((directed, W.weights),)
    elif kind == "alternating_subgraphs":
        directed_base = Topology(m, base.edges, directed=True)
        topos = _frame_partition(directed_base, B)
        frames = tuple((t, column_stochastic_weights(t)) for t in topos)
    else:  # random_spanning: frames generated on the fly
        frames = ()

    net = TimeVaryingNetwork(m, B, c_ell, kind, seed, *consts, _frames=frames)
    horizon = max(2 * B, len(frames) + B, 3)
    if not check_B_strong_connectivity(net, horizon):
        raise ConfigError(
            f"{kind} sequence has a length-{B} window whose edge union is not strongly connected"
        )
    return net


def estimate_tv_contraction(net, horizon=60, seed=0):
    """Empirical per-step contraction of push-sum disagreement.

    Diagnostics only: the certificates always use the worst-case constants,
    which can be many orders of magnitude more conservative than the decay
    measured here. Returns the geometric-mean per-step ratio of the weighted
    disagreement over ``horizon`` steps.
    """
    m = net.node_count
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    x = rng.standard_normal((m, 3))
    phi = np.ones(m)
    start = np.linalg.norm(x - (phi[:, None] * x).mean(axis=0))
    for nu in range(horizon):
        C = net.frame(nu)[1]
        phi_new = C @ phi
        x = (C @ (phi[:, None] * x)) / phi_new[:, None]
        phi = phi_new
    end = np.linalg.norm(x - (phi[:, None] * x).mean(axis=0))
    if end <= 0.0 or start <= 0.0:
        return 0.0
    return float((end / start) ** (1.0 / horizon))


def check_B_strong_connectivity(net, horizon):
    """True iff every length-B window up to ``horizon`` has a strongly connected union."""
    if horizon < net.B:
        raise ConfigError(f"horizon {horizon} shorter than window B={net.B}")
    m = net.node_count
    for start in range(horizon - net.B + 1):
        union = set()
        for nu in range(start, start + net.B):
            union |= set(net.frame(nu)[0].edges)
        g = nx.DiGraph()
        g.add_nodes_from(range(m))
        g.add_edges_from(union)
        if not nx.is_strongly_connected(g):
            return False
    return True


# ---------------------------------------------------------------------------
# JSON import/export


def topology_to_json(topology):
    return json.dumps(
        {
            "node_count": topology.node_count,
            "directed": topology.directed,
            "edges": sorted(list(e) for e in topology.edges),
        }
    )


def topology_from_json(text):
    d = json.loads(text)
    return Topology(d["node_count"], frozenset(tuple(e) for e in d["edges"]), d["directed"])


def mixing_to_json(W):
    rows = [[format(x, ".17g") for x in row] for row in W.weights]
    return json.dumps({"rho": format(W.rho, ".17g"), "weights": rows})


def mixing_from_json(text):
    d = json.loads(text)
    W = np.array([[float(x) for x in row] for row in d["weights"]])
    return MixingMatrix(W, float(d["rho"]))
