"""Synthetic graphs, model parameters, and samplers for the experiment protocols.

Covers the three generation pipelines used throughout the experiments:
scale-free and random graph topologies, standard-normal parameter draws on
nodes and edges, exact multivariate-normal sampling for Gaussian-only models,
and single-site Gibbs sampling for binary/count/mixed models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import expit

from .errors import DivergentSpecError, InvalidInputError, InvalidSpecError
from .glm import Dataset, Kind
from .graph import Graph

# Gibbs guards for count conditionals: the Poisson mean is capped at
# exp(_ETA_CAP); a linear predictor past _ETA_ABORT means the joint model is
# not normalizable in any practical sense and sampling stops.
_ETA_CAP = 12.0
_ETA_ABORT = 40.0
# Diagonal slack added on top of the absolute row sums of the precision
# matrix; any positive value certifies positive definiteness.
_DIAG_SLACK = 0.1
# In mixed models the Gaussian-Gaussian couplings are rescaled so every
# Gaussian vertex has absolute coupling row sum at most this value; row sums
# below 1 make the Gaussian block of the conditional means a contraction, so
# the Gibbs chain cannot drift off to infinity.
_ROW_SUM_TARGET = 0.8
# Budget for Gaussian-count couplings in scaled units s = |theta|*sqrt(mean):
# a count fluctuation of one noise unit (sqrt(mean)) displaces a coupled
# Gaussian by s, and the Gaussian feeds s^2 noise units back into the count.
# Each edge is capped at s <= _COUNT_COUPLING_CAP and every vertex at
# sum(s^2) <= _COUNT_COUPLING_CAP^2, which keeps the exponential feedback
# loops subcritical even when several counts share a hub Gaussian, while the
# per-edge Fisher information (s^2 * n) stays constant and large.
_COUNT_COUPLING_CAP = 0.25
# Count levels above this would give target means past exp(1.5) ~ 4.5, where
# the intercept compensation needed against negative couplings becomes large
# enough to blow up whenever a suppressing neighbour dips to zero.
_COUNT_LEVEL_CAP = 1.5
# Every count vertex's binary couplings are shrunk to this total absolute
# weight. Binary flips multiply the count's conditional mean by exp(theta),
# so unbudgeted binary neighbours can push the count orders of magnitude
# above its target mean, far past the fluctuation scale the Gaussian-count
# budget is sized for.
_BINARY_COUNT_BUDGET = 0.8

DEFAULT_GIBBS_BURN_IN = 1000
DEFAULT_GIBBS_THIN = 10


@dataclass(frozen=True)
class MixedModelSpec:
    """A generating model: graph, variable kinds, and log-linear parameters."""

    graph: Graph
    kinds: tuple[Kind, ...]
    node_params: np.ndarray
    edge_params: dict[tuple[int, int], float]

    def __post_init__(self):
        object.__setattr__(self, "kinds", tuple(Kind(k) for k in self.kinds))
        object.__setattr__(
            self, "node_params", np.asarray(self.node_params, dtype=float)
        )
        p = self.graph.p
        if len(self.kinds) != p:
            raise InvalidSpecError(f"{len(self.kinds)} kinds for {p} vertices")
        if self.node_params.shape != (p,):
            raise InvalidSpecError(f"need one node parameter per vertex, got shape {self.node_params.shape}")
        if set(self.edge_params) != self.graph.edges:
            raise InvalidSpecError("edge parameters must be keyed exactly by the graph edges")

    @property
    def p(self) -> int:
        return self.graph.p


def gen_scale_free(p: int, seed: int) -> Graph:
    """Barabasi-Albert preferential attachment with one edge per new vertex.

    The result is always a connected tree on p vertices (p-1 edges).
    """
    if p < 2:
        raise InvalidInputError("need at least two vertices")
    rng = np.random.default_rng(seed)
    edges = [(0, 1)]
    # One slot per unit of degree; uniform draws from it are preferential.
    degree_slots = [0, 1]
    for v in range(2, p):
        t = degree_slots[int(rng.integers(len(degree_slots)))]
        edges.append((t, v))
        degree_slots.extend((t, v))
    return Graph.from_edges(p, edges)


def gen_random(p: int, edge_prob: float, seed: int) -> Graph:
    """Erdos-Renyi graph: each unordered pair is an edge independently."""
    if p < 2:
        raise InvalidInputError("need at least two vertices")
    if not 0.0 < edge_prob < 1.0:
        raise InvalidInputError(f"edge_prob must lie in (0, 1), got {edge_prob}")
    rng = np.random.default_rng(seed)
    edges = [
        (u, v)
        for u in range(p)
        for v in range(u + 1, p)
        if rng.random() < edge_prob
    ]
    return Graph.from_edges(p, edges)


def _count_unstable(a: Kind, b: Kind) -> bool:
    # Positive count-count or Gaussian-count interactions make the joint
    # density non-normalizable, so those parameters are forced non-positive.
    pair = {a, b}
    return pair == {Kind.COUNT} or pair == {Kind.GAUSSIAN, Kind.COUNT}


def gen_spec(graph: Graph, kinds: tuple[Kind, ...], seed: int) -> MixedModelSpec:
    """Draw standard-normal node and edge parameters on a given graph.

    Two stability treatments apply to mixed models: interactions that would
    destabilize count conditionals (count-count, Gaussian-count) are mapped
    to -|draw|, and the couplings among unbounded variables are jointly
    rescaled to keep every such vertex's absolute row sum below 1. Binary
    interactions and Gaussian-only specs keep the raw draws (the latter get
    their stability from the diagonally dominant precision construction).
    """
    kinds = tuple(Kind(k) for k in kinds)
    if len(kinds) != graph.p:
        raise InvalidInputError(f"{len(kinds)} kinds for {graph.p} vertices")
    rng = np.random.default_rng(seed)
    node_params = rng.standard_normal(graph.p)
    edge_params = {}
    for u, v in sorted(graph.edges):
        theta = float(rng.standard_normal())
        if _count_unstable(kinds[u], kinds[v]):
            theta = -abs(theta)
        edge_params[(u, v)] = theta

    mixed = any(k is not Kind.GAUSSIAN for k in kinds)
    if mixed and any(k is not Kind.BINARY for k in kinds):
        node_params = _stabilize_mixed(node_params, edge_params, kinds)
    return MixedModelSpec(graph=graph, kinds=kinds, node_params=node_params, edge_params=edge_params)


def _target_means(levels: np.ndarray, kinds: tuple[Kind, ...]) -> np.ndarray:
    means = np.empty(len(kinds))
    for v, kind in enumerate(kinds):
        if kind is Kind.GAUSSIAN:
            means[v] = levels[v]
        elif kind is Kind.BINARY:
            means[v] = expit(levels[v])
        else:
            means[v] = math.exp(levels[v])
    return means


def _stabilize_mixed(
    levels: np.ndarray,
    edge_params: dict[tuple[int, int], float],
    kinds: tuple[Kind, ...],
) -> np.ndarray:
    """Bound the couplings of a mixed model and calibrate its intercepts.

    Mutates ``edge_params`` in place and returns the intercept vector. Three
    treatments, all no-ops for binary-only and Gaussian-only specs:

    * couplings between a count variable and any unbounded variable are
      capped at _COUNT_COUPLING_CAP / sqrt(target mean), on top of the
      non-positivity rule, keeping the exponential feedback loops through
      the count's log mean subcritical;
    * Gaussian-Gaussian couplings are shrunk together until every Gaussian
      vertex's absolute row sum is at most _ROW_SUM_TARGET, making the
      Gaussian block a contraction;
    * intercepts are set to the drawn level minus the coupling-weighted
      mean-field neighbour means, so every linear predictor equilibrates
      near its own standard-normal level. Without this the Gaussian block
      inflates the means by up to 1/(1 - row sum), which saturates binary
      conditionals into constant, unlearnable columns. Count levels are
      capped first so the compensation never hides a large exposed
      intercept.
    """
    levels = levels.copy()
    for v, kind in enumerate(kinds):
        if kind is Kind.COUNT:
            levels[v] = min(levels[v], _COUNT_LEVEL_CAP)
    means = _target_means(levels, kinds)

    def count_scale(u: int, v: int) -> float:
        mu = max(means[w] for w in (u, v) if kinds[w] is Kind.COUNT)
        return math.sqrt(max(mu, 1.0))

    gc_edges = []
    bc_weight = np.zeros(len(kinds))
    for (u, v), theta in edge_params.items():
        pair = {kinds[u], kinds[v]}
        if pair == {Kind.COUNT} or pair == {Kind.GAUSSIAN, Kind.COUNT}:
            cap = _COUNT_COUPLING_CAP / count_scale(u, v)
            edge_params[(u, v)] = -min(abs(theta), cap)
            if pair == {Kind.GAUSSIAN, Kind.COUNT}:
                gc_edges.append((u, v))
        elif pair == {Kind.BINARY, Kind.COUNT}:
            w = u if kinds[u] is Kind.COUNT else v
            bc_weight[w] += abs(theta)

    for (u, v), theta in edge_params.items():
        if {kinds[u], kinds[v]} == {Kind.BINARY, Kind.COUNT}:
            w = u if kinds[u] is Kind.COUNT else v
            if bc_weight[w] > _BINARY_COUNT_BUDGET:
                edge_params[(u, v)] = theta * _BINARY_COUNT_BUDGET / bc_weight[w]

    budget = _COUNT_COUPLING_CAP**2
    squared = np.zeros(len(kinds))
    for u, v in gc_edges:
        s2 = (edge_params[(u, v)] * count_scale(u, v)) ** 2
        squared[u] += s2
        squared[v] += s2
    shrink_v = np.where(squared > budget, np.sqrt(budget / np.maximum(squared, 1e-300)), 1.0)
    for u, v in gc_edges:
        edge_params[(u, v)] *= min(shrink_v[u], shrink_v[v])

    row_sum = np.zeros(len(kinds))
    for (u, v), theta in edge_params.items():
        if kinds[u] is Kind.GAUSSIAN and kinds[v] is Kind.GAUSSIAN:
            row_sum[u] += abs(theta)
            row_sum[v] += abs(theta)
    worst = float(row_sum.max()) if len(kinds) else 0.0
    if worst > _ROW_SUM_TARGET:
        shrink = _ROW_SUM_TARGET / worst
        for (u, v) in edge_params:
            if kinds[u] is Kind.GAUSSIAN and kinds[v] is Kind.GAUSSIAN:
                edge_params[(u, v)] *= shrink

    intercepts = levels.copy()
    for (u, v), theta in edge_params.items():
        intercepts[u] -= theta * means[v]
        intercepts[v] -= theta * means[u]
    return intercepts


def precision_matrix(spec: MixedModelSpec) -> np.ndarray:
    """Precision matrix implied by a Gaussian-only spec.

    Off-diagonal entries are the edge parameters (zero off the edge support);
    the diagonal is raised to the absolute row sum plus a slack, which makes
    the matrix strictly diagonally dominant and hence positive definite.
    """
    if any(k is not Kind.GAUSSIAN for k in spec.kinds):
        raise InvalidSpecError("precision matrix is defined for Gaussian-only specs")
    p = spec.p
    K = np.zeros((p, p))
    for (u, v), theta in spec.edge_params.items():
        K[u, v] = theta
        K[v, u] = theta
    K[np.diag_indices(p)] = np.abs(K).sum(axis=1) + _DIAG_SLACK
    return K


def sample_from_precision(K: np.ndarray, n: int, seed: int) -> np.ndarray:
    """n iid rows from the zero-mean multivariate normal with precision K."""
    K = np.asarray(K, dtype=float)
    if n < 1:
        raise InvalidInputError("need at least one sample")
    try:
        chol = np.linalg.cholesky(K)
    except np.linalg.LinAlgError as exc:
        raise InvalidSpecError("precision matrix is not positive definite") from exc
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, K.shape[0]))
    # x = L^-T z has covariance (L L^T)^-1 = K^-1
    return solve_triangular(chol.T, z.T, lower=False).T


def sample_gaussian(spec: MixedModelSpec, n: int, seed: int) -> Dataset:
    """Draw n iid rows from the zero-mean normal with the spec's precision."""
    values = sample_from_precision(precision_matrix(spec), n, seed)
    return Dataset(values=values, kinds=spec.kinds)


def _neighbour_table(spec: MixedModelSpec) -> list[list[tuple[int, float]]]:
    table: list[list[tuple[int, float]]] = [[] for _ in range(spec.p)]
    for (u, v), theta in spec.edge_params.items():
        table[u].append((v, theta))
        table[v].append((u, theta))
    return table


def gibbs_sample(
    spec: MixedModelSpec,
    n: int,
    burn_in: int = DEFAULT_GIBBS_BURN_IN,
    thin: int = DEFAULT_GIBBS_THIN,
    seed: int = 0,
) -> Dataset:
    """Single-site Gibbs sampler targeting the spec's joint distribution.

    Mixed models sweep each vertex's conditional given the current state:
    Gaussian vertices draw from a unit-variance normal around the linear
    predictor, binary vertices from the logistic Bernoulli, count vertices
    from the (mean-capped) Poisson. Gaussian-only specs instead use the
    conditionals implied by the spec's precision matrix, so the chain targets
    exactly the zero-mean normal that ``sample_gaussian`` draws from. After
    ``burn_in`` sweeps, every ``thin``-th sweep is recorded until n rows are
    collected.
    """
    if n < 1:
        raise InvalidInputError("need at least one sample")
    if burn_in < 1 or thin < 1:
        raise InvalidInputError("burn_in and thin must be at least 1")
    rng = np.random.default_rng(seed)
    p = spec.p
    state = np.zeros(p)
    values = np.empty((n, p))

    if all(k is Kind.GAUSSIAN for k in spec.kinds):
        K = precision_matrix(spec)
        cond_sd = 1.0 / np.sqrt(np.diag(K))
        coef = [
            [(u, -K[v, u] / K[v, v]) for u in range(p) if u != v and K[v, u] != 0.0]
            for v in range(p)
        ]

        def sweep():
            for v in range(p):
                eta = 0.0
                for u, c in coef[v]:
                    eta += c * state[u]
                state[v] = eta + cond_sd[v] * rng.standard_normal()

    else:
        neighbours = _neighbour_table(spec)

        def sweep():
            for v in range(p):
                eta = spec.node_params[v]
                for u, theta in neighbours[v]:
                    eta += theta * state[u]
                kind = spec.kinds[v]
                if kind is Kind.GAUSSIAN:
                    state[v] = eta + rng.standard_normal()
                elif kind is Kind.BINARY:
                    state[v] = 1.0 if rng.random() < expit(eta) else 0.0
                else:
                    if eta > _ETA_ABORT:
                        raise DivergentSpecError(v, eta)
                    state[v] = float(rng.poisson(math.exp(min(eta, _ETA_CAP))))

    for _ in range(burn_in):
        sweep()
    for i in range(n):
        for _ in range(thin):
            sweep()
        values[i] = state
    return Dataset(values=values, kinds=spec.kinds)
