"""Polymer models and their cluster expansion.

Polymers are finite d_inf-connected sets of lattice sites carrying a weight
and a type.  Two polymers are compatible when they have the same type and
lie at sup-distance greater than 1.  The log of the polymer partition
function is expanded as a sum over clusters (connected multisets of
polymers) weighted by exact Ursell coefficients.
"""
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Dict, FrozenSet, Hashable, Iterable, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np
import pandas as pd

from .errors import CapExceededError

logger = logging.getLogger(__name__)

Site = Tuple[int, int]
Incompatibility = Callable[["Polymer", "Polymer"], bool]

URSELL_CAP = 9
CONNECTIVITIES = ("sup", "4")
CRITERIA = ("basic", "derivative")
# upper bound on the growth constant of 4-connected lattice animals
SITE_ANIMAL_GROWTH = 4.65
KING_STEPS = [(da, db) for da in (-1, 0, 1) for db in (-1, 0, 1) if (da, db) != (0, 0)]
ROOK_STEPS = [(1, 0), (-1, 0), (0, 1), (0, -1)]


def _is_sup_connected(sites: FrozenSet[Site]) -> bool:
    start = next(iter(sites))
    seen = {start}
    stack = [start]
    while stack:
        a, b = stack.pop()
        for da, db in KING_STEPS:
            n = (a + da, b + db)
            if n in sites and n not in seen:
                seen.add(n)
                stack.append(n)
    return len(seen) == len(sites)


@dataclass(frozen=True)
class Polymer:
    """A weighted, typed, d_inf-connected set of sites.

    ``key`` distinguishes polymers sharing a support (e.g. two spin
    decorations of the same sites).
    """

    support: FrozenSet[Site]
    weight: float
    type: int = 0
    key: Hashable = None

    def __post_init__(self):
        support = frozenset((int(a), int(b)) for a, b in self.support)
        object.__setattr__(self, "support", support)
        if not support:
            raise ValueError("Polymer support must be nonempty")
        if not _is_sup_connected(support):
            raise ValueError(f"Polymer support {sorted(support)} is not d_inf-connected")
        if not self.weight >= 0:
            raise ValueError(f"Polymer weight must be >= 0, got {self.weight}")

    @property
    def size(self) -> int:
        return len(self.support)

    @property
    def log_weight(self) -> float:
        return math.log(self.weight) if self.weight > 0 else -math.inf

    @property
    def sort_key(self) -> tuple:
        return (self.type, tuple(sorted(self.support)), repr(self.key))

    def translated(self, da: int, db: int) -> "Polymer":
        return Polymer(frozenset((a + da, b + db) for a, b in self.support), self.weight, self.type, self.key)


def sup_distance(a: Polymer, b: Polymer) -> int:
    """Smallest sup-norm distance between the supports."""
    sa = np.array(sorted(a.support))
    sb = np.array(sorted(b.support))
    return int(np.abs(sa[:, None, :] - sb[None, :, :]).max(axis=2).min())


def geometrically_incompatible(a: Polymer, b: Polymer) -> bool:
    return a.type != b.type or sup_distance(a, b) <= 1


def zeta(a: Polymer, b: Polymer, incompatible: Optional[Incompatibility] = None) -> int:
    """0 for compatible polymers, -1 otherwise."""
    incompatible = incompatible or geometrically_incompatible
    return -1 if incompatible(a, b) else 0


@dataclass(frozen=True)
class PolymerCluster:
    """Multiset of polymers stored as sorted (polymer, multiplicity) pairs."""

    polymers: Tuple[Tuple[Polymer, int], ...]

    @classmethod
    def from_polymers(cls, polymers: Iterable[Polymer]) -> "PolymerCluster":
        counts = Counter(polymers)
        return cls(tuple(sorted(counts.items(), key=lambda item: item[0].sort_key)))

    def add(self, polymer: Polymer) -> "PolymerCluster":
        counts = dict(self.polymers)
        counts[polymer] = counts.get(polymer, 0) + 1
        return PolymerCluster(tuple(sorted(counts.items(), key=lambda item: item[0].sort_key)))

    @property
    def n(self) -> int:
        return sum(m for _, m in self.polymers)

    @property
    def support(self) -> FrozenSet[Site]:
        return frozenset().union(*(poly.support for poly, _ in self.polymers))

    @property
    def size(self) -> int:
        """Total size: sum of multiplicity times support size."""
        return sum(m * poly.size for poly, m in self.polymers)

    def members(self) -> List[Polymer]:
        return [poly for poly, m in self.polymers for _ in range(m)]

    def log_abs_weight(self) -> float:
        return math.fsum(m * poly.log_weight for poly, m in self.polymers)

    def incompatibility_graph(self, incompatible: Optional[Incompatibility] = None) -> nx.Graph:
        incompatible = incompatible or geometrically_incompatible
        members = self.members()
        graph = nx.Graph()
        graph.add_nodes_from(range(len(members)))
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                if incompatible(members[i], members[j]):
                    graph.add_edge(i, j)
        return graph

    def is_connected(self, incompatible: Optional[Incompatibility] = None) -> bool:
        return self.n > 0 and nx.is_connected(self.incompatibility_graph(incompatible))


def _connected_signed_sum(n: int, adjacency: List[int]) -> int:
    """Sum over connected spanning subgraphs of the graph of (-1)^edges.

    Uses the subset recursion f(S) = sum_{T contains min S} c(T) f(S \\ T),
    where f(S) is the signed sum over all spanning subgraphs of S (1 when S
    is independent, 0 otherwise).
    """
    full = (1 << n) - 1
    independent = [False] * (full + 1)
    independent[0] = True
    for mask in range(1, full + 1):
        low = mask & -mask
        v = low.bit_length() - 1
        rest = mask ^ low
        independent[mask] = independent[rest] and not (adjacency[v] & rest)
    connected = [0] * (full + 1)
    for mask in range(1, full + 1):
        low = mask & -mask
        rest = mask ^ low
        total = 1 if independent[mask] else 0
        sub = rest
        # proper subsets T of mask containing the lowest vertex
        while True:
            t = sub | low
            if t != mask:
                total -= connected[t] * (1 if independent[mask ^ t] else 0)
            if sub == 0:
                break
            sub = (sub - 1) & rest
        connected[mask] = total
    return connected[full]


def ursell_alpha(cluster: PolymerCluster, incompatible: Optional[Incompatibility] = None,
                 cap: int = URSELL_CAP) -> Fraction:
    """Exact Ursell coefficient alpha(X) of a cluster.

    Raises:
        CapExceededError: If the total multiplicity exceeds ``cap``
    """
    n = cluster.n
    if n > cap:
        raise CapExceededError(f"Cluster of multiplicity {n} exceeds the Ursell cap {cap}")
    if n == 0:
        return Fraction(0)
    graph = cluster.incompatibility_graph(incompatible)
    adjacency = [0] * n
    for i, j in graph.edges():
        adjacency[i] |= 1 << j
        adjacency[j] |= 1 << i
    denominator = math.prod(math.factorial(m) for _, m in cluster.polymers)
    return Fraction(_connected_signed_sum(n, adjacency), denominator)


class PolymerFamily:
    """Translation-invariant or finite source of polymers."""

    min_size = 1

    def incompatible(self, a: Polymer, b: Polymer) -> bool:
        return geometrically_incompatible(a, b)

    def containing(self, site: Site) -> List[Polymer]:
        raise NotImplementedError

    def incompatible_with(self, polymer: Polymer) -> List[Polymer]:
        raise NotImplementedError


class FinitePolymerFamily(PolymerFamily):
    """An explicit list of polymers."""

    def __init__(self, polymers: Sequence[Polymer], incompatible: Optional[Incompatibility] = None):
        self.polymers = sorted(polymers, key=lambda poly: poly.sort_key)
        self._incompatible = incompatible or geometrically_incompatible
        self._neighbours: Dict[Polymer, List[Polymer]] = {}
        self.min_size = min((poly.size for poly in self.polymers), default=1)

    def incompatible(self, a: Polymer, b: Polymer) -> bool:
        return self._incompatible(a, b)

    def containing(self, site: Site) -> List[Polymer]:
        return [poly for poly in self.polymers if site in poly.support]

    def incompatible_with(self, polymer: Polymer) -> List[Polymer]:
        if polymer not in self._neighbours:
            self._neighbours[polymer] = [q for q in self.polymers if self._incompatible(polymer, q)]
        return self._neighbours[polymer]

    @property
    def sites(self) -> Set[Site]:
        return set().union(*(poly.support for poly in self.polymers)) if self.polymers else set()


def _dimer(i: int, weight: float) -> Polymer:
    return Polymer(frozenset({(i, 0), (i + 1, 0)}), weight)


def _share_site(a: Polymer, b: Polymer) -> bool:
    return bool(a.support & b.support)


class DimerFamily(PolymerFamily):
    """Dimers on the line Z x {0}; two dimers clash when they share a site."""

    min_size = 2

    def __init__(self, weight: float):
        self.weight = float(weight)

    def incompatible(self, a: Polymer, b: Polymer) -> bool:
        return _share_site(a, b)

    def containing(self, site: Site) -> List[Polymer]:
        if site[1] != 0:
            return []
        return [_dimer(site[0] - 1, self.weight), _dimer(site[0], self.weight)]

    def incompatible_with(self, polymer: Polymer) -> List[Polymer]:
        i = min(a for a, _ in polymer.support)
        return [_dimer(i + k, self.weight) for k in (-1, 0, 1)]


class TranslatedShapeFamily(PolymerFamily):
    """All lattice translates of one shape, with a common weight and type."""

    def __init__(self, shape: Iterable[Site], weight: float, polymer_type: int = 0):
        self.shape = sorted((int(a), int(b)) for a, b in shape)
        self.weight = float(weight)
        self.type = polymer_type
        self.min_size = len(self.shape)

    def _at(self, offset: Site) -> Polymer:
        da, db = offset
        return Polymer(frozenset((a + da, b + db) for a, b in self.shape), self.weight, self.type)

    def containing(self, site: Site) -> List[Polymer]:
        offsets = sorted({(site[0] - a, site[1] - b) for a, b in self.shape})
        return [self._at(offset) for offset in offsets]

    def incompatible_with(self, polymer: Polymer) -> List[Polymer]:
        reach = polymer.support | exterior_sites(polymer.support)
        offsets = sorted({(x - a, y - b) for x, y in reach for a, b in self.shape})
        return [self._at(offset) for offset in offsets]


def dimer_free_energy(weight: float) -> float:
    """Exact free energy per site of the monomer-dimer chain."""
    return math.log((1.0 + math.sqrt(1.0 + 4.0 * weight)) / 2.0)


def grow_clusters(roots: Iterable[Polymer], family: PolymerFamily, max_size: int) -> List[PolymerCluster]:
    """All connected clusters of total size <= max_size holding at least one root.

    Clusters are grown one incompatible polymer at a time, breadth-first by
    the number of polymers, and returned in canonical order.
    """
    frontier = {PolymerCluster.from_polymers([poly]) for poly in roots
                if poly.weight > 0 and poly.size <= max_size}
    seen = set(frontier)
    while frontier:
        grown = set()
        for cluster in frontier:
            size = cluster.size
            if size + family.min_size > max_size:
                continue
            for member, _ in cluster.polymers:
                for poly in family.incompatible_with(member):
                    if poly.weight <= 0 or size + poly.size > max_size:
                        continue
                    candidate = cluster.add(poly)
                    if candidate not in seen:
                        seen.add(candidate)
                        grown.add(candidate)
        frontier = grown
    return sorted(seen, key=lambda c: (c.size, c.n, [(poly.sort_key, m) for poly, m in c.polymers]))


def cluster_term(cluster: PolymerCluster, incompatible: Optional[Incompatibility] = None) -> float:
    """Psi(X) = alpha(X) prod w_gamma, with the product formed in log space."""
    alpha = ursell_alpha(cluster, incompatible)
    if alpha == 0:
        return 0.0
    return float(alpha) * math.exp(cluster.log_abs_weight())


@dataclass
class ExpansionResult:
    """Truncated cluster sum g with its rigorous tail."""

    g: float
    tau: float
    l0: int
    lmax: int
    eta: float
    tail_bound: float
    terms: pd.DataFrame
    n_clusters: int
    window_size: Optional[int] = None
    log_phi: Optional[float] = None
    boundary_bound: Optional[float] = None
    converges: Optional[bool] = None

    @property
    def partial_sum(self) -> float:
        return self.g

    def to_dict(self) -> dict:
        return {
            "g": self.g, "partial_sum": self.g, "tau": self.tau, "l0": self.l0, "Lmax": self.lmax,
            "eta": self.eta, "tail_bound": self.tail_bound, "n_clusters": self.n_clusters,
            "window_size": self.window_size, "log_phi": self.log_phi, "boundary_bound": self.boundary_bound,
            "converges": self.converges, "terms": self.terms.to_dict(orient="records"),
        }


def eta_bound(tau: float, l0: int) -> float:
    return 2.0 * math.exp(-tau * l0 / 3.0)


def exterior_sites(sites: Iterable[Site]) -> Set[Site]:
    """Sites at sup-distance exactly 1 from a finite site set."""
    sites = set(sites)
    return {(a + da, b + db) for a, b in sites for da, db in KING_STEPS} - sites


def cluster_pressure(family: PolymerFamily, tau: float, l0: int, lmax: int,
                     window: Optional[Iterable[Site]] = None, origin: Site = (0, 0),
                     check: bool = True) -> ExpansionResult:
    """Pressure g = sum over clusters X with origin in X of Psi(X) / |X|.

    Args:
        family: Polymer source
        tau: Stability exponent of the weights (w <= exp(-tau |gamma|))
        l0: Smallest polymer size
        lmax: Largest total cluster size kept
        window: Optional finite site set for log Phi = g |window| + boundary term
        origin: Site playing the role of 0
        check: Run the convergence check and warn when it fails

    Returns:
        ExpansionResult
    """
    roots = family.containing(origin)
    unstable = [poly for poly in roots if poly.weight > math.exp(-tau * poly.size) * (1 + 1e-12)]
    if check and unstable:
        logger.warning(f"{len(unstable)} polymers at the origin are not {tau:.4g}-stable")
    converges = None
    if check:
        converges = convergence_check(tau, l0).satisfied
        if not converges:
            logger.warning(f"Convergence check fails at tau = {tau:.4g}, l0 = {l0}; the partial sum may diverge")

    clusters = grow_clusters(roots, family, lmax)
    rows: Dict[int, List[float]] = {}
    for cluster in clusters:
        term = cluster_term(cluster, family.incompatible) / len(cluster.support)
        rows.setdefault(cluster.size, []).append(term)
    table = pd.DataFrame([{"size": size, "clusters": len(terms), "term": math.fsum(terms)}
                          for size, terms in sorted(rows.items())], columns=["size", "clusters", "term"])
    g = math.fsum(table["term"]) if len(table) else 0.0
    result = ExpansionResult(g, tau, l0, lmax, eta_bound(tau, l0), math.exp(-tau * (lmax + 1) / 2.0),
                             table, len(clusters), converges=converges)
    if window is not None:
        window = set(window)
        result.window_size = len(window)
        result.log_phi = g * len(window)
        result.boundary_bound = result.eta * len(exterior_sites(window))
    logger.debug(f"Cluster sum over {len(clusters)} clusters up to size {lmax}: g = {g:.6g}")
    return result


def log_partition_direct(polymers: Sequence[Polymer], incompatible: Optional[Incompatibility] = None) -> float:
    """log of the sum over pairwise compatible polymer subsets of the weight products."""
    incompatible = incompatible or geometrically_incompatible
    polymers = sorted((poly for poly in polymers if poly.weight > 0), key=lambda poly: poly.sort_key)
    n = len(polymers)
    clash = [0] * n
    for i in range(n):
        for j in range(n):
            if i == j or incompatible(polymers[i], polymers[j]):
                clash[i] |= 1 << j
    weights = [poly.weight for poly in polymers]

    @lru_cache(maxsize=None)
    def phi(mask: int) -> float:
        if mask == 0:
            return 1.0
        low = mask & -mask
        v = low.bit_length() - 1
        return phi(mask ^ low) + weights[v] * phi(mask & ~clash[v])

    value = phi((1 << n) - 1)
    phi.cache_clear()
    return math.log(value)


def log_partition_clusters(polymers: Sequence[Polymer], lmax: int,
                           incompatible: Optional[Incompatibility] = None) -> float:
    """Sum of Psi(X) over all clusters of the given polymers with total size <= lmax."""
    family = FinitePolymerFamily(polymers, incompatible)
    clusters = grow_clusters(family.polymers, family, lmax)
    return math.fsum(cluster_term(cluster, family.incompatible) for cluster in clusters)


def dimer_self_test(weight: float = 0.01, lmax: int = 12) -> dict:
    """Compare the engine on the dimer chain with the exact free energy."""
    tau = -math.log(weight) / 2.0
    result = cluster_pressure(DimerFamily(weight), tau, 2, lmax, check=False)
    exact = dimer_free_energy(weight)
    error = abs(result.g - exact)
    return {"weight": weight, "g": result.g, "exact": exact, "error": error,
            "tail_bound": result.tail_bound, "passed": bool(error <= result.tail_bound)}


@lru_cache(maxsize=None)
def _animal_counts(max_size: int, connectivity: str) -> Tuple[int, ...]:
    steps = KING_STEPS if connectivity == "sup" else ROOK_STEPS
    counts = [0] * (max_size + 1)

    def allowed(cell: Site) -> bool:
        return cell[1] > 0 or (cell[1] == 0 and cell[0] >= 0)

    def extend(untried: List[Site], size: int, reached: Set[Site]):
        untried = list(untried)
        while untried:
            cell = untried.pop()
            counts[size + 1] += 1
            if size + 1 < max_size:
                new = [(cell[0] + da, cell[1] + db) for da, db in steps]
                new = [c for c in new if allowed(c) and c not in reached]
                new = list(dict.fromkeys(new))
                extend(untried + new, size + 1, reached | set(new))

    if max_size >= 1:
        extend([(0, 0)], 0, {(0, 0)})
    return tuple(counts[1:])


def count_lattice_animals(max_size: int, connectivity: str = "sup") -> List[int]:
    """Numbers of fixed lattice animals of sizes 1..max_size (Redelmeier enumeration).

    Args:
        max_size: Largest animal size
        connectivity: "sup" (8-neighbour) or "4"
    """
    if connectivity not in CONNECTIVITIES:
        raise ValueError(f"Unknown connectivity '{connectivity}', expected one of {CONNECTIVITIES}")
    return list(_animal_counts(int(max_size), connectivity))


@dataclass(frozen=True)
class ConvergenceCheck:
    satisfied: bool
    partial_sum: float
    tail_bound: float
    threshold: float
    terms: Tuple[float, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"satisfied": self.satisfied, "partial_sum": self.partial_sum, "tail_bound": self.tail_bound,
                "threshold": self.threshold, "terms": list(self.terms)}


def _log_term(k: int, log_count: float, tau: float, criterion: str, d: int) -> float:
    """log of (count) 2^k e^{-tau k + 3^d k}, or its derivative-criterion variant."""
    if criterion == "basic":
        return log_count + k * math.log(2.0) + (3 ** d - tau) * k
    return log_count + k * math.log(2.0) + (d / (d - 1)) * math.log(k) + (3 ** d - tau / 2.0 + 1.0) * k


def _log_count_bound(k: int, connectivity: str) -> float:
    """log of an upper bound on the number of connected k-sets containing the origin."""
    if connectivity == "sup":
        return (k - 1) * math.log(7.0 * math.e)
    return math.log(k) + k * math.log(SITE_ANIMAL_GROWTH)


def _tail(start: int, tau: float, criterion: str, d: int, connectivity: str) -> float:
    """Rigorous bound on the sum of bounded terms from size ``start`` on.

    Consecutive ratios of the bounded terms decrease in k, so once a ratio r
    drops below 1 the remainder after term t is at most t r / (1 - r).
    """
    def log_term(k: int) -> float:
        return _log_term(k, _log_count_bound(k, connectivity), tau, criterion, d)

    growth = 7.0 * math.e if connectivity == "sup" else SITE_ANIMAL_GROWTH
    exponent = 3 ** d - tau if criterion == "basic" else 3 ** d - tau / 2.0 + 1.0
    if math.log(2.0 * growth) + exponent >= 0:
        return math.inf
    total = 0.0
    k = start
    while True:
        current = log_term(k)
        ratio = math.exp(log_term(k + 1) - current)
        value = math.exp(min(current, 700.0))
        total += value
        if ratio < 1.0:
            remainder = value * ratio / (1.0 - ratio)
            if remainder <= 1e-12 * total or k > start + 10000:
                return total + remainder
        k += 1


def convergence_check(tau: float, l0: int = 1, size_cap: int = 6, connectivity: str = "sup",
                      criterion: str = "basic", d: int = 2) -> ConvergenceCheck:
    """Sufficient condition for convergence of the contour cluster expansion.

    Polymers containing the origin are over-counted as connected site sets
    times 2^size spin labelings.  Sizes from l0 to size_cap use exact
    lattice-animal counts, larger sizes a growth-constant bound.

    Args:
        tau: Stability exponent
        l0: Smallest polymer size
        size_cap: Largest size counted exactly
        connectivity: "sup" or "4"
        criterion: "basic" (sum <= 1) or "derivative" (weighted sum <= eta)

    Returns:
        ConvergenceCheck
    """
    if criterion not in CRITERIA:
        raise ValueError(f"Unknown criterion '{criterion}', expected one of {CRITERIA}")
    l0 = max(1, int(l0))
    counts = count_lattice_animals(size_cap, connectivity) if size_cap >= l0 else []
    terms = []
    for k in range(l0, size_cap + 1):
        containing = k * counts[k - 1]
        terms.append(math.exp(min(_log_term(k, math.log(containing), tau, criterion, d), 700.0)))
    partial = math.fsum(terms)
    tail = _tail(max(l0, size_cap + 1), tau, criterion, d, connectivity)
    threshold = 1.0 if criterion == "basic" else min(1.0, eta_bound(tau, l0))
    satisfied = bool(partial + tail <= threshold)
    return ConvergenceCheck(satisfied, partial, tail, threshold, tuple(terms))


@lru_cache(maxsize=None)
def find_tau0(l0: int = 1, connectivity: str = "sup", criterion: str = "derivative", size_cap: int = 6,
              d: int = 2, tol: float = 1e-6) -> float:
    """Smallest tau passing the convergence check, by doubling then bisection."""
    hi = 16.0
    while not convergence_check(hi, l0, size_cap, connectivity, criterion, d).satisfied:
        hi *= 2.0
        if hi > 1e6:
            raise ValueError(f"No tau up to 1e6 passes the convergence check for l0 = {l0}")
    lo = 0.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if convergence_check(mid, l0, size_cap, connectivity, criterion, d).satisfied:
            hi = mid
        else:
            lo = mid
    return hi
