import itertools
import math
from fractions import Fraction

import networkx as nx
import numpy as np
import pytest

from quermass.errors import CapExceededError
from quermass.expansion import (Polymer, PolymerCluster, TranslatedShapeFamily, cluster_pressure,
                                convergence_check, count_lattice_animals, dimer_free_energy, dimer_self_test,
                                find_tau0, log_partition_clusters, log_partition_direct, sup_distance,
                                ursell_alpha, zeta)


def site(a: int, b: int, weight: float = 0.1, polymer_type: int = 0) -> Polymer:
    return Polymer(frozenset({(a, b)}), weight, polymer_type)


def alpha_by_edge_subsets(cluster: PolymerCluster) -> Fraction:
    """Signed count of connected spanning subgraphs, one edge subset at a time."""
    graph = cluster.incompatibility_graph()
    edges = list(graph.edges())
    total = 0
    for k in range(len(edges) + 1):
        for chosen in itertools.combinations(edges, k):
            sub = nx.Graph(chosen)
            sub.add_nodes_from(graph.nodes)
            if nx.is_connected(sub):
                total += (-1) ** k
    return Fraction(total, math.prod(math.factorial(m) for _, m in cluster.polymers))


class TestPolymer:
    def test_empty_support(self):
        with pytest.raises(ValueError):
            Polymer(frozenset(), 0.1)

    def test_disconnected_support(self):
        with pytest.raises(ValueError):
            Polymer(frozenset({(0, 0), (2, 0)}), 0.1)

    def test_diagonal_support_is_connected(self):
        assert Polymer(frozenset({(0, 0), (1, 1)}), 0.1).size == 2

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            Polymer(frozenset({(0, 0)}), -0.1)


class TestCompatibility:
    def test_sup_distance(self):
        assert sup_distance(site(0, 0), site(3, -2)) == 3

    def test_zeta(self):
        assert zeta(site(0, 0), site(1, 1)) == -1
        assert zeta(site(0, 0), site(2, 0)) == 0
        assert zeta(site(0, 0), site(5, 5, polymer_type=1)) == -1


class TestUrsell:
    def test_single_polymer(self):
        assert ursell_alpha(PolymerCluster.from_polymers([site(0, 0)])) == 1

    def test_incompatible_pair(self):
        assert ursell_alpha(PolymerCluster.from_polymers([site(0, 0), site(0, 1)])) == -1

    def test_repeated_polymer(self):
        assert ursell_alpha(PolymerCluster.from_polymers([site(0, 0), site(0, 0)])) == Fraction(-1, 2)

    def test_triangle(self):
        cluster = PolymerCluster.from_polymers([site(0, 0), site(0, 1), site(1, 0)])
        assert ursell_alpha(cluster) == 2

    def test_disconnected_cluster(self):
        cluster = PolymerCluster.from_polymers([site(0, 0), site(3, 0)])
        assert not cluster.is_connected()
        assert ursell_alpha(cluster) == 0

    @pytest.mark.parametrize("n", range(1, 7))
    def test_matches_edge_subset_enumeration(self, n):
        rng = np.random.default_rng(100 + n)
        for _ in range(8):
            a, b = rng.integers(0, 4, n), rng.integers(0, 4, n)
            types = (rng.random(n) < 0.2).astype(int)
            cluster = PolymerCluster.from_polymers(site(int(x), int(y), polymer_type=int(t))
                                                   for x, y, t in zip(a, b, types))
            assert cluster.n == n
            assert ursell_alpha(cluster) == alpha_by_edge_subsets(cluster)

    def test_cap(self):
        cluster = PolymerCluster.from_polymers([site(0, 0)] * 10)
        with pytest.raises(CapExceededError):
            ursell_alpha(cluster)

    def test_cluster_size_counts_multiplicity(self):
        domino = Polymer(frozenset({(0, 0), (1, 0)}), 0.1)
        cluster = PolymerCluster.from_polymers([domino, domino, site(2, 0)])
        assert cluster.n == 3
        assert cluster.size == 5
        assert len(cluster.support) == 3


class TestLatticeAnimals:
    def test_four_connected(self):
        assert count_lattice_animals(6, "4") == [1, 2, 6, 19, 63, 216]

    def test_sup_connected(self):
        assert count_lattice_animals(6, "sup") == [1, 4, 20, 110, 638, 3832]

    def test_unknown_connectivity(self):
        with pytest.raises(ValueError):
            count_lattice_animals(3, "hex")


class TestClusterSums:
    def test_dimer_free_energy(self):
        assert dimer_free_energy(0.0) == 0.0
        assert dimer_free_energy(2.0) == pytest.approx(math.log(2.0))

    @pytest.mark.parametrize("weight", [0.001, 0.01, 0.05])
    def test_dimer_self_test(self, weight):
        report = dimer_self_test(weight)
        assert report["passed"]
        assert report["g"] == pytest.approx(report["exact"], abs=report["tail_bound"])

    def test_single_site_gas(self):
        w = math.exp(-5.0)
        family = TranslatedShapeFamily([(0, 0)], w)
        assert cluster_pressure(family, 5.0, 1, 1, check=False).g == pytest.approx(w)
        assert cluster_pressure(family, 5.0, 1, 2, check=False).g == pytest.approx(w - 4.5 * w * w)

    def test_window_terms(self):
        family = TranslatedShapeFamily([(0, 0)], math.exp(-10.0))
        window = [(a, b) for a in range(3) for b in range(3)]
        result = cluster_pressure(family, 10.0, 1, 2, window=window, check=False)
        assert result.window_size == 9
        assert result.log_phi == pytest.approx(9 * result.g)
        assert result.boundary_bound == pytest.approx(result.eta * 16)

    def test_engine_matches_direct_enumeration(self):
        tau, lmax = 5.0, 4
        window = [(a, b) for a in range(2) for b in range(3)]
        polymers = [Polymer(frozenset({s}), math.exp(-tau)) for s in window]
        polymers += [Polymer(frozenset({(0, b), (1, b)}), math.exp(-2 * tau)) for b in range(3)]
        direct = log_partition_direct(polymers)
        clusters = log_partition_clusters(polymers, lmax)
        assert abs(direct - clusters) <= len(window) * math.exp(-tau * (lmax + 1) / 2)


class TestConvergence:
    def test_large_tau_converges(self):
        assert convergence_check(100.0).satisfied

    def test_small_tau_diverges(self):
        check = convergence_check(1.0)
        assert not check.satisfied
        assert math.isinf(check.tail_bound)

    def test_unknown_criterion(self):
        with pytest.raises(ValueError):
            convergence_check(10.0, criterion="ratio")

    def test_tau0_for_the_worked_example(self):
        assert find_tau0(113) == pytest.approx(82.14, abs=0.5)

    def test_tau0_passes_and_slightly_smaller_fails(self):
        tau0 = find_tau0(1, criterion="basic")
        assert convergence_check(tau0).satisfied
        assert not convergence_check(0.99 * tau0).satisfied
