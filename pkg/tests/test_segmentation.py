"""
Unit tests for spectral segmentation and region assignment.
"""
import unittest

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from elastomatch_core.modules.errors import DegenerateSegmentation, DimensionMismatch
from elastomatch_core.modules.segmentation import (
    RegionAssignment,
    SegmentLabels,
    _repair_connectivity,
    assign_regions,
    hungarian,
    region_signatures,
    segment_shape,
)
from elastomatch_core.modules.spectral import (
    DescriptorField,
    DescriptorKind,
    build_laplacian_3d,
    eigendecompose,
)
from elastomatch_core.modules.synthetic import class_template


def path_graph(n: int) -> sparse.csr_matrix:
    rows = np.arange(n - 1)
    upper = sparse.coo_matrix((np.ones(n - 1), (rows, rows + 1)), shape=(n, n))
    return (upper + upper.T).tocsr()


class TestSegmentShape(unittest.TestCase):
    """Test cases for segment_shape."""

    @classmethod
    def setUpClass(cls):
        """Set up a shared two-lobed mesh and its basis."""
        cls.mesh = class_template('two_lobe', level=2)
        cls.basis = eigendecompose(build_laplacian_3d(cls.mesh), k=12)

    def assert_connected_regions(self, labels: SegmentLabels):
        graph = sparse.coo_matrix(self.mesh.edge_graph)
        for label in range(labels.r):
            members = labels.labels == label
            keep = members[graph.row] & members[graph.col]
            sub = sparse.coo_matrix((np.ones(int(keep.sum())), (graph.row[keep], graph.col[keep])),
                                    shape=graph.shape).tocsr()[members][:, members]
            count, _ = connected_components(sub, directed=False)
            self.assertEqual(count, 1, f"region {label} is split")

    def test_regions_nonempty_and_connected(self):
        """Test that every region is present and connected."""
        for r in (2, 3, 5):
            labels = segment_shape(self.basis, self.mesh.edge_graph, r=r)
            self.assertEqual(labels.n, self.mesh.n)
            self.assertEqual(labels.r, r)
            self.assertTrue(np.all(labels.region_sizes() > 0))
            self.assert_connected_regions(labels)

    def test_deterministic(self):
        """Test that equal inputs and seed give equal labels."""
        first = segment_shape(self.basis, self.mesh.edge_graph, r=4, seed=7)
        second = segment_shape(self.basis, self.mesh.edge_graph, r=4, seed=7)
        np.testing.assert_array_equal(first.labels, second.labels)

    def test_region_count_bounds(self):
        """Test that r outside [2, 16] or k <= r is rejected."""
        with self.assertRaises(ValueError):
            segment_shape(self.basis, self.mesh.edge_graph, r=1)
        with self.assertRaises(ValueError):
            segment_shape(self.basis, self.mesh.edge_graph, r=17)
        with self.assertRaises(ValueError):
            segment_shape(self.basis, self.mesh.edge_graph, r=12)

    def test_adjacency_size_mismatch(self):
        """Test that an adjacency of the wrong size is rejected."""
        with self.assertRaises(DimensionMismatch):
            segment_shape(self.basis, path_graph(5), r=2)

    def test_labels_serialization(self):
        """Test dictionary conversion of labels."""
        labels = SegmentLabels(labels=np.array([0, 1, 1, 0]), r=2)
        restored = SegmentLabels.from_dict(labels.to_dict())
        np.testing.assert_array_equal(restored.labels, labels.labels)
        self.assertEqual(restored.r, 2)


class TestConnectivityRepair(unittest.TestCase):
    """Test cases for merging disconnected label pieces."""

    def test_orphans_join_neighbors(self):
        """Test that stray pieces take the label of their kept neighbor."""
        labels = np.array([0, 0, 1, 0, 1, 1])
        repaired = _repair_connectivity(labels, path_graph(6), r=2)
        np.testing.assert_array_equal(repaired, [0, 0, 0, 1, 1, 1])

    def test_connected_labels_unchanged(self):
        """Test that already connected regions are kept."""
        labels = np.array([0, 0, 1, 1, 2, 2])
        np.testing.assert_array_equal(_repair_connectivity(labels, path_graph(6), r=3), labels)

    def test_empty_region(self):
        """Test that a missing label raises DegenerateSegmentation."""
        with self.assertRaises(DegenerateSegmentation):
            _repair_connectivity(np.array([0, 0, 0]), path_graph(3), r=2)


class TestRegionSignatures(unittest.TestCase):
    """Test cases for region signatures."""

    def test_mass_weighted_mean(self):
        """Test signatures against a hand computation."""
        labels = SegmentLabels(labels=np.array([0, 0, 1]), r=2)
        hks = DescriptorField(values=np.array([[1.0], [3.0], [5.0]]), kind=DescriptorKind.HKS)
        wks = DescriptorField(values=np.array([[0.0], [1.0], [2.0]]), kind=DescriptorKind.WKS)
        mass = np.array([1.0, 3.0, 2.0])
        signatures = region_signatures(labels, hks, wks, mass)
        np.testing.assert_allclose(signatures, [[2.5, 0.75], [5.0, 2.0]])

    def test_size_mismatch(self):
        """Test that inconsistent sizes are rejected."""
        labels = SegmentLabels(labels=np.array([0, 1]), r=2)
        field = DescriptorField(values=np.ones((3, 1)), kind=DescriptorKind.HKS)
        with self.assertRaises(DimensionMismatch):
            region_signatures(labels, field, field, np.ones(3))


class TestHungarian(unittest.TestCase):
    """Test cases for the region assignment."""

    def test_known_optimum(self):
        """Test a 3 x 3 instance with a unique optimum of cost 5."""
        assignment = hungarian(np.array([[4, 1, 3], [2, 0, 5], [3, 2, 2]]))
        self.assertEqual(assignment.perm, (1, 0, 2))
        self.assertEqual(assignment.cost, 5.0)

    def test_ties_pick_lexicographically_smallest(self):
        """Test tie-breaking among equal-cost permutations."""
        self.assertEqual(hungarian(np.zeros((4, 4))).perm, (0, 1, 2, 3))
        self.assertEqual(hungarian(np.eye(3)).perm, (1, 2, 0))

    def test_tiny_cost_difference_is_not_a_tie(self):
        """Test that a permutation worse by 1e-10 is not treated as optimal."""
        assignment = hungarian(np.array([[1e-10, 0.0], [0.0, 0.0]]))
        self.assertEqual(assignment.perm, (1, 0))
        self.assertEqual(assignment.cost, 0.0)

    def test_optimal_against_enumeration(self):
        """Test optimality on random instances by enumerating permutations."""
        from itertools import permutations
        rng = np.random.default_rng(5)
        for _ in range(20):
            cost = rng.integers(0, 4, size=(5, 5)).astype(float)
            optimum = min(sum(cost[i, p[i]] for i in range(5)) for p in permutations(range(5)))
            best = min(p for p in permutations(range(5))
                       if sum(cost[i, p[i]] for i in range(5)) == optimum)
            assignment = hungarian(cost)
            self.assertEqual(assignment.cost, optimum)
            self.assertEqual(assignment.perm, best)

    def test_non_square_rejected(self):
        """Test that rectangular costs are rejected."""
        with self.assertRaises(DimensionMismatch):
            hungarian(np.zeros((2, 3)))

    def test_assign_regions_and_apply(self):
        """Test assignment from signatures and relabeling."""
        sig3d = np.array([[0.0, 0.0], [1.0, 1.0], [5.0, 0.0]])
        sig2d = sig3d[[1, 2, 0]]
        assignment = assign_regions(sig2d, sig3d)
        self.assertEqual(assignment.perm, (1, 2, 0))
        self.assertEqual(assignment.cost, 0.0)

        relabeled = assignment.apply(SegmentLabels(labels=np.array([0, 1, 2, 0]), r=3))
        np.testing.assert_array_equal(relabeled.labels, [1, 2, 0, 1])

        with self.assertRaises(DimensionMismatch):
            RegionAssignment(perm=(0, 1), cost=0.0).apply(relabeled)


if __name__ == '__main__':
    unittest.main()
