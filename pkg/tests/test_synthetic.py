"""
Unit tests for synthetic shapes and benchmark data.
"""
import itertools
import json
import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np

from elastomatch_core.modules.geometry_io import load_curve, load_mesh
from elastomatch_core.modules.synthetic import (
    CLASSES,
    _class_map,
    class_template,
    cut_and_project_query,
    deform,
    grid_for_size,
    icosphere,
    planted_cost,
    planted_walk,
    star_curve,
    symmetric_truths,
    template_symmetries,
    torus_mesh,
    write_benchmark,
)


class TestMeshes(unittest.TestCase):
    """Test cases for synthetic meshes."""

    def test_icosphere_sizes(self):
        """Test vertex counts 10 * 4^level + 2 and unit radius."""
        for level, n in ((0, 12), (1, 42), (2, 162)):
            mesh = icosphere(level)
            self.assertEqual(mesh.n, n)
            self.assertEqual(mesh.num_faces, 20 * 4 ** level)
            np.testing.assert_allclose(np.linalg.norm(mesh.vertices, axis=1), 1.0)

    def test_class_templates(self):
        """Test that every class keeps the sphere connectivity."""
        for shape_class in CLASSES:
            mesh = class_template(shape_class, level=1)
            self.assertEqual(mesh.n, 42)
        with self.assertRaises(ValueError):
            class_template('cube')

    def test_deform_is_seeded(self):
        """Test that equal seeds give equal targets and faces are kept."""
        template = class_template('two_lobe', level=1)
        first = deform(template, seed=3)
        second = deform(template, seed=3)
        other = deform(template, seed=4)
        np.testing.assert_array_equal(first.vertices, second.vertices)
        np.testing.assert_array_equal(first.faces, template.faces)
        self.assertFalse(np.allclose(first.vertices, other.vertices))

    def test_torus(self):
        """Test torus size and regular valence."""
        mesh = torus_mesh(6, 4)
        self.assertEqual(mesh.n, 24)
        self.assertTrue(all(len(neighbors) == 6 for neighbors in mesh.adjacency))
        with self.assertRaises(ValueError):
            torus_mesh(2, 5)
        a, b = grid_for_size(500)
        self.assertLess(abs(a * b - 500), 30)


class TestQueries(unittest.TestCase):
    """Test cases for query curves and planted costs."""

    def test_query_ground_truth(self):
        """Test that curve points are projections of their true vertices."""
        sphere = icosphere(2)
        for shape_class in CLASSES:
            curve, truth = cut_and_project_query(shape_class)
            self.assertEqual(curve.m, len(truth))
            self.assertEqual(len(set(truth)), len(truth))
            projected = _class_map(np.asarray(sphere.vertices)[truth], shape_class)[:, :2]
            np.testing.assert_array_equal(curve.points, projected)

    def test_template_symmetries(self):
        """Test the reflection isometries found for each class template."""
        sphere = np.asarray(icosphere(1).vertices)
        expected = {'ellipsoid': 7, 'two_lobe': 7, 'three_lobe': 3}
        for shape_class, count in expected.items():
            permutations = template_symmetries(shape_class, level=1)
            self.assertEqual(len(permutations), count, shape_class)
            mapped = _class_map(sphere, shape_class)
            for perm in permutations:
                np.testing.assert_array_equal(np.sort(perm), np.arange(len(sphere)))
                flip = next(np.array(signs) for signs in itertools.product((1.0, -1.0), repeat=3)
                            if np.allclose(sphere[perm], sphere * np.array(signs)))
                np.testing.assert_allclose(mapped[perm], mapped * flip, atol=1e-12)

    def test_symmetric_truths(self):
        """Test that symmetric truths are valid vertex lists of query length."""
        curve, truth = cut_and_project_query('ellipsoid', level=1)
        alternatives = symmetric_truths('ellipsoid', truth, level=1)
        self.assertEqual(len(alternatives), 7)
        for alternative in alternatives:
            self.assertEqual(len(alternative), curve.m)
            self.assertTrue(all(0 <= v < 42 for v in alternative))
        self.assertTrue(any(alternative != truth for alternative in alternatives))

    def test_star_curve(self):
        """Test star curve size and orientation."""
        curve = star_curve(12, seed=1)
        self.assertEqual(curve.m, 12)
        self.assertGreater(curve.area, 0)
        with self.assertRaises(ValueError):
            star_curve(2)

    def test_planted_walk_is_closed(self):
        """Test that consecutive walk vertices are equal or adjacent, cyclically."""
        mesh = torus_mesh(8, 4)
        for m in (5, 8, 9):
            walk = planted_walk(mesh, m, seed=m)
            self.assertEqual(len(walk), m)
            for i in range(m):
                a, b = walk[i], walk[(i + 1) % m]
                self.assertTrue(a == b or b in mesh.adjacency[a])

    def test_planted_cost(self):
        """Test one zero per row at the walk vertex."""
        D = planted_cost([2, 0, 1], 4)
        self.assertEqual(D.shape, (3, 4))
        np.testing.assert_array_equal(np.argmin(D, axis=1), [2, 0, 1])
        self.assertEqual(int((D == 0).sum()), 3)


class TestBenchmarkWriter(unittest.TestCase):
    """Test cases for write_benchmark."""

    def setUp(self):
        """Set up test fixtures."""
        self.test_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        """Clean up test fixtures."""
        if self.test_dir.exists():
            shutil.rmtree(self.test_dir)

    def test_layout(self):
        """Test the written files and that they load."""
        manifest = write_benchmark(str(self.test_dir), seed=1, targets_per_class=2, level=1)
        self.assertEqual(len(manifest['targets']), 2 * len(CLASSES))
        self.assertEqual(json.loads((self.test_dir / 'manifest.json').read_text()), manifest)

        labels = json.loads((self.test_dir / 'labels.json').read_text())
        for target in manifest['targets']:
            mesh = load_mesh(str(self.test_dir / target))
            self.assertEqual(mesh.n, 42)
            self.assertIn(Path(target).stem, labels)

        for query in manifest['queries']:
            curve = load_curve(str(self.test_dir / query['query']))
            truth = json.loads((self.test_dir / query['ground_truth']).read_text())
            self.assertEqual(curve.m, len(truth))
            symmetric = json.loads((self.test_dir / query['symmetric_ground_truth']).read_text())
            self.assertTrue(all(len(alternative) == curve.m for alternative in symmetric))
            self.assertEqual(labels[Path(query['query']).stem], query['class'])


if __name__ == '__main__':
    unittest.main()
