"""
Unit tests for the command-line application.
"""
import csv
import io
import json
import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np
from click.testing import CliRunner

from app import cli
from elastomatch_core.modules.array_io import read_container
from elastomatch_core.modules.geometry_io import save_curve, save_mesh
from elastomatch_core.modules.synthetic import class_template, cut_and_project_query


class TestCli(unittest.TestCase):
    """Test cases for the elastomatch commands."""

    def setUp(self):
        """Set up test fixtures."""
        self.test_dir = Path(tempfile.mkdtemp())
        self.runner = CliRunner()
        self.options = [
            '--k', '8', '--d', '10', '--r', '2', '--tau', '100',
            '--max-area-factor', '0.02', '--threads', '1',
            '--cache-dir', str(self.test_dir / 'cache'),
        ]

        curve, truth = cut_and_project_query('ellipsoid', level=1)
        self.curve_path = self.test_dir / 'ellipsoid_query.csv'
        save_curve(curve, str(self.curve_path))
        self.truth_path = self.test_dir / 'truth.json'
        self.truth_path.write_text(json.dumps(truth))
        self.m = curve.m

        self.mesh_dir = self.test_dir / 'meshes'
        self.mesh_dir.mkdir()
        for shape_class in ('ellipsoid', 'two_lobe'):
            save_mesh(class_template(shape_class, level=1),
                      str(self.mesh_dir / f"{shape_class}.off"))
        self.mesh_path = self.mesh_dir / 'ellipsoid.off'
        (self.mesh_dir / 'labels.json').write_text(json.dumps({
            'ellipsoid': 'ellipsoid', 'two_lobe': 'two_lobe', 'ellipsoid_query': 'ellipsoid',
        }))

    def tearDown(self):
        """Clean up test fixtures."""
        if self.test_dir.exists():
            shutil.rmtree(self.test_dir)

    def invoke(self, *args):
        return self.runner.invoke(cli, self.options + [str(a) for a in args])

    def test_invalid_settings(self):
        """Test that non-positive settings are a usage error."""
        result = self.runner.invoke(cli, ['--k', '0', 'synth', str(self.test_dir / 'out')])
        self.assertEqual(result.exit_code, 2)

    def test_match(self):
        """Test matching output with and without statistics."""
        out = self.test_dir / 'match.json'
        result = self.invoke('match', self.curve_path, self.mesh_path, '-o', out)
        self.assertEqual(result.exit_code, 0, result.output)
        data = json.loads(out.read_text())
        self.assertEqual(len(data['correspondences']), self.m)
        self.assertEqual(data['path'][0][1], data['path'][-1][1])
        self.assertNotIn('stats', data)
        self.assertEqual(sorted(data['region_assignment']), [0, 1])

        cost_path = self.test_dir / 'cost.bin'
        result = self.invoke('match', self.curve_path, self.mesh_path, '--stats',
                             '--solver', 'exhaustive', '--dump-cost', cost_path, '-o', out)
        self.assertEqual(result.exit_code, 0, result.output)
        with_stats = json.loads(out.read_text())
        self.assertEqual(with_stats['energy'], data['energy'])
        self.assertIn('wall_time', with_stats['stats'])
        self.assertEqual(read_container(str(cost_path))['D'].shape, (self.m, 42))

    def test_match_without_segments(self):
        """Test that disabling segments drops the region assignment."""
        out = self.test_dir / 'match.json'
        result = self.invoke('match', self.curve_path, self.mesh_path, '--no-segments', '-o', out)
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertNotIn('region_assignment', json.loads(out.read_text()))

    def test_match_errors(self):
        """Test diagnostics for invalid input files."""
        bowtie = self.test_dir / 'bowtie.csv'
        bowtie.write_text('0,0\n1,1\n1,0\n0,1\n')
        result = self.invoke('match', bowtie, self.mesh_path)
        self.assertEqual(result.exit_code, 1)
        self.assertIn('SelfIntersecting', result.output)

        result = self.invoke('match', self.test_dir / 'missing.csv', self.mesh_path)
        self.assertEqual(result.exit_code, 1)

        result = self.invoke('match', self.mesh_path, self.mesh_path)
        self.assertEqual(result.exit_code, 2)

    def test_features_report_cache_hits(self):
        """Test that a second features run reports cache hits."""
        labels_dir = self.test_dir / 'labels'
        args = ['features', self.curve_path, self.mesh_path, '--labels-dir', labels_dir]
        first = self.invoke(*args)
        self.assertEqual(first.exit_code, 0, first.output)
        report = json.loads(first.stdout)
        self.assertEqual([entry['kind'] for entry in report], ['curve', 'mesh'])
        self.assertFalse(any(entry['cache_hit'] for entry in report))
        self.assertEqual(report[1]['vertices'], 42)
        self.assertTrue((labels_dir / 'ellipsoid.labels.json').exists())

        second = json.loads(self.invoke(*args).stdout)
        self.assertTrue(all(entry['cache_hit'] for entry in second))
        self.assertEqual(second[1]['eigenvalues'], report[1]['eigenvalues'])

    def test_retrieve(self):
        """Test energy and baseline rankings with a MAP summary."""
        out = self.test_dir / 'ranking.json'
        result = self.invoke('retrieve', self.curve_path, self.mesh_dir, '--baselines', '-o', out)
        self.assertEqual(result.exit_code, 0, result.output)
        data = json.loads(out.read_text())
        self.assertEqual(set(data), {'energy', 'shapedna', 'segment_cost', 'summary'})
        ranking = data['energy'][0]
        self.assertEqual(ranking['query_class'], 'ellipsoid')
        self.assertEqual({entry['target'] for entry in ranking['ranking']},
                         {'ellipsoid', 'two_lobe'})
        for values in data['summary'].values():
            self.assertGreaterEqual(values['map'], 0.5)

    def test_retrieve_csv(self):
        """Test the CSV ranking format."""
        out = self.test_dir / 'ranking.csv'
        result = self.invoke('retrieve', self.curve_path, self.mesh_dir, '--format', 'csv',
                             '-o', out)
        self.assertEqual(result.exit_code, 0, result.output)
        lines = out.read_text().splitlines()
        self.assertEqual(lines[0], 'query,method,rank,target,score,class')
        rows = list(csv.reader(lines[1:3]))
        self.assertEqual([row[2] for row in rows], ['1', '2'])
        self.assertTrue(lines[-1].startswith('# energy MAP,'))

    def test_eval(self):
        """Test the cumulative error curve output."""
        out = self.test_dir / 'curve.csv'
        result = self.invoke('eval', self.curve_path, self.mesh_path,
                             '--ground-truth', self.truth_path, '-o', out)
        self.assertEqual(result.exit_code, 0, result.output)
        rows = list(csv.reader(io.StringIO(out.read_text())))
        self.assertEqual(rows[0], ['k', 'threshold', 'fraction'])
        self.assertEqual(len(rows), 102)
        fractions = [float(row[2]) for row in rows[1:]]
        self.assertEqual(fractions, sorted(fractions))
        self.assertEqual(fractions[-1], 1.0)

    def test_eval_k_grid(self):
        """Test a sensitivity sweep over eigenfunction counts."""
        out = self.test_dir / 'sweep.json'
        result = self.invoke('eval', self.curve_path, self.mesh_path,
                             '--ground-truth', self.truth_path, '--k-grid', '6,8',
                             '--format', 'json', '-o', out)
        self.assertEqual(result.exit_code, 0, result.output)
        data = json.loads(out.read_text())
        self.assertEqual(sorted(data), ['6', '8'])
        self.assertEqual(len(data['6']['errors']), self.m)

    def test_eval_symmetric_truth(self):
        """Test that symmetric ground truths can only lower the error and are validated."""
        truth = json.loads(self.truth_path.read_text())
        symmetric_path = self.test_dir / 'symmetric.json'
        symmetric_path.write_text(json.dumps([list(reversed(truth))]))
        plain_out = self.test_dir / 'plain.json'
        symmetric_out = self.test_dir / 'symmetric_errors.json'
        self.invoke('eval', self.curve_path, self.mesh_path, '--ground-truth', self.truth_path,
                    '--format', 'json', '-o', plain_out)
        result = self.invoke('eval', self.curve_path, self.mesh_path,
                             '--ground-truth', self.truth_path,
                             '--symmetric-truth', symmetric_path,
                             '--format', 'json', '-o', symmetric_out)
        self.assertEqual(result.exit_code, 0, result.output)
        plain = json.loads(plain_out.read_text())
        symmetric = json.loads(symmetric_out.read_text())
        for k in plain:
            self.assertLessEqual(symmetric[k]['mean_error'], plain[k]['mean_error'])

        symmetric_path.write_text('[[0]]')
        result = self.invoke('eval', self.curve_path, self.mesh_path,
                             '--ground-truth', self.truth_path,
                             '--symmetric-truth', symmetric_path)
        self.assertEqual(result.exit_code, 1)
        self.assertIn('MissingGroundTruth', result.output)

    def test_eval_missing_ground_truth(self):
        """Test that short ground truth fails with exit code 1."""
        self.truth_path.write_text('[0]')
        result = self.invoke('eval', self.curve_path, self.mesh_path,
                             '--ground-truth', self.truth_path)
        self.assertEqual(result.exit_code, 1)
        self.assertIn('MissingGroundTruth', result.output)

    def test_bench(self):
        """Test that both solvers report equal energies."""
        out = self.test_dir / 'bench.csv'
        result = self.invoke('bench', '--m-grid', '4,6', '--n', '40', '-o', out)
        self.assertEqual(result.exit_code, 0, result.output)
        rows = list(csv.DictReader(io.StringIO(out.read_text())))
        self.assertEqual(len(rows), 4)
        for m in ('4', '6'):
            energies = {row['solver']: float(row['energy']) for row in rows if row['m'] == m}
            self.assertEqual(energies['bnb'], energies['exhaustive'])
        exhaustive = [row for row in rows if row['solver'] == 'exhaustive']
        self.assertTrue(all(row['paths_solved'] == row['n'] for row in exhaustive))

    def test_bench_planted(self):
        """Test that planted costs give zero energy."""
        out = self.test_dir / 'bench.csv'
        result = self.invoke('bench', '--m-grid', '8', '--n', '40', '--solvers', 'bnb',
                             '--cost', 'planted', '-o', out)
        self.assertEqual(result.exit_code, 0, result.output)
        rows = list(csv.DictReader(io.StringIO(out.read_text())))
        self.assertEqual(float(rows[0]['energy']), 0.0)

    def test_bench_unknown_solver(self):
        """Test that an unknown solver name is a usage error."""
        result = self.invoke('bench', '--solvers', 'greedy')
        self.assertEqual(result.exit_code, 2)

    def test_synth(self):
        """Test writing the synthetic benchmark."""
        out = self.test_dir / 'bench'
        result = self.invoke('synth', out, '--targets-per-class', '1')
        self.assertEqual(result.exit_code, 0, result.output)
        manifest = json.loads((out / 'manifest.json').read_text())
        self.assertEqual(len(manifest['targets']), 3)
        self.assertEqual(len(manifest['queries']), 3)
        labels = json.loads((out / 'labels.json').read_text())
        self.assertEqual(labels['two_lobe_0'], 'two_lobe')
        self.assertTrue((out / 'ground_truth' / 'ellipsoid_query.json').exists())
        self.assertTrue(np.isclose(manifest['map_threshold'], 0.75))


if __name__ == '__main__':
    unittest.main()
