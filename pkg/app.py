"""
ElastoMatch command-line application
Entry point for feature precomputation, matching, retrieval, evaluation and benchmarks.
"""
import csv
import functools
import io
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from config import Config, RunConfig, SOLVERS
from elastomatch_core.modules.errors import ElastoMatchError
from elastomatch_core.modules.evaluation import (
    baseline_rankings,
    matching_error,
    retrieval_rank,
    retrieval_summary,
    sensitivity_curves,
)
from elastomatch_core.modules.feature_cache import FeatureCache
from elastomatch_core.modules.geometry_io import is_mesh_file, load_curve, load_mesh
from elastomatch_core.modules.matcher import SOLVERS as SOLVER_FUNCTIONS
from elastomatch_core.modules.shape_processor import QueryFeatures, ShapeProcessor, TargetFeatures
from elastomatch_core.modules.synthetic import (
    grid_for_size,
    planted_cost,
    planted_walk,
    star_curve,
    torus_mesh,
    write_benchmark,
)

logger = logging.getLogger('elastomatch')


def _configure_logging(verbose: int):
    if verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = getattr(logging, Config.LOG_LEVEL, logging.WARNING)
    logging.basicConfig(
        stream=sys.stderr,
        level=level,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )


def handle_errors(command):
    """Turn domain errors into a one-line diagnostic and exit code 1."""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (ElastoMatchError, FileNotFoundError, ValueError) as e:
            logger.debug("Command failed", exc_info=True)
            raise click.ClickException(f"{type(e).__name__}: {e}")
    return wrapper


def _make_processor(config: RunConfig) -> ShapeProcessor:
    cache = None
    if config.use_cache:
        cache = FeatureCache(Path(config.cache_dir))
    return ShapeProcessor(cache=cache, fingerprint=config.fingerprint(),
                          **config.processor_settings())


def _load_query(processor: ShapeProcessor, path: str) -> QueryFeatures:
    features = processor.process_file(path)
    if not isinstance(features, QueryFeatures):
        raise click.BadParameter(f"{path} is a mesh, expected a curve")
    return features


def _load_target(processor: ShapeProcessor, path: str) -> TargetFeatures:
    features = processor.process_file(path)
    if not isinstance(features, TargetFeatures):
        raise click.BadParameter(f"{path} is a curve, expected a mesh")
    return features


def _emit(text: str, output: str = None):
    if output:
        Path(output).write_text(text, encoding='utf-8')
    else:
        click.echo(text, nl=False)


def _to_json(data) -> str:
    return json.dumps(data, indent=2) + '\n'


def _to_csv(header, rows) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def _load_labels(path: Path):
    if path is None or not path.exists():
        return None
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def _int_list(value: str):
    try:
        return [int(item) for item in value.split(',') if item.strip()]
    except ValueError:
        raise click.BadParameter(f"Expected comma-separated integers, got {value!r}")


# ============================================================================
# Command group
# ============================================================================

@click.group()
@click.option('-v', '--verbose', count=True, help='-v for progress, -vv for debug output.')
@click.option('--k', type=int, help=f'Eigenfunctions (default {Config.NUM_EIGENFUNCTIONS}).')
@click.option('--d', type=int, help=f'Descriptor width (default {Config.DESCRIPTOR_WIDTH}).')
@click.option('--r', type=int, help=f'Segmentation regions (default {Config.NUM_REGIONS}).')
@click.option('--tau', type=float, help=f'Cross-region penalty (default {Config.TAU:g}).')
@click.option('--max-area-factor', type=float,
              help='Max solid triangle area as a fraction of the curve area.')
@click.option('--min-angle', type=float, help='Min solid triangle angle in degrees.')
@click.option('--seed', type=int, help='Segmentation and synthetic data seed.')
@click.option('--threads', type=int, help='Worker threads (default: all cores).')
@click.option('--cache-dir', type=click.Path(file_okay=False),
              help='Feature cache directory (env ELASTOMATCH_CACHE_DIR).')
@click.option('--no-cache', is_flag=True, help='Disable the feature cache.')
@click.pass_context
def cli(ctx, verbose, k, d, r, tau, max_area_factor, min_angle, seed, threads, cache_dir, no_cache):
    """Globally optimal elastic matching of 2D curves to 3D meshes."""
    _configure_logging(verbose)
    try:
        config = RunConfig.from_defaults(
            k=k, d=d, r=r, tau=tau, max_area_factor=max_area_factor, min_angle=min_angle,
            seed=seed, threads=threads, cache_dir=cache_dir,
            use_cache=False if no_cache else None,
        ).validate()
    except ValueError as e:
        raise click.UsageError(str(e))
    ctx.obj = config


# ============================================================================
# Commands
# ============================================================================

@cli.command()
@click.argument('paths', nargs=-1, required=True, type=click.Path(dir_okay=False))
@click.option('--labels-dir', type=click.Path(file_okay=False),
              help='Also write per-vertex segment labels as JSON here.')
@click.pass_obj
@handle_errors
def features(config: RunConfig, paths, labels_dir):
    """Precompute and cache spectra and descriptors of meshes or curves."""
    processor = _make_processor(config)
    report = []
    for path in paths:
        cache_hit = False
        key = None
        if processor.cache is not None and Path(path).exists():
            key = FeatureCache.make_key(path, processor.fingerprint)
            cache_hit = processor.cache.contains(key)
        result = processor.process_file(path)
        mesh_input = isinstance(result, TargetFeatures)
        labels = result.labels if mesh_input else result.solid_labels
        report.append({
            'file': str(path),
            'kind': 'mesh' if mesh_input else 'curve',
            'key': key,
            'cache_hit': cache_hit,
            'vertices': result.mesh.n if mesh_input else result.curve.m,
            'eigenvalues': result.basis.eigenvalues.tolist(),
            'region_sizes': labels.region_sizes().tolist(),
        })
        if labels_dir:
            Path(labels_dir).mkdir(parents=True, exist_ok=True)
            out = Path(labels_dir) / f"{Path(path).stem}.labels.json"
            out.write_text(json.dumps(labels.to_dict()), encoding='utf-8')
    _emit(_to_json(report))


@cli.command()
@click.argument('curve_path', type=click.Path(dir_okay=False))
@click.argument('mesh_path', type=click.Path(dir_okay=False))
@click.option('--solver', type=click.Choice(SOLVERS), help='Solver (default bnb).')
@click.option('--stats', is_flag=True, help='Include solver statistics and wall time.')
@click.option('--no-segments', is_flag=True, help='Disable segment gating of costs.')
@click.option('-o', '--output', type=click.Path(dir_okay=False), help='Write JSON here.')
@click.option('--dump-cost', type=click.Path(dir_okay=False),
              help='Write the cost matrix as a binary container.')
@click.pass_obj
@handle_errors
def match(config: RunConfig, curve_path, mesh_path, solver, stats, no_segments, output, dump_cost):
    """Match a query curve to a target mesh."""
    processor = _make_processor(config)
    query = _load_query(processor, curve_path)
    target = _load_target(processor, mesh_path)
    pair = processor.match_pair(query, target, solver=solver or config.solver,
                                use_segments=not no_segments, threads=config.threads)
    if dump_cost:
        pair.cost.save(dump_cost)

    data = pair.result.to_dict(include_wall_time=True)
    if not stats:
        del data['stats']
    if pair.assignment is not None:
        data['region_assignment'] = list(pair.assignment.perm)
    _emit(_to_json(data), output)


@cli.command()
@click.argument('curve_paths', nargs=-1, required=True, type=click.Path(dir_okay=False))
@click.argument('mesh_dir', type=click.Path(file_okay=False, exists=True))
@click.option('--labels', 'labels_path', type=click.Path(dir_okay=False),
              help='JSON map of shape name to class (default: MESH_DIR/labels.json).')
@click.option('--solver', type=click.Choice(SOLVERS), help='Solver (default bnb).')
@click.option('--no-segments', is_flag=True, help='Disable segment gating of costs.')
@click.option('--baselines', is_flag=True, help='Also rank by ShapeDNA and segment cost.')
@click.option('--format', 'fmt', type=click.Choice(['json', 'csv']), default='json')
@click.option('-o', '--output', type=click.Path(dir_okay=False))
@click.pass_obj
@handle_errors
def retrieve(config: RunConfig, curve_paths, mesh_dir, labels_path, solver, no_segments,
             baselines, fmt, output):
    """Rank the meshes of MESH_DIR by matching energy for each query curve."""
    processor = _make_processor(config)
    mesh_paths = sorted(p for p in Path(mesh_dir).iterdir() if p.is_file() and is_mesh_file(str(p)))
    if not mesh_paths:
        raise click.BadParameter(f"No meshes found in {mesh_dir}")
    labels = _load_labels(Path(labels_path) if labels_path else Path(mesh_dir) / 'labels.json')

    targets = [_load_target(processor, str(p)) for p in mesh_paths]
    rankings = {'energy': []}
    if baselines:
        rankings.update({'shapedna': [], 'segment_cost': []})

    for curve_path in curve_paths:
        query = _load_query(processor, curve_path)
        query_label = labels.get(query.name) if labels else None
        rankings['energy'].append(retrieval_rank(
            query, targets, processor, solver=solver or config.solver,
            use_segments=not no_segments, threads=config.threads,
            labels=labels, query_label=query_label,
        ))
        if baselines:
            for method, ranking in baseline_rankings(query, targets, labels, query_label).items():
                rankings[method].append(ranking)

    summary = None
    if labels and all(r.query_label is not None for r in rankings['energy']):
        summary = retrieval_summary(rankings)

    if fmt == 'json':
        data = {method: [r.to_dict() for r in method_rankings]
                for method, method_rankings in rankings.items()}
        if summary is not None:
            data['summary'] = summary
        _emit(_to_json(data), output)
    else:
        rows = [[r.query_id, method] + row
                for method, method_rankings in rankings.items()
                for r in method_rankings for row in r.to_rows()]
        text = _to_csv(['query', 'method', 'rank', 'target', 'score', 'class'], rows)
        if summary is not None:
            for method, values in summary.items():
                text += f"# {method} MAP,{values['map']!r}\n"
        _emit(text, output)


@cli.command(name='eval')
@click.argument('curve_path', type=click.Path(dir_okay=False))
@click.argument('mesh_path', type=click.Path(dir_okay=False))
@click.option('--ground-truth', 'gt_path', required=True, type=click.Path(dir_okay=False, exists=True),
              help='JSON list with the true mesh vertex of every curve vertex.')
@click.option('--symmetric-truth', 'sym_path', type=click.Path(dir_okay=False, exists=True),
              help='JSON list of alternative ground truths, one per shape symmetry.')
@click.option('--solver', type=click.Choice(SOLVERS), help='Solver (default bnb).')
@click.option('--no-segments', is_flag=True, help='Disable segment gating of costs.')
@click.option('--group-mode', type=click.Choice(['first', 'min']), default='first',
              help='Which vertex of a multi-vertex correspondence is scored.')
@click.option('--k-grid', help='Comma-separated eigenfunction counts for a sensitivity sweep.')
@click.option('--format', 'fmt', type=click.Choice(['json', 'csv']), default='csv')
@click.option('-o', '--output', type=click.Path(dir_okay=False))
@click.pass_obj
@handle_errors
def evaluate(config: RunConfig, curve_path, mesh_path, gt_path, sym_path, solver, no_segments,
             group_mode, k_grid, fmt, output):
    """Geodesic matching error of CURVE on MESH against ground truth."""
    with open(gt_path, 'r', encoding='utf-8') as f:
        ground_truth = json.load(f)
    symmetric = []
    if sym_path:
        with open(sym_path, 'r', encoding='utf-8') as f:
            symmetric = json.load(f)
    solver = solver or config.solver

    if k_grid:
        settings = config.processor_settings()
        settings.pop('k')
        profiles = sensitivity_curves(load_curve(curve_path), load_mesh(mesh_path), ground_truth,
                                      _int_list(k_grid), solver=solver,
                                      use_segments=not no_segments, threads=config.threads,
                                      group_mode=group_mode, symmetric_truths=symmetric,
                                      **settings)
    else:
        processor = _make_processor(config)
        query = _load_query(processor, curve_path)
        target = _load_target(processor, mesh_path)
        pair = processor.match_pair(query, target, solver=solver,
                                    use_segments=not no_segments, threads=config.threads)
        profiles = {config.k: matching_error(pair.result, ground_truth, target.mesh,
                                             provider=target.geodesics, group_mode=group_mode,
                                             symmetric_truths=symmetric)}

    if fmt == 'json':
        _emit(_to_json({str(k): profile.to_dict() for k, profile in profiles.items()}), output)
    else:
        rows = [[k] + row for k, profile in profiles.items() for row in profile.to_rows()]
        _emit(_to_csv(['k', 'threshold', 'fraction'], rows), output)


@cli.command()
@click.option('--m-grid', default='25,50,100,200,400', help='Comma-separated curve sizes.')
@click.option('--n', 'n_target', type=int, default=500, help='Approximate mesh size.')
@click.option('--solvers', default='bnb,exhaustive', help='Comma-separated solvers.')
@click.option('--cost', 'cost_kind', type=click.Choice(['random', 'planted']), default='random',
              help='Uniform random costs or a planted zero-cost walk.')
@click.option('-o', '--output', type=click.Path(dir_okay=False))
@click.pass_obj
@handle_errors
def bench(config: RunConfig, m_grid, n_target, solvers, cost_kind, output):
    """Runtime sweep over curve sizes on a torus mesh; emits CSV."""
    names = [name.strip() for name in solvers.split(',') if name.strip()]
    unknown = [name for name in names if name not in SOLVER_FUNCTIONS]
    if unknown:
        raise click.BadParameter(f"Unknown solver(s): {', '.join(unknown)}")

    mesh = torus_mesh(*grid_for_size(n_target))
    rng = np.random.default_rng(config.seed)
    rows = []
    for m in _int_list(m_grid):
        curve = star_curve(m, seed=config.seed)
        if cost_kind == 'planted':
            D = planted_cost(planted_walk(mesh, m, seed=config.seed), mesh.n)
        else:
            D = rng.uniform(size=(m, mesh.n))
        for name in names:
            result = SOLVER_FUNCTIONS[name](D, curve, mesh, threads=config.threads)
            rows.append([m, mesh.n, name, f"{result.stats.wall_time:.6f}",
                         result.stats.heap_pops, result.stats.paths_solved, repr(result.energy)])
            logger.info("m=%d n=%d %s: %.3fs", m, mesh.n, name, result.stats.wall_time)
    _emit(_to_csv(['m', 'n', 'solver', 'wall_time', 'heap_pops', 'paths_solved', 'energy'], rows),
          output)


@cli.command()
@click.argument('directory', type=click.Path(file_okay=False))
@click.option('--targets-per-class', type=int, default=4, show_default=True)
@click.pass_obj
@handle_errors
def synth(config: RunConfig, directory, targets_per_class):
    """Write the synthetic retrieval benchmark to DIRECTORY."""
    manifest = write_benchmark(directory, seed=config.seed, targets_per_class=targets_per_class)
    _emit(_to_json(manifest))


if __name__ == '__main__':
    cli()
