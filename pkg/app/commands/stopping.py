"""
Stopping-time commands: escape and scaling.
"""
import os

import pandas as pd
from flask import Blueprint, current_app

from app.commands.options import command
from app.services.experiment_service import need
from app.services.stopping_lab import StoppingLabService
from app.utils.errors import DomainError, SizeError, UnsupportedError
from app.utils.export import write_csv, write_json

bp = Blueprint('stopping', __name__, cli_group=None)


def _interval(params):
    block = need(params, 'interval')
    return float(need(block, 'A', 'interval')), float(need(block, 'B', 'interval'))


@command(bp, 'escape')
def escape(service, run):
    """Escape statistics of [A, B] per drift (CSV: one row per alpha with every EscapeStats field)."""
    params = run.params
    walk = service.build_walk(need(params, 'walk'), run.mode)
    A, B = _interval(params)
    trials = int(need(params, 'trials'))
    horizon = int(need(params, 'horizon'))
    alphas = [float(a) for a in params.get('alpha_list', [walk.alpha])]
    lab = StoppingLabService(threads=run.threads)
    outputs = {}
    summary = {'walk': walk.to_dict(), 'runs': [], 'notes': []}

    rows = []
    for alpha in alphas:
        drifted = walk.with_alpha(alpha)
        stats = lab.estimate_escape_compact(drifted, A, B, trials, horizon, run.seed)
        row = stats.to_row()
        row['doob_ok'] = lab.doob_check(stats)
        if walk.poisson is not None and alpha >= 0:
            try:
                bounds = lab.tilt_escape_bounds(walk.poisson, alpha, A, B, walk.x0)
                row['p_left_bound_low'], row['p_left_bound_high'] = bounds.p_lower, bounds.p_upper
            except DomainError as e:
                summary['notes'].append(f"alpha={alpha}: {e.message}")
        if params.get('oracle') and walk.kind == 'markov':
            try:
                oracle = lab.gambler_ruin_oracle(A, B, walk.x0, walk.chain, service.walk_increments(walk), alpha,
                                                 int(params.get('scale', 1)), walk.initial_symbol, run.mode)
                row['oracle_p_left'] = float(oracle.p_left)
                row['oracle_mean_time'] = float(oracle.mean_time)
            except (UnsupportedError, SizeError) as e:
                summary['notes'].append(f"alpha={alpha}: oracle skipped, {e.message}")
        rows.append(row)
        summary['runs'].append(stats.to_dict())
    outputs['escape'] = write_csv(os.path.join(run.output_dir, 'escape.csv'), pd.DataFrame(rows))

    horizons = params.get('horizons')
    if horizons:
        frames = []
        for alpha in alphas:
            half = lab.estimate_escape_halfline(walk.with_alpha(alpha), B, trials, horizons, run.seed)
            frames.append(half.table.assign(alpha=alpha))
            summary.setdefault('halfline', []).append({k: v for k, v in half.to_dict().items() if k != 'rows'})
        outputs['halfline'] = write_csv(os.path.join(run.output_dir, 'halfline.csv'),
                                        pd.concat(frames, ignore_index=True))

    stay = params.get('stay')
    if stay is not None:
        summary['stay'] = [
            lab.estimate_stay_probability(walk.with_alpha(a), float(need(stay, 'B', 'stay')), trials,
                                          int(stay.get('horizon', horizon)), run.seed).to_dict()
            for a in need(stay, 'alpha_list', 'stay')
        ]

    witness = params.get('witness')
    if witness is not None and walk.kind == 'markov':
        xi = walk.poisson.xi if walk.poisson is not None else need(params['walk'], 'xi', 'walk')
        report = lab.recurrence_witness_search(walk.chain, xi, float(need(witness, 'L', 'witness')),
                                               witness.get('max_len'))
        summary['witness'] = report.to_dict()

    for note in summary['notes']:
        current_app.logger.warning(note)
    outputs['summary'] = write_json(os.path.join(run.output_dir, 'summary.json'), summary)
    return outputs


@command(bp, 'scaling')
def scaling(service, run):
    """Drift scaling sweep with zero-drift rows (CSV) and max/min ratios (JSON)."""
    params = run.params
    walk = service.build_walk(need(params, 'walk'), run.mode)
    A, B = _interval(params)
    report = StoppingLabService(threads=run.threads).drift_scaling_experiment(
        walk, need(params, 'alpha_list'), A, B, int(need(params, 'trials')), int(need(params, 'horizon')),
        run.seed, params.get('zero_drift_A'), params.get('halfline_horizon')
    )
    return {
        'scaling': write_csv(os.path.join(run.output_dir, 'scaling.csv'), report.table),
        'ratios': write_json(os.path.join(run.output_dir, 'ratios.json'),
                             {'ratios': report.ratios, 'warnings': report.warnings})
    }
