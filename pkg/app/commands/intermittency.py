"""
Intermittency command: birkhoff.
"""
import os

import numpy as np
from flask import Blueprint

from app.commands.options import command
from app.services.experiment_service import need
from app.services.intermittency_stats import IntermittencyStatsService
from app.utils.export import write_csv, write_json

bp = Blueprint('intermittency', __name__, cli_group=None)


@command(bp, 'birkhoff')
def birkhoff(service, run):
    """Occupation curve of U, episode histogram of one orbit and an optional escape census."""
    params = run.params
    system = service.build_system(need(params, 'system'))
    stats = IntermittencyStatsService(threads=run.threads)
    x0 = float(need(params, 'x0'))
    steps = int(need(params, 'steps'))

    curve = stats.birkhoff_occupation(system, tuple(need(params, 'U')), x0, steps, params.get('samples'), run.seed)
    summary = {'occupation': {k: v for k, v in curve.to_dict().items() if k != 'rows'},
               'decreasing': stats.trend_check(curve)}
    outputs = {'occupation': write_csv(os.path.join(run.output_dir, 'occupation.csv'), curve.to_frame())}

    episodes = params.get('episodes', {})
    L = episodes.get('L')
    L = stats.laminar_level(episodes.get('epsilon')) if L is None else float(L)
    orbit = stats.skew.simulate_batch(system, 1, steps, x0, run.seed)[0][0]
    finite = np.isfinite(orbit)
    if not finite.all():
        orbit = orbit[:int(np.argmin(finite))]
    trace = stats.episode_segmentation(orbit, L)
    outputs['episodes'] = write_csv(os.path.join(run.output_dir, 'episodes.csv'), trace.histogram())
    summary['episodes'] = trace.to_dict()

    census = params.get('census')
    if census is not None:
        result = stats.escape_time_census(
            system, float(need(census, 'p', 'census')), float(need(census, 'x_start', 'census')),
            int(need(census, 'trials', 'census')), need(census, 'horizons', 'census'), run.seed
        )
        outputs['census'] = write_csv(os.path.join(run.output_dir, 'census.csv'), result.table)
        summary['census'] = {k: v for k, v in result.to_dict().items() if k != 'rows'}

    outputs['summary'] = write_json(os.path.join(run.output_dir, 'summary.json'), summary)
    return outputs
