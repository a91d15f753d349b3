"""
Poisson-equation command: Delta CSV, bound quadruple and optional diagnostics.
"""
import os

from flask import Blueprint

from app.commands.options import command
from app.models.skew import DisplacementSpec
from app.services.experiment_service import need
from app.services.poisson_solver import PoissonSolverService
from app.utils.export import write_csv, write_json

bp = Blueprint('poisson', __name__, cli_group=None)


@command(bp, 'poisson')
def poisson(service, run):
    """Solve the Poisson equation (CSV: index, delta; JSON: bounds)."""
    params = run.params
    spec = service.build_chain(params, run.mode)
    data = service.build_poisson(params, run.mode, spec)
    solver = PoissonSolverService(threads=run.threads)

    summary = data.to_dict()
    summary['min_row_spread'] = float(solver.row_spread(data).min())
    summary['min_gap'] = solver.neighbour_gaps(data)
    outputs = {'delta': write_csv(os.path.join(run.output_dir, 'delta.csv'), data.delta_frame())}

    growth = params.get('growth')
    if growth is not None:
        xi = need(params, 'xi')
        shorthand = 'srw' if isinstance(xi, dict) and xi.get('kind') == 'srw' else None
        report = solver.growth_diagnostics(shorthand or DisplacementSpec.from_dict(xi), spec.m,
                                           need(growth, 'N_range', 'growth'), growth.get('mode', 'float'))
        outputs['growth'] = write_csv(os.path.join(run.output_dir, 'growth.csv'), report.table)
        summary['growth'] = {k: v for k, v in report.to_dict().items() if k != 'rows'}

    check = params.get('martingale')
    if check is not None:
        report = solver.martingale_check(spec, data.xi, data.delta, int(need(check, 'trials', 'martingale')),
                                         int(need(check, 'horizon', 'martingale')), run.seed)
        outputs['martingale'] = write_csv(os.path.join(run.output_dir, 'martingale.csv'), report.table)
        summary['martingale'] = report.to_dict()

    outputs['bounds'] = write_json(os.path.join(run.output_dir, 'bounds.json'), summary)
    return outputs
