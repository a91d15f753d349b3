"""
Skew-product and symbolic-dynamics commands: simulate, encode, validate.
"""
import os

import numpy as np
import pandas as pd
from flask import Blueprint

from app.commands.options import command
from app.models.skew import Trajectory
from app.services.experiment_service import need
from app.services.skew_products import SkewProductService
from app.services.symbolic_dynamics import SymbolicDynamicsService
from app.utils.errors import ClassViolationError
from app.utils.export import write_csv, write_json, write_lines

bp = Blueprint('dynamics', __name__, cli_group=None)


def _validated(service, run, skew: SkewProductService):
    system = service.build_system(need(run.params, 'system'))
    limits = run.params.get('validate', {})
    report = skew.validate_class_membership(system, limits.get('C'), limits.get('r0'), limits.get('grid'))
    path = write_json(os.path.join(run.output_dir, 'validation.json'), report.to_dict())
    if not report.passed:
        raise ClassViolationError(f"system fails {', '.join(report.failures())}", report=path)
    return system, path


@command(bp, 'simulate')
def simulate(service, run):
    """Fiber time series of a skew product (CSV: step, x_interval, x_line)."""
    skew = SkewProductService(threads=run.threads)
    system, validation = _validated(service, run, skew)
    params = run.params
    steps = int(need(params, 'steps'))
    samples = int(params.get('samples', 1))
    groups = skew.simulate_batch(system, samples, steps, float(need(params, 'x0')), run.seed,
                                 window=params.get('window'))
    frames = []
    for k, xs in enumerate(np.concatenate(groups)):
        frame = Trajectory(xs).to_frame()
        if samples > 1:
            frame.insert(0, 'sample', k)
        frames.append(frame)
    series = write_csv(os.path.join(run.output_dir, 'timeseries.csv'), pd.concat(frames, ignore_index=True))
    return {'validation': validation, 'timeseries': series}


@command(bp, 'encode')
def encode(service, run):
    """Symbol path of a point of [0, 1] and the cylinder it decodes to."""
    params = run.params
    symbolic = SymbolicDynamicsService()
    path = symbolic.encode_point(need(params, 'y'), need(params, 'm'), params.get('N', 1),
                                 need(params, 'length'))
    interval = symbolic.decode_sequence(path)
    summary = dict(interval.to_dict(), m=int(params['m']), N=int(params.get('N', 1)), y=str(params['y']))
    return {
        'path': write_lines(os.path.join(run.output_dir, 'path.txt'), [path.to_text()]),
        'interval': write_json(os.path.join(run.output_dir, 'interval.json'), summary)
    }


@command(bp, 'validate')
def validate(service, run):
    """Class-membership report (and optional Lyapunov exponents) of a skew system."""
    skew = SkewProductService(threads=run.threads)
    system, validation = _validated(service, run, skew)
    outputs = {'validation': validation}
    lyapunov = run.params.get('lyapunov')
    if lyapunov is not None:
        estimate = skew.lyapunov_exponents(system, int(lyapunov.get('samples', 0)), run.seed,
                                           lyapunov.get('nodes'))
        outputs['lyapunov'] = write_json(os.path.join(run.output_dir, 'lyapunov.json'), estimate.to_dict())
    return outputs
