"""
Experiment service: JSON run configs, domain-object builders, the run ledger
and reproducibility manifests.
"""
import hashlib
import json
import os
import platform
from datetime import datetime
from typing import Dict, Optional

import numpy as np
import pandas as pd
import scipy
import statsmodels
from flask import current_app

import app as lab
from app import db
from app.models.poisson import PoissonData
from app.models.run import RunConfig, RunRecord
from app.models.skew import DisplacementSpec, SkewSystem
from app.models.subshift import SubshiftSpec
from app.models.walk import WalkSpec
from app.services.poisson_solver import PoissonSolverService
from app.services.skew_products import SkewProductService
from app.services.symbolic_dynamics import SymbolicDynamicsService
from app.utils.errors import MissingKeyError, ValidationError
from app.utils.exact import fraction_array
from app.utils.export import to_jsonable, write_json

MANIFEST = 'manifest.json'


def need(block: Dict, key: str, where: str = 'config'):
    """Value of a required config key."""
    if not isinstance(block, dict) or key not in block:
        raise MissingKeyError(f"{where} is missing required key '{key}'", key=key)
    return block[key]


class ExperimentService:
    """
    Service for reproducible runs including:
    - Loading JSON configs and applying flag overrides
    - Building chains, displacements, Poisson data, walks and skew systems
    - Recording runs in the ledger and writing manifests
    """

    def __init__(self):
        self.output_root = current_app.config['OUTPUT_DIR']
        self.default_mode = current_app.config['ARITHMETIC_MODE']

    # ------------------------------------------------------------------
    # configuration
    # ------------------------------------------------------------------

    @staticmethod
    def load_config(path: str) -> Dict:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ValidationError(f"cannot read config {path}: {e}") from e
        if not isinstance(data, dict):
            raise ValidationError(f"config {path} must hold a JSON object")
        return data

    def resolve(self, command: str, params: Dict, seed: Optional[int] = None, out: Optional[str] = None,
                mode: Optional[str] = None, threads: Optional[int] = None,
                source: Optional[str] = None) -> RunConfig:
        """
        Merge flags over the config block.

        Flags win over config keys, config keys over application defaults.
        """
        params = dict(params)
        params.pop('command', None)
        seed = int(seed if seed is not None else params.pop('seed', 0))
        params.pop('seed', None)
        if not 0 <= seed < 2 ** 64:
            raise ValidationError(f"seed must be an unsigned 64-bit integer, got {seed}")
        mode = mode or params.pop('mode', None) or self.default_mode
        params.pop('mode', None)
        if mode not in ('rational', 'float'):
            raise ValidationError(f"mode must be rational or float, got {mode!r}")
        out = out or params.pop('out', None) or os.path.join(self.output_root, command)
        params.pop('out', None)
        return RunConfig(command=command, params=params, seed=seed, output_dir=out, mode=mode,
                         threads=threads, source=source)

    @staticmethod
    def config_hash(run: RunConfig) -> str:
        canonical = json.dumps(to_jsonable(run.manifest_block()), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def manifest(self, run: RunConfig, outputs: Dict[str, str]) -> Dict:
        """Everything needed to rerun: command, parameters, seed, mode and versions."""
        return {
            'command': run.command,
            'params': run.params,
            'seed': run.seed,
            'mode': run.mode,
            'config_hash': self.config_hash(run),
            'outputs': sorted(os.path.basename(p) for p in outputs.values()),
            'versions': {
                'chaoswalk': lab.__version__,
                'python': platform.python_version(),
                'numpy': np.__version__,
                'scipy': scipy.__version__,
                'pandas': pd.__version__,
                'statsmodels': statsmodels.__version__
            }
        }

    def write_manifest(self, run: RunConfig, outputs: Dict[str, str]) -> str:
        return write_json(os.path.join(run.output_dir, MANIFEST), self.manifest(run, outputs))

    # ------------------------------------------------------------------
    # ledger
    # ------------------------------------------------------------------

    def start(self, run: RunConfig) -> RunRecord:
        record = RunRecord(
            command=run.command, config_hash=self.config_hash(run), seed=str(run.seed),
            mode=run.mode, output_dir=run.output_dir, status='running'
        )
        db.session.add(record)
        db.session.commit()
        current_app.logger.info(f"Run {record.id}: {run.command} seed={run.seed} mode={run.mode}")
        return record

    @staticmethod
    def finish(record: RunRecord, status: str, message: Optional[str] = None) -> None:
        record.status = status
        record.message = message
        record.finished_at = datetime.utcnow()
        db.session.commit()

    # ------------------------------------------------------------------
    # builders
    # ------------------------------------------------------------------

    @staticmethod
    def build_system(block: Dict) -> SkewSystem:
        return SkewSystem.from_dict(block)

    def build_chain(self, block: Dict, mode: str) -> SubshiftSpec:
        """
        'chain' is "canonical" (with m and N) or {"matrix": [[...], ...]}.
        """
        chain = block.get('chain', 'canonical')
        if chain == 'canonical':
            return SymbolicDynamicsService().build_subshift(need(block, 'm', 'chain'), block.get('N', 1), mode)
        if isinstance(chain, dict) and 'matrix' in chain:
            return SymbolicDynamicsService().explicit_subshift(chain['matrix'], mode)
        raise ValidationError(f"chain must be 'canonical' or {{'matrix': ...}}, got {chain!r}")

    def build_xi(self, block: Dict, spec: SubshiftSpec, mode: str) -> np.ndarray:
        """
        Displacement vector per symbol.

        'xi' is {"kind": "srw"}, {"values": [...]} or a displacement
        descriptor that is discretized on the canonical partition.
        """
        xi = need(block, 'xi', 'walk')
        if isinstance(xi, list):
            xi = {'values': xi}
        if xi.get('kind') == 'srw':
            if not spec.canonical or spec.m != 2:
                raise ValidationError("the symmetric walk displacement needs the canonical chain with m = 2")
            return PoissonSolverService().srw_displacement(spec.N, spec.mode)
        if 'values' in xi:
            values = fraction_array(xi['values']) if spec.mode == 'rational' else np.asarray(xi['values'], dtype=float)
            if values.shape != (spec.K,):
                raise ValidationError(f"xi values have length {values.shape[0]}, expected {spec.K}")
            return values
        if not spec.canonical:
            raise ValidationError("displacement descriptors need the canonical chain")
        return SkewProductService().discretize_displacement(
            DisplacementSpec.from_dict(xi), spec.m, spec.N, spec.mode
        ).values

    def build_poisson(self, block: Dict, mode: str, spec: Optional[SubshiftSpec] = None) -> PoissonData:
        """Solve the Poisson equation for a walk or poisson config block."""
        spec = spec or self.build_chain(block, mode)
        xi = self.build_xi(block, spec, mode)
        solver = PoissonSolverService()
        if spec.canonical and block.get('solver', 'canonical') == 'canonical':
            return solver.solve_poisson_canonical(xi, spec.m, spec.N, spec.mode)
        return solver.solve_poisson_general(spec, xi, spec.mode)

    def build_walk(self, block: Dict, mode: str) -> WalkSpec:
        """
        Markov walk (chain + xi, or chain + raw increments) or chaotic walk (system).
        """
        if not isinstance(block, dict):
            raise MissingKeyError("config is missing required key 'walk'", key='walk')
        x0 = float(block.get('x0', 0.0))
        alpha = float(block.get('alpha', 0.0))
        if 'system' in block:
            return WalkSpec(system=self.build_system(block['system']), x0=x0, alpha=alpha)
        spec = self.build_chain(block, mode)
        initial = block.get('initial_symbol')
        if 'increments' in block:
            raw = block['increments']
            table = fraction_array(raw) if spec.mode == 'rational' else np.asarray(raw, dtype=float)
            return WalkSpec(chain=spec, increments=table, x0=x0, alpha=alpha, initial_symbol=initial)
        return WalkSpec(chain=spec, poisson=self.build_poisson(block, mode, spec), x0=x0, alpha=alpha,
                        initial_symbol=initial)

    def walk_increments(self, walk: WalkSpec):
        """Exact increment source for the lattice oracle."""
        return walk.poisson if walk.poisson is not None else walk.increments
