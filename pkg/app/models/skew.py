"""
Skew-product descriptors: displacement xi, perturbation r and the system
(E_m base, interval/line fiber), plus the result types of the skew-product
service.

Displacements and perturbations come from a fixed whitelist so that every
system serializes to JSON and every run is reproducible.
"""
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import integrate
from scipy.special import expit

from app.utils.errors import ValidationError
from app.utils.exact import to_fraction

XI_KINDS = ('affine', 'sign', 'table', 'sin', 'cos', 'tanh', 'odd_cubic')
R_KINDS = ('zero', 'cubic', 'cubic_modulated')
CHARTS = ('interval', 'line')

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True, eq=False)
class DisplacementSpec:
    """
    Mean-zero displacement y -> xi(y) on [0, 1].

    Kinds and params:
        affine      a, b            a + b*y (mean zero needs a = -b/2)
        sign        scale           scale * sign(y - 1/2)
        table       nodes           piecewise linear through [[y, value], ...] from y=0 to y=1
        sin / cos   amplitude, k    amplitude * sin|cos(2*pi*k*y)
        tanh        amplitude, c    amplitude * tanh(c*(y - 1/2))
        odd_cubic   amplitude       amplitude * (2y - 1)^3

    `offset` is added on top of the centered base and only used to build
    positive-mean control runs.
    """

    kind: str
    params: Dict = field(default_factory=dict)
    monotone: Optional[str] = None
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in XI_KINDS:
            raise ValidationError(f"unknown displacement kind {self.kind!r}; expected one of {XI_KINDS}")
        if self.monotone not in (None, 'increasing', 'decreasing'):
            raise ValidationError(f"monotone flag must be increasing, decreasing or null, got {self.monotone!r}")
        if self.kind == 'affine':
            self._need('a', 'b')
        elif self.kind == 'table':
            nodes = self.params.get('nodes')
            if not nodes or len(nodes) < 2:
                raise ValidationError("table displacement needs at least two nodes")
            ys = [to_fraction(n[0]) for n in nodes]
            if ys[0] != 0 or ys[-1] != 1 or any(b <= a for a, b in zip(ys[:-1], ys[1:])):
                raise ValidationError("table nodes must increase strictly from y=0 to y=1")
        elif self.kind in ('sin', 'cos'):
            self._need('amplitude')
            k = self.params.get('k', 1)
            if int(k) != k or int(k) < 1:
                raise ValidationError(f"{self.kind} frequency k must be a positive integer, got {k}")
        elif self.kind in ('tanh', 'odd_cubic'):
            self._need('amplitude')

        if abs(self.base_mean()) > 1e-12:
            raise ValidationError(
                f"displacement {self.kind} has mean {self.base_mean():.3e}; xi must average to zero",
                mean=self.base_mean()
            )
        if self.monotone is not None:
            diffs = np.diff(self.evaluate(np.linspace(0.0, 1.0, 2049)))
            sign = 1.0 if self.monotone == 'increasing' else -1.0
            if (sign * diffs < -1e-15).any() or not (sign * diffs > 0).any():
                raise ValidationError(f"displacement is not {self.monotone} on the sampling grid")

    def _need(self, *keys):
        missing = [k for k in keys if k not in self.params]
        if missing:
            raise ValidationError(f"{self.kind} displacement missing params {missing}")

    def _f(self, key, default=None) -> float:
        return float(to_fraction(self.params.get(key, default)))

    def evaluate(self, y) -> np.ndarray:
        """Vectorized float evaluation."""
        y = np.asarray(y, dtype=float)
        kind = self.kind
        if kind == 'affine':
            out = self._f('a') + self._f('b') * y
        elif kind == 'sign':
            out = self._f('scale', 1) * np.sign(y - 0.5)
        elif kind == 'table':
            nodes = np.array([[float(to_fraction(a)), float(to_fraction(b))] for a, b in self.params['nodes']])
            out = np.interp(y, nodes[:, 0], nodes[:, 1])
        elif kind == 'sin':
            out = self._f('amplitude') * np.sin(TWO_PI * int(self.params.get('k', 1)) * y)
        elif kind == 'cos':
            out = self._f('amplitude') * np.cos(TWO_PI * int(self.params.get('k', 1)) * y)
        elif kind == 'tanh':
            out = self._f('amplitude') * np.tanh(self._f('c', 1) * (y - 0.5))
        else:
            out = self._f('amplitude') * (2.0 * y - 1.0) ** 3
        return out + self.offset

    @property
    def exact(self) -> bool:
        """True when Fraction evaluation is available."""
        return self.kind in ('affine', 'sign', 'table')

    def evaluate_exact(self, y: Fraction) -> Fraction:
        """Exact evaluation for affine, sign and table kinds."""
        if not self.exact:
            raise ValidationError(f"{self.kind} displacement has no exact evaluation")
        y = to_fraction(y)
        offset = to_fraction(self.offset)
        if self.kind == 'affine':
            return to_fraction(self.params['a']) + to_fraction(self.params['b']) * y + offset
        if self.kind == 'sign':
            scale = to_fraction(self.params.get('scale', 1))
            return scale * ((y > Fraction(1, 2)) - (y < Fraction(1, 2))) + offset
        nodes = [(to_fraction(a), to_fraction(b)) for a, b in self.params['nodes']]
        for (y0, v0), (y1, v1) in zip(nodes[:-1], nodes[1:]):
            if y0 <= y <= y1:
                return v0 + (v1 - v0) * (y - y0) / (y1 - y0) + offset
        raise ValidationError(f"y = {y} outside the table")

    def base_mean(self) -> float:
        """Mean over [0, 1] without the control offset (exact where possible)."""
        if self.kind == 'affine':
            return float(to_fraction(self.params['a']) + to_fraction(self.params['b']) / 2)
        if self.kind == 'sign':
            return 0.0
        if self.kind == 'table':
            nodes = [(to_fraction(a), to_fraction(b)) for a, b in self.params['nodes']]
            area = sum((y1 - y0) * (v0 + v1) / 2 for (y0, v0), (y1, v1) in zip(nodes[:-1], nodes[1:]))
            return float(area)
        if self.kind in ('sin', 'cos', 'tanh', 'odd_cubic'):
            value, _ = integrate.quad(lambda t: float(self.evaluate(t)) - self.offset, 0.0, 1.0, limit=200)
            return value
        return 0.0

    def mean(self) -> float:
        return self.base_mean() + self.offset

    def derivative_bound(self) -> float:
        """sup |xi'| (infinite for the discontinuous sign kind)."""
        if self.kind == 'affine':
            return abs(self._f('b'))
        if self.kind == 'sign':
            return float('inf')
        if self.kind == 'table':
            nodes = [(float(to_fraction(a)), float(to_fraction(b))) for a, b in self.params['nodes']]
            return max(abs((v1 - v0) / (y1 - y0)) for (y0, v0), (y1, v1) in zip(nodes[:-1], nodes[1:]))
        if self.kind in ('sin', 'cos'):
            return abs(self._f('amplitude')) * TWO_PI * int(self.params.get('k', 1))
        if self.kind == 'tanh':
            return abs(self._f('amplitude') * self._f('c', 1))
        return 6.0 * abs(self._f('amplitude'))

    def shifted(self, c: float) -> 'DisplacementSpec':
        """Control displacement xi + c (positive c gives a positive-mean walk)."""
        return replace(self, offset=self.offset + float(c))

    def to_dict(self) -> Dict:
        return {
            'kind': self.kind,
            'params': {k: (v if not isinstance(v, Fraction) else str(v)) for k, v in self.params.items()},
            'monotone': self.monotone,
            'offset': self.offset
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'DisplacementSpec':
        if not isinstance(data, dict) or 'kind' not in data:
            raise ValidationError(f"displacement descriptor needs a 'kind', got {data!r}")
        return cls(
            kind=data['kind'],
            params=dict(data.get('params', {})),
            monotone=data.get('monotone'),
            offset=float(data.get('offset', 0.0))
        )


@dataclass(frozen=True)
class PerturbationSpec:
    """
    Perturbation r(y, x) of the fiber maps in the interval chart.

        zero             r = 0
        cubic            r = rho * x^2 (x - 1)
        cubic_modulated  r = rho * x^2 (x - 1) * (1 + kappa * sin(2 pi y))

    All kinds vanish to second order at x = 0 and to first order at x = 1.
    `r0` is the declared budget for |r|, |dr/dx| and |dr/dy|.
    """

    kind: str = 'zero'
    rho: float = 0.0
    kappa: float = 0.0
    r0: Optional[float] = None

    def __post_init__(self):
        if self.kind not in R_KINDS:
            raise ValidationError(f"unknown perturbation kind {self.kind!r}; expected one of {R_KINDS}")
        if self.kind == 'cubic_modulated' and abs(self.kappa) >= 1:
            raise ValidationError(f"|kappa| must be < 1, got {self.kappa}")

    @property
    def is_zero(self) -> bool:
        return self.kind == 'zero' or self.rho == 0.0

    def modulation(self, y):
        if self.kind == 'cubic_modulated':
            return 1.0 + self.kappa * np.sin(TWO_PI * np.asarray(y, dtype=float))
        return np.ones_like(np.asarray(y, dtype=float))

    def value(self, y, x):
        x = np.asarray(x, dtype=float)
        if self.is_zero:
            return np.zeros(np.broadcast(np.asarray(y, dtype=float), x).shape)
        return self.rho * self.modulation(y) * x * x * (x - 1.0)

    def dx(self, y, x):
        x = np.asarray(x, dtype=float)
        if self.is_zero:
            return np.zeros(np.broadcast(np.asarray(y, dtype=float), x).shape)
        return self.rho * self.modulation(y) * (3.0 * x * x - 2.0 * x)

    def dy(self, y, x):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.is_zero or self.kind != 'cubic_modulated':
            return np.zeros(np.broadcast(y, x).shape)
        return self.rho * self.kappa * TWO_PI * np.cos(TWO_PI * y) * x * x * (x - 1.0)

    def ratios(self, y, xh, sh) -> Tuple[np.ndarray, np.ndarray]:
        """
        (r / x, r / (1 - x)) computed from x and 1 - x separately, so both stay
        accurate when x or 1 - x underflows.
        """
        scale = -self.rho * self.modulation(y)
        return scale * xh * sh, scale * xh * xh

    def to_dict(self) -> Dict:
        return {'kind': self.kind, 'rho': self.rho, 'kappa': self.kappa, 'r0': self.r0}

    @classmethod
    def from_dict(cls, data: Optional[Dict]) -> 'PerturbationSpec':
        if not data:
            return cls()
        return cls(
            kind=data.get('kind', 'zero'),
            rho=float(to_fraction(data.get('rho', 0.0))),
            kappa=float(to_fraction(data.get('kappa', 0.0))),
            r0=None if data.get('r0') is None else float(data['r0'])
        )


@dataclass(frozen=True, eq=False)
class SkewSystem:
    """Skew product (y, x) -> (m*y mod 1, g_y(x)) in the interval or line chart."""

    m: int
    N: int
    xi: DisplacementSpec
    r: PerturbationSpec = field(default_factory=PerturbationSpec)
    chart: str = 'line'

    def __post_init__(self):
        if int(self.m) < 2 or int(self.N) < 1:
            raise ValidationError(f"need m >= 2 and N >= 1, got m={self.m}, N={self.N}")
        if self.chart not in CHARTS:
            raise ValidationError(f"chart must be one of {CHARTS}, got {self.chart!r}")

    def with_xi(self, xi: DisplacementSpec) -> 'SkewSystem':
        return replace(self, xi=xi)

    def to_dict(self) -> Dict:
        return {
            'm': int(self.m),
            'N': int(self.N),
            'xi': self.xi.to_dict(),
            'r': self.r.to_dict(),
            'chart': self.chart
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'SkewSystem':
        try:
            return cls(
                m=int(data['m']),
                N=int(data.get('N', 1)),
                xi=DisplacementSpec.from_dict(data['xi']),
                r=PerturbationSpec.from_dict(data.get('r')),
                chart=data.get('chart', 'line')
            )
        except KeyError as e:
            raise ValidationError(f"system descriptor missing key {e}") from e

    def __repr__(self):
        return f'<SkewSystem m={self.m} xi={self.xi.kind} r={self.r.kind} chart={self.chart}>'


@dataclass(frozen=True, eq=False)
class DiscreteDisplacement:
    """Cell values xi_N (centered) with the applied shift and deviation bound."""

    values: np.ndarray
    shift: object
    deviation_bound: float
    m: int
    N: int

    @property
    def K(self) -> int:
        return int(self.values.shape[0])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'index': np.arange(1, self.K + 1), 'xi': np.asarray(self.values, dtype=float)})


@dataclass(eq=False)
class Trajectory:
    """Fiber orbit stored in the line chart."""

    x_line: np.ndarray
    truncated_at: Optional[int] = None
    warnings: List[str] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return int(self.x_line.shape[0]) - 1

    @property
    def x_interval(self) -> np.ndarray:
        return expit(self.x_line)

    @property
    def saturated(self) -> bool:
        return bool((np.abs(self.x_line) > 745.0).any())

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'step': np.arange(self.x_line.shape[0]),
            'x_interval': self.x_interval,
            'x_line': self.x_line
        })


@dataclass(frozen=True)
class LyapunovEstimate:
    """Fiber Lyapunov exponents at x = 0 and x = 1."""

    L0: float
    L1: float
    L0_error: float
    L1_error: float
    nodes: int
    L0_mc: Optional[float] = None
    L1_mc: Optional[float] = None
    L0_se: Optional[float] = None
    L1_se: Optional[float] = None
    samples: int = 0

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class ClassCondition:
    """One membership condition with its worst grid point."""

    name: str
    passed: bool
    worst_value: float
    threshold: Optional[float] = None
    worst_point: Optional[Tuple[float, float]] = None
    note: str = ''

    def to_dict(self) -> Dict:
        return {
            'name': self.name,
            'passed': self.passed,
            'worst_value': self.worst_value,
            'threshold': self.threshold,
            'worst_point': list(self.worst_point) if self.worst_point else None,
            'note': self.note
        }


@dataclass(frozen=True)
class ClassReport:
    """Pass/fail report of the membership conditions."""

    conditions: Tuple[ClassCondition, ...]
    grid: int
    C: Optional[float]
    r0: Optional[float]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def condition(self, name: str) -> ClassCondition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> List[str]:
        return [c.name for c in self.conditions if not c.passed]

    def to_dict(self) -> Dict:
        return {
            'passed': self.passed,
            'grid': self.grid,
            'C': self.C,
            'r0': self.r0,
            'conditions': [c.to_dict() for c in self.conditions]
        }
