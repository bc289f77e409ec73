"""Conditional valuation along paths: regression (American Monte Carlo) and
analytic oracles.

The value process of a stream is assembled flow by flow.  For each flow the
time-t value is either the realized amount times its discount bond (once the
amount has fixed), a least-squares regression estimate of the forward-deflated
flow on functions of the time-t state (before fixing), or a closed-form
conditional value when the flow carries an analytic tag.  Regressions use the
scenario numeraire, so fitted values are plain time-t prices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatchError, InvalidSpecError, SingularRegressionError
from .models import GaussianShortRate, ScenarioSet, gaussian_caplet_value
from .numerics import mc_mean_se
from .streams import CashFlowStream, Flow, _bcast


@dataclass(frozen=True)
class RegressionBasis:
    """Monomial basis in the standardized model state, degree <= 4.

    Conditioning indicators supplied by a flow (exercise gates, stopping-time
    aliveness) enter multiplicatively, which amounts to fitting separate
    coefficients on each indicator branch.
    """

    degree: int = 2

    def __post_init__(self):
        if not (0 <= self.degree <= 4):
            raise InvalidSpecError("basis degree must be in 0..4")

    def describe(self) -> str:
        return f"monomials(state, degree<={self.degree})"


class _Fit:
    """A fitted conditional-expectation function of the state."""

    __slots__ = ("center", "scale", "degree", "cond_cols", "beta")

    def __init__(self, center, scale, degree, cond_cols, beta):
        self.center = center
        self.scale = scale
        self.degree = degree
        self.cond_cols = cond_cols
        self.beta = beta

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = (x - self.center) / self.scale
        cols = [np.ones_like(s)]
        for d in range(1, self.degree + 1):
            cols.append(s**d)
        out = np.zeros_like(s)
        k = 0
        for col in cols:
            out = out + self.beta[k] * col
            k += 1
        for cond in self.cond_cols:
            c = _bcast(cond, s)
            for col in cols:
                out = out + self.beta[k] * c * col
                k += 1
        return out


def _fit_conditional(
    x: np.ndarray,
    target: np.ndarray,
    degree: int,
    cond_cols: list[np.ndarray],
) -> _Fit:
    n = len(x)
    spread = float(x.std())
    if spread < 1e-14:
        # degenerate cross-section (e.g. t_0): plain mean, per indicator branch
        degree = 0
    center = float(x.mean())
    scale = spread if spread >= 1e-14 else 1.0
    s = (x - center) / scale
    cols = [np.ones(n)]
    for d in range(1, degree + 1):
        cols.append(s**d)
    base = list(cols)
    for cond in cond_cols:
        for col in base:
            cols.append(cond * col)
    design = np.column_stack(cols)
    beta, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < design.shape[1]:
        # collinear indicator branches are common (all-ones gates); retry
        # without conditioning before declaring the basis unusable
        if cond_cols:
            return _fit_conditional(x, target, degree, [])
        raise SingularRegressionError(
            f"rank-deficient design matrix (rank {rank} < {design.shape[1]}); "
            "enlarge the path count or shrink the basis"
        )
    return _Fit(center, scale, degree, cond_cols, beta)


class FlowValuator:
    """Per-flow conditional values and one-step-ahead value functions.

    value(i): pathwise value at t_i of all flows paying strictly after t_i.
    flow_value_fn(flow, i, cond_level): value of the flow at t_i as a function
    of the t_i state, with regression conditioning taken from information at
    t_{cond_level}; used both for realized values (cond_level=i) and for the
    one-step hedge projections (cond_level=i-1).
    """

    def __init__(
        self,
        stream: CashFlowStream,
        scen: ScenarioSet,
        basis: RegressionBasis | None = None,
        oracle: str = "regression",
    ):
        if stream.grid.times != scen.grid.times or stream.n_paths != scen.n_paths:
            raise GridMismatchError("stream and scenario set must share grid and paths")
        if oracle not in ("regression", "analytic"):
            raise InvalidSpecError(f"unknown value oracle {oracle!r}")
        self.stream = stream
        self.scen = scen
        self.basis = basis or RegressionBasis()
        self.oracle = oracle
        self._fits: dict[tuple[int, int, int], _Fit] = {}
        if oracle == "analytic":
            for f in stream.flows:
                if f.analytic is None:
                    raise InvalidSpecError(
                        f"flow {f.label!r} has no analytic conditional value"
                    )

    # ------------------------------------------------------------- analytic
    def _analytic_value_fn(self, flow: Flow, i: int):
        scen = self.scen
        t = scen.grid.times[i]
        pay_t = scen.grid.times[flow.pay_idx]
        scale = flow.analytic_scale
        if flow.fix_idx <= i:
            a_p, b_p = scen.bond_coeffs(i, pay_t)
            amounts = flow.amounts
            return lambda x: _bcast(amounts, np.asarray(x, float)) * a_p * np.exp(
                -b_p * np.asarray(x, float)
            )
        kind = flow.analytic[0]
        if kind == "const":
            a_p, b_p = scen.bond_coeffs(i, pay_t)
            amounts = flow.amounts
            return lambda x: _bcast(amounts, np.asarray(x, float)) * a_p * np.exp(
                -b_p * np.asarray(x, float)
            )
        if kind == "fra":
            _, t1, t2, strike, factor = flow.analytic
            a_1, b_1 = scen.bond_coeffs(i, t1)
            a_2, b_2 = scen.bond_coeffs(i, t2)
            acc = t2 - t1

            def fra_value(x):
                x = np.asarray(x, dtype=float)
                p1 = a_1 * np.exp(-b_1 * x)
                p2 = a_2 * np.exp(-b_2 * x)
                return scale * factor * ((p1 - p2) / acc - strike * p2)

            return fra_value
        if kind == "caplet":
            _, t1, t2, strike, factor = flow.analytic
            model = scen.model
            if not isinstance(model, GaussianShortRate):
                raise InvalidSpecError("analytic caplet values need the Gaussian model")

            def caplet_value(x):
                return scale * factor * gaussian_caplet_value(
                    model, t1, t2, strike, t=t, x=np.asarray(x, dtype=float)
                )

            return caplet_value
        raise InvalidSpecError(f"unknown analytic tag {kind!r}")

    # ----------------------------------------------------------- regression
    def _fit(self, flow_idx: int, i: int, cond_level: int) -> _Fit:
        key = (flow_idx, i, cond_level)
        fit = self._fits.get(key)
        if fit is None:
            flow = self.stream.flows[flow_idx]
            scen = self.scen
            target = (
                flow.amounts
                * scen.numeraire[:, i]
                / scen.numeraire[:, flow.pay_idx]
            )
            cond = flow.cond_columns(cond_level) if cond_level >= 0 else []
            fit = _fit_conditional(scen.state[:, i], target, self.basis.degree, cond)
            self._fits[key] = fit
        return fit

    # -------------------------------------------------------------- surface
    def flow_value_fn(self, flow_idx: int, i: int, cond_level: int | None = None):
        """Value of the flow at t_i as a function of the t_i state."""
        flow = self.stream.flows[flow_idx]
        if flow.pay_idx < i:
            raise InvalidSpecError("flow already paid")
        cond_level = i if cond_level is None else cond_level
        scen = self.scen
        if self.oracle == "analytic":
            return self._analytic_value_fn(flow, i)
        if flow.fix_idx <= cond_level:
            amounts = flow.amounts
            if flow.pay_idx == i:
                return lambda x: _bcast(amounts, np.asarray(x, float)) * np.ones_like(
                    np.asarray(x, float)
                )
            a_p, b_p = scen.bond_coeffs(i, scen.grid.times[flow.pay_idx])
            return lambda x: _bcast(amounts, np.asarray(x, float)) * a_p * np.exp(
                -b_p * np.asarray(x, float)
            )
        if flow.fix_idx == i and flow.fixer is not None:
            fixer = flow.fixer
            if flow.pay_idx == i:
                return lambda x: np.asarray(fixer(x), dtype=float)
            a_p, b_p = scen.bond_coeffs(i, scen.grid.times[flow.pay_idx])
            return lambda x: np.asarray(fixer(x), dtype=float) * a_p * np.exp(
                -b_p * np.asarray(x, float)
            )
        fit = self._fit(flow_idx, i, cond_level)
        return fit.evaluate

    def value(self, i: int) -> np.ndarray:
        """Pathwise value at t_i of the flows paying strictly after t_i."""
        scen = self.scen
        out = np.zeros(scen.n_paths)
        x = scen.state[:, i]
        for k, flow in enumerate(self.stream.flows):
            if flow.pay_idx <= i:
                continue
            out = out + self.flow_value_fn(k, i)(x)
        return out


@dataclass(frozen=True)
class ValueProcess:
    """Per-path conditional values V(t_i) of a stream (V after the last flow is 0)."""

    grid_times: tuple[float, ...]
    values: np.ndarray
    basis_description: str
    numeraire_description: str
    valuator: FlowValuator = field(repr=False)

    def value_mc(self, i: int) -> tuple[float, float]:
        return mc_mean_se(self.values[:, i])


def conditional_value(
    stream: CashFlowStream,
    scen: ScenarioSet,
    basis: RegressionBasis | None = None,
    oracle: str = "regression",
) -> ValueProcess:
    """Regression (or analytic) estimate of the pathwise continuation value.

    V(t_i) = N(t_i) E( sum_{t_j > t_i} X_j / N(t_j) | F_{t_i} ); at t_0 the
    regression degenerates to the plain Monte Carlo present value.
    """
    valuator = FlowValuator(stream, scen, basis=basis, oracle=oracle)
    n_times = scen.n_times
    values = np.zeros((scen.n_paths, n_times))
    for i in range(n_times):
        values[:, i] = valuator.value(i)
    desc = "analytic" if oracle == "analytic" else valuator.basis.describe()
    num_desc = scen.sim_measure.numeraire.value
    return ValueProcess(stream.grid.times, values, desc, num_desc, valuator)
