"""Expected cash-flow profiles under different measures and their defects.

Three conventions are supported: plain expectations under a chosen pricing
measure, user-supplied physical probabilities (two-state toys) or a clearly
labelled risk-neutral proxy, and the bond-numeraire normalisation

    E_i = N(0) E^Q( X_i / N(t_i) ) / P(t_i; 0),

which is numeraire invariant because the numerator is the risk-neutral value
of the flow.  For payoffs whose timing correlates with rates the E_i of a
unit notional need not sum to one; the closed forms for the single-period
lognormal model quantify that defect.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, GridMismatchError, InvalidSpecError
from .models import (
    BlackSinglePeriod,
    MeasureSpec,
    ScenarioSet,
    numeraire_change_weight,
)
from .numerics import mc_mean_se, norm_cdf
from .streams import CashFlowStream


@dataclass(frozen=True)
class ExpectedCashFlowProfile:
    """Per-time expected amounts with Monte Carlo standard errors."""

    times: tuple[float, ...]
    values: tuple[float, ...]
    std_errors: tuple[float, ...]
    convention: str

    def value_at(self, t: float) -> float:
        for ti, v in zip(self.times, self.values):
            if abs(ti - t) < 1e-12:
                return v
        raise GridMismatchError(f"no profile value at t={t}")

    def rows(self):
        return list(zip(self.times, self.values, self.std_errors))


def _check_shared_grid(stream: CashFlowStream, scen: ScenarioSet) -> None:
    if stream.grid.times != scen.grid.times or stream.n_paths != scen.n_paths:
        raise GridMismatchError("stream and scenario set must share grid and paths")


def expected_cashflows(
    stream: CashFlowStream, scen: ScenarioSet, measure: MeasureSpec | None = None
) -> ExpectedCashFlowProfile:
    """Per-time mean of X_i under the requested martingale measure.

    When the measure differs from the simulation measure each payment is
    reweighted with the numeraire-change weight evaluated at its payment time.
    """
    _check_shared_grid(stream, scen)
    measure = measure or scen.sim_measure
    x = stream.matrix()
    times = stream.grid.times
    values, errs = [], []
    for i, t in enumerate(times):
        col = x[:, i]
        if measure != scen.sim_measure:
            col = col * numeraire_change_weight(scen, scen.sim_measure, measure, t)
        m, se = mc_mean_se(col)
        values.append(m)
        errs.append(se)
    label = (
        "EC_Q(sim)"
        if measure == scen.sim_measure
        else f"EC_Q({measure.numeraire.value}"
        + (f"[{measure.maturity}]" if measure.maturity is not None else "")
        + ")"
    )
    return ExpectedCashFlowProfile(times, tuple(values), tuple(errs), label)


def ec_physical(
    stream: CashFlowStream,
    scen: ScenarioSet,
    path_probabilities: np.ndarray | None = None,
    allow_proxy: bool = False,
) -> ExpectedCashFlowProfile:
    """Physical-measure expected flows.

    Requires explicit per-path probabilities (toy settings).  Without them the
    risk-neutral simulation measure can stand in as a short-horizon proxy, but
    only when allow_proxy is set, and the profile is labelled accordingly.
    """
    _check_shared_grid(stream, scen)
    x = stream.matrix()
    if path_probabilities is not None:
        p = np.asarray(path_probabilities, dtype=float)
        if p.shape != (scen.n_paths,) or abs(p.sum() - 1.0) > 1e-12 or np.any(p < 0):
            raise InvalidSpecError("path probabilities must be a distribution over paths")
        values = tuple(float(np.sum(p * x[:, i])) for i in range(x.shape[1]))
        errs = tuple(0.0 for _ in stream.grid.times)
        return ExpectedCashFlowProfile(stream.grid.times, values, errs, "EC_P")
    if not allow_proxy:
        raise InvalidSpecError(
            "physical expectations need path probabilities; pass allow_proxy=True "
            "to use the risk-neutral measure as a labelled proxy"
        )
    prof = expected_cashflows(stream, scen)
    return ExpectedCashFlowProfile(
        prof.times, prof.values, prof.std_errors, "EC_P~Q_PROXY"
    )


def ec_per_bond(stream: CashFlowStream, scen: ScenarioSet) -> ExpectedCashFlowProfile:
    """Bond-normalised expected flows E_i = N(0) E(X_i/N(t_i)) / P(t_i;0)."""
    _check_shared_grid(stream, scen)
    x = stream.matrix()
    n0 = scen.numeraire_t0()
    values, errs = [], []
    for i, _t in enumerate(stream.grid.times):
        df = float(scen.bond(0, stream.grid.times[i])[0])
        samples = x[:, i] * n0 / (scen.numeraire[:, i] * df)
        m, se = mc_mean_se(samples)
        values.append(m)
        errs.append(se)
    return ExpectedCashFlowProfile(
        stream.grid.times, tuple(values), tuple(errs), "EC_PER_BOND"
    )


def ec_per_bond_sum_defect(stream: CashFlowStream, scen: ScenarioSet) -> tuple[float, float]:
    """(sum_i E_i - 1, std error), computed pathwise for a coherent error bar."""
    _check_shared_grid(stream, scen)
    x = stream.matrix()
    n0 = scen.numeraire_t0()
    acc = np.zeros(scen.n_paths)
    for i, t in enumerate(stream.grid.times):
        if not np.any(x[:, i]):
            continue
        df = float(scen.bond(0, t)[0])
        acc += x[:, i] * n0 / (scen.numeraire[:, i] * df)
    return mc_mean_se(acc - 1.0)


def timing_weight_ratio(stream: CashFlowStream, scen: ScenarioSet) -> ExpectedCashFlowProfile:
    """E_i via the ratio E(X_i/N(t_i)) / E(1/N(t_i)); agrees with ec_per_bond.

    The denominator is the Monte Carlo bond price, so the ratio needs no
    external curve and makes the additivity condition transparent: it sums to
    one exactly when timing and discounting are independent.
    """
    _check_shared_grid(stream, scen)
    x = stream.matrix()
    values, errs = [], []
    for i, _t in enumerate(stream.grid.times):
        num = x[:, i] / scen.numeraire[:, i]
        den = 1.0 / scen.numeraire[:, i]
        den_mean = float(den.mean())
        m, se = mc_mean_se(num / den_mean)
        values.append(m)
        errs.append(se)
    return ExpectedCashFlowProfile(
        stream.grid.times, tuple(values), tuple(errs), "EC_PER_BOND_RATIO"
    )


# --------------------------------------------------------------------------
# closed forms (single-period lognormal model)
# --------------------------------------------------------------------------


def measure_mix_residual_closed_form(
    l0: float, sigma_l: float, t1: float, t2: float
) -> float:
    """Netting residual (T2-T1) * E[L^2] = (T2-T1) * L0^2 * exp(sigma^2 T1)."""
    if t1 >= t2:
        raise DegenerateError("need T1 < T2")
    if l0 < 0 or sigma_l < 0 or t1 < 0:
        raise InvalidSpecError("inputs must be non-negative")
    return (t2 - t1) * l0 * l0 * np.exp(sigma_l * sigma_l * t1)


def measure_mix_residual_mc(scen: ScenarioSet) -> dict:
    """Monte Carlo reconstruction of the measure-mix netting residual.

    The long leg's expectation is taken with the raw bond-ratio reweighting
    P(T1;T1)/P(T2;T1) = 1 + accrual*L(T1) (the netting construction that
    produces the (T2-T1)E[L^2] residual); the short leg is the plain
    forward-measure mean.  Returns the residual, the direct (T2-T1)E[L^2]
    estimate, and shared-path standard errors.
    """
    model = scen.model
    if not isinstance(model, BlackSinglePeriod):
        raise InvalidSpecError("measure-mix residual demo runs on the single-period model")
    if model.numeraire_choice.maturity != model.t2:
        raise InvalidSpecError("simulate under the T2-forward measure")
    lib = scen.state[:, 1]
    acc = model.accrual
    long_leg = lib * (1.0 + acc * lib)
    residual_samples = long_leg - lib
    res_mean, res_se = mc_mean_se(residual_samples)
    l2_mean, l2_se = mc_mean_se(acc * lib * lib)
    ec_long, ec_long_se = mc_mean_se(long_leg)
    ec_short, ec_short_se = mc_mean_se(lib)
    return {
        "ec_long": ec_long,
        "ec_long_se": ec_long_se,
        "ec_short": ec_short,
        "ec_short_se": ec_short_se,
        "residual": res_mean,
        "residual_se": res_se,
        "accrual_l_squared": l2_mean,
        "accrual_l_squared_se": l2_se,
        "closed_form": measure_mix_residual_closed_form(
            model.l0, model.sigma_l, model.t1, model.t2
        ),
    }


def digital_sum_defect_closed_form(
    l0: float, strike: float, sigma_l: float, t1: float, t2: float
) -> float:
    """E_1 + E_2 - 1 for the digital pair under the lognormal forward model.

    Equals [L0*acc/(1+L0*acc)] * (Phi(d+) - Phi(d-)) with the usual d+-.
    The zero-volatility limit is resolved through the indicator limit: the
    defect vanishes unless the digitals sit exactly at the money.
    """
    if l0 <= 0 or strike <= 0:
        raise InvalidSpecError("l0 and strike must be positive")
    if t1 >= t2:
        raise DegenerateError("need T1 < T2")
    acc = t2 - t1
    factor = l0 * acc / (1.0 + l0 * acc)
    vol = sigma_l * np.sqrt(t1)
    if vol < 1e-300:
        return 0.0
    d_plus = (np.log(l0 / strike) + 0.5 * vol * vol) / vol
    d_minus = (np.log(l0 / strike) - 0.5 * vol * vol) / vol
    return float(factor * (norm_cdf(d_plus) - norm_cdf(d_minus)))


def digital_sum_defect_atm_approx(l0: float, sigma_l: float, t1: float, t2: float) -> float:
    """Small-volatility at-the-money approximation factor * sigma*sqrt(T1)/sqrt(2 pi)."""
    acc = t2 - t1
    factor = l0 * acc / (1.0 + l0 * acc)
    return float(factor * sigma_l * np.sqrt(t1) / np.sqrt(2.0 * np.pi))


def bachelier_atm_defect(l0: float, sigma_n: float, t1: float, t2: float) -> float:
    """At-the-money defect under a normal rate model with absolute vol sigma_n."""
    if sigma_n < 0:
        raise InvalidSpecError("sigma_n must be >= 0")
    acc = t2 - t1
    return float(
        acc / (1.0 + l0 * acc) * sigma_n * np.sqrt(t1) / np.sqrt(2.0 * np.pi)
    )


def black_unit_caplet_price(l0, strike, sigma_l, t1, discount: float) -> float:
    """Black price of the unit-notional caplet paying (L-K)^+ (no accrual)."""
    vol = sigma_l * np.sqrt(t1)
    if vol < 1e-300:
        return float(discount * max(l0 - strike, 0.0))
    d_plus = (np.log(l0 / strike) + 0.5 * vol * vol) / vol
    d_minus = d_plus - vol
    return float(discount * (l0 * norm_cdf(d_plus) - strike * norm_cdf(d_minus)))
