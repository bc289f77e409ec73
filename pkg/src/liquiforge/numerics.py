"""Shared numerical utilities: normal distribution, MC statistics, quadrature.

The normal CDF is evaluated through the complementary error function so the
closed-form oracles carry absolute error below 1e-12 and are never the
binding error source next to Monte Carlo noise.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erfc

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def norm_cdf(x):
    """Standard normal CDF via 0.5*erfc(-x/sqrt(2))."""
    return 0.5 * erfc(-np.asarray(x, dtype=float) / _SQRT2)


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def mc_mean_se(samples: np.ndarray) -> tuple[float, float]:
    """Mean and standard error of a 1-d sample array.

    Reduction order is numpy's fixed left-to-right pairwise sum, so results
    are bit-stable for a fixed input array regardless of caller threading.
    """
    x = np.asarray(samples, dtype=float)
    n = x.size
    mean = float(x.mean())
    if n < 2:
        return mean, 0.0
    se = float(x.std(ddof=1) / np.sqrt(n))
    return mean, se


def gauss_hermite(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Probabilists' Gauss-Hermite rule: nodes z and weights w with sum(w)=1.

    Integrates f against the standard normal density: E[f(Z)] ~= sum w*f(z).
    """
    z, w = np.polynomial.hermite_e.hermegauss(n_nodes)
    w = w / w.sum()
    return z, w


def gaussian_exp_poly_moment(mu, s2, beta: float, k: int):
    """E[(mu + s*Z)^k * exp(beta*(mu + s*Z))] for standard normal Z.

    Complete-the-square identity: the expectation equals
    exp(beta*mu + beta^2 s^2/2) * E[(mu' + s*Z)^k] with mu' = mu + beta*s^2.
    Supports k in 0..4; mu and s2 may be arrays.
    """
    mu = np.asarray(mu, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    pref = np.exp(beta * mu + 0.5 * beta * beta * s2)
    mup = mu + beta * s2
    if k == 0:
        return pref
    if k == 1:
        return pref * mup
    if k == 2:
        return pref * (mup**2 + s2)
    if k == 3:
        return pref * (mup**3 + 3.0 * mup * s2)
    if k == 4:
        return pref * (mup**4 + 6.0 * mup**2 * s2 + 3.0 * s2**2)
    raise ValueError(f"moment order {k} not supported")


def solve_two_instrument_projection(
    e_v, e_va, e_vb, m_a, m_b, c_aa, c_ab, c_bb
):
    """Least-squares weights (u_a, u_b) minimising E[(v - u_a*A - u_b*B)^2].

    Inputs are conditional moments: means m_a, m_b, central second moments
    c_aa, c_ab, c_bb of the instruments, and E[v], E[v*A], E[v*B].  The
    normal equations are expanded in covariance form so the near-collinear
    instrument case (two bonds driven by one factor over a short step) does
    not lose the determinant to cancellation.

    Degenerate systems fall back to a single-instrument or pure-mean fit.
    """
    e_v = np.asarray(e_v, dtype=float)
    cv_a = e_va - e_v * m_a
    cv_b = e_vb - e_v * m_b

    det = (
        m_a * m_a * c_bb
        - 2.0 * m_a * m_b * c_ab
        + m_b * m_b * c_aa
        + (c_aa * c_bb - c_ab * c_ab)
    )
    num_a = (
        e_v * (m_a * c_bb - m_b * c_ab)
        + m_b * (m_b * cv_a - m_a * cv_b)
        + (cv_a * c_bb - cv_b * c_ab)
    )
    num_b = (
        e_v * (m_b * c_aa - m_a * c_ab)
        + m_a * (m_a * cv_b - m_b * cv_a)
        + (cv_b * c_aa - cv_a * c_ab)
    )

    scale = m_a * m_a * c_bb + 2.0 * np.abs(m_a * m_b * c_ab) + m_b * m_b * c_aa
    ok = det > 1e-14 * np.maximum(scale, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        u_a = np.where(ok, num_a / np.where(ok, det, 1.0), 0.0)
        u_b = np.where(ok, num_b / np.where(ok, det, 1.0), 0.0)

    if not np.all(ok):
        # rank-1 fallback: project on instrument A alone, then on its mean
        g_aa = c_aa + m_a * m_a
        ok_a = g_aa > 1e-300
        fb = np.where(ok_a, e_va / np.where(ok_a, g_aa, 1.0), 0.0)
        u_a = np.where(ok, u_a, fb)
        u_b = np.where(ok, u_b, 0.0)
    return u_a, u_b


def deterministic_sum(values: np.ndarray, axis=None):
    """Fixed-order summation wrapper (numpy pairwise, single threaded)."""
    return np.sum(np.asarray(values), axis=axis)
