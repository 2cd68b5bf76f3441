"""Closed-form radial solutions of the p-Laplacian interior Bernoulli
problem on balls, their free-boundary radii, the critical constants, the
large-p limits, and the J_p / J_inf energy evaluators on grid fields.

On the ball of radius R in dimension n (p > n, alpha = (p-n)/(p-1)) the
p-harmonic profile between an inner free boundary at rho and the outer
boundary is u(x) = (|x|^a - rho^a) / (R^a - rho^a).  The slope condition
|grad u| = lambda at rho reduces to the scalar root problem

    f(rho) = lambda*rho^a + a*rho^(a-1) - lambda*R^a = 0,

which has zero, one or two roots depending on the sign of its minimum.  The
smaller ("hyperbolic") root collapses to 0 and the larger ("elliptic") root
tends to R - 1/lambda as p grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import ScalarField
from .reports import VerificationReport
from .solver import upwind_gradient_field

ROOT_ATOL = 1e-13       # bisection width target (tighter than the 1e-12 contract)
DOUBLE_ROOT_TOL = 1e-12
EPS_ROOT_SCALE = 1e-9   # lower bracket endpoint, relative to R
MAX_BISECT = 200


@dataclass(frozen=True)
class RadialBernoulli:
    """Record of one radial solve; rho_hyper/rho_ell are None when absent."""

    n: int
    p: float
    R: float
    lam: float
    alpha: float
    lambda_p: float
    m_alpha: float
    rho_hyper: float | None
    rho_ell: float | None

    def f(self, rho):
        a = self.alpha
        return self.lam * rho ** a + a * rho ** (a - 1.0) - self.lam * self.R ** a


def critical_lambda(n, p, R):
    """Threshold lambda_p(B_R) = (1 - alpha)^(1 - 1/alpha) / R."""
    alpha = (p - n) / (p - 1.0)
    return (1.0 - alpha) ** (1.0 - 1.0 / alpha) / R


def radial_solve(n, p, R, lam):
    """Free-boundary radii of the radial problem for given lambda.

    Roots are bisected on the two monotone branches of f around its critical
    point rho* = (1-alpha)/lambda.  For large p the hyperbolic root drops
    below any fixed bracket start, so the bисection switches to log space;
    if it underflows past double precision the root is reported as 0.0.
    """
    if p <= n:
        raise ValueError(f"need p > n, got p={p}, n={n}")
    if R <= 0 or lam <= 0:
        raise ValueError("R and lambda must be positive")
    alpha = (p - n) / (p - 1.0)
    lam_p = critical_lambda(n, p, R)
    m_alpha = (lam / (1.0 - alpha)) ** (1.0 - alpha) - lam * R ** alpha

    def f(rho):
        return lam * rho ** alpha + alpha * rho ** (alpha - 1.0) - lam * R ** alpha

    rho_star = (1.0 - alpha) / lam
    if m_alpha > DOUBLE_ROOT_TOL:
        rho_h, rho_e = None, None
    elif abs(m_alpha) <= DOUBLE_ROOT_TOL:
        rho_h = rho_e = rho_star
    else:
        assert f(rho_star) < 0.0
        assert f(R) > 0.0  # equals alpha * R^(alpha-1)
        eps = EPS_ROOT_SCALE * R
        if f(eps) > 0.0:
            rho_h = _bisect(f, eps, rho_star)
        else:
            # root below the standard bracket: bisect in log space
            lo = math.log(R) - 690.0   # ~1e-300 * R
            if f(math.exp(lo)) <= 0.0:
                rho_h = 0.0            # subnormal root, indistinguishable from 0
            else:
                t = _bisect(lambda s: f(math.exp(s)), lo, math.log(eps),
                            atol=1e-13)
                rho_h = math.exp(t)
        rho_e = _bisect(f, rho_star, R)
    return RadialBernoulli(n, p, R, lam, alpha, lam_p, m_alpha, rho_h, rho_e)


def _bisect(f, a, b, atol=ROOT_ATOL):
    fa = f(a)
    fb = f(b)
    if not (fa > 0.0 > fb or fa < 0.0 < fb):
        raise ValueError("root not bracketed")
    for _ in range(MAX_BISECT):
        m = 0.5 * (a + b)
        fm = f(m)
        if (fm > 0.0) == (fa > 0.0):
            a, fa = m, fm
        else:
            b, fb = m, fm
        if b - a <= atol:
            break
    return 0.5 * (a + b)


def _branch_rho(rb, branch):
    rho = rb.rho_hyper if branch == "hyper" else rb.rho_ell
    if rho is None:
        raise ValueError(f"{branch} branch does not exist (m_alpha={rb.m_alpha:.3g})")
    return rho


def radial_profile(rb, branch, x_abs):
    """Profile value (|x|^a - rho^a)/(R^a - rho^a) on rho <= |x| <= R."""
    rho = _branch_rho(rb, branch)
    x_abs = np.asarray(x_abs, float)
    if np.any(x_abs < rho - 1e-12) or np.any(x_abs > rb.R + 1e-12):
        raise ValueError("radius outside [rho, R]")
    a = rb.alpha
    val = (np.clip(x_abs, rho, rb.R) ** a - rho ** a) / (rb.R ** a - rho ** a)
    return float(val) if val.ndim == 0 else val


def gradient_check(rb, branch, rho=None):
    """|slope at the free boundary - lambda|; vanishes identically when f=0."""
    if rho is None:
        rho = _branch_rho(rb, branch)
    a = rb.alpha
    grad = a * rho ** (a - 1.0) / (rb.R ** a - rho ** a)
    return abs(grad - rb.lam)


def sweep_p(n, R, lam, p_list, samples=10000):
    """Rows (p, rho_hyper, rho_ell, sup|u_p - limit|) along increasing p.

    The comparison is against the affine limit 1 - lambda*(R - |x|) clamped
    at 0; the elliptic profile is extended by 0 below its free boundary so
    the two functions share the interval [min(rho'', R-1/lambda), R].
    """
    if lam * R <= 1.0:
        raise ValueError("need lambda > 1/R for a non-trivial limit")
    rows = []
    r_lim = R - 1.0 / lam
    for p in p_list:
        rb = radial_solve(n, p, R, lam)
        if rb.rho_ell is None:
            rows.append((p, math.nan, math.nan, math.nan))
            continue
        lo = min(rb.rho_ell, r_lim)
        xs = np.linspace(lo, R, samples)
        up = np.where(xs >= rb.rho_ell,
                      (xs ** rb.alpha - rb.rho_ell ** rb.alpha)
                      / (R ** rb.alpha - rb.rho_ell ** rb.alpha), 0.0)
        lim = np.clip(1.0 - lam * (R - xs), 0.0, 1.0)
        sup = float(np.max(np.abs(up - lim)))
        rows.append((p, rb.rho_hyper, rb.rho_ell, sup))
    return rows


def bernoulli_constant_limit(n, R, p_list):
    """Rows (p, lambda_p(B_R)); the sequence decreases to 1/R."""
    return [(p, critical_lambda(n, p, R)) for p in p_list]


# ---------------------------------------------------------------------------
# energy functionals on grid fields
# ---------------------------------------------------------------------------

def positivity_area(u, tau_zero=1e-7):
    """h^2 * #{u > tau_zero} over inside nodes."""
    h = u.grid.h
    return h * h * int((u.inside & (u.values > tau_zero)).sum())


def j_p(u, lam, p, width=3, tau_zero=1e-7):
    """(1/p) * integral (|grad u|/lambda)^p + ((p-1)/p) * |{u>0}|,
    by the midpoint rule with the solver's upwind-stencil gradient."""
    if p < 1:
        raise ValueError("need p >= 1")
    h = u.grid.h
    g = upwind_gradient_field(u, width=width)
    cells = u.inside
    integral = h * h * float(np.sum((g[cells] / lam) ** p))
    return integral / p + (p - 1.0) / p * positivity_area(u, tau_zero)


def j_inf(u, lam, width=3, tau_zero=1e-7, tol=None):
    """|{u>0}| when the upwind sup-gradient stays within lambda, else inf."""
    h = u.grid.h
    if tol is None:
        tol = 5 * h * lam
    g = upwind_gradient_field(u, width=width)
    if float(g[u.inside].max()) > lam + tol:
        return math.inf
    return positivity_area(u, tau_zero)


def verify_monotone_in_p(u, lam, p, q, width=3, slack=1e-12):
    """J_p(u) <= J_q(u) for p <= q: Young's inequality holds pointwise for
    the discrete integrand, so the quadrature inherits it exactly."""
    if not (1.0 < p <= q):
        raise ValueError("need 1 < p <= q")
    jp = j_p(u, lam, p, width=width)
    jq = j_p(u, lam, q, width=width)
    return VerificationReport("energy-monotone-in-p", jp - jq, slack,
                              citation="energy-monotonicity",
                              details={"p": p, "q": q, "J_p": jp, "J_q": jq})
