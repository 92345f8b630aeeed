"""Closed-form and semi-analytic predictions: the resolvent-moment fixed
point m(lambda), the threshold function Q(lambda) with its inverse and
derivative, recovery thresholds, signal-eigenvalue and squared-overlap
curves, and dense-limit reference values.

Everything here is a pure function of value inputs. The population-based
estimator ``q_general`` is the independent Monte Carlo counterpart of the
fixed-point route; the two are cross-checked in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensembles import DegreeModel, SpikeModel, WeightModel
from .errors import NegativeDenominator, NoConvergence, NonPositiveDenominator, RootNotBracketed
from .popdyn import Population, _cavity_draws


def solve_m(
    lam: float,
    degree_model: DegreeModel,
    e_w2: float,
    damping: float = 0.5,
    tol: float = 1e-13,
    max_iter: int = 200_000,
) -> float:
    """Stable branch of  m = <<1 / (lambda - (k-1) E[W^2] m)>>_r.

    Damped fixed-point iteration from m0 = 1/lambda, which is continuously
    connected to the lambda -> infinity asymptote 1/lambda and therefore
    selects the physical (smaller) root. Fails with NegativeDenominator or
    NoConvergence when lambda is below the admissible region.
    """
    if lam <= 0:
        raise NegativeDenominator("lambda must be positive")
    r = degree_model.r
    km1 = np.arange(r.size, dtype=float) - 1.0
    mask = r > 0
    m = 1.0 / lam
    for _ in range(max_iter):
        den = lam - km1 * e_w2 * m
        if np.any(den[mask] <= 0):
            raise NegativeDenominator(f"denominator crossed zero at lambda={lam:g}")
        m_next = float((r[mask] / den[mask]).sum())
        m_new = (1.0 - damping) * m + damping * m_next
        if abs(m_new - m) < tol:
            return m_new
        m = m_new
    raise NoConvergence(f"m fixed point not converged at lambda={lam:g}")


def _m_prime(lam: float, degree_model: DegreeModel, e_w2: float, m: float) -> float:
    """dm/dlambda by implicit differentiation of the m fixed point."""
    r = degree_model.r
    km1 = np.arange(r.size, dtype=float) - 1.0
    mask = r > 0
    g = np.zeros_like(r)
    g[mask] = 1.0 / (lam - km1[mask] * e_w2 * m)
    s1 = float((r * g * g).sum())
    s2 = float((r * km1 * g * g).sum())
    denom = 1.0 - e_w2 * s2
    if denom <= 0:
        raise NegativeDenominator("m'(lambda) undefined: at or below the spectral edge")
    return -s1 / denom


def q_tilde(lam: float, degree_model: DegreeModel, e_w2: float, max_iter: int = 200_000) -> float:
    """Threshold function Q(lambda) = sum_k p_k / (lambda - k E[W^2] m(lambda)).

    For a truncated Poisson table this reduces exactly to
    (c/cbar) m + p_{k_max} / (lambda - k_max E[W^2] m); for a regular model
    it collapses to the single-branch closed form.
    """
    m = solve_m(lam, degree_model, e_w2, max_iter=max_iter)
    p = degree_model.probs
    k = np.arange(p.size, dtype=float)
    den = lam - k * e_w2 * m
    mask = p > 0
    if np.any(den[mask] <= 0):
        raise NegativeDenominator(f"Q denominator crossed zero at lambda={lam:g}")
    return float((p[mask] / den[mask]).sum())


def q_tilde_prime(lam: float, degree_model: DegreeModel, e_w2: float, fd_check: bool = True) -> float:
    """dQ/dlambda by implicit differentiation, cross-checked against a
    centered finite difference (required to agree within 1e-6 relative)."""
    m = solve_m(lam, degree_model, e_w2)
    mp = _m_prime(lam, degree_model, e_w2, m)
    p = degree_model.probs
    k = np.arange(p.size, dtype=float)
    mask = p > 0
    den = lam - k * e_w2 * m
    qp = float((-(p[mask]) * (1.0 - k[mask] * e_w2 * mp) / den[mask] ** 2).sum())
    if fd_check:
        step = 1e-6 * max(abs(lam), 1.0)
        fd = (q_tilde(lam + step, degree_model, e_w2) - q_tilde(lam - step, degree_model, e_w2)) / (2 * step)
        if abs(fd - qp) > 1e-6 * max(abs(qp), 1e-300):
            raise NoConvergence(
                f"implicit Q' ({qp:.12g}) and finite difference ({fd:.12g}) disagree"
            )
    return qp


def gershgorin_bound(degree_model: DegreeModel, weight_model: WeightModel) -> float:
    """Row-sum bound on the noise spectrum: k_max * zeta."""
    return degree_model.k_max * weight_model.zeta


def admissible_lambda_floor(
    degree_model: DegreeModel,
    e_w2: float,
    hi: float | None = None,
    resolution: float = 1e-9,
) -> float:
    """Smallest lambda at which the m fixed point converges with positive
    denominators, located by geometric backtracking from an upper bound and
    bisection refinement. This is the spectral-edge proxy used to bracket
    root finding."""
    if hi is None:
        hi = max(2.0 * degree_model.k_max * np.sqrt(max(e_w2, 1e-300)), 1.0)

    def ok(lam):
        # Q itself must be evaluable: its sum runs to k_max, one term past
        # the k_max - 1 reached inside the m equation. The iteration cap is
        # reduced here: critical slowing at the edge marks inadmissibility
        # just as well as a sign crossing, and only shifts the floor up.
        try:
            q_tilde(lam, degree_model, e_w2, max_iter=30_000)
            return True
        except (NegativeDenominator, NoConvergence):
            return False

    good = float(hi)
    while not ok(good):
        good *= 2.0
        if good > 1e12:
            raise NoConvergence("no admissible lambda found below 1e12")
    bad = good * 0.7
    while ok(bad):
        good = bad
        bad *= 0.7
        if bad < 1e-12:
            return bad  # admissible all the way down
    for _ in range(200):
        if good - bad <= resolution * max(1.0, good):
            break
        mid = 0.5 * (good + bad)
        if ok(mid):
            good = mid
        else:
            bad = mid
    return good


def lambda_signal(
    theta: float,
    degree_model: DegreeModel,
    weight_model: WeightModel,
    spike_model: SpikeModel,
    tol: float = 1e-10,
) -> float:
    """Signal eigenvalue: the unique root of Q(lambda) = 1/(theta sigma_x^2).

    Q is strictly decreasing and positive above the admissible edge, so
    bisection between the edge and a Gershgorin-padded upper bound is
    unconditionally robust. The root exists down to the detachment point
    (theta_b in the regular case), where the branch meets the spectral
    edge; between there and theta_crit it describes the second eigenvalue
    rather than the top one. Below detachment RootNotBracketed is raised.
    """
    e_w2 = weight_model.second_moment_w
    target = 1.0 / (theta * spike_model.sigma_x2)
    lo = admissible_lambda_floor(degree_model, e_w2)
    try:
        q_lo = q_tilde(lo, degree_model, e_w2)
    except (NegativeDenominator, NoConvergence):
        lo *= 1.0 + 1e-9
        q_lo = q_tilde(lo, degree_model, e_w2)
    if q_lo <= target:
        raise RootNotBracketed(
            f"Q at the spectral edge ({q_lo:g}) does not exceed 1/(theta sigma^2)={target:g}; "
            "theta is at or below the recovery threshold"
        )
    hi = max(gershgorin_bound(degree_model, weight_model) + 2.0 * theta * spike_model.sigma_x2, lo * 2)
    while q_tilde(hi, degree_model, e_w2) >= target:
        hi *= 2.0
        if hi > 1e12:
            raise NoConvergence("failed to bracket the signal eigenvalue from above")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        try:
            val = q_tilde(mid, degree_model, e_w2)
        except (NegativeDenominator, NoConvergence):
            lo = mid
            continue
        if val > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def overlap_sq(
    theta: float,
    degree_model: DegreeModel,
    weight_model: WeightModel,
    spike_model: SpikeModel,
) -> float:
    """Typical squared overlap  -1 / (sigma_x^2 theta^2 Q'(lambda_theta))."""
    lam = lambda_signal(theta, degree_model, weight_model, spike_model)
    qp = q_tilde_prime(lam, degree_model, weight_model.second_moment_w)
    return -1.0 / (spike_model.sigma_x2 * theta**2 * qp)


def q_general(
    population: Population,
    degree_model: DegreeModel,
    weight_model: WeightModel,
    rng: np.random.Generator,
    samples: int = 1_000_000,
) -> float:
    """Monte Carlo Q_hat(lambda) = < integral {dpi}_k {drho_W}_k
    1/(lambda - {W^2/omega}_k) > over an equilibrated population."""
    total = 0.0
    count = 0
    for _, s_w2, _ in _cavity_draws(population.omega, None, degree_model, weight_model, samples, rng):
        den = population.lam - s_w2
        if den.min() <= 0:
            raise NonPositiveDenominator(f"min denominator {den.min():g}")
        total += float((1.0 / den).sum())
        count += den.size
    return total / count


def theta_crit(
    degree_model: DegreeModel,
    weight_model: WeightModel,
    spike_model: SpikeModel,
    lambda_structural: float,
    population: Population | None = None,
    rng: np.random.Generator | None = None,
    samples: int = 1_000_000,
) -> float:
    """Recovery threshold 1 / (sigma_x^2 Q(lambda_{theta=0})).

    Q is evaluated from the resolvent-moment route for truncated-Poisson and
    regular tables, and from a theta=0 population (``q_general``) for
    generic ones. ``lambda_structural`` must be supplied by the caller (the
    structural eigenvalue from a theta=0 population run, the closed form c
    for regular noise, or the spectral edge when no outlier exists).
    """
    if population is not None:
        if rng is None:
            raise ValueError("q_general route needs an rng")
        q0 = q_general(population, degree_model, weight_model, rng, samples)
    elif (
        degree_model.kind == "regular"
        and weight_model.values.size == 1
        and weight_model.values[0] > 0
    ):
        # closed form w c(c-2) / (sigma^2 (c-1)); also covers the marginal
        # chain c = 2, where the resolvent route degenerates (double root)
        c = degree_model.mean_c
        w = float(weight_model.values[0])
        return w * c * (c - 2.0) / (spike_model.sigma_x2 * (c - 1.0))
    elif degree_model.kind in ("truncated_poisson", "regular"):
        q0 = q_tilde(lambda_structural, degree_model, weight_model.second_moment_w)
    else:
        raise ValueError("generic degree tables need an equilibrated theta=0 population")
    return 1.0 / (spike_model.sigma_x2 * q0)


@dataclass(frozen=True)
class AnalyticReport:
    """Threshold and curve predictions for one (ensemble, theta) point.

    ``lambda_theta`` is the eigenvalue branch associated with the signal;
    for theta_b < theta < theta_crit it is the second eigenvalue, above
    theta_crit it is the top one, and below theta_b it is buried in the
    bulk (None). ``overlap_sq`` is nonzero only above theta_crit.
    """

    theta: float
    theta_crit: float
    lambda_structural: float
    bulk_edge: float | None
    lambda_theta: float | None
    lambda_top: float
    overlap_sq: float
    theta_b: float | None = None
    c_crit: float | None = None
    c_b: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def as_flat_dict(self) -> dict:
        out = {
            "theta": self.theta,
            "theta_crit": self.theta_crit,
            "lambda_structural": self.lambda_structural,
            "bulk_edge": self.bulk_edge,
            "lambda_theta": self.lambda_theta,
            "lambda_top": self.lambda_top,
            "overlap_sq": self.overlap_sq,
            "theta_b": self.theta_b,
            "c_crit": self.c_crit,
            "c_b": self.c_b,
        }
        return {k: v for k, v in out.items() if v is not None}


def rr_report(c: int, sigma_x2: float, theta: float) -> AnalyticReport:
    """Closed forms for random-regular noise with unit weights.

    theta_b marks detachment of the signal eigenvalue from the bulk edge
    2 sqrt(c-1); theta_crit marks it overtaking the structural eigenvalue c.
    c_crit and c_b are the same thresholds read along the c axis at fixed
    theta.
    """
    c = int(c)
    if c <= 2:
        raise ValueError("random-regular closed forms need c > 2")
    if theta < 0:
        raise ValueError("theta must be non-negative")
    ts = theta * sigma_x2
    root = np.sqrt(ts * ts + 4.0)
    t_crit = c * (c - 2.0) / (sigma_x2 * (c - 1.0))
    t_b = (c - 2.0) / (sigma_x2 * np.sqrt(c - 1.0))
    bulk = 2.0 * np.sqrt(c - 1.0)
    lam_branch = 0.5 * (c * root - (c - 2.0) * ts)
    lam_theta = lam_branch if theta >= t_b else None
    if theta > t_crit:
        lam_top = lam_branch
        ov = c * theta * sigma_x2**2 / (2.0 * root) - (c - 2.0) * sigma_x2 / 2.0
    else:
        lam_top = float(c)
        ov = 0.0
    return AnalyticReport(
        theta=float(theta),
        theta_crit=t_crit,
        lambda_structural=float(c),
        bulk_edge=bulk,
        lambda_theta=lam_theta,
        lambda_top=lam_top,
        overlap_sq=ov,
        theta_b=t_b,
        c_crit=0.5 * (2.0 + ts + root),
        c_b=0.25 * (ts + root) ** 2 + 1.0,
    )


def dense_limit_report(theta: float, sigma_x2: float) -> dict:
    """Dense-noise (large connectivity) reference values, in the weight
    normalization where the bulk is the unit semicircle with edge 2:
    threshold 1/sigma_x^2, outlier theta sigma^2 + 1/(theta sigma^2),
    squared overlap sigma_x^2 - 1/(theta^2 sigma_x^2)."""
    if theta < 0:
        raise ValueError("theta must be non-negative")
    t_crit = 1.0 / sigma_x2
    ts = theta * sigma_x2
    if theta > t_crit:
        lam = ts + 1.0 / ts
        ov = sigma_x2 - 1.0 / (theta**2 * sigma_x2)
    else:
        lam = 2.0
        ov = 0.0
    return {"theta_crit": t_crit, "lambda_top": lam, "overlap_sq": ov, "bulk_edge": 2.0}


def poisson_report(
    degree_model: DegreeModel,
    weight_model: WeightModel,
    spike_model: SpikeModel,
    theta: float,
    lambda_structural: float,
) -> AnalyticReport:
    """Semi-analytic report for a truncated-Poisson (or any resolvent-route)
    ensemble; ``lambda_structural`` comes from a theta=0 population run."""
    e_w2 = weight_model.second_moment_w
    t_crit = theta_crit(degree_model, weight_model, spike_model, lambda_structural)
    edge = admissible_lambda_floor(degree_model, e_w2)
    if theta > t_crit:
        lam = lambda_signal(theta, degree_model, weight_model, spike_model)
        ov = overlap_sq(theta, degree_model, weight_model, spike_model)
        lam_top = lam
    else:
        try:
            lam = lambda_signal(theta, degree_model, weight_model, spike_model)
        except RootNotBracketed:
            lam = None
        ov = 0.0
        lam_top = lambda_structural
    return AnalyticReport(
        theta=float(theta),
        theta_crit=t_crit,
        lambda_structural=lambda_structural,
        bulk_edge=edge,
        lambda_theta=lam,
        lambda_top=lam_top,
        overlap_sq=ov,
    )
