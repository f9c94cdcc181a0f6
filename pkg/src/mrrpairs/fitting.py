"""Weighted least-squares fits for the analysis models.

All nonlinear models go through one small Levenberg-Marquardt style damped
Gauss-Newton core with analytic Jacobians.  Convergence is declared when the
relative parameter change drops below 1e-9 (or after 200 iterations).
Weights are treated as absolute (Poisson: 1/max(count, 1)), so parameter
standard errors come unscaled from the inverse normal matrix and the reduced
chi-square is reported as a goodness-of-fit figure.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .correlate import Histogram
from .errors import FitError, StatisticsError

_RTOL = 1e-9
_MAX_ITER = 200


@dataclass
class FitResult:
    parameters: dict
    standard_errors: dict
    reduced_chi_square: float
    covariance: np.ndarray = None
    param_names: tuple = ()
    flags: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return self.parameters[name]

    def error(self, name: str) -> float:
        return self.standard_errors[name]


def _lm(model_jac, x, y, w, p0):
    """Damped Gauss-Newton on sum w*(y - model)^2; returns (p, cov, redchi)."""
    p = np.asarray(p0, dtype=np.float64).copy()
    sw = np.sqrt(np.asarray(w, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)

    def evaluate(params):
        m, jac = model_jac(x, params)
        r = sw * (y - m)
        return r, sw[:, None] * jac

    r, jw = evaluate(p)
    cost = float(r @ r)
    lam = 1e-3
    a = jw.T @ jw
    for _ in range(_MAX_ITER):
        g = jw.T @ r
        step = None
        for _ in range(60):
            damped = a + lam * np.diag(np.maximum(np.diag(a), 1e-30))
            try:
                trial = np.linalg.solve(damped, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            r_new, jw_new = evaluate(p + trial)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                step = trial
                p = p + trial
                r, jw, cost = r_new, jw_new, cost_new
                a = jw.T @ jw
                lam = max(lam / 3.0, 1e-12)
                break
            lam *= 10.0
        if step is None:
            break
        if np.max(np.abs(step) / np.maximum(np.abs(p), 1e-12)) < _RTOL:
            break
    try:
        cov = np.linalg.inv(a)
    except np.linalg.LinAlgError:
        raise FitError("singular normal matrix at the fit solution")
    dof = max(y.size - p.size, 1)
    return p, cov, cost / dof


def _result(names, p, cov, redchi, **flags) -> FitResult:
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return FitResult(
        parameters={n: float(v) for n, v in zip(names, p)},
        standard_errors={n: float(s) for n, s in zip(names, se)},
        reduced_chi_square=float(redchi),
        covariance=cov,
        param_names=tuple(names),
        flags=dict(flags),
    )


def fit_power_law(points, weights: str = "poisson", acquisition_s: float = 1.0) -> FitResult:
    """Weighted LS fit of rate = a*P + b*P^2 through the origin, a, b >= 0.

    ``points`` is a sequence of (power_mw, rate_per_s).  Poisson weighting
    takes var(rate) = rate / acquisition_s per point; a negative coefficient
    is clipped to zero and the other refit (flagged in the result).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise FitError("fit_power_law needs at least 3 (power, rate) points")
    power, rate = pts[:, 0], pts[:, 1]
    if np.any(power <= 0):
        raise FitError("powers must be > 0")
    if np.unique(power).size < 2:
        raise FitError("rank-deficient design: all powers equal")
    if weights == "poisson":
        w = acquisition_s / np.maximum(rate, 1.0 / acquisition_s)
    elif weights == "uniform":
        w = np.ones_like(rate)
    else:
        raise FitError(f"unknown weighting '{weights}'")

    design = np.column_stack([power, power * power])

    def solve(cols):
        dm = design[:, cols]
        a = (dm * w[:, None]).T @ dm
        g = (dm * w[:, None]).T @ rate
        coef = np.linalg.solve(a, g)
        return coef, np.linalg.inv(a)

    coef, cov2 = solve([0, 1])
    clipped = None
    if coef[0] < 0 or coef[1] < 0:
        drop = 0 if coef[0] < 0 else 1
        keepcol = 1 - drop
        c1, cv1 = solve([keepcol])
        coef = np.zeros(2)
        coef[keepcol] = max(c1[0], 0.0)
        cov2 = np.zeros((2, 2))
        cov2[keepcol, keepcol] = cv1[0, 0]
        clipped = ("a", "b")[drop]

    model = design @ coef
    dof = max(rate.size - (1 if clipped else 2), 1)
    redchi = float(np.sum(w * (rate - model) ** 2) / dof)
    result = _result(("a", "b"), coef, cov2, redchi)
    if clipped:
        result.flags["clipped"] = clipped
    return result


def _g2_model(shape: str):
    if shape == "double_exponential":

        def model_jac(x, p):
            base, g2, width, center = p
            # The model is even in width; evaluate at |width| so trial steps
            # through zero stay finite.
            w = max(abs(width), 1e-9)
            sgn_w = 1.0 if width >= 0 else -1.0
            u = np.abs(x - center) / w
            s = np.exp(-u)
            m = base * (1.0 + (g2 - 1.0) * s)
            jac = np.empty((x.size, 4))
            jac[:, 0] = 1.0 + (g2 - 1.0) * s
            jac[:, 1] = base * s
            jac[:, 2] = base * (g2 - 1.0) * s * u / w * sgn_w
            jac[:, 3] = base * (g2 - 1.0) * s * np.sign(x - center) / w
            return m, jac

    elif shape == "lorentzian":

        def model_jac(x, p):
            base, g2, width, center = p
            t = (x - center) / width
            s = 1.0 / (1.0 + t * t)
            m = base * (1.0 + (g2 - 1.0) * s)
            jac = np.empty((x.size, 4))
            jac[:, 0] = 1.0 + (g2 - 1.0) * s
            jac[:, 1] = base * s
            jac[:, 2] = base * (g2 - 1.0) * s * s * 2.0 * t * t / width
            jac[:, 3] = base * (g2 - 1.0) * s * s * 2.0 * t / width
            return m, jac

    else:
        raise FitError(f"unknown g2 peak shape '{shape}'")
    return model_jac


def fit_g2(hist: Histogram, shape: str = "double_exponential") -> FitResult:
    """Fit baseline * (1 + (g2_zero - 1) * peak_shape) to a correlation histogram.

    ``g2_zero`` is the zero-delay to background ratio; the effective mode
    (Schmidt) number ``1 / (g2_zero - 1)`` is attached with propagated error,
    or flagged unbounded when the fitted peak is absent (g2_zero <= 1).
    ``width`` is the decay constant (double_exponential) or the half width
    (lorentzian).
    """
    x = hist.bin_centers_ps
    y = hist.counts.astype(np.float64)
    if not np.any(y > 0):
        raise StatisticsError("histogram has no counts; cannot fit a baseline")
    w = 1.0 / np.maximum(y, 1.0)

    base0 = float(np.median(y))
    if base0 <= 0:
        base0 = max(float(y.mean()), 1e-3)
    i_peak = int(np.argmax(y))
    center0 = float(x[i_peak])
    g20 = max(float(y[i_peak]) / base0, 1.05)
    above = y > base0 + 0.5 * (y[i_peak] - base0)
    width0 = max(float(above.sum()) * hist.bin_width_ps / 2.0, hist.bin_width_ps * 1.0)

    p, cov, redchi = _lm(_g2_model(shape), x, y, w, [base0, g20, width0, center0])
    p[2] = abs(p[2])
    result = _result(("baseline", "g2_zero", "width_ps", "center_ps"), p, cov, redchi, shape=shape)

    g2v = result["g2_zero"]
    g2e = result.error("g2_zero")
    if g2v <= 1.0:
        result.flags["schmidt_unbounded"] = True
        result.parameters["schmidt_number"] = math.inf
        result.standard_errors["schmidt_number"] = math.inf
    else:
        result.parameters["schmidt_number"] = 1.0 / (g2v - 1.0)
        result.standard_errors["schmidt_number"] = g2e / (g2v - 1.0) ** 2
    return result


def _visibility_initial_k(x, y, k_candidates):
    """Best angular frequency on a grid by linear LS in a cos/sin/const basis."""
    best_k, best_cost = k_candidates[0], math.inf
    for k in k_candidates:
        basis = np.column_stack([np.ones_like(x), np.cos(k * x), np.sin(k * x)])
        coef, res, rank, _ = np.linalg.lstsq(basis, y, rcond=None)
        cost = float(res[0]) if res.size else float(np.sum((y - basis @ coef) ** 2))
        if rank == 3 and cost < best_cost:
            best_k, best_cost = k, cost
    return best_k


def fit_visibility(points, accidental_level: float = 0.0, period: float = None) -> FitResult:
    """Fit C(x) = C0 * (1 + V cos(k x + x0)) to an interference sweep.

    ``points`` is a sequence of (control, counts); the control may be a phase
    in radians (pass ``period=2*pi`` to fix the period) or an uncalibrated
    piezo voltage (period fitted).  ``raw_visibility`` is the fitted V;
    ``net_visibility`` subtracts the supplied accidental level from both fringe
    extrema: net = C0 V / (C0 - accidental_level).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 5:
        raise FitError("fit_visibility needs at least 5 (control, counts) points")
    x, y = pts[:, 0], pts[:, 1]
    span = float(np.ptp(x))
    if span <= 0:
        raise FitError("non-identifiable sweep: all control values equal")

    if period is not None:
        if period <= 0:
            raise FitError("period must be > 0")
        if span < 0.8 * period:
            raise FitError("sweep must span at least one period")
        k0 = 2.0 * math.pi / period
        k_grid = [k0]
    else:
        k_grid = 2.0 * math.pi * np.linspace(0.6, 12.0, 400) / span
    k0 = _visibility_initial_k(x, y, k_grid)

    basis = np.column_stack([np.ones_like(x), np.cos(k0 * x), np.sin(k0 * x)])
    c, _, _, _ = np.linalg.lstsq(basis, y, rcond=None)
    c0_0 = max(float(c[0]), 1e-9)
    v0 = min(max(math.hypot(c[1], c[2]) / c0_0, 1e-3), 0.999)
    x0_0 = math.atan2(-c[2], c[1])

    w = 1.0 / np.maximum(y, 1.0)

    def model_jac(xv, p):
        c0, v, k, x0 = p
        phase = k * xv + x0
        cosp = np.cos(phase)
        sinp = np.sin(phase)
        m = c0 * (1.0 + v * cosp)
        jac = np.empty((xv.size, 4))
        jac[:, 0] = 1.0 + v * cosp
        jac[:, 1] = c0 * cosp
        jac[:, 2] = -c0 * v * sinp * xv
        jac[:, 3] = -c0 * v * sinp
        return m, jac

    if period is not None:
        # Keep k fixed by pinning its column: fit the 3 free parameters.
        def model_jac_fixed(xv, p):
            m, jac = model_jac(xv, np.array([p[0], p[1], k0, p[2]]))
            return m, jac[:, [0, 1, 3]]

        p, cov3, redchi = _lm(model_jac_fixed, x, y, w, [c0_0, v0, x0_0])
        p = np.array([p[0], p[1], k0, p[2]])
        cov = np.zeros((4, 4))
        cov[np.ix_([0, 1, 3], [0, 1, 3])] = cov3
    else:
        p, cov, redchi = _lm(model_jac, x, y, w, [c0_0, v0, k0, x0_0])

    c0, v, k, x0 = p
    if v < 0:  # canonical form: positive visibility
        v = -v
        x0 += math.pi
    if k < 0:
        k = -k
        x0 = -x0
    x0 = math.remainder(x0, 2.0 * math.pi)
    p = np.array([c0, v, k, x0])

    if c0 <= accidental_level:
        raise StatisticsError("accidental level exceeds the fitted mean; cannot net-correct")
    net = c0 * v / (c0 - accidental_level)
    # Linear error propagation from (c0, v).
    dc0 = -v * accidental_level / (c0 - accidental_level) ** 2
    dv = c0 / (c0 - accidental_level)
    var_net = (
        dc0 * dc0 * cov[0, 0] + dv * dv * cov[1, 1] + 2.0 * dc0 * dv * cov[0, 1]
    )

    result = _result(("c0", "raw_visibility", "angular_frequency", "phase_offset"), p, cov, redchi)
    result.parameters["period"] = 2.0 * math.pi / k
    result.standard_errors["period"] = (
        2.0 * math.pi / (k * k) * result.standard_errors["angular_frequency"]
    )
    result.parameters["net_visibility"] = float(net)
    result.standard_errors["net_visibility"] = float(math.sqrt(max(var_net, 0.0)))
    result.flags["accidental_level"] = accidental_level
    return result
