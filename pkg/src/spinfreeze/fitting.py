"""Least-squares fits of lifetime and pulse-calibration curves.

Two models are supported:

``gaussian_decay``  ``I0 * exp(-t^2 / tau^2) + offset``
``bessel0_sq``      ``amplitude * J0(rate * t)^2 + offset``

Fits use uniform weights and a Levenberg-Marquardt iteration on data
rescaled to unit time and intensity ranges. Uncertainties come from the
linearised covariance ``s^2 (J^T J)^-1``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .protocol import CURVE_HEADER, DecayCurve
from .specfun import FIRST_ZERO_J0, find_first_peak

EXPERIMENTAL_HEADER = ("storage_time_us", "counts_normalized")
MODELS = ("gaussian_decay", "bessel0_sq")


class FitError(ValueError):
    """Input data unsuitable for the requested fit."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, diagnostics):
        super().__init__(f"{message}: {diagnostics}")
        self.diagnostics = diagnostics


@dataclass
class FitResult:
    model: str
    params: dict
    stderr: dict
    window: tuple
    residual_norm: float
    converged: bool
    n_points: int
    iterations: int
    gradient_norm: float
    weighting: str = "uniform"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = [float(w) for w in self.window]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


@dataclass
class CalibrationResult:
    rate: float  # rad per unit time of the input durations
    tau_opt: float
    fit: FitResult = field(repr=False)

    @property
    def rate_stderr(self) -> float:
        return self.fit.stderr["rate"]

    def to_dict(self) -> dict:
        return {"rate": self.rate, "rate_stderr": self.rate_stderr,
                "tau_opt": self.tau_opt, "fit": self.fit.to_dict()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


# -- models -----------------------------------------------------------------

def gaussian_decay(t, p):
    i0, tau, offset = p
    return i0 * np.exp(-(t / tau) ** 2) + offset


def gaussian_decay_jacobian(t, p):
    i0, tau, _ = p
    e = np.exp(-(t / tau) ** 2)
    return np.column_stack([e, i0 * e * 2.0 * t**2 / tau**3, np.ones_like(t)])


def bessel0_sq(t, p):
    c, rate, offset = p
    return c * special.j0(rate * t) ** 2 + offset


def bessel0_sq_jacobian(t, p):
    c, rate, _ = p
    j0 = special.j0(rate * t)
    j1 = special.j1(rate * t)
    return np.column_stack([j0**2, -2.0 * c * j0 * j1 * t, np.ones_like(t)])


# -- optimiser ----------------------------------------------------------------

def levenberg_marquardt(fun, jac, p0, free, *, max_iter=500, gtol=1e-8, xtol=1e-15):
    """Minimise ``0.5 * |fun(p)|^2`` over the entries of ``p`` flagged in ``free``.

    The damping grows tenfold after a rejected step and shrinks tenfold
    after an accepted one. Returns ``(p, info)``; ``info["converged"]`` is set
    only when the scaled gradient norm ends below ``gtol``.
    """
    p = np.array(p0, dtype=float)
    free = np.asarray(free, dtype=bool)
    r = fun(p)
    cost = 0.5 * r @ r
    lam = 1e-3
    n_iter = 0

    # residuals below this norm count as an exact fit (data are scaled to O(1))
    floor = 1e-6 * math.sqrt(r.size)

    def grad_norm(J, r):
        g = J.T @ r
        scale = max(np.linalg.norm(J), 1e-300) * max(np.linalg.norm(r), floor)
        return float(np.max(np.abs(g)) / scale)

    J = jac(p)[:, free]
    for n_iter in range(1, max_iter + 1):
        if grad_norm(J, r) <= gtol:
            break
        A = J.T @ J
        g = J.T @ r
        D = np.diag(np.maximum(np.diag(A), 1e-30))
        stepped = False
        while lam < 1e16:
            try:
                delta = -np.linalg.solve(A + lam * D, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = p.copy()
            trial[free] += delta
            r_trial = fun(trial)
            cost_trial = 0.5 * r_trial @ r_trial
            if np.isfinite(cost_trial) and cost_trial <= cost:
                small = np.linalg.norm(delta) <= xtol * (np.linalg.norm(p[free]) + xtol)
                p, r, cost = trial, r_trial, cost_trial
                lam = max(lam / 10.0, 1e-12)
                stepped = True
                break
            lam *= 10.0
        J = jac(p)[:, free]
        if not stepped or small:
            break
    gn = grad_norm(J, r)
    info = {"converged": gn <= gtol or cost == 0.0, "iterations": n_iter,
            "gradient_norm": gn, "cost": float(cost), "damping": lam}
    return p, info


def _fit(model, t, y, p0, free, names, window):
    f, fj = {"gaussian_decay": (gaussian_decay, gaussian_decay_jacobian),
             "bessel0_sq": (bessel0_sq, bessel0_sq_jacobian)}[model]
    p, info = levenberg_marquardt(lambda q: f(t, q) - y, lambda q: fj(t, q), p0, free)
    if not info["converged"]:
        raise ConvergenceError(f"{model} fit did not converge", info)
    r = f(t, p) - y
    J = fj(t, p)[:, free]
    dof = t.size - int(np.sum(free))
    s2 = (r @ r) / dof if dof > 0 else 0.0
    try:
        cov = s2 * np.linalg.inv(J.T @ J)
        err_free = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError:
        err_free = np.full(int(np.sum(free)), np.nan)
    err = np.zeros_like(p)
    err[free] = err_free
    return FitResult(
        model=model,
        params={n: float(v) for n, v in zip(names, p)},
        stderr={n: float(v) for n, v in zip(names, err)},
        window=window,
        residual_norm=float(np.linalg.norm(r)),
        converged=True,
        n_points=int(t.size),
        iterations=info["iterations"],
        gradient_norm=info["gradient_norm"],
    )


def _select(curve: DecayCurve, window):
    lo, hi = (-math.inf, math.inf) if window is None else window
    t = curve.storage_times
    sel = (t >= lo) & (t <= hi)
    return t[sel], curve.intensities[sel], (float(lo), float(hi))


def fit_gaussian_decay(curve: DecayCurve, window=None, with_offset: bool = False) -> FitResult:
    """Fit ``I0 exp(-t^2/tau^2) (+ offset)`` to the points with ``window[0] <= t <= window[1]``."""
    t, y, window = _select(curve, window)
    n_par = 3 if with_offset else 2
    if t.size < 4 or t.size < n_par + 1:
        raise FitError(f"need at least 4 points in the fit window, got {t.size}")
    t_scale = float(np.max(np.abs(t))) or 1.0
    y_scale = float(np.max(np.abs(y)))
    if y_scale == 0:
        raise FitError("all intensities are zero")
    ts, ys = t / t_scale, y / y_scale

    # seed from a straight-line fit of log(y - offset) against t^2
    off0 = 0.5 * float(np.min(ys)) if with_offset else 0.0
    # points far down the tail only add log-noise to the seed
    pos = ys - off0 > 1e-3 * float(np.max(ys - off0))
    slope = -1.0
    i00 = float(np.max(ys))
    if np.count_nonzero(pos) >= 2 and np.ptp(ts[pos]) > 0:
        slope, icpt = np.polyfit(ts[pos] ** 2, np.log(ys[pos] - off0), 1)
        i00 = float(np.exp(icpt))
    tau0 = 1.0 / math.sqrt(-slope) if slope < 0 else 1.0
    res = _fit("gaussian_decay", ts, ys, [i00, tau0, off0], [True, True, with_offset],
               ("I0", "tau", "offset"), window)
    for name, scale in (("I0", y_scale), ("tau", t_scale), ("offset", y_scale)):
        res.params[name] *= scale
        res.stderr[name] *= scale
    res.params["tau"] = abs(res.params["tau"])
    res.residual_norm *= y_scale
    if res.params["tau"] <= 0:
        raise FitError("fitted lifetime is not positive")
    return res


def fit_bessel0(curve: DecayCurve, with_offset: bool = True) -> CalibrationResult:
    """Fit ``c J0(rate t)^2 (+ offset)`` to intensity versus pulse duration.

    The optimal pulse ``tau_opt = x_peak(J_2) / rate`` puts the
    accumulated phase on the first maximum of J_2.
    """
    t, y = curve.storage_times, curve.intensities
    if t.size < 4:
        raise FitError("need at least 4 calibration points")
    y_scale = float(np.max(np.abs(y)))
    if y_scale == 0 or np.ptp(y) <= 1e-9 * y_scale:
        raise FitError("calibration curve is flat")
    t_scale = float(np.max(t)) or 1.0
    ts, ys = t / t_scale, y / y_scale
    interior = np.flatnonzero((ys[1:-1] < ys[:-2]) & (ys[1:-1] <= ys[2:])) + 1
    if interior.size == 0:
        raise FitError("calibration curve does not reach the first zero of J0")
    first_min = interior[0]
    rate0 = FIRST_ZERO_J0 / ts[first_min]
    off0 = float(ys[first_min]) if with_offset else 0.0
    c0 = float(ys[0]) - off0
    res = _fit("bessel0_sq", ts, ys, [c0, rate0, off0], [True, True, with_offset],
               ("amplitude", "rate", "offset"), (float(t[0]), float(t[-1])))
    res.params["amplitude"] *= y_scale
    res.stderr["amplitude"] *= y_scale
    res.params["offset"] *= y_scale
    res.stderr["offset"] *= y_scale
    res.params["rate"] = abs(res.params["rate"]) / t_scale
    res.stderr["rate"] /= t_scale
    res.residual_norm *= y_scale
    rate = res.params["rate"]
    return CalibrationResult(rate=rate, tau_opt=find_first_peak(2).x_peak / rate, fit=res)


# -- data ingestion ---------------------------------------------------------

def load_experimental_csv(path) -> DecayCurve:
    """Read a decay curve.

    Two layouts are accepted, both with ``#`` comment lines allowed:
    ``storage_time_us,counts_normalized`` (experimental data, times in
    microseconds) and the ``storage_time_s,intensity,label,source`` layout
    written by :meth:`DecayCurve.to_csv`.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FileNotFoundError(f"cannot read {path}: {exc}") from exc
    rows = [(i + 1, line) for i, line in enumerate(text.splitlines())
            if line.strip() and not line.lstrip().startswith("#")]
    if not rows:
        raise FitError(f"{path}: empty file; expected header {','.join(EXPERIMENTAL_HEADER)}")
    header_line, header = rows[0][0], [h.strip() for h in next(csv.reader([rows[0][1]]))]
    if tuple(header) == EXPERIMENTAL_HEADER:
        time_scale, source, label = 1e-6, "experimental", path.stem
    elif tuple(header) == CURVE_HEADER:
        time_scale, source, label = 1.0, None, None
    else:
        raise FitError(
            f"{path}:{header_line}: unrecognised header {header}; expected "
            f"{','.join(EXPERIMENTAL_HEADER)} or {','.join(CURVE_HEADER)}"
        )
    if len(rows) == 1:
        raise FitError(f"{path}: header only, no data rows; columns {','.join(header)}")
    times, values = [], []
    for lineno, line in rows[1:]:
        fields = [f.strip() for f in next(csv.reader([line]))]
        if len(fields) != len(header):
            raise FitError(f"{path}:{lineno}: expected {len(header)} columns, got {len(fields)}")
        try:
            t, y = float(fields[0]), float(fields[1])
        except ValueError:
            raise FitError(f"{path}:{lineno}: non-numeric value in {fields[:2]}") from None
        if not (math.isfinite(t) and math.isfinite(y)):
            raise FitError(f"{path}:{lineno}: non-finite value")
        if y < 0:
            raise FitError(f"{path}:{lineno}: negative intensity {y}")
        t *= time_scale
        if times and t <= times[-1]:
            raise FitError(f"{path}:{lineno}: storage times must be strictly increasing")
        if source is None:
            label, source = fields[2], fields[3]
        times.append(t)
        values.append(y)
    return DecayCurve(np.array(times), np.array(values), label=label, source=source)
