"""Semiclassical fixed points and their linear stability.

The steady states of the Kerr-augmented equations of motion reduce to a
cubic in the real mechanical quadrature p.  Each root yields a fixed point
(x, y, p, q); the 4x4 evolution matrix of small perturbations decides
stability in the Routh-Hurwitz sense (all eigenvalue real parts negative).
Phase maps classify a (detuning, power) grid with continuation along the
power axis to emulate upward/downward sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .model import (
    DeviceParams,
    PumpDrive,
    dbm_to_watt,
    hz_to_angular,
)

STABLE = "stable"
UNSTABLE = "unstable"
MARGINAL = "marginal"
BISTABLE = "bistable"
INDETERMINATE = "indeterminate"

# |max Re lambda| below this fraction of wm counts as marginal
MARGINAL_TOL_WM = 1e-6


class EigenSolveError(RuntimeError):
    """Eigen-solver failed to converge; the cell must be flagged, not guessed."""


@dataclass(frozen=True)
class FixedPoint:
    """Steady state (x, y, p, q) in sqrt(photon)/sqrt(phonon) units."""

    x: float
    y: float
    p: float
    q: float
    residual: float = 0.0

    @property
    def n_photons(self) -> float:
        return self.x * self.x + self.y * self.y

    @property
    def n_phonons(self) -> float:
        return self.p * self.p + self.q * self.q

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.p, self.q])


@dataclass(frozen=True)
class StabilityVerdict:
    eigenvalues: np.ndarray  # rad/s
    max_real: float
    label: str


def eom_coefficients(params: DeviceParams, pump: PumpDrive):
    """Slope B and cubic coefficients (c3, c2, c1, c0) for the p equation.

    B = 2 g0 + (alpha_c/g0)(wm + gm^2/(4 wm)); the cubic is
    c3 p^3 + c2 p^2 + c1 p + c0 = 0 with c0 = -g0 E^2.  Angular units.
    """
    a = params.angular
    if a.g0 == 0.0:
        raise ValueError("eom_coefficients requires g0 > 0; use the Kerr-only branch")
    delta = hz_to_angular(pump.detuning_hz)
    e = pump.drive_amplitude(params)
    wm_eff = a.wm + a.gm**2 / (4.0 * a.wm)
    b_slope = 2.0 * a.g0 + (a.ac / a.g0) * wm_eff
    c3 = b_slope * b_slope * wm_eff
    c2 = 2.0 * b_slope * delta * wm_eff
    c1 = (delta * delta + a.kappa**2 / 4.0) * wm_eff
    c0 = -a.g0 * e * e
    return b_slope, (c3, c2, c1, c0)


def _polish_root(coeffs, r, iters=3):
    c3, c2, c1, c0 = coeffs
    for _ in range(iters):
        f = ((c3 * r + c2) * r + c1) * r + c0
        df = (3.0 * c3 * r + 2.0 * c2) * r + c1
        if df == 0.0:
            break
        step = f / df
        r -= step
        if abs(step) <= 1e-16 * max(1.0, abs(r)):
            break
    return r


def _real_cubic_roots(coeffs) -> List[float]:
    """Real roots of c3 x^3 + ... + c0 via companion eigenvalues + polish."""
    c3, c2, c1, c0 = coeffs
    if c3 == 0.0:
        if c2 == 0.0:
            if c1 == 0.0:
                return [] if c0 != 0.0 else [0.0]
            return [-c0 / c1]
        disc = c1 * c1 - 4.0 * c2 * c0
        if disc < 0.0:
            return []
        s = math.sqrt(disc)
        return sorted([(-c1 - s) / (2.0 * c2), (-c1 + s) / (2.0 * c2)])
    roots = np.roots([c3, c2, c1, c0])
    scale = max(np.max(np.abs(roots)), 1e-300)
    real = [float(r.real) for r in roots if abs(r.imag) <= 1e-9 * scale]
    real = [_polish_root(coeffs, r) for r in real]
    real.sort()
    return real


def _fp_from_p(params: DeviceParams, delta: float, e: float, b_slope: float, p: float):
    a = params.angular
    a_eff = delta + b_slope * p
    denom = a_eff * a_eff + a.kappa**2 / 4.0
    x = 0.5 * a.kappa * e / denom
    y = a_eff * e / denom
    q = a.gm / (2.0 * a.wm) * p
    return x, y, q


def fixed_points(params: DeviceParams, pump: PumpDrive) -> List[FixedPoint]:
    """All semiclassical fixed points, sorted by p ascending (1 to 3)."""
    a = params.angular
    delta = hz_to_angular(pump.detuning_hz)
    e = pump.drive_amplitude(params)
    if e == 0.0:
        return [FixedPoint(0.0, 0.0, 0.0, 0.0, 0.0)]
    if a.g0 > 0.0:
        b_slope, coeffs = eom_coefficients(params, pump)
        points = []
        for p in _real_cubic_roots(coeffs):
            x, y, q = _fp_from_p(params, delta, e, b_slope, p)
            fp = FixedPoint(x, y, p, q)
            points.append(
                FixedPoint(x, y, p, q, residual=_residual_norm(fp, params, pump))
            )
        return points
    # Kerr-only degenerate branch: g0 = 0, cubic in n = |alpha|^2
    points = []
    if a.ac == 0.0:
        n = e * e / (delta * delta + a.kappa**2 / 4.0)
        roots = [n]
    else:
        roots = [
            r
            for r in _real_cubic_roots(
                (a.ac**2, 2.0 * delta * a.ac, delta * delta + a.kappa**2 / 4.0, -e * e)
            )
            if r >= 0.0
        ]
    for n in roots:
        a_eff = delta + a.ac * n
        denom = a_eff * a_eff + a.kappa**2 / 4.0
        fp = FixedPoint(0.5 * a.kappa * e / denom, a_eff * e / denom, 0.0, 0.0)
        points.append(
            FixedPoint(fp.x, fp.y, 0.0, 0.0, residual=_residual_norm(fp, params, pump))
        )
    points.sort(key=lambda f: f.n_photons)
    return points


def _rhs(params: DeviceParams, pump: PumpDrive, x, y, p, q):
    """f1..f4 of the equations of motion, angular units."""
    a = params.angular
    delta = hz_to_angular(pump.detuning_hz)
    e = pump.drive_amplitude(params)
    n = x * x + y * y
    f1 = -0.5 * a.kappa * x - delta * y - 2.0 * a.g0 * p * y - a.ac * y * n + e
    f2 = delta * x - 0.5 * a.kappa * y + 2.0 * a.g0 * p * x + a.ac * x * n
    f3 = -0.5 * a.gm * p + a.wm * q
    f4 = a.g0 * n - a.wm * p - 0.5 * a.gm * q
    return f1, f2, f3, f4


def _residual_norm(fp: FixedPoint, params: DeviceParams, pump: PumpDrive) -> float:
    """Norm of f1..f4 at the point, relative to the dominant rate scale."""
    a = params.angular
    f = _rhs(params, pump, fp.x, fp.y, fp.p, fp.q)
    delta = hz_to_angular(pump.detuning_hz)
    scale = max(a.kappa, a.wm, abs(delta)) * max(
        1.0, math.sqrt(fp.n_photons + fp.n_phonons)
    )
    scale = max(scale, pump.drive_amplitude(params), 1e-300)
    return math.sqrt(sum(v * v for v in f)) / scale


def jacobian(fp: FixedPoint, params: DeviceParams, pump: PumpDrive) -> np.ndarray:
    """Evolution matrix S of small perturbations around the fixed point."""
    a = params.angular
    delta = hz_to_angular(pump.detuning_hz)
    x, y, p = fp.x, fp.y, fp.p
    ac, g0 = a.ac, a.g0
    return np.array(
        [
            [
                -0.5 * a.kappa - 2.0 * ac * x * y,
                -delta - 2.0 * g0 * p - ac * x * x - 3.0 * ac * y * y,
                -2.0 * g0 * y,
                0.0,
            ],
            [
                delta + 2.0 * g0 * p + 3.0 * ac * x * x + ac * y * y,
                -0.5 * a.kappa + 2.0 * ac * x * y,
                2.0 * g0 * x,
                0.0,
            ],
            [0.0, 0.0, -0.5 * a.gm, a.wm],
            [2.0 * g0 * x, 2.0 * g0 * y, -a.wm, -0.5 * a.gm],
        ]
    )


def verdict(fp: FixedPoint, params: DeviceParams, pump: PumpDrive) -> StabilityVerdict:
    """Eigenvalues of S and the stable/unstable/marginal label."""
    s = jacobian(fp, params, pump)
    try:
        lam = np.linalg.eigvals(s)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK hiccup
        raise EigenSolveError(str(exc)) from exc
    max_real = float(np.max(lam.real))
    tol = MARGINAL_TOL_WM * params.angular.wm
    if abs(max_real) <= tol:
        label = MARGINAL
    elif max_real < 0.0:
        label = STABLE
    else:
        label = UNSTABLE
    return StabilityVerdict(eigenvalues=lam, max_real=max_real, label=label)


def occupied_branch_index(points: Sequence[FixedPoint], sweep: str) -> int:
    """Branch occupied without continuation history: low-|alpha|^2 sweeping
    up, high-|alpha|^2 sweeping down."""
    photons = [fp.n_photons for fp in points]
    if sweep == "down":
        return int(np.argmax(photons))
    return int(np.argmin(photons))


def _continue_branch(points: Sequence[FixedPoint], p_prev: Optional[float], sweep: str) -> int:
    if p_prev is None:
        return occupied_branch_index(points, "up")
    return int(np.argmin([abs(fp.p - p_prev) for fp in points]))


@dataclass
class CellResult:
    cell_class: str
    branches: List[FixedPoint]
    verdicts: List[StabilityVerdict]
    occupied: int

    @property
    def max_re_lambda(self) -> float:
        return self.verdicts[self.occupied].max_real


def classify_point(
    detuning_hz: float,
    power_w: float,
    params: DeviceParams,
    sweep: str = "up",
    _p_prev: Optional[float] = None,
) -> CellResult:
    """Classify one (detuning, power) cell from the verdicts of all branches.

    unstable: no branch is stable; bistable: two or more stable branches;
    stable otherwise.  Marginal branches count as not-stable.
    """
    pump = PumpDrive(detuning_hz=detuning_hz, power_w=power_w, sweep=sweep)
    points = fixed_points(params, pump)
    verdicts = [verdict(fp, params, pump) for fp in points]
    n_stable = sum(1 for v in verdicts if v.label == STABLE)
    if n_stable == 0:
        cls = UNSTABLE
    elif n_stable >= 2:
        cls = BISTABLE
    else:
        cls = STABLE
    occupied = _continue_branch(points, _p_prev, sweep)
    return CellResult(cls, points, verdicts, occupied)


@dataclass(frozen=True)
class GridSpec:
    """Rectangular (detuning, power) grid; defaults follow the measured
    resolution of 300 kHz and 0.1 dBm."""

    detuning_start_hz: float
    detuning_stop_hz: float
    power_start_dbm: float
    power_stop_dbm: float
    detuning_step_hz: float = 300e3
    power_step_dbm: float = 0.1

    def detunings(self) -> np.ndarray:
        n = int(round((self.detuning_stop_hz - self.detuning_start_hz) / self.detuning_step_hz)) + 1
        return self.detuning_start_hz + self.detuning_step_hz * np.arange(max(n, 1))

    def powers_dbm(self) -> np.ndarray:
        n = int(round((self.power_stop_dbm - self.power_start_dbm) / self.power_step_dbm)) + 1
        return self.power_start_dbm + self.power_step_dbm * np.arange(max(n, 1))


@dataclass
class PhaseMap:
    detunings_hz: np.ndarray
    powers_dbm: np.ndarray
    classes: np.ndarray  # (n_det, n_pow) of str
    max_re_lambda: np.ndarray
    n_branches: np.ndarray
    occupied_branch: np.ndarray
    sweep: str


def classify_column(
    params: DeviceParams,
    detuning_hz: float,
    powers_dbm: np.ndarray,
    sweep: str = "up",
) -> List[CellResult]:
    """Classify one detuning column, threading branch continuation in the
    sweep order; results are returned in ascending-power order."""
    order = range(len(powers_dbm)) if sweep == "up" else range(len(powers_dbm) - 1, -1, -1)
    results: List[Optional[CellResult]] = [None] * len(powers_dbm)
    p_prev: Optional[float] = None
    for i in order:
        res = classify_point(
            detuning_hz, dbm_to_watt(powers_dbm[i]), params, sweep, _p_prev=p_prev
        )
        p_prev = res.branches[res.occupied].p
        results[i] = res
    return results  # type: ignore[return-value]


def scan_phase_map(
    grid: GridSpec, params: DeviceParams, sweep: str = "up"
) -> PhaseMap:
    """Fully classified phase map over the grid (sequential over columns)."""
    dets = grid.detunings()
    pows = grid.powers_dbm()
    classes = np.empty((len(dets), len(pows)), dtype=object)
    maxre = np.empty((len(dets), len(pows)))
    nbr = np.empty((len(dets), len(pows)), dtype=int)
    occ = np.empty((len(dets), len(pows)), dtype=int)
    for i, det in enumerate(dets):
        col = classify_column(params, det, pows, sweep)
        for j, res in enumerate(col):
            classes[i, j] = res.cell_class
            maxre[i, j] = res.max_re_lambda
            nbr[i, j] = len(res.branches)
            occ[i, j] = res.occupied
    return PhaseMap(dets, pows, classes, maxre, nbr, occ, sweep)


def boundary_curve(pmap: PhaseMap) -> Tuple[np.ndarray, np.ndarray]:
    """Lowest unstable power per detuning column (NaN where none)."""
    thresholds = np.full(len(pmap.detunings_hz), np.nan)
    for i in range(len(pmap.detunings_hz)):
        unstable = np.nonzero(pmap.classes[i, :] == UNSTABLE)[0]
        if unstable.size:
            thresholds[i] = pmap.powers_dbm[unstable[0]]
    return pmap.detunings_hz.copy(), thresholds
