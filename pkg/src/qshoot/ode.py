"""Event-detecting integration of the radial problem in flux form.

Two marchings of the same equation:

  t-route   y' = psi^{1/(n-1)}, psi' = -f(y) e^{-t}, integrated backwards in
            the log-radius variable t from a tail start down to the first
            zero of y. The flux psi = (y')^{n-1} is the state variable, which
            removes the |y'|^{n-2} degeneracy.

  r-route   w' from Phi = r^{n-1}|w'|^{n-2} w', Phi' = -f(w) r^{n-1-beta},
            marched outward from a series startup at r0. beta > 0 covers the
            singular-weight problem directly.

Both attach an optional linearization channel (the derivative of the flow
with respect to gamma); see the linearization module for its use.

Tolerance policy: scalar absolute tolerance on the solution value, but a
purely relative control on the flux. The flux spans many orders of magnitude
along the tail and an absolute floor there shows up as spurious wiggle in
the energy monitor at the 1e-8 level; relative control keeps the energy
monotone to better than 1e-11 of its natural scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from .asymptotics import snapshot
from .config import ProblemConfig
from .errors import (AdmissionError, ConfigError, EventNotFoundError,
                     SolverError)
from .nonlinearity import (Nonlinearity, convexity_floor, eval_fprime_source,
                           eval_g, eval_source, g_is_linear, log_f)
from ._stable import sigma, softplus

# pure relative control on the flux component (see module docstring)
_PSI_ATOL = 1e-300


# finite overflow sentinel: large enough to force a step rejection, small
# enough that the stepper's error arithmetic stays NaN-free
_SOURCE_CAP = 1e250


def _source_soft(nl, y, t):
    """Source term for integrator right-hand sides: an overflowing trial
    step reports a huge value so the stepper rejects and shrinks it."""
    try:
        return min(eval_source(nl, y, t), _SOURCE_CAP)
    except OverflowError:
        return _SOURCE_CAP


def _fprime_soft(nl, y, t):
    try:
        v = eval_fprime_source(nl, y, t)
    except OverflowError:
        return _SOURCE_CAP
    return min(max(v, -_SOURCE_CAP), _SOURCE_CAP)


def _clamp(v: float) -> float:
    if v > _SOURCE_CAP:
        return _SOURCE_CAP
    if v < -_SOURCE_CAP:
        return -_SOURCE_CAP
    return v


@dataclass(frozen=True)
class StateT:
    t: float
    y: float
    psi: float


# y' depends on n, so it cannot live on the state itself
def yprime_from_psi(psi: float, n: int) -> float:
    return psi ** (1.0 / (n - 1.0)) if psi > 0.0 else 0.0


@dataclass(frozen=True)
class StateR:
    r: float
    w: float
    Phi: float


def wprime_from_Phi(Phi: float, r: float, n: int) -> float:
    if r <= 0.0 or Phi == 0.0:
        return 0.0
    mag = (abs(Phi) / r ** (n - 1.0)) ** (1.0 / (n - 1.0))
    return math.copysign(mag, Phi)


@dataclass(frozen=True)
class StopRule:
    kind: str
    value: Optional[float] = None
    floor: Optional[float] = None


def first_zero_of_y(floor: float | None = None) -> StopRule:
    return StopRule(kind="first_zero", floor=floor)


def t_floor(value: float) -> StopRule:
    return StopRule(kind="t_floor", value=float(value))


def y_reaches(value: float, floor: float | None = None) -> StopRule:
    return StopRule(kind="y_reaches", value=float(value), floor=floor)


@dataclass
class Trajectory:
    """Accepted samples of one integration plus its dense interpolant.

    For kind "t" the state columns are (y, psi) and, with the linearization
    channel, (y, psi, V1, phi). For kind "r" they are (w, Phi) or
    (w, Phi, W, chi). `ts` holds the abscissae in integration order:
    decreasing for the t-route, increasing for the r-route.
    """

    kind: str
    gamma: float
    n: int
    nl: Nonlinearity
    cfg: ProblemConfig
    ts: np.ndarray
    states: np.ndarray
    dense: Optional[Callable]
    lin: bool = False
    events: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def span(self) -> tuple:
        return float(np.min(self.ts)), float(np.max(self.ts))

    def state_at(self, x: float) -> np.ndarray:
        if self.dense is None:
            raise SolverError("trajectory has no dense output")
        lo, hi = self.span()
        return np.asarray(self.dense(min(max(x, lo), hi)), dtype=float)

    def yprime_at(self, t: float) -> float:
        s = self.state_at(t)
        if self.kind == "t":
            return yprime_from_psi(float(s[1]), self.n)
        return wprime_from_Phi(float(s[1]), t, self.n)

    def t_bounds(self) -> tuple:
        """Covered t-interval regardless of the marching variable."""
        lo, hi = self.span()
        if self.kind == "t":
            return lo, hi
        n = self.n
        return -n * math.log(hi / n), -n * math.log(lo / n)

    def yprime_t(self, t: float) -> float:
        """dy/dt at t; for r-kind data this is -(r/n) dw/dr at r = n e^{-t/n}."""
        if self.kind == "t":
            return self.yprime_at(t)
        n = self.n
        lo, hi = self.span()
        r = min(max(n * math.exp(-t / n), lo), hi)
        return -(r / n) * self.yprime_at(r)

    def samples(self):
        if self.kind == "t":
            return [StateT(float(t), float(row[0]), float(row[1]))
                    for t, row in zip(self.ts, self.states)]
        return [StateR(float(r), float(row[0]), float(row[1]))
                for r, row in zip(self.ts, self.states)]


def _tail_site(nl: Nonlinearity, n: int, gamma: float, c_tail: float):
    """Start abscissa and closed-form (z, z') there; AdmissionError when the
    tail expansion does not apply at this gamma."""
    if nl.linear:
        raise AdmissionError("tail expansion needs the exponential form")
    s0w = convexity_floor(nl)
    if not math.isfinite(s0w):
        raise AdmissionError("no convexity floor; tail expansion inapplicable")
    if gamma <= s0w:
        raise AdmissionError(f"gamma={gamma} below the convexity floor {s0w:.3g}")
    s = snapshot(nl, n, gamma)
    exact = g_is_linear(nl)
    if exact:
        # comparison solution solves the full equation; any start works,
        # push it above T1 only as far as g' > 1 allows
        t_start = s.T1 + c_tail * (n - 1.0) * max(math.log(s.gp), 0.0)
    else:
        if s.gp <= 1.0:
            raise AdmissionError(
                f"tail start needs g'(gamma) > 1, got {s.gp:.3g}")
        if c_tail * math.log(s.gp) < 3.0:
            raise AdmissionError(
                "tail remainder too large: c_tail * log g' < 3")
        t_start = s.T1 + c_tail * (n - 1.0) * math.log(s.gp)
    x = (s.T1 - t_start) / (n - 1.0)
    z0 = gamma - (n / s.gp) * float(softplus(x))
    zp0 = s.c * float(sigma(x))
    if z0 <= max(s0w, 0.25 * gamma):
        raise AdmissionError(
            f"tail value z(t_start)={z0:.3g} too far below gamma={gamma}")
    return t_start, z0, zp0, s


def tail_start(nl: Nonlinearity, n: int, gamma: float,
               c_tail: float | None = None, cfg: ProblemConfig | None = None
               ) -> StateT:
    """Initial state for the backward t-route march, read off the comparison
    solution at t_start = T1 + c_tail (n-1) log g'."""
    if cfg is None:
        cfg = ProblemConfig(n=n)
    if c_tail is None:
        c_tail = cfg.c_tail
    t_start, z0, zp0, _ = _tail_site(nl, n, gamma, c_tail)
    return StateT(t=t_start, y=z0, psi=zp0 ** (n - 1.0))


def tail_admissible(nl: Nonlinearity, n: int, gamma: float,
                    cfg: ProblemConfig) -> bool:
    try:
        _tail_site(nl, n, gamma, cfg.c_tail)
        return True
    except (AdmissionError, ConfigError):
        return False


def tail_refinement_delta(nl: Nonlinearity, n: int, gamma: float,
                          c_tail: float | None = None,
                          cfg: ProblemConfig | None = None) -> dict:
    """One Picard pass of the integral equation over the tail window,
    reported as a diagnostic of the start-state error.

    psi_1(t) = int_t^inf f(z) e^{-s} ds,  y_1 = gamma - int psi_1^{1/(n-1)}.
    The window is [t_start, t_start + 40(n-1)]; the remainder beyond it is
    taken from the closed forms.
    """
    if cfg is None:
        cfg = ProblemConfig(n=n)
    if c_tail is None:
        c_tail = cfg.c_tail
    t0, z0, zp0, s = _tail_site(nl, n, gamma, c_tail)
    hi = t0 + 40.0 * (n - 1.0)

    def zfun(t):
        x = (s.T1 - t) / (n - 1.0)
        return gamma - (n / s.gp) * float(softplus(x))

    def psi1(t):
        val, _ = quad(lambda u: eval_source(nl, zfun(u), u), t, hi, limit=200)
        return val + math.exp(s.g - hi)  # source ~ f(gamma) e^{-s} past the window

    y_int, _ = quad(lambda u: psi1(u) ** (1.0 / (n - 1.0)), t0, hi, limit=100)
    y_rem = (n / s.gp) * float(softplus((s.T1 - hi) / (n - 1.0)))
    y1 = gamma - y_int - y_rem
    return {
        "delta_y": abs(y1 - z0),
        "delta_psi": abs(psi1(t0) - zp0 ** (n - 1.0)),
        "t_start": t0,
        "window": 40.0 * (n - 1.0),
    }


def _refine_event(fun, t_guess: float, t_lo: float, t_hi: float,
                  event_tol: float) -> float:
    """Polish an event abscissa on the dense output down to event_tol."""
    h = max(10.0 * event_tol, 1e-9 * max(1.0, abs(t_guess)))
    for _ in range(40):
        a = max(min(t_lo, t_hi), t_guess - h)
        b = min(max(t_lo, t_hi), t_guess + h)
        fa, fb = fun(a), fun(b)
        if fa == 0.0:
            return a
        if fb == 0.0:
            return b
        if fa * fb < 0.0:
            return float(brentq(fun, a, b, xtol=event_tol * 0.5))
        h *= 4.0
        if a == min(t_lo, t_hi) and b == max(t_lo, t_hi):
            break
    return t_guess


def _run_ivp(rhs, span, y0, events, cfg, atol_vec):
    try:
        sol = solve_ivp(rhs, span, y0, method="RK45", rtol=cfg.rtol,
                        atol=atol_vec, dense_output=True, events=events)
    except OverflowError as exc:
        raise SolverError(f"source overflow during integration: {exc}") from exc
    return sol


def integrate_t(nl: Nonlinearity, n: int, start: StateT, stop: StopRule,
                cfg: ProblemConfig | None = None, *, lin: bool = False,
                lin_init: tuple = (1.0, 0.0), track_s0: float | None = None,
                gamma: float = math.nan) -> Trajectory:
    """March the flux system backwards in t from `start` until `stop`."""
    if cfg is None:
        cfg = ProblemConfig(n=n)
    ex = 1.0 / (n - 1.0)
    exd = (n - 2.0) / (n - 1.0)

    if lin:
        def rhs(t, u):
            y, psi, v1, phi = (float(v) for v in u)
            yp = psi ** ex if psi > 0.0 else 0.0
            dv1 = phi if n == 2 else _clamp(phi / max(psi, _PSI_ATOL) ** exd)
            dphi = _clamp(-_fprime_soft(nl, y, t) * v1 / (n - 1.0))
            return (min(yp, _SOURCE_CAP), -_source_soft(nl, y, t), dv1, dphi)
        y0 = [start.y, start.psi, lin_init[0], lin_init[1]]
        atol_vec = [cfg.atol, _PSI_ATOL, cfg.atol, cfg.atol]
    else:
        def rhs(t, u):
            y, psi = float(u[0]), float(u[1])
            yp = psi ** ex if psi > 0.0 else 0.0
            return (min(yp, _SOURCE_CAP), -_source_soft(nl, y, t))
        y0 = [start.y, start.psi]
        atol_vec = [cfg.atol, _PSI_ATOL]

    if stop.kind == "t_floor":
        floor = stop.value
    else:
        floor = stop.floor if stop.floor is not None else \
            start.t - max(1000.0, 4.0 * abs(start.t) + 400.0 * (n - 1.0))
    if floor >= start.t:
        raise ConfigError(f"stop floor {floor} not below start {start.t}")

    events = []
    target = None
    if stop.kind == "first_zero":
        target = 0.0
    elif stop.kind == "y_reaches":
        target = stop.value
    if target is not None:
        def ev_stop(t, u, v=target):
            return u[0] - v
        ev_stop.terminal = True
        events.append(ev_stop)
    if track_s0 is not None and track_s0 > 0.0 and math.isfinite(track_s0):
        def ev_s0(t, u, v=track_s0):
            return u[0] - v
        ev_s0.terminal = False
        events.append(ev_s0)

    sol = _run_ivp(rhs, (start.t, floor), y0, events, cfg, atol_vec)
    if sol.status == -1:
        last = StateT(float(sol.t[-1]), float(sol.y[0, -1]), float(sol.y[1, -1]))
        raise SolverError(f"integrator failed: {sol.message}", last_state=last)

    evs: dict = {}
    diag = {"nfev": int(sol.nfev), "steps": int(len(sol.t)) - 1,
            "route": "t", "status": int(sol.status)}
    if target is not None:
        if sol.status != 1 or len(sol.t_events[0]) == 0:
            last = StateT(float(sol.t[-1]), float(sol.y[0, -1]),
                          float(sol.y[1, -1]))
            raise EventNotFoundError(
                f"no crossing of y={target} above the floor t={floor}",
                last_state=last)
        te = float(sol.t_events[0][0])
        te = _refine_event(lambda t: float(sol.sol(t)[0]) - target,
                           te, start.t, float(sol.t[-1]), cfg.event_tol)
        evs["stop_t"] = te
        evs["stop_residual"] = float(sol.sol(te)[0]) - target
    if track_s0 is not None and len(events) > 1 and len(sol.t_events[-1]):
        ts0 = float(sol.t_events[-1][0])
        evs["s0_t"] = _refine_event(lambda t: float(sol.sol(t)[0]) - track_s0,
                                    ts0, start.t, float(sol.t[-1]),
                                    cfg.event_tol)
    return Trajectory(kind="t", gamma=gamma, n=n, nl=nl, cfg=cfg,
                      ts=sol.t.copy(), states=sol.y.T.copy(), dense=sol.sol,
                      lin=lin, events=evs, diagnostics=diag)


def series_startup_radius(nl: Nonlinearity, n: int, gamma: float,
                          cfg: ProblemConfig) -> float:
    fg = _f_at(nl, gamma, cfg)
    return min(1e-3, (cfg.rtol * n / fg) ** ((n - 1.0) / n))


def _f_at(nl: Nonlinearity, gamma: float, cfg: ProblemConfig) -> float:
    lf = log_f(nl, gamma)
    if lf > cfg.exponent_cap:
        raise AdmissionError(
            f"log f(gamma) = {lf:.3g} exceeds the exponent budget "
            f"{cfg.exponent_cap:.3g}; the radius route cannot start")
    return math.exp(lf)


def integrate_r(nl: Nonlinearity, n: int, gamma: float, stop: StopRule,
                cfg: ProblemConfig | None = None, *, lin: bool = False,
                track_s0: float | None = None) -> Trajectory:
    """March the weighted flux system outward in r from a series startup.

    The startup radius keeps the next series term below the step tolerance:
    w = gamma - ((n-1)/(n-b)) (f(gamma)/(n-b))^{1/(n-1)} r^{(n-b)/(n-1)},
    Phi = -f(gamma) r^{n-b}/(n-b), with b the singular weight exponent.
    """
    if cfg is None:
        cfg = ProblemConfig(n=n)
    if gamma <= 0.0:
        raise ConfigError(f"gamma must be positive, got {gamma}")
    b = cfg.beta_weight
    nb = n - b
    fg = _f_at(nl, gamma, cfg)
    r0 = series_startup_radius(nl, n, gamma, cfg)
    w0 = gamma - (n - 1.0) / nb * (fg / nb) ** (1.0 / (n - 1.0)) \
        * r0 ** (nb / (n - 1.0))
    Phi0 = -fg * r0 ** nb / nb

    ex = 1.0 / (n - 1.0)
    exd = (n - 2.0) / (n - 1.0)

    if lin:
        if b != 0.0:
            raise ConfigError("linearization channel not wired for beta > 0")
        fp0 = eval_fprime_source(nl, gamma, 0.0)
        chi0 = -fp0 * r0 ** nb / (nb * (n - 1.0))
        # second series term of dw/dgamma; exact for the linear family
        W0 = 1.0 - fp0 / (n * nb) * (fg / nb) ** ((2.0 - n) / (n - 1.0)) \
            * r0 ** (nb / (n - 1.0))

        def rhs(r, u):
            w, Phi, W, chi = (float(v) for v in u)
            aPhi = max(-Phi, 0.0)
            wp = -((aPhi / r ** (n - 1.0)) ** ex) if aPhi > 0.0 else 0.0
            dW = _clamp(chi / r if n == 2
                        else chi / (r * max(aPhi, _PSI_ATOL) ** exd))
            dchi = _clamp(-_fprime_soft(nl, w, 0.0) * W * r ** (nb - 1.0)
                          / (n - 1.0))
            return (max(wp, -_SOURCE_CAP),
                    _clamp(-_source_soft(nl, w, 0.0) * r ** (nb - 1.0)),
                    dW, dchi)
        y0 = [w0, Phi0, W0, chi0]
        atol_vec = [cfg.atol, _PSI_ATOL, cfg.atol, cfg.atol]
    else:
        def rhs(r, u):
            w, Phi = float(u[0]), float(u[1])
            aPhi = max(-Phi, 0.0)
            wp = -((aPhi / r ** (n - 1.0)) ** ex) if aPhi > 0.0 else 0.0
            return (max(wp, -_SOURCE_CAP),
                    _clamp(-_source_soft(nl, w, 0.0) * r ** (nb - 1.0)))
        y0 = [w0, Phi0]
        atol_vec = [cfg.atol, _PSI_ATOL]

    if stop.kind == "t_floor":
        r_end = min(n * math.exp(-stop.value / n), cfg.r_max)
    else:
        r_end = cfg.r_max
    if r_end <= r0:
        raise ConfigError(f"stop radius {r_end} not beyond startup {r0}")

    events = []
    target = None
    if stop.kind == "first_zero":
        target = 0.0
    elif stop.kind == "y_reaches":
        target = stop.value
    if target is not None:
        def ev_stop(r, u, v=target):
            return u[0] - v
        ev_stop.terminal = True
        events.append(ev_stop)
    if track_s0 is not None and track_s0 > 0.0 and math.isfinite(track_s0):
        def ev_s0(r, u, v=track_s0):
            return u[0] - v
        ev_s0.terminal = False
        events.append(ev_s0)

    sol = _run_ivp(rhs, (r0, r_end), y0, events, cfg, atol_vec)
    if sol.status == -1:
        last = StateR(float(sol.t[-1]), float(sol.y[0, -1]), float(sol.y[1, -1]))
        raise SolverError(f"integrator failed: {sol.message}", last_state=last)

    evs: dict = {}
    diag = {"nfev": int(sol.nfev), "steps": int(len(sol.t)) - 1,
            "route": "r", "status": int(sol.status), "r0": r0}
    if target is not None:
        if sol.status != 1 or len(sol.t_events[0]) == 0:
            last = StateR(float(sol.t[-1]), float(sol.y[0, -1]),
                          float(sol.y[1, -1]))
            raise EventNotFoundError(
                f"no crossing of w={target} inside r <= {r_end}",
                last_state=last)
        re_ = float(sol.t_events[0][0])
        re_ = _refine_event(lambda r: float(sol.sol(r)[0]) - target,
                            re_, r0, float(sol.t[-1]), cfg.event_tol)
        evs["stop_r"] = re_
        evs["stop_residual"] = float(sol.sol(re_)[0]) - target
    if track_s0 is not None and len(events) > 1 and len(sol.t_events[-1]):
        rs0 = float(sol.t_events[-1][0])
        evs["s0_r"] = _refine_event(lambda r: float(sol.sol(r)[0]) - track_s0,
                                    rs0, r0, float(sol.t[-1]), cfg.event_tol)
    return Trajectory(kind="r", gamma=gamma, n=n, nl=nl, cfg=cfg,
                      ts=sol.t.copy(), states=sol.y.T.copy(), dense=sol.sol,
                      lin=lin, events=evs, diagnostics=diag)


def state_t_from_r(state: StateR, n: int) -> StateT:
    """Change of variables r = n e^{-t/n}; the t-flux is |Phi| / n^{n-1}."""
    if state.r <= 0.0:
        raise ConfigError("conversion needs r > 0")
    return StateT(t=-n * math.log(state.r / n), y=state.w,
                  psi=abs(state.Phi) / n ** (n - 1.0))


@dataclass(frozen=True)
class EnergyRecord:
    t: float
    E: float
    scale: float


def energy_series(traj: Trajectory, nl: Nonlinearity | None = None,
                  n: int | None = None) -> list:
    """E = psi - ((n-1)/n) psi^{n/(n-1)} g'(y) - e^{g(y)-t} at each accepted
    sample with y above the convexity floor. E decreases in t there; the
    returned records keep the trajectory's (decreasing-t) order, and `scale`
    is the natural comparison magnitude |E| + e^{g(y)-t}."""
    nl = nl if nl is not None else traj.nl
    n = n if n is not None else traj.n
    if traj.kind != "t":
        raise ConfigError("the energy monitor runs in the log-radius variable")
    if nl.linear:
        raise ConfigError("energy monitor needs the exponential form")
    s0w = convexity_floor(nl)
    glam = math.log(nl.lam)
    out = []
    for t, row in zip(traj.ts, traj.states):
        y, psi = float(row[0]), float(row[1])
        if y <= 0.0 or y < s0w:
            continue
        ee = math.exp(glam + eval_g(nl, y, 0) - t)
        E = psi - (n - 1.0) / n * psi ** (n / (n - 1.0)) * eval_g(nl, y, 1) - ee
        out.append(EnergyRecord(t=float(t), E=E, scale=abs(E) + ee))
    return out


def energy_violations(records, tol: float = 1e-9):
    """Pairs of consecutive records violating monotone decrease in t beyond
    tol * scale. Records are in decreasing-t order, so E must not decrease
    along the list."""
    bad = []
    for r1, r2 in zip(records[:-1], records[1:]):
        drop = r1.E - r2.E
        if drop > tol * r1.scale:
            bad.append((r1.t, r2.t, drop / r1.scale))
    return bad


_GL_CACHE: dict = {}


def quad_dense(traj: Trajectory, func, a: float, b: float,
               nodes: int = 12) -> float:
    """Integral of func(x, state(x)) over [a, b] using fixed Gauss-Legendre
    panels split at the accepted steps, so the quadrature never crosses a
    dense-output patch boundary."""
    if a == b:
        return 0.0
    sign = 1.0
    lo, hi = a, b
    if lo > hi:
        lo, hi, sign = b, a, -1.0
    if nodes not in _GL_CACHE:
        _GL_CACHE[nodes] = np.polynomial.legendre.leggauss(nodes)
    xg, wg = _GL_CACHE[nodes]
    ts = np.sort(np.asarray(traj.ts, dtype=float))
    inner = ts[(ts > lo) & (ts < hi)]
    cuts = np.concatenate(([lo], inner, [hi]))
    total = 0.0
    for left, right in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (left + right)
        half = 0.5 * (right - left)
        for xi, wi in zip(xg, wg):
            x = mid + half * xi
            total += wi * half * func(x, traj.state_at(x))
    return sign * total
