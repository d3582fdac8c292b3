"""Linearized flow in gamma: derivative of the first zero, turning points,
and the flux-form identity used to certify the computed derivative.

The linearization channel rides along the main integration as the pair
(V1, phi) with phi = (y')^{n-2} V1'. Its tail seed is the closed-form V2
of the comparison solution; by the time the state reaches the first zero,
V1(T) is the gamma-derivative of the profile there and

    T'(gamma) = -V1(T) / y'(T).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .asymptotics import snapshot
from .config import ProblemConfig
from .errors import AdmissionError, ConfigError, SolverError
from .nonlinearity import Nonlinearity, convexity_floor, eval_g
from .ode import (Trajectory, first_zero_of_y, integrate_r, integrate_t,
                  quad_dense, tail_start, wprime_from_Phi, yprime_from_psi)
from .shooting import choose_route
from ._stable import sigma


@dataclass(frozen=True)
class LinState:
    t: float
    V1: float
    phi: float


def v2_eval(gamma: float, n: int, nl: Nonlinearity, t):
    """Closed-form tail derivative V2 and its first two t-derivatives.

    With x = (T1 - t)/(n-1):
        V2   = -1/(n-1) + (n/(n-1)) sigma(-x)
        V2'  = (n/(n-1)^2) sigma(x) sigma(-x)
        V2'' = (n/(n-1)^3) sigma(x) sigma(-x) (1 - 2 sigma(-x))
    """
    s = snapshot(nl, n, gamma)
    x = (s.T1 - np.asarray(t, dtype=float)) / (n - 1.0)
    sp, sm = sigma(x), sigma(-x)
    v2 = -1.0 / (n - 1.0) + n / (n - 1.0) * sm
    v2p = n / (n - 1.0) ** 2 * sp * sm
    v2pp = n / (n - 1.0) ** 3 * sp * sm * (1.0 - 2.0 * sm)
    if np.isscalar(t) or np.ndim(t) == 0:
        return float(v2), float(v2p), float(v2pp)
    return v2, v2p, v2pp


@dataclass(frozen=True)
class V2Closed:
    """Bundle of the comparison-solution derivative: callables plus its
    zero S0 = T1 - (n-1) log(n-1)."""

    gamma: float
    n: int
    nl: Nonlinearity
    T1: float
    S0: float

    def V2(self, t):
        return v2_eval(self.gamma, self.n, self.nl, t)[0]

    def V2prime(self, t):
        return v2_eval(self.gamma, self.n, self.nl, t)[1]

    def V2pprime(self, t):
        return v2_eval(self.gamma, self.n, self.nl, t)[2]


def v2_closed(nl: Nonlinearity, n: int, gamma: float) -> V2Closed:
    s = snapshot(nl, n, gamma)
    return V2Closed(gamma=float(gamma), n=int(n), nl=nl, T1=s.T1,
                    S0=s.T1 - (n - 1.0) * math.log(n - 1.0))


@dataclass(frozen=True)
class V1Result:
    gamma: float
    n: int
    route: str
    T: float
    yprime_T: float
    V1_T: float
    Ttilde: Optional[float] = None
    t_start: Optional[float] = None
    traj: Optional[Trajectory] = None


def solve_V1(nl: Nonlinearity, n: int, gamma: float,
             cfg: ProblemConfig | None = None, *,
             keep_trajectory: bool = False,
             route: str | None = None) -> V1Result:
    """Integrate the linearization channel along the shooting trajectory
    and return the boundary value V1(T)."""
    if cfg is None:
        cfg = ProblemConfig(n=n)
    if route is None:
        route = choose_route(nl, n, gamma, cfg)
    s0w = convexity_floor(nl)
    track = s0w if (math.isfinite(s0w) and 0.0 < s0w < gamma) else None

    if route == "t":
        start = tail_start(nl, n, gamma, cfg.c_tail, cfg)
        v2, v2p, _ = v2_eval(gamma, n, nl, start.t)
        zp = yprime_from_psi(start.psi, n)
        phi0 = zp ** (n - 2.0) * v2p
        traj = integrate_t(nl, n, start, first_zero_of_y(), cfg, lin=True,
                           lin_init=(v2, phi0), track_s0=track, gamma=gamma)
        T = traj.events["stop_t"]
        s = traj.state_at(T)
        ypT = yprime_from_psi(float(s[1]), n)
        v1T = float(s[2])
        return V1Result(gamma=float(gamma), n=n, route="t", T=float(T),
                        yprime_T=ypT, V1_T=v1T,
                        Ttilde=traj.events.get("s0_t"), t_start=start.t,
                        traj=traj if keep_trajectory else None)

    if cfg.beta_weight != 0.0:
        raise AdmissionError("linearized flow not wired for the weighted "
                             "problem; reduce it first")
    traj = integrate_r(nl, n, gamma, first_zero_of_y(), cfg, lin=True,
                       track_s0=track)
    r_ev = traj.events["stop_r"]
    T = -n * math.log(r_ev / n)
    s = traj.state_at(r_ev)
    wp = wprime_from_Phi(float(s[1]), r_ev, n)
    ypT = -(r_ev / n) * wp
    rs0 = traj.events.get("s0_r")
    return V1Result(gamma=float(gamma), n=n, route="r", T=float(T),
                    yprime_T=ypT, V1_T=float(s[2]),
                    Ttilde=-n * math.log(rs0 / n) if rs0 is not None else None,
                    traj=traj if keep_trajectory else None)


def t_prime(nl: Nonlinearity, n: int, gamma: float,
            cfg: ProblemConfig | None = None) -> float:
    """T'(gamma) through the linearized flow."""
    res = solve_V1(nl, n, gamma, cfg)
    if res.yprime_T < 1e-14:
        raise SolverError(
            f"boundary slope y'(T) = {res.yprime_T:.3g} too small to divide")
    return -res.V1_T / res.yprime_T


def t_prime_fd(nl: Nonlinearity, n: int, gamma: float,
               cfg: ProblemConfig | None = None,
               h_rel: float = 1e-3) -> float:
    """Central difference of T at ten-times-tighter tolerance; the
    independent cross-check for t_prime."""
    from .shooting import shoot

    if cfg is None:
        cfg = ProblemConfig(n=n)
    tight = cfg.tighter(0.1)
    h = h_rel * gamma
    Tp = shoot(nl, n, gamma + h, tight).T
    Tm = shoot(nl, n, gamma - h, tight).T
    return (Tp - Tm) / (2.0 * h)


def _largest_zero(ts_desc, f: Callable, lo_cut: float) -> Optional[float]:
    """Largest abscissa in (lo_cut, ts_desc[0]) where f changes sign,
    refined by bisection on the callable. None when never bracketed."""
    prev_t = None
    prev_v = None
    for t in ts_desc:
        t = float(t)
        if t < lo_cut:
            t = lo_cut
        v = f(t)
        if prev_t is not None and v == 0.0:
            return t
        if prev_t is not None and prev_v * v < 0.0:
            return float(brentq(f, t, prev_t, xtol=1e-13, rtol=1e-15))
        prev_t, prev_v = t, v
        if t == lo_cut:
            break
    return None


@dataclass(frozen=True)
class TurningReport:
    gamma: float
    n: int
    T: Optional[float]
    T1: float
    S1: Optional[float]
    S: Optional[float]
    S_predicted: Optional[float]
    V2prime_at_S: Optional[float]
    comparator: Optional[float]
    S6: Optional[float]

    def as_dict(self) -> dict:
        return {"S": self.S, "S1": self.S1, "S_predicted": self.S_predicted,
                "V2prime_at_S": self.V2prime_at_S}


def detect_turning(nl: Nonlinearity, n: int, gamma: float,
                   cfg: ProblemConfig | None = None, *,
                   use_V2: bool = False) -> TurningReport:
    """Locate the sign structure of the linearized flow along the tail.

    S1 is the largest zero of V1 below the tail start, S the largest zero
    of phi = (y')^{n-2} V1'. Both come back None when no crossing is
    bracketed by the accepted steps; nothing is extrapolated. With use_V2
    the detector runs on the closed-form V2 instead of a computed V1, which
    pins S1 at the known S0 and exercises the machinery alone.
    """
    if cfg is None:
        cfg = ProblemConfig(n=n)
    s = snapshot(nl, n, gamma)
    s_pred = None
    comparator = None
    if s.gpp > 0.0:
        s_pred = s.T1 + (n - 1.0) * math.log((n - 1.0) * s.gpp / s.gp ** 2)
        comparator = n / (n - 1.0) * s.gpp / s.gp ** 2
    s6 = None
    if nl.q > 1.0:
        s6 = s.T1 - (4.0 * nl.q / (nl.q - 1.0) + 1.0) * (n - 1.0) \
            * math.log(s.gp)

    if use_V2:
        start = tail_start(nl, n, gamma, cfg.c_tail, cfg)
        ts = np.linspace(start.t, s.T1 - 8.0 * (n - 1.0), 400)

        def v1f(t):
            return v2_eval(gamma, n, nl, t)[0]

        def phif(t):
            v2p = v2_eval(gamma, n, nl, t)[1]
            if n == 2:
                return v2p
            zp = yprime_from_psi(comparison_psi(nl, n, gamma, t), n)
            return zp ** (n - 2.0) * v2p

        lo_cut = float(ts[-1])
        S1 = _largest_zero(ts, v1f, lo_cut)
        S = _largest_zero(ts, phif, lo_cut)
        T = None
        v2p_at = v2_eval(gamma, n, nl, S)[1] if S is not None else None
        return TurningReport(gamma=float(gamma), n=n, T=T, T1=s.T1, S1=S1,
                             S=S, S_predicted=s_pred, V2prime_at_S=v2p_at,
                             comparator=comparator, S6=s6)

    res = solve_V1(nl, n, gamma, cfg, keep_trajectory=True, route="t")
    traj = res.traj

    def v1f(t):
        return float(traj.state_at(t)[2])

    def phif(t):
        return float(traj.state_at(t)[3])

    lo_cut = res.T
    S1 = _largest_zero(traj.ts, v1f, lo_cut)
    S = _largest_zero(traj.ts, phif, lo_cut)
    v2p_at = v2_eval(gamma, n, nl, S)[1] if S is not None else None
    return TurningReport(gamma=float(gamma), n=n, T=res.T, T1=s.T1, S1=S1,
                         S=S, S_predicted=s_pred, V2prime_at_S=v2p_at,
                         comparator=comparator, S6=s6)


def comparison_psi(nl: Nonlinearity, n: int, gamma: float, t: float) -> float:
    """Flux (z')^{n-1} of the comparison solution; small helper for the
    detector's V2 mode."""
    s = snapshot(nl, n, gamma)
    x = (s.T1 - t) / (n - 1.0)
    return (s.c * float(sigma(x))) ** (n - 1.0)


def flux_identity_residual(nl: Nonlinearity, n: int, gamma: float,
                           cfg: ProblemConfig | None = None,
                           a: float | None = None,
                           b: float | None = None) -> dict:
    """Normalized residual of the integrated flux identity for phi.

    With J = (1 - y' (g'(y) + g''(y)/g'(y))) phi + phi' and phi' taken from
    the channel's own right-hand side, the identity reads

        J(a) = J(b) + int_a^b -(g''/g') f(y) e^{-t} V1' / (n-1) dt
                    + int_a^b (g'' + g'''/g' - (g''/g')^2) psi^{n/(n-1)} V1' dt

    on any [a, b] inside the integrated span. Defaults: a at the convexity
    crossing, b at the tail start. The residual is normalized by the largest
    magnitude among the four terms.
    """
    if cfg is None:
        cfg = ProblemConfig(n=n)
    res = solve_V1(nl, n, gamma, cfg, keep_trajectory=True, route="t")
    traj = res.traj
    if a is None:
        a = res.Ttilde if res.Ttilde is not None else res.T
    if b is None:
        b = res.t_start
    if not a < b:
        if a == b:
            return {"residual": 0.0, "J_a": 0.0, "J_b": 0.0, "I1": 0.0,
                    "I2": 0.0, "a": a, "b": b}
        raise ConfigError(f"need a < b, got a={a}, b={b}")

    from .nonlinearity import eval_fprime_source, eval_source
    exv = (n - 2.0) / (n - 1.0)

    def parts(t, s):
        y, psi, v1, phi = (float(v) for v in s[:4])
        yp = yprime_from_psi(psi, n)
        gp = eval_g(nl, y, 1)
        gpp = eval_g(nl, y, 2)
        gppp = eval_g(nl, y, 3)
        v1p = phi if n == 2 else phi / max(psi, 1e-300) ** exv
        return y, psi, v1, phi, yp, gp, gpp, gppp, v1p

    def J(t):
        s = traj.state_at(t)
        y, psi, v1, phi, yp, gp, gpp, _, _ = parts(t, s)
        phip = -eval_fprime_source(nl, y, t) * v1 / (n - 1.0)
        return (1.0 - yp * (gp + gpp / gp)) * phi + phip

    def igrand1(t, s):
        y, psi, v1, phi, yp, gp, gpp, _, v1p = parts(t, s)
        return -(gpp / gp) * eval_source(nl, y, t) * v1p / (n - 1.0)

    def igrand2(t, s):
        y, psi, v1, phi, yp, gp, gpp, gppp, v1p = parts(t, s)
        return (gpp + gppp / gp - (gpp / gp) ** 2) \
            * psi ** (n / (n - 1.0)) * v1p

    Ja, Jb = J(a), J(b)
    I1 = quad_dense(traj, igrand1, a, b)
    I2 = quad_dense(traj, igrand2, a, b)
    scale = max(abs(Ja), abs(Jb), abs(I1), abs(I2), 1e-300)
    return {"residual": abs(Ja - Jb - I1 - I2) / scale, "J_a": Ja, "J_b": Jb,
            "I1": I1, "I2": I2, "a": a, "b": b, "scale": scale}


def nondegeneracy(nl: Nonlinearity, n: int, gamma: float,
                  cfg: ProblemConfig | None = None) -> dict:
    """Whether V1(T) clears the numerical noise floor of its own channel.

    The floor is 1e-8 times the largest |V1| seen along the trajectory
    (never below 1e-8); the margin is |V1(T)| over that floor.
    """
    if cfg is None:
        cfg = ProblemConfig(n=n)
    res = solve_V1(nl, n, gamma, cfg, keep_trajectory=True)
    vmax = float(np.max(np.abs(res.traj.states[:, 2])))
    floor = 1e-8 * max(1.0, vmax)
    return {"V1_T": res.V1_T, "floor": floor,
            "margin": abs(res.V1_T) / floor,
            "nondegenerate": abs(res.V1_T) > floor}
