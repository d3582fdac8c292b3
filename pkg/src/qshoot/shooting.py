"""First-zero shooting map and the bifurcation data built on top of it.

shoot() picks a marching route per gamma: small amplitudes start the series
at r = 0 and march outward, large amplitudes start on the asymptotic tail
and march backward in the log-radius variable. Both land on the same first
zero; the cross-route agreement is one of the standing checks.

Conventions tied together here:

    T        first zero in the log-radius variable
    R        = n e^{-T/n}, the radial first zero (held bitwise consistent
               with the stored T)
    lambda   = R^{n - beta}, the eigenvalue reading of the zero
    Ttilde   crossing of the convexity floor s0, when one exists
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .asymptotics import comparison_z
from .config import ProblemConfig
from .errors import ConfigError, QShootError
from .nonlinearity import (Nonlinearity, convexity_floor, log_f, with_lambda)
from .ode import (Trajectory, first_zero_of_y, integrate_r, integrate_t,
                  tail_admissible, tail_start, wprime_from_Phi,
                  yprime_from_psi)


@dataclass(frozen=True)
class ShootOutcome:
    """One solved amplitude. Failed rows inside a sweep keep gamma and carry
    None everywhere else."""

    gamma: float
    T: Optional[float]
    yprime_T: Optional[float]
    R: Optional[float]
    lam: Optional[float]
    Ttilde: Optional[float] = None
    route: str = ""
    diagnostics: dict = field(default_factory=dict, compare=False)
    traj: Optional[Trajectory] = field(default=None, repr=False, compare=False)

    def as_dict(self) -> dict:
        return {"gamma": self.gamma, "T": self.T, "R": self.R,
                "lambda": self.lam, "yprime_T": self.yprime_T,
                "Ttilde": self.Ttilde, "route": self.route}


def choose_route(nl: Nonlinearity, n: int, gamma: float,
                 cfg: ProblemConfig) -> str:
    """Marching route for one amplitude: "r" (outward from the origin) or
    "t" (backward from the tail). The tail route is only worth its setup
    once gamma sits well above the convexity floor and the tail remainder
    is certifiably small; everything else goes outward."""
    if cfg.beta_weight != 0.0 or nl.linear:
        return "r"
    s0w = convexity_floor(nl)
    if not math.isfinite(s0w):
        return "r"
    if gamma <= max(2.0 * s0w, cfg.gamma_switch):
        return "r"
    return "t" if tail_admissible(nl, n, gamma, cfg) else "r"


def shoot(nl: Nonlinearity, n: int, gamma: float,
          cfg: ProblemConfig | None = None, *, keep_trajectory: bool = False,
          route: str | None = None) -> ShootOutcome:
    """Solve one amplitude to its first zero."""
    if cfg is None:
        cfg = ProblemConfig(n=n)
    if gamma <= 0.0:
        raise ConfigError(f"gamma must be positive, got {gamma}")
    if route is None:
        route = choose_route(nl, n, gamma, cfg)
    elif route not in ("t", "r"):
        raise ConfigError(f"unknown route {route!r}")

    s0w = convexity_floor(nl)
    track = s0w if (math.isfinite(s0w) and 0.0 < s0w < gamma) else None

    if route == "t":
        start = tail_start(nl, n, gamma, cfg.c_tail, cfg)
        traj = integrate_t(nl, n, start, first_zero_of_y(), cfg,
                           track_s0=track, gamma=gamma)
        T = traj.events["stop_t"]
        psi_T = float(traj.state_at(T)[1])
        yprime_T = yprime_from_psi(psi_T, n)
        Ttilde = traj.events.get("s0_t")
        diag = {"route": "t", "t_start": start.t, **traj.diagnostics}
    else:
        traj = integrate_r(nl, n, gamma, first_zero_of_y(), cfg,
                           track_s0=track)
        r_ev = traj.events["stop_r"]
        T = -n * math.log(r_ev / n)
        wp = wprime_from_Phi(float(traj.state_at(r_ev)[1]), r_ev, n)
        yprime_T = -(r_ev / n) * wp
        rs0 = traj.events.get("s0_r")
        Ttilde = -n * math.log(rs0 / n) if rs0 is not None else None
        diag = {"route": "r", **traj.diagnostics}

    R = n * math.exp(-T / n)
    lam = R ** (n - cfg.beta_weight)
    return ShootOutcome(gamma=float(gamma), T=float(T),
                        yprime_T=float(yprime_T), R=float(R), lam=float(lam),
                        Ttilde=Ttilde, route=route, diagnostics=diag,
                        traj=traj if keep_trajectory else None)


@dataclass
class BifurcationCurve:
    """Sweep results over a gamma grid, kept index-aligned with the grid.

    `tprime_v1` comes from the linearized flow, `tprime_fd` from a central
    difference at tighter tolerance; both are None unless the sweep was
    asked for derivatives. Rows that failed keep their slot (T is None) and
    the reason lands in `errors`."""

    nl: Nonlinearity
    n: int
    beta: float
    cfg: ProblemConfig
    gammas: tuple
    outcomes: tuple
    tprime_v1: Optional[tuple] = None
    tprime_fd: Optional[tuple] = None
    errors: tuple = ()

    def rows(self):
        for i, out in enumerate(self.outcomes):
            row = out.as_dict()
            if self.tprime_v1 is not None:
                row["Tprime_v1"] = self.tprime_v1[i]
                row["Tprime_fd"] = self.tprime_fd[i]
            yield row


def _thread_count(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("QSHOOT_THREADS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def sweep(nl: Nonlinearity, n: int, gammas, cfg: ProblemConfig | None = None,
          *, with_derivative: bool = False,
          threads: int | None = None) -> BifurcationCurve:
    """Shoot every amplitude in `gammas` (order preserved, deterministic
    regardless of the thread count)."""
    if cfg is None:
        cfg = ProblemConfig(n=n)
    gam = tuple(float(g) for g in gammas)

    def one(g):
        try:
            out = shoot(nl, n, g, cfg)
        except QShootError as exc:
            return (ShootOutcome(gamma=g, T=None, yprime_T=None, R=None,
                                 lam=None), None, None, str(exc))
        tv1 = tfd = None
        if with_derivative:
            from .linearization import t_prime, t_prime_fd
            try:
                tv1 = t_prime(nl, n, g, cfg)
                tfd = t_prime_fd(nl, n, g, cfg)
            except QShootError as exc:
                return (out, tv1, tfd, f"derivative failed: {exc}")
        return (out, tv1, tfd, None)

    nt = _thread_count(threads)
    if nt == 1:
        results = [one(g) for g in gam]
    else:
        with ThreadPoolExecutor(max_workers=nt) as pool:
            results = list(pool.map(one, gam))

    outcomes = tuple(r[0] for r in results)
    errs = tuple((g, r[3]) for g, r in zip(gam, results) if r[3] is not None)
    tv1 = tfd = None
    if with_derivative:
        tv1 = tuple(r[1] for r in results)
        tfd = tuple(r[2] for r in results)
    return BifurcationCurve(nl=nl, n=n, beta=cfg.beta_weight, cfg=cfg,
                            gammas=gam, outcomes=outcomes, tprime_v1=tv1,
                            tprime_fd=tfd, errors=errs)


@dataclass(frozen=True)
class RegimeReport:
    verdict: str
    p_estimate: float
    gammas: tuple
    Ts: tuple
    spread: float


def classify_small_gamma(nl: Nonlinearity, n: int,
                         gammas=(1e-1, 1e-2, 1e-3, 1e-4),
                         cfg: ProblemConfig | None = None) -> RegimeReport:
    """Small-amplitude trend of the first zero.

    T is computed along a decreasing amplitude ladder. A total variation
    at or below 0.75 reads as "bounded"; otherwise a monotone climb is
    "diverges_up" (the eigenvalue collapses) and a monotone fall is
    "diverges_down". Mixed signs come back "inconclusive". The local power
    of f near zero is estimated alongside as a cross-reference.
    """
    if cfg is None:
        cfg = ProblemConfig(n=n)
    gs = tuple(sorted({float(g) for g in gammas}, reverse=True))
    if len(gs) < 3:
        raise ConfigError("need at least three amplitudes to read a trend")
    Ts = tuple(shoot(nl, n, g, cfg).T for g in gs)
    spread = max(Ts) - min(Ts)
    diffs = np.diff(Ts)
    if spread <= 0.75:
        verdict = "bounded"
    elif np.all(diffs > 0.0):
        verdict = "diverges_up"
    elif np.all(diffs < 0.0):
        verdict = "diverges_down"
    else:
        verdict = "inconclusive"

    us = np.geomspace(1e-6, 1e-3, 24)
    lf = np.array([log_f(nl, float(u)) for u in us])
    slope = np.polyfit(np.log(us), lf, 1)[0]
    return RegimeReport(verdict=verdict, p_estimate=float(slope), gammas=gs,
                        Ts=Ts, spread=float(spread))


def singular_reduce(nl: Nonlinearity, n: int, beta: float):
    """Map the weighted problem (weight r^{-beta}) onto an unweighted one.

    With a = 1 - beta/n the reduced problem uses f / (n^beta a^n); first
    zeros map back through T = T_reduced / a."""
    if not 0.0 <= beta < n:
        raise ConfigError(f"weight exponent must sit in [0, n), got {beta}")
    a = 1.0 - beta / n
    scale = n ** beta * a ** n
    return with_lambda(nl, nl.lam / scale), a


def shoot_singular(nl: Nonlinearity, n: int, beta: float, gamma: float,
                   cfg: ProblemConfig | None = None) -> ShootOutcome:
    """First zero of the weighted problem via the unweighted reduction."""
    if cfg is None:
        cfg = ProblemConfig(n=n)
    nl_red, a = singular_reduce(nl, n, beta)
    out = shoot(nl_red, n, gamma, replace(cfg, beta_weight=0.0))
    T = out.T / a
    R = n * math.exp(-T / n)
    lam = R ** (n - beta)
    Ttilde = out.Ttilde / a if out.Ttilde is not None else None
    diag = dict(out.diagnostics)
    diag.update({"reduction_a": a, "T_reduced": out.T})
    return ShootOutcome(gamma=float(gamma), T=float(T),
                        yprime_T=a * out.yprime_T, R=float(R), lam=float(lam),
                        Ttilde=Ttilde, route=out.route, diagnostics=diag)


def shoot_weighted_direct(nl: Nonlinearity, n: int, beta: float,
                          gamma: float,
                          cfg: ProblemConfig | None = None) -> ShootOutcome:
    """First zero of the weighted problem by direct outward marching; the
    independent cross-check for the reduction above."""
    if cfg is None:
        cfg = ProblemConfig(n=n)
    return shoot(nl, n, gamma, replace(cfg, beta_weight=float(beta)))


@dataclass
class ProfileResult:
    xi: np.ndarray
    u: np.ndarray
    outcome: ShootOutcome


def export_profile(nl: Nonlinearity, n: int, gamma: float,
                   cfg: ProblemConfig | None = None,
                   npts: int = 401) -> ProfileResult:
    """Solution profile u(xi) = w(R xi) on xi in [0, 1].

    Inside the tail-start radius the t-route trajectory is extended by the
    comparison closed form (it is what seeded the march); the r-route uses
    its own series below the startup radius. u(0) = gamma is the exact
    limit of both.
    """
    if cfg is None:
        cfg = ProblemConfig(n=n)
    out = shoot(nl, n, gamma, cfg, keep_trajectory=True)
    traj = out.traj
    xi = np.linspace(0.0, 1.0, int(npts))
    u = np.empty_like(xi)
    u[0] = gamma
    if traj.kind == "r":
        r_lo, r_hi = traj.span()
        fg = math.exp(log_f(nl, gamma))
        nb = n - cfg.beta_weight
        coef = (n - 1.0) / nb * (fg / nb) ** (1.0 / (n - 1.0))
        for i in range(1, len(xi)):
            r = out.R * xi[i]
            if r < r_lo:
                u[i] = gamma - coef * r ** (nb / (n - 1.0))
            else:
                u[i] = float(traj.state_at(min(r, r_hi))[0])
    else:
        t_lo, t_hi = traj.span()
        for i in range(1, len(xi)):
            r = out.R * xi[i]
            t = -n * math.log(r / n)
            if t >= t_hi:
                u[i] = comparison_z(gamma, n, nl, t)[0]
            else:
                u[i] = float(traj.state_at(max(t, t_lo))[0])
    return ProfileResult(xi=xi, u=u, outcome=out)
