"""Closed-loop simulation through the terminal singularity.

The control law carries a 1/(T_p - t) gain, so the loop is integrated on
[0, T_p - eps_stop] only, held off the singular instant by the standoff
eps_stop.  The remaining sliver is crossed with a single explicit Euler step
using the last control value, after which the input is switched to zero and
the free chain is integrated on [T_p, t_end].  Samples land exactly on a
uniform grid (plus the standoff, the instant itself, and accepted step
boundaries inside the terminal window) because the integrator clips steps to
the next scheduled time instead of interpolating.

Two coordinate choices matter for accuracy:

  * The loop is integrated in setpoint-relative coordinates w = x - (c, 0,
    ..., 0) using a zero-setpoint twin of the controller.  The control law
    depends on x_1 only through x_1 - c, so the twin reproduces u exactly
    while keeping the stage errors representable near T_p, where x_1 itself
    has absorbed the setpoint and carries no significant digits of z_1.
  * An optional change of clock tau = -ln((T_p - t)/T_p) stretches the
    terminal approach onto an infinite horizon; dx/dtau = (T_p - t) dx/dt.
    Both parameterizations must agree wherever they share sample times.

The integrator is a Dormand-Prince 5(4) embedded pair with the first-same-
as-last evaluation reused across accepted steps and a PI step-size
controller.  It is hand-rolled because the surrounding contracts (never
stepping past the standoff, landing exactly on scheduled times, rejected-
step accounting, bit-for-bit determinism) are part of this module's job,
not incidental solver details.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import (
    AuditError,
    ConfigurationError,
    DivergenceError,
    StiffnessError,
)
from .rcdf import zeta
from .synthesis import Controller, zero_setpoint_twin

# ---------------------------------------------------------------------------
# plants


@dataclass(frozen=True)
class IntegratorChain:
    """Pure chain of n integrators driven by a scalar input."""

    n: int

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or self.n < 1:
            raise ConfigurationError(f"chain order must be a positive int, got {self.n!r}")


@dataclass(frozen=True)
class Pendulum:
    """Rigid pendulum (angle, angular rate) with viscous friction.

    theta'' = -(g/l) sin(theta) - (k/m) theta' + torque / (m l^2)

    Under the matching torque (see torque_map) the angle dynamics collapse
    to a double integrator driven by the design input u, which is how the
    closed loop is simulated; the raw form is kept for cross-checks.
    """

    length: float = 0.5
    mass: float = 0.1
    gravity: float = 9.81
    friction: float = 0.01

    def __post_init__(self) -> None:
        for name in ("length", "mass", "gravity"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0.0:
                raise ConfigurationError(f"{name} must be finite and positive, got {v!r}")
        if not math.isfinite(self.friction) or self.friction < 0.0:
            raise ConfigurationError(
                f"friction must be finite and nonnegative, got {self.friction!r}"
            )


PlantModel = Union[IntegratorChain, Pendulum]


def plant_order(plant: PlantModel) -> int:
    return plant.n if isinstance(plant, IntegratorChain) else 2


def torque_map(plant: Pendulum, x: Sequence[float], u: float) -> float:
    """Torque that makes the pendulum track the double-integrator input u."""
    inertia = plant.mass * plant.length ** 2
    return inertia * (
        (plant.gravity / plant.length) * math.sin(x[0])
        + (plant.friction / plant.mass) * x[1]
        + u
    )


def pendulum_accel(plant: Pendulum, x: Sequence[float], torque: float) -> float:
    """Raw angular acceleration under an applied torque."""
    inertia = plant.mass * plant.length ** 2
    return (
        -(plant.gravity / plant.length) * math.sin(x[0])
        - (plant.friction / plant.mass) * x[1]
        + torque / inertia
    )


def pendulum_energy(plant: Pendulum, x: Sequence[float]) -> float:
    """Mechanical energy; conserved for zero torque and zero friction."""
    inertia = plant.mass * plant.length ** 2
    return 0.5 * inertia * x[1] ** 2 + plant.mass * plant.gravity * plant.length * (
        1.0 - math.cos(x[0])
    )


# ---------------------------------------------------------------------------
# configuration and trajectory containers


_MODES = ("direct", "tau")


@dataclass(frozen=True)
class SimConfig:
    """Run parameters.  None fields resolve to T_p-scaled defaults."""

    x0: tuple[float, ...]
    T_p: float
    t_end: float
    eps_stop: float | None = None   # default 1e-9 * T_p
    rtol: float = 1e-9
    atol: float = 1e-12
    max_step: float | None = None   # default T_p / 1000
    sample_dt: float | None = None  # default T_p / 500
    mode: str = "direct"
    tau_end: float | None = None    # default ln(T_p / eps_stop), tau mode only
    open_loop: bool = False         # force u = 0; a run the verifier must reject

    def __post_init__(self) -> None:
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if len(self.x0) == 0 or not all(math.isfinite(v) for v in self.x0):
            raise ConfigurationError(f"x0 must be a nonempty finite vector, got {self.x0!r}")
        if not math.isfinite(self.T_p) or self.T_p <= 0.0:
            raise ConfigurationError(f"T_p must be finite and positive, got {self.T_p!r}")
        if not math.isfinite(self.t_end) or self.t_end < self.T_p:
            raise ConfigurationError(
                f"t_end must be finite and >= T_p={self.T_p}, got {self.t_end!r}"
            )
        if self.eps_stop is None:
            object.__setattr__(self, "eps_stop", 1e-9 * self.T_p)
        if not (0.0 < self.eps_stop <= 0.01 * self.T_p):
            raise ConfigurationError(
                f"eps_stop must lie in (0, 0.01*T_p], got {self.eps_stop!r}"
            )
        if self.max_step is None:
            object.__setattr__(self, "max_step", self.T_p / 1000.0)
        if not (0.0 < self.max_step <= self.T_p):
            raise ConfigurationError(f"max_step must lie in (0, T_p], got {self.max_step!r}")
        if self.sample_dt is None:
            object.__setattr__(self, "sample_dt", self.T_p / 500.0)
        if not (10.0 * self.eps_stop <= self.sample_dt <= self.T_p / 10.0):
            raise ConfigurationError(
                "sample_dt must lie in [10*eps_stop, T_p/10], "
                f"got {self.sample_dt!r}"
            )
        if not (0.0 < self.rtol < 1.0) or not (0.0 < self.atol < 1.0):
            raise ConfigurationError(
                f"rtol and atol must lie in (0, 1), got rtol={self.rtol!r} atol={self.atol!r}"
            )
        if self.mode not in _MODES:
            raise ConfigurationError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.tau_end is None:
            object.__setattr__(self, "tau_end", math.log(self.T_p / self.eps_stop))
        if not math.isfinite(self.tau_end) or self.tau_end <= 0.0:
            raise ConfigurationError(
                f"tau_end must be finite and positive, got {self.tau_end!r}"
            )
        if not isinstance(self.open_loop, bool):
            raise ConfigurationError(
                f"open_loop must be a bool, got {self.open_loop!r}"
            )

    @property
    def t_standoff(self) -> float:
        return self.T_p - self.eps_stop


@dataclass(frozen=True)
class Sample:
    """One recorded instant.  z, V, dV are None at and after T_p, where the
    stage errors are no longer defined."""

    t: float
    x: tuple[float, ...]
    u: float
    z: tuple[float, ...] | None
    V: float | None
    dV: float | None


@dataclass
class Trajectory:
    samples: list[Sample]
    meta: dict = field(default_factory=dict)

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    def states(self) -> np.ndarray:
        return np.array([s.x for s in self.samples])

    def controls(self) -> np.ndarray:
        return np.array([s.u for s in self.samples])

    def pre_instant_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(t, z, V, dV) arrays over the samples strictly before T_p."""
        pre = [s for s in self.samples if s.z is not None]
        if not pre:
            raise AuditError("trajectory has no samples before the prescribed instant")
        t = np.array([s.t for s in pre])
        z = np.array([s.z for s in pre])
        V = np.array([s.V for s in pre])
        dV = np.array([s.dV for s in pre])
        return t, z, V, dV

    def sample_at(self, t_query: float) -> Sample:
        """Sample recorded at exactly t_query (within a relative 1e-12)."""
        span = max(abs(self.samples[-1].t), 1.0)
        for s in self.samples:
            if abs(s.t - t_query) <= 1e-12 * span:
                return s
        raise AuditError(f"no sample recorded at t={t_query!r}")


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4) with PI step control

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_ALPHA = 0.7 / 5.0  # PI exponents for a 5th order error estimate
_BETA = 0.4 / 5.0
_MAX_CONSECUTIVE_REJECTS = 40
_STEP_BUDGET = 5_000_000

_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = (
    35.0 / 384.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
)
# difference between the 5th and 4th order weights, applied to k1..k7
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)


class _RhsFailure(Exception):
    """Internal: the vector field raised or returned garbage at a trial point."""


def _call_rhs(f, t: float, y: list[float], stats: dict) -> list[float]:
    stats["rhs_evals"] += 1
    try:
        out = f(t, y)
    except (OverflowError, ZeroDivisionError, ValueError) as exc:
        raise _RhsFailure(str(exc)) from None
    if not all(math.isfinite(v) for v in out):
        raise _RhsFailure("non-finite derivative")
    return out


def _adaptive_path(
    f: Callable[[float, list[float]], list[float]],
    y0: Sequence[float],
    t0: float,
    stops: Sequence[float],
    *,
    rtol: float,
    atol: float,
    max_step: float,
    stats: dict,
    on_stop: Callable[[int, float, list[float]], None],
    on_step: Callable[[float, list[float]], None] | None = None,
) -> list[float]:
    """Integrate y' = f(t, y) from t0 through every time in stops.

    stops must be strictly increasing and start after t0.  Steps are clipped
    so each stop is hit exactly; on_stop(i, t, y) fires at stops[i], and
    on_step fires at accepted step boundaries between stops.  Returns the
    state at the final stop.
    """
    n = len(y0)
    y = [float(v) for v in y0]
    t = t0
    try:
        k1 = _call_rhs(f, t, y, stats)
    except _RhsFailure as exc:
        raise DivergenceError(f"vector field invalid at start: {exc}", t0) from None

    h = min(max_step, (stops[-1] - t0) / 10.0, stops[0] - t0)
    err_prev = 1.0
    rejected_streak = 0
    just_rejected = False
    stop_idx = 0

    while True:
        if stats["steps_accepted"] + stats["steps_rejected"] > _STEP_BUDGET:
            raise StiffnessError("step budget exhausted", t)
        target = stops[stop_idx]
        remaining = target - t
        hitting = False
        if h >= remaining * (1.0 - 1e-10):
            h = remaining
            hitting = True
        if h <= 1e-14 * max(abs(t), abs(stops[-1]), 1.0) and not hitting:
            raise StiffnessError(f"step size collapsed to {h:.3e}", t)

        failed = False
        try:
            k2 = _call_rhs(f, t + _A21 * h, [y[j] + h * _A21 * k1[j] for j in range(n)], stats)
            k3 = _call_rhs(
                f, t + 0.3 * h,
                [y[j] + h * (_A31 * k1[j] + _A32 * k2[j]) for j in range(n)], stats)
            k4 = _call_rhs(
                f, t + 0.8 * h,
                [y[j] + h * (_A41 * k1[j] + _A42 * k2[j] + _A43 * k3[j]) for j in range(n)],
                stats)
            k5 = _call_rhs(
                f, t + (8.0 / 9.0) * h,
                [y[j] + h * (_A51 * k1[j] + _A52 * k2[j] + _A53 * k3[j] + _A54 * k4[j])
                 for j in range(n)], stats)
            k6 = _call_rhs(
                f, t + h,
                [y[j] + h * (_A61 * k1[j] + _A62 * k2[j] + _A63 * k3[j] + _A64 * k4[j]
                             + _A65 * k5[j]) for j in range(n)], stats)
            y_new = [
                y[j] + h * (_B1 * k1[j] + _B3 * k3[j] + _B4 * k4[j] + _B5 * k5[j]
                            + _B6 * k6[j])
                for j in range(n)
            ]
            if not all(math.isfinite(v) for v in y_new):
                raise _RhsFailure("non-finite state")
            k7 = _call_rhs(f, t + h, y_new, stats)
        except _RhsFailure:
            failed = True

        if not failed:
            err = 0.0
            for j in range(n):
                e_j = h * (_E1 * k1[j] + _E3 * k3[j] + _E4 * k4[j] + _E5 * k5[j]
                           + _E6 * k6[j] + _E7 * k7[j])
                sc = atol + rtol * max(abs(y[j]), abs(y_new[j]))
                err += (e_j / sc) ** 2
            err = math.sqrt(err / n)
        else:
            err = math.inf

        if err <= 1.0:
            stats["steps_accepted"] += 1
            rejected_streak = 0
            t = target if hitting else t + h
            y = y_new
            k1 = k7  # first-same-as-last
            if hitting:
                on_stop(stop_idx, t, y)
                stop_idx += 1
                if stop_idx == len(stops):
                    return y
            elif on_step is not None:
                on_step(t, y)
            if err == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = _SAFETY * err ** (-_ALPHA) * err_prev ** _BETA
            cap = 1.0 if just_rejected else _MAX_FACTOR
            h = h * min(cap, max(_MIN_FACTOR, factor))
            h = min(h, max_step)
            just_rejected = False
            err_prev = max(err, 1e-4)
        else:
            stats["steps_rejected"] += 1
            rejected_streak += 1
            just_rejected = True
            if rejected_streak > _MAX_CONSECUTIVE_REJECTS:
                raise StiffnessError(
                    f"{rejected_streak} consecutive rejected steps", t
                )
            if math.isinf(err):
                h *= 0.25
            else:
                h *= min(1.0, max(_MIN_FACTOR, _SAFETY * err ** (-0.2)))


# ---------------------------------------------------------------------------
# closed-loop simulation


def _new_stats() -> dict:
    return {"steps_accepted": 0, "steps_rejected": 0, "rhs_evals": 0}


def _pre_grid(cfg: SimConfig) -> list[float]:
    """Scheduled pre-instant times: the uniform grid, then the standoff."""
    t_std = cfg.t_standoff
    dt = cfg.sample_dt
    stops = []
    k = 1
    while True:
        tk = k * dt
        if tk >= t_std - 0.1 * cfg.eps_stop:
            break
        stops.append(tk)
        k += 1
    stops.append(t_std)
    return stops


def _post_grid(cfg: SimConfig) -> list[float]:
    """Scheduled post-instant times in (T_p, t_end]."""
    dt = cfg.sample_dt
    stops = []
    k = int(math.floor(cfg.T_p / dt)) + 1
    while True:
        tk = k * dt
        if tk >= cfg.t_end * (1.0 - 1e-15):
            break
        if tk > cfg.T_p:
            stops.append(tk)
        k += 1
    if cfg.t_end > cfg.T_p:
        stops.append(cfg.t_end)
    return stops


class _Recorder:
    """Assembles samples in time order from integrator callbacks."""

    def __init__(
        self,
        cfg: SimConfig,
        offset: tuple[float, ...],
        u_fn,
        z_fns,
        etas: tuple[float, ...],
        kinds: tuple,
    ):
        self.cfg = cfg
        self.offset = offset
        self.u_fn = u_fn
        self.z_fns = z_fns
        self.etas = etas
        self.kinds = kinds
        self.samples: list[Sample] = []

    def record_pre(self, t: float, w: Sequence[float]) -> None:
        x = tuple(w[j] + self.offset[j] for j in range(len(w)))
        z = tuple(fn(w, t) for fn in self.z_fns)
        u = self.u_fn(w, t)
        V = sum(v * v for v in z)
        gap = self.cfg.T_p - t
        dV = -2.0 / gap * sum(
            eta * zi * zeta(kind, zi)
            for eta, kind, zi in zip(self.etas, self.kinds, z)
        )
        self.samples.append(Sample(t=t, x=x, u=u, z=z, V=V, dV=dV))

    def record_post(self, t: float, w: Sequence[float]) -> None:
        x = tuple(w[j] + self.offset[j] for j in range(len(w)))
        self.samples.append(Sample(t=t, x=x, u=0.0, z=None, V=None, dV=None))


def _chain_rhs_factory(n: int, u_fn) -> Callable[[float, list[float]], list[float]]:
    def f(t: float, w: list[float]) -> list[float]:
        dw = w[1:]
        dw = list(dw)
        dw.append(u_fn(w, t))
        return dw
    return f


def _zero_input(w: Sequence[float], t: float) -> float:
    """Input of the open-loop self-test: identically zero.

    An uncontrolled chain cannot settle, so a trajectory produced with this
    input exercises the verifier's failure path on honest data.
    """
    return 0.0


def _free_chain_rhs(n: int) -> Callable[[float, list[float]], list[float]]:
    def f(t: float, w: list[float]) -> list[float]:
        dw = list(w[1:])
        dw.append(0.0)
        return dw
    return f


def _check_compatibility(plant: PlantModel, controller: Controller, cfg: SimConfig) -> int:
    n = plant_order(plant)
    if controller.config.n != n:
        raise ConfigurationError(
            f"controller order {controller.config.n} does not match plant order {n}"
        )
    if len(cfg.x0) != n:
        raise ConfigurationError(f"x0 has {len(cfg.x0)} components, plant needs {n}")
    if cfg.T_p != controller.config.T_p:
        raise ConfigurationError(
            f"simulation T_p={cfg.T_p} differs from controller T_p={controller.config.T_p}"
        )
    return n


def _base_meta(plant: PlantModel, controller: Controller, cfg: SimConfig) -> dict:
    if isinstance(plant, IntegratorChain):
        plant_desc: dict = {"type": "chain", "n": plant.n}
    else:
        plant_desc = {
            "type": "pendulum",
            "length": plant.length,
            "mass": plant.mass,
            "gravity": plant.gravity,
            "friction": plant.friction,
        }
    sc = controller.config
    return {
        "plant": plant_desc,
        "n": sc.n,
        "c": sc.c,
        "T_p": sc.T_p,
        "etas": [s.eta for s in sc.stages],
        "kinds": [s.kind.value for s in sc.stages],
        "x0": list(cfg.x0),
        "t_end": cfg.t_end,
        "eps_stop": cfg.eps_stop,
        "rtol": cfg.rtol,
        "atol": cfg.atol,
        "max_step": cfg.max_step,
        "sample_dt": cfg.sample_dt,
        "mode": cfg.mode,
        "open_loop": cfg.open_loop,
        "t_standoff": cfg.t_standoff,
    }


def simulate(plant: PlantModel, controller: Controller, cfg: SimConfig) -> Trajectory:
    """Run the closed loop and return the sampled trajectory.

    Dispatches on cfg.mode.  On integrator breakdown the raised error carries
    the samples collected so far in its `partial` attribute.
    """
    if cfg.mode == "tau":
        return simulate_tau(plant, controller, cfg)
    n = _check_compatibility(plant, controller, cfg)
    sc = controller.config
    twin = zero_setpoint_twin(controller)
    offset = (sc.c,) + (0.0,) * (n - 1)
    w0 = [cfg.x0[j] - offset[j] for j in range(n)]

    u_fn = _zero_input if cfg.open_loop else twin.compiled_u

    rec = _Recorder(
        cfg, offset, u_fn, twin.compiled_z,
        tuple(s.eta for s in sc.stages), tuple(s.kind for s in sc.stages),
    )
    stats = _new_stats()
    window_start = 0.95 * sc.T_p

    rec.record_pre(0.0, w0)
    rhs = _chain_rhs_factory(n, u_fn)
    try:
        w_std = _adaptive_path(
            rhs, w0, 0.0, _pre_grid(cfg),
            rtol=cfg.rtol, atol=cfg.atol, max_step=cfg.max_step, stats=stats,
            on_stop=lambda i, t, w: rec.record_pre(t, w),
            on_step=lambda t, w: rec.record_pre(t, w) if t >= window_start else None,
        )
        w_after = _cross_instant(rhs, w_std, cfg, stats)
        rec.record_post(sc.T_p, w_after)
        post = _post_grid(cfg)
        if post:
            _adaptive_path(
                _free_chain_rhs(n), w_after, sc.T_p, post,
                rtol=cfg.rtol, atol=cfg.atol, max_step=cfg.max_step, stats=stats,
                on_stop=lambda i, t, w: rec.record_post(t, w),
            )
    except (StiffnessError, DivergenceError) as exc:
        exc.partial = Trajectory(samples=rec.samples, meta=_finish_meta(plant, controller, cfg, stats))
        raise
    return Trajectory(samples=rec.samples, meta=_finish_meta(plant, controller, cfg, stats))


def _cross_instant(rhs, w_std: list[float], cfg: SimConfig, stats: dict) -> list[float]:
    """One Euler step of length eps_stop with the frozen last control."""
    try:
        f_std = _call_rhs(rhs, cfg.t_standoff, w_std, stats)
    except _RhsFailure as exc:
        raise DivergenceError(f"vector field invalid at the standoff: {exc}",
                              cfg.t_standoff) from None
    return [w_std[j] + cfg.eps_stop * f_std[j] for j in range(len(w_std))]


def _finish_meta(plant, controller, cfg, stats, **extra) -> dict:
    meta = _base_meta(plant, controller, cfg)
    meta.update(stats)
    meta.update(extra)
    return meta


_TAU_MAX_STEP = 0.05


def simulate_tau(plant: PlantModel, controller: Controller, cfg: SimConfig) -> Trajectory:
    """Run the closed loop on the stretched clock tau = -ln((T_p - t)/T_p).

    The tau window [0, tau_end] covers t in [0, T_p(1 - exp(-tau_end))];
    tau_end defaults to the value that lands exactly on the standoff.  If
    tau_end stops short, the remaining pre-instant span is bridged on the
    plain clock, so the trajectory always reaches the standoff, crosses the
    instant, and continues to t_end like the direct mode.
    """
    n = _check_compatibility(plant, controller, cfg)
    sc = controller.config
    T_p = sc.T_p
    twin = zero_setpoint_twin(controller)
    offset = (sc.c,) + (0.0,) * (n - 1)
    w0 = [cfg.x0[j] - offset[j] for j in range(n)]
    u_fn = _zero_input if cfg.open_loop else twin.compiled_u

    rec = _Recorder(
        cfg, offset, u_fn, twin.compiled_z,
        tuple(s.eta for s in sc.stages), tuple(s.kind for s in sc.stages),
    )
    stats = _new_stats()
    window_start = 0.95 * T_p

    tau_star = math.log(T_p / cfg.eps_stop)  # tau at the standoff
    tau_eff = min(cfg.tau_end, tau_star)

    pre = _pre_grid(cfg)  # includes the standoff as its last entry
    tau_stops: list[float] = []
    t_labels: list[float] = []
    for tk in pre:
        tau_k = tau_star if tk == cfg.t_standoff else math.log(T_p / (T_p - tk))
        if tau_k < tau_eff * (1.0 - 1e-12):
            tau_stops.append(tau_k)
            t_labels.append(tk)
    reached_standoff = tau_eff >= tau_star * (1.0 - 1e-12)
    tau_stops.append(tau_eff)
    t_labels.append(cfg.t_standoff if reached_standoff else -T_p * math.expm1(-tau_eff))

    def rhs_tau(tau: float, w: list[float]) -> list[float]:
        gap = T_p * math.exp(-tau)  # T_p - t, computed without cancellation
        t = T_p - gap
        dw = list(w[1:])
        dw.append(u_fn(w, t))
        return [gap * v for v in dw]

    def on_stop(i: int, tau: float, w: list[float]) -> None:
        rec.record_pre(t_labels[i], w)

    def on_step(tau: float, w: list[float]) -> None:
        t = -T_p * math.expm1(-tau)
        if t >= window_start:
            rec.record_pre(t, w)

    rec.record_pre(0.0, w0)
    rhs_direct = _chain_rhs_factory(n, u_fn)
    try:
        w = _adaptive_path(
            rhs_tau, w0, 0.0, tau_stops,
            rtol=cfg.rtol, atol=cfg.atol, max_step=_TAU_MAX_STEP, stats=stats,
            on_stop=on_stop, on_step=on_step,
        )
        if not reached_standoff:
            # bridge the remaining pre-instant span on the plain clock
            t_handoff = t_labels[-1]
            remaining = [tk for tk in pre if tk > t_handoff * (1.0 + 1e-15)]
            if remaining:
                w = _adaptive_path(
                    rhs_direct, w, t_handoff, remaining,
                    rtol=cfg.rtol, atol=cfg.atol, max_step=cfg.max_step, stats=stats,
                    on_stop=lambda i, t, ww: rec.record_pre(t, ww),
                    on_step=lambda t, ww: rec.record_pre(t, ww) if t >= window_start else None,
                )
        w_after = _cross_instant(rhs_direct, w, cfg, stats)
        rec.record_post(T_p, w_after)
        post = _post_grid(cfg)
        if post:
            _adaptive_path(
                _free_chain_rhs(n), w_after, T_p, post,
                rtol=cfg.rtol, atol=cfg.atol, max_step=cfg.max_step, stats=stats,
                on_stop=lambda i, t, ww: rec.record_post(t, ww),
            )
    except (StiffnessError, DivergenceError) as exc:
        exc.partial = Trajectory(
            samples=rec.samples,
            meta=_finish_meta(plant, controller, cfg, stats, tau_end=cfg.tau_end),
        )
        raise
    return Trajectory(
        samples=rec.samples,
        meta=_finish_meta(plant, controller, cfg, stats, tau_end=cfg.tau_end),
    )


def simulate_pendulum_raw(
    plant: Pendulum,
    cfg: SimConfig,
    torque_fn: Callable[[Sequence[float], float], float],
) -> Trajectory:
    """Integrate the raw nonlinear pendulum under an arbitrary torque signal.

    This is the physical-space cross-check for the linearized closed-loop
    path: the same phase structure (standoff, Euler crossing, free segment),
    but no setpoint shift and no error bookkeeping, so the samples carry
    z = V = dV = None and u holds the applied torque.  Tight tolerances are
    not appropriate here when torque_fn encodes a feedback law in raw
    coordinates, because the stage errors hit the roundoff floor of the
    setpoint well before the standoff; pass a mid-precision config and a
    larger eps_stop instead.
    """
    if len(cfg.x0) != 2:
        raise ConfigurationError(f"pendulum state has 2 components, got {len(cfg.x0)}")

    def rhs(t: float, x: list[float]) -> list[float]:
        return [x[1], pendulum_accel(plant, x, torque_fn(x, t))]

    samples: list[Sample] = []
    stats = _new_stats()

    def record(t: float, x: Sequence[float]) -> None:
        samples.append(
            Sample(t=t, x=tuple(x), u=torque_fn(x, t), z=None, V=None, dV=None)
        )

    record(0.0, cfg.x0)
    x = list(cfg.x0)
    try:
        x = _adaptive_path(
            rhs, x, 0.0, _pre_grid(cfg),
            rtol=cfg.rtol, atol=cfg.atol, max_step=cfg.max_step, stats=stats,
            on_stop=lambda i, t, xx: record(t, xx),
        )
        x = _cross_instant(rhs, x, cfg, stats)
        record(cfg.T_p, x)
        post = _post_grid(cfg)
        if post:
            x = _adaptive_path(
                rhs, x, cfg.T_p, post,
                rtol=cfg.rtol, atol=cfg.atol, max_step=cfg.max_step, stats=stats,
                on_stop=lambda i, t, xx: record(t, xx),
            )
    except (StiffnessError, DivergenceError) as exc:
        exc.partial = Trajectory(samples=samples, meta={"raw": True, **stats})
        raise
    meta = {
        "raw": True,
        "plant": {
            "type": "pendulum",
            "length": plant.length,
            "mass": plant.mass,
            "gravity": plant.gravity,
            "friction": plant.friction,
        },
        "T_p": cfg.T_p,
        "eps_stop": cfg.eps_stop,
        "t_standoff": cfg.t_standoff,
        "x0": list(cfg.x0),
        "t_end": cfg.t_end,
        **stats,
    }
    return Trajectory(samples=samples, meta=meta)
