"""Piecewise-linear trajectories and the action functionals evaluated on them.

A Trajectory interpolates linearly between nodes at strictly increasing times.
Kinetic terms sum |increment|^2 / width exactly; potential terms use composite
midpoint sampling inside every interval, so a trajectory's action is a
deterministic function of (nodes, times, QuadratureSpec) that optimizers can
reproduce to machine precision.

Uniform node layouts are the norm (`Trajectory.uniform`, `from_function`).
Graded layouts appear only in cusp connectors, whose profile (distance)^alpha
has unbounded slope at the endpoints for alpha < 1: geometric clustering of
nodes near the cusps makes the discrete kinetic integral approach its analytic
value from below (linear interpolation never increases kinetic energy).
"""

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ExtrapolationError, InputError, InvariantError
from .potentials import PeriodicPotential, Perturbation
from .quadrature import QuadratureSpec, exp_interval_weights, midpoint_offsets

__all__ = [
    "Trajectory",
    "action_F",
    "action_G",
    "discounted_action",
    "homogenized_action",
    "zero_set_measure",
    "build_connector",
    "connector_kinetic_bound",
    "polar_bound_check",
]


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    nodes: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        if times.ndim != 1 or times.size < 2:
            raise InputError("need at least two time nodes")
        if nodes.shape[0] != times.size:
            raise InputError("times and nodes disagree in length")
        if not np.all(np.diff(times) > 0):
            raise InputError("times must be strictly increasing")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(nodes))):
            raise InputError("times and nodes must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "nodes", nodes)

    # -- constructors -------------------------------------------------------

    @classmethod
    def uniform(cls, t0: float, t1: float, nodes, meta: Optional[dict] = None) -> "Trajectory":
        nodes = np.asarray(nodes, dtype=float)
        count = nodes.shape[0]
        if count < 2:
            raise InputError("need at least two nodes")
        times = np.linspace(t0, t1, count)
        return cls(times, nodes, meta or {})

    @classmethod
    def from_function(cls, fn, t0: float, t1: float, n_intervals: int) -> "Trajectory":
        times = np.linspace(t0, t1, n_intervals + 1)
        nodes = np.asarray([fn(t) for t in times], dtype=float)
        return cls(times, nodes)

    @classmethod
    def affine(cls, a, b, t0: float, t1: float, n_intervals: int = 1) -> "Trajectory":
        a = np.atleast_1d(np.asarray(a, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        lam = np.linspace(0.0, 1.0, n_intervals + 1)[:, None]
        nodes = a[None, :] * (1 - lam) + b[None, :] * lam
        return cls(np.linspace(t0, t1, n_intervals + 1), nodes)

    # -- basic geometry ------------------------------------------------------

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    @property
    def dimension(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_intervals(self) -> int:
        return self.times.size - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.nodes, axis=0) / self.widths[:, None]

    def __call__(self, t):
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(ts < self.times[0] - 1e-12) or np.any(ts > self.times[-1] + 1e-12):
            raise InputError("evaluation time outside the trajectory window")
        idx = np.clip(np.searchsorted(self.times, ts, side="right") - 1, 0, self.n_intervals - 1)
        lam = (ts - self.times[idx]) / self.widths[idx]
        lam = np.clip(lam, 0.0, 1.0)
        vals = self.nodes[idx] * (1 - lam[:, None]) + self.nodes[idx + 1] * lam[:, None]
        if np.isscalar(t) or np.asarray(t).ndim == 0:
            return vals[0]
        return vals

    def resample(self, times) -> "Trajectory":
        times = np.asarray(times, dtype=float)
        return Trajectory(times, self(times), dict(self.meta))

    def kinetic_integral(self) -> float:
        diffs = np.diff(self.nodes, axis=0)
        return float(np.sum(np.sum(diffs * diffs, axis=1) / self.widths))

    # -- serialization -------------------------------------------------------

    def to_csv(self, path):
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["t"] + [f"u_{i + 1}" for i in range(self.dimension)])
            for t, row in zip(self.times, self.nodes):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader)
            if not header or header[0] != "t":
                raise InputError("trajectory CSV must start with a 't' column")
            rows = [[float(v) for v in row] for row in reader if row]
        data = np.asarray(rows, dtype=float)
        return cls(data[:, 0], data[:, 1:])

    def to_json(self) -> str:
        meta = {k: _jsonable(v) for k, v in self.meta.items()}
        payload = {
            "times": [float(t) for t in self.times],
            "nodes": [[float(v) for v in row] for row in self.nodes],
            "meta": meta,
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Trajectory":
        payload = json.loads(text)
        return cls(
            np.asarray(payload["times"], dtype=float),
            np.asarray(payload["nodes"], dtype=float),
            payload.get("meta", {}),
        )


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


# ---------------------------------------------------------------------------
# Sampling helpers shared with the optimizers
# ---------------------------------------------------------------------------


def interval_samples(times: np.ndarray, nodes: np.ndarray, m: int):
    """Midpoint samples per interval: (points (n, m, d), sample times (n, m))."""
    lam = midpoint_offsets(m)
    pts = nodes[:-1, None, :] * (1 - lam)[None, :, None] + nodes[1:, None, :] * lam[None, :, None]
    widths = np.diff(times)
    t_s = times[:-1, None] + widths[:, None] * lam[None, :]
    return pts, t_s


def potential_term(times, nodes, fn, eps: float, m: int) -> float:
    """Composite midpoint integral of fn(u(t)/eps) dt along the path."""
    pts, _ = interval_samples(times, nodes, m)
    vals = fn(pts / eps)
    widths = np.diff(times)
    return float(np.sum(np.sum(vals, axis=1) * (widths / m)))


def _combined(V: Optional[PeriodicPotential], W: Optional[Perturbation]):
    if V is not None and W is not None:
        return lambda y: V.evaluator(y) + W.evaluator(y)
    if V is not None:
        return V.evaluator
    if W is not None:
        return W.evaluator
    return lambda y: np.zeros(y.shape[:-1])


def _check_dims(u: Trajectory, V, W):
    for obj in (V, W):
        if obj is not None and obj.dimension != u.dimension:
            raise InputError("trajectory and potential dimensions disagree")


def action_F(u: Trajectory, V: PeriodicPotential, eps: float, quad: QuadratureSpec) -> float:
    """Unperturbed action: integral of |u'|^2 + V(u/eps) over the window."""
    if eps <= 0:
        raise InputError("eps must be positive")
    _check_dims(u, V, None)
    return u.kinetic_integral() + potential_term(
        u.times, u.nodes, V.evaluator, eps, quad.samples_per_interval
    )


def action_G(
    u: Trajectory,
    V: PeriodicPotential,
    W: Optional[Perturbation],
    eps: float,
    quad: QuadratureSpec,
) -> float:
    """Perturbed action: action_F plus the integral of W(u/eps).

    A zero_atom on W contributes atom * |{t : u(t) = 0}| exactly, via the
    piecewise-linear zero set (u(t)/eps = 0 iff u(t) = 0, so the atom term
    does not depend on eps).
    """
    value = action_F(u, V, eps, quad)
    if W is None:
        return value
    _check_dims(u, None, W)
    value += potential_term(u.times, u.nodes, W.evaluator, eps, quad.samples_per_interval)
    if W.zero_atom != 0.0:
        value += W.zero_atom * zero_set_measure(u, 0.0)
    return value


def discounted_action(
    u: Trajectory,
    V: PeriodicPotential,
    W: Optional[Perturbation],
    eps: float,
    lam: float,
    quad: QuadratureSpec,
) -> float:
    """Discounted action on [0, infinity) truncated at t1 with a constant tail.

    The path is extended by u(t) = u(t1) for t > t1, contributing the exact
    tail (V+W)(u(t1)/eps) * exp(-lam*t1)/lam. Discount weights are exact
    interval integrals of exp(-lam*t), so constants integrate to value/lam
    exactly and the comparison bounds hold without quadrature slack.
    """
    if eps <= 0:
        raise InputError("eps must be positive")
    if abs(u.t0) > 1e-12:
        raise InputError("discounted actions start at t0 = 0")
    _check_dims(u, V, W)
    m = quad.samples_per_interval
    fn = _combined(V, W)

    sub_edges = u.times[:-1, None] + np.diff(u.times)[:, None] * np.concatenate(
        ([0.0], np.arange(1, m) / m, [1.0])
    )[None, :]
    # exact exp weights on each of the m sub-slices of every interval
    anti = np.exp(-lam * sub_edges) / lam
    weights = anti[:, :-1] - anti[:, 1:]

    pts, _ = interval_samples(u.times, u.nodes, m)
    vals = fn(pts / eps)
    value = float(np.sum(vals * weights))

    slopes = u.slopes
    kin_w = exp_interval_weights(u.times, lam)
    value += float(np.sum(np.sum(slopes * slopes, axis=1) * kin_w))

    tail_weight = float(np.exp(-lam * u.t1) / lam)
    end = u.nodes[-1][None, :]
    value += float(fn(end / eps)[0]) * tail_weight

    if W is not None and W.zero_atom != 0.0:
        value += W.zero_atom * _discounted_zero_measure(u, 0.0, lam)
        if np.all(u.nodes[-1] == 0.0):
            value += W.zero_atom * tail_weight
    return value


def homogenized_action(u: Trajectory, f_table, lam: Optional[float] = None) -> float:
    """Action of the effective Lagrangian: sum of f(slope) * interval weight.

    Piecewise-linear trajectories make this exact given the tabulated f: each
    interval contributes f(slope) times its width (or times the exact
    exponential weight when a discount rate is given, plus the constant-tail
    term f(0) * exp(-lam*t1)/lam). Slopes outside the table hull raise
    ExtrapolationError rather than clamping.
    """
    slopes = u.slopes
    vals = f_table.value(slopes)
    if lam is None:
        return float(np.sum(vals * u.widths))
    if abs(u.t0) > 1e-12:
        raise InputError("discounted actions start at t0 = 0")
    kin_w = exp_interval_weights(u.times, lam)
    value = float(np.sum(vals * kin_w))
    value += f_table.f0 * float(np.exp(-lam * u.t1) / lam)
    return value


# ---------------------------------------------------------------------------
# Zero set of a piecewise-linear path (exact)
# ---------------------------------------------------------------------------


def _zero_intervals(u: Trajectory, tol: float):
    """Subintervals where |u(t)| <= tol, solved exactly per linear piece."""
    out = []
    times, nodes = u.times, u.nodes
    for k in range(u.n_intervals):
        h = times[k + 1] - times[k]
        x = nodes[k]
        v = (nodes[k + 1] - nodes[k]) / h
        a = float(v @ v)
        b = 2.0 * float(x @ v)
        c = float(x @ x) - tol * tol
        if a == 0.0:
            if c <= 0.0:
                out.append((times[k], times[k + 1]))
            continue
        disc = b * b - 4 * a * c
        if disc < 0.0:
            continue
        root = np.sqrt(disc)
        lo = (-b - root) / (2 * a)
        hi = (-b + root) / (2 * a)
        lo, hi = max(lo, 0.0), min(hi, h)
        if hi > lo:
            out.append((times[k] + lo, times[k] + hi))
    return out


def zero_set_measure(u: Trajectory, tol: float = 0.0) -> float:
    """Lebesgue measure of {t : |u(t)| <= tol}, exact for linear pieces."""
    if tol < 0:
        raise InputError("tol must be >= 0")
    return float(sum(hi - lo for lo, hi in _zero_intervals(u, tol)))


def _discounted_zero_measure(u: Trajectory, tol: float, lam: float) -> float:
    return float(
        sum((np.exp(-lam * lo) - np.exp(-lam * hi)) / lam for lo, hi in _zero_intervals(u, tol))
    )


# ---------------------------------------------------------------------------
# Cusp connectors
# ---------------------------------------------------------------------------


def _full_frame(direction: np.ndarray) -> np.ndarray:
    """Orthogonal matrix whose first column is the given unit vector."""
    d = direction.shape[0]
    e1 = np.zeros(d)
    e1[0] = 1.0
    v = e1 - direction
    norm = np.linalg.norm(v)
    if norm < 1e-14:
        return np.eye(d)
    v = v / norm
    return np.eye(d) - 2.0 * np.outer(v, v)


def _cap_directions(dimension: int, count: int) -> np.ndarray:
    """Directions theta with theta_1 < -1/2 (local coordinates), midpoint grids."""
    if dimension == 2:
        phi = 2 * np.pi / 3 + (np.arange(count) + 0.5) / count * (2 * np.pi / 3)
        return np.stack([np.cos(phi), np.sin(phi)], axis=1)
    if dimension == 3:
        n_psi = max(2, int(np.ceil(np.sqrt(count / 2))))
        n_az = max(2, int(np.ceil(count / n_psi)))
        psi = (np.arange(n_psi) + 0.5) / n_psi * (np.pi / 3)
        az = (np.arange(n_az) + 0.5) / n_az * (2 * np.pi)
        thetas = []
        for ps in psi:
            for a in az:
                thetas.append([-np.cos(ps), np.sin(ps) * np.cos(a), np.sin(ps) * np.sin(a)])
        return np.asarray(thetas)
    raise InputError("connectors support dimension 2 or 3")


def connector_kinetic_bound(alpha: float, r: float) -> float:
    """Analytic kinetic budget 2*alpha^2/(2*alpha - 1) * r^{(2*alpha-1)/alpha}."""
    return 2 * alpha**2 / (2 * alpha - 1) * r ** ((2 * alpha - 1) / alpha)


def _graded_side(length: float, n_cells: int = 36, ratio: float = 0.75) -> np.ndarray:
    """Distances from a cusp: 0, then geometric growth up to `length`."""
    steps = length * ratio ** np.arange(n_cells - 1, -1, -1)
    out = np.concatenate(([0.0], steps))
    out[-1] = length
    return out


def build_connector(
    x0, y0, alpha: float, W: Perturbation, theta_samples: int = 32
) -> Trajectory:
    """Short curve joining x0 to y0 through a low-W corridor.

    The curve leaves both endpoints along cusps |s|^alpha in a direction theta
    chosen from the cap {theta_1 < -1/2} (local frame aligned with x0 - y0) by
    discrete minimization of the W line integral; the two cusp arcs meet on
    the mid-hyperplane. Its kinetic integral is bounded by
    connector_kinetic_bound(alpha, |x0-y0|) for every theta in the cap, with
    the piecewise-linear interpolant always at or below the analytic value.
    Requires 1/2 < alpha < p/d for the declared integrability exponent p.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    d = x0.shape[0]
    if y0.shape[0] != d or W.dimension != d:
        raise InputError("endpoint and perturbation dimensions disagree")
    if not alpha > 0.5:
        raise InputError("need alpha > 1/2")
    p = W.integrability_exponent
    if p is None:
        raise InputError("perturbation declares no integrability exponent")
    if not alpha < p / d:
        raise InputError(f"need alpha < p/d = {p / d}")
    r = float(np.linalg.norm(x0 - y0))
    if r == 0.0:
        raise InputError("endpoints coincide")

    frame = _full_frame((x0 - y0) / r)
    mid = 0.5 * (x0 + y0)
    half = r ** (1.0 / alpha)
    side = _graded_side(half)

    t_left = -half + side
    t_right = half - side[::-1]
    times = np.concatenate((t_left, [0.0], t_right[1:]))
    times = np.unique(times)

    thetas = _cap_directions(d, theta_samples)
    best = None
    for idx, theta in enumerate(thetas):
        t_theta = -1.0 / (2.0 * theta[0])
        theta_hat = theta.copy()
        theta_hat[0] = -theta[0]
        nodes_loc = np.empty((times.size, d))
        left = times <= 0.0
        prof_l = np.abs(times[left] + half) ** alpha
        nodes_loc[left] = (r / 2.0) * np.eye(d)[0] + prof_l[:, None] * (t_theta * theta)[None, :]
        right = ~left
        prof_r = np.abs(half - times[right]) ** alpha
        nodes_loc[right] = (
            -(r / 2.0) * np.eye(d)[0] + prof_r[:, None] * (t_theta * theta_hat)[None, :]
        )
        nodes = mid[None, :] + nodes_loc @ frame.T
        nodes[0] = x0
        nodes[-1] = y0
        w_val = potential_term(times, nodes, W.evaluator, 1.0, 4)
        if best is None or w_val < best[0]:
            best = (w_val, idx, nodes, theta)

    w_val, idx, nodes, theta = best
    traj = Trajectory(
        times,
        nodes,
        meta={
            "alpha": alpha,
            "r": r,
            "theta_local": theta.tolist(),
            "theta_index": idx,
            "w_integral": w_val,
            "kinetic_integral": 0.0,
            "kinetic_bound": connector_kinetic_bound(alpha, r),
        },
    )
    traj.meta["kinetic_integral"] = traj.kinetic_integral()
    if traj.meta["kinetic_integral"] > traj.meta["kinetic_bound"] * (1 + 1e-12):
        raise InvariantError("connector kinetic integral exceeded its analytic budget")
    return traj


# ---------------------------------------------------------------------------
# Polar integral bound
# ---------------------------------------------------------------------------


def _sphere_grid(dimension: int, resolution: int):
    """Midpoint quadrature nodes and weights on the unit sphere."""
    if dimension == 2:
        th = (np.arange(resolution) + 0.5) / resolution * 2 * np.pi
        pts = np.stack([np.cos(th), np.sin(th)], axis=1)
        wts = np.full(resolution, 2 * np.pi / resolution)
        return pts, wts
    if dimension == 3:
        n_ph = resolution
        n_th = 2 * resolution
        ph = (np.arange(n_ph) + 0.5) / n_ph * np.pi
        th = (np.arange(n_th) + 0.5) / n_th * 2 * np.pi
        P, T = np.meshgrid(ph, th, indexing="ij")
        pts = np.stack(
            [np.sin(P) * np.cos(T), np.sin(P) * np.sin(T), np.cos(P)], axis=-1
        ).reshape(-1, 3)
        wts = (np.sin(P) * (np.pi / n_ph) * (2 * np.pi / n_th)).reshape(-1)
        return pts, wts
    raise InputError("polar bound supports dimension 2 or 3")


SPHERE_MEASURE = {2: 2 * np.pi, 3: 4 * np.pi}


def polar_bound_check(W: Perturbation, alpha: float, r: float, quad: QuadratureSpec):
    """Certify the polar-coordinate bound linking cusp line integrals to L^p mass.

    lhs = integral over the unit sphere of integral_0^{r^{1/alpha}}
    W(t^alpha * theta) dt; rhs = alpha^{-1/p} * ((p-1)/(p-alpha*d) *
    |S^{d-1}|)^{1-1/p} * r^beta * (integral_{B_r} |W|^p)^{1/p} with beta =
    (p - alpha*d)/(alpha*p). The constant is the one produced by the Hoelder
    split with the change of variables rho = t^alpha (whose Jacobian
    contributes the alpha^{-1/p}). Requires 1 < alpha*d < p. Raises
    InvariantError if the certified inequality fails beyond quad.tolerance.
    """
    d = W.dimension
    p = W.integrability_exponent
    if p is None:
        raise InputError("perturbation declares no integrability exponent")
    if not (1.0 < alpha * d < p):
        raise InputError(f"need 1 < alpha*d < p, got alpha*d={alpha * d}, p={p}")
    if r <= 0:
        raise InputError("r must be positive")

    spi = quad.samples_per_interval
    sphere_pts, sphere_wts = _sphere_grid(d, max(256, 64 * spi) if d == 2 else max(64, 16 * spi))

    n_t = max(512, 128 * spi)
    half = r ** (1.0 / alpha)
    t = (np.arange(n_t) + 0.5) / n_t * half
    radial = t**alpha
    pts = radial[:, None, None] * sphere_pts[None, :, :]
    vals = W.evaluator(pts.reshape(-1, d)).reshape(n_t, -1)
    lhs = float(np.sum(vals * sphere_wts[None, :]) * (half / n_t))

    n_rho = max(512, 128 * spi)
    rho = (np.arange(n_rho) + 0.5) / n_rho * r
    pts = rho[:, None, None] * sphere_pts[None, :, :]
    vals = np.abs(W.evaluator(pts.reshape(-1, d)).reshape(n_rho, -1)) ** p
    lp_mass = float(np.sum(vals * sphere_wts[None, :] * rho[:, None] ** (d - 1)) * (r / n_rho))

    beta = (p - alpha * d) / (alpha * p)
    constant = alpha ** (-1.0 / p) * ((p - 1) / (p - alpha * d) * SPHERE_MEASURE[d]) ** (
        1.0 - 1.0 / p
    )
    rhs = constant * r**beta * lp_mass ** (1.0 / p)
    if lhs > rhs * (1.0 + quad.tolerance):
        raise InvariantError(
            f"polar bound violated: lhs={lhs:.6g} > rhs={rhs:.6g} beyond tolerance"
        )
    return lhs, rhs
