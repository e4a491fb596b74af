"""Direct minimization of discrete actions, plus dynamic-programming oracles.

Two independent routes to the same minima live here, on purpose:

* projected gradient descent with Armijo backtracking over trajectory nodes
  (multi-start, deterministic seeding, boundary nodes pinned exactly), and
* backward dynamic programming over a state-time lattice, an anytime upper
  bound for d = 1 that never sees the optimizer's code paths.

Optimizer results carry certified-upper-bound semantics: every reported value
is the action of a concrete trajectory, re-evaluated through the trajectory
module and required to agree with the optimizer's internal objective to 1e-10.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InputError, InvariantError, SolverError
from .potentials import GeneralLagrangian, PeriodicPotential, Perturbation
from .quadrature import QuadratureSpec, midpoint_offsets
from .trajectory import Trajectory, action_G, discounted_action

__all__ = [
    "OptimizerSpec",
    "DPGrid",
    "minimize_bvp",
    "minimize_bvp_batch",
    "minimize_lagrangian_bvp",
    "minimize_halfline",
    "dp_oracle_1d",
    "dp_oracle_halfline",
]


@dataclass(frozen=True)
class OptimizerSpec:
    max_iters: int = 400
    step_init: float = 0.1
    armijo_c: float = 1e-4
    grad_tol: float = 1e-8
    restarts: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise InputError("max_iters must be >= 1")
        if not self.step_init > 0:
            raise InputError("step_init must be positive")
        if not 0 < self.armijo_c < 1:
            raise InputError("armijo_c must lie in (0, 1)")
        if not self.grad_tol > 0:
            raise InputError("grad_tol must be positive")
        if self.restarts < 0:
            raise InputError("restarts must be >= 0")


@dataclass(frozen=True)
class DPGrid:
    x_lo: float
    x_hi: float
    n_x: int = 401
    n_t: int = 51

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise InputError("need x_lo < x_hi")
        if self.n_x < 2 or self.n_t < 2:
            raise InputError("need n_x >= 2 and n_t >= 2")

    def states(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.n_x)

    def refined(self) -> "DPGrid":
        return DPGrid(self.x_lo, self.x_hi, 2 * self.n_x - 1, 2 * self.n_t - 1)


# ---------------------------------------------------------------------------
# Batched projected gradient descent with Armijo backtracking
# ---------------------------------------------------------------------------


def _descend(nodes0: np.ndarray, value_fn, grad_fn, free: np.ndarray, spec: OptimizerSpec):
    """Monotone descent on a batch of node arrays; pinned nodes never move.

    value_fn(batch) -> (B,); grad_fn(batch) -> ((B,), (B, N, d)) with the
    gradient already zeroed on pinned nodes. Each batch element carries its
    own step size: accepted steps grow it, rejections halve it and retry.
    """
    x = np.array(nodes0, dtype=float)
    vals, grads = grad_fn(x)
    if not np.all(np.isfinite(vals)):
        raise SolverError("objective not finite at a start trajectory")
    gnorm2 = np.sum(grads * grads, axis=(1, 2))
    step = np.full(x.shape[0], spec.step_init)
    active = (gnorm2 > spec.grad_tol**2) & (step > 1e-16)
    iters = 0
    for _ in range(spec.max_iters):
        if not np.any(active):
            break
        iters += 1
        idx = np.flatnonzero(active)
        cand = x[idx] - step[idx, None, None] * grads[idx]
        cand_vals = value_fn(cand)
        accept = cand_vals <= vals[idx] - spec.armijo_c * step[idx] * gnorm2[idx]
        accept &= np.isfinite(cand_vals)
        acc = idx[accept]
        rej = idx[~accept]
        if acc.size:
            x[acc] = cand[accept]
            new_vals, new_grads = grad_fn(x[acc])
            vals[acc] = new_vals
            grads[acc] = new_grads
            gnorm2[acc] = np.sum(new_grads * new_grads, axis=(1, 2))
            step[acc] *= 1.5
        step[rej] *= 0.5
        active[idx] = (gnorm2[idx] > spec.grad_tol**2) & (step[idx] > 1e-16)
    if not np.all(np.isfinite(vals)):
        raise SolverError("descent produced non-finite action values")
    _ = free
    return x, vals, iters


def _fourier_bump(rng, n_free: int, dim: int, scale: float) -> np.ndarray:
    """Smooth random interior displacement vanishing at both ends."""
    tau = np.linspace(0.0, 1.0, n_free + 2)[1:-1]
    out = np.zeros((n_free, dim))
    for j in range(1, 5):
        coeff = rng.normal(0.0, scale / j, size=dim)
        out += np.sin(j * np.pi * tau)[:, None] * coeff[None, :]
    return out


def _start_stack(times, a, b, warm_starts, restarts, seed, scale):
    """Affine start, resampled warm starts, and seeded random perturbations."""
    n = times.size
    d = a.shape[0]
    lam = (times - times[0]) / (times[-1] - times[0])
    affine = a[None, :] * (1 - lam[:, None]) + b[None, :] * lam[:, None]
    starts = [affine]
    for w in warm_starts:
        resampled = w.resample(times).nodes.copy()
        resampled[0] = a
        resampled[-1] = b
        starts.append(resampled)
    for k in range(restarts):
        rng = np.random.default_rng(np.random.SeedSequence((seed, k, n)))
        bumped = affine.copy()
        bumped[1:-1] += _fourier_bump(rng, n - 2, d, scale)
        starts.append(bumped)
    return np.stack(starts, axis=0)


def _combined_eval(V, W):
    if V is not None and W is not None:
        return (
            lambda y: V.evaluator(y) + W.evaluator(y),
            lambda y: _grad_of(V, y) + _grad_of(W, y),
        )
    obj = V if V is not None else W
    if obj is None:
        return (lambda y: np.zeros(y.shape[:-1]), lambda y: np.zeros_like(y))
    return (obj.evaluator, lambda y: _grad_of(obj, y))


def _grad_of(obj, y):
    if obj.gradient is not None:
        return obj.gradient(y)
    shape = y.shape
    flat = y.reshape(-1, shape[-1])
    from .potentials import _fd_gradient

    return _fd_gradient(obj.evaluator, flat).reshape(shape)


def _eps_action_objective(times, V, W, eps, m, free_slice):
    """Objective/gradient closures for integral of |u'|^2 + (V+W)(u/eps)."""
    widths = np.diff(times)
    lam = midpoint_offsets(m)
    f_eval, f_grad = _combined_eval(V, W)

    def value_fn(batch):
        diffs = batch[:, 1:] - batch[:, :-1]
        kinetic = np.sum(np.sum(diffs * diffs, axis=2) / widths[None, :], axis=1)
        pts = (
            batch[:, :-1, None, :] * (1 - lam)[None, None, :, None]
            + batch[:, 1:, None, :] * lam[None, None, :, None]
        )
        vals = f_eval(pts / eps)
        pot = np.sum(np.sum(vals, axis=2) * (widths / m)[None, :], axis=1)
        return kinetic + pot

    def grad_fn(batch):
        diffs = batch[:, 1:] - batch[:, :-1]
        slopes = diffs / widths[None, :, None]
        kinetic = np.sum(np.sum(diffs * diffs, axis=2) / widths[None, :], axis=1)
        pts = (
            batch[:, :-1, None, :] * (1 - lam)[None, None, :, None]
            + batch[:, 1:, None, :] * lam[None, None, :, None]
        )
        vals = f_eval(pts / eps)
        pot = np.sum(np.sum(vals, axis=2) * (widths / m)[None, :], axis=1)
        dpts = f_grad(pts / eps) / eps
        w_left = ((1 - lam) / m)[None, None, :, None] * widths[None, :, None, None]
        w_right = (lam / m)[None, None, :, None] * widths[None, :, None, None]
        grad = np.zeros_like(batch)
        grad[:, :-1] += np.sum(dpts * w_left, axis=2) - 2 * slopes
        grad[:, 1:] += np.sum(dpts * w_right, axis=2) + 2 * slopes
        grad[:, ~free_slice] = 0.0
        return kinetic + pot, grad

    return value_fn, grad_fn


def minimize_bvp(
    V: Optional[PeriodicPotential],
    W: Optional[Perturbation],
    eps: float,
    t0: float,
    t1: float,
    a,
    b,
    n_nodes: int,
    opt: OptimizerSpec,
    quad: QuadratureSpec = QuadratureSpec(),
    warm_starts: Sequence[Trajectory] = (),
):
    """Minimize the eps-action over paths with u(t0) = a, u(t1) = b pinned.

    Returns (trajectory, value); the value is re-evaluated through the
    trajectory module and certified against the internal objective to 1e-10.
    """
    if V is None:
        raise InputError("a periodic potential is required (use the zero potential)")
    if W is not None and W.zero_atom != 0.0:
        raise InputError("perturbations with a zero atom are handled by the DP oracles")
    if n_nodes < 2:
        raise InputError("need at least two nodes")
    if not t1 > t0:
        raise InputError("need t1 > t0")
    if not eps > 0:
        raise InputError("eps must be positive")
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    times = np.linspace(t0, t1, n_nodes)
    free = np.ones(n_nodes, dtype=bool)
    free[0] = free[-1] = False
    scale = 0.25 * (float(np.linalg.norm(b - a)) + 1.0)
    starts = _start_stack(times, a, b, warm_starts, opt.restarts, opt.seed, scale)
    value_fn, grad_fn = _eps_action_objective(times, V, W, eps, quad.samples_per_interval, free)
    final, vals, _ = _descend(starts, value_fn, grad_fn, free, opt)
    best = int(np.argmin(vals))
    traj = Trajectory(times, final[best])
    check = action_G(traj, V, W, eps, quad)
    if abs(check - vals[best]) > 1e-10 * max(1.0, abs(check)):
        raise InvariantError(
            f"optimizer objective {vals[best]!r} and trajectory action {check!r} disagree"
        )
    return traj, check


def minimize_bvp_batch(
    V: PeriodicPotential,
    W: Optional[Perturbation],
    eps: float,
    t0: float,
    t1: float,
    a_batch: np.ndarray,
    b,
    n_nodes: int,
    opt: OptimizerSpec,
    quad: QuadratureSpec = QuadratureSpec(),
    warm_starts_per_problem: Optional[Sequence[Sequence[Trajectory]]] = None,
):
    """minimize_bvp for many start points a sharing (t0, t1, b).

    All problems and their restarts descend inside one batch. Per-problem
    warm starts (same count for every problem) are resampled onto the shared
    time grid with endpoints re-pinned. Returns (values (B,), nodes
    (B, n_nodes, d), times).
    """
    if W is not None and W.zero_atom != 0.0:
        raise InputError("perturbations with a zero atom are handled by the DP oracles")
    if not t1 > t0:
        raise InputError("need t1 > t0")
    if not eps > 0:
        raise InputError("eps must be positive")
    a_batch = np.asarray(a_batch, dtype=float)
    if a_batch.ndim == 1:
        a_batch = a_batch[:, None]
    b = np.atleast_1d(np.asarray(b, dtype=float))
    n_problems = a_batch.shape[0]
    times = np.linspace(t0, t1, n_nodes)
    free = np.ones(n_nodes, dtype=bool)
    free[0] = free[-1] = False

    if warm_starts_per_problem is None:
        warm_starts_per_problem = [()] * n_problems
    if len(warm_starts_per_problem) != n_problems:
        raise InputError("need one warm-start list per problem")
    counts = {len(w) for w in warm_starts_per_problem}
    if len(counts) > 1:
        raise InputError("every problem must receive the same number of warm starts")

    stacks = []
    for a, warm in zip(a_batch, warm_starts_per_problem):
        scale = 0.25 * (float(np.linalg.norm(b - a)) + 1.0)
        stacks.append(_start_stack(times, a, b, warm, opt.restarts, opt.seed, scale))
    n_starts = stacks[0].shape[0]
    batch = np.concatenate(stacks, axis=0)

    value_fn, grad_fn = _eps_action_objective(times, V, W, eps, quad.samples_per_interval, free)
    final, vals, _ = _descend(batch, value_fn, grad_fn, free, opt)
    vals = vals.reshape(n_problems, n_starts)
    final = final.reshape(n_problems, n_starts, n_nodes, -1)
    pick = np.argmin(vals, axis=1)
    best_nodes = final[np.arange(n_problems), pick]
    best_vals = vals[np.arange(n_problems), pick]
    return best_vals, best_nodes, times


def _lagrangian_objective(times, L: GeneralLagrangian, m, free_slice):
    widths = np.diff(times)
    lam = midpoint_offsets(m)

    def _samples(batch):
        pts = (
            batch[:, :-1, None, :] * (1 - lam)[None, None, :, None]
            + batch[:, 1:, None, :] * lam[None, None, :, None]
        )
        slopes = (batch[:, 1:] - batch[:, :-1]) / widths[None, :, None]
        return pts, np.broadcast_to(slopes[:, :, None, :], pts.shape)

    def value_fn(batch):
        pts, vel = _samples(batch)
        vals = L.evaluator(pts, vel)
        return np.sum(np.sum(vals, axis=2) * (widths / m)[None, :], axis=1)

    def grad_fn(batch):
        pts, vel = _samples(batch)
        vals = L.evaluator(pts, vel)
        value = np.sum(np.sum(vals, axis=2) * (widths / m)[None, :], axis=1)
        gx = _lagrangian_grad_x(L, pts, vel)
        gxi = _lagrangian_grad_xi(L, pts, vel)
        w_left = ((1 - lam) / m)[None, None, :, None] * widths[None, :, None, None]
        w_right = (lam / m)[None, None, :, None] * widths[None, :, None, None]
        grad = np.zeros_like(batch)
        grad[:, :-1] += np.sum(gx * w_left - gxi / m, axis=2)
        grad[:, 1:] += np.sum(gx * w_right + gxi / m, axis=2)
        grad[:, ~free_slice] = 0.0
        return value, grad

    return value_fn, grad_fn


def _lagrangian_grad_x(L, pts, vel, h: float = 1e-6):
    if L.grad_x is not None:
        return L.grad_x(pts, vel)
    grad = np.empty_like(pts)
    for axis in range(pts.shape[-1]):
        plus, minus = pts.copy(), pts.copy()
        plus[..., axis] += h
        minus[..., axis] -= h
        grad[..., axis] = (L.evaluator(plus, vel) - L.evaluator(minus, vel)) / (2 * h)
    return grad


def _lagrangian_grad_xi(L, pts, vel, h: float = 1e-6):
    if L.grad_xi is not None:
        return L.grad_xi(pts, vel)
    grad = np.empty_like(vel)
    vel = np.ascontiguousarray(vel)
    for axis in range(vel.shape[-1]):
        plus, minus = vel.copy(), vel.copy()
        plus[..., axis] += h
        minus[..., axis] -= h
        grad[..., axis] = (L.evaluator(pts, plus) - L.evaluator(pts, minus)) / (2 * h)
    return grad


def minimize_lagrangian_bvp(
    L: GeneralLagrangian,
    t0: float,
    t1: float,
    a,
    b,
    n_nodes: int,
    opt: OptimizerSpec,
    quad: QuadratureSpec = QuadratureSpec(),
    warm_starts: Sequence[Trajectory] = (),
):
    """Minimize integral of L(u, u') with pinned endpoints; general Lagrangians."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    times = np.linspace(t0, t1, n_nodes)
    free = np.ones(n_nodes, dtype=bool)
    free[0] = free[-1] = False
    scale = 0.25 * (float(np.linalg.norm(b - a)) + 1.0)
    starts = _start_stack(times, a, b, warm_starts, opt.restarts, opt.seed, scale)
    value_fn, grad_fn = _lagrangian_objective(times, L, quad.samples_per_interval, free)
    final, vals, _ = _descend(starts, value_fn, grad_fn, free, opt)
    best = int(np.argmin(vals))
    traj = Trajectory(times, final[best])
    check = float(value_fn(final[best][None])[0])
    if abs(check - vals[best]) > 1e-10 * max(1.0, abs(check)):
        raise InvariantError("lagrangian objective re-evaluation mismatch")
    return traj, check


def minimize_halfline(
    V: PeriodicPotential,
    W: Optional[Perturbation],
    eps: float,
    lam: float,
    x0,
    T_max: float,
    n_nodes: int,
    opt: OptimizerSpec,
    quad: QuadratureSpec = QuadratureSpec(),
):
    """Minimize the discounted action over paths leaving x0, free far end.

    The path is truncated at T_max (must be >= 5/lam so the neglected tail of
    a bounded integrand is below exp(-5)/lam of its sup) and extended by a
    constant, whose exact tail cost is part of the objective. Warm starts:
    the constant path and dash-then-park moves to nearby low-potential points.
    """
    if W is not None and W.zero_atom != 0.0:
        raise InputError("perturbations with a zero atom are handled by the DP oracles")
    if not lam > 0:
        raise InputError("lam must be positive")
    if T_max < 5.0 / lam:
        raise InputError("T_max must be at least 5/lam")
    if not eps > 0:
        raise InputError("eps must be positive")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    d = x0.shape[0]
    times = np.linspace(0.0, T_max, n_nodes)
    free = np.ones(n_nodes, dtype=bool)
    free[0] = False
    m = quad.samples_per_interval
    f_eval, f_grad = _combined_eval(V, W)

    widths = np.diff(times)
    offs = midpoint_offsets(m)
    sub_edges = times[:-1, None] + widths[:, None] * np.concatenate(
        ([0.0], np.arange(1, m) / m, [1.0])
    )[None, :]
    anti = np.exp(-lam * sub_edges) / lam
    sub_w = anti[:, :-1] - anti[:, 1:]
    kin_w = np.exp(-lam * times) / lam
    kin_w = kin_w[:-1] - kin_w[1:]
    tail_w = float(np.exp(-lam * T_max) / lam)

    def value_fn(batch):
        diffs = batch[:, 1:] - batch[:, :-1]
        slopes2 = np.sum(diffs * diffs, axis=2) / widths[None, :] ** 2
        kinetic = np.sum(slopes2 * kin_w[None, :], axis=1)
        pts = (
            batch[:, :-1, None, :] * (1 - offs)[None, None, :, None]
            + batch[:, 1:, None, :] * offs[None, None, :, None]
        )
        pot = np.sum(f_eval(pts / eps) * sub_w[None, :, :], axis=(1, 2))
        tail = f_eval(batch[:, -1, :] / eps) * tail_w
        return kinetic + pot + tail

    def grad_fn(batch):
        diffs = batch[:, 1:] - batch[:, :-1]
        slopes = diffs / widths[None, :, None]
        slopes2 = np.sum(diffs * diffs, axis=2) / widths[None, :] ** 2
        kinetic = np.sum(slopes2 * kin_w[None, :], axis=1)
        pts = (
            batch[:, :-1, None, :] * (1 - offs)[None, None, :, None]
            + batch[:, 1:, None, :] * offs[None, None, :, None]
        )
        vals = f_eval(pts / eps)
        pot = np.sum(vals * sub_w[None, :, :], axis=(1, 2))
        tail_vals = f_eval(batch[:, -1, :] / eps)
        value = kinetic + pot + tail_vals * tail_w

        dpts = f_grad(pts / eps) / eps
        grad = np.zeros_like(batch)
        grad[:, :-1] += np.sum(dpts * ((1 - offs)[None, None, :, None] * sub_w[None, :, :, None]), axis=2)
        grad[:, 1:] += np.sum(dpts * (offs[None, None, :, None] * sub_w[None, :, :, None]), axis=2)
        kin_g = 2 * slopes * (kin_w / widths)[None, :, None]
        grad[:, :-1] -= kin_g
        grad[:, 1:] += kin_g
        grad[:, -1] += f_grad(batch[:, -1, :] / eps) / eps * tail_w
        grad[:, ~free] = 0.0
        return value, grad

    starts = [np.repeat(x0[None, :], n_nodes, axis=0)]
    for target in _park_candidates(V, W, eps, x0):
        path = np.repeat(target[None, :], n_nodes, axis=0)
        dash = max(2, int(0.05 * n_nodes))
        frac = np.linspace(0.0, 1.0, dash)[:, None]
        path[:dash] = x0[None, :] * (1 - frac) + target[None, :] * frac
        starts.append(path)
    for k in range(opt.restarts):
        rng = np.random.default_rng(np.random.SeedSequence((opt.seed, k, n_nodes)))
        bumped = starts[0].copy()
        bumped[1:-1] += _fourier_bump(rng, n_nodes - 2, d, 0.25)
        bumped[-1] += rng.normal(0.0, 0.25, size=d)
        starts.append(bumped)
    batch = np.stack(starts, axis=0)

    final, vals, _ = _descend(batch, value_fn, grad_fn, free, opt)
    best = int(np.argmin(vals))
    traj = Trajectory(times, final[best], meta={"tail_weight": tail_w})
    check = discounted_action(traj, V, W, eps, lam, quad)
    if abs(check - vals[best]) > 1e-10 * max(1.0, abs(check)):
        raise InvariantError(
            f"optimizer objective {vals[best]!r} and discounted action {check!r} disagree"
        )
    return traj, check


def _park_candidates(V, W, eps, x0, count: int = 3):
    """Nearby points with small (V+W)(y/eps): targets for dash-then-park starts."""
    d = x0.shape[0]
    offsets = np.arange(-2, 3)
    mesh = np.meshgrid(*([offsets] * d), indexing="ij")
    shifts = np.stack([g.ravel() for g in mesh], axis=-1)
    anchors = eps * np.round(x0 / eps)[None, :] + eps * shifts
    f_eval, _ = _combined_eval(V, W)
    costs = f_eval(anchors / eps)
    order = np.argsort(costs, kind="stable")[:count]
    return [anchors[i] for i in order]


# ---------------------------------------------------------------------------
# Dynamic-programming oracles (d = 1)
# ---------------------------------------------------------------------------


def _lattice_moves(slope_set, h: float, dx: float, n_x: int):
    """Realizable integer state moves and their exact slopes."""
    ks = np.unique(np.round(np.asarray(slope_set, dtype=float) * h / dx).astype(int))
    ks = ks[np.abs(ks) < n_x]
    if ks.size == 0:
        raise InputError("slope_set produces no admissible lattice moves")
    return ks, ks * dx / h


def _default_slope_set(slope_bc: float, count: int = 41):
    span = 4.0 * abs(slope_bc) + 2.0
    return np.linspace(-span, span, count)


def _stage_costs(V, W, eps, states):
    cost = V.evaluator(states[:, None] / eps)
    if W is not None:
        cost = cost + W.evaluator(states[:, None] / eps)
    return cost


def dp_oracle_1d(
    V: PeriodicPotential,
    W: Optional[Perturbation],
    eps: float,
    t0: float,
    t1: float,
    a: float,
    b: float,
    grid: DPGrid,
    slope_set=None,
) -> float:
    """Exact minimum of the discrete eps-action over lattice paths.

    States live on the grid, admissible moves are the lattice-realizable
    slopes derived from slope_set, and each step costs h * (slope^2 +
    (V+W)(x/eps)) at the source state. Endpoints are pinned to the nearest
    grid states. A zero_atom on W is charged exactly for steps that stay at
    the state 0 (present on the grid whenever the range is symmetric with an
    odd state count).
    """
    if not t1 > t0:
        raise InputError("need t1 > t0")
    states = grid.states()
    if not (grid.x_lo <= a <= grid.x_hi and grid.x_lo <= b <= grid.x_hi):
        raise InputError("boundary values must lie inside the DP state range")
    dx = states[1] - states[0]
    h = (t1 - t0) / (grid.n_t - 1)
    if slope_set is None:
        slope_set = _default_slope_set((b - a) / (t1 - t0))
    moves, slopes = _lattice_moves(slope_set, h, dx, grid.n_x)

    cost = _stage_costs(V, W, eps, states)
    atom = W.zero_atom if W is not None else 0.0
    zero_idx = np.flatnonzero(states == 0.0)

    value = np.full(grid.n_x, np.inf)
    value[int(np.argmin(np.abs(states - b)))] = 0.0
    stay_bonus = np.zeros(grid.n_x)
    if atom != 0.0 and zero_idx.size:
        stay_bonus[zero_idx] = atom

    for _ in range(grid.n_t - 1):
        best = np.full(grid.n_x, np.inf)
        for k, s in zip(moves, slopes):
            src_lo = max(0, -k)
            src_hi = grid.n_x - max(0, k)
            if src_hi <= src_lo:
                continue
            stage = h * (s * s + cost[src_lo:src_hi])
            if k == 0 and atom != 0.0:
                stage = stage + h * stay_bonus[src_lo:src_hi]
            cand = stage + value[src_lo + k : src_hi + k]
            np.minimum(best[src_lo:src_hi], cand, out=best[src_lo:src_hi])
        value = best

    result = value[int(np.argmin(np.abs(states - a)))]
    if not np.isfinite(result):
        raise SolverError("DP could not connect the boundary states with the given slopes")
    return float(result)


def dp_oracle_halfline(
    V: PeriodicPotential,
    W: Optional[Perturbation],
    eps: float,
    lam: float,
    x0: float,
    T_max: float,
    grid: DPGrid,
    slope_set=None,
) -> float:
    """Discounted DP oracle on [0, T_max] with constant extension past T_max.

    Stage weights are the exact integrals of exp(-lam*t) over each time slice,
    and the terminal value is the exact tail of sitting at the final state.
    """
    if not lam > 0:
        raise InputError("lam must be positive")
    states = grid.states()
    if not grid.x_lo <= x0 <= grid.x_hi:
        raise InputError("x0 must lie inside the DP state range")
    dx = states[1] - states[0]
    h = T_max / (grid.n_t - 1)
    if slope_set is None:
        slope_set = _default_slope_set(0.0)
    moves, slopes = _lattice_moves(slope_set, h, dx, grid.n_x)

    cost = _stage_costs(V, W, eps, states)
    atom = W.zero_atom if W is not None else 0.0
    atom_cost = np.zeros(grid.n_x)
    if atom != 0.0:
        atom_cost[states == 0.0] = atom

    times = np.linspace(0.0, T_max, grid.n_t)
    anti = np.exp(-lam * times) / lam
    weights = anti[:-1] - anti[1:]

    value = (cost + atom_cost) * (np.exp(-lam * T_max) / lam)
    for step in range(grid.n_t - 2, -1, -1):
        w = weights[step]
        best = np.full(grid.n_x, np.inf)
        for k, s in zip(moves, slopes):
            src_lo = max(0, -k)
            src_hi = grid.n_x - max(0, k)
            if src_hi <= src_lo:
                continue
            stage = w * (s * s + cost[src_lo:src_hi])
            if k == 0 and atom != 0.0:
                stage = stage + w * atom_cost[src_lo:src_hi]
            cand = stage + value[src_lo + k : src_hi + k]
            np.minimum(best[src_lo:src_hi], cand, out=best[src_lo:src_hi])
        value = best

    result = value[int(np.argmin(np.abs(states - x0)))]
    if not np.isfinite(result):
        raise SolverError("discounted DP found no admissible path")
    return float(result)
