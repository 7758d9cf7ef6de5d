"""Markov-chain load models for both access procedures and the pool optimizer.

Each procedure is modeled as a per-device renewal chain over the states
``connected``, ``inactive``, and ``(attempt m, step n)``. Solving a chain
yields the stationary state probabilities, the mean holding time, the
expected signaling load per device per ms, and the access-failure
probability. The four-step chain couples to itself through the collision
probability (more transmissions cause more collisions cause more
retransmissions), solved as a one-dimensional fixed point. The optimizer
sweeps the split of the shared preamble pool between the two procedures and
minimizes the total signaling load subject to a failure-probability cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaln


class SolverError(RuntimeError):
    """The fixed-point solve did not reach the required residual."""


class InfeasibleError(RuntimeError):
    """No preamble split satisfies the failure-probability constraint."""


@dataclass(frozen=True)
class FourStepParams:
    """Per-device model inputs for the four-step procedure."""

    n_ue: int                    # devices sharing the four-step pool
    rate_per_ms: float           # per-device packet rate (1/ms)
    n_cb: int                    # preambles in the four-step pool
    max_attempts: int = 10
    t_tti_ms: float = 0.5
    t_up_ms: float = 3.0
    t_inactive_ms: float = 5.0
    rar_window_ms: float = 2.5
    backoff_avg_ms: float = 5.0
    conres_timer_ms: float = 24.0
    p2: float = 1.0              # success of the response step
    p4: float = 1.0              # success of the setup step

    def __post_init__(self) -> None:
        if self.n_ue < 1:
            raise ValueError("n_ue must be >= 1")
        if self.rate_per_ms <= 0:
            raise ValueError("rate_per_ms must be > 0")
        if self.n_cb < 1:
            raise ValueError("n_cb must be >= 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        for name in ("t_tti_ms", "t_up_ms", "t_inactive_ms", "rar_window_ms",
                     "backoff_avg_ms", "conres_timer_ms"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("p2", "p4"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


@dataclass(frozen=True)
class TwoStepParams:
    """Per-device model inputs for the two-step procedure (event devices)."""

    n_ue: int                    # all two-step devices
    n_event: int                 # event-traffic devices among them
    rate_per_ms: float           # per event device (1/ms)
    t_p: int = 3
    n_cr: int = 4
    max_attempts: int = 10
    t_tti_ms: float = 0.5
    t_up_ms: float = 3.0
    t_inactive_ms: float = 5.0
    rar_window_ms: float = 2.5
    p2: float = 1.0

    def __post_init__(self) -> None:
        if self.n_ue < 0 or self.n_event < 0:
            raise ValueError("device counts must be >= 0")
        if self.n_event > self.n_ue:
            raise ValueError("n_event must not exceed n_ue")
        if self.rate_per_ms <= 0:
            raise ValueError("rate_per_ms must be > 0")
        if self.t_p not in (1, 2, 3):
            raise ValueError("t_p must be in {1, 2, 3}")
        if self.n_event > 0 and self.n_cr < 2:
            raise ValueError("n_cr must be >= 2 when event devices exist "
                             "(one preamble is reserved for periodic devices)")
        if self.n_cr < 0:
            raise ValueError("n_cr must be >= 0")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    @property
    def t_p_eff(self) -> float:
        """Mean slots between consecutive allowed slots of one class."""
        return 10.0 / 3.0 if self.t_p == 3 else float(self.t_p)

    @property
    def slot_avg(self) -> float:
        """Mean slots between packets of one event device."""
        return 1.0 / (self.rate_per_ms * self.t_tti_ms)

    @property
    def n_rar(self) -> float:
        """Mean devices per (preamble, offset) cell, at least one."""
        if self.n_event <= 0:
            return 1.0
        return max(self.n_event / (self.t_p * (self.n_cr - 1)), 1.0)


@dataclass(frozen=True)
class StationarySolution:
    """Solved chain: stationary probabilities, holding times, load."""

    procedure: str               # "fourstep" or "twostep"
    pi_connected: float
    pi_inactive: float
    pi: np.ndarray               # (max_attempts, steps); steps = 4 or 2
    detect: np.ndarray           # per-attempt preamble detection probability
    p_steps: tuple[float, ...]   # success of steps 2.. (p2, p3, p4) or (p2,)
    holding_connected: float
    holding_inactive: float
    holding: np.ndarray          # (max_attempts, steps), ms
    t_tot: float                 # mean holding time over all states, ms
    tau: float                   # detected-preamble transmissions per slot
    rho_col: float | None        # four-step only
    residual: float | None       # |fixed point residual|, four-step only

    def __post_init__(self) -> None:
        total = self.pi_connected + self.pi_inactive + float(self.pi.sum())
        if not math.isclose(total, 1.0, abs_tol=1e-9):
            raise ValueError(f"stationary probabilities sum to {total}, not 1")
        values = np.concatenate(
            ([self.pi_connected, self.pi_inactive], self.pi.ravel())
        )
        if (values < -1e-15).any() or (values > 1 + 1e-12).any():
            raise ValueError("stationary probabilities outside [0, 1]")
        if (self.holding <= 0).any() or self.holding_connected <= 0 \
                or self.holding_inactive <= 0 or self.t_tot <= 0:
            raise ValueError("holding times must be > 0")

    @property
    def total_probability(self) -> float:
        return self.pi_connected + self.pi_inactive + float(self.pi.sum())


def preamble_detection_prob(m: int) -> float:
    """Detection probability of the m-th preamble of one device."""
    if m < 1:
        raise ValueError("attempt index m must be >= 1")
    return 1.0 - math.exp(-float(m))


def collision_probability(tau: float, n_ue: int, n_cb: int) -> float:
    """Probability that >= 1 of the other ``n_ue - 1`` devices lands a
    detected transmission on the same preamble in the same slot.

    Evaluated as the explicit binomial tail with log-gamma coefficients so
    device counts up to 1e5 stay finite.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must be in [0, 1]")
    if n_ue < 1 or n_cb < 1:
        raise ValueError("n_ue and n_cb must be >= 1")
    n = n_ue - 1
    q = tau / n_cb
    # branch on q, not tau: subnormal tau can underflow to q == 0.0
    if n == 0 or q == 0.0:
        return 0.0
    if q >= 1.0:
        return 1.0
    k = np.arange(1, n + 1, dtype=np.float64)
    log_terms = (
        gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
        + k * math.log(q) + (n - k) * math.log1p(-q)
    )
    return float(min(1.0, np.exp(log_terms).sum()))


def _fourstep_chain(params: FourStepParams, rho_col: float):
    """Chain quantities for a fixed collision probability.

    Returns (tau, components) where components hold everything needed to
    assemble a StationarySolution once the fixed point converged.
    """
    M = params.max_attempts
    lam = params.rate_per_ms
    t_tti = params.t_tti_ms
    p2, p4 = params.p2, params.p4
    p3 = 1.0 - rho_col

    m = np.arange(1, M + 1, dtype=np.float64)
    pm1 = 1.0 - np.exp(-m)

    p_conn = 1.0 - math.exp(-lam * (params.t_up_ms + params.t_inactive_ms))
    p_idle = math.exp(-lam * t_tti)

    # f[m] is the unnormalized probability of the preamble state of attempt
    # m + 1, with the inactive state fixed at weight 1.
    fail = (1 - pm1) + pm1 * (1 - p2) + pm1 * p2 * (1 - p3) + pm1 * p2 * p3 * (1 - p4)
    f = np.empty(M)
    f[0] = 1.0 - p_idle
    for i in range(1, M):
        f[i] = f[i - 1] * fail[i - 1]
    pi2 = pm1 * f
    pi3 = p2 * pi2
    pi4 = p3 * pi3
    x_conn = p4 * pi4.sum() / (1.0 - p_conn)
    total = x_conn + 1.0 + (f + pi2 + pi3 + pi4).sum()

    hold_conn = (1.0 - math.exp(-lam * (params.t_up_ms + params.t_inactive_ms))) / lam
    hold_idle = t_tti
    w, bw, wres = params.rar_window_ms, params.backoff_avg_ms, params.conres_timer_ms
    h1 = t_tti * pm1 + (t_tti + w + bw) * (1 - pm1)
    h2 = np.full(M, 1.5 * p2 + (w + bw) * (1 - p2))
    h3 = np.full(M, 1.75 * p3 + (1.75 + wres + bw) * (1 - p3))
    h4 = np.full(M, 4.5 * p4 + (wres + bw) * (1 - p4))
    t_tot = (
        x_conn * hold_conn + hold_idle
        + (f * h1).sum() + (pi2 * h2).sum() + (pi3 * h3).sum() + (pi4 * h4).sum()
    ) / total

    tau = float((f * pm1).sum() * t_tti / (total * t_tot))
    components = {
        "x_conn": x_conn, "total": total, "f": f,
        "pi2": pi2, "pi3": pi3, "pi4": pi4, "pm1": pm1,
        "hold_conn": hold_conn, "hold_idle": hold_idle,
        "h": (h1, h2, h3, h4), "t_tot": t_tot,
        "p_steps": (p2, p3, p4),
    }
    return tau, components


def solve_fourstep(params: FourStepParams, residual_tol: float = 1e-10) -> StationarySolution:
    """Solve the four-step chain coupled with the collision fixed point.

    Root-finds h(tau) = rhs(tau) - tau by bisection after a sign check,
    falling back to damped fixed-point iteration when no bracket exists.
    """

    def h(tau: float) -> float:
        rho = collision_probability(tau, params.n_ue, params.n_cb)
        return _fourstep_chain(params, rho)[0] - tau

    eps = 1e-12
    a, b = eps, 1.0 - eps
    ha, hb = h(a), h(b)
    tau = None
    if ha == 0.0:
        tau = a
    elif hb == 0.0:
        tau = b
    elif ha * hb < 0:
        lo, hi = a, b
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            hm = h(mid)
            if hm == 0.0 or (hi - lo) < 1e-16:
                break
            if ha * hm < 0:
                hi = mid
            else:
                lo = mid
        tau = 0.5 * (lo + hi)
    if tau is None or abs(h(tau)) >= residual_tol:
        # Damped iteration: tau <- tau + 0.5 (rhs(tau) - tau).
        tau = a if tau is None else tau
        for _ in range(100_000):
            step = h(tau)
            if abs(step) < 1e-15:
                break
            tau = min(max(tau + 0.5 * step, 0.0), 1.0)
    residual = abs(h(tau))
    if residual >= residual_tol:
        raise SolverError(
            f"fixed point residual {residual:.3e} >= {residual_tol:.1e} "
            f"(h({a:.1e}) = {ha:.3e}, h(1 - {eps:.0e}) = {hb:.3e})"
        )

    rho = collision_probability(tau, params.n_ue, params.n_cb)
    _, c = _fourstep_chain(params, rho)
    total = c["total"]
    pi = np.stack([c["f"], c["pi2"], c["pi3"], c["pi4"]], axis=1) / total
    holding = np.stack(c["h"], axis=1)
    return StationarySolution(
        procedure="fourstep",
        pi_connected=c["x_conn"] / total,
        pi_inactive=1.0 / total,
        pi=pi,
        detect=c["pm1"],
        p_steps=c["p_steps"],
        holding_connected=c["hold_conn"],
        holding_inactive=c["hold_idle"],
        holding=holding,
        t_tot=c["t_tot"],
        tau=tau,
        rho_col=rho,
        residual=residual,
    )


def load_fourstep(solution: StationarySolution) -> float:
    """Mean four-step signals per device per ms (every state emits one)."""
    if solution.procedure != "fourstep":
        raise ValueError("needs a four-step solution")
    return float(solution.pi.sum() / solution.t_tot)


def failure_probability(solution: StationarySolution) -> float:
    """Probability that an access attempt sequence exhausts all attempts."""
    last = solution.pi[-1]
    p_first = solution.detect[-1]
    out = last[0] * (1.0 - p_first)
    for n, p_n in enumerate(solution.p_steps, start=1):
        out += last[n] * (1.0 - p_n)
    return float(out)


def twostep_detection_prob(m: int, params: TwoStepParams, p_prev=()) -> float:
    """Detection probability of the m-th preamble under cell sharing.

    Devices in the same cell that transmit simultaneously add their attempt
    indices to the detection exponent (the receiver sees the superposition),
    so detection is better than the single-device ``1 - e^{-m}``. ``p_prev``
    is the current estimate of the per-attempt detection vector; missing
    entries fall back to the single-device baseline.
    """
    if not 1 <= m <= params.max_attempts:
        raise ValueError("m must be in [1, max_attempts]")
    peers = math.ceil(params.n_rar) - 1
    exponent = float(m)
    if peers > 0:
        per_slot = params.t_p_eff / params.slot_avg
        for j in range(1, params.max_attempts + 1):
            if j == 1:
                prev = 0.0
            elif j - 2 < len(p_prev):
                prev = p_prev[j - 2]
            else:
                prev = 1.0 - math.exp(-(j - 1.0))
            q_j = min(max(per_slot * (1.0 - prev), 0.0), 1.0)
            exponent += j * peers * q_j
    return 1.0 - math.exp(-exponent)


def _twostep_detection_vector(params: TwoStepParams) -> np.ndarray:
    M = params.max_attempts
    p = np.array([1.0 - math.exp(-m) for m in range(1, M + 1)])
    for _ in range(500):
        p_new = np.array(
            [twostep_detection_prob(m, params, p) for m in range(1, M + 1)]
        )
        if np.max(np.abs(p_new - p)) < 1e-14:
            return p_new
        p = p_new
    return p


def solve_twostep(params: TwoStepParams) -> StationarySolution:
    """Solve the two-step chain (linear; only detection self-couples)."""
    M = params.max_attempts
    lam = params.rate_per_ms
    t_tti = params.t_tti_ms
    p2 = params.p2

    pm1 = _twostep_detection_vector(params)
    p_conn = 1.0 - math.exp(-lam * (params.t_up_ms + params.t_inactive_ms))
    p_idle = math.exp(-lam * params.t_p_eff * t_tti)

    f = np.empty(M)
    f[0] = 1.0 - p_idle
    for i in range(1, M):
        f[i] = f[i - 1] * ((1 - pm1[i - 1]) + pm1[i - 1] * (1 - p2))
    pi2 = pm1 * f
    x_conn = p2 * pi2.sum() / (1.0 - p_conn)
    total = x_conn + 1.0 + (f + pi2).sum()

    hold_conn = (1.0 - math.exp(-lam * (params.t_up_ms + params.t_inactive_ms))) / lam
    hold_idle = t_tti * params.t_p_eff
    w = params.rar_window_ms
    h1 = t_tti * pm1 + (t_tti + w) * (1 - pm1)
    h2 = np.full(M, 2.75 * p2 + w * (1 - p2))
    t_tot = (x_conn * hold_conn + hold_idle + (f * h1).sum() + (pi2 * h2).sum()) / total
    tau = float((f * pm1).sum() * t_tti / (total * t_tot))

    pi = np.stack([f, pi2], axis=1) / total
    return StationarySolution(
        procedure="twostep",
        pi_connected=x_conn / total,
        pi_inactive=1.0 / total,
        pi=pi,
        detect=pm1,
        p_steps=(p2,),
        holding_connected=hold_conn,
        holding_inactive=hold_idle,
        holding=np.stack([h1, h2], axis=1),
        t_tot=t_tot,
        tau=tau,
        rho_col=None,
        residual=None,
    )


def effective_rar_load(params: TwoStepParams, detect: np.ndarray) -> float:
    """Mean responses a detected preamble costs, per transmitting device.

    When k cell members transmit the same preamble together, the base
    station answers all of them with one response burst, so the per-device
    cost of the burst shrinks with k. Averages n_rar / k over the binomial
    distribution of simultaneous transmitters.
    """
    n_rar = params.n_rar
    n_ceil = math.ceil(n_rar)
    if n_ceil <= 1:
        return 1.0
    per_slot = params.t_p_eff / params.slot_avg
    retry_sum = 1.0 + float(np.sum(1.0 - detect[: params.max_attempts - 1]))
    x = min(max(per_slot * retry_sum, 0.0), 1.0)
    eff = 0.0
    for k in range(1, n_ceil + 1):
        weight = math.comb(n_ceil - 1, k - 1) * x ** (k - 1) * (1.0 - x) ** (n_ceil - k)
        eff += weight * n_rar / k
    return eff


def load_twostep(solution: StationarySolution, params: TwoStepParams) -> float:
    """Mean two-step signals per event device per ms.

    Preamble states emit one signal; response states emit the effective
    response burst plus the matching uplink grants, minus the one necessary
    grant (2 eff - 1).
    """
    if solution.procedure != "twostep":
        raise ValueError("needs a two-step solution")
    eff = effective_rar_load(params, solution.detect)
    per_attempt = solution.pi[:, 0] + (2.0 * eff - 1.0) * solution.pi[:, 1]
    return float(per_attempt.sum() / solution.t_tot)


@dataclass(frozen=True)
class SplitPoint:
    """One row of the optimizer sweep."""

    n_cr: int
    n_cb: int
    feasible: bool
    p_fail: float
    load_fourstep: float
    load_twostep: float
    objective: float


@dataclass(frozen=True)
class SplitResult:
    best_n_cr: int
    points: tuple[SplitPoint, ...]

    def point(self, n_cr: int) -> SplitPoint:
        return self.points[n_cr - self.points[0].n_cr]


def optimize_preamble_split(
    fourstep: FourStepParams | None,
    twostep: TwoStepParams | None,
    n_pool: int = 54,
    p_fail_max: float = 1e-7,
    n_cr_min: int = 0,
    n_cr_max: int | None = None,
) -> SplitResult:
    """Minimize total signaling load over the pool split.

    Sweeps ``n_cr`` from ``n_cr_min`` to ``n_cr_max`` (default the whole
    pool, with ``n_cb = n_pool - n_cr``), skips infeasible points (failure
    probability at or above ``p_fail_max``, or a pool too small for its
    population), and returns the argmin of
    ``load_fourstep * N_cb + load_twostep * N_ed`` with the full table.
    """
    if n_cr_max is None:
        n_cr_max = n_pool
    if not 0 <= n_cr_min <= n_cr_max <= n_pool:
        raise ValueError("need 0 <= n_cr_min <= n_cr_max <= n_pool")
    n_fourstep = fourstep.n_ue if fourstep is not None else 0
    n_event = twostep.n_event if twostep is not None else 0
    points = []
    best: SplitPoint | None = None
    for n_cr in range(n_cr_min, n_cr_max + 1):
        n_cb = n_pool - n_cr
        p_fail = 0.0
        load_cb = 0.0
        load_ed = 0.0
        feasible = True
        if n_fourstep > 0 and n_cb < 1:
            feasible = False
        if n_event > 0 and n_cr < 2:
            feasible = False
        if feasible and n_fourstep > 0:
            try:
                sol = solve_fourstep(replace(fourstep, n_cb=n_cb))
            except SolverError:
                feasible = False
            else:
                p_fail = failure_probability(sol)
                load_cb = load_fourstep(sol)
                if p_fail >= p_fail_max:
                    feasible = False
        if feasible and n_event > 0:
            sol2 = solve_twostep(replace(twostep, n_cr=n_cr))
            load_ed = load_twostep(sol2, replace(twostep, n_cr=n_cr))
        objective = load_cb * n_fourstep + load_ed * n_event if feasible else math.inf
        points.append(
            SplitPoint(
                n_cr=n_cr, n_cb=n_cb, feasible=feasible, p_fail=p_fail,
                load_fourstep=load_cb, load_twostep=load_ed, objective=objective,
            )
        )
        if feasible and (best is None or objective < best.objective):
            best = points[-1]
    if best is None:
        raise InfeasibleError(
            f"no split in [{n_cr_min}, {n_cr_max}] keeps the failure "
            f"probability below {p_fail_max:g}"
        )
    return SplitResult(best_n_cr=best.n_cr, points=tuple(points))
