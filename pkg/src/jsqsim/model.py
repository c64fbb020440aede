"""Discrete-time load-balancing chain: bounded integer arrival/service
distributions, routing policies, and the exact one-slot transition.

Queue lengths are integers and the slot update is exact integer arithmetic:

    q_i(k+1) = max(q_i(k) + a_i(k) - s_i(k), 0)
    u_i(k)   = q_i(k+1) - (q_i(k) + a_i(k) - s_i(k))

so ``q_i(k+1) * u_i(k) == 0`` and ``0 <= u_i <= s_i`` hold slot by slot.

Randomness contract: every replication owns one PCG64 stream seeded by
``(seed, replication_index)``. A slot consumes, in order, one uniform for
the arrival batch, N uniforms for the services, and the policy's routing
uniforms (1 for jsq/random, d+1 for jsq(d)). ``step`` and the compiled
chunk engine consume the stream identically, so they produce bit-identical
trajectories from the same generator state.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from numba import njit

DEFAULT_SEED = 123456789

# Slots simulated per engine call; only a memory/latency tradeoff, the
# consumed random stream does not depend on it.
CHUNK_SLOTS = 1 << 16

_JSQ_CODE = 0
_RANDOM_CODE = 1
_JSQ_D_CODE = 2


class ParameterError(ValueError):
    """Invalid model or configuration parameter."""


class InfeasibleVarianceError(ParameterError):
    """Requested arrival variance needs negative support values."""

    def __init__(self, message: str, max_sigma_a_sq: float):
        super().__init__(message)
        self.max_sigma_a_sq = max_sigma_a_sq


class InvariantViolation(AssertionError):
    """A per-slot invariant of the queue dynamics failed."""


_POLICY_RE = re.compile(r"^jsq\((\d+)\)$")


@dataclass(frozen=True)
class Policy:
    """Routing policy: 'jsq', 'random', or 'jsq_d' with subset size d."""

    kind: str
    d: int = 0

    def __post_init__(self):
        if self.kind not in ("jsq", "random", "jsq_d"):
            raise ParameterError(f"unknown policy kind {self.kind!r}")
        if self.kind == "jsq_d":
            if self.d < 1:
                raise ParameterError("jsq_d needs subset size d >= 1")
        elif self.d != 0:
            raise ParameterError(f"policy {self.kind!r} takes no d")

    @classmethod
    def jsq(cls) -> "Policy":
        return cls("jsq")

    @classmethod
    def random(cls) -> "Policy":
        return cls("random")

    @classmethod
    def jsq_d(cls, d: int) -> "Policy":
        return cls("jsq_d", d)

    @classmethod
    def parse(cls, text: str) -> "Policy":
        """Parse 'jsq', 'random', or 'jsq(d)' (e.g. 'jsq(2)')."""
        text = text.strip().lower()
        if text == "jsq":
            return cls.jsq()
        if text == "random":
            return cls.random()
        m = _POLICY_RE.match(text)
        if m:
            return cls.jsq_d(int(m.group(1)))
        raise ParameterError(
            f"cannot parse policy {text!r}; expected 'jsq', 'random' or 'jsq(d)'"
        )

    def __str__(self) -> str:
        if self.kind == "jsq_d":
            return f"jsq({self.d})"
        return self.kind

    @property
    def code(self) -> int:
        return {"jsq": _JSQ_CODE, "random": _RANDOM_CODE, "jsq_d": _JSQ_D_CODE}[self.kind]


@dataclass(frozen=True)
class DiscreteDist:
    """Finite distribution on nonnegative integers with recorded moments.

    ``mean_exact``/``var_exact`` are the intended exact moments; they must
    agree with the atom moments to 1e-9 (construction-time check) but may
    carry more precision than the float atom probabilities do.
    """

    atoms: tuple[tuple[int, float], ...]
    mean_exact: float
    var_exact: float
    max_value: int

    def __post_init__(self):
        if not self.atoms:
            raise ParameterError("distribution needs at least one atom")
        values = [v for v, _ in self.atoms]
        probs = [p for _, p in self.atoms]
        if any(v < 0 or v != int(v) for v in values):
            raise ParameterError("atom values must be nonnegative integers")
        if sorted(values) != values or len(set(values)) != len(values):
            raise ParameterError("atom values must be distinct and sorted")
        if any(p < 0.0 or p > 1.0 for p in probs):
            raise ParameterError("atom probabilities must lie in [0, 1]")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ParameterError(f"atom probabilities sum to {sum(probs)!r}, not 1")
        m1 = sum(v * p for v, p in self.atoms)
        m2 = sum(v * v * p for v, p in self.atoms)
        if abs(m1 - self.mean_exact) > 1e-9:
            raise ParameterError(
                f"recorded mean {self.mean_exact} != atom mean {m1}"
            )
        if abs(m2 - m1 * m1 - self.var_exact) > 1e-9:
            raise ParameterError(
                f"recorded variance {self.var_exact} != atom variance {m2 - m1 * m1}"
            )
        if self.max_value != values[-1]:
            raise ParameterError("max_value must equal the largest atom value")

    @classmethod
    def from_atoms(
        cls,
        atoms,
        mean_exact: float | None = None,
        var_exact: float | None = None,
    ) -> "DiscreteDist":
        """Build from (value, prob) pairs; merges duplicates, drops p == 0."""
        merged: dict[int, float] = {}
        for v, p in atoms:
            iv = int(v)
            if iv != v:
                raise ParameterError(f"non-integer atom value {v!r}")
            merged[iv] = merged.get(iv, 0.0) + float(p)
        pairs = tuple(sorted((v, p) for v, p in merged.items() if p > 0.0))
        if not pairs:
            raise ParameterError("no atoms with positive probability")
        m1 = sum(v * p for v, p in pairs)
        m2 = sum(v * v * p for v, p in pairs)
        return cls(
            atoms=pairs,
            mean_exact=m1 if mean_exact is None else mean_exact,
            var_exact=(m2 - m1 * m1) if var_exact is None else var_exact,
            max_value=pairs[-1][0],
        )

    @cached_property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.atoms], dtype=np.int64)

    @cached_property
    def cdf(self) -> np.ndarray:
        return np.cumsum([p for _, p in self.atoms])

    def sample(self, rng: np.random.Generator) -> int:
        """One draw by inverse CDF over the sorted atoms (consumes 1 uniform)."""
        u = rng.random()
        idx = int(np.searchsorted(self.cdf, u, side="right"))
        return int(self.values[min(idx, len(self.atoms) - 1)])

    def sample_n(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n draws; consumes exactly n uniforms, same mapping as sample()."""
        u = rng.random(n)
        idx = np.searchsorted(self.cdf, u, side="right")
        return self.values[np.minimum(idx, len(self.atoms) - 1)]


def sample_dist(dist: DiscreteDist, rng: np.random.Generator) -> int:
    return dist.sample(rng)


def make_service_dist(sigma_s_sq: float) -> DiscreteDist:
    """Three-point service distribution on {0, 1, 2} with mean 1.

    P(0) = P(2) = sigma_s_sq / 2, P(1) = 1 - sigma_s_sq; the support
    collapses to {1} when sigma_s_sq == 0. Only variances in [0, 1] are
    representable this way.
    """
    if not 0.0 <= sigma_s_sq <= 1.0:
        raise ParameterError(f"sigma_s_sq must be in [0, 1], got {sigma_s_sq}")
    if sigma_s_sq == 0.0:
        return DiscreteDist.from_atoms([(1, 1.0)], mean_exact=1.0, var_exact=0.0)
    half = sigma_s_sq / 2.0
    return DiscreteDist.from_atoms(
        [(0, half), (1, 1.0 - sigma_s_sq), (2, half)],
        mean_exact=1.0,
        var_exact=sigma_s_sq,
    )


def lam_from_alpha(n_servers: int, alpha: float) -> float:
    """Total arrival rate N(1 - N^(-alpha)), evaluated as N - N^(1-alpha)."""
    return float(n_servers) - drift_from_alpha(n_servers, alpha)


def drift_from_alpha(n_servers: int, alpha: float) -> float:
    """Total slack capacity N^(1-alpha)."""
    return float(n_servers) ** (1.0 - alpha)


def make_arrival_dist(
    n_servers: int,
    alpha: float | None = None,
    lambda_override: float | None = None,
    sigma_a_sq: float = 0.0,
) -> DiscreteDist:
    """Arrival batch distribution with exact mean lambda and variance close
    to ``n_servers * sigma_a_sq``.

    Construction: c + Bernoulli(f) + Z with c = floor(lambda), f the
    fractional part, and Z = +-m with probability 1/2 each, where m rounds
    sqrt(max(0, N sigma_a_sq - f(1-f))) to the nearest integer. The mean is
    exactly lambda by construction (never rounded); the achieved variance
    f(1-f) + m^2 is recorded and must be used downstream in place of the
    request.
    """
    if (alpha is None) == (lambda_override is None):
        raise ParameterError("give exactly one of alpha and lambda_override")
    if alpha is not None:
        if alpha <= 0.0:
            raise ParameterError(f"alpha must be positive, got {alpha}")
        lam = lam_from_alpha(n_servers, alpha)
    else:
        lam = float(lambda_override)
    if not 0.0 <= lam < n_servers:
        raise ParameterError(
            f"need 0 <= lambda < N for stability, got lambda={lam}, N={n_servers}"
        )
    if sigma_a_sq < 0.0:
        raise ParameterError(f"sigma_a_sq must be nonnegative, got {sigma_a_sq}")

    c = int(math.floor(lam))
    f = lam - c
    m = round(math.sqrt(max(0.0, n_servers * sigma_a_sq - f * (1.0 - f))))
    if m > c:
        # Support would reach c - m < 0; the largest representable request
        # keeps sqrt(N sigma^2 - f(1-f)) below c + 1/2.
        max_feasible = ((c + 0.5) ** 2 + f * (1.0 - f)) / n_servers
        raise InfeasibleVarianceError(
            f"sigma_a_sq={sigma_a_sq} infeasible at lambda={lam} "
            f"(needs atoms below 0); max feasible is < {max_feasible:.6g}",
            max_sigma_a_sq=max_feasible,
        )
    if m == 0:
        atoms = [(c, 1.0 - f), (c + 1, f)]
    else:
        atoms = [
            (c - m, (1.0 - f) / 2.0),
            (c + 1 - m, f / 2.0),
            (c + m, (1.0 - f) / 2.0),
            (c + 1 + m, f / 2.0),
        ]
    return DiscreteDist.from_atoms(
        atoms, mean_exact=lam, var_exact=f * (1.0 - f) + float(m * m)
    )


@dataclass
class QueueState:
    """Queue lengths at the start of a slot."""

    q: np.ndarray
    t: int = 0

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.int64)
        if self.q.ndim != 1 or self.q.size == 0:
            raise ParameterError("queue vector must be 1-d and nonempty")
        if np.any(self.q < 0):
            raise ParameterError("queue lengths must be nonnegative")

    @classmethod
    def empty(cls, n_servers: int) -> "QueueState":
        return cls(np.zeros(n_servers, dtype=np.int64), 0)


@dataclass
class StepRecord:
    """One slot's realization, for invariant checking."""

    a_total: int
    a_routed: np.ndarray
    s: np.ndarray
    u: np.ndarray
    q_next: np.ndarray

    def check(self, q_prev: np.ndarray, svc_max: int | None = None,
              arr_max: int | None = None) -> None:
        """Raise InvariantViolation unless the slot identities hold."""
        if np.any(self.q_next * self.u != 0):
            raise InvariantViolation("q_next * u != 0")
        if np.any(self.q_next != q_prev + self.a_routed - self.s + self.u):
            raise InvariantViolation("conservation q+ = q + a - s + u failed")
        if np.any(self.u < 0) or np.any(self.u > self.s):
            raise InvariantViolation("unused service outside [0, s]")
        if np.any(self.q_next < 0):
            raise InvariantViolation("negative queue length")
        if int(self.a_routed.sum()) != self.a_total:
            raise InvariantViolation("routed arrivals do not sum to the batch")
        if np.count_nonzero(self.a_routed) > 1:
            raise InvariantViolation("batch split across servers")
        if svc_max is not None and np.any(self.s > svc_max):
            raise InvariantViolation("service draw above s_max")
        if arr_max is not None and self.a_total > arr_max:
            raise InvariantViolation("arrival draw above a_max")


def _pick_among(q: np.ndarray, candidates: np.ndarray, u: float) -> int:
    """Uniform choice among the minimizers of q restricted to candidates."""
    qmin = q[candidates].min()
    ties = candidates[q[candidates] == qmin]
    k = min(int(u * ties.size), ties.size - 1)
    return int(ties[k])


def _partial_shuffle(n: int, d: int, us: np.ndarray) -> np.ndarray:
    """First d entries of a Fisher-Yates shuffle driven by d uniforms."""
    idx = np.arange(n, dtype=np.int64)
    for k in range(d):
        j = k + int(us[k] * (n - k))
        if j >= n:
            j = n - 1
        idx[k], idx[j] = idx[j], idx[k]
    return idx[:d]


def route(q, a_total: int, policy: Policy, rng: np.random.Generator) -> np.ndarray:
    """Route the whole arrival batch to one server.

    jsq sends it to a uniformly chosen global argmin, jsq(d) to the
    shortest among d servers sampled without replacement, random to a
    uniform server. Always consumes the policy's routing uniforms, so the
    stream position does not depend on the realized queue values.
    """
    qv = q.q if isinstance(q, QueueState) else np.asarray(q, dtype=np.int64)
    n = qv.size
    if a_total < 0:
        raise ParameterError("arrival batch must be nonnegative")
    if policy.kind == "jsq_d":
        if policy.d > n:
            raise ParameterError(f"jsq({policy.d}) with only {n} servers")
        chosen = _partial_shuffle(n, policy.d, rng.random(policy.d))
        i_star = _pick_among(qv, chosen, rng.random())
    elif policy.kind == "random":
        i_star = min(int(rng.random() * n), n - 1)
    else:
        i_star = _pick_among(qv, np.arange(n), rng.random())
    out = np.zeros(n, dtype=np.int64)
    out[i_star] = a_total
    return out


def step(
    state: QueueState,
    arr: DiscreteDist,
    svc: DiscreteDist,
    policy: Policy,
    rng: np.random.Generator,
) -> tuple[QueueState, StepRecord]:
    """Reference one-slot transition: sample, route, update.

    Queue lengths are observed, the batch arrives and is routed, then
    service acts; all coordinates update by exact integer arithmetic.
    """
    q = state.q
    a_total = arr.sample(rng)
    s = svc.sample_n(rng, q.size)
    a_routed = route(state, a_total, policy, rng)
    net = q + a_routed - s
    q_next = np.maximum(net, 0)
    u = q_next - net
    rec = StepRecord(a_total=a_total, a_routed=a_routed, s=s, u=u, q_next=q_next)
    return QueueState(q_next, state.t + 1), rec


@njit(cache=True)
def _sim_chunk(gen, q, n_slots, arr_vals, arr_cdf, svc_vals, svc_cdf,
               policy_code, policy_d, s_buf, idx_buf, sum_q, sum_u, sum_q2):
    n = q.shape[0]
    na = arr_vals.shape[0]
    ns = svc_vals.shape[0]
    for t in range(n_slots):
        u = gen.random()
        j = 0
        while j < na - 1 and u >= arr_cdf[j]:
            j += 1
        a = arr_vals[j]

        for i in range(n):
            u = gen.random()
            j = 0
            while j < ns - 1 and u >= svc_cdf[j]:
                j += 1
            s_buf[i] = svc_vals[j]

        if policy_code == 0:  # jsq: uniform tie-break over global argmin
            u = gen.random()
            qmin = q[0]
            for i in range(1, n):
                if q[i] < qmin:
                    qmin = q[i]
            cnt = 0
            for i in range(n):
                if q[i] == qmin:
                    cnt += 1
            k = int(u * cnt)
            if k >= cnt:
                k = cnt - 1
            i_star = 0
            c2 = 0
            for i in range(n):
                if q[i] == qmin:
                    if c2 == k:
                        i_star = i
                        break
                    c2 += 1
        elif policy_code == 1:  # random server
            u = gen.random()
            i_star = int(u * n)
            if i_star >= n:
                i_star = n - 1
        else:  # jsq(d): partial Fisher-Yates then argmin over the subset
            for i in range(n):
                idx_buf[i] = i
            for k2 in range(policy_d):
                u = gen.random()
                j2 = k2 + int(u * (n - k2))
                if j2 >= n:
                    j2 = n - 1
                tmp = idx_buf[k2]
                idx_buf[k2] = idx_buf[j2]
                idx_buf[j2] = tmp
            u = gen.random()
            qmin = q[idx_buf[0]]
            for k2 in range(1, policy_d):
                if q[idx_buf[k2]] < qmin:
                    qmin = q[idx_buf[k2]]
            cnt = 0
            for k2 in range(policy_d):
                if q[idx_buf[k2]] == qmin:
                    cnt += 1
            k = int(u * cnt)
            if k >= cnt:
                k = cnt - 1
            i_star = idx_buf[0]
            c2 = 0
            for k2 in range(policy_d):
                if q[idx_buf[k2]] == qmin:
                    if c2 == k:
                        i_star = idx_buf[k2]
                        break
                    c2 += 1

        sq = 0
        su = 0
        sq2 = 0
        for i in range(n):
            v = q[i] - s_buf[i]
            if i == i_star:
                v += a
            if v < 0:
                su -= v
                v = 0
            q[i] = v
            sq += v
            sq2 += v * v
        sum_q[t] = sq
        sum_u[t] = su
        sum_q2[t] = sq2


def simulate_chunk(
    gen: np.random.Generator,
    q: np.ndarray,
    n_slots: int,
    arr: DiscreteDist,
    svc: DiscreteDist,
    policy: Policy,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Advance q in place by n_slots; returns per-slot (sum q+, sum u, sum q+^2).

    Bit-identical to iterating ``step`` with the same generator.
    """
    n = q.size
    if policy.kind == "jsq_d" and policy.d > n:
        raise ParameterError(f"jsq({policy.d}) with only {n} servers")
    sum_q = np.empty(n_slots, dtype=np.int64)
    sum_u = np.empty(n_slots, dtype=np.int64)
    sum_q2 = np.empty(n_slots, dtype=np.int64)
    _sim_chunk(
        gen, q, n_slots,
        arr.values, arr.cdf, svc.values, svc.cdf,
        policy.code, policy.d,
        np.empty(n, dtype=np.int64), np.empty(n, dtype=np.int64),
        sum_q, sum_u, sum_q2,
    )
    return sum_q, sum_u, sum_q2


@dataclass(frozen=True)
class SimConfig:
    """Full parametrization of one simulated system.

    Exactly one of ``alpha`` and ``lambda_override`` selects the arrival
    rate (unless ``arrival_atoms`` pins the whole distribution). ``horizon``
    and ``warmup`` default to 100x and 10x the relaxation-time heuristic.
    """

    n_servers: int
    alpha: float | None = None
    lambda_override: float | None = None
    sigma_a_sq: float = 0.5
    sigma_s_sq: float = 0.5
    policy: Policy = Policy.jsq()
    horizon: int | None = None
    warmup: int | None = None
    seed: int = DEFAULT_SEED
    replications: int = 8
    arrival_atoms: tuple[tuple[int, float], ...] | None = None

    def __post_init__(self):
        if self.n_servers < 1:
            raise ParameterError("n_servers must be >= 1")
        if self.arrival_atoms is not None:
            object.__setattr__(
                self, "arrival_atoms",
                tuple((int(v), float(p)) for v, p in self.arrival_atoms),
            )
        elif (self.alpha is None) == (self.lambda_override is None):
            raise ParameterError("give exactly one of alpha and lambda_override")
        if self.alpha is not None and self.alpha <= 0.0:
            raise ParameterError("alpha must be positive")
        if not 0.0 <= self.sigma_s_sq <= 1.0:
            raise ParameterError("sigma_s_sq must be in [0, 1]")
        if self.sigma_a_sq < 0.0:
            raise ParameterError("sigma_a_sq must be nonnegative")
        if not isinstance(self.policy, Policy):
            raise ParameterError("policy must be a Policy instance")
        if self.policy.kind == "jsq_d" and self.policy.d > self.n_servers:
            raise ParameterError(
                f"jsq({self.policy.d}) with only {self.n_servers} servers"
            )
        if not 0 <= self.seed < 2 ** 64:
            raise ParameterError("seed must fit in 64 bits")
        if self.replications < 1:
            raise ParameterError("replications must be >= 1")
        if self.horizon is not None and self.horizon < 1:
            raise ParameterError("horizon must be positive")
        if self.warmup is not None and self.warmup < 0:
            raise ParameterError("warmup must be nonnegative")
        if (
            self.horizon is not None
            and self.warmup is not None
            and not self.warmup < self.horizon
        ):
            raise ParameterError("need warmup < horizon")
        lam = self.lam  # force the stability check
        if not 0.0 <= lam < self.n_servers:
            raise ParameterError(
                f"need 0 <= lambda < N, got lambda={lam}, N={self.n_servers}"
            )

    @property
    def lam(self) -> float:
        if self.arrival_atoms is not None:
            return sum(v * p for v, p in self.arrival_atoms)
        if self.lambda_override is not None:
            return float(self.lambda_override)
        return lam_from_alpha(self.n_servers, self.alpha)

    @property
    def drift(self) -> float:
        """Total slack N - lambda; equals N^(1-alpha) under the alpha form."""
        if self.alpha is not None and self.arrival_atoms is None:
            return drift_from_alpha(self.n_servers, self.alpha)
        return self.n_servers - self.lam

    @cached_property
    def dists(self) -> tuple[DiscreteDist, DiscreteDist]:
        if self.arrival_atoms is not None:
            arr = DiscreteDist.from_atoms(self.arrival_atoms)
        else:
            arr = make_arrival_dist(
                self.n_servers,
                alpha=self.alpha,
                lambda_override=self.lambda_override,
                sigma_a_sq=self.sigma_a_sq,
            )
        return arr, make_service_dist(self.sigma_s_sq)

    def build_dists(self) -> tuple[DiscreteDist, DiscreteDist]:
        return self.dists

    @property
    def achieved_sigma_a_sq(self) -> float:
        """Per-server variance factor actually realized by the arrival atoms."""
        arr, _ = self.dists
        return arr.var_exact / self.n_servers

    @property
    def sigma_sum_sq(self) -> float:
        return self.achieved_sigma_a_sq + self.sigma_s_sq

    @property
    def alpha_eff(self) -> float | None:
        """alpha if given, else solved from lambda = N(1 - N^-alpha)."""
        if self.alpha is not None:
            return self.alpha
        lam = self.lam
        n = self.n_servers
        if n >= 2 and 0.0 < lam < n:
            return -math.log(1.0 - lam / n) / math.log(n)
        return None

    @property
    def scale_factor(self) -> float:
        """N^(-alpha) used for the scaled total queue length (1.0 if unknown)."""
        a = self.alpha_eff
        return float(self.n_servers) ** (-a) if a is not None else 1.0

    @property
    def t_relax(self) -> float:
        """Mixing heuristic: per-slot variance over squared drift."""
        var_per_slot = self.n_servers * self.sigma_sum_sq
        return var_per_slot / self.drift ** 2

    def resolved(self) -> "SimConfig":
        """Fill horizon/warmup defaults (100x / 10x the relaxation time)."""
        horizon = self.horizon
        warmup = self.warmup
        if horizon is None:
            horizon = max(1000, math.ceil(100.0 * self.t_relax))
        if warmup is None:
            warmup = max(100, math.ceil(10.0 * self.t_relax))
            warmup = min(warmup, horizon - 1)
        if not warmup < horizon:
            raise ParameterError("need warmup < horizon")
        return replace(self, horizon=horizon, warmup=warmup)


def replication_rng(seed: int, rep_index: int) -> np.random.Generator:
    """Independent PCG64 stream for one replication."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, rep_index))))


@dataclass
class DebugRunResult:
    n_slots: int
    violations: list[str]
    records: list[StepRecord] | None
    final_state: QueueState


def debug_run(
    cfg: SimConfig,
    n_slots: int,
    rep_index: int = 0,
    collect_records: bool = False,
) -> DebugRunResult:
    """Run the reference step() path checking every slot's invariants.

    Checks the q+ u complementarity, the conservation identity, the unused
    service bounds, the distribution support bounds, and (for jsq) that the
    routed server was a true argmin of the pre-arrival queue vector.
    """
    arr, svc = cfg.build_dists()
    rng = replication_rng(cfg.seed, rep_index)
    state = QueueState.empty(cfg.n_servers)
    violations: list[str] = []
    records: list[StepRecord] | None = [] if collect_records else None
    for t in range(n_slots):
        q_prev = state.q
        state, rec = step(state, arr, svc, cfg.policy, rng)
        try:
            rec.check(q_prev, svc_max=svc.max_value, arr_max=arr.max_value)
            if cfg.policy.kind == "jsq" and rec.a_total > 0:
                i_star = int(np.argmax(rec.a_routed))
                if q_prev[i_star] != q_prev.min():
                    raise InvariantViolation("jsq routed off the argmin")
        except InvariantViolation as exc:
            if len(violations) < 10:
                violations.append(f"slot {t}: {exc}")
        if records is not None:
            records.append(rec)
    return DebugRunResult(n_slots, violations, records, state)
