"""End-to-end protocol runs.

All six algorithms share one synchronous two-phase engine (sense/perturb/
broadcast, then fuse/update/release) parameterized by a policy record, so
the degenerate equivalences between them (FAST is DPCrowd minus neighbors,
the windowed baseline with w = T matches DPCrowd, ...) hold by construction,
draw for draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kcif
from .config import ExperimentConfig, ConfigError
from .datasets import generate_stream, load_csv
from .grouping import GroupingThresholds, group_regions, perturb_groups, predict_region
from .kcif import KcifParams
from .model import ProcessModel, partition_users
from .netsim import CommStats, TopologySchedule, degrees, flood_reachability
from .privacy import AllocationConfig, BudgetError, PrivacyLedger, allocate_adaptive, \
    allocate_uniform, perturb_count
from .sampling import PidController, SamplingSchedule, feedback_error, next_interval, \
    next_interval_plus

__all__ = [
    "RunResult",
    "run_nonprivate",
    "run_dpcrowd",
    "run_dpcrowd_plus",
    "run_dpcrowd_w",
    "run_fast",
    "run_dfast",
    "run_experiment",
]

# Per-payload bytes for flooded estimates: sender + timestamp as uint32,
# then one float64 per dimension.
FLOOD_HEADER_BYTES = 8


def flood_payload_bytes(d: int) -> int:
    return FLOOD_HEADER_BYTES + 8 * d


@dataclass(frozen=True)
class _Policy:
    name: str
    perturb: bool  # Laplace noise on aggregates
    always_sample: bool  # no schedule, broadcast every timestamp
    allocation: str  # 'uniform' | 'adaptive'
    ledger_mode: str | None  # 'user' | 'w_event' | None
    grouping: bool
    interval_law: str  # 'quadratic' | 'budget'
    communicate: bool
    flood: bool
    window_restart: bool  # restart filters/budgets every w timestamps


@dataclass
class RunResult:
    """Everything a run releases plus its accounting."""

    config: ExperimentConfig
    truth: np.ndarray  # (T, d)
    releases: np.ndarray  # (m, T, d)
    observations: np.ndarray  # (m, T, d): the DP-protected values fed to estimation
    posterior_var: np.ndarray  # (m, T, d)
    broadcast: np.ndarray  # (m, T) bool: actual transmissions
    sampled: np.ndarray  # (m, T, d) bool: fresh-observation timestamps per dimension
    stats: CommStats
    ledgers: list[PrivacyLedger] | None

    @property
    def m(self) -> int:
        return self.releases.shape[0]

    @property
    def timestamps(self) -> int:
        return self.releases.shape[1]

    @property
    def d(self) -> int:
        return self.releases.shape[2]

    def verify(self) -> None:
        """Completeness and budget soundness; raises on violation."""
        m, timestamps, d = self.releases.shape
        if self.truth.shape != (timestamps, d):
            raise AssertionError("truth shape does not match releases")
        if not np.all(np.isfinite(self.releases)):
            raise AssertionError("non-finite release")
        if self.broadcast.shape != (m, timestamps):
            raise AssertionError("broadcast mask shape mismatch")
        if len(self.stats.packets_by_t) != timestamps:
            raise AssertionError("per-timestamp packet trace incomplete")
        if self.ledgers is not None:
            for ledger in self.ledgers:
                ledger.audit()


def _build_process(cfg: ExperimentConfig) -> ProcessModel:
    d = cfg.model.d
    transition = np.full((d, d), cfg.model.a_offdiag) + np.eye(d) * (cfg.model.a - cfg.model.a_offdiag)
    q = np.asarray(cfg.model.q, dtype=float)
    if q.shape == (1,) and d > 1:
        q = np.full(d, float(q[0]))
    return ProcessModel(transition=transition, noise_var=q)


def _make_truth(cfg: ExperimentConfig, model: ProcessModel, rng: np.random.Generator) -> np.ndarray:
    if cfg.data.source == "csv":
        stream = load_csv(cfg.data.path)
        if stream.d != cfg.model.d:
            raise ConfigError(
                f"data file has {stream.d} dimensions but model.d = {cfg.model.d}"
            )
        if stream.timestamps < cfg.timestamps:
            raise ConfigError(
                f"data file has {stream.timestamps} rows but timestamps = {cfg.timestamps}"
            )
        return stream.values[: cfg.timestamps].copy()
    initial = np.asarray(cfg.data.initial, dtype=float)
    if initial.shape == (1,) and cfg.model.d > 1:
        initial = np.full(cfg.model.d, float(initial[0]))
    return generate_stream(model, initial, cfg.timestamps, rng, clamp=cfg.data.clamp).values


def _planned_samples(mode: str, length: int, interval: int, fraction: float) -> int:
    """Sampling-point budget for one stream segment."""
    if mode == "fixed":
        return math.ceil(length / interval)
    return max(1, math.floor(fraction * length))


def _grouping_thresholds(cfg: ExperimentConfig) -> GroupingThresholds:
    # eps_avg: the mean per-timestamp budget eps/w of a fully spent window.
    eps_avg = cfg.epsilon / max(cfg.w, 1)
    eta1 = cfg.grouping.eta1
    if eta1 is None:
        eta1 = 2.0 * math.sqrt(2.0) * cfg.sensitivity_c / eps_avg
    eta3 = cfg.grouping.eta3
    if eta3 is None:
        eta3 = eta1 / 2.0
    return GroupingThresholds(
        large_value=eta1, value_gap=eta3, trend_gap=cfg.grouping.eta2,
        history_window=cfg.grouping.tau,
    )


def _simulate(cfg: ExperimentConfig, policy: _Policy) -> RunResult:
    cfg.validate()
    d = cfg.model.d
    m = cfg.net.m
    timestamps = cfg.timestamps
    sensitivity = cfg.sensitivity_c
    params = KcifParams(
        alpha=cfg.kcif.alpha,
        consensus_step=cfg.kcif.beta,
        variance_floor=cfg.kcif.variance_floor,
    )
    process = _build_process(cfg)
    transition = process.transition
    q_diag = process.noise_var

    master = np.random.SeedSequence(cfg.seed)
    data_key, partition_key, latency_key, topology_key, *server_keys = master.spawn(4 + m)
    data_rng = np.random.default_rng(data_key)
    partition_rng = np.random.default_rng(partition_key)
    latency_rng = np.random.default_rng(latency_key)
    server_rngs = [np.random.default_rng(key) for key in server_keys]

    truth = _make_truth(cfg, process, data_rng)
    topo_seed = cfg.net.seed
    if topo_seed is None:
        topo_seed = int(np.random.default_rng(topology_key).integers(0, 2**31 - 1))
    topo = TopologySchedule(m=m, density=cfg.net.rho, seed=topo_seed, dynamic=cfg.net.dynamic)

    sizes = partition_users(cfg.users, m, partition_rng)
    coeff = sizes / float(cfg.users)

    # Per-server observation-noise draws come off that server's own stream,
    # pre-drawn as standard normals and scaled per timestamp.
    obs_noise = np.stack([rng.standard_normal((timestamps, d)) for rng in server_rngs])

    ledgers: list[PrivacyLedger] | None = None
    if policy.ledger_mode is not None:
        ledgers = [
            PrivacyLedger(policy.ledger_mode, cfg.epsilon, dims=d, w=cfg.w)
            for _ in range(m)
        ]
    alloc_cfg = None
    if policy.allocation == "adaptive":
        alloc_cfg = AllocationConfig(
            epsilon_total=cfg.epsilon, w=cfg.w, mu=cfg.mu, p_max=cfg.p_max,
            eps_max=cfg.epsilon * cfg.eps_max_fraction,
        )
    thresholds = _grouping_thresholds(cfg) if policy.grouping else None

    block_len = cfg.w if policy.window_restart else timestamps

    def fresh_schedules(start_t: int, length: int) -> list[list[SamplingSchedule]]:
        cap = None
        if not policy.always_sample:
            if policy.allocation == "uniform":
                cap = _planned_samples(
                    cfg.sampling.mode, length, cfg.sampling.interval, cfg.sampling.max_fraction
                )
            # adaptive allocation runs in infinite-stream mode: no sample cap
        return [
            [
                SamplingSchedule(
                    mode=cfg.sampling.mode, interval=cfg.sampling.interval,
                    next_sample_t=start_t, max_samples=cap,
                )
                for _ in range(d)
            ]
            for _ in range(m)
        ]

    def fresh_pids() -> list[list[PidController]]:
        return [
            [
                PidController(
                    proportional=cfg.pid.cp, integral=cfg.pid.ci,
                    derivative=cfg.pid.cd, window=cfg.pid.ti,
                )
                for _ in range(d)
            ]
            for _ in range(m)
        ]

    def block_eps(length: int) -> float:
        planned = _planned_samples(
            cfg.sampling.mode, length, cfg.sampling.interval, cfg.sampling.max_fraction
        )
        return allocate_uniform(cfg.epsilon, planned)

    schedules = fresh_schedules(1, min(block_len, timestamps))
    pids = fresh_pids()
    eps_uniform = block_eps(min(block_len, timestamps)) if policy.allocation == "uniform" else 0.0

    uninformed = np.where(q_diag > 0, kcif.UNINFORMED_VARIANCE_SCALE * q_diag,
                          kcif.UNINFORMED_VARIANCE_SCALE)
    posterior = np.zeros((m, d))
    posterior_var = np.tile(uninformed, (m, 1))
    initialized = np.zeros((m, d), dtype=bool)
    last_rhat = np.full((m, d), np.inf)

    releases = np.empty((m, timestamps, d))
    observations = np.empty((m, timestamps, d))
    posterior_var_trace = np.empty((m, timestamps, d))
    broadcast_trace = np.zeros((m, timestamps), dtype=bool)
    sampled_trace = np.zeros((m, timestamps, d), dtype=bool)
    stats = CommStats(broadcasts=np.zeros(m, dtype=np.int64))

    adj_needed = (policy.communicate or policy.flood) and m > 1
    noise_scale = coeff[:, None] * np.sqrt(q_diag)[None, :]

    for tidx in range(timestamps):
        t = tidx + 1
        if policy.window_restart and tidx > 0 and tidx % block_len == 0:
            length = min(block_len, timestamps - tidx)
            schedules = fresh_schedules(t, length)
            pids = fresh_pids()
            eps_uniform = block_eps(length)
            posterior = np.zeros((m, d))
            posterior_var = np.tile(uninformed, (m, 1))
            initialized = np.zeros((m, d), dtype=bool)
            last_rhat = np.full((m, d), np.inf)

        adj = topo.adjacency_at(t) if adj_needed else None
        if not cfg.model.freeze_partition:
            sizes = partition_users(cfg.users, m, partition_rng)
            coeff = sizes / float(cfg.users)
            noise_scale = coeff[:, None] * np.sqrt(q_diag)[None, :]

        # Raw aggregates: consumed by the perturbation/selection block below
        # and by nothing else in private modes.
        x_raw = coeff[:, None] * truth[tidx][None, :] + noise_scale * obs_noise[:, tidx, :]

        sampled = np.zeros((m, d), dtype=bool)
        z = np.empty((m, d))
        eps_used = np.full((m, d), np.inf)
        eps_left_after = np.zeros((m, d))

        if policy.always_sample:
            sampled[:] = True
            z[:] = x_raw
        else:
            prev = releases[:, tidx - 1, :] if tidx > 0 else np.zeros((m, d))
            for i in range(m):
                due = [k for k in range(d) if schedules[i][k].is_sampling_point(t)]
                granted: list[int] = []
                grants = np.zeros(d)
                for k in due:
                    if policy.allocation == "uniform":
                        grant = eps_uniform
                        before = math.inf
                    else:
                        assert ledgers is not None and alloc_cfg is not None
                        before = ledgers[i].remaining_window(k, t)
                        grant = allocate_adaptive(
                            ledgers[i], k, t, schedules[i][k].interval, alloc_cfg
                        )
                    if grant <= 0.0:
                        schedules[i][k].note_skipped(t)
                        continue
                    if ledgers is not None:
                        try:
                            ledgers[i].charge(k, t, grant)
                        except BudgetError:
                            schedules[i][k].note_skipped(t)
                            continue
                    granted.append(k)
                    grants[k] = grant
                    eps_left_after[i, k] = max(0.0, min(before, cfg.epsilon) - grant)
                if granted:
                    sampled[i, granted] = True
                    eps_used[i, granted] = grants[granted]
                    if policy.perturb:
                        if policy.grouping:
                            assert thresholds is not None
                            history = releases[i, :tidx, :]
                            predictions = [
                                predict_region(history[:, k], thresholds.history_window)
                                for k in range(d)
                            ]
                            partition = group_regions(
                                granted, predictions,
                                [history[:, k] for k in range(d)], thresholds,
                            )
                            shares = perturb_groups(
                                partition, x_raw[i], grants, sensitivity, server_rngs[i]
                            )
                            for k, value in sorted(shares.items()):
                                z[i, k] = value
                        else:
                            for k in granted:
                                z[i, k] = perturb_count(
                                    x_raw[i, k], sensitivity, grants[k], server_rngs[i]
                                )
                    else:
                        z[i, granted] = x_raw[i, granted]
                for k in range(d):
                    if not sampled[i, k]:
                        z[i, k] = prev[i, k]

        if policy.perturb:
            rhat_eps = np.where(sampled, eps_used, np.inf)
        else:
            rhat_eps = np.full((m, d), np.inf)
        rhat = kcif.effective_variance(
            coeff[:, None], rhat_eps, sensitivity, q_diag[None, :], params.alpha
        )
        rhat = np.maximum(rhat, params.variance_floor)

        prior, prior_var = kcif.predict(posterior, posterior_var, transition, q_diag)
        init_mask = sampled & ~initialized
        if init_mask.any():
            init_prior, init_var = kcif.initialize(
                z, coeff[:, None], rhat, transition, q_diag
            )
            prior = np.where(init_mask, init_prior, prior)
            prior_var = np.where(init_mask, init_var, prior_var)
            initialized |= sampled

        u_full = coeff[:, None] * z / rhat
        w_full = (coeff * coeff)[:, None] / rhat
        u = np.where(sampled, u_full, 0.0)
        weight = np.where(sampled, w_full, 0.0)
        if cfg.kcif.fuse_stale_self:
            # Local-only reuse of the stale value at its last effective variance.
            stale = ~sampled & initialized & np.isfinite(last_rhat)
            stale_u = np.where(stale, coeff[:, None] * z / last_rhat, 0.0)
            stale_w = np.where(stale, (coeff * coeff)[:, None] / last_rhat, 0.0)
        else:
            stale_u = stale_w = 0.0
        last_rhat = np.where(sampled, rhat, last_rhat)

        active = sampled.any(axis=1)
        if policy.communicate and m > 1:
            assert adj is not None
            link = adj.astype(float)
            fused_value = u + stale_u + link @ u
            fused_weight = weight + stale_w + link @ weight
            nbr_count = link @ active.astype(float)
            prior_sum = link @ (prior * active[:, None])
            prior_delta = prior_sum - nbr_count[:, None] * prior
            packets = int(degrees(adj)[active].sum())
            payload = packets * kcif.message_num_bytes(d)
            if packets:
                latency = float(
                    latency_rng.uniform(
                        0.8 * cfg.net.latency_ms_center,
                        1.2 * cfg.net.latency_ms_center,
                        size=packets,
                    ).max()
                )
            else:
                latency = 0.0
            stats.record_round(packets, payload, latency)
            broadcast_trace[:, tidx] = active
        else:
            fused_value = u + stale_u
            fused_weight = weight + stale_w
            prior_delta = np.zeros((m, d))
            if not policy.flood:
                stats.record_round(0, 0, 0.0)

        posterior, posterior_var = kcif.update_from_delta(
            prior, prior_var, fused_value, fused_weight, prior_delta, params.consensus_step
        )

        release_t = posterior
        if policy.flood:
            if m > 1:
                assert adj is not None
                known, _, fpackets, rounds = flood_reachability(adj)
                counts = known.sum(axis=1).astype(float)
                # servers holding the same payload set must release bitwise
                # identical averages, so sum each distinct set once in index
                # order instead of letting a blocked matmul pick the order
                uniq, inverse = np.unique(known, axis=0, return_inverse=True)
                sums = np.stack([posterior[row].sum(axis=0) for row in uniq])
                release_t = sums[inverse] / counts[:, None]
                latency = 0.0
                for forwards in rounds:
                    if forwards:
                        latency += float(
                            latency_rng.uniform(
                                0.8 * cfg.net.latency_ms_center,
                                1.2 * cfg.net.latency_ms_center,
                                size=forwards,
                            ).max()
                        )
                stats.record_round(fpackets, fpackets * flood_payload_bytes(d), latency)
            else:
                stats.record_round(0, 0, 0.0)
            broadcast_trace[:, tidx] = True
            stats.broadcasts += 1
        elif policy.communicate:
            stats.broadcasts += active.astype(np.int64)

        if cfg.kcif.clamp_releases:
            release_t = np.maximum(release_t, 0.0)
        releases[:, tidx, :] = release_t
        observations[:, tidx, :] = z
        posterior_var_trace[:, tidx, :] = posterior_var
        sampled_trace[:, tidx, :] = sampled

        if not policy.always_sample:
            adaptive = cfg.sampling.mode == "adaptive"
            for i in range(m):
                if not sampled[i].any():
                    continue
                for k in range(d):
                    if not sampled[i, k]:
                        continue
                    if adaptive:
                        err = feedback_error(
                            float(prior[i, k]), float(posterior[i, k]), cfg.pid.delta
                        )
                        control = pids[i][k].update(err, t)
                        if policy.interval_law == "quadratic":
                            interval = next_interval(
                                schedules[i][k].interval, control, cfg.pid.theta, cfg.pid.xi
                            )
                        else:
                            interval = next_interval_plus(
                                schedules[i][k].interval, control,
                                eps_left_after[i, k], cfg.pid.theta,
                            )
                        schedules[i][k].note_sampled(t, interval)
                    else:
                        schedules[i][k].note_sampled(t)

    result = RunResult(
        config=cfg,
        truth=truth,
        releases=releases,
        observations=observations,
        posterior_var=posterior_var_trace,
        broadcast=broadcast_trace,
        sampled=sampled_trace,
        stats=stats,
        ledgers=ledgers,
    )
    result.verify()
    return result


_POLICIES = {
    "nonprivate": _Policy(
        name="nonprivate", perturb=False, always_sample=True, allocation="uniform",
        ledger_mode=None, grouping=False, interval_law="quadratic",
        communicate=True, flood=False, window_restart=False,
    ),
    "dpcrowd": _Policy(
        name="dpcrowd", perturb=True, always_sample=False, allocation="uniform",
        ledger_mode="user", grouping=False, interval_law="quadratic",
        communicate=True, flood=False, window_restart=False,
    ),
    "fast": _Policy(
        name="fast", perturb=True, always_sample=False, allocation="uniform",
        ledger_mode="user", grouping=False, interval_law="quadratic",
        communicate=False, flood=False, window_restart=False,
    ),
    "dfast": _Policy(
        name="dfast", perturb=True, always_sample=False, allocation="uniform",
        ledger_mode="user", grouping=False, interval_law="quadratic",
        communicate=False, flood=True, window_restart=False,
    ),
    "dpcrowd_plus": _Policy(
        name="dpcrowd_plus", perturb=True, always_sample=False, allocation="adaptive",
        ledger_mode="w_event", grouping=True, interval_law="budget",
        communicate=True, flood=False, window_restart=False,
    ),
    "dpcrowd_w": _Policy(
        name="dpcrowd_w", perturb=True, always_sample=False, allocation="uniform",
        ledger_mode="w_event", grouping=False, interval_law="quadratic",
        communicate=True, flood=False, window_restart=True,
    ),
}


def run_nonprivate(cfg: ExperimentConfig) -> RunResult:
    """Algorithm with raw aggregates and full-rate broadcasting (no privacy)."""
    return _simulate(cfg, _POLICIES["nonprivate"])


def run_dpcrowd(cfg: ExperimentConfig) -> RunResult:
    """User-level private, intermittent, consensus-filtered estimation (d = 1)."""
    if cfg.model.d != 1:
        raise ConfigError("dpcrowd runs one-dimensional streams")
    return _simulate(cfg, _POLICIES["dpcrowd"])


def run_fast(cfg: ExperimentConfig) -> RunResult:
    """Per-server private filtering with adaptive sampling and no communication."""
    return _simulate(cfg, _POLICIES["fast"])


def run_dfast(cfg: ExperimentConfig) -> RunResult:
    """FAST locally, plus network-wide flooding and unweighted averaging."""
    return _simulate(cfg, _POLICIES["dfast"])


def run_dpcrowd_plus(cfg: ExperimentConfig) -> RunResult:
    """w-event private multi-dimensional estimation with budget-aware sampling
    and dynamic grouping."""
    policy = _POLICIES["dpcrowd_plus"]
    if not cfg.grouping.enabled:
        policy = replace(policy, grouping=False)
    return _simulate(cfg, policy)


def run_dpcrowd_w(cfg: ExperimentConfig) -> RunResult:
    """Baseline: independent finite-stream runs on consecutive w-length blocks."""
    return _simulate(cfg, _POLICIES["dpcrowd_w"])


_RUNNERS = {
    "nonprivate": run_nonprivate,
    "dpcrowd": run_dpcrowd,
    "fast": run_fast,
    "dfast": run_dfast,
    "dpcrowd_plus": run_dpcrowd_plus,
    "dpcrowd_w": run_dpcrowd_w,
}


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    """Dispatch on cfg.algorithm."""
    cfg.validate()
    return _RUNNERS[cfg.algorithm](cfg)
