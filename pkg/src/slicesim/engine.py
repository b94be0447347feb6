"""TTI loop, agent cadence, run modes and result artifacts."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np

from . import association as assoc
from .association import SliceParams, TauState, WeightPair
from .channel import ChannelModel, MobilityState, step_mobility
from .config import SimConfig, noise_mw
from .dqn import AgentRngs, DqnAgent, NonFiniteLoss, build_state, reward, state_dim
from .kpi import KpiLog, eccdf, window_summary
from .network import Network, SliceId, check_one_hot, vector_to_matrix
from .phy import NR_MU0, ber, load_lut
from .rng import StreamSet
from .scheduler import PfState, update_pf_state
from .snapshot import NetworkSnapshot
from .traffic import UserBuffer, drop_expired, dequeue_bits, generate_arrivals

log = logging.getLogger(__name__)

Mode = Literal["train", "eval", "baseline", "compare"]
Algorithm = Literal["IQRA", "LIQRA", "maxSNR"]
ALGORITHMS = ("IQRA", "LIQRA", "maxSNR")
OUT_ENV = "SLICESIM_OUT"


class ConservationError(AssertionError):
    pass


class RunAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class RunPlan:
    mode: Mode = "train"
    algorithm: Algorithm = "IQRA"
    iterations: Optional[int] = None  # defaults from config
    tti_per_step: Optional[int] = None
    seed: Optional[int] = None
    out_dir: Optional[Path] = None
    checkpoint: Optional[Path] = None  # directory holding <slice>_final.npz (eval, or warm start)


@dataclass
class SliceRuntime:
    sid: SliceId
    params: SliceParams
    users: np.ndarray
    tau: TauState
    pf: PfState
    serving: np.ndarray  # 0-based ORU per slice user
    agent: Optional[DqnAgent] = None
    state: Optional[np.ndarray] = None
    action: Optional[int] = None
    weights: Optional[WeightPair] = None
    rewards: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    trace: list = field(default_factory=list)  # 1-based vector per agent step


@dataclass
class RunResult:
    plan: RunPlan
    summary: dict
    rewards: dict  # slice value -> np.ndarray per step
    kpi: KpiLog
    slice_users: dict
    out_dir: Optional[Path]
    step_system_throughput: dict = field(default_factory=dict)  # slice -> per-step bits/s
    associations: dict = field(default_factory=dict)  # slice -> (steps, K_s) 1-based vectors


def slice_params(cfg: SimConfig, net: Network, sid: SliceId, lut) -> SliceParams:
    a = cfg.association
    b = net.budgets[sid]
    return SliceParams(
        slice=sid, users=net.slice_users(sid), prb_budget=b.prb_count, lut=lut,
        fronthaul_cap=b.fronthaul_cap, beta=cfg.scheduler.beta, floor=cfg.scheduler.floor_bps,
        tau_cap=a.tau_cap, scoring=a.scoring, tau_weighting=a.tau_weighting,
        prb_scope=cfg.network.prb_scope, enumeration_cap=a.enumeration_cap,
    )


def sliding_mean(x, window: int = 100) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(x)])
    i = np.arange(1, x.size + 1)
    lo = np.maximum(i - window, 0)
    return (c[i] - c[lo]) / (i - lo)


class Simulation:
    """One seeded run of the TTI loop for a single algorithm."""

    def __init__(self, cfg: SimConfig, plan: RunPlan):
        self.cfg = cfg
        self.plan = plan
        self.algorithm = "maxSNR" if plan.mode == "baseline" else plan.algorithm
        self.learning = plan.mode == "train" and self.algorithm != "maxSNR"
        self.seed = cfg.run.seed if plan.seed is None else plan.seed
        self.iterations = plan.iterations or cfg.run.iterations
        self.tti_per_step = plan.tti_per_step or cfg.run.tti_per_step
        self.kpi_window = cfg.run.kpi_window or self.tti_per_step
        self.num = NR_MU0
        self.net = Network.from_config(cfg)
        lut = load_lut(cfg.phy.lut_path)
        self.lut = lut
        self.streams = StreamSet(self.seed)
        K, M = self.net.K, self.net.M
        self.sigma2 = noise_mw(cfg.channel)
        self.powers = self.net.tx_power
        self.mobility = MobilityState.initial([u.speed for u in self.net.users], self.net.area,
                                              self.streams.get("mobility"))
        self.channel = ChannelModel(
            cfg.channel, self.net.oru_xy, np.array([o.height for o in self.net.orus]),
            self.net.ue_height, self.streams.get("channel"), self.streams.get("shadowing"),
        )
        self.buffers = [UserBuffer() for _ in range(K)]
        self.n_tti = self.iterations * self.tti_per_step
        self.kpi = KpiLog(self.n_tti, K)
        self.slices: list[SliceRuntime] = []
        for si, sid in enumerate(SliceId):
            users = self.net.slice_users(sid)
            if users.size == 0:
                continue
            rt = SliceRuntime(sid, slice_params(cfg, self.net, sid, lut), users,
                              TauState.initial(M), PfState.initial(users.size, cfg.scheduler.beta,
                                                                    cfg.scheduler.floor_bps),
                              np.zeros(users.size, dtype=int))
            if self.algorithm != "maxSNR":
                rngs = AgentRngs(self.streams.get("agent-init", si), self.streams.get("exploration", si),
                                 self.streams.get("replay", si))
                rt.agent = DqnAgent(state_dim(users.size, M), cfg.agent, rngs)
                if plan.mode == "eval" or plan.checkpoint is not None:
                    self._load_agent(rt)
            self.slices.append(rt)
        self.stream_hash = hashlib.sha256()
        self.checks = {"c5": 0, "bits": 0, "one_hot": 0}
        self.assoc_rows: list = []
        self.kpi_rows: list = []
        self.report_rows: list = []
        self.reward_rows: list = []
        self.gain_rows: list = []
        self.buffer_rows: list = []
        self.step_sys_thr = {rt.sid.value: [] for rt in self.slices}

    # ------------------------------------------------------------------ setup

    def _load_agent(self, rt: SliceRuntime) -> None:
        if self.plan.checkpoint is None:
            raise ValueError("eval mode needs a checkpoint directory")
        path = Path(self.plan.checkpoint) / f"{rt.sid.value}_final.npz"
        rt.agent.load(path)

    # -------------------------------------------------------------- the loop

    def snapshot(self, tti: int, ch) -> NetworkSnapshot:
        return NetworkSnapshot(
            tti=tti, position=self.mobility.position.copy(), distance=ch.distance, gain=ch.gain,
            powers=self.powers, sigma2=self.sigma2,
            buffer_bits=np.array([b.bits for b in self.buffers], dtype=np.int64),
            packet_count=np.array([len(b) for b in self.buffers], dtype=np.int64),
            tau_global={rt.sid: rt.tau.global_.copy() for rt in self.slices},
            pf_avg={rt.sid: rt.pf.avg.copy() for rt in self.slices},
        )

    def run_loop(self) -> None:
        tti_ms = self.num.tti_ms
        mob_rng = self.streams.get("mobility")
        for n in range(self.n_tti):
            t = n * tti_ms
            # (1) mobility + channel
            if n > 0:
                self.mobility = step_mobility(self.mobility, tti_ms, mob_rng)
            ch = self.channel.draw(self.mobility, n)
            self.stream_hash.update(ch.gain.tobytes())
            self.stream_hash.update(self.mobility.position.tobytes())
            # (2) arrivals + expiry
            bits_before = np.array([b.bits for b in self.buffers], dtype=np.int64)
            arrived = np.zeros(self.net.K, dtype=np.int64)
            dropped = np.zeros(self.net.K, dtype=np.int64)
            dropped_bits = np.zeros(self.net.K, dtype=np.int64)
            for k, (u, buf) in enumerate(zip(self.net.users, self.buffers)):
                pk = generate_arrivals(t, u, tti_ms)
                buf.push(pk)
                arrived[k] = sum(p.size for p in pk)
                gone = drop_expired(buf, t, u.d_max)
                dropped[k] = len(gone)
                dropped_bits[k] = sum(p.remaining for p in gone)
            snap = self.snapshot(n, ch)
            # (3) agent boundary
            if n % self.tti_per_step == 0:
                step = n // self.tti_per_step
                for rt in self.slices:
                    self._decide(rt, snap, step)
            # (4)-(6) schedule, transmit, commit
            self._transmit(n, t, snap, bits_before, arrived, dropped, dropped_bits)
            if (n + 1) % self.cfg.run.report_window == 0:
                self._report(n)
        # close the final agent step
        final = self.snapshot(self.n_tti, ch)
        for rt in self.slices:
            self._finish_step(rt, final, self.iterations)

    def _finish_step(self, rt: SliceRuntime, snap: NetworkSnapshot, step: int) -> Optional[np.ndarray]:
        """Reward the previous agent step; learn from it when training."""
        s_now = None
        if rt.agent is not None:
            s_now = build_state(snap, rt.users, self.cfg.agent, self.net.area)
        if step == 0:
            return s_now
        end = self.kpi.n
        win = window_summary(self.kpi.rows(max(0, end - self.kpi_window), end), min(self.kpi_window, end),
                             self.num.tti_ms)
        sc = getattr(self.cfg.slices, rt.sid.value)
        thr = win.throughput[rt.users]
        dl = win.delay[rt.users]
        r = reward(thr, dl, sc.r_min_mbps * 1e6, sc.d_max_ms, sc.alpha)
        rt.rewards.append(r)
        loss = None
        if rt.agent is not None and self.learning:
            rt.agent.observe(rt.state, rt.action, r, s_now)
            try:
                loss = rt.agent.learn()
            except NonFiniteLoss as err:
                if self.plan.out_dir is not None:
                    rt.agent.save(Path(self.plan.out_dir) / "checkpoints" / f"{rt.sid.value}_abort.npz")
                raise RunAborted(f"slice {rt.sid.value} step {step}: {err}") from err
            rt.agent.decay()
            if self.plan.out_dir is not None and step % self.cfg.run.checkpoint_every == 0:
                rt.agent.save(Path(self.plan.out_dir) / "checkpoints" / f"{rt.sid.value}_step{step}.npz")
        if loss is not None:
            rt.losses.append(loss)
        sw = float(np.mean(rt.rewards[-100:]))
        w = rt.weights
        self.reward_rows.append([step - 1, rt.sid.value, r, sw,
                                 rt.agent.eps if rt.agent is not None else "",
                                 "" if rt.action is None else rt.action,
                                 "" if w is None else w.w1, "" if w is None else w.w2,
                                 "" if loss is None else loss])
        sys_thr = float(thr.sum())
        self.step_sys_thr[rt.sid.value].append(sys_thr)
        for k, u in enumerate(rt.users):
            self.kpi_rows.append([step - 1, rt.sid.value, int(u) + 1, thr[k], dl[k], win.ber[u],
                                  win.pdr[u], win.success_rate[u]])
        return s_now

    def _decide(self, rt: SliceRuntime, snap: NetworkSnapshot, step: int) -> None:
        s_now = self._finish_step(rt, snap, step)
        ad = ""
        if self.algorithm == "maxSNR":
            v, A = assoc.max_snr_select(snap, rt.params)
            rt.weights = None
        else:
            a = rt.agent.act(s_now, greedy=self.plan.mode == "eval")
            rt.state, rt.action = s_now, a
            rt.weights = rt.agent.weights(a)
            if self.algorithm == "IQRA":
                res = assoc.iqra_select(rt.weights, snap, rt.params)
                v, A, ad = res.vector, res.matrix, res.ad
            else:
                v, A = assoc.liqra_select(rt.weights, snap, rt.params)
        check_one_hot(A)
        self.checks["one_hot"] += 1
        rt.serving = np.asarray(v) - 1
        rt.trace.append(np.asarray(v))
        w = rt.weights
        self.assoc_rows.append([step, rt.sid.value, "" if w is None else w.w1, "" if w is None else w.w2,
                                " ".join(map(str, np.asarray(v).tolist())), ad])

    def _transmit(self, n, t, snap, bits_before, arrived, dropped, dropped_bits) -> None:
        K, M = self.net.K, self.net.M
        tx_all = np.zeros(K, dtype=np.int64)
        prb_all = np.zeros(K, dtype=np.int64)
        ber_all = np.zeros(K)
        done = np.zeros(K, dtype=np.int64)
        delay_sum = np.zeros(K)
        t_symb = self.num.t_symb_ms
        consts = self.lut.constellations()
        for rt in self.slices:
            links = assoc.link_table(snap, rt.params)
            sched = assoc.schedule_slice(rt.serving, links, rt.params, M)
            per_oru = np.bincount(rt.serving, weights=sched.prb, minlength=M)
            limit = rt.params.prb_budget
            if (per_oru.sum() if rt.params.prb_scope == "network" else per_oru.max()) > limit:
                raise ConservationError(f"TTI {n}: slice {rt.sid.value} PRB grants {per_oru} exceed {limit}")
            self.checks["c5"] += 1
            rows = np.arange(rt.users.size)
            sinr_lin = 10 ** (links.sinr_db[rows, rt.serving] / 10)
            mcs = links.mcs[rows, rt.serving]
            user_ber = ber(sinr_lin, consts[mcs])
            for j, k in enumerate(rt.users):
                sent = dequeue_bits(self.buffers[k], int(sched.tx_bits[j]), t, self.num.tti_ms)
                for p, full in sent:
                    if full:
                        done[k] += 1
                        delay_sum[k] += (p.tx_start_ts - p.arrival_ts) + (p.tx_end_ts - p.tx_start_ts) + 2 * t_symb
            tx_all[rt.users] = sched.tx_bits
            prb_all[rt.users] = sched.prb
            ber_all[rt.users] = user_ber
            _, _, tau_now = assoc.oru_tau(rt.serving, sched, links, M, rt.params.tau_cap)
            rt.tau.commit(tau_now)
            rt.pf = update_pf_state(rt.pf, sched.tx_bits, rt.params.tti_s)
        bits_after = np.array([b.bits for b in self.buffers], dtype=np.int64)
        if not np.array_equal(bits_after, bits_before + arrived - tx_all - dropped_bits):
            raise ConservationError(f"TTI {n}: per-user bit conservation violated")
        self.checks["bits"] += 1
        self.kpi.record(tx_all, prb_all, ber_all, dropped, done, delay_sum)
        if self.cfg.run.debug_traces:
            self.gain_rows.extend([n, k + 1, m + 1, 10 * np.log10(snap.gain[k, m])]
                                  for k in range(K) for m in range(M))
            self.buffer_rows.append([n, *bits_after.tolist()])

    def _report(self, n: int) -> None:
        T = self.cfg.run.report_window
        win = window_summary(self.kpi.rows(self.kpi.n - T, self.kpi.n), T, self.num.tti_ms)
        for rt in self.slices:
            for u in rt.users:
                self.report_rows.append([n, rt.sid.value, int(u) + 1, win.pdr[u], win.success_rate[u]])

    # ---------------------------------------------------------------- outputs

    def summary(self) -> dict:
        steps = min(self.cfg.run.qos_final_steps, self.iterations)
        T = steps * self.tti_per_step
        rows = self.kpi.rows(self.kpi.n - T, self.kpi.n)
        win = window_summary(rows, T, self.num.tti_ms)
        out = {
            "config_hash": self.cfg.digest(), "seed": self.seed, "mode": self.plan.mode,
            "algorithm": self.algorithm, "iterations": self.iterations, "tti_per_step": self.tti_per_step,
            "final_steps": steps, "stream_hash": self.stream_hash.hexdigest(),
            "conservation_checks": dict(self.checks), "conservation_violations": 0, "slices": {},
        }
        for rt in self.slices:
            sc = getattr(self.cfg.slices, rt.sid.value)
            users = []
            for u in rt.users:
                thr, dl = float(win.throughput[u]), float(win.delay[u])
                users.append({
                    "user": int(u) + 1, "throughput_bps": thr,
                    "delay_ms": None if np.isnan(dl) else dl,
                    "ber": None if np.isnan(win.ber[u]) else float(win.ber[u]),
                    "pdr": float(win.pdr[u]), "success_rate": float(win.success_rate[u]),
                    "rate_ok": thr >= sc.r_min_mbps * 1e6,
                    "delay_ok": bool(not np.isnan(dl) and dl <= sc.d_max_ms),
                })
                users[-1]["qos_ok"] = bool(users[-1]["rate_ok"] and users[-1]["delay_ok"])
            done = int(win.completed[rt.users].sum())
            dsum = float(rows["delay_sum"][:, rt.users].sum())
            rw = np.asarray(rt.rewards)
            out["slices"][rt.sid.value] = {
                "users": users,
                "qos_attainment": float(np.mean([u["qos_ok"] for u in users])),
                "system_throughput_bps": float(win.throughput[rt.users].sum()),
                "mean_delay_ms": dsum / done if done else None,
                "mean_reward": float(rw.mean()) if rw.size else None,
                "final_mean_reward": float(rw[-steps:].mean()) if rw.size else None,
            }
        return out

    def write(self, out_dir: Path, summary: dict) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        tag = f"# config_hash={summary['config_hash']} seed={summary['seed']} algorithm={self.algorithm}"
        _write_csv(out_dir / "rewards.csv", tag,
                   ["step", "slice", "reward", "reward_sw100", "epsilon", "action", "w1", "w2", "loss"],
                   self.reward_rows)
        _write_csv(out_dir / "kpi.csv", tag,
                   ["step", "slice", "user", "throughput_bps", "delay_ms", "ber", "pdr", "success_rate"],
                   self.kpi_rows)
        _write_csv(out_dir / "pdr_report.csv", tag, ["tti", "slice", "user", "pdr", "success_rate"],
                   self.report_rows)
        _write_csv(out_dir / "associations.csv", tag, ["step", "slice", "w1", "w2", "vector", "ad"],
                   self.assoc_rows)
        if self.cfg.run.debug_traces:
            _write_csv(out_dir / "channel_gain_db.csv", tag, ["tti", "user", "oru", "gain_db"], self.gain_rows)
            _write_csv(out_dir / "buffers.csv", tag,
                       ["tti", *[f"user{k + 1}_bits" for k in range(self.net.K)]], self.buffer_rows)
        for rt in self.slices:
            _write_eccdf(out_dir / "eccdf" / f"throughput_{rt.sid.value}.csv", tag,
                         {self.algorithm: _user_window_values(self, rt, "throughput")})
            _write_eccdf(out_dir / "eccdf" / f"delay_{rt.sid.value}.csv", tag,
                         {self.algorithm: _user_window_values(self, rt, "delay")})
            if rt.agent is not None and self.plan.mode == "train":
                rt.agent.save(out_dir / "checkpoints" / f"{rt.sid.value}_final.npz")
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return "" if np.isnan(x) else repr(float(x))
    return x


def _write_csv(path: Path, tag: str, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        f.write(tag + "\n")
        w = csv.writer(f)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def _user_window_values(sim: Simulation, rt: SliceRuntime, metric: str) -> np.ndarray:
    col = 3 if metric == "throughput" else 4
    vals = np.array([r[col] for r in sim.kpi_rows if r[1] == rt.sid.value], dtype=float)
    return vals[~np.isnan(vals)]


def _write_eccdf(path: Path, tag: str, series: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        f.write(tag + "\n")
        w = csv.writer(f)
        w.writerow(["algorithm", "value", "ccdf"])
        for label, values in series.items():
            if len(values) == 0:
                continue
            x, p = eccdf(values)
            w.writerows([label, repr(float(a)), repr(float(b))] for a, b in zip(x, p))


def resolve_out_dir(out: Optional[Path]) -> Optional[Path]:
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    return None if out is None else Path(out)


def run_single(cfg: SimConfig, plan: RunPlan) -> RunResult:
    sim = Simulation(cfg, plan)
    log.info("run %s/%s seed=%d tti=%d", plan.mode, sim.algorithm, sim.seed, sim.n_tti)
    sim.run_loop()
    summary = sim.summary()
    if plan.out_dir is not None:
        sim.write(Path(plan.out_dir), summary)
    rewards = {rt.sid.value: np.asarray(rt.rewards) for rt in sim.slices}
    return RunResult(plan, summary, rewards, sim.kpi, {rt.sid.value: rt.users for rt in sim.slices},
                     plan.out_dir, {k: np.asarray(v) for k, v in sim.step_sys_thr.items()},
                     {rt.sid.value: np.array(rt.trace) for rt in sim.slices})


def run(cfg: SimConfig, plan: RunPlan) -> dict[str, RunResult] | RunResult:
    """Execute a plan. Compare mode returns one result per algorithm."""
    out = resolve_out_dir(plan.out_dir)
    plan = RunPlan(plan.mode, plan.algorithm, plan.iterations, plan.tti_per_step, plan.seed, out,
                   plan.checkpoint)
    if plan.mode != "compare":
        return run_single(cfg, plan)
    results = {}
    for algo in ALGORITHMS:
        sub = RunPlan("baseline" if algo == "maxSNR" else "train", algo, plan.iterations,
                      plan.tti_per_step, plan.seed, None if out is None else out / algo)
        results[algo] = run_single(cfg, sub)
    hashes = {a: r.summary["stream_hash"] for a, r in results.items()}
    if len(set(hashes.values())) != 1:
        raise RunAborted(f"common random numbers broken: {hashes}")
    if out is not None:
        write_comparison(results, out)
    return results


def write_comparison(results: dict[str, RunResult], out: Path) -> None:
    first = next(iter(results.values())).summary
    tag = f"# config_hash={first['config_hash']} seed={first['seed']} stream_hash={first['stream_hash']}"
    for sid in first["slices"]:
        users = next(iter(results.values())).slice_users[sid]
        thr, dly, sysr = {}, {}, {}
        for algo, res in results.items():
            T = res.kpi.n
            per_user_thr = res.kpi.tx_bits[:T][:, users] / 1e-3
            thr[algo] = per_user_thr.ravel()
            d = res.kpi.delay_sum[:T][:, users]
            c = res.kpi.completed[:T][:, users]
            dly[algo] = (d[c > 0] / c[c > 0])
            sysr[algo] = res.step_system_throughput[sid]
        _write_eccdf(out / "eccdf" / f"throughput_{sid}.csv", tag, thr)
        _write_eccdf(out / "eccdf" / f"delay_{sid}.csv", tag, dly)
        _write_eccdf(out / "eccdf" / f"system_throughput_{sid}.csv", tag, sysr)
    table = {a: {sid: {k: v for k, v in s.items() if k != "users"} for sid, s in r.summary["slices"].items()}
             for a, r in results.items()}
    table = {"config_hash": first["config_hash"], "seed": first["seed"],
             "stream_hash": first["stream_hash"], "algorithms": table}
    (out / "comparison.json").write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")
