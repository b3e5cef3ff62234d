"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v -s``.
"""

import hashlib
import statistics
import time
from functools import lru_cache

import numpy as np
import pytest

from oracles import central_difference, compass_search, ls_subproblem_mp
from pwadmm import cli
from pwadmm.problems import LossFamily, lipschitz_constant, local_gradient, local_loss, synthesize_least_squares, synthesize_logistic
from pwadmm.rng import Streams
from pwadmm.routing import next_hop_random
from pwadmm.simulator import AsyncSimulator, RunConfig, build_instance, run
from pwadmm.topology import build_transition_matrix
from pwadmm.walk_admm import AdmmParams, AgentState, x_update

pytestmark = pytest.mark.acceptance

INF = float("inf")
LS = LossFamily.LEAST_SQUARES


def _cost_time(trace, threshold):
    hit = trace.first_crossing(threshold)
    return (INF, INF) if hit is None else (hit[2], hit[1])


def test_c1_w_admm_equivalence(criterion):
    start = time.perf_counter()
    mismatches = 0
    for seed in range(5):
        cfg = RunConfig("pw_admm", n_agents=50, density=0.3, n_walks=1, rho=3.0, tau=1.5, seed=seed,
                        max_events=1000)
        net, prob = build_instance(cfg)
        sim = AsyncSimulator(cfg, net, prob)

        # plain W-ADMM on arrays, fed by the same placement and routing streams
        streams = Streams(seed)
        N, n = 50, prob.dim
        rho, tau = cfg.rho, cfg.tau
        P = build_transition_matrix(net)
        hop_rng = streams.routing(0)
        i = int(streams.placement().choice(N, size=1, replace=False)[0])
        X, Lam, z = np.zeros((N, n)), np.zeros((N, n)), np.zeros(n)
        for _ in range(1000):
            d = prob.datasets[i]
            x_old, lam_old = X[i].copy(), Lam[i].copy()
            X[i] = np.linalg.solve(d.ls_hessian + (rho + tau) * np.eye(n),
                                   d.ls_moment + lam_old + rho * z + tau * x_old)
            Lam[i] = lam_old + rho * (z - X[i])
            z = z + (1 / N) * ((X[i] - Lam[i] / rho) - (x_old - lam_old / rho))
            i = next_hop_random(i, P, hop_rng)

            ev = sim.step()
            a = sim.agents[ev.destination]
            same = (np.array_equal(a.x, X[ev.destination]) and np.array_equal(a.lam, Lam[ev.destination])
                    and np.array_equal(sim.tokens[0].z, z) and sim.tokens[0].location == i)
            mismatches += not same
    elapsed = time.perf_counter() - start
    criterion(1, "PW-ADMM with M=1 equals a direct W-ADMM loop",
              mismatches == 0 and elapsed < 5, f"{mismatches} mismatched events of 5000, {elapsed:.2f}s")


def test_c2_token_average_conservation(criterion):
    start = time.perf_counter()
    cfg = RunConfig("pw_admm", n_agents=50, density=0.3, n_walks=10, rho=3.0, tau=1.5, seed=0,
                    max_events=10_000)
    sim = AsyncSimulator(cfg, *build_instance(cfg))
    worst = 0.0
    finite = True
    for _ in range(10_000):
        sim.step()
        zbar = np.mean([t.z for t in sim.tokens], axis=0)
        avg = np.mean([a.x - a.lam / cfg.rho for a in sim.agents], axis=0)
        scale = 1.0 + max(np.linalg.norm(zbar), np.linalg.norm(avg))
        finite &= bool(np.all(np.isfinite(zbar)) and np.all(np.isfinite(avg)))
        worst = max(worst, float(np.linalg.norm(zbar - avg) / scale))
    elapsed = time.perf_counter() - start
    criterion(2, "token average equals agent average after every event",
              finite and worst <= 1e-9 and elapsed < 10, f"worst relative gap {worst:.2e}, {elapsed:.2f}s")


def test_c3_descent_inequality(criterion):
    start = time.perf_counter()
    violations, first_visit_violations, total = 0, 0, 0
    for seed in range(3):
        cfg0 = RunConfig("pw_admm", n_agents=50, density=0.3, seed=seed)
        net, prob = build_instance(cfg0)
        L = lipschitz_constant(prob)
        cfg = RunConfig("pw_admm", n_agents=50, density=0.3, n_walks=1, rho=4 * L, tau=0.0, seed=seed,
                        max_events=2000)
        sim = AsyncSimulator(cfg, net, prob, check_descent=True)
        for _ in range(2000):
            ev = sim.step()
            check = sim.descent_checks[-1]
            total += 1
            if not check.lhs >= check.rhs_bound - 1e-9:
                violations += 1
                first_visit_violations += sim.agents[ev.destination].k == 1
    elapsed = time.perf_counter() - start
    criterion(3, "descent inequality on every sequentialized event",
              violations == 0 and elapsed < 30,
              f"{violations}/{total} events violate, {first_visit_violations} of them first visits, {elapsed:.2f}s")


def test_c4_convergence_to_oracle(criterion):
    start = time.perf_counter()
    reached = []
    for seed in range(5):
        cfg = RunConfig("pw_admm", n_agents=50, density=0.3, n_walks=10, rho=3.0, tau=1.5, seed=seed,
                        max_events=100_000, stop_accuracy=1e-3)
        trace = run(cfg)
        reached.append(trace.first_crossing(1e-3) is not None)
        last_acc = trace.last[3]
    elapsed = time.perf_counter() - start
    criterion(4, "PW-ADMM (M=10, rho=3, tau=1.5) reaches accuracy 1e-3",
              all(reached) and elapsed < 60,
              f"{sum(reached)}/5 seeds, last accuracy {last_acc:.3g}, {elapsed:.2f}s")


# the instance shared by criteria 5 to 7
SETUP = dict(n_agents=100, density=0.3, rho=1.0, tau=3.0)


@lru_cache(maxsize=None)
def _run_to_1e2(algorithm, n_walks, seed):
    if algorithm in ("dgd", "extra"):
        cfg = RunConfig(algorithm, n_agents=100, density=0.3, alpha=0.01 if algorithm == "dgd" else 0.05,
                        seed=seed, max_events=20_000, stop_accuracy=1e-2)
    else:
        cfg = RunConfig(algorithm, n_walks=n_walks, seed=seed, max_events=200_000, stop_accuracy=1e-2,
                        **SETUP)
    return _cost_time(run(cfg), 1e-2)


def test_c5_walk_count_tradeoff(criterion):
    start = time.perf_counter()
    Ms = (1, 10, 30)
    med_cost, med_time = [], []
    for M in Ms:
        results = [_run_to_1e2("pw_admm", M, seed) for seed in range(10)]
        med_cost.append(statistics.median(r[0] for r in results))
        med_time.append(statistics.median(r[1] for r in results))
    elapsed = time.perf_counter() - start
    cost_up = all(a <= b for a, b in zip(med_cost, med_cost[1:]))
    time_down = all(a >= b for a, b in zip(med_time, med_time[1:]))
    criterion(5, "more walks cost more communication and less time",
              cost_up and time_down and elapsed < 300,
              f"median cost {med_cost}, median time {[f'{t:.3g}' for t in med_time]}, {elapsed:.1f}s")


def test_c6_algorithm_ordering(criterion):
    start = time.perf_counter()
    good = 0
    for seed in range(10):
        pw = _run_to_1e2("pw_admm", 10, seed)
        ipw = _run_to_1e2("ipw_admm", 10, seed)
        w = _run_to_1e2("w_admm", 1, seed)
        dgd = _run_to_1e2("dgd", 1, seed)
        extra = _run_to_1e2("extra", 1, seed)
        good += all(a[0] < min(dgd[0], extra[0]) and a[1] < w[1] for a in (pw, ipw))
    elapsed = time.perf_counter() - start
    criterion(6, "PW/IPW beat DGD/EXTRA on communication and W-ADMM on time",
              good >= 8 and elapsed < 300, f"{good}/10 seeds, {elapsed:.1f}s")


def _visit_spread(algorithm, seed):
    cfg = RunConfig(algorithm, n_walks=10, seed=seed, max_events=5000, **SETUP)
    sim = AsyncSimulator(cfg, *build_instance(cfg))
    sim.run()
    return max(sim.counts) - min(sim.counts)


def test_c7_visit_balance(criterion):
    pairs = [(_visit_spread("ipw_admm", s), _visit_spread("pw_admm", s)) for s in range(10)]
    wins = sum(i <= r for i, r in pairs)
    criterion(7, "intelligent routing balances visits at least as well as random",
              wins >= 8, f"{wins}/10 seeds, spreads {pairs}")


def test_c8_gradient_and_subproblem_oracles(criterion):
    rng = np.random.default_rng(8)
    fd_worst = 0.0
    for family, synth in ((LS, synthesize_least_squares), (LossFamily.LOGISTIC, synthesize_logistic)):
        for case in range(100):
            d = synth(1, 30, 2, seed=1000 + case).datasets[0]
            x = rng.normal(scale=2.0, size=2)
            g = local_gradient(d, family, x)
            fd = central_difference(lambda v: local_loss(d, family, v), x)
            fd_worst = max(fd_worst, float(np.linalg.norm(g - fd) / np.linalg.norm(g)))
    x_worst = 0.0
    for case in range(100):
        d = synthesize_least_squares(1, 30, 2, seed=2000 + case).datasets[0]
        tau = float(rng.uniform(0, 3))
        agent = AgentState(0, rng.normal(size=2), rng.normal(size=2), 1, tau)
        z = rng.normal(size=2)
        params = AdmmParams(rho=float(rng.uniform(0.2, 5)), tau=tau)
        x = x_update(agent, z, d, LS, params)
        phi = ls_subproblem_mp(d.features, d.targets, agent.lam, z, agent.x, params.rho, tau)
        ref = compass_search(phi, x + rng.normal(scale=0.1, size=2))
        x_worst = max(x_worst, float(np.max(np.abs(x - ref))))
    criterion(8, "gradients match finite differences, x-update matches a derivative-free minimizer",
              fd_worst <= 1e-6 and x_worst <= 1e-8, f"gradient {fd_worst:.1e} rel, x-update {x_worst:.1e}")


DETERMINISM_SPEC = """\
[experiment]
name = determinism
seeds = 0..2

[defaults]
n_agents = 30
density = 0.3
max_events = 3000

[run.walks]
algorithm = pw_admm, ipw_admm
n_walks = 1, 5
rho = 1
tau = 3

[run.sync]
algorithm = sync_admm, dgd, extra
max_events = 200
"""


def _digest(directory):
    files = sorted(p for p in directory.rglob("*.csv"))
    return {p.relative_to(directory).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest() for p in files}


def test_c9_determinism(criterion, tmp_path):
    spec = tmp_path / "det.ini"
    spec.write_text(DETERMINISM_SPEC)
    digests = []
    for name, jobs in (("a", 1), ("b", 1), ("c", 3)):
        assert cli.main(["run", str(spec), "--out", str(tmp_path / name), "--jobs", str(jobs)]) == 0
        digests.append(_digest(tmp_path / name))
    n_files = len(digests[0])
    criterion(9, "re-runs give byte-identical CSVs, also with --jobs > 1",
              n_files == 22 and digests[0] == digests[1] == digests[2], f"{n_files} files compared")
