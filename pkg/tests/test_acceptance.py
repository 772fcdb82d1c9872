"""Acceptance suite: one test and one PASS/FAIL line per criterion.

Criteria 5-9 share their KKT instances with criterion 10 through a cache,
so running criterion 10 alone recomputes them.
"""
import itertools
import math
import time
from functools import cache

import numpy as np

from skg.deterministic import (
    decompose_layers,
    det_capacity,
    det_layer_sum,
    det_upper_bound,
    random_nested_family,
    run_layered_protocol,
    shift_family,
)
from skg.erasure import ErasureConfig, erasure_capacity, run_protocol
from skg.gaussian import achievable_rate, dof, dof_upper, gauss_upper_bound
from skg.kkt import (
    TieError,
    check_candidate,
    f1_root,
    finite_difference_check,
    grid_oracle,
    optimize,
    roots_strictly_ordered,
    solve_kkt,
    two_layer_closed_form,
)
from skg.profiles import GainProfile, StateProfile, db_to_linear
from skg.secure_coding import (
    SecureCombinationSpec,
    mds_secure_generator,
    random_secure_generator,
    resists_selection,
)


def next_prime(k: int) -> int:
    while k < 2 or any(k % d == 0 for d in range(2, math.isqrt(k) + 1)):
        k += 1
    return k


# --- KKT instances shared by criteria 5-10 -------------------------------------

_SOLVED: dict = {}


def solved(gains: GainProfile, profile: StateProfile):
    key = (tuple(gains.gains), gains.p_max, tuple(profile.deltas))
    if key not in _SOLVED:
        _SOLVED[key] = (gains, profile, solve_kkt(gains, profile))
    return _SOLVED[key][2]


@cache
def random_instances():
    rng = np.random.default_rng(2024)
    out = []
    for _ in range(200):
        s = int(rng.choice([2, 3, 4]))
        db = np.sort(rng.uniform(-10, 30, s + 1))
        p_max = float(rng.choice([0.01, 1.0, 10.0, 100.0]))
        out.append((GainProfile.from_db(db, p_max), StateProfile(rng.dirichlet(np.ones(s + 1)))))
    return out


@cache
def two_layer_instances():
    rng = np.random.default_rng(7)
    out = []
    while len(out) < 1000:
        db = np.sort(rng.uniform(-10, 30, 3))
        if np.min(np.diff(db)) < 1e-6:
            continue
        gains = GainProfile.from_db(db, float(rng.choice([0.01, 1.0, 10.0, 100.0])))
        profile = StateProfile(rng.dirichlet(np.ones(3)))
        try:
            closed = two_layer_closed_form(gains, profile)
        except TieError:
            continue
        out.append((gains, profile, closed))
    return out


@cache
def ordered_root_instances():
    out = []
    for s in range(2, 7):
        for p_max in (1e4, 1e6):
            gains = GainProfile(10.0 ** np.arange(s + 1), p_max)
            for profile in (StateProfile.uniform(s + 1), StateProfile(np.arange(1, s + 2) / sum(range(1, s + 2)))):
                if roots_strictly_ordered(gains, profile):
                    out.append((gains, profile))
    return out


DOF_GAMMAS = np.array([0.5, 1.0, 2.0])
DOF_Q = (1e6, 1e9, 1e12)


def dof_instances():
    return [(GainProfile(q ** DOF_GAMMAS, 1.0), StateProfile.uniform(3)) for q in DOF_Q]


def open_sweep(lo, hi, points):
    return np.linspace(lo, hi, points + 2)[1:-1]


def example1_instances(p_max):
    return [(GainProfile(db_to_linear([-5.0, h1, 30.0]), p_max), StateProfile.uniform(3))
            for h1 in open_sweep(-5.0, 30.0, 200)]


def example2_instances():
    sweep = open_sweep(-5.0, 30.0, 36)
    return [(GainProfile(db_to_linear([-5.0, min(a, b), max(a, b), 30.0]), 10.0), StateProfile.uniform(4))
            for a in sweep for b in sweep if a != b]


EXAMPLE3_P = (0.1, 1.0, 10.0, 100.0)


def example3_instances():
    db = np.linspace(-5.0, 30.0, 36)
    return [(GainProfile(db_to_linear(db), p), StateProfile.uniform(36)) for p in EXAMPLE3_P]


# --- criteria ------------------------------------------------------------------


def test_criterion_01_erasure_rate_near_capacity(criterion):
    start = time.perf_counter()
    worst_gap, worst_spread, notes = 0.0, 0.0, []
    for delta, delta_e in [(0.5, 0.5), (0.3, 0.6), (0.7, 0.2)]:
        target = erasure_capacity(delta, delta_e, 16, 1 << 16)
        ratios = []
        for m in (2, 3, 5):
            rates = [run_protocol(ErasureConfig(m, 2000, 16, 1 << 16, delta, delta_e, seed=s),
                                  compute_leakage=False).rate for s in range(20)]
            ratios.append(float(np.mean(rates)) / target)
        worst_gap = max(worst_gap, max(abs(r - 1) for r in ratios))
        spread = (max(ratios) - min(ratios)) / min(ratios)
        worst_spread = max(worst_spread, spread)
        notes.append(f"({delta},{delta_e}) ratios {', '.join(f'{r:.4f}' for r in ratios)}")
    elapsed = time.perf_counter() - start
    ok = worst_gap <= 0.05 and worst_spread <= 0.02 and elapsed <= 60
    criterion(1, ok, f"max |rate/C-1|={worst_gap:.4f} (<=0.05), max spread over m={worst_spread:.4f} (<=0.02), "
                     f"{elapsed:.1f}s (<=60); " + "; ".join(notes))


def test_criterion_02_zero_leakage_and_agreement(criterion):
    rng = np.random.default_rng(99)
    runs = leak_free = agree = 0
    for i in range(150):
        config = ErasureConfig(int(rng.integers(2, 6)), int(rng.integers(20, 300)), int(rng.integers(1, 5)),
                               int(rng.choice([256, 1 << 16])), float(rng.uniform(0.05, 0.95)),
                               float(rng.uniform(0.05, 0.95)), seed=i)
        out = run_protocol(config)
        runs += 1
        leak_free += out.leakage_bits == 0
        agree += out.agreement
    for i in range(60):
        s = int(rng.integers(1, 4))
        L = int(rng.integers(s, 7))
        ranks = [0, *sorted(rng.choice(np.arange(1, L), s - 1, replace=False).tolist()), L] if s > 1 else [0, L]
        fam = random_nested_family(L, 256, ranks, seed=i)
        profile = StateProfile(rng.dirichlet(np.ones(s + 1)))
        out = run_layered_protocol(fam, profile, int(rng.integers(2, 5)), int(rng.integers(20, 150)), seed=i)
        runs += 1
        leak_free += out.leakage_bits == 0
        agree += out.agreement
    ok = runs >= 200 and leak_free == runs and agree == runs
    criterion(2, ok, f"{runs} runs (>=200): zero leakage on {leak_free}, agreement on {agree}")


def test_criterion_03_secure_generators(criterion):
    exhaustive = bad = 0
    for n in range(1, 7):
        q = next_prime(n + 1)
        for n_e in range(n + 1):
            gen = mds_secure_generator(SecureCombinationSpec(n, n_e, q))
            for obs in itertools.combinations(range(n), n_e):
                exhaustive += 1
                bad += not resists_selection(gen, obs)
    rates = {}
    for q, trials in ((251, 20_000), (65521, 200_000)):
        spec = SecureCombinationSpec(10, 4, q)
        rng = np.random.default_rng(q)
        fails = 0
        for _ in range(trials):
            gen = random_secure_generator(spec, rng)
            fails += not resists_selection(gen, rng.choice(10, 4, replace=False))
        rates[q] = fails / trials
    ok = bad == 0 and all(r <= 2 / q for q, r in rates.items())
    criterion(3, ok, f"MDS: {bad} failures in {exhaustive} selections; random failure rate "
                     + ", ".join(f"q={q}: {r:.2e} (<= {2 / q:.2e})" for q, r in rates.items()))


def test_criterion_04_deterministic_capacity(criterion):
    rng = np.random.default_rng(4)
    worst = 0.0
    for i in range(100):
        s = int(rng.integers(1, 6))
        L = int(rng.integers(1, 13))
        ranks = [0, *sorted(rng.integers(0, L + 1, s - 1).tolist()), L]
        fam = random_nested_family(L, int(rng.choice([2, 3, 16, 256])), ranks, seed=i)
        profile = StateProfile(rng.dirichlet(np.ones(s + 1)))
        cap = det_capacity(fam, profile)
        for other in (det_layer_sum(decompose_layers(fam), profile, fam.q), det_upper_bound(fam, profile)):
            worst = max(worst, abs(other - cap) / max(1.0, abs(cap)))
    spots = [
        (shift_family(3, 1 << 16, (0, 1, 3)), StateProfile.uniform(3), 3),
        (random_nested_family(4, 1 << 16, (0, 2, 4), seed=1), StateProfile([0.3, 0.4, 0.3]), 4),
        (random_nested_family(6, 1 << 16, (0, 1, 3, 6), seed=2), StateProfile([0.25, 0.25, 0.25, 0.25]), 3),
    ]
    gaps = []
    for fam, profile, m in spots:
        out = run_layered_protocol(fam, profile, m, 3000, seed=0, compute_leakage=False)
        gaps.append(abs(out.rate / det_capacity(fam, profile) - 1) if out.agreement else math.inf)
    ok = worst <= 1e-12 and max(gaps) <= 0.05
    criterion(4, ok, f"formula gap {worst:.1e} (<=1e-12); simulation gaps "
                     + ", ".join(f"{g:.4f}" for g in gaps) + " (<=0.05)")


def test_criterion_05_kkt_beats_grid(criterion):
    start = time.perf_counter()
    worst, failures = -math.inf, 0
    for gains, profile in random_instances():
        _, rate = optimize(gains, profile, candidates=solved(gains, profile))
        resolution = gains.p_max / (2000 if gains.s == 2 else 200)
        _, grid_rate = grid_oracle(gains, profile, resolution)
        excess = grid_rate - rate - 1e-3 * (1 + rate)
        worst = max(worst, grid_rate - rate)
        failures += excess > 0
    elapsed = time.perf_counter() - start
    ok = failures == 0 and elapsed <= 300
    criterion(5, ok, f"{failures}/200 instances below grid; max grid-KKT {worst:.2e}; {elapsed:.1f}s (<=300)")


def test_criterion_06_two_layer_closed_form(criterion):
    power_gap = rate_gap = 0.0
    for gains, profile, closed in two_layer_instances():
        best, rate = optimize(gains, profile, candidates=solved(gains, profile))
        p = np.asarray(closed.powers)
        power_gap = max(power_gap, float(np.max(np.abs(best.powers - p))) / gains.p_max)
        closed_rate = achievable_rate(closed, gains, profile)
        rate_gap = max(rate_gap, abs(rate - closed_rate) / max(abs(rate), 1e-300))
    ok = power_gap <= 1e-9 and rate_gap <= 1e-12
    criterion(6, ok, f"1000 instances: allocation gap {power_gap:.1e} (<=1e-9), rate gap {rate_gap:.1e} (<=1e-12)")


def test_criterion_07_ordered_roots_unique(criterion):
    instances = ordered_root_instances()
    bad = []
    for gains, profile in instances:
        cands = solved(gains, profile)
        roots = np.array([gains.p_max] + [f1_root(k, gains, profile) for k in range(1, gains.s)] + [0.0])
        if len(cands) != 1 or np.max(np.abs(cands[0].interference - roots)) > 1e-10 * gains.p_max:
            bad.append(gains.s)
    ok = len(instances) >= 5 and not bad
    criterion(7, ok, f"{len(instances)} ordered-root instances, {len(bad)} without a unique root-vector candidate")


def test_criterion_08_dof(criterion):
    limit = dof(StateProfile.uniform(3), DOF_GAMMAS)
    ratios = [optimize(g, p, candidates=solved(g, p))[1] / (0.5 * math.log2(q))
              for (g, p), q in zip(dof_instances(), DOF_Q)]
    gaps = [abs(r - limit) for r in ratios]
    approaching = all(b < a for a, b in zip(gaps, gaps[1:]))
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(100):
        s = int(rng.integers(1, 7))
        profile = StateProfile(rng.dirichlet(np.ones(s + 1)))
        gammas = np.cumsum(rng.uniform(0.01, 3, s + 1))
        L = int(rng.integers(1, 5))
        a, b = dof(profile, gammas, L), dof_upper(profile, gammas, L)
        worst = max(worst, abs(a - b) / max(1.0, abs(b)))
    ok = abs(limit - 1 / 3) <= 1e-12 and approaching and gaps[-1] <= 0.1 * limit and worst <= 1e-12
    criterion(8, ok, "ratios " + ", ".join(f"{r:.4f}" for r in ratios)
              + f" -> {limit:.4f}, final gap {gaps[-1] / limit:.3f} (<=0.1); lower/upper gap {worst:.1e}")


def test_criterion_09_examples(criterion):
    notes, ok = [], True
    for p_max in (0.01, 10.0):
        gaps = []
        for gains, profile in example1_instances(p_max):
            rate = optimize(gains, profile, candidates=solved(gains, profile))[1]
            gaps.append(gauss_upper_bound(gains, profile) - rate)
        ok &= min(gaps) > 0
        notes.append(f"example 1 P={p_max}: min gap {min(gaps):.2e}")
    gaps = []
    for gains, profile in example2_instances():
        rate = optimize(gains, profile, candidates=solved(gains, profile))[1]
        gaps.append(gauss_upper_bound(gains, profile) - rate)
    ok &= min(gaps) > 0
    notes.append(f"example 2: {len(gaps)} points, min gap {min(gaps):.2e}")
    fractions, slowest = {}, 0.0
    for gains, profile in example3_instances():
        start = time.perf_counter()
        best = optimize(gains, profile, candidates=solved(gains, profile))[0]
        slowest = max(slowest, time.perf_counter() - start)
        fractions[gains.p_max] = best.allocation.fractions
    sums_ok = all(abs(f.sum() - 1) <= 1e-9 for f in fractions.values())
    dominates = bool(np.all(np.cumsum(fractions[100.0])[:10] >= np.cumsum(fractions[0.1])[:10]))
    ok &= sums_ok and dominates and slowest <= 120
    notes.append(f"example 3: slowest {slowest:.2f}s (<=120), sums ok {sums_ok}, low-layer dominance {dominates}")
    criterion(9, bool(ok), "; ".join(notes))


def test_criterion_10_certificates(criterion):
    groups = [
        random_instances(),
        [(g, p) for g, p, _ in two_layer_instances()],
        ordered_root_instances(),
        dof_instances(),
        example1_instances(0.01) + example1_instances(10.0),
        example2_instances(),
        example3_instances(),
    ]
    count = bad_cert = bad_fd = 0
    worst_res = worst_fd = 0.0
    for gains, profile in itertools.chain.from_iterable(groups):
        for cand in solved(gains, profile):
            count += 1
            cert = check_candidate(gains, profile, cand)
            worst_res = max(worst_res, cert.residual)
            bad_cert += not (cert.dual_ok and cert.residual <= 1e-10)
            fd = finite_difference_check(gains, profile, cand.interference)
            worst_fd = max(worst_fd, fd)
            bad_fd += fd > 1e-4
    ok = count > 0 and bad_cert == 0 and bad_fd == 0
    criterion(10, ok, f"{count} candidates: {bad_cert} fail KKT (worst residual {worst_res:.1e} <= 1e-10), "
                      f"{bad_fd} fail finite differences (worst {worst_fd:.1e} <= 1e-4)")
