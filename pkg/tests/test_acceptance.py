"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Under pytest the lines are collected into the terminal summary; running
``python3 tests/test_acceptance.py`` prints them as each criterion finishes.
"""
import math
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

import conftest  # noqa: E402
from conftest import (  # noqa: E402
    exhaustive_best_score,
    naive_family_score,
    naive_window_posterior,
    random_dataset,
)
from dbnimpute import rng  # noqa: E402
from dbnimpute.bench import (  # noqa: E402
    DEFAULT_LEVELS,
    BenchConfig,
    SyntheticSpec,
    run_benchmark,
    sample_dataset,
)
from dbnimpute.cli import main as cli_main  # noqa: E402
from dbnimpute.discretize import breakpoints, symbolize  # noqa: E402
from dbnimpute.inference import TransitionWindow, compute_ess, window_posterior  # noqa: E402
from dbnimpute.learning import (  # noqa: E402
    FamilyScorer,
    LearnConfig,
    complete_data_counts,
    expectation_maximization,
    learn_dbn,
    learn_structure_tdbn,
    random_dbn,
    random_parameters,
    structure_score,
)
from dbnimpute.model import MISSING  # noqa: E402
from dbnimpute.scoring import collect_counts  # noqa: E402
from dbnimpute.stats import signed_ranks, wilcoxon_signed_rank  # noqa: E402

RESULTS = {}


def _report(number, name, passed, detail, elapsed, budget):
    in_time = elapsed < budget
    ok = passed and in_time
    line = (f"criterion {number} {name}: {'PASS' if ok else 'FAIL'} "
            f"({detail}; {elapsed:.1f}s of {budget:.0f}s)")
    RESULTS[number] = (ok, line)
    conftest.ACCEPTANCE_LINES.append(line)
    if __name__ == "__main__":
        print(line, flush=True)
    assert passed, line
    assert in_time, line


def test_criterion_1_ess_equals_counts():
    t0 = time.perf_counter()
    gen = np.random.default_rng(1001)
    worst = 0.0
    for k in range(100):
        n = int(gen.integers(1, 6))
        cards = tuple(int(c) for c in gen.integers(2, 4, size=n))
        N, T = int(gen.integers(1, 51)), int(gen.integers(1, 11))
        d = random_dataset(gen, n, cards, N, T + 1)
        dbn = random_dbn(n, cards, int(gen.integers(0, 3)), seed=k)
        ess = compute_ess(dbn.structure, dbn.parameters, d)
        counts = collect_counts(d, dbn.structure)
        for a, b in zip(ess.prior + ess.transition, counts.prior + counts.transition):
            worst = max(worst, float(np.abs(a.counts - b.counts).max()))
    _report(1, "ESS equals complete-data counts", worst <= 1e-9,
            f"100 datasets, max |diff| {worst:.1e}", time.perf_counter() - t0, 10)


def _masked_sample(gen, seed, per_window):
    n = int(gen.integers(2, 6))
    d = sample_dataset(random_dbn(n, 2, 1, seed), int(gen.integers(5, 31)),
                       int(gen.integers(3, 9)), seed)
    holes = random_dataset(gen, n, 2, d.num_subjects, d.num_slices,
                           missing_per_window=per_window).missing_mask
    return d.with_data(np.where(holes, MISSING, d.data))


def test_criterion_2_em_monotone():
    t0 = time.perf_counter()
    gen = np.random.default_rng(2002)
    worst = 0.0
    for k in range(100):
        d = _masked_sample(gen, k, per_window=4)
        s = random_dbn(d.num_attributes, 2, 1, seed=10_000 + k).structure
        init = random_parameters(s, d.cardinalities, rng.stream(k, "init"))
        cfg = LearnConfig(smoothing_alpha=0.0, em_rel_tol=0.0, em_max_iters=30)
        em = expectation_maximization(s, init, d, cfg)
        worst = min(worst, float(np.diff(em.loglik_trace).min(initial=0.0)))
    _report(2, "EM log-likelihood non-decreasing", worst >= -1e-8,
            f"100 datasets, largest drop {max(0.0, -worst):.1e}", time.perf_counter() - t0, 60)


def test_criterion_3_sem_monotone():
    t0 = time.perf_counter()
    gen = np.random.default_rng(3003)
    worst = {0.0: 0.0, 1.0: 0.0}
    for k in range(50):
        d = _masked_sample(gen, 500 + k, per_window=4)
        for alpha in worst:
            res = learn_dbn(d, LearnConfig(seed=k, smoothing_alpha=alpha))
            worst[alpha] = min(worst[alpha], float(np.diff(res.scores).min(initial=0.0)))
    drop = max(0.0, -min(worst.values()))
    _report(3, "SEM MDL score non-decreasing", drop <= 1e-8,
            f"50 datasets x alpha in {{0, 1}}, largest drop {drop:.1e}",
            time.perf_counter() - t0, 300)


def test_criterion_4_structure_oracle():
    t0 = time.perf_counter()
    sizes = ((15, 1), (40, 2), (120, 3), (300, 4))
    suite = [(n, N, seed) for n in (2, 3, 4) for N, seed in sizes]
    exact = close = 0
    for n, N, seed in suite:
        d = sample_dataset(random_dbn(n, 2, 1, seed), N, 6, seed)
        NT = N * (d.num_slices - 1)
        cfg = LearnConfig(max_inter_parents=1, smoothing_alpha=0.0)
        s = learn_structure_tdbn(n, complete_data_counts(d), cfg, num_subjects=N,
                                 num_transitions=NT)
        scorer = FamilyScorer(complete_data_counts(d), N, NT, 2.0, 0.0)
        prior, trans = structure_score(s, scorer)
        exact += (prior + trans) == exhaustive_best_score(n, scorer, 1)
        naive = exhaustive_best_score(
            n, lambda i, par, pr: naive_family_score(d, i, par, pr), 1)
        close += abs((prior + trans) - naive) < 1e-9
    _report(4, "structure search equals exhaustive enumeration",
            exact == len(suite) and close == len(suite),
            f"{exact}/{len(suite)} exact, {close}/{len(suite)} vs tally oracle",
            time.perf_counter() - t0, 120)


def test_criterion_5_posterior_oracle():
    t0 = time.perf_counter()
    gen = np.random.default_rng(5005)
    worst = 0.0
    for k in range(1000):
        n = int(gen.integers(1, 5))
        cards = tuple(int(c) for c in gen.integers(2, 4, size=n))
        dbn = random_dbn(n, cards, int(gen.integers(0, 3)), seed=k)
        cells = np.array([[gen.integers(0, c) for c in cards] for _ in range(2)])
        m = int(gen.integers(0, min(3, 2 * n) + 1))
        cells.reshape(-1)[gen.choice(2 * n, size=m, replace=False)] = MISSING
        t = int(gen.integers(0, 2)) * int(gen.integers(1, 9))
        post = window_posterior(TransitionWindow(0, t, cells), dbn)
        _, oracle, _ = naive_window_posterior(dbn, cells.tolist(), t)
        for a, p in zip(post.assignments, post.probabilities):
            worst = max(worst, abs(p - oracle[tuple(int(x) for x in a)]))
    _report(5, "window posterior equals brute force", worst < 1e-9,
            f"1000 windows, max |diff| {worst:.1e}", time.perf_counter() - t0, 30)


def test_criterion_6_synthetic_benchmark():
    t0 = time.perf_counter()
    cfg = BenchConfig(synthetic=[SyntheticSpec(5, 2, 100, 11, 1)],
                      pct_subjects=DEFAULT_LEVELS, pct_cells=DEFAULT_LEVELS,
                      seeds=tuple(range(1, 11)), threads=1)
    means = run_benchmark(cfg).mean_errors()
    grid = [(ps, pc) for ps in DEFAULT_LEVELS for pc in DEFAULT_LEVELS]
    below_mode = sum(means[("dbn", *g)] < means[("mode", *g)] for g in grid)
    within_locf = sum(means[("dbn", *g)] <= means[("locf", *g)] for g in grid)
    ok = below_mode == len(grid) and within_locf >= 0.75 * len(grid)
    _report(6, "scaled synthetic benchmark", ok,
            f"dbn < mode at {below_mode}/16, dbn <= locf at {within_locf}/16",
            time.perf_counter() - t0, 900)


def _enumerated_p(diffs):
    ranks, signs = signed_ranks(diffs)
    w_obs = ranks[signs > 0].sum()
    n = len(ranks)
    w = np.zeros(1)
    for r in ranks:  # all 2^n sign patterns, as an explicit array of W+ values
        w = np.concatenate([w, w + r])
    lower = int((w <= w_obs + 1e-9).sum())
    upper = int((w >= w_obs - 1e-9).sum())
    return min(1.0, 2 * min(lower, upper) / 2 ** n)


def test_criterion_7_wilcoxon():
    t0 = time.perf_counter()
    fixture = wilcoxon_signed_rank([(d, 0) for d in (1, 2, 3, 4, 5)]).p_value
    gen = np.random.default_rng(7007)
    worst = 0.0
    for _ in range(20):
        n = int(gen.integers(1, 13))
        diffs = gen.integers(-8, 9, size=n)
        if not diffs.any():
            diffs[0] = 3
        p = wilcoxon_signed_rank([(float(d), 0.0) for d in diffs]).p_value
        worst = max(worst, abs(p - _enumerated_p(diffs)))
    _report(7, "Wilcoxon exact p-values", fixture == 0.0625 and worst <= 1e-12,
            f"fixture p={fixture}, 20 fixtures max |diff| {worst:.1e}",
            time.perf_counter() - t0, 5)


def test_criterion_8_sax():
    t0 = time.perf_counter()
    cuts = breakpoints(4)
    err = float(np.abs(cuts - np.array([-0.6745, 0.0, 0.6745])).max())
    n, a = 10**5, 4
    counts = np.bincount(symbolize(np.random.default_rng(8008).standard_normal(n), cuts),
                         minlength=a)
    sigma = math.sqrt(n / a * (1 - 1 / a))
    dev = float(np.abs(counts - n / a).max() / sigma)
    _report(8, "SAX breakpoints and occupancy", err < 1e-4 and dev < 3,
            f"max breakpoint error {err:.1e}, max occupancy deviation {dev:.2f} sigma",
            time.perf_counter() - t0, 5)


def test_criterion_9_bench_determinism(tmp_path):
    t0 = time.perf_counter()
    args = ["-q", "--threads", "1", "bench", "--n-vars", "3,5", "--num-subjects", "20",
            "--num-seeds", "3", "--seed", "11", "--no-figures"]
    codes = [cli_main(args + ["--out-dir", str(tmp_path / k)]) for k in "ab"]
    a = (tmp_path / "a" / "report.csv").read_bytes()
    b = (tmp_path / "b" / "report.csv").read_bytes()
    _report(9, "bench determinism", codes == [0, 0] and a == b and len(a) > 0,
            f"{len(a)} bytes, identical={a == b}", time.perf_counter() - t0, 600)


if __name__ == "__main__":
    import tempfile

    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as tmp:
                        fn(Path(tmp))
                else:
                    fn()
            except AssertionError:
                pass
    sys.exit(0 if all(ok for ok, _ in RESULTS.values()) else 1)
