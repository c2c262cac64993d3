"""Acceptance suite: every stated criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one line per
criterion.  The full suite takes several minutes; the sample budgets and
runtime limits are fixed here, not calibrated at runtime.
"""

import csv
import os
import time

import numpy as np

from maxup_lab.augment import AugmentationSpec
from maxup_lab.checks import (check_adversarial_expansion,
                              check_avgaug_expansion, check_dual_norm,
                              check_gap_experiment, check_lemma1_band,
                              check_maxup_expansion, check_rademacher,
                              check_worst_case_01)
from maxup_lab.cli import main as cli_main
from maxup_lab.datasets import DatasetSpec, generate
from maxup_lab.losses import Loss
from maxup_lab.models import build_loss_graph, init_mlp, loss_value
from maxup_lab.rng import RngStream
from maxup_lab.trainers import TrainConfig, maxup_example_gradient, train

SEED = 20240
SAMPLES = 10 ** 6


def _report(num, name, ok, detail=""):
    line = f"[criterion {num:2d}] {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    print(line)
    assert ok, line


def _all_pass(reports):
    return [r for r in reports if r.status != "pass"]


def test_criterion_01_lemma_band():
    started = time.monotonic()
    reports = check_lemma1_band(SAMPLES, SEED)
    elapsed = time.monotonic() - started
    bad = _all_pass(reports)
    closed = [r for r in reports if r.check_name == "lemma1_two_draw_closed_form"]
    ok = not bad and len(closed) == 1 and elapsed < 60.0
    _report(1, "expected-max band and two-draw closed form", ok,
            f"{len(reports)} reports, {elapsed:.1f}s" +
            (f"; failing: {[r.check_name for r in bad]}" if bad else ""))


def test_criterion_02_worst_copy_expansion():
    started = time.monotonic()
    reports = check_maxup_expansion(SAMPLES, SEED)
    elapsed = time.monotonic() - started
    slopes = [r for r in reports if r.check_name.startswith("maxup_expansion_slope")]
    linear = [r for r in reports if "linear" in r.check_name]
    bad = _all_pass(reports)
    in_window = all(1.5 <= r.estimate <= 2.5 for r in slopes)
    ok = not bad and len(slopes) == 5 and in_window and linear and elapsed < 300.0
    _report(2, "worst-copy expansion slopes and linear residual", ok,
            f"slopes={[round(r.estimate, 3) for r in slopes]}, {elapsed:.1f}s")


def test_criterion_03_average_augmentation_expansion():
    started = time.monotonic()
    reports = check_avgaug_expansion(SAMPLES, SEED)
    elapsed = time.monotonic() - started
    bad = _all_pass(reports)
    bowl = [r for r in reports if r.check_name == "avg_aug_expansion_quadratic_bowl"]
    bowl_exact = bowl and abs(bowl[0].oracle - 3.0) < 1e-9
    ok = not bad and bowl_exact and elapsed < 300.0
    _report(3, "average-augmentation curvature expansion", ok,
            f"bowl oracle={bowl[0].oracle if bowl else None}, {elapsed:.1f}s")


def test_criterion_04_adversarial_expansion_and_dual_norm():
    reports = check_adversarial_expansion(0, SEED) + check_dual_norm(0, SEED)
    bad = _all_pass(reports)
    slopes = [r for r in reports if "slope" in r.check_name]
    ok = not bad and all(1.5 <= r.estimate <= 2.5 for r in slopes)
    _report(4, "adversarial expansion slopes and dual-norm identities", ok,
            f"slopes={[round(r.estimate, 3) for r in slopes]}")


def test_criterion_05_gradient_of_max_identity():
    rng = RngStream(SEED, 55)
    spec = AugmentationSpec("gaussian", sigma=0.4)
    loss = Loss("logistic")
    bitwise_ok = 0
    fd_ok = 0
    probes = 0
    attempts = 0
    while probes < 1000 and attempts < 5000:
        attempts += 1
        model = init_mlp(5, [8], 1, "tanh", rng.substream("model", attempts))
        x = rng.substream("x", attempts).normal(5)
        y = 1 if rng.substream("y", attempts).uniform() < 0.5 else -1
        grads, worst, losses, copies = maxup_example_gradient(
            model, loss, x, y, 4, spec, rng.substream("aug", attempts))
        gap = np.sort(losses)[-1] - np.sort(losses)[-2]
        if gap <= 1e-3:  # need a unique argmax with margin
            continue
        probes += 1
        again = build_loss_graph(model, loss, copies[worst], y).param_grads()
        if all(np.array_equal(gw, aw) and np.array_equal(gb, ab)
               for (gw, gb), (aw, ab) in zip(grads, again)):
            bitwise_ok += 1
        # finite differences of the frozen max objective over all parameters
        flat_grad = np.concatenate([np.concatenate([gw.ravel(), gb.ravel()])
                                    for gw, gb in grads])
        h = 1e-5

        def objective():
            return max(loss_value(model, loss, c, y) for c in copies)

        fd = np.empty_like(flat_grad)
        k = 0
        for w, b in model.layers:
            for arr in (w, b):
                flat = arr.reshape(-1)
                for j in range(flat.size):
                    keep = flat[j]
                    flat[j] = keep + h
                    up = objective()
                    flat[j] = keep - h
                    dn = objective()
                    flat[j] = keep
                    fd[k] = (up - dn) / (2 * h)
                    k += 1
        rel = np.linalg.norm(flat_grad - fd) / max(np.linalg.norm(fd), 1e-12)
        if rel <= 1e-5:
            fd_ok += 1
    ok = probes == 1000 and bitwise_ok == 1000 and fd_ok == 1000
    _report(5, "worst-copy gradient identity (bitwise + finite differences)", ok,
            f"probes={probes} bitwise={bitwise_ok} fd={fd_ok}")


def _params_equal(a, b):
    return all(np.array_equal(w1, w2) and np.array_equal(b1, b2)
               for (w1, b1), (w2, b2) in zip(a.layers, b.layers))


def test_criterion_06_reduction_lattice():
    train_set, test_set = generate(DatasetSpec(n_train=48, n_test=16, d=4,
                                               noise_sigma=1.0, seed=SEED))
    init = init_mlp(4, [6], 1, "tanh", RngStream(SEED, 66))
    gauss = AugmentationSpec("gaussian", sigma=0.3)
    ident = AugmentationSpec("identity")
    pairs = [
        ("maxup(m=1) = avg_aug(m=1)",
         TrainConfig(method="maxup", m=1, batch_size=8, lr=0.1, epochs=3,
                     seed=SEED, spec=gauss),
         TrainConfig(method="avg_aug", m=1, batch_size=8, lr=0.1, epochs=3,
                     seed=SEED, spec=gauss)),
        ("avg_aug(identity) = erm",
         TrainConfig(method="avg_aug", m=2, batch_size=8, lr=0.1, epochs=3,
                     seed=SEED, spec=ident),
         TrainConfig(method="erm", batch_size=8, lr=0.1, epochs=3, seed=SEED)),
        ("ohem(batch=1) = erm",
         TrainConfig(method="ohem", batch_size=1, lr=0.1, epochs=3, seed=SEED),
         TrainConfig(method="erm", batch_size=1, lr=0.1, epochs=3, seed=SEED)),
    ]
    from dataclasses import replace
    results = []
    for name, cfg_a, cfg_b in pairs:
        same = True
        for epochs in (1, 2, 3):  # every prefix of the trajectory
            m_a, _ = train(init.copy(), train_set,
                           replace(cfg_a, epochs=epochs), test_set)
            m_b, _ = train(init.copy(), train_set,
                           replace(cfg_b, epochs=epochs), test_set)
            same &= _params_equal(m_a, m_b)
        results.append((name, same))
    ok = all(same for _, same in results)
    _report(6, "reduction lattice (bitwise trajectories)", ok, str(results))


def test_criterion_07_backward_count_economy(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for m, epochs, batch in ((4, 2, 8), (3, 1, 5)):
        out = f"bench_m{m}"
        code = cli_main(["bench", "--set", "dataset.n_train=30",
                         "--set", "dataset.n_test=10",
                         "--set", f"train.epochs={epochs}",
                         "--set", f"train.batch_size={batch}",
                         "--set", f"train.m={m}",
                         "--set", "bench.repeats=1",
                         "--out", out, "--seed", "5"])
        assert code == 0
        with open(os.path.join(out, "bench.csv")) as fh:
            rows = [r for r in csv.DictReader(fh) if r["repeat"] != "median"]
        by_method = {r["method"]: r for r in rows}
        assert int(by_method["avg_aug"]["backward_count"]) == \
            m * int(by_method["maxup"]["backward_count"]), f"m={m}"
        assert int(by_method["maxup"]["forward_count"]) == \
            int(by_method["avg_aug"]["forward_count"])
    _report(7, "backward-count economy in bench", True,
            "avg_aug backwards = m * maxup backwards, forwards equal")


def test_criterion_08_autodiff_gradient_checks():
    from test_autodiff import GRAD_CASES, check_grad
    rng = np.random.default_rng(SEED)
    failures = []
    for name, build in sorted(GRAD_CASES.items()):
        for _ in range(100):
            x = rng.uniform(-2.0, 2.0, 3)
            try:
                check_grad(build, x)
            except AssertionError:
                failures.append(name)
                break
    # composed model check: random MLP loss gradients vs finite differences
    from maxup_lab.models import grad_params
    stream = RngStream(SEED, 88)
    composed_bad = 0
    for t in range(100):
        model = init_mlp(4, [6], 1, "tanh", stream.substream("m", t))
        x = stream.substream("x", t).normal(4)
        y = 1 if stream.substream("y", t).uniform() < 0.5 else -1
        loss = Loss("logistic")
        grads = grad_params(model, loss, x, y)
        h = 1e-4
        worst_rel = 0.0
        for li, (w, b) in enumerate(model.layers):
            for arr, got in ((w, grads[li][0]), (b, grads[li][1])):
                flat = arr.reshape(-1)
                gflat = got.reshape(-1)
                for j in range(flat.size):
                    keep = flat[j]
                    flat[j] = keep + h
                    up = loss_value(model, loss, x, y)
                    flat[j] = keep - h
                    dn = loss_value(model, loss, x, y)
                    flat[j] = keep
                    fd = (up - dn) / (2 * h)
                    worst_rel = max(worst_rel,
                                    abs(gflat[j] - fd) / max(1.0, abs(fd)))
        if worst_rel > 1e-6:
            composed_bad += 1
    ok = not failures and composed_bad == 0
    _report(8, "autodiff gradients vs central differences", ok,
            f"primitive failures={failures}, composed failures={composed_bad}")


def test_criterion_09_rademacher_bound():
    started = time.monotonic()
    reports = check_rademacher(10 ** 4, SEED)
    elapsed = time.monotonic() - started
    bad = _all_pass(reports)
    eq = [r for r in reports if r.check_name == "rademacher_q1_equality"]
    ok = not bad and eq and eq[0].estimate == eq[0].oracle and elapsed < 120.0
    _report(9, "augmented-class complexity bound", ok,
            f"{len(reports)} reports, {elapsed:.1f}s")


def test_criterion_10_worst_case_01_closed_form():
    reports = check_worst_case_01(SAMPLES, SEED)
    bad = _all_pass(reports)
    zero_margin = [r for r in reports if "zero_margin" in r.check_name]
    ok = not bad and len(zero_margin) == 4
    _report(10, "worst-case 0-1 closed form vs brute force", ok,
            f"{len(reports)} reports" +
            (f"; failing: {[r.check_name for r in bad]}" if bad else ""))


def test_criterion_11_smoothing_effect():
    spec = DatasetSpec(n_train=500, n_test=200, d=10, noise_sigma=1.0, seed=SEED)
    train_set, test_set = generate(spec)
    gauss = AugmentationSpec("gaussian", sigma=0.3)
    maxup_norms, erm_norms = [], []
    for seed in range(10):
        init = init_mlp(10, [16], 1, "tanh", RngStream(SEED + 1000 + seed))
        cfg = TrainConfig(method="maxup", m=4, batch_size=32, lr=0.1, epochs=50,
                          seed=seed, spec=gauss, loss=Loss("logistic"))
        _, tr = train(init.copy(), train_set, cfg, test_set)
        maxup_norms.append(tr.column("mean_input_grad_norm")[-1])
        cfg = TrainConfig(method="erm", batch_size=32, lr=0.1, epochs=50,
                          seed=seed, loss=Loss("logistic"))
        _, tr = train(init.copy(), train_set, cfg, test_set)
        erm_norms.append(tr.column("mean_input_grad_norm")[-1])
    med_max = float(np.median(maxup_norms))
    med_erm = float(np.median(erm_norms))
    ok = med_max < med_erm
    _report(11, "worst-copy training lowers the input-gradient norm", ok,
            f"median maxup={med_max:.4f} < erm={med_erm:.4f}")


def test_criterion_12_gap_experiment():
    reports = check_gap_experiment(SAMPLES, SEED)
    bad = _all_pass(reports)
    observed = [r for r in reports if r.check_name == "gap_train_below_test"]
    rows = [r for r in reports if r.check_name.startswith("gap[")]
    ok = not bad and len(rows) == 5 and len(observed) == 1
    _report(12, "worst-of-q gap table (monotone; train-vs-test recorded)", ok,
            observed[0].detail if observed else "missing observation row")
