"""Acceptance criteria, one test each.

Every test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line with the
measured quantities, then asserts.
"""
import itertools
import json
import math
import time
from fractions import Fraction

import numpy as np
import pandas as pd
import pytest
from scipy.stats import binom

from biasnet.chain import DEFAULT_ALPHAS, DEFAULT_BETAS, amplification_curve, stationary_distribution, transition_matrix
from biasnet.cli import main
from biasnet.inference.diagnostics import hdi
from biasnet.inference.fit import McmcConfig, fit_posterior, grid_posterior_oracle
from biasnet.inference.model import ModelSpec, Posterior
from biasnet.judgment import ModelParams, inv_logit
from biasnet.resample import (
    JudgmentRecord,
    JudgmentSet,
    expected_green_count,
    normalize_weights,
    resample_indices,
)
from biasnet.sim import DIRECTIONAL_HYPOTHESES, exp2_config, run_power_analysis
from biasnet.stats import chi2_sf, compare_conditions
from corpus import CORPUS
from synthetic import hierarchical_data

REDUCED = McmcConfig(chains=4, iterations=1000, warmup=500)


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {detail}")


def test_criterion_1_stationary_analytics(capsys):
    t0 = time.perf_counter()
    curve, dists = amplification_curve(DEFAULT_ALPHAS, DEFAULT_BETAS, with_distributions=True)
    elapsed = time.perf_counter() - t0
    err_binom = 0.0
    for gamma in (0.0, 0.4, -1.1):
        for beta in DEFAULT_BETAS:
            pi = stationary_distribution(transition_matrix(ModelParams(0.0, gamma, beta), 8)).probs
            err_binom = max(err_binom, np.abs(pi - binom.pmf(np.arange(9), 8, inv_logit(gamma + beta))).max())
    table = dists.set_index(["alpha", "beta", "k"])["pi_k"]
    err_mirror = 0.0
    for alpha in DEFAULT_ALPHAS:
        for beta in DEFAULT_BETAS:
            a = table.loc[(alpha, beta)].to_numpy()
            b = table.loc[(alpha, round(-beta, 1) + 0.0)].to_numpy()
            err_mirror = max(err_mirror, np.abs(a - b[::-1]).max())
    ok = err_binom <= 1e-10 and err_mirror <= 1e-10 and elapsed < 1.0
    report(capsys, 1, ok, f"binomial err {err_binom:.2e}, mirror err {err_mirror:.2e}, grid {elapsed:.3f}s")
    assert ok


def test_criterion_2_amplification(capsys):
    t0 = time.perf_counter()
    alphas = (0.25, 0.5, 1.0)
    curve = amplification_curve((0.0,) + alphas, DEFAULT_BETAS)
    elapsed = time.perf_counter() - t0
    pos = curve[curve["beta"] > 0]
    social = pos[pos["alpha"].isin(alphas)]
    margin = float((social["mean_green"] - inv_logit(social["beta"].to_numpy())).min())
    wide = pos.pivot(index="beta", columns="alpha", values="mean_green")
    monotone = bool((wide.diff(axis=1).iloc[:, 1:] >= 0).all().all())
    ok = margin > 0 and monotone and elapsed < 5.0
    report(capsys, 2, ok, f"min excess over sigma(beta) {margin:.4f} on {len(social)} points, "
                          f"non-decreasing in alpha {monotone}, {elapsed:.3f}s")
    assert ok


def test_criterion_3_importance_sampling(capsys):
    t0 = time.perf_counter()
    qs = [Fraction(7, 10), Fraction(11, 20), Fraction(3, 10), Fraction(17, 20)]
    p = Fraction(1, 2)
    worst_identity, worst_enum, worst_z = 0.0, 0.0, 0.0
    rng = np.random.default_rng(2024)
    for flags in itertools.product([0, 1], repeat=4):
        recs = [JudgmentRecord(f"p{i}", "s", bool(f), float(q), float(p)) for i, (f, q) in enumerate(zip(flags, qs))]
        js = JudgmentSet(recs, 4)
        w = normalize_weights(js)
        # exact rational weights and expectation
        raw = [(p if f else 1 - p) / (q if f else 1 - q) for f, q in zip(flags, qs)]
        wn = [r / sum(raw) for r in raw]
        exact = 4 * sum(wi * f for wi, f in zip(wn, flags))
        worst_identity = max(worst_identity, abs(expected_green_count(js, w) - float(exact)))
        # every ordered resample of four indices
        enum = sum(math.prod(wn[i] for i in idx) * sum(flags[i] for i in idx)
                   for idx in itertools.product(range(4), repeat=4))
        worst_enum = max(worst_enum, abs(float(enum - exact)))
        draws = resample_indices(w.normalized, 100_000, rng)
        freq = np.bincount(draws, minlength=4) / draws.size
        target = np.array([float(x) for x in wn])
        se = np.sqrt(target * (1 - target) / draws.size)
        z = np.abs(freq - target)[se > 0] / se[se > 0]
        worst_z = max(worst_z, float(z.max()) if z.size else 0.0)
    elapsed = time.perf_counter() - t0
    ok = worst_identity <= 4e-16 * 4 and worst_enum == 0.0 and worst_z < 3.0 and elapsed < 10.0
    report(capsys, 3, ok, f"identity err {worst_identity:.1e}, enumeration err {worst_enum}, "
                          f"max |z| {worst_z:.2f} over 16 sets x 1e5 draws, {elapsed:.2f}s")
    assert ok


def _fd_relative_error(post, theta):
    _, g = post.log_posterior_grad(theta)
    fd = np.empty_like(theta)
    for i in range(len(theta)):
        h = 1e-5 * max(1.0, abs(theta[i]))
        e = np.zeros_like(theta)
        e[i] = h
        fd[i] = (post.log_posterior(theta + e) - post.log_posterior(theta - e)) / (2 * h)
    return float((np.abs(g - fd) / np.maximum(np.abs(fd), 1.0)).max())


def test_criterion_4_sampler_validity(capsys):
    t0 = time.perf_counter()
    corpus_err = {}
    for name, (spec, data, grids) in CORPUS.items():
        oracle = grid_posterior_oracle(spec, data, grids)
        draws = fit_posterior(spec, data, McmcConfig(4, 1000, 500, seed=17))
        corpus_err[name] = max(abs(float(draws[n].mean()) - oracle.means[n]) for n in oracle.names)
    rng = np.random.default_rng(4)
    grad_err = 0.0
    social = hierarchical_data(rng, 64, 16, alpha=0.25)
    posts = [Posterior(ModelSpec.for_variant(v), social if v == "exp1_social" else hierarchical_data(rng, 64, 16))
             for v in ("exp1_social", "exp1_asocial", "resampling")]
    for i in range(100):
        post = posts[i % 3]
        grad_err = max(grad_err, _fd_relative_error(post, rng.normal(0, 0.5, post.dim)))
    hits = 0
    for rep in range(25):
        data = hierarchical_data(np.random.default_rng(1000 + rep), 64, 16, mu_b=0.4, sigma_b=0.3)
        draws = fit_posterior(ModelSpec.exp1_asocial(), data, McmcConfig(4, 1000, 500, seed=rep))
        mu = draws["mu_b"]
        lo, hi = hdi(mu, 0.9)
        hits += bool(mu.mean() > 0 and lo <= 0.4 <= hi)
    elapsed = time.perf_counter() - t0
    ok = (max(corpus_err.values()) <= 0.05 and grad_err <= 1e-5 and hits >= 20 and elapsed < 600)
    report(capsys, 4, ok, f"max |mcmc - quadrature| {max(corpus_err.values()):.3f} over {len(CORPUS)} instances, "
                          f"gradient rel err {grad_err:.1e} at 100 points, mu_b recovery {hits}/25, {elapsed:.0f}s")
    assert ok


def test_criterion_5_end_to_end_mitigation(capsys):
    t0 = time.perf_counter()
    cfg = exp2_config(networks=4, waves=8, agents_per_wave=8, trials=16)
    result = run_power_analysis(cfg, 20, DIRECTIONAL_HYPOTHESES)
    elapsed = time.perf_counter() - t0
    rates = result.confirmation_rates()
    ok = (len(result.failures) == 0 and len(rates) == 3 and bool((rates >= 0.8).all()) and elapsed < 1800)
    detail = ", ".join(f"{k} {v:.2f}" for k, v in rates.items())
    report(capsys, 5, ok, f"{detail}; failures {len(result.failures)}; {elapsed:.0f}s for 20 simulations")
    assert ok


def _erfc_quantile(p):
    lo, hi = 0.0, 100.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if math.erfc(math.sqrt(mid / 2)) > p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_criterion_6_lr_calibration(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(606)
    n = 400
    rejections = 0
    for _ in range(1000):
        color = np.where(np.arange(2 * n) % 2 == 0, "green", "blue")
        cond = np.repeat(["asocial_motivated", "social_motivated"], n)
        p = np.where(color == "green", 0.58, 0.52)
        y = rng.random(2 * n) < p
        df = pd.DataFrame({"condition": cond, "motivated_color": color, "network": 0,
                           "chose_motivated": y, "chose_correct": y, "stimulus_level": 52})
        rejections += compare_conditions(df, "asocial_motivated", "social_motivated").p_value < 0.05
    rate = rejections / 1000
    tail = chi2_sf(3.841, 1)
    q = _erfc_quantile(0.05)
    tail_ok = round(tail, 6) == round(math.erfc(math.sqrt(3.841 / 2)), 6) and round(chi2_sf(q, 1), 6) == 0.05
    elapsed = time.perf_counter() - t0
    ok = abs(rate - 0.05) <= 0.02 and tail_ok and elapsed < 120
    report(capsys, 6, ok, f"null rejection rate {rate:.3f}, sf(3.841, 1) = {tail:.6f}, "
                          f"sf(q_0.95 = {q:.6f}) = {chi2_sf(q, 1):.6f}, {elapsed:.1f}s")
    assert ok


def test_criterion_7_determinism(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    cfg = {"seed": 7, "experiment": {"networks": 2, "waves": 3,
                                     "inference": {"chains": 2, "iterations": 150, "warmup": 75}},
           "fit": {"chains": 2, "iterations": 200, "warmup": 100},
           "power": {"n_sims": 2, "hypotheses": "directional"}}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    c = str(tmp_path / "cfg.json")

    def pipeline(root):
        codes = [
            main(["stationary", "--config", c, "--out-dir", f"{root}/stationary"]),
            main(["simulate", "--config", c, "--out-dir", f"{root}/simulate"]),
            main(["analyze", f"{root}/simulate/trace.csv", "--config", c, "--out-dir", f"{root}/analyze"]),
            main(["fit", f"{root}/simulate/trace.csv", "--config", c, "--out-dir", f"{root}/fit",
                  "--condition", "asocial_motivated"]),
            main(["power", "--config", c, "--out-dir", f"{root}/power"]),
        ]
        return codes, {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}

    codes_a, files_a = pipeline(tmp_path / "a")
    codes_b, files_b = pipeline(tmp_path / "b")
    same = files_a == files_b
    ok = same and codes_a == codes_b == [0] * 5
    report(capsys, 7, ok, f"{len(files_a)} output files byte-identical across reruns: {same}")
    assert ok
