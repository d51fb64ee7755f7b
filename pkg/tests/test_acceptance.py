"""End-to-end acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line listing its checks and runtime;
the lines are repeated in the terminal summary. Runtime limits are part of
the criteria and are enforced.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy import stats

from lsirm import io
from lsirm.cli import build_parser, main
from lsirm.datagen import GenSpec, generate
from lsirm.model import (ChainState, Hyperparameters, JumpingRules, ModelSpec, ResponseMatrix,
                         total_log_likelihood)
from lsirm.postprocess import oblimin_criterion, oblimin_rotate, procrustes_align
from lsirm.sampler import (McmcConfig, PosteriorSamples, gibbs_update_sigma_eps_sq, gibbs_update_sigma_sq,
                           run_chain, sigma_eps_sq_conditional, sigma_sq_conditional)

from conftest import ACCEPTANCE_LINES

VARIANTS = [ModelSpec(item_params=ip, family=fam) for ip in ("1pl", "2pl") for fam in ("binary", "continuous")]


class Criterion:
    def __init__(self, number, title, limit):
        self.number, self.title, self.limit = number, title, limit
        self.checks = []

    def check(self, desc, ok):
        self.checks.append((desc, bool(ok)))
        return bool(ok)

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        if exc_type is not None:
            self.check(f"raised {exc_type.__name__}: {exc}", False)
        self.check(f"runtime {elapsed:.1f}s < {self.limit:g}s", elapsed < self.limit)
        ok = all(flag for _, flag in self.checks)
        detail = "; ".join(desc if flag else f"FAILED {desc}" for desc, flag in self.checks)
        line = f"{'PASS' if ok else 'FAIL'} criterion {self.number:>2} ({self.title}): {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        if exc_type is None and not ok:
            raise AssertionError(line)
        return False


def random_instance(g, spec, mask=True):
    n, p = int(g.integers(2, 6)), int(g.integers(2, 6))
    d = int(g.integers(1, 4))
    state = ChainState(theta=g.normal(size=n), beta=g.normal(size=p), z=g.normal(size=(n, d)),
                       w=g.normal(size=(p, d)), log_gamma=float(g.normal(0, 0.5)),
                       alpha=np.exp(g.normal(0, 0.5, p)) if spec.two_pl else None,
                       sigma_eps_sq=float(g.uniform(0.2, 3)) if spec.continuous else None)
    y = g.normal(size=(n, p)) if spec.continuous else (g.random((n, p)) < 0.5).astype(float)
    observed = g.random((n, p)) > 0.2 if mask else np.ones((n, p), bool)
    return state, ResponseMatrix(np.where(observed, y, 0.0), observed, spec.family)


def brute_force_loglik(state, spec, data):
    gamma = math.exp(state.log_gamma)
    total = 0.0
    for k in range(data.n_respondents):
        for i in range(data.n_items):
            if not data.observed[k][i]:
                continue
            dist = math.sqrt(sum((a - b) ** 2 for a, b in zip(state.z[k], state.w[i])))
            alpha = state.alpha[i] if spec.two_pl else 1.0
            eta = alpha * state.theta[k] + state.beta[i] - gamma * dist
            y = data.values[k][i]
            if spec.continuous:
                v = state.sigma_eps_sq
                total += -0.5 * math.log(2 * math.pi * v) - (y - eta) ** 2 / (2 * v)
            else:
                p = 1.0 / (1.0 + math.exp(-eta))
                total += math.log(p) if y == 1 else math.log(1.0 - p)
    return total


def test_criterion_01_likelihood_oracle():
    with Criterion(1, "likelihood oracle equivalence", 1.0) as c:
        g = np.random.default_rng(101)
        worst = 0.0
        for spec in VARIANTS:
            for _ in range(50):
                state, data = random_instance(g, spec)
                worst = max(worst, abs(total_log_likelihood(state, spec, data) - brute_force_loglik(state, spec, data)))
        c.check(f"4 variants x 50 instances, max |diff| {worst:.1e} < 1e-10", worst < 1e-10)


def test_criterion_02_rigid_motion_invariance():
    with Criterion(2, "rigid-motion invariance", 1.0) as c:
        g = np.random.default_rng(102)
        worst = 0.0
        for j in range(100):
            spec = VARIANTS[j % 4]
            state, data = random_instance(g, spec)
            d = state.z.shape[1]
            q = stats.ortho_group.rvs(d, random_state=g.integers(2**31)) if d > 1 else np.array([[-1.0]])
            shift = g.normal(size=d) * 3
            moved = state.copy()
            moved.z = state.z @ q + shift
            moved.w = state.w @ q + shift
            worst = max(worst, abs(total_log_likelihood(moved, spec, data) - total_log_likelihood(state, spec, data)))
        c.check(f"100 random states, max |change| {worst:.1e} < 1e-10", worst < 1e-10)


def test_criterion_03_conjugate_updates():
    with Criterion(3, "conjugate-update exactness", 10.0) as c:
        hp = Hyperparameters()
        theta = np.array([1.0, -1.0, 2.0])
        s = ChainState(theta=theta, beta=np.zeros(2), z=np.zeros((3, 2)), w=np.zeros((2, 2)))
        shape, scale = sigma_sq_conditional(s, hp)
        c.check(f"sigma^2 substitution ({shape:.4f}, {scale:.4f}) = (N/2 + a, sum/2 + b)",
                math.isclose(shape, 3 / 2 + hp.pr_a_theta) and math.isclose(scale, 0.5 * 6 + hp.pr_b_theta))

        g = np.random.default_rng(103)
        draws = np.empty(10000)
        for j in range(10000):
            gibbs_update_sigma_sq(s, hp, g)
            draws[j] = s.sigma_sq
        ref = stats.invgamma.rvs(shape, scale=scale, size=10000, random_state=np.random.RandomState(5))
        ks = stats.ks_2samp(draws, ref).statistic
        c.check(f"sigma^2 KS {ks:.4f} <= 0.05", ks <= 0.05)

        spec = ModelSpec(family="continuous")
        y = np.array([[1.0, -1.0], [2.0, 0.0]])
        data = ResponseMatrix(y, np.ones((2, 2), bool), "continuous")
        se = ChainState(theta=np.zeros(2), beta=np.zeros(2), z=np.zeros((2, 2)), w=np.zeros((2, 2)), sigma_eps_sq=1.0)
        shape_e, scale_e = sigma_eps_sq_conditional(se, spec, data, hp)
        c.check(f"sigma_eps^2 substitution ({shape_e:.4f}, {scale_e:.4f}) = (NP/2 + a, sum r^2/2 + b)",
                math.isclose(shape_e, 4 / 2 + hp.pr_a_eps) and math.isclose(scale_e, 0.5 * 6 + hp.pr_b_eps))
        draws = np.empty(10000)
        for j in range(10000):
            gibbs_update_sigma_eps_sq(se, spec, data, hp, g)
            draws[j] = se.sigma_eps_sq
        ref = stats.invgamma.rvs(shape_e, scale=scale_e, size=10000, random_state=np.random.RandomState(6))
        ks = stats.ks_2samp(draws, ref).statistic
        c.check(f"sigma_eps^2 KS {ks:.4f} <= 0.05", ks <= 0.05)


def test_criterion_04_prior_recovery():
    with Criterion(4, "prior recovery on empty data", 120.0) as c:
        n = p = 30
        data = ResponseMatrix(np.zeros((n, p)), np.zeros((n, p), bool))
        spec = ModelSpec(item_params="2pl", missing_mode="mcar")
        # proper sigma^2 prior so the theta marginal is a t distribution; wide
        # jumps because prior-only targets are broad
        hp = Hyperparameters(pr_a_theta=3.0, pr_b_theta=3.0)
        jr = JumpingRules(jump_theta=2.0, jump_beta=2.4, jump_alpha=2.4, jump_gamma=2.4, jump_z=1.7, jump_w=1.7)
        with pytest.warns(UserWarning):
            s = run_chain(data, spec, hp, jr, McmcConfig(niter=22000, nburn=2000, nthin=10, seed=4), progress=False)
        targets = {
            "theta": (s.theta.ravel(), stats.t(6, scale=1.0).cdf),
            "beta": (s.beta.ravel(), stats.norm(0, 1).cdf),
            "alpha": (s.alpha.ravel(), stats.lognorm(1.0, scale=math.exp(0.5)).cdf),
            "log gamma": (np.log(s.gamma), stats.norm(0.5, 1).cdf),
            "z": (s.z.ravel(), stats.norm.cdf),
            "w": (s.w.ravel(), stats.norm.cdf),
        }
        for name, (draws, cdf) in targets.items():
            ks = stats.kstest(draws, cdf).statistic
            c.check(f"{name} KS {ks:.4f}", ks <= 0.05)


def synth(out, *args):
    assert main(["synth", "--n", "200", "--p", "15", "--model", "1pl", "--ndim", "2", "--layout", "clustered",
                 "--out", str(out), *args]) == 0
    return out / "data.csv", json.loads((out / "truth.json").read_text())


def fit_summary(out, data, *args):
    assert main(["fit", str(data), "--niter", "6000", "--nburn", "1000", "--nthin", "5", "--seed", "11",
                 "--quiet", "--out", str(out), *args]) == 0
    return json.loads((out / "chain_1" / "summary.json").read_text())


def cluster_distances(w, labels):
    d = np.linalg.norm(w[:, None] - w[None], axis=2)
    same = labels[:, None] == labels[None]
    off = ~np.eye(len(w), dtype=bool)
    return d[same & off].mean(), d[~same].mean()


@pytest.fixture(scope="module")
def recovery_data(tmp_path_factory):
    # theta sd 2: at sd 1, theta correlation is capped near 0.8 by the
    # information in 15 binary items even with every other parameter known
    root = tmp_path_factory.mktemp("recovery")
    on = synth(root / "gamma1", "--gamma", "1", "--theta-sd", "2", "--seed", "1")
    off = synth(root / "gamma0", "--gamma", "0", "--theta-sd", "2", "--seed", "1")
    return root, on, off


def test_criterion_05_parameter_recovery(recovery_data):
    root, (data, truth), _ = recovery_data
    with Criterion(5, "parameter recovery at desk scale", 300.0) as c:
        est = fit_summary(root / "fit5", data)
        r_beta = np.corrcoef(est["beta_estimate"], truth["beta"])[0, 1]
        r_theta = np.corrcoef(est["theta_estimate"], truth["theta"])[0, 1]
        within, between = cluster_distances(np.array(est["w_estimate"]), np.array(truth["item_cluster"]))
        c.check(f"corr(beta) {r_beta:.3f} > 0.90", r_beta > 0.90)
        c.check(f"corr(theta) {r_theta:.3f} > 0.85", r_theta > 0.85)
        c.check(f"gamma {est['gamma_estimate']:.3f} in [0.6, 1.5]", 0.6 <= est["gamma_estimate"] <= 1.5)
        c.check(f"item clusters within {within:.3f} < between {between:.3f}", within < between)


def test_criterion_05_reference_unit_theta_sd(tmp_path):
    # informational: the same fit on theta sd 1 data; not a pass/fail criterion
    data, truth = synth(tmp_path / "sd1", "--gamma", "1", "--theta-sd", "1", "--seed", "1")
    est = fit_summary(tmp_path / "fit", data)
    r_theta = np.corrcoef(est["theta_estimate"], truth["theta"])[0, 1]
    r_beta = np.corrcoef(est["beta_estimate"], truth["beta"])[0, 1]
    line = (f"INFO criterion  5 at theta sd 1: corr(theta) {r_theta:.3f}, corr(beta) {r_beta:.3f}, "
            f"gamma {est['gamma_estimate']:.3f}")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert r_beta > 0.9


def test_criterion_06_spike_and_slab(recovery_data):
    root, (data_on, _), (data_off, _) = recovery_data
    with Criterion(6, "spike-and-slab selection", 600.0) as c:
        pi_on = fit_summary(root / "fit6on", data_on, "--spikenslab")["pi_estimate"]
        pi_off = fit_summary(root / "fit6off", data_off, "--spikenslab")["pi_estimate"]
        c.check(f"pi on gamma=1 data {pi_on:.4f} > 0.9", pi_on > 0.9)
        c.check(f"pi on gamma=0 data {pi_off:.4f} < 0.5", pi_off < 0.5)


def test_criterion_07_missing_data():
    with Criterion(7, "MAR/MCAR consistency", 300.0) as c:
        full, _ = generate(GenSpec(ModelSpec(), 60, 10, gamma=1.0), 71)
        cfg = McmcConfig(niter=600, nburn=100, nthin=5, seed=3)
        a = run_chain(full, ModelSpec(missing_mode="mar"), cfg=cfg, progress=False)
        b = run_chain(full, ModelSpec(missing_mode="mcar"), cfg=cfg, progress=False)
        same = all(np.array_equal(getattr(a, f), getattr(b, f))
                   for f in ("theta", "beta", "gamma", "z", "w", "sigma_sq", "log_posterior"))
        c.check("complete data: MAR and MCAR chains bit-identical", same)

        truth_data, _ = generate(GenSpec(ModelSpec(), 200, 15, gamma=1.0, layout="clustered"), 72)
        g = np.random.default_rng(73)
        observed = g.random(truth_data.observed.shape) >= 0.1
        masked = ResponseMatrix(np.where(observed, truth_data.values, 0.0), observed)
        s = run_chain(masked, ModelSpec(missing_mode="mar"),
                      cfg=McmcConfig(niter=6000, nburn=1000, nthin=5, seed=3), progress=False)
        imp = s.imputed.mean(axis=0)
        rows, cols = masked.missing_cells()
        held_out = truth_data.values[rows, cols]
        item_rate = (masked.values * masked.observed).sum(0) / masked.observed.sum(0)
        acc = np.mean((imp > 0.5) == (held_out == 1))
        base = np.mean((item_rate[cols] > 0.5) == (held_out == 1))
        c.check(f"{imp.size} imp_estimate values in [0, 1]", np.all((imp >= 0) & (imp <= 1)))
        c.check(f"imputation accuracy {acc:.3f} > item-majority baseline {base:.3f}", acc > base)


def test_criterion_08_procrustes():
    with Criterion(8, "Procrustes suite", 5.0) as c:
        g = np.random.default_rng(108)
        fields = dict(gamma=np.ones(50), sigma_sq=np.ones(50), accept_theta=np.zeros(12), accept_beta=np.zeros(7),
                      accept_z=np.zeros(12), accept_w=np.zeros(7), accept_gamma=0.0, spec=ModelSpec())
        z, w = g.normal(size=(50, 12, 2)), g.normal(size=(50, 7, 2))
        s = PosteriorSamples(theta=np.zeros((50, 12)), beta=np.zeros((50, 7)), z=z, w=w,
                             log_posterior=g.normal(size=50), **fields)
        al = procrustes_align(s)
        dist = lambda a, b: np.linalg.norm(a[:, None] - b[None], axis=2)
        worst = max(np.abs(dist(al.z_aligned[j], al.w_aligned[j]) - dist(z[j], w[j])).max() for j in range(50))
        c.check(f"distance preservation max {worst:.1e} <= 1e-8", worst <= 1e-8)

        ref_z, ref_w = z[al.reference_index], w[al.reference_index]
        q = np.array([[0.0, -1.0], [1.0, 0.0]])
        moved = s.__class__(**{**s.__dict__, "z": np.stack([ref_z, ref_z @ q + 1.0]),
                               "w": np.stack([ref_w, ref_w @ q + 1.0]), "log_posterior": np.array([1.0, 0.0]),
                               "theta": np.zeros((2, 12)), "beta": np.zeros((2, 7)), "gamma": np.ones(2),
                               "sigma_sq": np.ones(2)})
        rec = procrustes_align(moved)
        err = max(np.abs(rec.z_aligned[1] - ref_z).max(), np.abs(rec.w_aligned[1] - ref_w).max())
        c.check(f"known rigid motion recovered, max error {err:.1e}", err <= 1e-8)

        again = procrustes_align(s.__class__(**{**s.__dict__, "z": al.z_aligned, "w": al.w_aligned}),
                                 reference_index=al.reference_index)
        err = max(np.abs(again.z_aligned - al.z_aligned).max(), np.abs(again.w_aligned - al.w_aligned).max())
        c.check(f"idempotence max change {err:.1e}", err <= 1e-8)


def test_criterion_09_oblimin():
    with Criterion(9, "oblimin suite", 10.0) as c:
        g = np.random.default_rng(109)
        descents = 0
        for _ in range(100):
            d = int(g.integers(2, 4))
            w = g.normal(size=(int(g.integers(4, 30)), d))
            res = oblimin_rotate(g.normal(size=(20, d)), w)
            descents += res.criterion[-1] <= oblimin_criterion(w)[0] + 1e-12 and bool(np.all(np.diff(res.criterion) <= 1e-12))
        c.check(f"criterion descent on {descents}/100 configurations", descents == 100)

        z, w = g.normal(size=(20, 2)), g.normal(size=(15, 2))
        for _ in range(100):
            res = oblimin_rotate(z, w)
            z, w = res.z, res.w
            if res.n_iter == 0:
                break
        m = oblimin_rotate(z, w).transform
        perm = np.abs(m).argmax(axis=0)
        canon = m[perm] * np.sign(m[perm, np.arange(2)])
        err = np.abs(canon - np.eye(2)).max()
        c.check(f"stationary configuration transform within {err:.1e} of identity", err <= 1e-6)


def test_criterion_10_performance(tmp_path):
    assert main(["synth", "--n", "726", "--p", "56", "--model", "1pl", "--seed", "10", "--out", str(tmp_path)]) == 0
    with Criterion(10, "726x56 performance envelope", 600.0) as c:
        assert main(["fit", str(tmp_path / "data.csv"), "--out", str(tmp_path / "run"), "--quiet"]) == 0
        manifest = io.read_manifest(tmp_path / "run" / "chain_1")
        c.check(f"726x56 fit at niter={manifest['config']['niter']} stored {manifest['n_draws']} draws",
                manifest["config"]["niter"] == 15000 and manifest["n_draws"] == 2500)
        c.check(f"kernel backend {manifest['meta']['kernel_backend']}", True)


# documented argument defaults of the reference implementation
DOCUMENTED_DEFAULTS = {
    "niter": 15000, "nburn": 2500, "nthin": 5, "nprint": 500,
    "pr_mean_theta": 0, "pr_mean_beta": 0, "pr_sd_beta": 1, "pr_mean_alpha": 0.5, "pr_sd_alpha": 1,
    "pr_mean_gamma": 0.5, "pr_sd_gamma": 1, "pr_a_theta": 0.001, "pr_b_theta": 0.001,
    "pr_a_eps": 0.001, "pr_b_eps": 0.001,
    "jump_theta": 1.0, "jump_beta": 0.4, "jump_alpha": 1.0, "jump_gamma": 0.025, "jump_z": 0.5, "jump_w": 0.5,
}


def test_criterion_11_default_table():
    with Criterion(11, "CLI default-table conformance", 1.0) as c:
        args = build_parser().parse_args(["fit", "data.csv"])
        wrong = [f"{k}={getattr(args, k)} (expected {v})" for k, v in DOCUMENTED_DEFAULTS.items() if getattr(args, k) != v]
        c.check(f"{len(DOCUMENTED_DEFAULTS) - len(wrong)}/{len(DOCUMENTED_DEFAULTS)} defaults match" +
                (": " + ", ".join(wrong) if wrong else ""), not wrong)
        c.check("model/family/gamma/missing defaults 1pl/binary/free/complete",
                (args.model, args.family, args.fixed_gamma, args.spikenslab, args.missing)
                == ("1pl", "binary", False, False, "complete"))
