"""Self-checks behind ``mpe-lab validate``: exact identities and estimator invariants."""
from __future__ import annotations

import numpy as np
from scipy import integrate

from .bench import summarize
from .environments import TinyEnv, TinyMDPSpec, enumerate_tiny_value
from .estimators import estimate_all
from .nn import BACKEND, get_kernels
from .nn import _kernels_py as ref
from .nuisance import NuisanceSet, make_folds, tiny_exact_evaluators
from .paths import clipped_gaussian_score, norm_cdf, norm_pdf
from .truth import TruthSpec, crn_differences, exact_theta_tiny, gpgt_theta_tiny, score_form_theta_tiny


def _tiny_specs(seed: int, count: int = 50):
    rng = np.random.default_rng(seed)
    return [TinyMDPSpec()] + [TinyMDPSpec.random(rng) for _ in range(count)]


def check_policy_gradient_identity(seed):
    gap = max(abs(gpgt_theta_tiny(s) - exact_theta_tiny(s)) for s in _tiny_specs(seed))
    return gap <= 1e-10, f"max |q-contrast - path-sum| = {gap:.2e} over 51 specs"


def check_score_form(seed):
    gap = max(abs(score_form_theta_tiny(s) - gpgt_theta_tiny(s)) for s in _tiny_specs(seed))
    return gap <= 1e-12, f"max |E[Hq] - q-contrast| = {gap:.2e}"


def check_enumerated_derivative(seed):
    gap = 0.0
    for s in _tiny_specs(seed, 10):
        h = 1e-4
        fd = (enumerate_tiny_value(s, h) - enumerate_tiny_value(s, -h)) / (2 * h)
        gap = max(gap, abs(fd - exact_theta_tiny(s)))
    return gap <= 1e-6, f"max |central difference of J - exact| = {gap:.2e}"


def check_special_cases(seed):
    """ASRW with H = 0 is Direct; ASRW with q = 0 is SRW."""
    spec = TinyMDPSpec()
    env = TinyEnv(spec)
    ds = env.simulate(400, 0.0, seed)
    folds = make_folds(ds.n, 5, seed)
    q, h = tiny_exact_evaluators(spec)
    zero = [lambda f, a: np.zeros(np.shape(a))] * 2
    pols = [env.policy(t) for t in (1, 2)]
    full = NuisanceSet.from_stage_functions(folds, "tiny", env.direction, q=q, h=h, policies=pols)
    no_h = NuisanceSet.from_stage_functions(folds, "tiny", env.direction, q=q, h=zero, policies=pols)
    no_q = NuisanceSet.from_stage_functions(folds, "tiny", env.direction, q=zero, h=h, policies=pols)
    ref_est = estimate_all(ds, full)
    g1 = np.max(np.abs(estimate_all(ds, no_h, ("asrw",))["asrw"].psi - ref_est["direct"].psi))
    g2 = np.max(np.abs(estimate_all(ds, no_q, ("asrw",))["asrw"].psi - ref_est["srw"].psi))
    return max(g1, g2) <= 1e-12, f"max score gaps {g1:.1e} (H=0), {g2:.1e} (q=0)"


def check_clipped_score_moments(seed):
    """E[H] = 0 and E[H A] = P(interior) under clip(N(m, s^2), [lo, hi])."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(5):
        m, s = rng.uniform(0.5, 3.5), rng.uniform(0.3, 1.5)
        lo, hi = 1.0, 3.0
        pl, pu = norm_cdf((lo - m) / s), 1 - norm_cdf((hi - m) / s)
        hl = clipped_gaussian_score(m, s, lo, hi, np.array([lo]))[0]
        hu = clipped_gaussian_score(m, s, lo, hi, np.array([hi]))[0]

        def dens(a, k):
            return clipped_gaussian_score(m, s, lo, hi, np.array([a]))[0] * a ** k * norm_pdf((a - m) / s) / s

        e0 = pl * hl + pu * hu + integrate.quad(dens, lo, hi, args=(0,), epsabs=1e-13)[0]
        e1 = pl * hl * lo + pu * hu * hi + integrate.quad(dens, lo, hi, args=(1,), epsabs=1e-13)[0]
        worst = max(worst, abs(e0), abs(e1 - (1 - pl - pu)))
    return worst <= 1e-8, f"max moment error {worst:.1e}"


def check_gradients(seed):
    rng = np.random.default_rng(seed)
    sizes = np.array([3, 5, 4, 1], dtype=np.int64)
    params = rng.normal(scale=0.5, size=ref.param_count(sizes))
    X = rng.normal(size=(7, 3))
    y = rng.normal(size=7)
    worst = 0.0
    backends = ["python"] + (["compiled"] if BACKEND == "compiled" else [])
    for mode in (ref.MSE, ref.RIESZ):
        for name in backends:
            k = get_kernels(name)
            _, g = k.loss_grad(params, sizes, X, y, mode, 2, 0.1)
            h = 1e-6
            for i in range(params.size):
                e = np.zeros_like(params)
                e[i] = h
                fd = (k.loss_grad(params + e, sizes, X, y, mode, 2, 0.1)[0]
                      - k.loss_grad(params - e, sizes, X, y, mode, 2, 0.1)[0]) / (2 * h)
                worst = max(worst, abs(g[i] - fd) / max(1.0, abs(fd)))
    return worst <= 1e-4, f"max relative gradient error {worst:.1e} ({', '.join(backends)})"


def check_crn_chunking(seed):
    env = TinyEnv()
    a = crn_differences(env, TruthSpec(epsilon=0.1, M=10_000, seed=seed, chunk=10_000))
    b = crn_differences(env, TruthSpec(epsilon=0.1, M=10_000, seed=seed, chunk=777))
    return bool(np.array_equal(a, b)), "chunked and unchunked CRN draws identical" if np.array_equal(a, b) \
        else "chunking changed the CRN draws"


def check_summary_invariants(seed):
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(100):
        R = int(rng.integers(1, 30))
        s = summarize(rng.normal(size=R), rng.exponential(size=R), rng.normal())
        ok &= s["rmse"] ** 2 >= s["bias"] ** 2 - 1e-12 and 0.0 <= s["coverage"] <= 1.0
    return bool(ok), "RMSE^2 >= bias^2 and coverage in [0, 1] on 100 random inputs"


CHECKS = (
    ("policy-gradient identity", check_policy_gradient_identity),
    ("score-form identity", check_score_form),
    ("enumerated derivative", check_enumerated_derivative),
    ("ASRW special cases", check_special_cases),
    ("clipped-score moments", check_clipped_score_moments),
    ("MLP gradients", check_gradients),
    ("CRN chunk invariance", check_crn_chunking),
    ("summary invariants", check_summary_invariants),
)


def run_checks(seed: int = 0) -> list[tuple[str, bool, str]]:
    out = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn(seed)
        except Exception as exc:
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
