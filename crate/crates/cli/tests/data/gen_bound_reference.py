#!/usr/bin/env python3
"""Reference evaluation of the closed-form risk bounds at 50-digit precision.

Regenerates bound_reference.json, the frozen oracle table used by the
acceptance suite to cross-validate the f64 bound calculators. Inputs are
dyadic rationals so that the JSON floats parse to exactly the same f64
values the Rust side sees. Run from this directory:

    python3 gen_bound_reference.py

All randomness comes from an explicit splitmix64 stream, so the output is
byte-stable across runs and Python versions.
"""

import json
from mpmath import mp, mpf, log, sqrt, gamma, pi, e

mp.dps = 50

MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def below(self, n):
        return self.next() % n

    def dyadic(self, lo, hi, bits=8):
        """A dyadic rational in [lo, hi] with denominator 2**bits."""
        steps = int(round((hi - lo) * (1 << bits)))
        return lo + float(self.below(steps + 1)) / (1 << bits)


def fro2(a):
    return sum(mpf(x) * mpf(x) for row in a for x in row)


def matmul(a, b):
    rows, inner, cols = len(a), len(b), len(b[0])
    return [
        [sum(mpf(a[i][t]) * mpf(b[t][j]) for t in range(inner)) for j in range(cols)]
        for i in range(rows)
    ]


def transpose(a):
    return [[a[i][j] for i in range(len(a))] for j in range(len(a[0]))]


def matsub(a, b):
    return [[mpf(a[i][j]) - mpf(b[i][j]) for j in range(len(a[0]))] for i in range(len(a))]


def approx_term(x, m_mat, n_mat, b_mat):
    return fro2(matmul(x, matsub(matmul(m_mat, transpose(n_mat)), b_mat)))


def theorem1(case):
    ell, p, m, k, k0 = case["ell"], case["p"], case["m"], case["k"], case["k0"]
    s2 = mpf(case["s2"])
    nm2, nn2 = fro2(case["m_mat"]), fro2(case["n_mat"])
    xf2 = fro2(case["x_mat"])
    approx = approx_term(case["x_mat"], case["m_mat"], case["n_mat"], case["b_mat"])
    rank = 6 * s2 * (m + p) * k0 * log(mpf(1.34) * ell * p / s2)
    kterm = 8 * s2 * k * log(mpf(22.17) * ell * p * k * k * (m * m + p * p) / s2)
    design = (2 * s2 * xf2 / (ell * p)) * (nn2 + nm2 + 2 * s2 / (ell * p) + 16 * s2)
    norm = 8 * s2 * (nn2 + nm2 + log(2))
    return {
        "approx": approx,
        "rank": rank,
        "k": kterm,
        "design": design,
        "norm": norm,
        "total": approx + rank + kterm + design + norm,
    }


def remark1(case):
    k0, m, p, ell = case["k0"], case["m"], case["p"], case["ell"]
    s2, cap_c, amp_c = mpf(case["s2"]), mpf(case["cap_c"]), mpf(case["amp_c"])
    bracket = (
        log(mpf(ell) * max(p, m))
        + log(max(1 / s2, mpf(1)))
        + 1
        + cap_c * cap_c * (1 + amp_c * amp_c + s2)
    )
    return 50 * s2 * (m + p) * k0 * bracket


def kl_restriction(case):
    p, m, k, k0 = case["p"], case["m"], case["k"], case["k0"]
    c, kap, a = mpf(case["c"]), mpf(case["kappa"]), mpf(case["a"])
    nm2, nn2 = fro2(case["m_mat"]), fro2(case["n_mat"])
    val = 4 * c * c + 2 * nm2 + 2 * nn2 + 2 * log(2)
    val += (m + p) * k0 * log((1 / c) * sqrt(3 * pi * p * k / 4))
    val += 2 * k * log(gamma(a) * 3 ** (a + 1) * e**2 / (kap ** (a + 1) * 2**a))
    return val


def oracle_free_c(case):
    c, lam = mpf(case["c"]), mpf(case["lambda"])
    xf2 = fro2(case["x_mat"])
    nm2, nn2 = fro2(case["m_mat"]), fro2(case["n_mat"])
    approx = approx_term(case["x_mat"], case["m_mat"], case["n_mat"], case["b_mat"])
    fit = 2 * c * c * xf2 * (nn2 + nm2 + 2 * c * c)
    return fit + approx + kl_restriction(case) / lam


def fmt(v):
    return mp.nstr(v, 17, strip_zeros=False)


def rand_matrix(rng, rows, cols, active_cols=None):
    out = []
    for _ in range(rows):
        row = []
        for j in range(cols):
            if active_cols is not None and j >= active_cols:
                row.append(0.0)
            else:
                row.append(rng.dyadic(-2.0, 2.0))
        out.append(row)
    return out


def dyadic_at_most(bound, bits=44):
    """Largest dyadic with denominator 2**bits that is <= 0.9 * bound."""
    scaled = mpf(0.9) * bound * (1 << bits)
    return float(int(scaled)) / (1 << bits)


def gen_theorem1_cases(rng, n):
    cases = []
    for _ in range(n):
        p = 1 + rng.below(5)
        m = 1 + rng.below(5)
        k = 1 + rng.below(min(p, m))
        k0 = rng.below(k + 1)
        ell = 2 + rng.below(11)
        case = {
            "ell": ell,
            "p": p,
            "m": m,
            "k": k,
            "k0": k0,
            "s2": max(rng.dyadic(0.0, 2.0), 0.0625),
            "m_mat": rand_matrix(rng, p, k, k0),
            "n_mat": rand_matrix(rng, m, k, k0),
            "b_mat": rand_matrix(rng, p, m),
            "x_mat": rand_matrix(rng, ell, p),
        }
        terms = theorem1(case)
        case["expected"] = {name: fmt(val) for name, val in terms.items()}
        cases.append(case)
    return cases


def gen_remark1_cases(rng, n):
    cases = []
    for _ in range(n):
        case = {
            "k0": rng.below(6),
            "m": 1 + rng.below(30),
            "p": 1 + rng.below(30),
            "ell": 2 + rng.below(199),
            "s2": max(rng.dyadic(0.0, 4.0), 0.03125),
            "cap_c": max(rng.dyadic(0.0, 2.0), 0.00390625),
            "amp_c": max(rng.dyadic(0.0, 2.0), 0.00390625),
        }
        case["expected"] = fmt(remark1(case))
        cases.append(case)
    return cases


def kl_kappa_bound(p, m, k, c):
    cc = mpf(c) * mpf(c)
    return min(
        cc / (2 * p * k * log(2 * p * k)),
        cc / (2 * m * k * log(2 * m * k)),
        mpf("0.5"),
    )


def gen_kl_cases(rng, n):
    a_choices = [1.0, 1.5, 2.0, 2.5, 3.25]
    cases = []
    while len(cases) < n:
        p = 1 + rng.below(5)
        m = 1 + rng.below(5)
        k = 1 + rng.below(min(p, m))
        k0 = rng.below(k + 1)
        c = max(rng.dyadic(0.0, 1.5), 0.125)
        kap = dyadic_at_most(kl_kappa_bound(p, m, k, c))
        if kap <= 0.0:
            continue
        case = {
            "p": p,
            "m": m,
            "k": k,
            "k0": k0,
            "c": c,
            "kappa": kap,
            "a": a_choices[rng.below(len(a_choices))],
            "m_mat": rand_matrix(rng, p, k, k0),
            "n_mat": rand_matrix(rng, m, k, k0),
        }
        case["expected"] = fmt(kl_restriction(case))
        cases.append(case)
    return cases


def gen_free_c_cases(rng, n):
    a_choices = [1.0, 1.5, 2.0, 2.5, 3.25]
    cases = []
    while len(cases) < n:
        p = 1 + rng.below(4)
        m = 1 + rng.below(4)
        k = 1 + rng.below(min(p, m))
        k0 = rng.below(k + 1)
        ell = 2 + rng.below(9)
        s2 = max(rng.dyadic(0.0, 2.0), 0.0625)
        c = max(rng.dyadic(0.0, 1.5), 0.125)
        kap = dyadic_at_most(kl_kappa_bound(p, m, k, c))
        if kap <= 0.0:
            continue
        case = {
            "ell": ell,
            "p": p,
            "m": m,
            "k": k,
            "k0": k0,
            "s2": s2,
            "c": c,
            "kappa": kap,
            "a": a_choices[rng.below(len(a_choices))],
            "lambda": dyadic_at_most(1 / (4 * mpf(s2))),
            "m_mat": rand_matrix(rng, p, k, k0),
            "n_mat": rand_matrix(rng, m, k, k0),
            "b_mat": rand_matrix(rng, p, m),
            "x_mat": rand_matrix(rng, ell, p),
        }
        case["expected"] = fmt(oracle_free_c(case))
        cases.append(case)
    return cases


def singles():
    """Worked examples that are frozen directly into unit tests."""
    out = {}

    ex = {
        "ell": 2,
        "p": 2,
        "m": 2,
        "k": 1,
        "k0": 0,
        "s2": 1.0,
        "m_mat": [[0.0], [0.0]],
        "n_mat": [[0.0], [0.0]],
        "b_mat": [[0.0, 0.0], [0.0, 0.0]],
        "x_mat": [[1.0, 0.0], [0.0, 1.0]],
    }
    out["theorem1_identity_example"] = {k: fmt(v) for k, v in theorem1(ex).items()}

    out["remark1_example"] = fmt(
        remark1({"k0": 2, "m": 10, "p": 10, "ell": 100, "s2": 1.0, "cap_c": 1.0, "amp_c": 1.0})
    )

    kl = {
        "p": 2,
        "m": 2,
        "k": 2,
        "k0": 1,
        "c": 0.1,
        "kappa": 1e-4,
        "a": 1.0,
        "m_mat": [[0.0, 0.0], [0.0, 0.0]],
        "n_mat": [[0.0, 0.0], [0.0, 0.0]],
    }
    out["kl_zero_factor_example"] = fmt(kl_restriction(kl))

    a, b, g = mpf(2.5), mpf(0.3), mpf(0.7)
    out["log_prior_gamma_example"] = fmt(a * log(b) - log(gamma(a)) - (a + 1) * log(g) - b / g)

    return out


def main():
    rng = SplitMix64(0x1077E57_BA5EBA11)
    doc = {
        "singles": singles(),
        "theorem1": gen_theorem1_cases(rng, 20),
        "remark1": gen_remark1_cases(rng, 20),
        "kl_restriction": gen_kl_cases(rng, 20),
        "oracle_free_c": gen_free_c_cases(rng, 20),
    }
    with open("bound_reference.json", "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    for name, val in doc["singles"].items():
        print(f"{name}: {val}")


if __name__ == "__main__":
    main()
