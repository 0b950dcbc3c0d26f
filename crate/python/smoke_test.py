"""Smoke test for the bbfamily Python extension.

Build and install first:

    pip install maturin
    maturin develop --release -m crates/py/Cargo.toml
"""

import math

import bbfamily

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


def check_steplengths():
    s, y = [1.0, 1.0], [1.0, 2.0]
    assert close(bbfamily.bb1(s, y), 2.0 / 3.0, 1e-15)
    assert close(bbfamily.bb2(s, y), 0.6, 1e-15)
    assert close(bbfamily.alpha_tls(s, y), GOLDEN, 1e-15)
    assert close(bbfamily.alpha_family(s, y, 1.0), GOLDEN, 1e-15)
    assert close(bbfamily.alpha_family_prime(s, y, 1.0), GOLDEN, 1e-15)
    assert close(bbfamily.alpha_convex(s, y, 0.5), 0.6333333333333333, 1e-15)
    tau = bbfamily.tau_from_gamma(s, y, 1.0)
    assert close(bbfamily.alpha_convex(s, y, tau), GOLDEN, 1e-12)
    assert close(bbfamily.stls_minimizer(s, y, 1.0), GOLDEN, 1e-6)
    assert close(bbfamily.homogeneous_quotient(s, y), GOLDEN, 1e-6)

    lo, hi = bbfamily.bb2(s, y), bbfamily.bb1(s, y)
    prev = 0.0
    for g in (1e-3, 0.1, 1.0, 10.0, 1e3):
        a = bbfamily.alpha_family(s, y, g)
        assert lo <= a <= hi and a >= prev
        prev = a

    for bad in (([1.0, 0.0], [0.0, 1.0]), ([1.0], [1.0, 2.0])):
        try:
            bbfamily.bb1(*bad)
        except ValueError:
            pass
        else:
            raise AssertionError(f"expected ValueError for {bad}")


def check_policy():
    p = bbfamily.Policy("atc:2", alpha0=0.61)
    assert p.iteration_index == 1
    assert close(p.next([1.0, 1.0], [1.0, 2.0]), 0.61, 0.0)
    assert close(p.next([1.0, 1.0], [1.0, 2.0]), 2.0 / 3.0, 1e-15)
    assert p.spec == "atc:2" and p.iteration_index == 3
    try:
        bbfamily.Policy("gamma:-1")
    except ValueError:
        pass
    else:
        raise AssertionError("negative gamma accepted")


def check_quadratic():
    inst = bbfamily.QuadraticInstance.generate(50, setting=1, kappa=1e3, seed=7)
    assert inst.dim == 50
    ev = inst.eigenvalues
    assert ev[0] == 1.0 and ev[-1] == 1e3
    again = bbfamily.QuadraticInstance.from_json(inst.to_json())
    x = [0.5] * 50
    assert again.gradient(x) == inst.gradient(x)

    trace = inst.solve("gamma:20")
    assert trace.converged, trace
    g = trace.grad_norms
    assert g[-1] <= 1e-6 * g[0]
    slope, q, coverage = trace.rate_fit()
    assert slope < 0.0 and coverage >= 0.95
    back = bbfamily.Trace.from_csv(trace.to_csv())
    assert back.iterations == trace.iterations


def check_rosenbrock():
    trace = bbfamily.rosenbrock("gamma:1", 1e-1)
    assert trace.converged
    x = trace.final_x
    assert math.hypot(x[0] - 1.0, x[1] - 1.0) <= 1e-1


def check_profile():
    prof = bbfamily.performance_profile(["a", "b"], [[10.0, 20.0], [30.0, 15.0]])
    assert prof.rho(0, 1.0) == 0.5 and prof.rho(0, 2.0) == 1.0
    failing = bbfamily.performance_profile(["a", "b"], [[1.0, None], [2.0, None]])
    assert failing.rho(1, 1e300) == 0.0


def main():
    check_steplengths()
    check_policy()
    check_quadratic()
    check_rosenbrock()
    check_profile()
    print("bbfamily smoke test: ok")


if __name__ == "__main__":
    main()
