"""Independent high-precision reference values frozen into the C++ unit tests.

Run with: python3 tests/oracles/oracle_values.py
Everything here is evaluated with mpmath at 30 digits, directly from the
hazard definitions, without reusing any of the C++ code paths.
"""
from mpmath import mp, mpf, exp, log, quad

mp.dps = 30
lam, gam = mpf("0.1"), mpf("1.3")


def haz(t, r=None, d1=0, d2=0, lam=lam, gam=gam, lin=0):
    z = lin
    if r is not None:
        z += d1 * r + d2 * (t - r)
    return lam * gam * t ** (gam - 1) * exp(z)


def cumhaz(a, b, r=None, d1=0, d2=0, lam=lam, gam=gam, lin=0):
    if a == b:
        return mpf(0)
    return quad(lambda u: haz(u, r, d1, d2, lam, gam, lin), [a, b])


print("hazard_both_t3_r2", haz(mpf(3), mpf(2), mpf("0.1"), mpf("0.1")))
print("cumhaz_cf_0_5", cumhaz(0, 5))
print("condsurv_cf_0_5", exp(-cumhaz(0, 5)))
print("condsurv_ta_r2_t4", exp(-cumhaz(2, 4, mpf(2), mpf("0.1"))))
print("loglik_t1_row", -cumhaz(0, 1) + log(haz(mpf(1))))
ll3 = -cumhaz(1, 2, mpf(1), mpf("0.1"), mpf("0.1")) + log(haz(mpf(2), mpf(1), mpf("0.1"), mpf("0.1")))
print("loglik_t3_both_row", ll3)
ll3u = -cumhaz(0, 2, mpf(1), mpf("0.1"), mpf("0.1")) + log(haz(mpf(2), mpf(1), mpf("0.1"), mpf("0.1")))
print("loglik_t3_both_row_unconditional", ll3u)
print("draw_weibull_u05", (log(2) / lam) ** (1 / gam))

# occupancy for the illness-death model, all transitions lambda=0.1 gamma=1.3, X=0
def s3(t, v, d1, d2):
    return exp(-cumhaz(v, t, v, d1, d2))

def p11(t):
    return exp(-2 * lam * t ** gam)

def p12(t, d1=0, d2=0):
    if t == 0:
        return mpf(0)
    return quad(lambda v: haz(v) * p11(v) * s3(t, v, d1, d2), [0, t])

for name, d1, d2 in [("cf", 0, 0), ("ta", mpf("0.1"), 0), ("ts", 0, mpf("0.1")), ("both", mpf("0.1"), mpf("0.1"))]:
    for t in [mpf(1), mpf("2.5"), mpf(5)]:
        print(f"p12_{name}_t{t}", p12(t, d1, d2))
    mp.dps = 15
    L1 = quad(p11, [0, 5])
    L2 = quad(lambda t: p12(t, d1, d2), [0, 5])
    print(f"L1_{name}_5", L1, f"L2_{name}_5", L2)
    mp.dps = 30
print("p11_5", p11(mpf(5)))
