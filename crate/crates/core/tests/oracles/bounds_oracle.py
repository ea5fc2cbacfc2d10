"""Reference values for the Fourier error bound evaluators (50-digit mpmath)."""
from mpmath import mp, mpf, sqrt, exp, pi, erfc, quad, cos, inf

mp.dps = 50


def eta(ell, m):
    return ell * pi * m / sqrt(2)


def gamma(e, ell):
    tail = exp(-1 / (8 * ell**2)) / e**2 if ell < mpf(1) / 2 else 2 * ell * exp(mpf(-1) / 2) / e**2
    return ell * sqrt(2 * pi) * exp(-e**2) + tail


def a_term(e, ell):
    tail = exp(-1 / (8 * ell**2)) / (sqrt(2) * ell * pi * e) if ell < mpf(1) / 2 else sqrt(2) * exp(mpf(-1) / 2) / (pi * e)
    return exp(-e**2) / (2 * e * sqrt(pi)) + tail


BRANCH = sqrt(2 / (5 + sqrt(17))) / 2


def xi_term(e, ell):
    tail = exp(-1 / (8 * ell**2)) / (8 * e**2 * ell**2) if ell <= BRANCH else 1 / e**2 + 3 * ell / (2 * e**2)
    return (e**2 + mpf(1) / 2) * ell * sqrt(2 * pi) * exp(-e**2) + tail


def s_term(e, ell):
    if ell <= BRANCH:
        tail = exp(-1 / (8 * ell**2)) / (8 * sqrt(2) * pi * ell**3 * e)
    else:
        tail = 1 / (sqrt(2) * pi * ell * e) + 3 / (2 * sqrt(2) * pi * e)
    return erfc(e) / 4 + e * exp(-e**2) / (2 * sqrt(pi)) + exp(-e**2) / (4 * sqrt(pi) * e) + tail


def bounds(ell, m):
    e = eta(ell, m)
    g, a, x, s = gamma(e, ell), a_term(e, ell), xi_term(e, ell), s_term(e, ell)
    return dict(
        eta=e, gamma=g, a=a, xi=x, s=s,
        gauss3=15 * g * (g + mpf(5) / 2) + 102 * a,
        der3=(mpf(5) / 2 * x + 15 * g) * (15 + 12 * g) + 75 * s + 6 * a * (mpf(116) / 5 * s + 87),
        gauss1=2 * g + 4 * a,
        der1=2 * x + 4 * s,
    )


def coeff(ell, k, der=False):
    def f(r):
        t = r**2 / (2 * ell**2)
        return (t if der else 1) * exp(-t) * cos(2 * pi * k * r)
    return quad(f, [-0.5, 0, 0.5])


if __name__ == "__main__":
    for ell, m in [(0.1, 16), (1, 32), (0.3, 64), (0.05, 64), (3, 16)]:
        b = bounds(mpf(ell), m)
        print(ell, m, {k: mp.nstr(v, 17) for k, v in b.items()})
    for ell, k in [(0.3, 0), (0.3, 1), (0.3, 7), (0.05, 0), (1, 3)]:
        print("coeff", ell, k, mp.nstr(coeff(mpf(ell), k), 17), mp.nstr(coeff(mpf(ell), k, True), 17))
