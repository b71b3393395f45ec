"""Imaginary quadratic orders, Heegner points, and the modular parametrization.

Heegner points live on the Cartan curve as fixed points of integral matrices
with the trace and norm of the order generator; their images on the elliptic
curve come from the cusp-averaged parametrization
    z_tau = c (2 pi i / N) sum_sigma int_infty^{A_sigma^-1 tau} sigma(G) dz,
computed termwise from the exact expansion with endpoints pushed up by
group translations.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from math import gcd, isqrt

import mpmath

from .arith import inv_mod, legendre
from .cartan import (
    An_matrix,
    CartanContext,
    Mat2Z,
    heegner_conjugator,
    is_cartan_member,
    quotient_generators,
)
from .cyclo import galois_sigma
from .ecq import EllipticCurveQ, PeriodLattice, ec_add, ec_mul, on_curve, recognize_point
from .errors import HypothesisError, NoSolutionError, PrecisionError
from .forms import tail_cutoff
from .precision import get_working_dps, workdps
from .solver import SolvedEigenform


# ---------------------------------------------------------------------------
# binary quadratic forms and class groups


@dataclass(frozen=True)
class IdealClassForm:
    """Reduced primitive form (a, b, c) of discriminant b^2 - 4ac < 0."""

    a: int
    b: int
    c: int

    @property
    def disc(self) -> int:
        return self.b * self.b - 4 * self.a * self.c

    def point(self):
        """The CM point (-b + sqrt(disc)) / (2a) in the upper half plane."""
        with workdps(extra=10):
            d = self.disc
            return mpmath.mpc(-self.b, mpmath.sqrt(-d)) / (2 * self.a)

    def is_reduced(self) -> bool:
        a, b, c = self.a, self.b, self.c
        return (abs(b) <= a <= c) and (b >= 0 if (abs(b) == a or a == c) else True)

    def is_principal(self) -> bool:
        return self.a == 1


def _reduce_form(a: int, b: int, c: int) -> "IdealClassForm":
    while True:
        if c < a:
            a, b, c = c, -b, a
            continue
        if b > a or b <= -a:
            # normalize b into (-a, a]
            r = (a - b) // (2 * a)
            b2 = b + 2 * r * a
            c = a * r * r + b * r + c
            b = b2
            continue
        if a == c and b < 0:
            b = -b
            continue
        if abs(b) == a and b < 0:
            b = -b
            continue
        return IdealClassForm(a, b, c)


def class_group(d: int) -> list[IdealClassForm]:
    """All reduced primitive forms of discriminant d < 0, one per ideal class."""
    if d >= 0 or d % 4 not in (0, 1):
        raise HypothesisError(f"{d} is not a negative quadratic discriminant")
    out = []
    b0 = d % 2
    bmax = isqrt(abs(d) // 3)
    for b in range(b0, bmax + 1, 2):
        m = (b * b - d) // 4
        a = max(b, 1)
        while a * a <= m:
            if a > 0 and m % a == 0:
                c = m // a
                if gcd(gcd(a, b), c) == 1:
                    f = IdealClassForm(a, b, c)
                    if f.is_reduced():
                        out.append(f)
                    if b != 0 and b != a and a != c:
                        g = IdealClassForm(a, -b, c)
                        if g.is_reduced():
                            out.append(g)
            a += 1
    out.sort(key=lambda f: (f.a, f.b))
    return out


def compose_forms(f: IdealClassForm, g: IdealClassForm) -> IdealClassForm:
    """Gaussian composition of primitive forms of equal discriminant."""
    assert f.disc == g.disc
    a1, b1, _ = f.a, f.b, f.c
    a2, b2, _ = g.a, g.b, g.c
    d = f.disc
    from .arith import xgcd

    s = (b1 + b2) // 2
    n = (b1 - b2) // 2
    g0, u, v = xgcd(a1, a2)
    g1, w, t = xgcd(g0, s)
    # B solves: B = b2 + 2 a2 x = b1 + 2 a1 y (mod 2 a1 a2 / g1), plus s-part
    e = g1
    A = a1 * a2 // (e * e)
    # solve for B modulo 2A: B = b2 mod 2 a2/e, B = b1 mod 2 a1/e,
    # B^2 = d mod 4A
    m1, m2, m3 = 2 * a1 // e, 2 * a2 // e, 0
    # direct CRT-style search over the residue class structure (small here)
    step = 2 * a1 * a2 // (e * e)
    # B = b1 mod 2*a1/e and B = b2 mod 2*a2/e
    from itertools import count

    B = None
    base = b1 % (2 * a1 // e) if a1 // e else b1
    for k in range(0, 4 * max(a1, a2, abs(d)) + 8):
        cand = b1 + k * (2 * a1 // e)
        if (cand - b2) % (2 * a2 // e) == 0 and (cand * cand - d) % (4 * A) == 0:
            B = cand
            break
        cand = b1 - k * (2 * a1 // e)
        if (cand - b2) % (2 * a2 // e) == 0 and (cand * cand - d) % (4 * A) == 0:
            B = cand
            break
    if B is None:
        raise NoSolutionError("form composition failed to find a middle coefficient")
    C = (B * B - d) // (4 * A)
    return _reduce_form(A, B, C)


def form_inverse(f: IdealClassForm) -> IdealClassForm:
    return _reduce_form(f.a, -f.b, f.c)


def principal_form(d: int) -> IdealClassForm:
    b = d % 2
    return IdealClassForm(1, b, (b * b - d) // 4)


def form_order(f: IdealClassForm) -> int:
    e = principal_form(f.disc)
    g = f
    for k in range(1, 2 * isqrt(abs(f.disc)) + 8):
        if g == e:
            return k
        g = compose_forms(g, f)
    raise NoSolutionError("order computation overflow")


def prime_form(d: int, ell: int) -> IdealClassForm:
    """Class of a prime ideal above a split prime ell."""
    if legendre(d % ell if d % ell else 0, ell) != 1:
        raise HypothesisError(f"{ell} is not split for discriminant {d}")
    from .arith import sqrt_mod

    b = sqrt_mod(d % ell, ell)
    if (b - d) % 2 != 0:
        b = ell - b if (ell - b - d) % 2 == 0 else b + ell
    # ensure b^2 = d mod 4 ell
    for cand in (b, b + ell, b + 2 * ell, b + 3 * ell, -b, -b + ell):
        if (cand * cand - d) % (4 * ell) == 0:
            return _reduce_form(ell, cand, (cand * cand - d) // (4 * ell))
    raise NoSolutionError("no prime form found")


# ---------------------------------------------------------------------------
# orders


@dataclass(frozen=True)
class ImagQuadOrder:
    """Order of discriminant d = f^2 d_K < 0 with O = <1, omega>."""

    disc: int

    def __post_init__(self):
        if self.disc >= 0 or self.disc % 4 not in (0, 1):
            raise HypothesisError(f"{self.disc} is not a valid order discriminant")

    @property
    def trace(self) -> int:
        """Tr(omega) for omega = (d mod 4 == 1) ? (1+sqrt d)/2 : sqrt(d)/2."""
        return 1 if self.disc % 4 == 1 else 0

    @property
    def norm(self) -> int:
        d = self.disc
        return (1 - d) // 4 if d % 4 == 1 else -d // 4

    @property
    def fundamental_disc(self) -> int:
        d = self.disc
        f = 1
        from .arith import factorize

        for p, e in factorize(abs(d)).items():
            while e >= 2 and (d // (p * p)) % 4 in (0, 1):
                d //= p * p
                e -= 2
                f *= p
        return d

    @property
    def conductor(self) -> int:
        return isqrt(self.disc // self.fundamental_disc)

    def omega_embed(self):
        with workdps(extra=10):
            d = self.disc
            if d % 4 == 1:
                return mpmath.mpc(1, mpmath.sqrt(-d)) / 2
            return mpmath.mpc(0, mpmath.sqrt(-d)) / 2

    def classes(self) -> list[IdealClassForm]:
        return class_group(self.disc)


def cartan_heegner_check(E: EllipticCurveQ, order: ImagQuadOrder, ctx: CartanContext):
    """(ok, reasons): the four hypothesis bullets with per-prime symbols."""
    reasons = []
    ok = True
    cond = E.conductor()
    NN = ctx.N * ctx.N * ctx.m
    if cond != NN:
        ok = False
        reasons.append(f"conductor {cond} is not N^2 m = {NN}")
    d = order.disc
    if gcd(d, ctx.N * ctx.m) != 1:
        ok = False
        reasons.append(f"discriminant {d} shares a factor with N m = {ctx.N * ctx.m}")
    from .arith import factorize

    for p in ctx.primes:
        sym = legendre(d, p)
        if sym != -1:
            ok = False
            reasons.append(f"prime {p} | N is not inert: (d/{p}) = {sym}")
        else:
            reasons.append(f"prime {p} | N inert: (d/{p}) = -1")
    for p in sorted(factorize(ctx.m)) if ctx.m > 1 else []:
        sym = legendre(d, p)
        if sym != 1:
            ok = False
            reasons.append(f"prime {p} | m is not split: (d/{p}) = {sym}")
        else:
            reasons.append(f"prime {p} | m split: (d/{p}) = +1")
    return ok, reasons


# ---------------------------------------------------------------------------
# Heegner descriptors


@dataclass
class HeegnerDescriptor:
    order: ImagQuadOrder
    cls: IdealClassForm
    conjugator: Mat2Z
    fixing_matrix: Mat2Z
    tau: object  # high-precision complex

    def verify(self, ctx: CartanContext, tol_digits: int | None = None) -> bool:
        t = self.order.trace
        nm = self.order.norm
        M = self.fixing_matrix
        if M.trace() != t or M.det() != nm:
            return False
        if not is_cartan_member(M, ctx, require_m0m=True):
            return False
        with workdps(extra=10):
            tol = mpmath.mpf(10) ** (-(tol_digits or (get_working_dps() - 20)))
            return bool(abs(M.act(self.tau) - self.tau) < tol)


def multiplication_matrix(order: ImagQuadOrder, cls: IdealClassForm) -> Mat2Z:
    """Matrix of multiplication by omega on the lattice <omega_i, 1>.

    omega_i = (-b + sqrt(d)) / (2a); integral with trace Tr(omega) and
    determinant Nm(omega).
    """
    d = order.disc
    a, b = cls.a, cls.b
    t = order.trace
    # omega = (t + sqrt(d)) / 2; omega * omega_i and omega * 1 in the basis
    # omega * omega_i = alpha * omega_i + beta, omega * 1 = gamma * omega_i + delta
    # with omega_i = (-b + sqrt d) / (2a):
    # omega * 1 = (t + sqrt d)/2 = a * omega_i + (t + b)/2
    gamma = a
    delta = (t + b) // 2
    # omega * omega_i: ((t + sqrt d)/2) * ((-b + sqrt d)/(2a))
    #   = (d - t b + (t - b) sqrt d) / (4a)
    #   = ((t - b)/2) * omega_i + (d - b^2)/(4a) + ... expand exactly:
    alpha = (t - b) // 2
    beta = (d - t * b) // (4 * a) + alpha * b // (2 * a)
    # safer: beta = omega*omega_i - alpha*omega_i evaluated exactly:
    # omega*omega_i = (d - tb)/(4a) + ((t-b)/(4a)) sqrt d
    # alpha*omega_i = ((t-b)/2)(-b + sqrt d)/(2a) = (-(t-b)b)/(4a) + ((t-b)/(4a)) sqrt d
    # beta = (d - tb + (t-b) b)/(4a) = (d - b^2)/(4a)
    beta = (d - b * b) // (4 * a)
    assert (d - b * b) % (4 * a) == 0
    M = Mat2Z(alpha, beta, gamma, delta)
    assert M.trace() == t and M.det() == order.norm
    return M


def heegner_descriptor(
    order: ImagQuadOrder, cls: IdealClassForm, ctx: CartanContext
) -> HeegnerDescriptor:
    ok, reasons = True, []
    d = order.disc
    for p in ctx.primes:
        if legendre(d, p) != -1:
            raise HypothesisError(f"prime {p} not inert for disc {d}")
    Nmat = multiplication_matrix(order, cls)
    A = heegner_conjugator(Nmat, ctx)
    M = A * Nmat * A.adjugate()
    with workdps(extra=10):
        tau = A.act(cls.point())
    desc = HeegnerDescriptor(order, cls, A, M, tau)
    if not is_cartan_member(M, ctx, require_m0m=True):
        raise NoSolutionError("conjugated matrix fails the Cartan congruences")
    return desc


# ---------------------------------------------------------------------------
# parametrization integrals


class ModularParametrization:
    """Evaluates z_tau = c (2 pi i/N) sum_sigma int_infty^{A_n^-1 tau} sigma(G)."""

    def __init__(self, sol: SolvedEigenform, target_digits: int | None = None):
        self.sol = sol
        self.ctx = sol.ctx
        self.target = target_digits or max(40, get_working_dps() // 2)
        self._coeff_cache: dict[int, list] = {}
        self._An: dict[int, Mat2Z] = {}
        N = self.ctx.N
        for n in range(1, N):
            if gcd(n, N) == 1:
                self._An[n] = An_matrix(n, self.ctx)
    # -- endpoint improvement over the sigma_n(G)-invariance groups

    def _improve_endpoint(self, w, conj_k: int):
        """gamma in the invariance group of sigma_k(G) lifting Im(gamma w).

        The group is A_k^-1 Gamma_ns A_k; its bottom rows are computed from
        the Cartan rows conjugated by A_k, with c = 0 mod m.
        """
        ctx = self.ctx
        N, m = ctx.N, ctx.m
        Ak = self._An[conj_k % N]
        best = (mpmath.im(w), None)
        w = mpmath.mpc(w)
        y = mpmath.im(w)
        # bottom rows mod N of the conjugated group A_k^-1 Gamma_ns A_k
        adj = Ak.adjugate()
        cand_rows = set()
        for X in self._norm_one_matrices():
            Y = (adj * X * Ak).mod(N)
            cand_rows.add((Y.c % N, Y.d % N))
        K = int(mpmath.ceil(2 * mpmath.sqrt(1 / (max(y, mpmath.mpf(1e-12)) * N * m)))) + 3
        K = min(K, 240)
        for cN, dN in cand_rows:
            c_base = cN if m == 1 else _crt2(cN, N, 0, m)
            step = N * m
            for k in range(-K, K + 1):
                c = c_base + k * step
                if c == 0:
                    continue
                d0f = -c * mpmath.re(w)
                base_d = int(mpmath.nint((d0f - dN) / N)) if N else 0
                for dd in range(-2, 3):
                    d = dN + (base_d + dd) * N
                    if gcd(c, d) != 1:
                        continue
                    im_new = y / abs(c * w + d) ** 2
                    if im_new > best[0] * mpmath.mpf("1.000001"):
                        best = (im_new, (c, d))
        if best[1] is None:
            return None
        c, d = best[1]
        # complete to a full matrix in the conjugated group: congruence mod N
        # is determined by the chosen row class; find X with matching row
        target = None
        for X in self._norm_one_matrices():
            Y = (adj * X * Ak).mod(N)
            if (Y.c - c) % N == 0 and (Y.d - d) % N == 0:
                target = Y
                break
        assert target is not None
        from .arith import xgcd

        g, a0, b0 = xgcd(d, -c)
        assert g == 1
        # a = a0 + t c, b = b0 + t d with (a, b) = (target.a, target.b) mod N
        tmod = None
        for t in range(N):
            if ((a0 + t * c) - target.a) % N == 0 and ((b0 + t * d) - target.b) % N == 0:
                tmod = t
                break
        if tmod is None:
            return None
        gam = Mat2Z(a0 + tmod * c, b0 + tmod * d, c, d)
        assert gam.det() == 1
        return gam

    def _norm_one_matrices(self):
        """Full Cartan norm-one matrices mod N (CRT across the primes)."""
        if hasattr(self, "_n1_cache"):
            return self._n1_cache
        ctx = self.ctx
        from .arith import crt

        per_p = []
        for p in ctx.primes:
            e = ctx.eps_at(p)
            mats = []
            for a in range(p):
                for b in range(p):
                    if (a * a - e * b * b) % p == 1:
                        mats.append((a, b, e * b % p, a))
            per_p.append(mats)
        out = []

        def rec(i, cur):
            if i == len(ctx.primes):
                ent = [crt([cur[j][k] for j in range(len(cur))], ctx.primes) for k in range(4)]
                out.append(Mat2Z(*ent))
                return
            for mtuple in per_p[i]:
                rec(i + 1, cur + [mtuple])

        rec(0, [])
        self._n1_cache = out
        return out

    # -- coefficient streams

    def _conj_coeffs(self, k: int, n_cut: int):
        have = self._coeff_cache.get(k)
        if have is None or len(have) < n_cut:
            self._coeff_cache[k] = self.sol.conjugate_coefficients(k, max(n_cut, 2048))
        return self._coeff_cache[k][:n_cut]

    def _integral_term(self, k: int, w) -> mpmath.mpc:
        """(2 pi i / N) int_infty^w sigma_k(G) dz = sum sigma_k(b_m)/m q_N^m."""
        N = self.ctx.N
        y = mpmath.im(w) / N
        n_cut, _ = tail_cutoff(y, self.target, self.sol.basis.n_max)
        coeffs = self._conj_coeffs(k, n_cut)
        q = mpmath.exp(2j * mpmath.pi * w / N)
        acc = mpmath.mpc(0)
        qn = mpmath.mpc(1)
        for idx in range(n_cut):
            qn *= q
            c = coeffs[idx]
            if c != 0:
                acc += c * qn / (idx + 1)
        return acc

    def z_value(self, tau, manin_c=Fraction(1)) -> mpmath.mpc:
        """z_tau with the given Manin constant (default 1)."""
        with workdps(extra=10):
            N = self.ctx.N
            total = mpmath.mpc(0)
            for n in sorted(self._An):
                Ak = self._An[n]
                w = Ak.adjugate().act(mpmath.mpc(tau))  # A_n^-1 tau (det 1)
                gam = self._improve_endpoint(w, n)
                if gam is not None:
                    w = gam.act(w)
                y = mpmath.im(w) / N
                feasible = False
                try:
                    tail_cutoff(y, self.target, self.sol.basis.n_max)
                    feasible = True
                except PrecisionError:
                    pass
                if not feasible:
                    raise PrecisionError(
                        f"endpoint for sigma_{n} too low (Im/N = {mpmath.nstr(y, 5)}) "
                        "after group translations"
                    )
                total += self._integral_term(n, w)
            cf = mpmath.mpf(manin_c.numerator) / manin_c.denominator
            return cf * total


# ---------------------------------------------------------------------------
# lattice fitting (Manin constant)


def lattice_from_periods(samples, tol_digits=30):
    """Rank-2 basis from a list of (near-)lattice elements (complex).

    Iterative reduction of the generating set; the worst distance of any
    sample to the final lattice (in basis coordinates) is returned with it.
    """
    with workdps(extra=10):
        tol = mpmath.mpf(10) ** (-tol_digits)
        gens = [mpmath.mpc(s) for s in samples if abs(mpmath.mpc(s)) > tol]
        if len(gens) < 2:
            raise PrecisionError("too few nonzero periods for a rank-2 lattice")
        for _ in range(60):
            gens.sort(key=abs)
            v1 = gens[0]
            v2 = next((g for g in gens[1:] if abs(mpmath.im(g / v1)) > 1e-10), None)
            if v2 is None:
                raise PrecisionError("period samples span rank < 2")
            det = mpmath.re(v1) * mpmath.im(v2) - mpmath.im(v1) * mpmath.re(v2)
            remainders = []
            for g in gens:
                x = (mpmath.re(g) * mpmath.im(v2) - mpmath.im(g) * mpmath.re(v2)) / det
                yy = (mpmath.re(v1) * mpmath.im(g) - mpmath.im(v1) * mpmath.re(g)) / det
                r = g - (mpmath.nint(x) * v1 + mpmath.nint(yy) * v2)
                if abs(r) > tol * max(1, abs(g)):
                    remainders.append(r)
            if not remainders:
                v1, v2 = _gauss_basis(v1, v2)
                worst = mpmath.mpf(0)
                det = mpmath.re(v1) * mpmath.im(v2) - mpmath.im(v1) * mpmath.re(v2)
                for g in gens:
                    x = (mpmath.re(g) * mpmath.im(v2) - mpmath.im(g) * mpmath.re(v2)) / det
                    yy = (mpmath.re(v1) * mpmath.im(g) - mpmath.im(v1) * mpmath.re(g)) / det
                    worst = max(worst, abs(x - mpmath.nint(x)), abs(yy - mpmath.nint(yy)))
                return (v1, v2), worst
            gens = [v1, v2] + remainders
        raise PrecisionError("period lattice reduction did not stabilize")


def _gauss_basis(v1, v2):
    """Gauss-reduced oriented basis of the lattice <v1, v2>."""
    for _ in range(200):
        if abs(v2) < abs(v1):
            v1, v2 = v2, v1
        det = mpmath.re(v1) * mpmath.im(v2) - mpmath.im(v1) * mpmath.re(v2)
        if abs(det) == 0:
            raise PrecisionError("degenerate lattice basis")
        mu = (mpmath.re(v2) * mpmath.re(v1) + mpmath.im(v2) * mpmath.im(v1)) / abs(v1) ** 2
        n = mpmath.nint(mu)
        if n == 0:
            break
        v2 = v2 - n * v1
    if mpmath.im(v2 / v1) < 0:
        v2 = -v2
    return v1, v2


def manin_fit(
    param: ModularParametrization,
    L: PeriodLattice,
    rng: random.Random | None = None,
    n_periods: int = 8,
    tau0=None,
) -> tuple[Fraction, dict]:
    """Rational c with c * Lambda_G = Lambda_E, from sampled periods.

    Periods of the parametrization are differences z_{gamma tau} - z_tau over
    random group elements gamma; the rank-2 lattice they span is compared to
    the curve lattice.
    """
    rng = rng or random.Random(17)
    ctx = param.ctx
    with workdps(extra=10):
        if tau0 is None:
            tau0 = mpmath.mpc(0.31 * ctx.N, 1.03 * ctx.N)
        z0 = param.z_value(tau0)
        gens = quotient_generators(ctx)
        periods = []
        words = []
        tries = 0
        while len(periods) < n_periods and tries < 12 * n_periods:
            tries += 1
            g = Mat2Z(1, 0, 0, 1)
            for _ in range(rng.randint(1, 3)):
                g = g * gens[rng.randrange(len(gens))]
            # mix in a Gamma(N) cap Gamma_0(m) translation
            k = rng.randint(-2, 2)
            tpow = Mat2Z(1, k * ctx.N, 0, 1)
            g = g * tpow
            try:
                z1 = param.z_value(g.act(tau0))
            except PrecisionError:
                continue
            periods.append(z1 - z0)
            words.append(g.entries())
        if len(periods) < max(4, n_periods // 2):
            raise PrecisionError("not enough parametrization periods sampled")
        (g1, g2), worst = lattice_from_periods(periods)
        # fit c: (w1, w2) = c * integer combination of (g1, g2)
        w1, w2 = L.w1, L.w2
        det = mpmath.re(g1) * mpmath.im(g2) - mpmath.im(g1) * mpmath.re(g2)

        def coords(v):
            x = (mpmath.re(v) * mpmath.im(g2) - mpmath.im(v) * mpmath.re(g2)) / det
            yy = (mpmath.re(g1) * mpmath.im(v) - mpmath.im(g1) * mpmath.re(v)) / det
            return x, yy

        x1, y1 = coords(w1)
        x2, y2 = coords(w2)
        # all four coordinates over c must be integers: c = real gcd scale
        vals = [v for v in (x1, y1, x2, y2)]
        c = _rational_scale(vals, ctx.N)
        resid = max(abs(v / c - mpmath.nint(v / c)) for v in [mpmath.mpf(x) for x in vals])
        info = {
            "lattice_worst_residual": mpmath.nstr(worst, 8),
            "fit_residual": mpmath.nstr(resid, 8),
            "periods_used": len(periods),
        }
        if resid > mpmath.mpf(10) ** (-20):
            raise NoSolutionError(
                f"no rational Manin fit: coordinate residual {mpmath.nstr(resid, 5)}; "
                f"numeric lattice ratio {[mpmath.nstr(v, 10) for v in vals]}"
            )
        return c, info


def _rational_scale(vals, N: int) -> Fraction:
    """Rational c with vals/c all integral; prefers denominators dividing N^k."""
    with workdps(extra=5):
        nz = [mpmath.mpf(v) for v in vals if abs(mpmath.mpf(v)) > mpmath.mpf(10) ** (-25)]
        if not nz:
            raise NoSolutionError("degenerate lattice comparison")
        best = None
        for den_base in (1, N, N * N, N**3):
            for num in range(1, 1001):
                for den in (den_base,) if den_base > 1 else range(1, 65):
                    c = Fraction(num, den)
                    cf = mpmath.mpf(num) / den
                    res = max(abs(v / cf - mpmath.nint(v / cf)) for v in nz)
                    if res < mpmath.mpf(10) ** (-20):
                        # smallest |c| with integral coordinates, content 1
                        ints = [int(mpmath.nint(v / cf)) for v in nz]
                        from math import gcd as _g

                        g = 0
                        for i in ints:
                            g = _g(g, i)
                        if g == 1:
                            cand = c
                            if best is None or cand < best:
                                best = cand
                            break
            if best is not None:
                break
        if best is None:
            raise NoSolutionError("no rational scale found within the search bounds")
        return best


# ---------------------------------------------------------------------------
# the full Heegner point computation


def heegner_point(
    sol: SolvedEigenform,
    order: ImagQuadOrder,
    L: PeriodLattice,
    manin_c: Fraction | None = None,
    target_digits: int | None = None,
    rng: random.Random | None = None,
):
    """Trace over the class group of the Heegner points, as a point of E(C).

    Returns (z_total, point_xy, per-class z list, c, fit info).
    """
    ctx = sol.ctx
    param = ModularParametrization(sol, target_digits)
    info: dict = {}
    if manin_c is None:
        manin_c, fit_info = manin_fit(param, L)
        info.update(fit_info)
    zs = []
    for cls in order.classes():
        desc = heegner_descriptor(order, cls, ctx)
        if not desc.verify(ctx, tol_digits=20):
            raise NoSolutionError(f"descriptor verification failed for class {cls}")
        zs.append(param.z_value(desc.tau, manin_c))
    with workdps(extra=10):
        z_total = mpmath.fsum([z.real for z in zs]) + 1j * mpmath.fsum([z.imag for z in zs])
        pt = L.point(z_total)
    return z_total, pt, zs, manin_c, info


# ---------------------------------------------------------------------------
# Heegner system relations


def heegner_system_check(
    sol: SolvedEigenform,
    E: EllipticCurveQ,
    d_K: int,
    n: int,
    ell: int,
    L: PeriodLattice,
    manin_c: Fraction,
    sign_EQ: int = -1,
    target_digits: int = 35,
):
    """Verify the trace relation Tr P_{n ell} = a_ell P_n (inert) or the split
    variant, plus the conjugation relation, on z-values modulo (1/c) Lambda_E.

    Returns a report dict with residuals; raises on hypothesis violations.
    """
    ctx = sol.ctx
    if gcd(n * ell, E.conductor() * d_K) != 1:
        raise HypothesisError("n * ell must be coprime to cond(E) * disc(K)")
    O_n = ImagQuadOrder(d_K * n * n)
    O_nl = ImagQuadOrder(d_K * (n * ell) ** 2)
    cls_n = O_n.classes()
    cls_nl = O_nl.classes()
    if len(cls_n) > 32 or len(cls_nl) > 32:
        raise HypothesisError("class numbers exceed the supported scale")
    param = ModularParametrization(sol, target_digits)
    with workdps(extra=10):
        z_n = {}
        for cls in cls_n:
            desc = heegner_descriptor(O_n, cls, ctx)
            z_n[cls] = param.z_value(desc.tau, manin_c)
        z_nl = {}
        for cls in cls_nl:
            desc = heegner_descriptor(O_nl, cls, ctx)
            z_nl[cls] = param.z_value(desc.tau, manin_c)
        # projection Pic(O_nl) -> Pic(O_n)
        proj = {cls: _project_class(cls, O_nl, O_n) for cls in cls_nl}
        a_ell = E.ap(ell)
        report = {
            "ell": ell,
            "a_ell": a_ell,
            "branch": None,
            "residuals": [],
            "h_n": len(cls_n),
            "h_nl": len(cls_nl),
        }
        split = legendre(d_K, ell) == 1
        lam_cls = prime_form(O_n.disc, ell) if split else None
        for base_cls in cls_n:
            fiber = [c2 for c2 in cls_nl if proj[c2] == base_cls]
            lhs = mpmath.fsum([z_nl[c2].real for c2 in fiber]) + 1j * mpmath.fsum(
                [z_nl[c2].imag for c2 in fiber]
            )
            if not split:
                report["branch"] = "inert: Tr P_nl = a_ell P_n"
                rhs = a_ell * z_n[base_cls]
            else:
                report["branch"] = "split: Tr P_nl = (a_ell - sigma_l - sigma_l^-1) P_n"
                c_fwd = compose_forms(base_cls, form_inverse(lam_cls))
                c_bwd = compose_forms(base_cls, lam_cls)
                rhs = a_ell * z_n[base_cls] - z_n[_find(cls_n, c_fwd)] - z_n[_find(cls_n, c_bwd)]
            diff = lhs - rhs
            resid = _lattice_residual(diff, L, manin_c)
            report["residuals"].append(mpmath.nstr(resid, 8))
        # conjugation relation: conj(z_[a]) = -sign * z_[a_witness^-1 * ...]
        conj_ok = None
        for witness in cls_n:
            worst = mpmath.mpf(0)
            for cls in cls_n:
                target = compose_forms(form_inverse(cls), form_inverse(witness))
                zc = mpmath.conj(z_n[cls])
                zt = z_n[_find(cls_n, target)]
                diff = zc - (-sign_EQ) * zt
                worst = max(worst, _lattice_residual(diff, L, manin_c))
            if worst < mpmath.mpf(10) ** (-(target_digits - 12)):
                conj_ok = (witness, mpmath.nstr(worst, 8))
                break
        report["conjugation_witness"] = (
            {"class": (conj_ok[0].a, conj_ok[0].b, conj_ok[0].c), "residual": conj_ok[1]}
            if conj_ok
            else None
        )
        return report


def _find(classes, f):
    for c in classes:
        if c == f:
            return c
    raise NoSolutionError(f"class {f} not found")


def _project_class(cls: IdealClassForm, O_big: ImagQuadOrder, O_small: ImagQuadOrder):
    """Image of an O_big ideal class in Pic(O_small).

    The form lattice <a, (-b + sqrt(D_big))/2> is multiplied by O_small and
    Hermite-reduced; the reduced form of the resulting O_small-ideal is
    returned.  Elements are stored as x + y sqrt(D_small) with half-integer
    x, y.
    """
    D_big, D_small = O_big.disc, O_small.disc
    f = isqrt(D_big // D_small)
    assert f * f * D_small == D_big
    a, b = cls.a, cls.b
    s = abs(D_small) % 2  # omega = (s + sqrt(D_small)) / 2
    # generators of L * O_small as (x, y) with element = x + y sqrt(D_small)
    gens = [
        (Fraction(a), Fraction(0)),
        (Fraction(a * s, 2), Fraction(a, 2)),
        (Fraction(-b, 2), Fraction(f, 2)),
        (Fraction(-b * s + f * D_small, 4), Fraction(f * s - b, 4)),
    ]
    from math import lcm

    den = 1
    for x, y in gens:
        den = lcm(den, x.denominator, y.denominator)
    rows = [(int(x * den), int(y * den)) for x, y in gens]
    # 2-column integer HNF: second coordinate gcd, then first-coordinate gcd
    from .arith import xgcd

    wx, wy = 0, 0
    for x, y in rows:
        if y == 0:
            continue
        if wy == 0:
            wx, wy = x, y
        else:
            g, u, v = xgcd(wy, y)
            wx, wy = u * wx + v * x, g
    assert wy != 0, "module must have full rank"
    if wy < 0:
        wx, wy = -wx, -wy
    g1 = 0
    for x, y in rows:
        assert y % wy == 0
        g1 = __import__("math").gcd(g1, x - (y // wy) * wx)
    assert g1 != 0
    # basis alpha1 = g1/den, alpha2 = (wx + wy sqrt(D_small))/den
    x1, y1 = Fraction(g1), Fraction(0)
    x2, y2 = Fraction(wx), Fraction(wy)
    # orient so that x1 y2 - y1 x2 > 0
    if x1 * y2 - y1 * x2 < 0:
        x2, y2 = -x2, -y2
    nrm = 2 * (x1 * y2 - y1 * x2)  # N(ideal) relative to O = <1, omega>
    A = (x1 * x1 - y1 * y1 * D_small) / nrm
    C = (x2 * x2 - y2 * y2 * D_small) / nrm
    B = 2 * (x1 * x2 - y1 * y2 * D_small) / nrm
    for val in (A, B, C):
        assert val.denominator == 1, "projected form must be integral"
    A, B, C = int(A), int(B), int(C)
    if A < 0:
        A, B, C = -A, -B, -C
    ff = _reduce_form(A, B, C)
    assert ff.disc == D_small, (ff.disc, D_small)
    return ff


def _xgcd2(a, b):
    from .arith import xgcd

    return xgcd(a, b)


def _lattice_residual(diff, L: PeriodLattice, c: Fraction):
    """Distance of diff to the lattice (1/c) Lambda_E, in lattice coordinates."""
    with workdps(extra=5):
        cf = mpmath.mpf(c.numerator) / c.denominator
        w1, w2 = L.w1 / cf, L.w2 / cf
        det = mpmath.re(w1) * mpmath.im(w2) - mpmath.im(w1) * mpmath.re(w2)
        x = (mpmath.re(diff) * mpmath.im(w2) - mpmath.im(diff) * mpmath.re(w2)) / det
        y = (mpmath.re(w1) * mpmath.im(diff) - mpmath.im(w1) * mpmath.re(diff)) / det
        return max(abs(x - mpmath.nint(x)), abs(y - mpmath.nint(y)))


def multiple_of_generator_report(E: EllipticCurveQ, P, G, bound=64):
    from .ecq import multiple_of_generator

    m, T = multiple_of_generator(E, P, G, bound)
    return {"m": m, "torsion_offset": None if T is None else (str(T[0]), str(T[1]))}
