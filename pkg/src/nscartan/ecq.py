"""Elliptic curves over Q and imaginary quadratic fields.

Covers exactly what the pipeline needs: minimal models (Laska-Kraus-Connell),
reduction types and conductor exponents (Tate), naive point counting and the
Hecke eigenvalue sequence, quadratic twists, complex period lattices and the
Weierstrass parametrization, exact point arithmetic over Q and Q(sqrt(-D)),
torsion by bounded Lutz-Nagell search, and recognition of numeric points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from math import gcd, isqrt, lcm

import mpmath
import numpy as np

from .arith import factorize, legendre, primes_up_to, squarefree_part, valuation
from .errors import PrecisionError, RecognitionError
from .precision import get_working_dps, workdps


# ---------------------------------------------------------------------------
# quadratic field elements a + b*sqrt(D)


class QuadExt:
    """Element a + b*sqrt(D) of Q(sqrt(D)), D a non-square integer."""

    __slots__ = ("a", "b", "D")

    def __init__(self, a, b, D: int):
        self.a = Fraction(a)
        self.b = Fraction(b)
        self.D = D

    def _coerce(self, other):
        if isinstance(other, QuadExt):
            if other.D != self.D:
                raise ValueError("mixed quadratic fields")
            return other
        return QuadExt(other, 0, self.D)

    def __add__(self, o):
        o = self._coerce(o)
        return QuadExt(self.a + o.a, self.b + o.b, self.D)

    def __sub__(self, o):
        o = self._coerce(o)
        return QuadExt(self.a - o.a, self.b - o.b, self.D)

    def __neg__(self):
        return QuadExt(-self.a, -self.b, self.D)

    def __mul__(self, o):
        o = self._coerce(o)
        return QuadExt(self.a * o.a + self.b * o.b * self.D, self.a * o.b + self.b * o.a, self.D)

    def __truediv__(self, o):
        o = self._coerce(o)
        nrm = o.a * o.a - o.b * o.b * self.D
        if nrm == 0:
            raise ZeroDivisionError("division by zero in quadratic field")
        return self * QuadExt(o.a / nrm, -o.b / nrm, self.D)

    __radd__ = __add__
    __rmul__ = __mul__

    def __rsub__(self, o):
        return self._coerce(o) - self

    def __rtruediv__(self, o):
        return self._coerce(o) / self

    def __eq__(self, o):
        try:
            o = self._coerce(o)
        except (ValueError, TypeError):
            return NotImplemented
        return self.a == o.a and self.b == o.b

    def __hash__(self):
        return hash((self.a, self.b, self.D))

    def conj(self):
        return QuadExt(self.a, -self.b, self.D)

    def is_rational(self):
        return self.b == 0

    def embed(self):
        with workdps(extra=10):
            if self.D < 0:
                return mpmath.mpc(
                    mpmath.mpf(self.a.numerator) / self.a.denominator,
                    mpmath.mpf(self.b.numerator) / self.b.denominator * mpmath.sqrt(-self.D),
                )
            return (
                mpmath.mpf(self.a.numerator) / self.a.denominator
                + mpmath.mpf(self.b.numerator) / self.b.denominator * mpmath.sqrt(self.D)
            )

    def __repr__(self):
        return f"({self.a} + {self.b}*sqrt({self.D}))"


# ---------------------------------------------------------------------------
# Tate's algorithm helpers


def _translate(a, r, s, t):
    """(r, s, t) coordinate change with u = 1 on a-invariants."""
    a1, a2, a3, a4, a6 = a
    b1 = a1 + 2 * s
    b2_ = a2 - s * a1 + 3 * r - s * s
    b3 = a3 + r * a1 + 2 * t
    b4_ = a4 - s * a3 + 2 * r * a2 - (t + r * s) * a1 + 3 * r * r - 2 * s * t
    b6_ = a6 + r * a4 + r * r * a2 + r**3 - t * a3 - t * t - r * t * a1
    return (b1, b2_, b3, b4_, b6_)


def _bvals(a):
    a1, a2, a3, a4, a6 = a
    b2 = a1 * a1 + 4 * a2
    b4 = 2 * a4 + a1 * a3
    b6 = a3 * a3 + 4 * a6
    b8 = a1 * a1 * a6 + 4 * a2 * a6 - a1 * a3 * a4 + a2 * a3 * a3 - a4 * a4
    return b2, b4, b6, b8


def _disc(a):
    b2, b4, b6, b8 = _bvals(a)
    return -b2 * b2 * b8 - 8 * b4**3 - 27 * b6 * b6 + 9 * b2 * b4 * b6


def _c_invs(a):
    b2, b4, b6, _ = _bvals(a)
    return b2 * b2 - 24 * b4, -b2**3 + 36 * b2 * b4 - 216 * b6


def _poly_roots_modp(coeffs, p):
    """Roots with multiplicity of a monic integer polynomial mod p (tiny p)."""
    roots = {}
    work = [c % p for c in coeffs]  # degree n .. 0? store ascending
    for r in range(p):
        mult = 0
        while True:
            # synthetic division of ascending-coefficient poly by (x - r)
            desc = list(reversed(work))
            val = 0
            quot = []
            for c in desc:
                val = (val * r + c) % p
                quot.append(val)
            if val % p != 0:
                break
            work = list(reversed(quot[:-1]))
            mult += 1
            if len(work) == 1:
                break
        if mult:
            roots[r] = mult
        if len(work) == 1:
            break
    return roots


def _quad_double_root(qa, qb, qc, p):
    """For qa*Y^2 + qb*Y + qc with a double root mod p, return it."""
    if p == 2:
        # double root iff qb even; root then satisfies Y^2 = qc/qa, i.e. Y = qc*qa mod 2
        return (qc * qa) % 2
    inv = pow(2 * qa % p, p - 2, p)
    return (-qb * inv) % p


@dataclass
class TateResult:
    p: int
    kind: str  # good | split | nonsplit | additive
    f: int  # conductor exponent
    v_disc: int  # valuation of the minimal discriminant
    kodaira: str


def _tate_local_23(a, p):
    """Full Tate algorithm at p in {2, 3}; `a` minimal and integral at p."""
    a = tuple(int(x) for x in a)
    D = _disc(a)
    vD = valuation(D, p) if D % p == 0 else 0
    if vD == 0:
        return TateResult(p, "good", 0, 0, "I0")

    # step 2: move the singular point of the reduction to the origin
    found = None
    for r in range(p):
        for t in range(p):
            aa = _translate(a, r, 0, t)
            if aa[2] % p == 0 and aa[3] % p == 0 and aa[4] % p == 0:
                found = aa
                break
        if found:
            break
    assert found is not None, "singular reduction must have a singular point"
    a = found
    b2, b4, b6, b8 = _bvals(a)

    if b2 % p != 0:
        # multiplicative; split iff T^2 + a1 T - a2 has a root mod p
        split = any((T * T + a[0] * T - a[1]) % p == 0 for T in range(p))
        return TateResult(p, "split" if split else "nonsplit", 1, vD, f"I{vD}")

    # arrange p | a1, a2
    if p == 2:
        s = a[1] % 2
    else:
        s = (-a[0] * pow(2, p - 2, p)) % p
    a = _translate(a, 0, s, 0)
    assert a[0] % p == 0 and a[1] % p == 0

    if a[4] % p**2 != 0:
        return TateResult(p, "additive", vD, vD, "II")
    _, _, _, b8 = _bvals(a)
    if b8 % p**3 != 0:
        return TateResult(p, "additive", vD - 1, vD, "III")
    _, _, b6, _ = _bvals(a)
    if b6 % p**3 != 0:
        return TateResult(p, "additive", vD - 2, vD, "IV")

    # arrange p^2 | a3, p^3 | a6 via y -> y + p*y0
    y0 = _quad_double_root(1, a[2] // p, -(a[4] // (p * p)), p)
    a = _translate(a, 0, 0, p * y0)
    assert a[2] % p**2 == 0 and a[4] % p**3 == 0 and a[3] % p**2 == 0

    # step 6: cubic P(T) = T^3 + a21 T^2 + a42 T + a63
    a21, a42, a63 = a[1] // p, a[3] // p**2, a[4] // p**3
    roots = _poly_roots_modp([a63, a42, a21, 1], p)
    mults = sorted(roots.values(), reverse=True)
    # separability over the closure: cubic discriminant mod p
    cub_disc = (
        18 * a21 * a42 * a63 - 4 * a21**3 * a63 + a21**2 * a42**2 - 4 * a42**3 - 27 * a63**2
    )
    if cub_disc % p != 0:
        return TateResult(p, "additive", vD - 4, vD, "I0*")

    if mults and mults[0] == 3:
        triple = True
    elif mults and mults[0] == 2:
        triple = False
    else:
        # double root defined over F_p always; a triple root as well
        raise AssertionError("inseparable cubic without rational multiple root")

    if not triple:
        # I_n* loop
        r0 = next(r for r, m in roots.items() if m == 2)
        a = _translate(a, p * r0, 0, 0)
        n = 1
        mx, my = p * p, p * p
        while True:
            a3t, a6t = a[2] // my, a[4] // (mx * my)
            if (a3t * a3t + 4 * a6t) % p != 0:
                return TateResult(p, "additive", vD - 4 - n, vD, f"I{n}*")
            y1 = _quad_double_root(1, a3t, -a6t, p)
            a = _translate(a, 0, 0, my * y1)
            n += 1
            my *= p
            a2t, a4t, a6t = a[1] // p, a[3] // (p * mx), a[4] // (mx * my)
            if (a4t * a4t - 4 * a2t * a6t) % p != 0:
                return TateResult(p, "additive", vD - 4 - n, vD, f"I{n}*")
            x1 = _quad_double_root(a2t, a4t, a6t, p)
            a = _translate(a, mx * x1, 0, 0)
            n += 1
            mx *= p

    # triple root: move it to 0
    r0 = next(iter(roots)) if roots else 0
    if roots:
        r0 = next(r for r, m in roots.items() if m == 3)
    a = _translate(a, p * r0, 0, 0)

    a32, a64 = a[2] // p**2, a[4] // p**4
    if (a32 * a32 + 4 * a64) % p != 0:
        return TateResult(p, "additive", vD - 6, vD, "IV*")
    y1 = _quad_double_root(1, a32, -a64, p)
    a = _translate(a, 0, 0, p * p * y1)
    if a[3] % p**4 != 0:
        return TateResult(p, "additive", vD - 7, vD, "III*")
    if a[4] % p**6 != 0:
        return TateResult(p, "additive", vD - 8, vD, "II*")
    raise AssertionError(f"model not minimal at {p}; minimalize first")


def _tate_local(a, p) -> TateResult:
    """Reduction data at p for a globally minimal integral model."""
    if p in (2, 3):
        return _tate_local_23(a, p)
    D = _disc(a)
    if D % p != 0:
        return TateResult(p, "good", 0, 0, "I0")
    vD = valuation(D, p)
    c4, _ = _c_invs(a)
    if c4 % p != 0:
        # multiplicative; split/nonsplit refined by point counting only for
        # primes small enough to enumerate
        if p < 10**6:
            ap = _ap_via_counting(a, p)
            assert ap in (1, -1)
            kind = "split" if ap == 1 else "nonsplit"
        else:
            kind = "multiplicative"
        return TateResult(p, kind, 1, vD, f"I{vD}")
    vc4 = valuation(c4, p) if c4 else 10**9
    assert not (vc4 >= 4 and vD >= 12), f"model not minimal at {p}"
    return TateResult(p, "additive", 2, vD, "additive")


# ---------------------------------------------------------------------------
# Kraus-Connell minimal model


def _kraus_ok(c4: int, c6: int) -> bool:
    v3 = valuation(c6, 3) if c6 else 99
    if v3 == 2:
        return False
    if c6 % 4 == 3:  # c6 == -1 mod 4
        return True
    return c4 % 16 == 0 and c6 % 32 in (0, 8)


def _curve_from_c4c6(c4: int, c6: int):
    b2 = (-c6) % 12
    if b2 > 6:
        b2 -= 12
    b4, rem = divmod(b2 * b2 - c4, 24)
    assert rem == 0, "c4 incompatible with chosen b2"
    b6, rem = divmod(-(b2**3) + 36 * b2 * b4 - c6, 216)
    assert rem == 0, "c6 incompatible with chosen b2"
    a1 = b2 % 2
    a2 = (b2 - a1) // 4
    a3 = b6 % 2
    a6 = (b6 - a3) // 4
    a4 = (b4 - a1 * a3) // 2
    return (a1, a2, a3, a4, a6)


# ---------------------------------------------------------------------------
# point counting


def _ap_via_counting(a, p: int) -> int:
    """a_p = -sum_x chi(4x^3 + b2 x^2 + 2 b4 x + b6) on a model minimal at p.

    Valid for good and bad odd p alike (bad primes give 0/+-1); p = 2 is an
    explicit four-point enumeration.
    """
    a = tuple(int(x) for x in a)
    if p == 2:
        pts_smooth = 0
        sing = _disc(a) % 2 == 0
        for x in (0, 1):
            for y in (0, 1):
                a1, a2, a3, a4, a6 = a
                F = (y * y + a1 * x * y + a3 * y - (x**3 + a2 * x * x + a4 * x + a6)) % 2
                if F:
                    continue
                Fx = (a1 * y - (3 * x * x + 2 * a2 * x + a4)) % 2
                Fy = (2 * y + a1 * x + a3) % 2
                if Fx == 0 and Fy == 0 and sing:
                    continue  # the singular point
                pts_smooth += 1
        if sing:
            return 2 - (pts_smooth + 1)
        return 3 - (pts_smooth + 1)
    b2, b4, b6, _ = _bvals(a)
    if p < 600:
        tot = 0
        for x in range(p):
            g = (4 * x**3 + b2 * x * x + 2 * b4 * x + b6) % p
            tot += legendre(g, p)
        return -tot
    xs = np.arange(p, dtype=np.int64)
    g = (4 * ((xs * xs % p) * xs % p) + (b2 % p) * (xs * xs % p) + (2 * b4 % p) * xs + b6) % p
    sq = np.zeros(p, dtype=np.int8)
    sq[(xs * xs) % p] = 1
    chi = np.where(g == 0, 0, np.where(sq[g] == 1, 1, -1))
    return -int(chi.sum())


# ---------------------------------------------------------------------------
# the curve class


class EllipticCurveQ:
    """Elliptic curve over Q by a-invariants [a1, a2, a3, a4, a6]."""

    def __init__(self, ainvs, label: str | None = None):
        self.a = tuple(Fraction(x) for x in ainvs)
        if len(self.a) != 5:
            raise ValueError("need five a-invariants")
        self.label = label
        if self.disc == 0:
            raise ValueError("singular curve (disc = 0)")
        self._min = None
        self._tate: dict[int, TateResult] = {}
        self._ap_cache: dict[int, int] = {}

    # -- invariants

    @property
    def b_invariants(self):
        return _bvals(self.a)

    @property
    def c4(self) -> Fraction:
        b2, b4, _, _ = _bvals(self.a)
        return b2 * b2 - 24 * b4

    @property
    def c6(self) -> Fraction:
        b2, b4, b6, _ = _bvals(self.a)
        return -(b2**3) + 36 * b2 * b4 - 216 * b6

    @property
    def disc(self) -> Fraction:
        return _disc(self.a)

    @property
    def j(self) -> Fraction:
        return Fraction(self.c4) ** 3 / Fraction(self.disc)

    def is_integral(self) -> bool:
        return all(x.denominator == 1 for x in self.a)

    # -- minimal model

    def minimal_model(self) -> "EllipticCurveQ":
        if self._min is not None:
            return self._min
        # clear denominators: a_i -> a_i u^i
        u = 1
        for x in self.a:
            u = lcm(u, x.denominator)
        ai = [int(x * Fraction(u) ** i) for x, i in zip(self.a, (1, 2, 3, 4, 6))]
        c4, c6 = _c_invs(ai)
        D = _disc(ai)
        assert 1728 * D == c4**3 - c6**2
        # largest admissible scaling
        g = 1
        support = set(factorize(c4) if c4 else {}) | set(factorize(c6) if c6 else {})
        support |= set(factorize(D))
        for p in sorted(support):
            e = valuation(D, p) // 12
            if c4:
                e = min(e, valuation(c4, p) // 4)
            if c6:
                e = min(e, valuation(c6, p) // 6)
            while e > 0 and p in (2, 3) and not _kraus_ok(c4 // p ** (4 * e), c6 // p ** (6 * e)):
                e -= 1
            g *= p**e
        c4m, c6m = c4 // g**4, c6 // g**6
        assert _kraus_ok(c4m, c6m), "Kraus conditions must hold for the minimal pair"
        am = _curve_from_c4c6(c4m, c6m)
        assert _c_invs(am) == (c4m, c6m)
        E = EllipticCurveQ(am, label=self.label)
        E._min = E
        self._min = E
        return E

    def is_minimal(self) -> bool:
        return self.is_integral() and self.minimal_model().a == self.a

    # -- reduction data

    def tate_at(self, p: int) -> TateResult:
        E = self.minimal_model()
        if E is not self:
            return E.tate_at(p)
        if p not in self._tate:
            self._tate[p] = _tate_local([int(x) for x in self.a], p)
        return self._tate[p]

    def conductor_factors(self) -> dict[int, int]:
        E = self.minimal_model()
        out = {}
        for p in sorted(factorize(int(E.disc))):
            t = E.tate_at(p)
            if t.f:
                out[p] = t.f
        return out

    def conductor(self) -> int:
        n = 1
        for p, e in self.conductor_factors().items():
            n *= p**e
        return n

    def reduction_type(self, p: int) -> str:
        return self.tate_at(p).kind

    def vp_disc_min(self, p: int) -> int:
        E = self.minimal_model()
        d = int(E.disc)
        return valuation(d, p) if d % p == 0 else 0

    def vp_j(self, p: int) -> int:
        jn, jd = self.j.numerator, self.j.denominator
        vn = valuation(jn, p) if jn % p == 0 and jn != 0 else (10**9 if jn == 0 else 0)
        vd = valuation(jd, p) if jd % p == 0 else 0
        return vn - vd

    # -- point counts and eigenvalues

    def ap(self, ell: int) -> int:
        """a_ell; for bad ell the L-series value 0 / +1 / -1."""
        if ell not in self._ap_cache:
            E = self.minimal_model()
            self._ap_cache[ell] = _ap_via_counting([int(x) for x in E.a], ell)
        return self._ap_cache[ell]

    def count_points(self, ell: int) -> int:
        """#E~(F_ell) including infinity, for good odd ell (naive count)."""
        return ell + 1 - self.ap(ell)

    def eigenvalue_sequence(self, n_max: int) -> list[int]:
        """lambda_1..lambda_{n_max} with the weight-2 Euler product rules."""
        if n_max < 1:
            raise ValueError("n_max must be >= 1")
        lam = [0] * (n_max + 1)
        lam[1] = 1
        N = self.conductor()
        for p in primes_up_to(n_max):
            ap = self.ap(p)
            good = N % p != 0
            pk = p
            prev2, prev1 = None, 1  # lambda_{p^(k-1)}, lambda_{p^k} trackers
            # fill prime powers
            powers = []
            val = ap
            powers.append(ap)
            while pk * p <= n_max:
                pk *= p
                if good:
                    nxt = ap * powers[-1] - p * (powers[-2] if len(powers) >= 2 else 1)
                else:
                    nxt = ap * powers[-1]
                powers.append(nxt)
            pk = p
            for v in powers:
                lam[pk] = v
                pk *= p
        # multiplicative fill
        for n in range(2, n_max + 1):
            if lam[n] != 0 or n == 1:
                continue
            # factor out the smallest prime power
            m = n
            p = None
            for q in (2, 3, 5, 7, 11, 13):
                if m % q == 0:
                    p = q
                    break
            if p is None:
                p = min(factorize(m))
            pk = 1
            while m % p == 0:
                m //= p
                pk *= p
            if m == 1:
                continue  # prime power, already set
            lam[n] = lam[pk] * lam[m]
        return lam[1:]

    # -- twisting

    def quadratic_twist(self, d: int) -> "EllipticCurveQ":
        if d == 0 or squarefree_part(d) != d:
            raise ValueError("twist parameter must be a nonzero squarefree integer")
        E = self.minimal_model()
        c4, c6 = int(E.c4), int(E.c6)
        tw = EllipticCurveQ(_twist_model(c4 * d * d, c6 * d**3))
        return tw.minimal_model()

    # -- lattices and the analytic side

    def period_lattice(self) -> "PeriodLattice":
        return PeriodLattice.of_curve(self.minimal_model())

    # -- serialization

    def to_json(self) -> dict:
        obj = {"a": [str(x) if x.denominator != 1 else int(x) for x in self.a]}
        if self.label:
            obj["label"] = self.label
        return obj

    @staticmethod
    def from_json(obj: dict) -> "EllipticCurveQ":
        return EllipticCurveQ([Fraction(str(x)) for x in obj["a"]], label=obj.get("label"))

    def __eq__(self, other):
        return isinstance(other, EllipticCurveQ) and self.a == other.a

    def __hash__(self):
        return hash(self.a)

    def __repr__(self):
        tag = f" {self.label}" if self.label else ""
        return f"EllipticCurveQ({[str(x) for x in self.a]}{tag})"


def _twist_model(c4: int, c6: int):
    """Integral model with invariants (6^4 c4, 6^6 c6); minimalization strips the 6s."""
    return (0, 0, 0, -27 * c4, -54 * c6)


def _gauss_reduce(w1, w2):
    """Reduce a lattice basis so |Re(w2/w1)| <= 1/2 and |w2/w1| >= 1, Im > 0."""
    det = mpmath.re(w1) * mpmath.im(w2) - mpmath.im(w1) * mpmath.re(w2)
    if abs(det) < mpmath.mpf(10) ** (-(mpmath.mp.dps - 20)) * max(abs(w1 * w2), 1):
        return None, None
    if det < 0:
        w2 = -w2
    for _ in range(200):
        tau = w2 / w1
        n = mpmath.nint(mpmath.re(tau))
        w2 = w2 - n * w1
        if abs(w2) < abs(w1):
            w1, w2 = w2, w1
            if mpmath.im(w2 / w1) < 0:
                w2 = -w2
        else:
            break
    return w1, w2


# ---------------------------------------------------------------------------
# period lattice and Weierstrass functions


class PeriodLattice:
    """Lattice <w1, w2> with Im(w2/w1) > 0 of a minimal model's Neron form.

    Normalized so that g2(L) = c4/12 and g3(L) = c6/216; the curve point for
    z is (x, y) = (p(z) - b2/12, (p'(z) - a1 x - a3)/2).
    """

    def __init__(self, w1, w2, curve: EllipticCurveQ, rectangular: bool):
        self.w1 = w1
        self.w2 = w2
        self.curve = curve
        self.rectangular = rectangular
        self._tau = w2 / w1

    @staticmethod
    def of_curve(E: EllipticCurveQ, dps: int | None = None) -> "PeriodLattice":
        E = E.minimal_model()
        with workdps(dps, extra=20):
            c4, c6 = int(E.c4), int(E.c6)
            g2 = mpmath.mpf(c4) / 12
            g3 = mpmath.mpf(c6) / 216
            roots = mpmath.polyroots([4, 0, -g2, -g3], maxsteps=200, extraprec=80)
            disc = int(E.disc)
            best = None
            for i in range(3):
                for k in range(3):
                    if i == k:
                        continue
                    j = 3 - i - k
                    e_i, e_j, e_k = roots[i], roots[j], roots[k]
                    w1 = 2 * mpmath.elliprf(0, e_i - e_j, e_i - e_k)
                    w2 = 2 * mpmath.elliprf(0, e_k - e_j, e_k - e_i)
                    if abs(w1) < 1e-30:
                        continue
                    w1, w2 = _gauss_reduce(w1, w2)
                    if w1 is None:
                        continue
                    L = PeriodLattice(w1, w2, E, disc > 0)
                    err = L._invariant_residual()
                    if best is None or err < best[0]:
                        best = (err, L)
            if best is None:
                raise PrecisionError("no nondegenerate period basis found")
            err, L = best
            tol = mpmath.mpf(10) ** (-(get_working_dps() - 25))
            if err > tol:
                raise PrecisionError(f"period lattice residual {mpmath.nstr(err, 5)}")
            # canonical touch: make w1 the least positive real period if one
            # exists among short vectors (real curves always have one)
            w1, w2 = L.w1, L.w2
            reals = [
                v
                for v in (w1, w2, w1 + w2, w1 - w2, -w1, -w2, -w1 - w2, w2 - w1)
                if abs(mpmath.im(v)) < tol and mpmath.re(v) > 0
            ]
            if reals:
                new1 = min(reals, key=lambda v: mpmath.re(v))
                other = w2 if abs(mpmath.im(w2)) > abs(mpmath.im(w1)) else w1
                new2 = other if mpmath.im(other / new1) > 0 else -other
                L = PeriodLattice(new1, new2, E, L.rectangular)
                if L._invariant_residual() > tol:
                    raise PrecisionError("period basis canonicalization failed")
            return L

    def _invariant_residual(self):
        E = self.curve
        g2_t, g3_t = self.eisenstein_g2g3()
        return abs(g2_t - mpmath.mpf(int(E.c4)) / 12) + abs(g3_t - mpmath.mpf(int(E.c6)) / 216)

    def eisenstein_g2g3(self):
        """(g2, g3) of the lattice from Eisenstein q-series."""
        tau = self._tau
        if mpmath.mp.dps < get_working_dps():
            with workdps(extra=10):
                return self.eisenstein_g2g3()
        q = mpmath.exp(2j * mpmath.pi * tau)
        # E4, E6 truncated with certified-tiny tails at |q| < 1
        nterms = max(10, int(mpmath.mp.dps * 2.4 / max(-mpmath.log10(abs(q)), 0.05)) + 10)
        E4 = mpmath.mpf(1)
        E6 = mpmath.mpf(1)
        qn = q
        for n in range(1, nterms + 1):
            f = qn / (1 - qn)
            E4 += 240 * n**3 * f
            E6 -= 504 * n**5 * f
            qn *= q
        scale = 2 * mpmath.pi / self.w1
        g2 = scale**4 * E4 / 12
        g3 = scale**6 * E6 / 216
        return g2, g3

    def reduce(self, z):
        """Representative of z modulo the lattice with coordinates in [-1/2, 1/2)."""
        w1, w2 = self.w1, self.w2
        det = mpmath.re(w1) * mpmath.im(w2) - mpmath.im(w1) * mpmath.re(w2)
        s = (mpmath.re(z) * mpmath.im(w2) - mpmath.im(z) * mpmath.re(w2)) / det
        t = (mpmath.re(w1) * mpmath.im(z) - mpmath.im(w1) * mpmath.re(z)) / det
        s -= mpmath.nint(s)
        t -= mpmath.nint(t)
        return s * w1 + t * w2, (s, t)

    def contains(self, z, tol=None) -> bool:
        tol = tol if tol is not None else mpmath.mpf(10) ** (-(get_working_dps() // 3))
        zr, _ = self.reduce(z)
        return bool(abs(zr) < tol * max(1, abs(self.w1)))

    def weierstrass_p(self, z):
        """(p(z), p'(z)) by the q-series; z reduced into the fundamental cell."""
        if mpmath.mp.dps < get_working_dps():
            with workdps(extra=10):
                return self.weierstrass_p(z)
        zr, (s, t) = self.reduce(z)
        w1 = self.w1
        tau = self._tau
        if abs(zr) < mpmath.mpf(10) ** (-(get_working_dps() // 2)):
            return None  # lattice point: pole
        q = mpmath.exp(2j * mpmath.pi * tau)
        u = mpmath.exp(2j * mpmath.pi * zr / w1)
        pref = (2j * mpmath.pi / w1) ** 2
        # p(z) = pref * (1/12 + u/(1-u)^2 + sum_{n>=1} ...)
        x = mpmath.mpf(1) / 12 + u / (1 - u) ** 2
        yq = u * (1 + u) / (1 - u) ** 3
        qn = q
        nterms = max(10, int(mpmath.mp.dps * 2.4 / max(-mpmath.log10(abs(q)), 0.05)) + 10)
        for n in range(1, nterms + 1):
            t1 = qn * u / (1 - qn * u) ** 2
            t2 = (qn / u) / (1 - qn / u) ** 2
            t3 = qn / (1 - qn) ** 2
            x += t1 + t2 - 2 * t3
            yq += qn * u * (1 + qn * u) / (1 - qn * u) ** 3 - (qn / u) * (1 + qn / u) / (
                1 - qn / u
            ) ** 3
            qn *= q
        p_val = pref * x
        pprime = (2j * mpmath.pi / w1) ** 3 * yq
        return p_val, pprime

    def point(self, z):
        """Curve coordinates (x, y) for z, or None at lattice points."""
        got = self.weierstrass_p(z)
        if got is None:
            return None
        p_val, pp = got
        E = self.curve
        b2 = int(E.b_invariants[0])
        x = p_val - mpmath.mpf(b2) / 12
        a1, _, a3, _, _ = (int(v) for v in E.a)
        y = (pp - a1 * x - a3) / 2
        return x, y

    def elliptic_log(self, x_target, y_target, dps: int | None = None):
        """z with point(z) = (x, y), by grid search plus Newton on p(z)."""
        with workdps(dps, extra=10):
            E = self.curve
            b2 = int(E.b_invariants[0])
            a1, _, a3, _, _ = (int(v) for v in E.a)
            p_target = mpmath.mpc(x_target) + mpmath.mpf(b2) / 12
            pp_target = 2 * mpmath.mpc(y_target) + a1 * mpmath.mpc(x_target) + a3
            best = None
            n_grid = 24
            for i in range(1, n_grid):
                for jj in range(1, n_grid):
                    z = self.w1 * i / n_grid + self.w2 * jj / n_grid
                    got = self.weierstrass_p(z)
                    if got is None:
                        continue
                    err = abs(got[0] - p_target)
                    if best is None or err < best[0]:
                        best = (err, z)
            z = best[1]
            for _ in range(200):
                got = self.weierstrass_p(z)
                if got is None:
                    break
                f = got[0] - p_target
                if abs(f) < mpmath.mpf(10) ** (-(mpmath.mp.dps - 12)):
                    break
                z = z - f / got[1]
                z, _ = self.reduce(z)
            got = self.weierstrass_p(z)
            if got is None or abs(got[0] - p_target) > mpmath.mpf(10) ** (
                -(mpmath.mp.dps // 2)
            ):
                raise PrecisionError("elliptic log did not converge")
            if abs(got[1] - pp_target) > abs(got[1] + pp_target):
                z = -z
            return self.reduce(z)[0]

    def to_json(self) -> dict:
        return {
            "w1": mpmath.nstr(self.w1, 40),
            "w2": mpmath.nstr(self.w2, 40),
            "rectangular": self.rectangular,
        }


# ---------------------------------------------------------------------------
# exact point arithmetic


def on_curve(E: EllipticCurveQ, P) -> bool:
    if P is None:
        return True
    x, y = P
    a1, a2, a3, a4, a6 = E.a
    lhs = y * y + a1 * x * y + a3 * y
    rhs = x * x * x + a2 * x * x + a4 * x + a6
    return lhs == rhs


def ec_neg(E: EllipticCurveQ, P):
    if P is None:
        return None
    x, y = P
    a1, _, a3, _, _ = E.a
    return (x, -y - a1 * x - a3)


def ec_add(E: EllipticCurveQ, P, Q):
    if P is None:
        return Q
    if Q is None:
        return P
    a1, a2, a3, a4, a6 = E.a
    x1, y1 = P
    x2, y2 = Q
    if x1 == x2:
        if y1 == (-y2 - a1 * x2 - a3):
            return None
        lam = (3 * x1 * x1 + 2 * a2 * x1 + a4 - a1 * y1) / (2 * y1 + a1 * x1 + a3)
    else:
        lam = (y2 - y1) / (x2 - x1)
    nu = y1 - lam * x1
    x3 = lam * lam + a1 * lam - a2 - x1 - x2
    y3 = -(lam + a1) * x3 - nu - a3
    return (x3, y3)


def ec_mul(E: EllipticCurveQ, n: int, P):
    if n < 0:
        return ec_mul(E, -n, ec_neg(E, P))
    R = None
    Qp = P
    while n:
        if n & 1:
            R = ec_add(E, R, Qp)
        Qp = ec_add(E, Qp, Qp)
        n >>= 1
    return R


def torsion_points(E: EllipticCurveQ) -> list:
    """All affine torsion points of E(Q), by Lutz-Nagell bounded search."""
    E = E.minimal_model()
    c4, c6 = int(E.c4), int(E.c6)
    # short model Y^2 = X^3 - 27 c4 X - 54 c6; (x,y) -> (36x+3b2, 108(2y+a1x+a3))
    A, B = -27 * c4, -54 * c6
    Dshort = -16 * (4 * A**3 + 27 * B * B)
    ys = {0}
    for d in _square_divisors(abs(Dshort)):
        ys.add(d)
    pts = []
    b2 = int(E.b_invariants[0])
    a1, _, a3, _, _ = (int(v) for v in E.a)
    for Y in sorted(ys):
        # X^3 + A X + (B - Y^2) = 0 integer roots
        for X in _int_cubic_roots(A, B - Y * Y):
            for sgn in (1, -1) if Y else (1,):
                x = Fraction(X - 3 * b2, 36)
                y = Fraction(sgn * Y, 108 * 2) - Fraction(a1) * x / 2 - Fraction(a3, 2)
                P = (x, y)
                if not on_curve(E, P):
                    continue
                # confirm finite order (Mazur: order <= 12)
                Q = P
                order = None
                for k in range(1, 17):
                    if Q is None:
                        order = k
                        break
                    Q = ec_add(E, Q, P)
                if order is not None and P not in pts:
                    pts.append(P)
    return pts


def _square_divisors(n: int):
    out = [1]
    for p, e in factorize(n).items():
        cur = []
        for d in out:
            pk = 1
            for _ in range(e // 2 + 1):
                cur.append(d * pk)
                pk *= p
        out = cur
    return sorted(set(out))


def _int_cubic_roots(A: int, C: int) -> list[int]:
    """Integer roots of X^3 + A X + C."""
    if C == 0:
        roots = [0]
        if A < 0 and isqrt(-A) ** 2 == -A:
            roots += [isqrt(-A), -isqrt(-A)]
        return roots
    roots = []
    for d in _divisors(abs(C)):
        for X in (d, -d):
            if X**3 + A * X + C == 0:
                roots.append(X)
    return roots


def _divisors(n: int) -> list[int]:
    out = [1]
    for p, e in factorize(n).items():
        cur = []
        for d in out:
            pk = 1
            for _ in range(e + 1):
                cur.append(d * pk)
                pk *= p
        out = cur
    return sorted(out)


def multiple_of_generator(E: EllipticCurveQ, P, G, bound: int = 64):
    """(m, T) with P = m*G + T, T torsion over Q and |m| <= bound."""
    tors = [None] + [_liftpt(T, P) for T in torsion_points(E)]
    mG = None
    for m in range(0, bound + 1):
        for sgn in (1, -1) if m else (1,):
            base = ec_mul(E, sgn, mG) if sgn == -1 else mG
            for T in tors:
                cand = ec_add(E, base, T)
                if _pts_equal(cand, P):
                    return sgn * m, T
        mG = ec_add(E, mG, G)
    from .errors import NoSolutionError

    raise NoSolutionError(f"point is not m*G + torsion for |m| <= {bound}")


def _liftpt(T, P):
    """Coerce a rational torsion point into the field of P, if quadratic."""
    if P is None or T is None:
        return T
    x, _ = P
    if isinstance(x, QuadExt):
        return (QuadExt(T[0], 0, x.D), QuadExt(T[1], 0, x.D))
    return T


def _pts_equal(P, Q):
    if P is None or Q is None:
        return P is None and Q is None
    return P[0] == Q[0] and P[1] == Q[1]


# ---------------------------------------------------------------------------
# numeric point recognition


def recognize_point(
    xy,
    E: EllipticCurveQ,
    disc_D: int | None = None,
    height_bound: int = 10**15,
    dps: int | None = None,
):
    """Exact point from numeric coordinates; rational fit first, then quadratic.

    disc_D, when given, is the negative squarefree D of Q(sqrt(D)) to fit the
    quadratic parts against.  The returned point satisfies the curve equation
    exactly, else RecognitionError.
    """
    with workdps(dps, extra=5):
        X, Y = mpmath.mpc(xy[0]), mpmath.mpc(xy[1])
        tol = mpmath.mpf(10) ** (-(mpmath.mp.dps // 3))

        def fit_rat(v):
            fr = _to_fraction(mpmath.re(v), height_bound)
            if fr is None or abs(mpmath.re(v) - mpmath.mpf(fr.numerator) / fr.denominator) > tol:
                return None
            return fr

        # rational attempt
        if abs(mpmath.im(X)) < tol and abs(mpmath.im(Y)) < tol:
            xr, yr = fit_rat(X), fit_rat(Y)
            if xr is not None and yr is not None and on_curve(E, (xr, yr)):
                return (xr, yr)
        if disc_D is None:
            raise RecognitionError("rational recognition failed and no quadratic field given")
        D = disc_D
        sD = mpmath.sqrt(mpmath.mpf(abs(D)))

        def fit_quad(v):
            u = fit_rat(mpmath.re(v) + 0j)
            w = _to_fraction(mpmath.im(v) / sD, height_bound)
            if u is None or w is None:
                return None
            return QuadExt(u, w, D)

        xq = fit_quad(X)
        yq = fit_quad(Y)
        if xq is None or yq is None:
            raise RecognitionError("quadratic coordinate fit failed")
        P = (xq, yq)
        if on_curve(E, P):
            if xq.is_rational() and yq.is_rational():
                return (xq.a, yq.a)
            return P
        raise RecognitionError("recognized point fails the curve equation exactly")


def _to_fraction(x, height_bound):
    x = mpmath.mpf(x)
    if x == 0:
        return Fraction(0)
    sign, man, exp, _ = x._mpf_
    exact = Fraction((-1) ** sign * man) * (Fraction(2) ** exp)
    fr = exact.limit_denominator(height_bound)
    if abs(fr.numerator) > height_bound:
        return None
    return fr


# ---------------------------------------------------------------------------
# rational 2-isogeny (used to locate the optimal quotient in a class)


def two_isogeny_image(E: EllipticCurveQ) -> "EllipticCurveQ":
    """Minimal model of E / <T> for the first rational 2-torsion point T."""
    E = E.minimal_model()
    two = [T for T in torsion_points(E) if _pts_equal(ec_add(E, T, T), None)]
    if not two:
        raise ValueError("no rational 2-torsion")
    x0, _ = two[0]
    # short model X^3 + A X + B with X0 = 36 x0 + 3 b2
    c4, c6 = int(E.c4), int(E.c6)
    A, B = Fraction(-27 * c4), Fraction(-54 * c6)
    X0 = 36 * x0 + 3 * int(E.b_invariants[0])
    t = 3 * X0 * X0 + A
    w = X0 * t
    A2, B2 = A - 5 * t, B - 7 * w
    img = EllipticCurveQ([0, 0, 0, A2, B2])
    return img.minimal_model()


def curve_from_json_file(path: str) -> EllipticCurveQ:
    with open(path) as fh:
        return EllipticCurveQ.from_json(json.load(fh))
