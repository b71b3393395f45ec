"""Exact arithmetic in cyclotomic fields Q(xi_M).

Elements are stored by their rational coordinates in the power basis
1, xi, ..., xi^(phi(M)-1) after reduction modulo the M-th cyclotomic
polynomial; the power basis is an integral basis, so integrality and content
checks are coordinate-wise.  The module also provides Dirichlet characters,
the Galois action sigma_n (xi -> xi^(n^-1)), an explicit Hilbert-90 solver,
and recognition of high-precision complex values as exact field elements.
"""

from __future__ import annotations

import json
from fractions import Fraction
from functools import lru_cache
from math import gcd

import mpmath

from .arith import euler_phi, factorize, inv_mod, smallest_primitive_root, xgcd
from .errors import NoSolutionError, RecognitionError
from .precision import get_working_dps, workdps


# ---------------------------------------------------------------------------
# cyclotomic polynomials


@lru_cache(maxsize=None)
def cyclotomic_polynomial(M: int) -> tuple[int, ...]:
    """Integer coefficient tuple of Phi_M, constant term first."""
    if M < 1:
        raise ValueError("modulus must be positive")
    if M == 1:
        return (-1, 1)
    # (x^M - 1) / prod_{d | M, d < M} Phi_d, exact integer division
    num = [-1] + [0] * (M - 1) + [1]
    for d in range(1, M):
        if M % d == 0:
            num = _polydiv_exact(num, list(cyclotomic_polynomial(d)))
    return tuple(num)


def _polydiv_exact(num: list[int], den: list[int]) -> list[int]:
    num = num[:]
    out = [0] * (len(num) - len(den) + 1)
    for i in range(len(out) - 1, -1, -1):
        q, r = divmod(num[i + len(den) - 1], den[-1])
        assert r == 0
        out[i] = q
        for j, c in enumerate(den):
            num[i + j] -= q * c
    assert all(c == 0 for c in num)
    return out


@lru_cache(maxsize=None)
def _reduction_rows(M: int) -> tuple[tuple[Fraction, ...], ...]:
    """Row j expresses xi^(phi+j) in the power basis, for j < M - phi."""
    phi = euler_phi(M)
    poly = cyclotomic_polynomial(M)
    lead = poly[-1]
    assert lead == 1
    rows: list[tuple[Fraction, ...]] = []
    # xi^phi = -(poly[0] + ... + poly[phi-1] xi^(phi-1))
    base = [Fraction(-c) for c in poly[:-1]]
    rows.append(tuple(base))
    for _ in range(M - phi - 1):
        prev = rows[-1]
        shifted = [Fraction(0)] + list(prev[:-1])
        top = prev[-1]
        nxt = [shifted[k] + top * base[k] for k in range(phi)]
        rows.append(tuple(nxt))
    return tuple(rows)


class CycloNumber:
    """Element of Q(xi_M) with coordinates in the power basis."""

    __slots__ = ("M", "coords")

    def __init__(self, M: int, coords):
        phi = euler_phi(M)
        coords = [Fraction(c) for c in coords]
        if len(coords) != phi:
            raise ValueError(f"need {phi} coordinates for modulus {M}, got {len(coords)}")
        self.M = M
        self.coords = tuple(coords)

    # -- construction helpers

    @staticmethod
    def zero(M: int) -> "CycloNumber":
        return CycloNumber(M, [0] * euler_phi(M))

    @staticmethod
    def one(M: int) -> "CycloNumber":
        c = [Fraction(0)] * euler_phi(M)
        c[0] = Fraction(1)
        return CycloNumber(M, c)

    @staticmethod
    def rational(M: int, q) -> "CycloNumber":
        c = [Fraction(0)] * euler_phi(M)
        c[0] = Fraction(q)
        return CycloNumber(M, c)

    @staticmethod
    def zeta_power(M: int, j: int) -> "CycloNumber":
        """xi_M^j as an element of Q(xi_M)."""
        return CycloNumber._from_monomials(M, {j % M: Fraction(1)})

    @staticmethod
    def _from_monomials(M: int, mono: dict[int, Fraction]) -> "CycloNumber":
        phi = euler_phi(M)
        out = [Fraction(0)] * phi
        rows = None
        for e, c in mono.items():
            e %= M
            if e < phi:
                out[e] += c
            else:
                if rows is None:
                    rows = _reduction_rows(M)
                row = rows[e - phi]
                for k in range(phi):
                    out[k] += c * row[k]
        return CycloNumber(M, out)

    # -- ring operations

    def __add__(self, other):
        other = self._coerce(other)
        return CycloNumber(self.M, [a + b for a, b in zip(self.coords, other.coords)])

    def __sub__(self, other):
        other = self._coerce(other)
        return CycloNumber(self.M, [a - b for a, b in zip(self.coords, other.coords)])

    def __neg__(self):
        return CycloNumber(self.M, [-a for a in self.coords])

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return CycloNumber(self.M, [a * other for a in self.coords])
        other = self._coerce(other)
        phi = len(self.coords)
        prod = [Fraction(0)] * (2 * phi - 1)
        for i, a in enumerate(self.coords):
            if a == 0:
                continue
            for j, b in enumerate(other.coords):
                if b:
                    prod[i + j] += a * b
        mono = {e: c for e, c in enumerate(prod) if c}
        return CycloNumber._from_monomials(self.M, mono)

    __radd__ = __add__
    __rmul__ = __mul__

    def __rsub__(self, other):
        return self._coerce(other) - self

    def inverse(self) -> "CycloNumber":
        """Multiplicative inverse via extended Euclid modulo Phi_M."""
        if self.is_zero():
            raise ZeroDivisionError("inverse of zero cyclotomic number")
        phi_poly = [Fraction(c) for c in cyclotomic_polynomial(self.M)]
        a = list(self.coords)
        # extended gcd of a and Phi_M in Q[x]
        r0, r1 = phi_poly, a
        s0, s1 = [Fraction(0)], [Fraction(1)]
        t_dummy = None  # only one cofactor needed
        while any(c != 0 for c in r1):
            q, r = _poly_divmod_q(r0, r1)
            r0, r1 = r1, r
            s0, s1 = s1, _poly_sub(s0, _poly_mul(q, s1))
        # r0 = gcd (a nonzero constant since Phi_M is irreducible)
        const = next(c for c in r0 if c != 0)
        assert all(c == 0 for c in r0[1:]), "gcd with Phi_M must be constant"
        inv_coords = [c / const for c in s0]
        inv_coords += [Fraction(0)] * (len(self.coords) - len(inv_coords))
        return CycloNumber(self.M, inv_coords[: len(self.coords)])

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            q = Fraction(other)
            return CycloNumber(self.M, [a / q for a in self.coords])
        return self * self._coerce(other).inverse()

    def __pow__(self, n: int):
        if n < 0:
            return self.inverse() ** (-n)
        out = CycloNumber.one(self.M)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = CycloNumber.rational(self.M, other)
        return isinstance(other, CycloNumber) and self.M == other.M and self.coords == other.coords

    def __hash__(self):
        return hash((self.M, self.coords))

    def _coerce(self, other) -> "CycloNumber":
        if isinstance(other, CycloNumber):
            if other.M != self.M:
                raise ValueError(f"modulus mismatch: {self.M} vs {other.M}")
            return other
        return CycloNumber.rational(self.M, other)

    # -- predicates and features

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coords)

    def is_rational(self) -> bool:
        return all(c == 0 for c in self.coords[1:])

    def rational_value(self) -> Fraction:
        if not self.is_rational():
            raise ValueError("not a rational element")
        return self.coords[0]

    def is_integral(self) -> bool:
        return all(c.denominator == 1 for c in self.coords)

    def content(self) -> Fraction:
        """Positive rational c with self/c integral of coordinate gcd 1; 0 for 0."""
        if self.is_zero():
            return Fraction(0)
        from math import lcm

        den = 1
        for c in self.coords:
            den = lcm(den, c.denominator)
        num = 0
        for c in self.coords:
            num = gcd(num, c.numerator * (den // c.denominator))
        return Fraction(abs(num), den)

    def galois(self, n: int) -> "CycloNumber":
        """sigma_n: xi -> xi^(n^-1 mod M); see galois_sigma."""
        return galois_sigma(n, self)

    def conjugate(self) -> "CycloNumber":
        """Complex conjugation, = sigma_{-1}."""
        return galois_sigma(-1, self)

    def norm(self) -> Fraction:
        """Field norm down to Q (product over all conjugates)."""
        out = CycloNumber.one(self.M)
        for n in range(1, self.M + 1):
            if gcd(n, self.M) == 1:
                out = out * galois_sigma(n, self)
        return out.rational_value()

    def embed(self, dps: int | None = None) -> mpmath.mpc:
        """Complex value at xi_M = exp(2*pi*i/M)."""
        with workdps(dps, extra=10):
            z = mpmath.exp(2j * mpmath.pi / self.M)
            acc = mpmath.mpc(0)
            for c in reversed(self.coords):
                acc = acc * z + mpmath.mpf(c.numerator) / c.denominator
            return acc

    def lift_to(self, M_new: int) -> "CycloNumber":
        """Image under Q(xi_M) -> Q(xi_M_new), xi_M -> xi_M_new^(M_new/M)."""
        if M_new % self.M:
            raise ValueError(f"{self.M} does not divide {M_new}")
        step = M_new // self.M
        mono: dict[int, Fraction] = {}
        for j, c in enumerate(self.coords):
            if c:
                mono[(j * step) % M_new] = mono.get((j * step) % M_new, Fraction(0)) + c
        return CycloNumber._from_monomials(M_new, mono)

    # -- serialization

    def to_json(self) -> dict:
        return {"modulus": self.M, "coords": [str(c) for c in self.coords]}

    @staticmethod
    def from_json(obj: dict) -> "CycloNumber":
        return CycloNumber(obj["modulus"], [Fraction(s) for s in obj["coords"]])

    def __repr__(self):
        terms = []
        for j, c in enumerate(self.coords):
            if c == 0:
                continue
            if j == 0:
                terms.append(str(c))
            else:
                terms.append(f"{c}*z^{j}" if j > 1 else f"{c}*z")
        body = " + ".join(terms) if terms else "0"
        return f"Cyclo({self.M}: {body})"


def _poly_divmod_q(num: list[Fraction], den: list[Fraction]):
    num = num[:]
    dd = len(den)
    while den and den[-1] == 0:
        den = den[:-1]
        dd -= 1
    q = [Fraction(0)] * max(len(num) - dd + 1, 1)
    for i in range(len(num) - dd, -1, -1):
        c = num[i + dd - 1] / den[-1]
        q[i] = c
        if c:
            for j in range(dd):
                num[i + j] -= c * den[j]
    while num and num[-1] == 0:
        num.pop()
    return q, num


def _poly_mul(a: list[Fraction], b: list[Fraction]) -> list[Fraction]:
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return out


def _poly_sub(a: list[Fraction], b: list[Fraction]) -> list[Fraction]:
    n = max(len(a), len(b))
    a = a + [Fraction(0)] * (n - len(a))
    b = b + [Fraction(0)] * (n - len(b))
    return [x - y for x, y in zip(a, b)]


# ---------------------------------------------------------------------------
# Galois action


def galois_sigma(n: int, x: CycloNumber) -> CycloNumber:
    """Automorphism sending xi_M to xi_M^(n^-1 mod M); depends on n mod M only."""
    M = x.M
    n %= M
    if gcd(n, M) != 1:
        raise NoSolutionError(f"sigma_{n} is not an automorphism mod {M}")
    k = inv_mod(n, M)
    mono: dict[int, Fraction] = {}
    for j, c in enumerate(x.coords):
        if c:
            e = (j * k) % M
            mono[e] = mono.get(e, Fraction(0)) + c
    return CycloNumber._from_monomials(M, mono)


# ---------------------------------------------------------------------------
# Dirichlet characters


@lru_cache(maxsize=None)
def _unit_group_data(M: int):
    """Generators of (Z/M)^* as CRT products over prime powers.

    Returns (prime_powers, generators, orders); generators are integers mod M
    congruent to the local generator at one factor and 1 elsewhere.  Even M is
    supported only for M = 1, 2 times odd here (no 2^k, k >= 3, is needed).
    """
    if M == 1:
        return (), (), ()
    fac = factorize(M)
    if fac.get(2, 0) >= 3:
        raise NotImplementedError("moduli divisible by 8 are not needed here")
    pps, gens, orders = [], [], []
    items = sorted(fac.items())
    for p, e in items:
        q = p**e
        if p == 2:
            if e == 1:
                continue  # (Z/2)^* trivial
            g_loc = 3  # generates (Z/4)^*
            order = 2
        else:
            g0 = smallest_primitive_root(p)
            # lift to a generator of (Z/p^e)^*
            if e == 1 or pow(g0, p - 1, p * p) != 1:
                g_loc = g0
            else:
                g_loc = g0 + p
            order = (p - 1) * p ** (e - 1)
        residues = []
        moduli = []
        for p2, e2 in items:
            q2 = p2**e2
            residues.append(g_loc % q2 if q2 == q else 1)
            moduli.append(q2)
        from .arith import crt

        gens.append(crt(residues, moduli))
        pps.append(q)
        orders.append(order)
    return tuple(pps), tuple(gens), tuple(orders)


def _dlog(a: int, g: int, order: int, q: int) -> int:
    """Discrete log of a base g in (Z/q)^*, brute force (q small here)."""
    x = 1
    for k in range(order):
        if x == a % q:
            return k
        x = x * g % q
    raise ValueError(f"dlog failure: {a} not in <{g}> mod {q}")


class DirichletCharacter:
    """Character modulo M given by exponents on fixed unit-group generators.

    chi(gen_i) = zeta_e^(exps_i * e / orders_i) where e = lcm of the orders;
    values are returned as CycloNumbers in Q(xi_order(chi)).
    """

    __slots__ = ("M", "exps", "_pps", "_gens", "_orders", "_e")

    def __init__(self, M: int, exps):
        pps, gens, orders = _unit_group_data(M)
        exps = tuple(int(x) % o for x, o in zip(exps, orders))
        if len(exps) != len(gens):
            raise ValueError("wrong number of exponents")
        self.M = M
        self.exps = exps
        self._pps, self._gens, self._orders = pps, gens, orders
        from math import lcm

        self._e = lcm(*self._orders) if self._orders else 1

    # exps semantics: chi(gen_i) = zeta_{orders_i}^{exps_i}

    @property
    def order(self) -> int:
        from math import lcm

        o = 1
        for x, s in zip(self.exps, self._orders):
            o = lcm(o, s // gcd(s, x))
        return o

    def is_even(self) -> bool:
        return self(self.M - 1 if self.M > 1 else 1) == CycloNumber.one(self.order)

    @property
    def parity(self) -> int:
        """+1 for even, -1 for odd."""
        return 1 if self.is_even() else -1

    @property
    def conductor(self) -> int:
        # local conductor at p^e: smallest p^k with (local order) | phi(p^k)
        cond = 1
        for q, x, s in zip(self._pps, self.exps, self._orders):
            if x % s == 0:
                continue
            p = min(factorize(q))
            loc_order = s // gcd(s, x)
            f = p
            while euler_phi(f) % loc_order:
                f *= p
            cond *= f
        return cond

    def log_value(self, n: int) -> int | None:
        """k with chi(n) = zeta_order^k, or None when gcd(n, M) > 1."""
        n %= self.M
        if self.M == 1:
            return 0
        if gcd(n, self.M) != 1:
            return None
        e = self._e
        acc = 0
        for q, g, s, x in zip(self._pps, self._gens, self._orders, self.exps):
            k = _dlog(n % q, g % q, s, q)
            acc = (acc + k * x * (e // s)) % e
        # renormalize from zeta_e to zeta_order
        o = self.order
        assert (acc * o) % e == 0
        return (acc * o // e) % o

    def __call__(self, n: int) -> CycloNumber:
        k = self.log_value(n)
        if k is None:
            return CycloNumber.zero(self.order)
        return CycloNumber.zeta_power(self.order, k)

    def value_embed(self, n: int, dps: int | None = None) -> mpmath.mpc:
        k = self.log_value(n)
        with workdps(dps, extra=10):
            if k is None:
                return mpmath.mpc(0)
            return mpmath.exp(2j * mpmath.pi * k / self.order)

    def __mul__(self, other: "DirichletCharacter") -> "DirichletCharacter":
        if other.M != self.M:
            raise ValueError("modulus mismatch")
        return DirichletCharacter(
            self.M, [(a + b) % s for a, b, s in zip(self.exps, other.exps, self._orders)]
        )

    def conjugate(self) -> "DirichletCharacter":
        return DirichletCharacter(self.M, [(-a) % s for a, s in zip(self.exps, self._orders)])

    def is_trivial(self) -> bool:
        return all(x == 0 for x in self.exps)

    def is_quadratic(self) -> bool:
        return self.order == 2

    def __eq__(self, other):
        return (
            isinstance(other, DirichletCharacter)
            and self.M == other.M
            and self.exps == other.exps
        )

    def __hash__(self):
        return hash((self.M, self.exps))

    def __repr__(self):
        return f"DirichletCharacter(mod {self.M}, exps {self.exps}, order {self.order})"


def characters_mod(M: int) -> list[DirichletCharacter]:
    """All phi(M) Dirichlet characters modulo M."""
    if M < 1:
        raise ValueError("modulus must be positive")
    _, gens, orders = _unit_group_data(M)
    out: list[DirichletCharacter] = []

    def rec(i, acc):
        if i == len(orders):
            out.append(DirichletCharacter(M, acc))
            return
        for x in range(orders[i]):
            rec(i + 1, acc + [x])

    rec(0, [])
    return out


def quadratic_character(p: int) -> DirichletCharacter:
    """The Legendre character kappa_p modulo an odd prime p."""
    for chi in characters_mod(p):
        if chi.order == 2:
            return chi
    raise ValueError(f"no quadratic character mod {p}")


# ---------------------------------------------------------------------------
# Hilbert 90


def hilbert90_solve(cocycle: dict[int, CycloNumber], M: int, rng=None) -> CycloNumber:
    """Nonzero c in Q(xi_M) with cocycle[n] = sigma_{n^-1}(c) / c for all n.

    The domain of `cocycle` must be a subgroup S of (Z/M)^* (keys mod M) on
    which the map satisfies the 1-cocycle law; each value must have norm 1
    over the fixed field, equivalently prod_{n in S} c_n-twisted products are
    trivial -- we verify the defining relations exactly instead of a norm
    shortcut.  The solution is the Poincare resolvent
    b = sum_{n in S} c_n^-1 * sigma_{n^-1}(theta) over trial theta = xi^j; if
    all basis resolvents vanish, random small integer combinations are tried.

    When S is a proper subgroup, c is well-defined only up to a factor in the
    fixed field of S.
    """
    S = sorted({n % M for n in cocycle})
    if 1 not in S:
        raise NoSolutionError("cocycle domain must contain 1")
    vals = {n % M: v for n, v in cocycle.items()}
    one = CycloNumber.one(M)
    if not vals[1] == one:
        raise NoSolutionError("c_1 must be 1 for a cocycle")
    # norm-1 precondition: prod over the orbit of n of sigma_(m^-1)(c_n) is 1
    for n in S:
        prod = one
        m = 1
        while True:
            prod = prod * galois_sigma(inv_mod(m, M), vals[n])
            m = (m * n) % M
            if m == 1:
                break
        if not prod == one:
            raise NoSolutionError(f"norm of c_{n} along its orbit is {prod}, not 1")
    # subgroup closure and cocycle law: c_{ab} = sigma_{b^-1}(c_a) * c_b
    for a in S:
        for b in S:
            ab = (a * b) % M
            if ab not in vals:
                raise NoSolutionError(f"domain not closed under multiplication: {a}*{b}")
            rhs = galois_sigma(inv_mod(b, M), vals[a]) * vals[b]
            if not vals[ab] == rhs:
                raise NoSolutionError(f"cocycle law fails at ({a}, {b})")

    phi = euler_phi(M)
    trials = [CycloNumber.zeta_power(M, j) for j in range(phi)]
    if rng is not None:
        extra = []
        for _ in range(20):
            extra.append(
                CycloNumber(M, [rng.randint(-3, 3) for _ in range(phi)])
            )
        trials += extra
    for theta in trials:
        b = CycloNumber.zero(M)
        for n in S:
            b = b + vals[n].inverse() * galois_sigma(inv_mod(n, M), theta)
        if not b.is_zero():
            for n in S:
                lhs = galois_sigma(inv_mod(n, M), b)
                if not lhs == vals[n] * b:
                    raise NoSolutionError("resolvent verification failed")
            return b
    raise NoSolutionError(
        "all trial resolvents vanished; retry with a seeded rng for random combinations"
    )


def cocycle_from_generator(M: int, n0: int, c0: CycloNumber) -> dict[int, CycloNumber]:
    """Extend c_{n0} = c0 to the cocycle on the subgroup generated by n0."""
    out = {1: CycloNumber.one(M)}
    n, c = n0 % M, c0
    while n != 1:
        out[n] = c
        c = galois_sigma(inv_mod(n0, M), c) * c0
        n = (n * n0) % M
    return out


# ---------------------------------------------------------------------------
# recognition of numeric values


def recognize_cyclo(
    value,
    M: int,
    height_bound: int = 10**6,
    conjugates: dict[int, "mpmath.mpc"] | None = None,
    dps: int | None = None,
) -> CycloNumber:
    """Find x in Q(xi_M) with embed(x) close to `value` and bounded height.

    Two strategies:
      * If `conjugates` supplies numeric values of sigma_n(x) for n running
        over a subgroup (including n=1 -> value itself), the real linear
        system over the embedded, Galois-translated power basis is solved by
        least squares and each coordinate is snapped to a rational by
        continued fractions.
      * Otherwise an integer-relation search (PSLQ) over the embedded basis
        together with the value is used.
    The result is verified by re-embedding; failure raises RecognitionError.
    """
    dps = dps if dps is not None else get_working_dps()
    phi = euler_phi(M)
    with workdps(dps, extra=15):
        val = mpmath.mpc(value)
        if conjugates is not None:
            conj = {1: val}
            for n, v in conjugates.items():
                conj[n % M] = mpmath.mpc(v)
            x = _recognize_via_conjugates(conj, M, phi, height_bound)
        else:
            x = _recognize_via_pslq(val, M, phi, height_bound, dps)
        err = abs(x.embed() - val)
        tol = mpmath.mpf(10) ** (-(dps // 2))
        if err > tol:
            raise RecognitionError(
                f"re-embedding residual {mpmath.nstr(err, 5)} exceeds tolerance "
                f"{mpmath.nstr(tol, 5)}"
            )
        return x


def _rationalize_real(x, height_bound: int) -> Fraction:
    """Best rational with denominator <= height_bound via continued fractions."""
    x = mpmath.mpf(x)
    if x == 0:
        return Fraction(0)
    sign, man, exp, _ = x._mpf_
    exact = Fraction((-1) ** sign * man) * (Fraction(2) ** exp)
    return exact.limit_denominator(height_bound)


def _recognize_via_conjugates(conj: dict, M: int, phi: int, height_bound: int) -> CycloNumber:
    ns = sorted(conj)
    rows = []
    rhs = []
    for n in ns:
        k = inv_mod(n, M)
        # sigma_n(x) = sum_j x_j * xi^(j*k)
        zrow = [
            mpmath.exp(2j * mpmath.pi * ((j * k) % M) / M) for j in range(phi)
        ]
        rows.append([z.real for z in zrow])
        rhs.append(conj[n].real)
        rows.append([z.imag for z in zrow])
        rhs.append(conj[n].imag)
    A = mpmath.matrix(rows)
    b = mpmath.matrix(rhs)
    if A.rows < A.cols:
        raise RecognitionError(
            f"only {A.rows} real equations for {A.cols} coordinates; supply more conjugates"
        )
    sol = mpmath.lu_solve(A.T * A, A.T * b)
    coords = [_rationalize_real(sol[j], height_bound) for j in range(phi)]
    for c in coords:
        if abs(c.numerator) > height_bound or c.denominator > height_bound:
            raise RecognitionError(f"coordinate {c} exceeds height bound {height_bound}")
    return CycloNumber(M, coords)


def _recognize_via_pslq(val, M: int, phi: int, height_bound: int, dps: int):
    basis = [mpmath.exp(2j * mpmath.pi * j / M) for j in range(phi)]
    vec_re = [z.real for z in basis] + [val.real]
    vec_im = [z.imag for z in basis] + [val.imag]

    def attempt(vec):
        return mpmath.pslq(
            vec,
            tol=mpmath.mpf(10) ** (-(dps - 20)),
            maxcoeff=height_bound * 4,
            maxsteps=200000,
        )

    # A generic rotation folds the two real constraints into one; a relation
    # among the rotated parts that also passes re-embedding is a complex one.
    # theta = 0 alone is poisoned by cos(2 pi j / M) = cos(2 pi (M-j) / M).
    for theta in (0.7390851, 1.3113, 2.017, 0.0):
        rot = [mpmath.cos(theta) * a + mpmath.sin(theta) * b for a, b in zip(vec_re, vec_im)]
        rel = attempt(rot)
        if rel and rel[-1] != 0:
            cand = CycloNumber(M, [Fraction(-r, rel[-1]) for r in rel[:-1]])
            if abs(cand.embed() - val) < mpmath.mpf(10) ** (-(dps // 2)):
                return cand
    raise RecognitionError("no integer relation found within the height bound")


# ---------------------------------------------------------------------------
# assorted exact constructions used by tests and the solver


def gauss_sum_quadratic(p: int) -> CycloNumber:
    """sum_k (k/p) xi_p^k; equals sqrt(p) or sqrt(-p) as p = 1, 3 mod 4."""
    from .arith import legendre

    mono = {k: Fraction(legendre(k, p)) for k in range(1, p)}
    return CycloNumber._from_monomials(p, mono)


def real_zeta_vector(M: int, coeffs) -> CycloNumber:
    """sum_i coeffs[i] * (xi_M^i + xi_M^-i), i = 1..len(coeffs)."""
    x = CycloNumber.zero(M)
    for i, a in enumerate(coeffs, start=1):
        x = x + Fraction(a) * (CycloNumber.zeta_power(M, i) + CycloNumber.zeta_power(M, -i))
    return x


def serialize(x: CycloNumber) -> str:
    return json.dumps(x.to_json())
