"""Weight-2 q-expansions: twists, companion forms, certified evaluation.

A QExpansion holds coefficients 1..n_max, exact where available (integers or
CycloNumbers) and always as cached high-precision complex values; evaluation
at a point of the upper half plane computes its own certified truncation
cutoff from the tail majorant d(n) sqrt(n) <= n^(3/2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd

import mpmath

from .cyclo import CycloNumber, DirichletCharacter
from .ecq import EllipticCurveQ
from .errors import InsufficientCoefficientsError, PrecisionError
from .localtype import PSCompanion
from .precision import get_working_dps, workdps


@dataclass
class EvalPoint:
    """Point z with Im z > 0; evaluation uses exp(2 pi i z / s)."""

    z: object
    s: int = 1

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("scale divisor must be >= 1")


class QExpansion:
    """Coefficients a_1..a_n_max of a weight-2 form plus metadata."""

    def __init__(self, coeffs_exact, coeffs_numeric, n_max, level=None, character=None,
                 source=""):
        self._exact = coeffs_exact  # list len n_max (index n-1) or None entries
        self._numeric = coeffs_numeric  # list of mpc, len n_max
        self.n_max = n_max
        self.level = level
        self.character = character
        self.source = source

    def coefficient(self, n: int):
        """Exact coefficient (int, Fraction or CycloNumber), or None if only numeric."""
        if not 1 <= n <= self.n_max:
            raise IndexError(f"coefficient index {n} out of range 1..{self.n_max}")
        return self._exact[n - 1] if self._exact is not None else None

    def numeric(self, n: int) -> mpmath.mpc:
        return self._numeric[n - 1]

    def numeric_array(self, n_cut: int):
        if n_cut > self.n_max:
            raise InsufficientCoefficientsError(n_cut, self.n_max)
        return self._numeric[:n_cut]

    @staticmethod
    def from_exact(coeffs, level=None, character=None, source="", dps=None):
        with workdps(dps, extra=10):
            numeric = [_embed_any(c) for c in coeffs]
        return QExpansion(list(coeffs), numeric, len(coeffs), level, character, source)

    @staticmethod
    def from_numeric(coeffs, level=None, character=None, source=""):
        return QExpansion(None, list(coeffs), len(coeffs), level, character, source)

    def scaled(self, factor_numeric, source=None):
        """Numeric rescaling (loses exactness on purpose)."""
        return QExpansion(
            None,
            [factor_numeric * c for c in self._numeric],
            self.n_max,
            self.level,
            self.character,
            source or self.source,
        )

    def to_json(self):
        coeffs = []
        for n in range(1, self.n_max + 1):
            e = self.coefficient(n)
            if isinstance(e, CycloNumber):
                coeffs.append(e.to_json())
            elif e is not None:
                coeffs.append(str(e))
            else:
                v = self.numeric(n)
                coeffs.append([mpmath.nstr(v.real, 30), mpmath.nstr(v.imag, 30)])
        return {"source": self.source, "n_max": self.n_max, "coeffs": coeffs}


def _embed_any(c):
    if isinstance(c, CycloNumber):
        return c.embed()
    from fractions import Fraction

    f = Fraction(c)
    return mpmath.mpc(mpmath.mpf(f.numerator) / f.denominator)


# ---------------------------------------------------------------------------
# constructions


def twist_expansion(lam: list[int], chi: DirichletCharacter, n_max: int | None = None,
                    level: int | None = None, source: str = "") -> QExpansion:
    """Coefficients lambda_n chi(n) as exact cyclotomic numbers."""
    n_max = n_max if n_max is not None else len(lam)
    M = chi.order
    value_cache: dict[int | None, CycloNumber] = {None: CycloNumber.zero(M)}
    numeric_cache: dict[int | None, mpmath.mpc] = {}
    with workdps(extra=10):
        for k in range(M):
            value_cache[k] = CycloNumber.zeta_power(M, k)
            numeric_cache[k] = value_cache[k].embed()
        numeric_cache[None] = mpmath.mpc(0)
        exact, numeric = [], []
        for n in range(1, n_max + 1):
            k = chi.log_value(n)
            ln = lam[n - 1]
            exact.append(value_cache[k] * ln)
            numeric.append(numeric_cache[k] * ln)
    return QExpansion(exact, numeric, n_max, level, chi, source)


def companion_expansion(
    companion,
    lam: list[int],
    n_max: int,
    kind: str,
    bad_primes=frozenset(),
    source: str = "",
) -> QExpansion:
    """Expansion of a companion newform h.

    kind = "ps": companion is a PSCompanion with a_l(h) = lambda_l conj(theta)(l)
    away from p, a_p the matched root, the weight-2 recurrence with nebentypus
    conj(theta)^2 at good primes, and a_{l^k} = a_l^k at primes of the level
    (pass them as bad_primes; p itself is always included).
    kind = "steinberg": companion is the twisted curve; integer eigenvalues.
    """
    if kind == "steinberg":
        h_curve: EllipticCurveQ = companion
        seq = h_curve.eigenvalue_sequence(n_max)
        return QExpansion.from_exact(seq, level=h_curve.conductor(), source=source)
    assert kind == "ps"
    comp: PSCompanion = companion
    p = comp.p
    bad = set(bad_primes) | {p}
    theta_bar = comp.theta.conjugate()
    neben = theta_bar * theta_bar
    with workdps(extra=10):
        ap = comp.ap_embed()
        order = comp.theta.order
        theta_vals = {k: mpmath.exp(2j * mpmath.pi * k / order) for k in range(order)}

        def char_num(chi, n):
            k = chi.log_value(n)
            return mpmath.mpc(0) if k is None else theta_vals[k % order]

        a = [mpmath.mpc(0)] * (n_max + 1)
        a[1] = mpmath.mpc(1)
        from .arith import primes_up_to

        for ell in primes_up_to(n_max):
            al = ap if ell == p else lam[ell - 1] * char_num(theta_bar, ell)
            pk = ell
            prev, cur = mpmath.mpc(1), al
            while pk <= n_max:
                a[pk] = cur
                nxt = al * cur if ell in bad else al * cur - char_num(neben, ell) * ell * prev
                prev, cur = cur, nxt
                pk *= ell
        for n in range(2, n_max + 1):
            if a[n] != 0:
                continue
            m, q = n, _least_prime(n)
            pk = 1
            while m % q == 0:
                m //= q
                pk *= q
            if m > 1:
                a[n] = a[pk] * a[m]
    return QExpansion(None, a[1:], n_max, level=None, character=neben, source=source)


def _least_prime(n: int) -> int:
    for q in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31):
        if n % q == 0:
            return q
    from .arith import factorize

    return min(factorize(n))


# ---------------------------------------------------------------------------
# evaluation with certified tails


def tail_cutoff(im_z_over_s, target_digits: int, n_max: int) -> tuple[int, mpmath.mpf]:
    """Smallest n_cut with sum_{n > n_cut} n^(3/2) r^n < 10^-target, r = e^(-2 pi y).

    Uses the closed majorant K^(3/2) r^K * rho/(1-rho) with
    rho = r * exp(3/(2K)); raises InsufficientCoefficientsError (reporting the
    needed index) if n_max is too small.
    """
    y = mpmath.mpf(im_z_over_s)
    if y <= 0:
        raise PrecisionError("evaluation point must have positive imaginary part")
    r = mpmath.exp(-2 * mpmath.pi * y)
    target = mpmath.mpf(10) ** (-target_digits)

    def bound(K):
        rho = r * mpmath.exp(mpmath.mpf(3) / (2 * K))
        if rho >= 1:
            return mpmath.inf
        return mpmath.mpf(K) ** mpmath.mpf(1.5) * r**K * rho / (1 - rho)

    lo, hi = 1, 2
    while bound(hi) >= target:
        hi *= 2
        if hi > 8 * n_max + 10**7:
            raise InsufficientCoefficientsError(hi, n_max)
    while lo < hi:
        mid = (lo + hi) // 2
        if bound(mid) < target:
            hi = mid
        else:
            lo = mid + 1
    if lo > n_max:
        raise InsufficientCoefficientsError(lo, n_max)
    return lo, bound(lo)


def evaluate(f: QExpansion, pt: EvalPoint, target_digits: int | None = None):
    """(value, certified error bound, n_cut) of sum a_n exp(2 pi i n z / s)."""
    target_digits = target_digits if target_digits is not None else get_working_dps() // 2
    with workdps(extra=10):
        z = mpmath.mpc(pt.z)
        y = mpmath.im(z) / pt.s
        n_cut, bnd = tail_cutoff(y, target_digits, f.n_max)
        q = mpmath.exp(2j * mpmath.pi * z / pt.s)
        acc = mpmath.mpc(0)
        qn = mpmath.mpc(1)
        coeffs = f.numeric_array(n_cut)
        for n in range(n_cut):
            qn *= q
            c = coeffs[n]
            if c != 0:
                acc += c * qn
        return acc, bnd, n_cut


def qpow_table(z, s: int, n_cut: int):
    """Powers q^1..q^n_cut of q = exp(2 pi i z / s), shared across forms."""
    q = mpmath.exp(2j * mpmath.pi * mpmath.mpc(z) / s)
    out = [q]
    for _ in range(n_cut - 1):
        out.append(out[-1] * q)
    return out


def evaluate_with_table(f: QExpansion, table) -> mpmath.mpc:
    coeffs = f.numeric_array(len(table))
    acc = mpmath.mpc(0)
    for c, qn in zip(coeffs, table):
        if c != 0:
            acc += c * qn
    return acc
