"""Local automorphic type at additive primes p with p^2 || conductor.

The trichotomy: Steinberg twist when the curve is potentially multiplicative
(v_p(j) < 0); otherwise e = 12/gcd(12, v_p(Delta_min)) and the type is a
ramified principal series when e | p - 1 with e > 2, supercuspidal otherwise
(all wild p = 3 potentially-good cases are classified supercuspidal; e = 2 is
rejected with a distinct code).  The principal-series branch also produces
the companion character and its a_p by counting points of rescaled models.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import mpmath

from .arith import smallest_primitive_root, valuation
from .cyclo import DirichletCharacter, characters_mod, quadratic_character
from .ecq import EllipticCurveQ, _ap_via_counting, _disc
from .errors import HypothesisError, NoSolutionError
from .precision import workdps


@dataclass
class LocalType:
    p: int
    kind: str  # "Supercuspidal" | "SteinbergTwist" | "RamifiedPS"
    e: int | None = None  # ramification order, RamifiedPS only

    def to_json(self):
        out = {"p": self.p, "kind": self.kind}
        if self.e is not None:
            out["e"] = self.e
        return out


@dataclass
class PSCompanion:
    """Character theta of order e and the p-th coefficient of the companion.

    a_p is a root of t^2 - a t + p (a = trace from counting over the good
    reduction field); stored as the trace plus a chosen complex embedding,
    with the conjugate pair equally valid.
    """

    p: int
    e: int
    theta: DirichletCharacter
    trace: int  # a in t^2 - a t + p
    root_choice: int  # +1 for (a + sqrt(a^2-4p))/2, -1 for the conjugate

    @property
    def min_poly(self) -> tuple[int, int, int]:
        """(1, -a, p): t^2 - a t + p."""
        return (1, -self.trace, self.p)

    def ap_embed(self, dps=None) -> mpmath.mpc:
        with workdps(dps, extra=10):
            a = mpmath.mpf(self.trace)
            disc = a * a - 4 * self.p
            rt = mpmath.sqrt(abs(disc))
            assert disc < 0, "Hasse bound forces complex roots"
            return mpmath.mpc(a / 2, self.root_choice * rt / 2)

    def conjugate(self) -> "PSCompanion":
        return PSCompanion(self.p, self.e, self.theta.conjugate(), self.trace, -self.root_choice)


def classify_local(E: EllipticCurveQ, p: int) -> LocalType:
    """Type of the local representation at p; requires p odd, p^2 || cond."""
    if p == 2:
        raise HypothesisError("p must be odd")
    fac = E.conductor_factors()
    if fac.get(p) != 2:
        raise HypothesisError(f"p = {p} does not exactly double-divide the conductor")
    if E.vp_j(p) < 0:
        return LocalType(p, "SteinbergTwist")
    v = E.vp_disc_min(p)
    e = 12 // gcd(12, v)
    if e == 2:
        raise HypothesisError(
            f"e = 2 at p = {p} (quadratic ramified PS / twist of good reduction) "
            "is not supported"
        )
    if e > 2 and (p - 1) % e == 0:
        return LocalType(p, "RamifiedPS", e)
    return LocalType(p, "Supercuspidal")


def classify_all(E: EllipticCurveQ) -> list[LocalType]:
    """Local types at every odd prime with conductor exponent exactly 2."""
    out = []
    for p, f in sorted(E.conductor_factors().items()):
        if f == 2 and p != 2:
            out.append(classify_local(E, p))
    return out


# ---------------------------------------------------------------------------
# principal series companion (point counts over Q(p^(1/e)) residue fields)


def _rescaled_reduction(E: EllipticCurveQ, p: int, e: int, unit: int) -> tuple:
    """Coefficients mod p of the rescaled model over Q(x)/(x^e - unit*p).

    Works on the short model [0, 0, 0, A, B] (valid since RamifiedPS forces
    p >= 5): with w = e*v_p(Delta)/12 and pi the uniformizer (pi^e = unit*p),
    coefficient a_i scales to a_i/pi^(i*w); the residue is
    a_i/(unit*p)^(i*w/e) mod p when e*v_p(a_i) = i*w, zero when larger, and
    the model is not potentially good when smaller.
    """
    E = E.minimal_model()
    v = E.vp_disc_min(p)
    w = e * v // 12
    assert e * v % 12 == 0
    A, B = -27 * int(E.c4), -54 * int(E.c6)
    out = [0, 0, 0]
    for ai, i in ((A, 4), (B, 6)):
        if ai == 0:
            out.append(0)
            continue
        va = valuation(ai, p)
        if e * va > i * w:
            out.append(0)
        elif e * va == i * w:
            k = i * w // e
            assert i * w % e == 0, "equal valuations force an integral exponent"
            red = ai // p**k
            red = red * pow(unit, -k, p) % p if k else red % p
            out.append(red % p)
        else:
            raise NoSolutionError(
                f"rescaled model not integral at p = {p} (a_{i}); not potentially good"
            )
    return tuple(out)


def ps_companion(E: EllipticCurveQ, p: int, ltype: LocalType) -> PSCompanion:
    """Companion (theta, a_p) for a ramified principal series prime."""
    if ltype.kind != "RamifiedPS":
        raise HypothesisError("companion only defined for ramified principal series")
    e = ltype.e
    # step 2: good reduction over L = Q(x)/(x^e - p); count points over F_p
    red = _rescaled_reduction(E, p, e, 1)
    if _disc(red) % p == 0:
        raise NoSolutionError(f"rescaled model is singular mod {p}")
    a = _ap_via_counting(red, p)
    assert a * a <= 4 * p, "Hasse bound"
    # step 3: over L' = Q(x)/(x^e - g p); match the character value at g
    g = smallest_primitive_root(p)
    red2 = _rescaled_reduction(E, p, e, g)
    a2 = _ap_via_counting(red2, p)
    assert a2 * a2 <= 4 * p
    # the product of a root of t^2 - a t + p by theta(g) must be a root of
    # t^2 - a2 t + p; search the e-th roots of unity at both root choices
    with workdps(extra=10):
        disc1 = mpmath.sqrt(mpmath.mpf(4 * p - a * a))
        disc2 = mpmath.sqrt(mpmath.mpf(4 * p - a2 * a2))
        roots1 = [mpmath.mpc(a, s * disc1) / 2 for s in (1, -1)]
        roots2 = [mpmath.mpc(a2, s * disc2) / 2 for s in (1, -1)]
        matches = []
        for s1, r1 in zip((1, -1), roots1):
            for k in range(e):
                zeta = mpmath.exp(2j * mpmath.pi * k / e)
                if any(abs(r1 * zeta - r2) < mpmath.mpf(10) ** (-(mpmath.mp.dps // 2)) for r2 in roots2):
                    matches.append((s1, k))
        if not matches:
            raise NoSolutionError("no consistent (root, character value) match")
        # conjugate pairs (s, k) <-> (-s, -k); keep a canonical representative
        matches = sorted(matches)
        s1, k = matches[-1]
    if gcd(k, e) != 1:
        raise NoSolutionError(f"matched character value zeta_{e}^{k} has order < {e}")
    theta = None
    for chi in characters_mod(p):
        if chi.order == e and chi.log_value(g) is not None:
            lv = chi.log_value(g)
            if lv == k % e:
                theta = chi
                break
    if theta is None:
        raise NoSolutionError("no character of the matched order/value")
    assert theta.conductor == p and theta.order == e
    return PSCompanion(p, e, theta, a, s1)


# ---------------------------------------------------------------------------
# Steinberg companion


def steinberg_companion(E: EllipticCurveQ, p: int):
    """(curve of the twisted newform h, kappa_p); h = newform of E^(p*).

    p* = (-1)^((p-1)/2) p makes the twisting character the quadratic kappa_p.
    a_p(h) is +-1 from the multiplicative reduction of the twist.
    """
    pstar = p if p % 4 == 1 else -p
    h_curve = E.quadratic_twist(pstar)
    t = h_curve.tate_at(p)
    if t.kind not in ("split", "nonsplit"):
        raise HypothesisError(
            f"twist by {pstar} is not multiplicative at {p}; not a Steinberg twist"
        )
    return h_curve, quadratic_character(p)
