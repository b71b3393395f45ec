"""Integer matrix machinery for Cartan non-split levels.

A context holds the level data (N, m, eps): N odd squarefree, m coprime to N,
and one quadratic non-residue eps_i per prime p_i | N.  The mod-p_i Cartan
ring is {(a b; eps*b a)}; membership, the change-of-parameter matrices A_n,
generators of the invariance quotient, Hecke double-coset representatives,
SL2 lifting, and the conjugators sending a fixed-point matrix into the ring
all live here.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

from .arith import crt, factorize, inv_mod, legendre, sqrt_mod, xgcd
from .errors import HypothesisError, NoSolutionError


class Mat2Z:
    """2x2 integer matrix acting on the upper half plane by Mobius maps."""

    __slots__ = ("a", "b", "c", "d")

    def __init__(self, a, b, c, d):
        self.a, self.b, self.c, self.d = int(a), int(b), int(c), int(d)

    def det(self) -> int:
        return self.a * self.d - self.b * self.c

    def trace(self) -> int:
        return self.a + self.d

    def __mul__(self, o: "Mat2Z") -> "Mat2Z":
        return Mat2Z(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )

    def adjugate(self) -> "Mat2Z":
        return Mat2Z(self.d, -self.b, -self.c, self.a)

    def inverse_mod(self, M: int) -> "Mat2Z":
        dinv = inv_mod(self.det() % M, M)
        adj = self.adjugate()
        return Mat2Z(adj.a * dinv % M, adj.b * dinv % M, adj.c * dinv % M, adj.d * dinv % M)

    def mod(self, M: int) -> "Mat2Z":
        return Mat2Z(self.a % M, self.b % M, self.c % M, self.d % M)

    def __eq__(self, o):
        return isinstance(o, Mat2Z) and (self.a, self.b, self.c, self.d) == (o.a, o.b, o.c, o.d)

    def __hash__(self):
        return hash((self.a, self.b, self.c, self.d))

    def entries(self):
        return (self.a, self.b, self.c, self.d)

    def act(self, z):
        """Mobius action on a complex number."""
        return (self.a * z + self.b) / (self.c * z + self.d)

    def jfactor(self, z):
        """Automorphy denominator c*z + d."""
        return self.c * z + self.d

    def to_json(self):
        return [[self.a, self.b], [self.c, self.d]]

    @staticmethod
    def from_json(obj):
        return Mat2Z(obj[0][0], obj[0][1], obj[1][0], obj[1][1])

    def __repr__(self):
        return f"[{self.a} {self.b}; {self.c} {self.d}]"


IDENTITY = Mat2Z(1, 0, 0, 1)


@dataclass(frozen=True)
class CartanContext:
    """Level data (N, m, eps) with one non-residue per prime of N."""

    N: int
    m: int
    eps: tuple[int, ...]

    def __post_init__(self):
        fac = factorize(self.N)
        if self.N % 2 == 0 or any(e > 1 for e in fac.values()):
            raise HypothesisError(f"N = {self.N} must be odd and squarefree")
        if gcd(self.N, self.m) != 1 or self.m < 1:
            raise HypothesisError("m must be positive and coprime to N")
        primes = sorted(fac)
        if len(self.eps) != len(primes):
            raise HypothesisError(f"need one epsilon per prime of N = {primes}")
        for p, e in zip(primes, self.eps):
            if legendre(e, p) != -1:
                raise HypothesisError(f"eps = {e} is a quadratic residue mod {p}")

    @property
    def primes(self) -> list[int]:
        return sorted(factorize(self.N))

    def eps_at(self, p: int) -> int:
        return self.eps[self.primes.index(p)]

    def to_json(self):
        return {"N": self.N, "m": self.m, "eps": list(self.eps)}

    @staticmethod
    def from_json(obj):
        return CartanContext(obj["N"], obj["m"], tuple(obj["eps"]))


def default_context(N: int, m: int) -> CartanContext:
    """Context with the smallest non-residue at each prime."""
    eps = []
    for p in sorted(factorize(N)):
        e = 2
        while legendre(e, p) != -1:
            e += 1
        eps.append(e)
    return CartanContext(N, m, tuple(eps))


# ---------------------------------------------------------------------------
# membership


def is_cartan_member(A: Mat2Z, ctx: CartanContext, require_m0m: bool = True) -> bool:
    """A lies in the Cartan ring mod each p | N (and c = 0 mod m if flagged)."""
    for p in ctx.primes:
        e = ctx.eps_at(p)
        if (A.a - A.d) % p or (A.c - e * A.b) % p:
            return False
    if require_m0m and A.c % ctx.m:
        return False
    return True


# ---------------------------------------------------------------------------
# SL2 lifting


def sl2_lift(A: Mat2Z, M: int) -> Mat2Z:
    """SL2(Z) matrix congruent to A mod M; requires det(A) = 1 mod M."""
    if M == 1:
        return IDENTITY
    if A.det() % M != 1 % M:
        raise NoSolutionError(f"determinant {A.det()} is not 1 mod {M}")
    a, b, c, d = (x % M for x in A.entries())
    # choose a bottom row (c', d') congruent mod M with gcd 1
    if c == 0 and d == 0:
        raise NoSolutionError("zero bottom row cannot have unit determinant")
    cp, dp = c, d
    if cp == 0:
        cp = M
    k = 0
    while gcd(cp, dp) != 1:
        k += 1
        dp = d + k * M
        if k > 4 * M + 16:
            raise NoSolutionError("no coprime lift of the bottom row found")
    # solve a'*dp - b'*cp = 1 with a' = a + x M, b' = b + y M
    base = a * dp - b * cp
    t, rem = divmod(1 - base, M)
    assert rem == 0
    g, x0, y0 = xgcd(dp, -cp)
    assert g == 1
    x, y = x0 * t, y0 * t
    out = Mat2Z(a + x * M, b + y * M, cp, dp)
    assert out.det() == 1
    assert all((u - v) % M == 0 for u, v in zip(out.entries(), (a, b, c, d)))
    return out


def lift_with_small_c(X: Mat2Z, N: int, m: int) -> Mat2Z:
    """SL2(Z) lift of X mod N with c = 0 mod m, minimizing |c| then |d|.

    Only the congruence of the full matrix mod N and of c mod m is preserved
    (the mod-m top row is left free, as Gamma_0(m) allows); small lower rows
    keep Mobius images of sample points high in the upper half plane.
    """
    if X.det() % N != 1 % N:
        raise NoSolutionError("determinant not 1 mod N")
    c0 = crt([X.c % N, 0], [N, m]) if m > 1 else X.c % N
    M = N * m
    c_cands = sorted({c0 - 2 * M, c0 - M, c0, c0 + M, c0 - 3 * M, c0 + 2 * M}, key=abs)
    for c in c_cands:
        # d = X.d mod N, free mod m, gcd(c, d) = 1, small
        for k in range(0, 4 * abs(c) // N + 8):
            for d in {X.d % N + k * N, X.d % N - k * N}:
                if gcd(c, d) != 1:
                    continue
                # top row: A = X.a + N s, B = X.b + N t with A d - B c = 1
                base = (X.a % N) * d - (X.b % N) * c
                t_num = 1 - base
                if t_num % N:
                    continue
                tt = t_num // N
                g, s0, t0 = xgcd(d, -c)
                assert g == 1
                A = X.a % N + N * (s0 * tt)
                B = X.b % N + N * (t0 * tt)
                out = Mat2Z(A, B, c, d)
                assert out.det() == 1
                assert all(
                    (u - v) % N == 0
                    for u, v in zip(out.entries(), (X.a, X.b, X.c, X.d))
                )
                assert out.c % m == 0
                return out
    raise NoSolutionError("no small-c lift found")


# ---------------------------------------------------------------------------
# A_n matrices


def _cartan_norm_rep(n: int, p: int, eps: int) -> tuple[int, int]:
    """(a, b) with a^2 - eps b^2 = n mod p (norm surjectivity, O(p) search)."""
    n %= p
    for b in range(p):
        rhs = (n + eps * b * b) % p
        if legendre(rhs, p) != -1:
            return sqrt_mod(rhs, p), b
    raise NoSolutionError(f"norm {n} not represented mod {p}")


def An_matrix(n: int, ctx: CartanContext) -> Mat2Z:
    """SL2(Z) matrix congruent to B*diag(1, n^-1) mod each p | N, identity mod m.

    B is a Cartan-ring matrix of determinant n mod p; the result realizes the
    Galois twist sigma_n as a change of Cartan parameter (coset well-defined
    by n mod N).
    """
    if gcd(n, ctx.N * ctx.m) != 1:
        raise NoSolutionError(f"n = {n} not coprime to N*m")
    mods, mats = [], []
    for p in ctx.primes:
        e = ctx.eps_at(p)
        a, b = _cartan_norm_rep(n, p, e)
        ninv = inv_mod(n, p)
        # B*diag(1, 1/n) = (a, b/n; e b, a/n)
        mats.append(Mat2Z(a % p, b * ninv % p, e * b % p, a * ninv % p))
        mods.append(p)
    if ctx.m > 1:
        mats.append(IDENTITY)
        mods.append(ctx.m)
    ent = [crt([mat.entries()[i] for mat in mats], mods) for i in range(4)]
    return sl2_lift(Mat2Z(*ent), ctx.N * ctx.m)


# ---------------------------------------------------------------------------
# generators of Gamma_ns / (Gamma(N) cap Gamma_0(m))


def _norm_one_generator(p: int, eps: int) -> tuple[int, int]:
    """(a, b) generating the order-(p+1) norm-one subgroup of F_p(sqrt(eps))."""
    fac = factorize(p + 1)

    def order(a, b):
        x, y = a, b
        for k in range(1, p + 2):
            if x == 1 and y == 0:
                return k
            x, y = (x * a + y * b * eps) % p, (x * b + y * a) % p
        raise AssertionError("norm-one element order overflow")

    for b in range(1, p):
        for a in range(p):
            if (a * a - eps * b * b) % p == 1:
                if order(a, b) == p + 1:
                    return a, b
    raise NoSolutionError(f"no norm-one generator mod {p}")


def quotient_generators(ctx: CartanContext) -> list[Mat2Z]:
    """One SL2(Z) generator per p | N of Gamma_ns/(Gamma(N) cap Gamma_0(m)).

    Congruent to a norm-one generator at p, to the identity mod N/p, and in
    Gamma_0(m); lifts keep |c| small so Mobius images stay evaluable.
    """
    out = []
    for p in ctx.primes:
        e = ctx.eps_at(p)
        a, b = _norm_one_generator(p, e)
        mats, mods = [], []
        for q in ctx.primes:
            if q == p:
                mats.append(Mat2Z(a % p, b % p, e * b % p, a % p))
            else:
                mats.append(IDENTITY)
            mods.append(q)
        ent = [crt([mat.entries()[i] for mat in mats], mods) for i in range(4)]
        out.append(lift_with_small_c(Mat2Z(*ent), ctx.N, ctx.m))
    return out


# ---------------------------------------------------------------------------
# Hecke coset representatives


def hecke_coset_reps(q: int, ctx: CartanContext) -> list[Mat2Z]:
    """q+1 representatives delta_j of the determinant-q Hecke double coset.

    delta_j = u_j * gamma_j with gamma_j the classical representatives
    diag(q, 1) and (1 j; 0 q), and u_j in SL2(Z) congruent to B*gamma_j^-1
    mod each p | N (B Cartan of det q) and to the identity mod m.
    """
    if ctx.N % q == 0 or ctx.m % q == 0:
        raise NoSolutionError(f"q = {q} divides the level")
    gammas = [Mat2Z(q, 0, 0, 1)] + [Mat2Z(1, j, 0, q) for j in range(q)]
    out = []
    for gam in gammas:
        mats, mods = [], []
        for p in ctx.primes:
            e = ctx.eps_at(p)
            a, b = _cartan_norm_rep(q, p, e)
            B = Mat2Z(a, b, e * b % p, a)
            u = B * gam.inverse_mod(p)
            mats.append(u.mod(p))
            mods.append(p)
        ent = [crt([mat.entries()[i] for mat in mats], mods) for i in range(4)]
        u = lift_with_small_c(Mat2Z(*ent), ctx.N, ctx.m)
        delta = u * gam
        assert delta.det() == q
        assert is_cartan_member(delta, ctx, require_m0m=False)
        assert delta.c % ctx.m == 0
        out.append(delta)
    return out


def left_cosets_distinct(deltas: list[Mat2Z], ctx: CartanContext) -> bool:
    """Check pairwise distinctness of Gamma_ns * delta_j (exact arithmetic)."""
    q = deltas[0].det()
    for i in range(len(deltas)):
        for j in range(i + 1, len(deltas)):
            # delta_i delta_j^-1 = delta_i adj(delta_j)/q integral + in group?
            w = deltas[i] * deltas[j].adjugate()
            if any(x % q for x in w.entries()):
                continue  # not even integral: distinct cosets
            w = Mat2Z(*(x // q for x in w.entries()))
            if w.det() == 1 and is_cartan_member(w, ctx, require_m0m=True):
                return False
    return True


# ---------------------------------------------------------------------------
# Heegner conjugators


def _conjugator_mod_p(Nmat: Mat2Z, p: int, eps: int, t: int, disc: int) -> Mat2Z:
    """A mod p with A N A^-1 = (t/2, s; eps s, t/2), s = sqrt(disc/eps)."""
    if legendre(disc, p) != -1:
        raise HypothesisError(f"discriminant {disc} is not inert at {p}")
    # target (t/2, s; eps*s, t/2): trace t, det nm forces eps*s^2 = disc/4
    s = sqrt_mod(disc * inv_mod(4 * eps, p) % p, p)
    half_t = t * inv_mod(2, p) % p
    C = Mat2Z(half_t, s, eps * s % p, half_t)
    # solve A N = C A (linear in the entries of A); kernel has dimension 2
    # unknowns (a, b, c, d); rows of (A N - C A) mod p
    al, be, ga, de = (x % p for x in Nmat.entries())
    rows = [
        # entry (1,1): a al + b ga - (C11 a + C12 c)
        (al - C.a, ga, -C.b, 0),
        # entry (1,2): a be + b de - (C11 b + C12 d)
        (be, de - C.a, 0, -C.b),
        # entry (2,1): c al + d ga - (C21 a + C22 c)
        (-C.c, 0, al - C.d, ga),
        # entry (2,2): c be + d de - (C21 b + C22 d)
        (0, -C.c, be, de - C.d),
    ]
    kernel = _nullspace_mod_p(rows, p)
    for coeffs in _small_combinations(len(kernel), p):
        vec = [sum(c * k[i] for c, k in zip(coeffs, kernel)) % p for i in range(4)]
        A = Mat2Z(*vec)
        if A.det() % p:
            detA = A.det() % p
            # fix the determinant with a centralizer element of C of det 1/detA
            a2, b2 = _cartan_norm_rep(inv_mod(detA, p), p, eps)
            # centralizer of C is the eps-Cartan ring itself
            D = Mat2Z(a2, b2, eps * b2 % p, a2)
            A = (D * A).mod(p)
            assert A.det() % p == 1
            return A
    raise NoSolutionError(f"no invertible intertwiner mod {p}")


def _nullspace_mod_p(rows, p):
    """Basis of the kernel of a small integer matrix acting on F_p^4."""
    rows = [list(r) for r in rows]
    n = 4
    pivots = {}
    r = 0
    for col in range(n):
        piv = None
        for i in range(r, len(rows)):
            if rows[i][col] % p:
                piv = i
                break
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        inv = inv_mod(rows[r][col] % p, p)
        rows[r] = [x * inv % p for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][col] % p:
                f = rows[i][col] % p
                rows[i] = [(x - f * y) % p for x, y in zip(rows[i], rows[r])]
        pivots[col] = r
        r += 1
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for fc in free:
        v = [0] * n
        v[fc] = 1
        for col, ri in pivots.items():
            v[col] = (-rows[ri][fc]) % p
        basis.append(v)
    return basis


def _small_combinations(k, p):
    if k == 0:
        return
    if k == 1:
        yield (1,)
        return
    for c2 in range(p):
        yield (1, c2) + (0,) * (k - 2)
    for c1 in range(p):
        yield (c1, 1) + (0,) * (k - 2)


def _upper_tri_mod_pk(Nmat: Mat2Z, p: int, k: int, disc: int) -> Mat2Z:
    """A mod p^k, det 1, with A N A^-1 upper triangular (p split in the order)."""
    pk = p**k
    if legendre(disc, p) != 1:
        raise HypothesisError(f"{p} is not split for discriminant {disc}")
    # eigenvalue of N mod p^k: root of x^2 - t x + det, Hensel-lifted
    t, nm = Nmat.trace(), Nmat.det()
    r = next(x for x in range(p) if (x * x - t * x + nm) % p == 0)
    for _ in range(k - 1):
        # Newton: r -> r - f(r)/f'(r)
        f = r * r - t * r + nm
        fp = (2 * r - t) % pk
        r = (r - f * inv_mod(fp % pk, pk)) % pk
    assert (r * r - t * r + nm) % pk == 0
    # eigenvector w with (N - r) w = 0 mod p^k, primitive
    al, be, ga, de = Nmat.entries()
    cands = [(be % pk, (r - al) % pk), ((r - de) % pk, ga % pk)]
    w = None
    for w1, w2 in cands:
        if w1 % p or w2 % p:
            w = (w1, w2)
            break
    if w is None:
        raise HypothesisError(f"no primitive eigenvector mod {p}^{k}")
    w1, w2 = w
    # A with A w = e1, det 1: rows (x, y; -w2, w1), x w1 + y w2 = 1
    g, x, y = xgcd(w1 % pk, w2 % pk)
    if g % p == 0:
        raise HypothesisError("eigenvector not primitive")
    ginv = inv_mod(g % pk, pk)
    return Mat2Z(x * ginv % pk, y * ginv % pk, (-w2) % pk, w1 % pk)


def heegner_conjugator(Nmat: Mat2Z, ctx: CartanContext) -> Mat2Z:
    """A in SL2(Z) with A N A^-1 in the Cartan ring mod N, upper triangular mod m."""
    t, nm = Nmat.trace(), Nmat.det()
    disc = t * t - 4 * nm
    mats, mods = [], []
    for p in ctx.primes:
        mats.append(_conjugator_mod_p(Nmat, p, ctx.eps_at(p), t, disc))
        mods.append(p)
    for p, k in sorted(factorize(ctx.m).items()) if ctx.m > 1 else []:
        mats.append(_upper_tri_mod_pk(Nmat, p, k, disc))
        mods.append(p**k)
    if not mats:
        return IDENTITY
    ent = [crt([mat.entries()[i] for mat in mats], mods) for i in range(4)]
    M = ctx.N * ctx.m
    return sl2_lift(Mat2Z(*ent), M)
