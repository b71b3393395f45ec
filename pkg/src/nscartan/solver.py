"""Assemble the candidate basis, impose invariance, pin the eigenline with
explicit Hecke operators, and rationalize to the properly normalized exact
expansion.

Numerical geometry: all q-series are evaluated at points kept high in the
upper half plane.  Sample points for the invariance equations are drawn near
the isometric circle of each (small-|c|) generator so both sides of every
equation stay evaluable; every evaluation additionally runs through a point
improver that exploits the invariance of the basis forms under matrices with
c = 0 mod N*m and N | b (with nebentypus corrections).

Self-twists are handled: when the curve has CM by the field cut out by a
Cartan prime p, the twist g (x) kappa_p equals g, duplicates are removed from
the basis, and the expected solution dimension shrinks below 2^d.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from math import gcd

import mpmath

from .arith import inv_mod, legendre, primes_up_to, xgcd
from .cartan import An_matrix, CartanContext, Mat2Z, hecke_coset_reps, quotient_generators
from .cyclo import (
    CycloNumber,
    DirichletCharacter,
    characters_mod,
    galois_sigma,
    hilbert90_solve,
    recognize_cyclo,
)
from .ecq import EllipticCurveQ
from .errors import NoSolutionError, PrecisionError, RecognitionError
from .forms import QExpansion, companion_expansion, qpow_table, tail_cutoff, twist_expansion
from .localtype import LocalType, classify_all, ps_companion, steinberg_companion
from .precision import get_working_dps, workdps


@dataclass
class CandidateBasis:
    """Deduplicated spanning set for the invariance solve."""

    forms: list[QExpansion]
    labels: list[str]
    nebens: list[DirichletCharacter | None]
    multiplicity: dict[str, list[str]]
    pinning_primes: list[int]
    expected_dim: int
    companion_info: dict
    lam: list[int]
    n_max: int

    def size(self) -> int:
        return len(self.forms)


def candidate_basis(
    E: EllipticCurveQ,
    ctx: CartanContext,
    types: list[LocalType] | None = None,
    n_max: int = 4000,
) -> CandidateBasis:
    """All twists g (x) chi over characters mod N plus companion newforms."""
    E = E.minimal_model()
    if types is None:
        types = [t for t in classify_all(E) if t.p in ctx.primes]
    tmap = {t.p: t for t in types}
    if set(tmap) != set(ctx.primes):
        raise NoSolutionError("need one local type per Cartan prime")
    non_sc = [t for t in types if t.kind != "Supercuspidal"]
    if len(non_sc) > 1:
        raise NoSolutionError(
            "combinations with more than one non-supercuspidal prime are not supported"
        )
    lam = E.eigenvalue_sequence(n_max)
    N = ctx.N
    forms, labels, nebens = [], [], []
    for k, chi in enumerate(characters_mod(N)):
        forms.append(twist_expansion(lam, chi, n_max, level=None, source=f"twist-chi{k}"))
        labels.append(f"twist-chi{k}")
        nebens.append(chi * chi)
    companion_info: dict = {}
    for t in non_sc:
        if t.kind == "SteinbergTwist":
            h_curve, kappa = steinberg_companion(E, t.p)
            h = companion_expansion(h_curve, lam, n_max, "steinberg", source=f"companion-st{t.p}")
            forms.append(h)
            labels.append(f"companion-st{t.p}")
            nebens.append(None)
            companion_info[f"companion-st{t.p}"] = {
                "kind": "steinberg",
                "p": t.p,
                "curve": h_curve,
                "ap": h_curve.ap(t.p),
            }
        else:  # RamifiedPS
            comp = ps_companion(E, t.p, t)
            bad = set(ctx.primes) | {q for q in primes_up_to(1000) if ctx.m % q == 0}
            for cc, tag in ((comp, f"companion-ps{t.p}"), (comp.conjugate(), f"companion-ps{t.p}-bar")):
                h = companion_expansion(cc, lam, n_max, "ps", bad_primes=bad, source=tag)
                th = cc.theta.conjugate()
                forms.append(h)
                labels.append(tag)
                nebens.append(th * th)
                companion_info[tag] = {"kind": "ps", "p": t.p, "companion": cc}
                # the p-old copy h(pz): the solution may be old at p
                old = [mpmath.mpc(0)] * n_max
                for n in range(t.p, n_max + 1, t.p):
                    old[n - 1] = h.numeric(n // t.p)
                forms.append(QExpansion(None, old, n_max, source=tag + "-oldp"))
                labels.append(tag + "-oldp")
                nebens.append(th * th)
                companion_info[tag + "-oldp"] = {"kind": "ps-old", "p": t.p, "companion": cc}
    # deduplicate identical q-series (CM self-twists collapse twist pairs)
    kept_forms, kept_labels, kept_nebens = [], [], []
    multiplicity: dict[str, list[str]] = {}
    with workdps(extra=5):
        tol = mpmath.mpf(10) ** (-(get_working_dps() - 30))
        keys = []
        for f, lab, nb in zip(forms, labels, nebens):
            probe = tuple(f.numeric(n) for n in range(1, min(80, n_max) + 1))
            match = None
            for k2, key in enumerate(keys):
                if all(abs(a - b) <= tol for a, b in zip(probe, key)):
                    match = k2
                    break
            if match is None:
                keys.append(probe)
                kept_forms.append(f)
                kept_labels.append(lab)
                kept_nebens.append(nb)
                multiplicity[lab] = []
            else:
                multiplicity[kept_labels[match]].append(lab)
    d_primes = [t.p for t in types if t.kind in ("Supercuspidal", "RamifiedPS")]
    n_probe = min(n_max, 1000)
    pinning = []
    for p in d_primes:
        kappa = _kappa_mod_N(p, N)
        collapsed = all(
            lam[n - 1] == 0
            for n in range(1, n_probe + 1)
            if gcd(n, N) == 1 and kappa.log_value(n) == 1
        )
        if not collapsed:
            pinning.append(p)
    expected_dim = _count_distinct_quad_twists(lam, N, d_primes, n_probe)
    return CandidateBasis(
        kept_forms,
        kept_labels,
        kept_nebens,
        multiplicity,
        pinning,
        expected_dim,
        companion_info,
        lam,
        n_max,
    )


def _kappa_mod_N(p: int, N: int) -> DirichletCharacter:
    """The quadratic character at p, lifted to modulus N."""
    for chi in characters_mod(N):
        if chi.order == 2 and all(
            chi.log_value(n) == (0 if legendre(n, p) == 1 else 1)
            for n in range(1, 4 * N)
            if gcd(n, N) == 1 and n % (N // p) == 1 % (N // p)
        ):
            if _quad_char_support(chi, N) == {p}:
                return chi
    raise NoSolutionError(f"kappa_{p} not found mod {N}")


def _quad_char_support(chi, N) -> set[int]:
    """Primes p | N where the p-component of a quadratic character is nontrivial."""
    from .arith import factorize

    out = set()
    for p in sorted(factorize(N)):
        Np = N // p
        for n in range(1, 6 * N):
            if gcd(n, N) == 1 and n % Np == 1 % Np and chi.log_value(n) == 1:
                out.add(p)
                break
    return out


def _count_distinct_quad_twists(lam, N, d_primes, n_probe) -> int:
    """Distinct q-series among the level-preserving quadratic twists of g."""
    quad_chars = [None]
    for chi in characters_mod(N):
        if chi.order == 2 and _quad_char_support(chi, N) <= set(d_primes):
            quad_chars.append(chi)
    seqs = set()
    for chi in quad_chars:
        sig = []
        for n in range(1, n_probe + 1):
            if gcd(n, N) != 1:
                sig.append(0)
                continue
            v = lam[n - 1]
            if chi is not None and chi.log_value(n) == 1:
                v = -v
            sig.append(v)
        seqs.add(tuple(sig))
    return len(seqs)


# ---------------------------------------------------------------------------
# evaluation machinery


class BasisEvaluator:
    """Evaluates every basis element as a function on the Cartan side.

    G_i(z) = f_i(z/N); before summing the q-series the point is improved by a
    matrix gamma with c = 0 mod N m and N | b, under which each basis form
    transforms by its nebentypus at d (the sign convention is calibrated
    numerically once at construction).
    """

    def __init__(self, basis: CandidateBasis, ctx: CartanContext, target_digits: int):
        self.basis = basis
        self.ctx = ctx
        self.target = target_digits
        self.y_floor = mpmath.mpf(1) / (4 * ctx.N * ctx.N * ctx.m)
        self._neben_on_d = None  # calibrated lazily: True -> psi(d), False -> conj
        self._calibrate()

    # -- improver

    def _improve(self, z):
        """gamma in the invariance group maximizing Im(gamma z)."""
        N, m = self.ctx.N, self.ctx.m
        M = N * m
        z = mpmath.mpc(z)
        best = (mpmath.im(z), None)
        # the optimal |c| scales like sqrt(1/(M * Im z))
        y = mpmath.im(z)
        if y <= 0:
            raise PrecisionError("point not in the upper half plane")
        K = int(mpmath.ceil(2 * mpmath.sqrt(1 / (M * y)))) + 3 if y < 1 else 3
        K = min(K, 400)
        for k in range(-K, K + 1):
            if k == 0:
                continue
            c = M * k
            d0 = -c * mpmath.re(z)
            for dd in range(-4, 5):
                d = int(mpmath.nint(d0)) + dd
                if gcd(c, d) != 1 or gcd(d, N) != 1:
                    continue
                im_new = mpmath.im(z) / abs(c * z + d) ** 2
                if im_new > best[0] * mpmath.mpf("1.0000001"):
                    best = (im_new, (c, d))
        if best[1] is None:
            return None
        c, d = best[1]
        g, a0, b0 = xgcd(d, -c)
        assert g == 1
        # adjust so N | b: b = b0 + t d, a = a0 + t c
        t = (-b0 * inv_mod(d % N, N)) % N
        a, b = a0 + t * c, b0 + t * d
        assert a * d - b * c == 1 and b % N == 0 and c % (N * m) == 0
        return Mat2Z(a, b, c, d)

    def _calibrate(self):
        """Fix the nebentypus convention by comparing both predictions."""
        idx = next(
            (i for i, nb in enumerate(self.basis.nebens) if nb is not None and not nb.is_trivial()),
            None,
        )
        if idx is None:
            self._neben_on_d = True  # all corrections trivial; convention moot
            return
        N, m = self.ctx.N, self.ctx.m
        # pick gamma with d not 1 mod N
        gam = None
        for d in range(2, 6 * N):
            if gcd(d, N * m) == 1 and d % N != 1:
                c = N * m
                if gcd(c, d) != 1:
                    continue
                g, a0, b0 = xgcd(d, -c)
                t = (-b0 * inv_mod(d % N, N)) % N
                a, b = a0 + t * c, b0 + t * d
                gam = Mat2Z(a, b, c, d)
                break
        assert gam is not None
        # a point on the isometric circle of gam: both z and gam z evaluable;
        # distinguishing psi(d) from its conjugate needs only modest digits
        z = mpmath.mpc(-mpmath.mpf(gam.d) / gam.c + mpmath.mpf("0.137") / abs(gam.c),
                       mpmath.mpf("1.03") / abs(gam.c))
        f = self.basis.forms[idx]
        nb = self.basis.nebens[idx]
        saved = self.target
        gz_im = mpmath.im(gam.act(z))
        cal_target = None
        for t in range(min(saved, 28), 7, -1):
            try:
                tail_cutoff(mpmath.im(z) / self.ctx.N, t, self.basis.n_max)
                tail_cutoff(gz_im / self.ctx.N, t, self.basis.n_max)
                cal_target = t
                break
            except PrecisionError:
                continue
        if cal_target is None:
            raise PrecisionError("not enough coefficients to calibrate the nebentypus")
        try:
            self.target = cal_target
            direct = self._raw_value(f, z)
            gz = gam.act(z)
            moved = self._raw_value(f, gz) / gam.jfactor(z) ** 2
        finally:
            self.target = saved
        val = nb.value_embed(gam.d)
        err_plain = abs(moved - val * direct)
        err_conj = abs(moved - mpmath.conj(val) * direct)
        if min(err_plain, err_conj) > abs(direct) * mpmath.mpf(10) ** (-10):
            raise PrecisionError("nebentypus calibration failed on both conventions")
        self._neben_on_d = err_plain < err_conj

    def _raw_value(self, f: QExpansion, z) -> mpmath.mpc:
        w = mpmath.mpc(z) / self.ctx.N
        n_cut, _ = tail_cutoff(mpmath.im(w), self.target, self.basis.n_max)
        table = qpow_table(w, 1, n_cut)
        coeffs = f.numeric_array(n_cut)
        acc = mpmath.mpc(0)
        for c, qn in zip(coeffs, table):
            if c != 0:
                acc += c * qn
        return acc

    def affordable_digits(self, z) -> int:
        """Highest certified target at z given the available coefficients."""
        gam = self._improve(z)
        zz = gam.act(z) if gam is not None else mpmath.mpc(z)
        y = mpmath.im(zz) / self.ctx.N
        rough = int(2 * mpmath.pi * y * self.basis.n_max / mpmath.log(10)) + 2
        lo, hi = 0, rough
        while lo < hi:
            mid = (lo + hi + 1) // 2
            try:
                tail_cutoff(y, mid, self.basis.n_max)
                lo = mid
            except PrecisionError:
                hi = mid - 1
        return lo

    def values_at(self, z) -> list[mpmath.mpc]:
        z = mpmath.mpc(z)
        gam = self._improve(z)
        if gam is None:
            if mpmath.im(z) / self.ctx.N <= 0:
                raise PrecisionError("point not in the upper half plane")
            zz, jf2, dval = z, mpmath.mpc(1), 1
        else:
            zz = gam.act(z)
            jf2 = gam.jfactor(z) ** 2
            dval = gam.d
        if mpmath.im(zz) / self.ctx.N < self.y_floor:
            raise PrecisionError(
                f"Im(z)/N = {mpmath.nstr(mpmath.im(zz) / self.ctx.N, 5)} below floor; redraw"
            )
        w = zz / self.ctx.N
        n_cut, _ = tail_cutoff(mpmath.im(w), self.target, self.basis.n_max)
        table = qpow_table(w, 1, n_cut)
        out = []
        for f, nb in zip(self.basis.forms, self.basis.nebens):
            coeffs = f.numeric_array(n_cut)
            acc = mpmath.mpc(0)
            for c, qn in zip(coeffs, table):
                if c != 0:
                    acc += c * qn
            if gam is not None and nb is not None and not nb.is_trivial():
                v = nb.value_embed(dval)
                corr = v if self._neben_on_d else mpmath.conj(v)
                # G(gamma z) j^-2 = corr * G(z)  =>  G(z) = acc / (jf2 * corr)
                acc = acc / corr
            out.append(acc / jf2)
        return out

    def combo_value(self, x, z) -> mpmath.mpc:
        vals = self.values_at(z)
        return sum(xi * v for xi, v in zip(x, vals))


# ---------------------------------------------------------------------------
# invariance system


def _balanced_samples(alpha: Mat2Z, N: int, rng: random.Random, count: int):
    """Points near the isometric circle of alpha: both z and alpha z stay high."""
    c, d = alpha.c, alpha.d
    out = []
    if c == 0:
        for _ in range(count):
            out.append(mpmath.mpc(rng.uniform(0, N), N * rng.uniform(0.6, 1.4)))
        return out
    t = mpmath.mpf(1) / abs(c)
    x0 = -mpmath.mpf(d) / c
    for _ in range(count):
        dx = t * rng.uniform(-0.9, 0.9)
        ty = t * rng.uniform(0.8, 1.25)
        out.append(mpmath.mpc(x0 + dx, ty))
    return out


def invariance_solve(
    basis: CandidateBasis,
    ctx: CartanContext,
    rng: random.Random | None = None,
    sample_count: int | None = None,
    target_digits: int | None = None,
):
    """Orthonormal numeric basis of the invariance null space.

    Rows are G(alpha z) j(alpha, z)^-2 - G(z) per basis element, over the
    quotient generators and samples balanced near each generator; the null
    dimension must match the collapse-aware expected dimension.
    """
    rng = rng or random.Random(0)
    nb = basis.size()
    sample_count = sample_count if sample_count is not None else max(3 * nb, 8)
    gens = quotient_generators(ctx)
    with workdps(extra=10):
        dps = get_working_dps()
        target = target_digits if target_digits is not None else dps - 25
        ev = BasisEvaluator(basis, ctx, target)
        achieved = target
        rows = []
        per_gen = max(sample_count // len(gens) + 1, max(nb // len(gens) + 2, 3))
        for alpha in gens:
            got = 0
            tries = 0
            for z in _balanced_samples(alpha, ctx.N, rng, 8 * per_gen):
                if got >= per_gen:
                    break
                tries += 1
                az = alpha.act(z)
                try:
                    aff = min(ev.affordable_digits(z), ev.affordable_digits(az))
                    if aff < min(40, target):
                        continue
                    use = min(target, aff)
                    ev.target = use
                    base_vals = ev.values_at(z)
                    tvals = ev.values_at(az)
                except PrecisionError:
                    continue
                finally:
                    ev.target = target
                achieved = min(achieved, use)
                jf = alpha.jfactor(z)
                rows.append([tv / jf**2 - bv for tv, bv in zip(tvals, base_vals)])
                got += 1
            if got < per_gen:
                raise PrecisionError(
                    f"could not draw enough evaluable samples for generator {alpha}"
                )
        A = mpmath.matrix(rows)
        null, svals = _nullspace(A, achieved - 12)
        dim = len(null)
        if dim != basis.expected_dim:
            raise NoSolutionError(
                f"invariance space has dimension {dim}, expected {basis.expected_dim} "
                f"(singular values {[mpmath.nstr(s, 5) for s in svals]})"
            )
        info = {
            "singular_values": [mpmath.nstr(s, 8) for s in svals],
            "dim": dim,
            "equation_digits": int(achieved),
        }
        return null, info


def _nullspace(A, tol_digits: int):
    """(null vectors, singular values) using a tolerance of 10^-tol_digits."""
    m, n = A.rows, A.cols
    U, S, V = mpmath.svd_c(A)
    svals = [S[i] for i in range(min(m, n))]
    smax = max(svals) if svals else mpmath.mpf(1)
    tol = max(smax, mpmath.mpf(1)) * mpmath.mpf(10) ** (-tol_digits)
    small = [i for i, s in enumerate(svals) if s <= tol]
    large = [s for s in svals if s > tol]
    if small and large:
        gap = min(large) / max(
            max(svals[i] for i in small), mpmath.mpf(10) ** (-get_working_dps() * 2)
        )
        if gap < mpmath.mpf(10) ** 8:
            raise PrecisionError(
                f"ambiguous numeric rank: singular-value gap only {mpmath.nstr(gap, 5)}"
            )
    out = []
    for i in small:
        out.append([mpmath.conj(V[i, j]) for j in range(n)])
    return out, svals


# ---------------------------------------------------------------------------
# Hecke pinning


def find_pinning_prime(p: int, ctx: CartanContext, lam, bound: int = 10000) -> int:
    """Prime q, non-residue mod p, q = 1 mod N/p, coprime to N m, lambda_q != 0."""
    Np = ctx.N // p
    for q in primes_up_to(min(bound, len(lam))):
        if ctx.N % q == 0 or ctx.m % q == 0:
            continue
        if legendre(q, p) != -1 or q % Np != 1 % Np:
            continue
        if lam[q - 1] != 0:
            return q
    raise NoSolutionError(f"no usable pinning prime for p = {p} up to {bound}")


def hecke_rows(basis, ctx, q, z, ev: BasisEvaluator):
    """[(T_q G_i)(z)] with the explicit coset operator q sum j^-2 G(delta z)."""
    deltas = hecke_coset_reps(q, ctx)
    out = [mpmath.mpc(0)] * basis.size()
    for dmat in deltas:
        dz = dmat.act(z)
        jf = dmat.jfactor(z)
        vals = ev.values_at(dz)
        for i, v in enumerate(vals):
            out[i] += q * v / jf**2
    return out


def rayleigh_of_line(x, basis, ctx, q, ev: BasisEvaluator, rng, tries: int = 12):
    """Mean ratio (T_q G)(z) / G(z) over a few safe samples."""
    vals = []
    for _ in range(tries):
        z = mpmath.mpc(rng.uniform(0, ctx.N), ctx.N * rng.uniform(0.7, 1.3))
        try:
            tq = hecke_rows(basis, ctx, q, z, ev)
            gz = ev.combo_value(x, z)
            if abs(gz) < mpmath.mpf(10) ** (-(ev.target // 2)):
                continue
            vals.append(sum(t * xi for t, xi in zip(tq, x)) / gz)
        except PrecisionError:
            continue
        if len(vals) >= 3:
            break
    if not vals:
        raise PrecisionError("no evaluable sample for the Rayleigh ratio")
    return vals


def pin_eigenline(
    space,
    basis: CandidateBasis,
    ctx: CartanContext,
    rng: random.Random | None = None,
    eq_digits: int | None = None,
):
    """Cut the invariance space to the lambda-eigenline.

    The discrete choice (which +-lambda_q eigenline at each pinning prime) is
    made with the explicit coset operator at whatever precision the available
    coefficients afford; when that is below the accuracy of the invariance
    space, the line is re-derived within that space from exactly recognized
    coefficient ratios.
    """
    rng = rng or random.Random(1)
    lam = basis.lam
    eq_digits = eq_digits if eq_digits is not None else get_working_dps() - 40
    info: dict = {"pinning_primes": {}}
    if len(space) == 1:
        return list(space[0]), info
    with workdps(extra=10):
        current = [list(v) for v in space]
        min_target = get_working_dps()
        for p in basis.pinning_primes:
            if len(current) == 1:
                break
            q = find_pinning_prime(p, ctx, lam)
            info["pinning_primes"][p] = q
            current, target = _pin_once(current, basis, ctx, q, lam[q - 1], rng)
            info.setdefault("pin_targets", {})[q] = target
            min_target = min(min_target, target)
        if len(current) != 1:
            raise NoSolutionError(f"pinned space has dimension {len(current)}, not 1")
        line = current[0]
        if min_target < eq_digits - 10:
            line = _refine_line_from_cocycle(line, space, basis, ctx, eq_digits, info)
        return line, info


def _pin_once(current, basis, ctx, q, lam_q, rng):
    """One Hecke constraint T_q = lambda_q at an adaptive, certified target."""
    probe_ev = BasisEvaluator(basis, ctx, 30)
    deltas = hecke_coset_reps(q, ctx)

    def draw():
        """Samples balanced near each coset representative in turn."""
        while True:
            for dmat in deltas:
                yield _balanced_samples(dmat, ctx.N, rng, 1)[0]
            yield mpmath.mpc(rng.uniform(0, ctx.N), ctx.N * rng.uniform(0.7, 1.3))

    gen = draw()
    affordable = []
    cands = []
    want_cands = max(2 * len(current), 4) + 3
    for _ in range(900):
        if len(cands) >= want_cands:
            break
        z = next(gen)
        try:
            aff = min(
                [probe_ev.affordable_digits(z)]
                + [probe_ev.affordable_digits(d.act(z)) for d in deltas]
            )
        except PrecisionError:
            continue
        if aff >= 10:
            affordable.append(aff)
            cands.append(z)
    if not affordable:
        raise PrecisionError("no affordable Hecke sample found")
    target = max(10, min(get_working_dps() - 40, max(affordable) - 6))
    ev = BasisEvaluator(basis, ctx, target)
    rows = []
    want = max(2 * len(current), 4)
    for z, aff in sorted(zip(cands, affordable), key=lambda t: -t[1]):
        if len(rows) >= want:
            break
        use = min(target, max(10, aff - 3))
        ev.target = use
        try:
            tq = hecke_rows(basis, ctx, q, z, ev)
            base = ev.values_at(z)
        except PrecisionError:
            continue
        finally:
            ev.target = target
        target = min(target, use)
        brow = [t - lam_q * b for t, b in zip(tq, base)]
        rows.append([sum(brow[i] * v[i] for i in range(len(brow))) for v in current])
    if len(rows) < want:
        raise PrecisionError("could not draw enough Hecke samples")
    null, _ = _nullspace(mpmath.matrix(rows), max(5, target - 5))
    if not null:
        raise NoSolutionError(f"Hecke pinning at q = {q} annihilated the space")
    new = [
        [sum(y[k] * current[k][i] for k in range(len(current))) for i in range(basis.size())]
        for y in null
    ]
    return new, target


def _refine_line_from_cocycle(x_low, space, basis, ctx, eq_digits, info):
    """Full-precision line from exactly recognized coefficient ratios.

    From the low-precision pinned line, recognize the cocycle values
    c_u = b_n/(lambda_n b_1) exactly with a small height bound and verify
    them; then re-impose b_n = c_u lambda_n b_1 within the high-precision
    invariance space using exact basis coefficients.
    """
    N = ctx.N
    lam = basis.lam
    tot = sum(x_low)
    if abs(tot) < mpmath.mpf(10) ** (-6):
        raise PrecisionError("refinement: vanishing b1 on the pinned line")
    x = [xi / tot for xi in x_low]

    def bn(xvec, n):
        return sum(xi * f.numeric(n) for xi, f in zip(xvec, basis.forms))

    reps = _class_reps_with_lambda(lam, N, n_limit=min(len(lam), 3000))
    S = sorted(reps)
    c_num = {u: bn(x, reps[u]) / lam[reps[u] - 1] for u in S}
    c_exact = {}
    for u in S:
        conj = {}
        for w in S:
            if w != 1:
                conj[w] = c_num[(u * inv_mod(w, N)) % N] / c_num[inv_mod(w, N) % N]
        c_exact[u] = recognize_cyclo(c_num[u], N, height_bound=4000, conjugates=conj, dps=30)
    rows = []
    for u in S:
        if u == 1:
            continue
        cu = c_exact[u].embed()
        count = 0
        for n in range(1, min(len(lam), 3000)):
            if n % N == u and gcd(n, N) == 1 and lam[n - 1] != 0:
                rows.append([f.numeric(n) - cu * lam[n - 1] * f.numeric(1) for f in basis.forms])
                count += 1
                if count >= 2:
                    break
    # restrict the exact-coefficient rows to the invariance space; tolerance
    # follows the accuracy at which that space was computed
    proj = [[sum(r[i] * v[i] for i in range(basis.size())) for v in space] for r in rows]
    null, _ = _nullspace(mpmath.matrix(proj), eq_digits - 12)
    if len(null) != 1:
        raise PrecisionError(
            f"cocycle refinement gave dimension {len(null)} inside the invariance space"
        )
    y = null[0]
    info["refined_via_exact_cocycle"] = True
    return [sum(y[k] * space[k][i] for k in range(len(space))) for i in range(basis.size())]


# ---------------------------------------------------------------------------
# rationalization


@dataclass
class SolvedEigenform:
    E: EllipticCurveQ
    ctx: CartanContext
    b1: CycloNumber
    lam: list[int]
    basis: CandidateBasis
    x_coords: list
    x_exact: list
    npart: dict
    seeds: dict
    residuals: dict
    precision: int

    def sigma_b1(self, v: int) -> CycloNumber:
        return galois_sigma(v, self.b1)

    def exact_coefficient(self, n: int):
        N = self.ctx.N
        if n < 1:
            raise IndexError(n)
        if gcd(n, N) == 1:
            if n > len(self.lam):
                return None
            if self.lam[n - 1] == 0:
                return CycloNumber.zero(N)
            return self.lam[n - 1] * galois_sigma(inv_mod(n, N), self.b1)
        return self._exact_npart(n)

    def _exact_npart(self, n: int):
        if not self.npart:
            return None
        if self.npart.get("kind") == "zero":
            return CycloNumber.zero(self.ctx.N)
        p = self.npart["p"]
        alpha = 0
        nprime = n
        while nprime % p == 0:
            nprime //= p
            alpha += 1
        if alpha == 0 or gcd(nprime, self.ctx.N) != 1:
            return CycloNumber.zero(self.ctx.N)
        if self.npart["kind"] == "steinberg":
            hlam = self.npart["h_lam"]
            D = self.npart["D"].get(alpha)
            if D is None or nprime > len(hlam):
                return None
            return hlam[nprime - 1] * D
        if nprime > len(self.lam):
            return None
        u = nprime % p
        D = self.npart["D"].get((alpha, u))
        if D is None:
            return None
        return self.lam[nprime - 1] * D

    def coefficient_numeric(self, n: int) -> mpmath.mpc:
        e = self.exact_coefficient(n)
        if e is not None:
            return e.embed()
        return self.b1.embed() * sum(
            x * f.numeric(n) for x, f in zip(self.x_coords, self.basis.forms)
        )

    def conjugate_coefficients(self, k: int, n_cut: int) -> list[mpmath.mpc]:
        """Numeric coefficients of sigma_k(G), n = 1..n_cut."""
        N = self.ctx.N
        with workdps(extra=10):
            emb = {}
            for v in range(1, N + 1):
                if gcd(v, N) == 1:
                    emb[v % N] = galois_sigma(v, self.b1).embed()
            npart_emb: dict[int, mpmath.mpc] = {}
            out = []
            for n in range(1, n_cut + 1):
                if gcd(n, N) == 1:
                    if n > len(self.lam):
                        raise PrecisionError("lambda sequence too short for the cutoff")
                    ln = self.lam[n - 1]
                    if ln == 0:
                        out.append(mpmath.mpc(0))
                    else:
                        v = (inv_mod(n, N) * k) % N
                        out.append(ln * emb[v])
                else:
                    e = self._exact_npart(n)
                    if e is None:
                        raise PrecisionError(f"no exact coefficient at n = {n}")
                    if n not in npart_emb:
                        npart_emb[n] = galois_sigma(k, e).embed()
                    out.append(npart_emb[n])
            return out

    def verify_relation(self, n_limit: int = 200) -> bool:
        N = self.ctx.N
        for n in range(1, n_limit + 1):
            if gcd(n, N) != 1:
                continue
            b = self.exact_coefficient(n)
            expect = self.lam[n - 1] * galois_sigma(inv_mod(n, N), self.b1)
            if not b == expect:
                return False
        return True

    def to_manifest(self) -> dict:
        return {
            "curve": self.E.to_json(),
            "context": self.ctx.to_json(),
            "b1": self.b1.to_json(),
            "precision": self.precision,
            "seeds": self.seeds,
            "basis": self.basis.labels,
            "collapsed": self.basis.multiplicity,
            "x_coords": [
                [mpmath.nstr(x.real, 30), mpmath.nstr(x.imag, 30)] for x in self.x_coords
            ],
            "x_exact": [x.to_json() if x is not None else None for x in self.x_exact],
            "sign_convention": "first nonzero power-basis coordinate of b1 positive",
            "residuals": {k: str(v) for k, v in self.residuals.items()},
            "eigenvalues_first": self.lam[:50],
        }


def _class_reps_with_lambda(lam, N, n_limit=None):
    n_limit = n_limit or len(lam)
    out = {}
    for n in range(1, n_limit + 1):
        if gcd(n, N) != 1 or lam[n - 1] == 0:
            continue
        u = n % N
        if u not in out:
            out[u] = n
    return out


def rationalize(
    x_line,
    basis: CandidateBasis,
    ctx: CartanContext,
    E: EllipticCurveQ,
    rng: random.Random | None = None,
    seeds: dict | None = None,
    data_digits: int | None = None,
) -> SolvedEigenform:
    """Exact properly-normalized eigenform from the pinned numeric line.

    data_digits bounds the accuracy of the incoming line; recognitions of
    single values run at that precision.
    """
    rng = rng or random.Random(2)
    N = ctx.N
    lam = basis.lam
    dps = get_working_dps()
    data_digits = data_digits if data_digits is not None else dps - 45
    residuals: dict = {}
    with workdps(extra=10):
        tot = sum(x_line)
        if abs(tot) < mpmath.mpf(10) ** (-(dps // 4)):
            raise PrecisionError("pinned line has numerically vanishing first coefficient")
        x = [xi / tot for xi in x_line]

        def bn_F(n: int) -> mpmath.mpc:
            return sum(xi * f.numeric(n) for xi, f in zip(x, basis.forms))

        reps = _class_reps_with_lambda(lam, N, n_limit=min(len(lam), 5000))
        S = sorted(reps)
        c_num = {u: bn_F(reps[u]) / lam[reps[u] - 1] for u in S}
        cons = mpmath.mpf(0)
        for u in S:
            for n in range(reps[u] + 1, min(len(lam), 600)):
                if n % N == u and gcd(n, N) == 1 and lam[n - 1] != 0:
                    cons = max(cons, abs(bn_F(n) / lam[n - 1] - c_num[u]))
                    break
        residuals["cocycle_consistency"] = mpmath.nstr(cons, 8)
        for a in S:
            for b in S:
                if (a * b) % N not in c_num:
                    raise NoSolutionError("classes with eigenvalue data do not form a subgroup")
        c_exact: dict[int, CycloNumber] = {}
        for u in S:
            conj = {}
            for w in S:
                if w != 1:
                    conj[w] = c_num[(u * inv_mod(w, N)) % N] / c_num[inv_mod(w, N) % N]
            c_exact[u] = recognize_cyclo(c_num[u], N, height_bound=10**6, conjugates=conj)
        c0 = hilbert90_solve(c_exact, N, rng)
        full = [u for u in range(1, N) if gcd(u, N) == 1]
        if len(S) == len(full):
            b1 = _rational_normalize(c0)
        else:
            ratios = _slash_fit_ratios(x, basis, ctx, c_num, S, rng, residuals)
            b1 = _orbit_recognize_b1(ratios, N, residuals)
        for u in S:
            lhs = galois_sigma(inv_mod(u, N), b1)
            if not lhs == c_exact[u] * b1:
                raise NoSolutionError("Hilbert-90 identity fails for the normalized b1")
        b1 = _fix_sign(b1)
        rho = b1.embed()
        npart = _npart_structures(x, basis, ctx, rho, lam, data_digits)
        b1, npart = _joint_content_normalize(b1, npart)
        b1 = _fix_sign(b1)
        rho = b1.embed()
        x_exact = []
        for xi in x:
            try:
                x_exact.append(
                    recognize_cyclo(rho * xi, N, height_bound=10**5, dps=data_digits)
                )
            except RecognitionError:
                x_exact.append(None)
        err = mpmath.mpf(0)
        for n in range(1, min(len(lam), 150) + 1):
            if gcd(n, N) != 1 or lam[n - 1] == 0:
                continue
            exactv = lam[n - 1] * galois_sigma(inv_mod(n, N), b1)
            err = max(err, abs(exactv.embed() - rho * bn_F(n)))
        residuals["exact_vs_numeric"] = mpmath.nstr(err, 8)
        if err > mpmath.mpf(10) ** (-20):
            raise PrecisionError(
                f"exact expansion deviates from the solved line by {mpmath.nstr(err, 5)}"
            )
        return SolvedEigenform(
            E=E,
            ctx=ctx,
            b1=b1,
            lam=lam,
            basis=basis,
            x_coords=[rho * xi for xi in x],
            x_exact=x_exact,
            npart=npart,
            seeds=seeds or {},
            residuals=residuals,
            precision=dps,
        )


def _rational_normalize(c0: CycloNumber) -> CycloNumber:
    return c0 * (1 / c0.content())


def _fix_sign(b1: CycloNumber) -> CycloNumber:
    for c in b1.coords:
        if c != 0:
            return b1 if c > 0 else -b1
    raise NoSolutionError("b1 is zero")


def _slash_fit_ratios(x, basis, ctx, c_num, S, rng, residuals):
    """Numeric ratios sigma_v(b1)/b1 for every class, via sigma_w(G) = G|[A_w].

    The subgroup part comes from the coefficient cocycle; each remaining coset
    w S is fitted linearly from evaluations of the slashed combination.
    """
    N = ctx.N
    lam = basis.lam
    dps = get_working_dps()
    full = [u for u in range(1, N) if gcd(u, N) == 1]
    ratios = {inv_mod(u, N) % N: c_num[u] for u in S}
    target = max(40, dps - 60)
    ev = BasisEvaluator(basis, ctx, target)
    done = set(ratios)
    for w in full:
        if w in done:
            continue
        coset = sorted({(w * inv_mod(u, N)) % N for u in S})
        for attempt, A_mat in enumerate((An_matrix(w, ctx), An_matrix(inv_mod(w, N), ctx))):
            try:
                vec = _slash_fit_once(x, basis, ctx, coset, w, A_mat, ev, rng, target)
                break
            except (PrecisionError, RecognitionError):
                if attempt == 1:
                    raise
        scale = vec[-1]
        if abs(scale) < mpmath.mpf(10) ** (-(target // 2)):
            raise PrecisionError("slash fit degenerate: vanishing b1 column")
        for v, comp in zip(coset, vec[:-1]):
            ratios[v] = comp / scale
            done.add(v)
    residuals["slash_fit_classes"] = sorted(done)
    return ratios


def _slash_fit_once(x, basis, ctx, coset, w, A_mat, ev, rng, target):
    N = ctx.N
    lam = basis.lam
    rows = []
    samples = 0
    attempts = 0
    # sample near the isometric circle of A_mat: both z and A_mat z stay high
    while samples < 2 * (len(coset) + 1) + 2 and attempts < 300:
        attempts += 1
        z = _balanced_samples(A_mat, N, rng, 1)[0]
        az = A_mat.act(z)
        try:
            fvals = ev.values_at(az)
        except PrecisionError:
            continue
        w_pt = mpmath.mpc(z) / N
        n_cut, _ = tail_cutoff(mpmath.im(w_pt), target, basis.n_max)
        table = qpow_table(w_pt, 1, n_cut)
        Tv = {v: mpmath.mpc(0) for v in coset}
        for n in range(1, n_cut + 1):
            if gcd(n, N) != 1 or lam[n - 1] == 0:
                continue
            v = (w * inv_mod(n, N)) % N
            if v in Tv:
                Tv[v] += lam[n - 1] * table[n - 1]
        Fslash = sum(xi * fv for xi, fv in zip(x, fvals)) / A_mat.jfactor(z) ** 2
        rows.append([Tv[v] for v in coset] + [-Fslash])
        samples += 1
    if samples < len(coset) + 2:
        raise PrecisionError("not enough slash-fit samples")
    null, _ = _nullspace(mpmath.matrix(rows), target - 12)
    if len(null) != 1:
        raise PrecisionError(f"slash fit at w = {w} gave dimension {len(null)}")
    return null[0]


def _orbit_recognize_b1(ratios, N, residuals) -> CycloNumber:
    """b1 from the full orbit of ratios sigma_v(b1)/b1 (homogeneous fit)."""
    from .arith import euler_phi

    phi = euler_phi(N)
    rows = []
    for v, r in ratios.items():
        if v % N == 1:
            continue
        k = inv_mod(v, N)
        row_sig = [mpmath.exp(2j * mpmath.pi * ((j * k) % N) / N) for j in range(phi)]
        row_id = [mpmath.exp(2j * mpmath.pi * j / N) for j in range(phi)]
        crow = [a - r * b for a, b in zip(row_sig, row_id)]
        rows.append([c.real for c in crow])
        rows.append([c.imag for c in crow])
    null, svals = _nullspace(mpmath.matrix(rows), 25)
    if len(null) != 1:
        raise PrecisionError(f"orbit recognition space has dimension {len(null)}")
    vec = null[0]
    piv = max(range(phi), key=lambda j: abs(vec[j]))
    coords = []
    for j in range(phi):
        scl = vec[j] / vec[piv]
        if abs(mpmath.im(scl)) > mpmath.mpf(10) ** (-12):
            raise RecognitionError("orbit direction is not real after scaling")
        coords.append(_snap_fraction(mpmath.re(scl), 10**4))
    cand = CycloNumber(N, coords)
    cand = _rational_normalize(cand)
    b1e = cand.embed()
    err = mpmath.mpf(0)
    for v, r in ratios.items():
        err = max(err, abs(galois_sigma(v, cand).embed() - r * b1e))
    residuals["orbit_recognition"] = mpmath.nstr(err, 8)
    if err > mpmath.mpf(10) ** (-15):
        raise RecognitionError("orbit-recognized b1 fails the ratio equations")
    return cand


def _snap_fraction(xv, bound=10**6) -> Fraction:
    xv = mpmath.mpf(xv)
    if xv == 0:
        return Fraction(0)
    sign, man, exp, _ = xv._mpf_
    exact = Fraction((-1) ** sign * man) * (Fraction(2) ** exp)
    return exact.limit_denominator(bound)


def _npart_structures(x, basis, ctx, rho, lam, data_digits) -> dict:
    """Exact structures for coefficients at indices sharing a factor with N."""
    N = ctx.N
    comp_labels = [
        lab
        for lab in basis.labels
        if lab.startswith("companion")
        and basis.companion_info[lab]["kind"] in ("ps", "steinberg")
    ]
    if not comp_labels:
        return {"kind": "zero"}
    info0 = basis.companion_info[comp_labels[0]]
    p = info0["p"]
    import math

    max_alpha = max(1, int(math.log(basis.n_max, p)))
    D: dict = {}
    if info0["kind"] == "steinberg":
        h_curve = info0["curve"]
        h_lam = h_curve.eigenvalue_sequence(basis.n_max)
        for alpha in range(1, max_alpha + 1):
            n = p**alpha
            if n > basis.n_max:
                break
            val = rho * sum(xi * f.numeric(n) for xi, f in zip(x, basis.forms))
            D[alpha] = recognize_cyclo(val, N, height_bound=10**6, dps=data_digits)
        return {"kind": "steinberg", "p": p, "h_lam": h_lam, "D": D}
    for alpha in range(1, max_alpha + 1):
        if p**alpha > basis.n_max:
            break
        for u in range(1, p):
            found = None
            for nprime in range(1, basis.n_max // p**alpha + 1):
                if nprime % p == u and gcd(nprime, N) == 1 and lam[nprime - 1] != 0:
                    found = nprime
                    break
            if found is None:
                continue
            n = p**alpha * found
            val = rho * sum(xi * f.numeric(n) for xi, f in zip(x, basis.forms)) / lam[found - 1]
            D[(alpha, u)] = recognize_cyclo(val, N, height_bound=10**6, dps=data_digits)
    return {"kind": "ps", "p": p, "D": D}


def _joint_content_normalize(b1, npart):
    """Scale so the full coefficient list is integral with content 1."""
    from math import lcm

    values = [b1] + list(npart.get("D", {}).values())
    den = 1
    for v in values:
        for c in v.coords:
            den = lcm(den, c.denominator)
    num = 0
    for v in values:
        for c in v.coords:
            num = gcd(num, c.numerator * (den // c.denominator))
    scale = Fraction(den, abs(num)) if num else Fraction(1)
    if scale != 1:
        b1 = b1 * scale
        if "D" in npart:
            npart = dict(npart, D={k: v * scale for k, v in npart["D"].items()})
    return b1, npart


# ---------------------------------------------------------------------------
# orchestrator


def solve_eigenform(
    E: EllipticCurveQ,
    ctx: CartanContext,
    seed: int = 0,
    n_max: int = 6000,
    types: list[LocalType] | None = None,
) -> SolvedEigenform:
    rng = random.Random(seed)
    basis = candidate_basis(E, ctx, types, n_max=n_max)
    space, inv_info = invariance_solve(basis, ctx, rng)
    eqd = inv_info["equation_digits"]
    line, pin_info = pin_eigenline(space, basis, ctx, rng, eq_digits=eqd)
    sol = rationalize(line, basis, ctx, E, rng, seeds={"seed": seed}, data_digits=eqd - 10)
    sol.residuals.update(inv_info)
    sol.residuals.update(pin_info)
    return sol
