"""Normal-ordered graded differential operators with polynomial coefficients.

An operator is a finite sum  c(x, W) * d^I  where I is a derivative
multi-index (even powers, ascending odd index tuple), c is a polynomial in
the chart variables and a central formal weight symbol W.  W acts on a
weight-w density component as multiplication by w; a DiffOp whose
coefficients genuinely involve W is a weight pencil.

The derivative monomial d^I denotes the composition
    d_even^e  o  d_odd(i1) o ... o d_odd(ik)      (i1 < ... < ik),
applied innermost-first, all derivatives being LEFT derivatives.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Mapping

from .gralg import (
    EVEN,
    ODD,
    Chart,
    ChartMismatch,
    DensityElement,
    GradedPoly,
    Key,
    ParityError,
    Rat,
    partial,
)

# coefficient of one derivative key: map  W-power -> GradedPoly
WPoly = dict[int, GradedPoly]


def _wp_clean(wp: Mapping[int, GradedPoly]) -> WPoly:
    return {k: p for k, p in wp.items() if not p.is_zero()}


def _wp_add(a: Mapping[int, GradedPoly], b: Mapping[int, GradedPoly]) -> WPoly:
    out = dict(a)
    for k, p in b.items():
        out[k] = out[k] + p if k in out else p
    return _wp_clean(out)


def _wp_mul(a: Mapping[int, GradedPoly], b: Mapping[int, GradedPoly]) -> WPoly:
    out: dict[int, GradedPoly] = {}
    for i, p in a.items():
        for j, q in b.items():
            k = i + j
            pq = p * q
            out[k] = out[k] + pq if k in out else pq
    return _wp_clean(out)


class DiffOp:
    """Normal-ordered graded differential operator.  Immutable by
    convention."""

    __slots__ = ("chart", "terms")

    def __init__(self, chart: Chart, terms: Mapping[Key, Mapping[int, GradedPoly]] | None = None):
        self.chart = chart
        clean: dict[Key, WPoly] = {}
        for key, wp in (terms or {}).items():
            wp = _wp_clean(wp)
            if wp:
                clean[key] = wp
        self.terms = clean

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero(chart: Chart) -> "DiffOp":
        return DiffOp(chart, {})

    @staticmethod
    def mult(p: GradedPoly) -> "DiffOp":
        """Left multiplication operator by p."""
        key = ((0,) * len(p.chart.even), ())
        return DiffOp(p.chart, {key: {0: p}})

    @staticmethod
    def const(chart: Chart, c) -> "DiffOp":
        return DiffOp.mult(GradedPoly.const(chart, c))

    @staticmethod
    def identity(chart: Chart) -> "DiffOp":
        return DiffOp.const(chart, 1)

    @staticmethod
    def deriv(chart: Chart, name: str) -> "DiffOp":
        e = [0] * len(chart.even)
        if chart.parity(name) == EVEN:
            e[chart.even_index(name)] = 1
            key = (tuple(e), ())
        else:
            key = (tuple(e), (chart.odd_index(name),))
        return DiffOp(chart, {key: {0: GradedPoly.one(chart)}})

    @staticmethod
    def weight(chart: Chart) -> "DiffOp":
        """The central weight symbol W (the Euler operator t d/dt)."""
        key = ((0,) * len(chart.even), ())
        return DiffOp(chart, {key: {1: GradedPoly.one(chart)}})

    # -- structure ---------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def uses_weight(self) -> bool:
        return any(k != 0 for wp in self.terms.values() for k in wp)

    def order(self) -> int | None:
        """Max total derivative degree; None marks the zero operator (order
        minus infinity), so "order <= r" is order_leq."""
        if not self.terms:
            return None
        return max(sum(e) + len(o) for (e, o) in self.terms)

    def order_leq(self, r: int) -> bool:
        return all(sum(e) + len(o) <= r for (e, o) in self.terms)

    def parity(self) -> int | None:
        ps = set()
        for (e, o), wp in self.terms.items():
            for p in wp.values():
                cp = p.parity()
                if cp is None:
                    return None
                ps.add((cp + len(o)) % 2)
        if not ps:
            return EVEN
        if len(ps) == 1:
            return ps.pop()
        return None

    def parity_part(self, par: int) -> "DiffOp":
        terms: dict[Key, WPoly] = {}
        for (e, o), wp in self.terms.items():
            cp = (par + len(o)) % 2
            sub = {k: p.parity_part(cp) for k, p in wp.items()}
            sub = _wp_clean(sub)
            if sub:
                terms[(e, o)] = sub
        return DiffOp(self.chart, terms)

    def homogeneous_parts(self) -> list[tuple[int, "DiffOp"]]:
        out = []
        for par in (EVEN, ODD):
            part = self.parity_part(par)
            if not part.is_zero():
                out.append((par, part))
        return out

    # -- arithmetic --------------------------------------------------------

    def _check(self, other: "DiffOp"):
        if self.chart != other.chart:
            raise ChartMismatch("operators on different charts")

    def _coerce(self, other) -> "DiffOp":
        if isinstance(other, (int, Fraction)):
            return DiffOp.const(self.chart, other)
        if isinstance(other, GradedPoly):
            return DiffOp.mult(other)
        return other

    def __add__(self, other):
        other = self._coerce(other)
        self._check(other)
        terms = {k: dict(wp) for k, wp in self.terms.items()}
        for k, wp in other.terms.items():
            terms[k] = _wp_add(terms.get(k, {}), wp)
        return DiffOp(self.chart, terms)

    __radd__ = __add__

    def __neg__(self):
        return DiffOp(
            self.chart,
            {k: {j: -p for j, p in wp.items()} for k, wp in self.terms.items()},
        )

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        """Operator composition (scalars act as constants)."""
        if isinstance(other, (int, Fraction)):
            c = Fraction(other)
            return DiffOp(
                self.chart,
                {k: {j: p * c for j, p in wp.items()} for k, wp in self.terms.items()},
            )
        other = self._coerce(other)
        return compose(self, other)

    def __rmul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self * other
        if isinstance(other, GradedPoly):
            return compose(DiffOp.mult(other), self)
        return NotImplemented

    def __pow__(self, n: int):
        out = DiffOp.identity(self.chart)
        for _ in range(n):
            out = compose(out, self)
        return out

    def __eq__(self, other):
        if isinstance(other, (int, Fraction, GradedPoly)):
            other = self._coerce(other)
        if not isinstance(other, DiffOp):
            return NotImplemented
        return self.chart == other.chart and self.terms == other.terms

    def __hash__(self):
        items = tuple(
            (k, tuple(sorted(wp.items()))) for k, wp in sorted(self.terms.items())
        )
        return hash((self.chart, items))

    def __repr__(self):
        try:
            from .dsl import render
        except ImportError:
            return f"DiffOp({self.terms!r})"
        return f"DiffOp({render(self)})"

    # -- action ------------------------------------------------------------

    def _apply_derivs(self, key: Key, p: GradedPoly) -> GradedPoly:
        e, o = key
        for i in reversed(o):
            p = partial(self.chart.odd[i], p)
            if p.is_zero():
                return p
        for i, n in enumerate(e):
            for _ in range(n):
                p = partial(self.chart.even[i], p)
                if p.is_zero():
                    return p
        return p

    def apply(self, psi):
        """Apply to a DensityElement (GradedPolys are taken at weight 0)."""
        if isinstance(psi, GradedPoly):
            return self.apply_poly(psi)
        if psi.chart != self.chart:
            raise ChartMismatch("operand on wrong chart")
        out = DensityElement.zero(self.chart)
        for w, comp in psi.parts.items():
            acc = GradedPoly.zero(self.chart)
            for key, wp in self.terms.items():
                d = self._apply_derivs(key, comp)
                if d.is_zero():
                    continue
                coeff = GradedPoly.zero(self.chart)
                for k, c in wp.items():
                    coeff = coeff + c * (w**k if k else 1)
                acc = acc + coeff * d
            out = out + DensityElement(self.chart, {w: acc})
        return out

    def apply_poly(self, p: GradedPoly) -> GradedPoly:
        """Apply to a weight-0 polynomial, returning a polynomial."""
        return self.apply(DensityElement.from_poly(p)).component(0)


def _deriv_then(chart: Chart, name: str, F: DiffOp) -> DiffOp:
    """The normal-ordered form of  d_name o F."""
    pa = chart.parity(name)
    terms: dict[Key, WPoly] = {}

    def add(key: Key, wpow: int, poly: GradedPoly):
        if poly.is_zero():
            return
        wp = terms.setdefault(key, {})
        wp[wpow] = wp[wpow] + poly if wpow in wp else poly

    for (e, o), wp in F.terms.items():
        for wpow, c in wp.items():
            # derivative hits the coefficient ...
            add((e, o), wpow, partial(name, c))
            # ... or passes it with the Koszul sign and extends the index
            for cp, cpart in c.homogeneous_parts():
                sign = (-1) ** (pa * cp)
                if pa == EVEN:
                    i = chart.even_index(name)
                    e2 = list(e)
                    e2[i] += 1
                    add((tuple(e2), o), wpow, cpart * sign)
                else:
                    i = chart.odd_index(name)
                    if i in o:
                        continue
                    before = sum(1 for j in o if j < i)
                    o2 = tuple(sorted(o + (i,)))
                    add((e, o2), wpow, cpart * sign * (-1) ** before)
    return DiffOp(chart, terms)


def compose(D: DiffOp, E: DiffOp) -> DiffOp:
    """Normal-ordered composition: apply(compose(D, E), psi) =
    apply(D, apply(E, psi))."""
    if D.chart != E.chart:
        raise ChartMismatch("operators on different charts")
    chart = D.chart
    out = DiffOp.zero(chart)
    for (e, o), wp in D.terms.items():
        # build  d^(e,o) o E  innermost derivative first
        seq: list[str] = []
        for i, n in enumerate(e):
            seq.extend([chart.even[i]] * n)
        seq.extend(chart.odd[i] for i in o)
        T = E
        for name in reversed(seq):
            T = _deriv_then(chart, name, T)
            if T.is_zero():
                break
        if T.is_zero():
            continue
        # left-multiply by the coefficient
        terms: dict[Key, WPoly] = {}
        for key2, wp2 in T.terms.items():
            prod = _wp_mul(wp, wp2)
            if prod:
                terms[key2] = _wp_add(terms.get(key2, {}), prod)
        out = out + DiffOp(chart, terms)
    return out


def commutator(D: DiffOp, E: DiffOp) -> DiffOp:
    """Graded commutator [D,E] = DE - (-1)^{parity D * parity E} ED,
    extended bilinearly to inhomogeneous operators."""
    if D.chart != E.chart:
        raise ChartMismatch("operators on different charts")
    out = DiffOp.zero(D.chart)
    for pd, Dp in D.homogeneous_parts():
        for pe, Ep in E.homogeneous_parts():
            out = out + compose(Dp, Ep) - (-1) ** (pd * pe) * compose(Ep, Dp)
    return out


def conjugate_by_exp(D: DiffOp, u: GradedPoly, sign: int = 1) -> DiffOp:
    """Exact conjugation  e^{-s u} o D o e^{s u}  (s = sign), computed as the
    terminating commutator series  sum_k (1/k!) ad_{su}^k D."""
    if u.parity() not in (EVEN,):
        raise ParityError("conjugation exponent must be even")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    M = DiffOp.mult(u * sign)
    out = D
    term = D
    k = 0
    bound = (D.order() or 0) + 1
    while True:
        k += 1
        term = commutator(term, M) * Fraction(1, k)
        if term.is_zero():
            break
        if k > bound:
            raise RuntimeError("conjugation series failed to terminate")
        out = out + term
    return out


def specialize(P: DiffOp, w0) -> DiffOp:
    """Substitute W := w0 in all coefficients."""
    w0 = Fraction(w0)
    terms: dict[Key, WPoly] = {}
    for key, wp in P.terms.items():
        acc = GradedPoly.zero(P.chart)
        for k, c in wp.items():
            acc = acc + c * (w0**k if k else 1)
        if not acc.is_zero():
            terms[key] = {0: acc}
    return DiffOp(P.chart, terms)


def formal_adjoint(D: DiffOp) -> DiffOp:
    """Formal adjoint, defined by structural recursion with the frozen sign
    table:

        (f.)* = f.          (d_a)* = -d_a          W* = 1 - W
        (DE)* = (-1)^{parity D * parity E} E* D*

    certified by the Berezin-integral pairing oracle on purely odd charts
    and by the canonical-pencil self-adjointness suite."""
    chart = D.chart
    one_minus_w = DiffOp.identity(chart) - DiffOp.weight(chart)
    out = DiffOp.zero(chart)
    for (e, o), wp in D.terms.items():
        nder = sum(e) + len(o)
        for wpow, c in wp.items():
            for cp, cpart in c.homogeneous_parts():
                # reverse the factor list [c, d, d, ..., d]; only odd-odd
                # swaps contribute: pairs among odd derivatives plus pairs
                # (c, odd derivative)
                ko = len(o)
                rev = (-1) ** (cp * ko + ko * (ko - 1) // 2)
                sgn = rev * (-1) ** nder
                # compose  d(o_k) o ... o d(o_1) o d_even^e o (cpart .)
                T = DiffOp.mult(cpart * sgn)
                for i, n in enumerate(e):
                    for _ in range(n):
                        T = _deriv_then(chart, chart.even[i], T)
                for i in o:
                    T = _deriv_then(chart, chart.odd[i], T)
                if wpow:
                    T = compose(one_minus_w**wpow, T)
                out = out + T
    return out


# A pencil is a DiffOp whose coefficients involve W; the adjoint recursion
# already treats W by W* = 1 - W, so the pencil adjoint is the same map.
pencil_adjoint = formal_adjoint


def op_from_action(chart: Chart, action: Callable[[GradedPoly], GradedPoly],
                   order: int) -> DiffOp:
    """Reconstruct the unique normal-ordered operator of order <= order whose
    action on polynomials is the given (linear) map.  Works degree by degree:
    the coefficient at multi-index I is fixed by the action on the monomial
    x^I once all lower coefficients are known."""
    keys: list[Key] = []

    def even_exps(total: int, nvars: int):
        if nvars == 0:
            if total == 0:
                yield ()
            return
        for head in range(total + 1):
            for rest in even_exps(total - head, nvars - 1):
                yield (head,) + rest

    import itertools

    for deg in range(order + 1):
        for no in range(min(deg, len(chart.odd)) + 1):
            for e in even_exps(deg - no, len(chart.even)):
                for o in itertools.combinations(range(len(chart.odd)), no):
                    keys.append((e, o))
    keys.sort(key=lambda k: sum(k[0]) + len(k[1]))

    def monomial(key: Key) -> GradedPoly:
        e, o = key
        m = GradedPoly.one(chart)
        for i, n in enumerate(e):
            m = m * GradedPoly.var(chart, chart.even[i]) ** n
        for i in o:
            m = m * GradedPoly.var(chart, chart.odd[i])
        return m

    result = DiffOp.zero(chart)
    for key in keys:
        m = monomial(key)
        val = action(m) - result.apply_poly(m)
        if val.is_zero():
            continue
        # d^key applied to its own monomial gives a nonzero constant (even
        # factorials times the odd reordering sign)
        probe = DiffOp(chart, {key: {0: GradedPoly.one(chart)}})
        unit = probe.apply_poly(m).constant_term()
        if unit == 0:
            raise RuntimeError("degenerate reconstruction probe")
        c = val * (Fraction(1) / unit)
        result = result + DiffOp(chart, {key: {0: c}})
    return result
