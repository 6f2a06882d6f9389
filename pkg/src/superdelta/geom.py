"""Geometric constructions on top of the operator calculus: brackets from
operators, symbols, odd Laplacians, the canonical density pencil, Jacobi
conditions on the cotangent space, and coordinate covariance.

Frozen conventions (certified by the theorem suites in tests/):

  * coordinate bracket      {f,g} = S^{ab} d_b f d_a g (-1)^{pa(a) pf}
  * forced symmetry         S^{ba} = (-1)^{pa(a) pa(b)} S^{ab}
  * momentum normalization  (p_a, x^b) = delta_a^b on T*M
  * divergence              div X = (-1)^{pa(a)(pX+1)} d_a X^a
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .gralg import (
    EVEN,
    ODD,
    Chart,
    ChartMismatch,
    DensityElement,
    GradedPoly,
    ParityError,
    Rat,
    partial,
    substitute,
)
from .diffop import (
    DiffOp,
    WPoly,
    commutator,
    compose,
    conjugate_by_exp,
    op_from_action,
    pencil_adjoint,
    specialize,
)

SMatrix = dict[tuple[str, str], GradedPoly]
GVector = dict[str, GradedPoly]


class BracketDataError(ValueError):
    pass


def _sym_sign(chart: Chart, a: str, b: str) -> int:
    return (-1) ** (chart.parity(a) * chart.parity(b))


@dataclass(frozen=True)
class VBracketData:
    """The coordinate data (S^{ab}, gamma^a, theta) of a weight-zero bracket
    on the algebra of densities, together with the bracket parity eps.

    The constructor completes a partially given S by the forced graded
    symmetry and rejects entries that contradict it or carry wrong parity.
    """

    chart: Chart
    eps: int
    S: SMatrix
    gamma: GVector
    theta: GradedPoly

    def __post_init__(self):
        chart = self.chart
        full: SMatrix = {}
        for (a, b), p in self.S.items():
            if p.chart != chart:
                raise ChartMismatch("S entry on wrong chart")
            if p.is_zero():
                continue
            want = (self.eps + chart.parity(a) + chart.parity(b)) % 2
            if p.parity() != want:
                raise BracketDataError(f"S[{a},{b}] has wrong parity")
            full[(a, b)] = p
        for (a, b), p in list(full.items()):
            expected = p * _sym_sign(chart, a, b)
            if a == b:
                if expected != p:
                    raise BracketDataError(f"S[{a},{a}] must vanish")
                continue
            mirror = full.get((b, a))
            if mirror is None:
                full[(b, a)] = expected
            elif mirror != expected:
                raise BracketDataError(f"S[{a},{b}] breaks graded symmetry")
        object.__setattr__(self, "S", full)
        for a, p in self.gamma.items():
            if p.is_zero():
                continue
            want = (self.eps + chart.parity(a)) % 2
            if p.parity() != want:
                raise BracketDataError(f"gamma[{a}] has wrong parity")
        if not self.theta.is_zero() and self.theta.parity() != self.eps:
            raise BracketDataError("theta has wrong parity")

    def entry(self, a: str, b: str) -> GradedPoly:
        return self.S.get((a, b), GradedPoly.zero(self.chart))

    def gamma_entry(self, a: str) -> GradedPoly:
        return self.gamma.get(a, GradedPoly.zero(self.chart))

    def __hash__(self):
        return hash(
            (
                self.chart,
                self.eps,
                tuple(sorted(self.S.items())),
                tuple(sorted(self.gamma.items())),
                self.theta,
            )
        )


@dataclass(frozen=True)
class LogVolume:
    """A volume form rho = e^sigma Dx represented by its even log-density."""

    sigma: GradedPoly

    def __post_init__(self):
        if self.sigma.parity() != EVEN:
            raise ParityError("log-volume must be even")

    @property
    def chart(self) -> Chart:
        return self.sigma.chart


def _as_sigma(sigma) -> GradedPoly:
    if isinstance(sigma, LogVolume):
        return sigma.sigma
    if sigma.parity() != EVEN:
        raise ParityError("log-volume must be even")
    return sigma


# ---------------------------------------------------------------------------
# brackets of functions
# ---------------------------------------------------------------------------


def matrix_bracket(S: SMatrix, chart: Chart, f: GradedPoly, g: GradedPoly) -> GradedPoly:
    """The coordinate bracket {f,g} = S^{ab} d_b f d_a g (-1)^{pa(a) pf}."""
    out = GradedPoly.zero(chart)
    for pf, fh in f.homogeneous_parts():
        for (a, b), s in S.items():
            if s.is_zero():
                continue
            dbf = partial(b, fh)
            if dbf.is_zero():
                continue
            dag = partial(a, g)
            if dag.is_zero():
                continue
            out = out + s * dbf * dag * (-1) ** (chart.parity(a) * pf)
    return out


def poisson_bracket(S: SMatrix, chart: Chart, f: GradedPoly, g: GradedPoly) -> GradedPoly:
    """The antibracket-normalized coordinate bracket
    {f,g}_P = (-1)^{pf+1} {f,g} for homogeneous f (extended additively).
    In this normalization the odd Laplacian is a derivation of the bracket
    and satisfies the Leibniz discrepancy identity with the (-1)^{pf+1}
    sign."""
    out = GradedPoly.zero(chart)
    for pf, fh in f.homogeneous_parts():
        out = out + matrix_bracket(S, chart, fh, g) * (-1) ** (pf + 1)
    return out


def bracket_from_operator(D: DiffOp, f: GradedPoly, g: GradedPoly) -> GradedPoly:
    """{f,g} := D(fg) - (Df)g - (-1)^{eps pf} f (Dg) + (D1) fg for a
    homogeneous operator D of parity eps (any order; the formula is applied
    verbatim)."""
    eps = D.parity()
    if eps is None:
        raise ParityError("generating operator must be homogeneous")
    one = GradedPoly.one(D.chart)
    d1 = D.apply_poly(one)
    out = GradedPoly.zero(D.chart)
    for pf, fh in f.homogeneous_parts():
        out = (
            out
            + D.apply_poly(fh * g)
            - D.apply_poly(fh) * g
            - (-1) ** (eps * pf) * fh * D.apply_poly(g)
            + d1 * fh * g
        )
    return out


def principal_matrix(D: DiffOp) -> SMatrix:
    """The symmetric coefficient matrix S^{ab} of an operator of order <= 2,
    extracted through the bracket on coordinate functions."""
    if not D.order_leq(2):
        raise ValueError("principal symbol defined for order <= 2 only")
    chart = D.chart
    S: SMatrix = {}
    for a in chart.names:
        xa = GradedPoly.var(chart, a)
        for b in chart.names:
            xb = GradedPoly.var(chart, b)
            v = bracket_from_operator(D, xb, xa) * _sym_sign(chart, a, b)
            if not v.is_zero():
                S[(a, b)] = v
    return S


def second_order_part(chart: Chart, S: SMatrix) -> DiffOp:
    """The operator (1/2) S^{ab} d_b d_a in normal order."""
    out = DiffOp.zero(chart)
    for (a, b), s in S.items():
        out = out + DiffOp.mult(s) * DiffOp.deriv(chart, b) * DiffOp.deriv(chart, a)
    return out * Fraction(1, 2)


def first_order_coeffs(D: DiffOp) -> GVector:
    """Coefficients T^a of the pure first-order part of a normal-ordered
    operator."""
    chart = D.chart
    out: GVector = {}
    for (e, o), wp in D.terms.items():
        if sum(e) + len(o) != 1:
            continue
        if e and sum(e) == 1:
            name = chart.even[e.index(1)]
        else:
            name = chart.odd[o[0]]
        c = wp.get(0, GradedPoly.zero(chart))
        if any(k != 0 for k in wp):
            raise ValueError("weight-dependent coefficient in plain operator")
        out[name] = c
    return out


def subprincipal(D: DiffOp) -> GVector:
    """The components gamma^a = d_b S^{ba} (-1)^{pa(b)(eps+1)} - 2 T^a of
    Hormander's subprincipal symbol, for a normalized (D1 = 0) operator of
    order <= 2."""
    chart = D.chart
    if not D.order_leq(2):
        raise ValueError("subprincipal symbol requires order <= 2")
    if not D.apply_poly(GradedPoly.one(chart)).is_zero():
        raise ValueError("operator must be normalized: D1 = 0")
    eps = D.parity()
    if eps is None:
        raise ParityError("operator must be homogeneous")
    S = principal_matrix(D)
    rest = D - second_order_part(chart, S)
    if not rest.order_leq(1):
        raise RuntimeError("second-order extraction failed")
    T = first_order_coeffs(rest)
    out: GVector = {}
    for a in chart.names:
        acc = GradedPoly.zero(chart)
        for b in chart.names:
            s = S.get((b, a))
            if s is not None:
                acc = acc + partial(b, s) * (-1) ** (chart.parity(b) * (eps + 1))
        acc = acc - 2 * T.get(a, GradedPoly.zero(chart))
        if not acc.is_zero():
            out[a] = acc
    return out


def hamiltonian_vf(S: SMatrix, chart: Chart, f: GradedPoly) -> DiffOp:
    """The Hamiltonian vector field X_f with X_f(g) = {f,g}."""
    out = DiffOp.zero(chart)
    for pf, fh in f.homogeneous_parts():
        for (a, b), s in S.items():
            c = s * partial(b, fh) * (-1) ** (chart.parity(a) * pf)
            if not c.is_zero():
                out = out + DiffOp.mult(c) * DiffOp.deriv(chart, a)
    return out


def divergence(X: DiffOp) -> GradedPoly:
    """div X = (-1)^{pa(a)(pX+1)} d_a X^a for a first-order operator with no
    constant term."""
    chart = X.chart
    if not X.order_leq(1) or not X.apply_poly(GradedPoly.one(chart)).is_zero():
        raise ValueError("divergence requires a vector field")
    coeffs = first_order_coeffs(X)
    out = GradedPoly.zero(chart)
    for a, c in coeffs.items():
        for px, cpart in c.homogeneous_parts():
            pX = (px + chart.parity(a)) % 2
            out = out + partial(a, cpart) * (-1) ** (chart.parity(a) * (pX + 1))
    return out


def lie_derivative_pencil(X: DiffOp) -> DiffOp:
    """Lie derivative along a vector field acting on w-densities, as a pencil:
    L_X = X + W (div X)."""
    return X + DiffOp.weight(X.chart) * DiffOp.mult(divergence(X))


def lie_derivative(X: DiffOp, w) -> DiffOp:
    return specialize(lie_derivative_pencil(X), w)


# ---------------------------------------------------------------------------
# odd Laplacians and the density calculus
# ---------------------------------------------------------------------------


def _div_form(chart: Chart, S: SMatrix, sigma: GradedPoly) -> DiffOp:
    """sum_a (d_a sigma + d_a) o (sum_b S^{ab} d_b): the divergence-form
    operator  e^{-sigma} d_a (e^{sigma} S^{ab} d_b . )."""
    out = DiffOp.zero(chart)
    for a in chart.names:
        Ba = DiffOp.zero(chart)
        for b in chart.names:
            s = S.get((a, b))
            if s is not None and not s.is_zero():
                Ba = Ba + DiffOp.mult(s) * DiffOp.deriv(chart, b)
        if Ba.is_zero():
            continue
        da_sigma = partial(a, sigma)
        term = compose(DiffOp.deriv(chart, a), Ba)
        if not da_sigma.is_zero():
            term = term + compose(DiffOp.mult(da_sigma), Ba)
        out = out + term
    return out


def odd_laplacian(S: SMatrix, chart: Chart, sigma) -> DiffOp:
    """The odd Laplacian  (1/2) e^{-sigma} d_a (e^{sigma} S^{ab} d_b . )
    attached to odd bracket data S and volume form rho = e^sigma Dx."""
    sigma = _as_sigma(sigma)
    op = _div_form(chart, S, sigma) * Fraction(1, 2)
    if op.parity() not in (ODD, EVEN):
        raise ParityError("odd Laplacian came out inhomogeneous")
    return op


def modular_vf(P: SMatrix, chart: Chart, sigma) -> DiffOp:
    """The modular vector field of an even antisymmetric Poisson tensor:
    the same divergence construction without the 1/2; second-order terms
    cancel."""
    sigma = _as_sigma(sigma)
    for (a, b), p in P.items():
        mirror = P.get((b, a), GradedPoly.zero(chart))
        if mirror != -(_sym_sign(chart, a, b) * p):
            raise BracketDataError("P must be graded antisymmetric")
    op = _div_form(chart, P, sigma)
    if not op.order_leq(1):
        raise RuntimeError("second-order terms failed to cancel")
    return op


def act_on_w_densities(S: SMatrix, chart: Chart, sigma, w) -> DiffOp:
    """The odd Laplacian on w-densities:  rho^w Delta_rho (rho^{-w} . ),
    computed as a terminating conjugation."""
    sigma = _as_sigma(sigma)
    D = odd_laplacian(S, chart, sigma)
    u = sigma * Fraction(w)
    return conjugate_by_exp(D, u, sign=-1)


def master_discrepancy(S: SMatrix, chart: Chart, sigma0, sigma) -> GradedPoly:
    """H(rho', rho) = e^{-sigma/2} Delta_rho(e^{sigma/2}) for rho' = e^sigma
    rho; vanishes exactly on master-equation solutions."""
    sigma0 = _as_sigma(sigma0)
    sigma = _as_sigma(sigma)
    D = odd_laplacian(S, chart, sigma0)
    conj = conjugate_by_exp(D, sigma * Fraction(1, 2))
    return conj.apply_poly(GradedPoly.one(chart))


# ---------------------------------------------------------------------------
# the canonical pencil (operators <-> brackets on densities)
# ---------------------------------------------------------------------------


def canonical_pencil(data: VBracketData) -> DiffOp:
    """The unique normalized self-adjoint pencil generating the bracket:

    Delta_w = 1/2 ( S^{ab} d_b d_a
                    + (d_b S^{ba} (-1)^{pa(b)(eps+1)} + (2w-1) gamma^a) d_a
                    + w d_a gamma^a (-1)^{pa(a)(eps+1)}
                    + w(w-1) theta )."""
    chart = data.chart
    eps = data.eps
    W = DiffOp.weight(chart)
    one = DiffOp.identity(chart)
    out = DiffOp.zero(chart)
    for (a, b), s in data.S.items():
        out = out + DiffOp.mult(s) * DiffOp.deriv(chart, b) * DiffOp.deriv(chart, a)
    for a in chart.names:
        c = GradedPoly.zero(chart)
        for b in chart.names:
            s = data.S.get((b, a))
            if s is not None:
                c = c + partial(b, s) * (-1) ** (chart.parity(b) * (eps + 1))
        term = DiffOp.zero(chart)
        if not c.is_zero():
            term = term + DiffOp.mult(c)
        ga = data.gamma_entry(a)
        if not ga.is_zero():
            term = term + (2 * W - one) * DiffOp.mult(ga)
        if not term.is_zero():
            out = out + term * DiffOp.deriv(chart, a)
    zc = GradedPoly.zero(chart)
    for a in chart.names:
        zc = zc + partial(a, data.gamma_entry(a)) * (-1) ** (chart.parity(a) * (eps + 1))
    out = out + W * DiffOp.mult(zc)
    if not data.theta.is_zero():
        out = out + (W * W - W) * DiffOp.mult(data.theta)
    return out * Fraction(1, 2)


def lb_data(S: SMatrix, chart: Chart, sigma, eps: int = ODD) -> VBracketData:
    """The Laplace-Beltrami bracket data of a volume form rho = e^sigma Dx:
    gamma^a = -S^{ab} gamma_b and theta = -gamma^a gamma_a with
    gamma_a = d_a sigma.  The signs are normalized so that the canonical
    pencil of this data, specialized at weight w, coincides with the
    conjugated odd Laplacian e^{w sigma} Delta_rho e^{-w sigma} for every
    weight (in particular it equals Delta_rho itself at w = 0)."""
    sigma = _as_sigma(sigma)
    lower = {a: partial(a, sigma) for a in chart.names}
    gamma: GVector = {}
    for a in chart.names:
        acc = GradedPoly.zero(chart)
        for b in chart.names:
            s = S.get((a, b))
            if s is not None:
                acc = acc - s * lower[b]
        if not acc.is_zero():
            gamma[a] = acc
    theta = GradedPoly.zero(chart)
    for a in chart.names:
        if a in gamma:
            theta = theta - gamma[a] * lower[a]
    return VBracketData(chart, eps, dict(S), gamma, theta)


def pencil_bracket(P: DiffOp, psi: DensityElement, chi: DensityElement) -> DensityElement:
    """{psi,chi} = P(psi chi) - (P psi) chi - (-1)^{eps p(psi)} psi (P chi)
    for a normalized weight-zero pencil of order <= 2."""
    if not P.order_leq(2):
        raise ValueError("pencil bracket requires order <= 2")
    eps = P.parity()
    if eps is None:
        raise ParityError("pencil must be homogeneous")
    chart = P.chart
    out = DensityElement.zero(chart)
    for ppsi in (EVEN, ODD):
        ph = psi.parity_part(ppsi)
        if ph.is_zero():
            continue
        out = (
            out
            + P.apply(ph * chi)
            - P.apply(ph) * chi
            - ph * P.apply(chi) * (-1) ** (eps * ppsi)
        )
    return out


def _unit_density(chart: Chart) -> DensityElement:
    return DensityElement.from_poly(GradedPoly.one(chart), 1)


def extract_vbracket(P: DiffOp) -> VBracketData:
    """Invert canonical_pencil on its image.  Raises if P is outside the
    bijection's slice (not normalized, not pencil-self-adjoint, or not
    reproduced by the round trip)."""
    chart = P.chart
    if not P.order_leq(2):
        raise ValueError("pencil must have order <= 2")
    eps = P.parity()
    if eps is None:
        raise ParityError("pencil must be homogeneous")
    if not specialize(P, 0).apply_poly(GradedPoly.one(chart)).is_zero():
        raise ValueError("pencil is not normalized (P1 != 0 at w = 0)")
    if pencil_adjoint(P) != P:
        raise ValueError("pencil is not self-adjoint")
    t = _unit_density(chart)
    S: SMatrix = {}
    for a in chart.names:
        xa = DensityElement.from_poly(GradedPoly.var(chart, a))
        for b in chart.names:
            xb = DensityElement.from_poly(GradedPoly.var(chart, b))
            v = pencil_bracket(P, xb, xa).component(0) * _sym_sign(chart, a, b)
            if not v.is_zero():
                S[(a, b)] = v
    gamma: GVector = {}
    for a in chart.names:
        xa = DensityElement.from_poly(GradedPoly.var(chart, a))
        v = pencil_bracket(P, xa, t).component(1)
        if not v.is_zero():
            gamma[a] = v
    theta = pencil_bracket(P, t, t).component(2)
    data = VBracketData(chart, eps, S, gamma, theta)
    if canonical_pencil(data) != P:
        raise ValueError("pencil is outside the canonical bijection's domain")
    return data


# ---------------------------------------------------------------------------
# symbols and the canonical Poisson bracket on T*M
# ---------------------------------------------------------------------------

MOMENTUM_PREFIX = "p_"


def cotangent_chart(chart: Chart) -> Chart:
    """Extend a chart by momenta p_a of matching parity."""
    return Chart(
        even=chart.even + tuple(MOMENTUM_PREFIX + v for v in chart.even),
        odd=chart.odd + tuple(MOMENTUM_PREFIX + v for v in chart.odd),
    )


def momentum(ct: Chart, name: str) -> GradedPoly:
    return GradedPoly.var(ct, MOMENTUM_PREFIX + name)


def lift_to_cotangent(p: GradedPoly, ct: Chart) -> GradedPoly:
    """Reinterpret a chart polynomial on the cotangent chart."""
    images = {v: GradedPoly.var(ct, v) for v in p.chart.names}
    return substitute(p, images, target=ct)


def symbol_S(data: VBracketData, ct: Chart | None = None) -> GradedPoly:
    """S = 1/2 S^{ab} p_b p_a as a function on T*M."""
    ct = ct or cotangent_chart(data.chart)
    out = GradedPoly.zero(ct)
    for (a, b), s in data.S.items():
        out = out + lift_to_cotangent(s, ct) * momentum(ct, b) * momentum(ct, a)
    return out * Fraction(1, 2)


def symbol_gamma(data: VBracketData, ct: Chart | None = None) -> GradedPoly:
    """gamma = gamma^a p_a as a function on T*M."""
    ct = ct or cotangent_chart(data.chart)
    out = GradedPoly.zero(ct)
    for a, g in data.gamma.items():
        out = out + lift_to_cotangent(g, ct) * momentum(ct, a)
    return out


def symbol_theta(data: VBracketData, ct: Chart | None = None) -> GradedPoly:
    ct = ct or cotangent_chart(data.chart)
    return lift_to_cotangent(data.theta, ct)


def _base_and_momentum(ct: Chart, name: str) -> bool:
    return name.startswith(MOMENTUM_PREFIX)


def tstar_bracket(F: GradedPoly, G: GradedPoly) -> GradedPoly:
    """The canonical (even) Poisson bracket on T*M, normalized by
    (p_a, x^b) = delta_a^b:

    (F,G) = sum_a [ (-1)^{pa(a)(pF+1)} dF/dp_a dG/dx^a
                    - (-1)^{pa(a) pF}  dF/dx^a dG/dp_a ]."""
    ct = F.chart
    if G.chart != ct:
        raise ChartMismatch("symbols on different cotangent charts")
    base = [v for v in ct.names if not v.startswith(MOMENTUM_PREFIX)]
    out = GradedPoly.zero(ct)
    for pF, Fh in F.homogeneous_parts():
        for a in base:
            pa = ct.parity(a)
            pm = MOMENTUM_PREFIX + a
            dFp = partial(pm, Fh)
            if not dFp.is_zero():
                out = out + dFp * partial(a, G) * (-1) ** (pa * (pF + 1))
            dFx = partial(a, Fh)
            if not dFx.is_zero():
                out = out - dFx * partial(pm, G) * (-1) ** (pa * pF)
    return out


def jacobi_report(data: VBracketData) -> tuple[GradedPoly, GradedPoly, GradedPoly, GradedPoly]:
    """The four obstruction symbols ((S,S), (S,gamma), (S,theta)+(gamma,gamma),
    (gamma,theta)); all four vanish iff ord(Delta^2) <= 1 for the canonical
    pencil."""
    if data.eps != ODD:
        raise ParityError("Jacobi report requires an odd bracket")
    ct = cotangent_chart(data.chart)
    S = symbol_S(data, ct)
    g = symbol_gamma(data, ct)
    th = symbol_theta(data, ct)
    return (
        tstar_bracket(S, S),
        tstar_bracket(S, g),
        tstar_bracket(S, th) + tstar_bracket(g, g),
        tstar_bracket(g, th),
    )


# ---------------------------------------------------------------------------
# classification of Delta^2
# ---------------------------------------------------------------------------

LEVELS = ("<=0", "<=1", "<=2", "<=3")


def classify_square(D: DiffOp) -> str:
    """The finest level "<=r" with ord(Delta^2) <= r, for a normalized odd
    operator of order <= 2."""
    chart = D.chart
    if D.parity() != ODD:
        raise ParityError("classification requires an odd operator")
    if not D.order_leq(2):
        raise ValueError("classification requires order <= 2")
    if not D.apply_poly(GradedPoly.one(chart)).is_zero():
        raise ValueError("operator must be normalized: D1 = 0")
    sq = compose(D, D)
    r = sq.order()
    if r is None or r <= 0:
        return "<=0"
    if r > 3:
        raise RuntimeError("ord Delta^2 > 3 cannot happen for order <= 2")
    return f"<={r}"


# ---------------------------------------------------------------------------
# recovering the action from flat data (odd symplectic corollary)
# ---------------------------------------------------------------------------


def _euler_antiderivative(chart: Chart, form: GVector) -> GradedPoly:
    """Given a closed polynomial 1-form omega_b = d_b A with A(0) = 0,
    recover A by the Euler homotopy A = sum_m B_m / m, B = x^b omega_b."""
    B = GradedPoly.zero(chart)
    for b, w in form.items():
        B = B + GradedPoly.var(chart, b) * w
    terms: dict = {}
    for (e, o), c in B.terms.items():
        m = sum(e) + len(o)
        if m == 0:
            raise ValueError("form has a non-exact constant part")
        terms[(e, o)] = c / m
    return GradedPoly(chart, terms)


def recover_action(S: SMatrix, chart: Chart, gamma: GVector,
                   max_iter: int = 60) -> GradedPoly:
    """Solve gamma^a = S^{ab} gamma_b for the lowered form, then find the
    "action" A with gamma_b = -d_b A, normalized by A(0) = 0."""
    names = chart.names
    n = len(names)
    # constant scalar part of S, inverted over Q
    S0 = [[S.get((a, b), GradedPoly.zero(chart)).constant_term() for b in names] for a in names]

    def solve_const(vec):
        # Gaussian elimination over Fractions
        m = [row[:] + [v] for row, v in zip([r[:] for r in S0], vec)]
        for col in range(n):
            piv = next((r for r in range(col, n) if m[r][col] != 0), None)
            if piv is None:
                raise ValueError("constant part of S is singular")
            m[col], m[piv] = m[piv], m[col]
            inv = Fraction(1) / m[col][col]
            m[col] = [x * inv for x in m[col]]
            for r in range(n):
                if r != col and m[r][col] != 0:
                    f = m[r][col]
                    m[r] = [x - f * y for x, y in zip(m[r], m[col])]
        return [m[r][n] for r in range(n)]

    gvec = [gamma.get(a, GradedPoly.zero(chart)) for a in names]
    lower = [GradedPoly.zero(chart) for _ in names]
    for _ in range(max_iter):
        # residual r^a = gamma^a - (S - S0)^{ab} lower_b
        rhs = []
        for i, a in enumerate(names):
            acc = gvec[i]
            for j, b in enumerate(names):
                s = S.get((a, b), GradedPoly.zero(chart)) - GradedPoly.const(chart, S0[i][j])
                if not s.is_zero():
                    acc = acc - s * lower[j]
            rhs.append(acc)
        # new lowered components, one scalar solve per monomial key
        keys = sorted({k for p in rhs for k in p.terms})
        new = [GradedPoly.zero(chart) for _ in names]
        for k in keys:
            vec = [p.terms.get(k, Fraction(0)) for p in rhs]
            sol = solve_const(vec)
            for i in range(n):
                if sol[i] != 0:
                    new[i] = new[i] + GradedPoly(chart, {k: sol[i]})
        if new == lower:
            break
        lower = new
    else:
        raise ValueError("iteration for S^{-1} failed to terminate")
    # sanity: S * lower == gamma
    for i, a in enumerate(names):
        acc = GradedPoly.zero(chart)
        for j, b in enumerate(names):
            s = S.get((a, b))
            if s is not None:
                acc = acc + s * lower[j]
        if acc != gvec[i]:
            raise ValueError("S is not invertible on this gamma")
    form = {a: -lower[i] for i, a in enumerate(names)}
    A = _euler_antiderivative(chart, form)
    for i, a in enumerate(names):
        if partial(a, A) != -lower[i]:
            raise ValueError("lowered form is not closed; no action exists")
    return A


# ---------------------------------------------------------------------------
# coordinate changes
# ---------------------------------------------------------------------------


class CoordMapError(ValueError):
    pass


@dataclass(frozen=True)
class CoordMap:
    """A coordinate change x' = phi(x) on a fixed chart, of the form
    "constant invertible body plus nilpotent (odd-containing) corrections",
    with the inverse supplied and checked."""

    chart: Chart
    fwd: Mapping[str, GradedPoly]
    inv: Mapping[str, GradedPoly]

    def __post_init__(self):
        chart = self.chart
        for name in chart.names:
            for m in (self.fwd, self.inv):
                if name not in m:
                    raise CoordMapError(f"map must list every variable ({name})")
                im = m[name]
                p = im.parity()
                if not im.is_zero() and p != chart.parity(name):
                    raise CoordMapError(f"image of {name} has wrong parity")
        # round trip check on the generators
        for name in chart.names:
            v = substitute(self.fwd[name], dict(self.inv))
            if v != GradedPoly.var(chart, name):
                raise CoordMapError("supplied inverse fails the round trip")

    def push(self, p: GradedPoly) -> GradedPoly:
        """Express an old-coordinate polynomial in new coordinates."""
        return substitute(p, dict(self.inv))

    def pull(self, p: GradedPoly) -> GradedPoly:
        """Express a new-coordinate polynomial in old coordinates."""
        return substitute(p, dict(self.fwd))

    def jacobian(self) -> dict[tuple[str, str], GradedPoly]:
        """Entries J[a', a] = d x'^{a'} / d x^a in old coordinates."""
        return {
            (ap, a): partial(a, self.fwd[ap])
            for ap in self.chart.names
            for a in self.chart.names
        }


def _det_even(entries: list[list[GradedPoly]], chart: Chart) -> GradedPoly:
    n = len(entries)
    if n == 0:
        return GradedPoly.one(chart)
    if n == 1:
        return entries[0][0]
    out = GradedPoly.zero(chart)
    for j in range(n):
        minor = [row[:j] + row[j + 1 :] for row in entries[1:]]
        out = out + entries[0][j] * _det_even(minor, chart) * (-1) ** j
    return out


def _poly_inverse(u: GradedPoly, bound: int = 40) -> GradedPoly:
    """Inverse of c(1 + n) with c a nonzero constant and n nilpotent."""
    c = u.constant_term()
    if c == 0:
        raise CoordMapError("element has no invertible body")
    n = u * (Fraction(1) / c) - 1
    out = GradedPoly.one(u.chart)
    power = GradedPoly.one(u.chart)
    for _ in range(bound):
        power = power * (-n)
        if power.is_zero():
            break
        out = out + power
    else:
        raise CoordMapError("inverse series failed to terminate")
    return out * (Fraction(1) / c)


def _log1p(n: GradedPoly, bound: int = 40) -> GradedPoly:
    """log(1 + n) for nilpotent n, exact terminating series."""
    out = GradedPoly.zero(n.chart)
    power = GradedPoly.one(n.chart)
    for k in range(1, bound + 1):
        power = power * n
        if power.is_zero():
            return out
        out = out + power * Fraction((-1) ** (k + 1), k)
    raise CoordMapError("log series failed to terminate: non-nilpotent part")


def berezinian(cmap: CoordMap) -> GradedPoly:
    """The superdeterminant of the Jacobi matrix, in old coordinates."""
    chart = cmap.chart
    J = cmap.jacobian()
    ev, od = chart.even, chart.odd
    A = [[J[(ap, a)] for a in ev] for ap in ev]
    B = [[J[(ap, a)] for a in od] for ap in ev]
    C = [[J[(ap, a)] for a in ev] for ap in od]
    Dm = [[J[(ap, a)] for a in od] for ap in od]
    if not od:
        return _det_even(A, chart)
    detD = _det_even(Dm, chart)
    if not ev:
        return _poly_inverse(detD)
    # D^{-1} via adjugate over the even subalgebra
    q = len(od)
    invdet = _poly_inverse(detD)
    Dinv = [[GradedPoly.zero(chart) for _ in range(q)] for _ in range(q)]
    for i in range(q):
        for j in range(q):
            minor = [
                [Dm[r][c] for c in range(q) if c != i]
                for r in range(q)
                if r != j
            ]
            Dinv[i][j] = _det_even(minor, chart) * (-1) ** (i + j) * invdet
    # A - B D^{-1} C (entries even, B/C odd: B D^{-1} C entries even)
    m = len(ev)
    top = [[A[i][j] for j in range(m)] for i in range(m)]
    for i in range(m):
        for j in range(m):
            acc = GradedPoly.zero(chart)
            for k in range(q):
                for l in range(q):
                    acc = acc + B[i][k] * Dinv[k][l] * C[l][j]
            top[i][j] = top[i][j] - acc
    return _det_even(top, chart) * _poly_inverse(detD)


def log_berezinian(cmap: CoordMap) -> GradedPoly:
    """log of the Berezinian, normalized by dropping the constant log of the
    body (which never survives differentiation); in old coordinates."""
    ber = berezinian(cmap)
    c = ber.constant_term()
    if c == 0:
        raise CoordMapError("Berezinian has no invertible body")
    return _log1p(ber * (Fraction(1) / c) - 1)


def transform_op(D: DiffOp, cmap: CoordMap) -> DiffOp:
    """Express an operator (or pencil) in the new coordinates.  Coefficients
    involving W pick up the density conjugation by the Berezinian factor."""
    chart = D.chart
    order = D.order()
    if order is None:
        return D
    # slice by W powers and transform each slice at function level
    maxw = max((k for wp in D.terms.values() for k in wp), default=0)
    out = DiffOp.zero(chart)
    for k in range(maxw + 1):
        terms: dict = {}
        for key, wp in D.terms.items():
            if k in wp:
                terms[key] = {0: wp[k]}
        slice_op = DiffOp(chart, terms)
        if slice_op.is_zero():
            continue
        moved = op_from_action(
            chart, lambda f: cmap.push(slice_op.apply_poly(cmap.pull(f))), order
        )
        out = out + DiffOp.weight(chart) ** k * moved
    # density correction: conjugate by exp(W log Ber'), exact and terminating
    v = cmap.push(log_berezinian(cmap))
    if v.is_zero():
        return out
    U = DiffOp.weight(chart) * DiffOp.mult(v)
    conj = out
    term = out
    k = 0
    bound = order + 1
    while True:
        k += 1
        term = commutator(term, U) * Fraction(1, k)
        if term.is_zero():
            break
        if k > bound:
            raise RuntimeError("density conjugation failed to terminate")
        conj = conj + term
    return conj


def transform_logvol(sigma, cmap: CoordMap) -> GradedPoly:
    """The log-volume in new coordinates: sigma' = sigma o x(x') - log Ber
    (additive constants dropped)."""
    sigma = _as_sigma(sigma)
    return cmap.push(sigma - log_berezinian(cmap))


def transform_smatrix(S: SMatrix, chart: Chart, cmap: CoordMap) -> SMatrix:
    """Tensorial transform of S through the bracket on the new coordinate
    functions."""
    out: SMatrix = {}
    for a in chart.names:
        for b in chart.names:
            v = matrix_bracket(S, chart, cmap.fwd[b], cmap.fwd[a])
            v = cmap.push(v) * _sym_sign(chart, a, b)
            if not v.is_zero():
                out[(a, b)] = v
    return out


def transform_gamma(S: SMatrix, gamma: GVector, chart: Chart, cmap: CoordMap) -> GVector:
    """gamma^{a'} = (gamma^a + S^{ab} d_b log J) dx^{a'}/dx^a, expressed in
    new coordinates."""
    lnJ = log_berezinian(cmap)
    corrected: GVector = {}
    for a in chart.names:
        acc = gamma.get(a, GradedPoly.zero(chart))
        for b in chart.names:
            s = S.get((a, b))
            if s is not None:
                acc = acc + s * partial(b, lnJ)
        corrected[a] = acc
    J = cmap.jacobian()
    out: GVector = {}
    for ap in chart.names:
        acc = GradedPoly.zero(chart)
        for a in chart.names:
            acc = acc + corrected[a] * J[(ap, a)]
        acc = cmap.push(acc)
        if not acc.is_zero():
            out[ap] = acc
    return out


def transform_data(data: VBracketData, cmap: CoordMap) -> VBracketData:
    """Transform bracket data: S tensorially, gamma by its explicit law, and
    theta (whose law involves third derivatives) through the canonical pencil
    round trip."""
    S2 = transform_smatrix(data.S, data.chart, cmap)
    g2 = transform_gamma(data.S, data.gamma, data.chart, cmap)
    P2 = transform_op(canonical_pencil(data), cmap)
    t = _unit_density(data.chart)
    theta2 = pencil_bracket(P2, t, t).component(2)
    return VBracketData(data.chart, data.eps, S2, g2, theta2)
