"""Closed-form bounds and thresholds as explicit functions of ``(t, p, u)``.

Every evaluator is a plug-in machine: constants that the theory only
asserts to exist (``kappa``, chaining constants, ``LL``, ...) are inputs of
``BoundParams`` with default 1. Derived constants (``Lambda``, the
``prox`` constants, ``Pi``) are computed from the model constants unless
overridden by name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigurationError, ParameterError
from .estimators import Kernel, bias_bound, lower_integer
from .model import StationaryLaw, compute_constants

E = math.e
DEFAULT_C_BAR = 2.0

DERIVED = ("Lambda", "Lambda_bar_prox", "Gamma_bar_prox", "Gamma_prox", "Pi1", "Pi2", "Pi1_b", "Pi2_b")


def bdg_constant(c_bar=DEFAULT_C_BAR) -> float:
    """``c = max(1, sqrt(2) c_bar)``."""
    return max(1.0, math.sqrt(2.0) * float(c_bar))


def _sup_exp_power(gamma, power):
    # sup_{x >= 0} exp(-4 gamma x) x^power, attained at x = power / (4 gamma)
    if power == 0:
        return 1.0
    x = power / (4.0 * gamma)
    return math.exp(-4.0 * gamma * x) * x ** power


@dataclass(frozen=True)
class BoundParams:
    """Model, class and symbolic constants entering the bounds.

    Attributes
    ----------
    c_bdg : float
        ``c = max(1, sqrt(2) c_bar)``.
    C_mo : float
        Moment constant, ``||X_0||_p <= C_mo p``.
    C_growth, A, gamma : float
        Drift class constants.
    lam : float
        ``lambda > 1`` in ``Lambda = lambda e (4 C (1 + C_mo) + c)``.
    L_reg : float
        Regularity constant, bound on ``|rho_b|`` and ``|rho_b'|``.
    K_ratio : float
    C_b : float
        Normalizing constant of the invariant density.
    sup_x2eta_rho : float
        ``sup_x |x|^{2 eta} rho_b(x)``.
    S_len, V_rad, U_env, vc_A, vc_v : float
        Function class constants.
    eta, C_env : float
        Envelope ``|b0(x)| <= C_env (1 + |x|^eta)``.
    C_alpha_map : dict
        Chaining constants keyed by ``"2/3"``, ``"1"``, ``"2"``.
    kappa, LL, L_tilde, L_tilde0, zeta, nu1, nu2, Lambda0, Lambda1 : float
        Symbolic constants, default 1.
    overrides : dict
        Values replacing derived constants, by name (see ``DERIVED``).
    """

    c_bdg: float = bdg_constant()
    C_mo: float = 1.0
    C_growth: float = 1.0
    A: float = 1.0
    gamma: float = 1.0
    lam: float = 2.0
    L_reg: float = 1.0
    K_ratio: float = 1.0
    C_b: float = 1.0
    sup_x2eta_rho: float = 1.0
    S_len: float = 1.0
    V_rad: float = 1.0
    U_env: float = 1.0
    vc_A: float = 20.0
    vc_v: float = 2.0
    eta: float = 0.0
    C_env: float = 1.0
    C_alpha_map: dict = field(default_factory=lambda: {"2/3": 1.0, "1": 1.0, "2": 1.0})
    kappa: float = 1.0
    LL: float = 1.0
    L_tilde: float = 1.0
    L_tilde0: float = 1.0
    zeta: float = 1.0
    nu1: float = 1.0
    nu2: float = 1.0
    Lambda0: float = 1.0
    Lambda1: float = 1.0
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.c_bdg >= 1:
            raise ConfigurationError("c_bdg must be at least 1")
        if not self.C_growth >= 1:
            raise ConfigurationError("C_growth must be at least 1")
        if not self.lam > 1:
            raise ConfigurationError("lambda must exceed 1")
        for name in ("C_mo", "A", "gamma", "L_reg", "K_ratio", "C_b", "S_len", "V_rad", "U_env",
                     "kappa", "LL", "L_tilde", "L_tilde0", "zeta", "nu1", "nu2", "Lambda0", "Lambda1"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.eta < 0 or not self.C_env > 0:
            raise ConfigurationError("need eta >= 0 and C_env > 0")
        unknown = set(self.overrides) - set(DERIVED)
        if unknown:
            raise ConfigurationError(f"unknown overrides {sorted(unknown)}")
        lhs = max(self.S_len, E * self.C_mo)
        rhs = self.lam * E * (4.0 * self.C_growth * (1.0 + self.C_mo) + self.c_bdg)
        if not lhs < rhs:
            raise ConfigurationError(
                f"lambda={self.lam} is not admissible: max(S, e C_mo)={lhs:.6g} >= {rhs:.6g}"
            )

    # --- construction helpers

    @classmethod
    def from_law(cls, law: StationaryLaw, *, eta=0.0, fc=None, p_max=32, **kw) -> "BoundParams":
        """Fill model constants from an invariant law, class constants from ``fc``."""
        mc = compute_constants(law, p_max)
        d = law.drift
        base = dict(
            C_mo=mc.C_mo, C_growth=d.C_growth, A=d.A, gamma=d.gamma, L_reg=mc.density_bound,
            K_ratio=mc.K_ratio, C_b=law.C_b, sup_x2eta_rho=law.sup_weighted_density(2.0 * eta), eta=eta,
        )
        if fc is not None:
            base.update(S_len=fc.S_len, V_rad=fc.V_rad, U_env=fc.U_env, vc_A=fc.vc_A, vc_v=fc.vc_v)
        base.update(kw)
        return cls(**base)

    @classmethod
    def from_dict(cls, data: dict) -> "BoundParams":
        names = {f.name for f in fields(cls)} | {"c_bar"}
        unknown = set(data) - names
        if unknown:
            raise ConfigurationError(f"unknown bound parameters {sorted(unknown)}")
        data = dict(data)
        if "c_bar" in data:
            if "c_bdg" in data:
                raise ConfigurationError("give c_bar or c_bdg, not both")
            data["c_bdg"] = bdg_constant(data.pop("c_bar"))
        return cls(**data)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def with_values(self, **kw) -> "BoundParams":
        return replace(self, **kw)

    def C_alpha(self, alpha) -> float:
        key = {2.0 / 3.0: "2/3", 1.0: "1", 2.0: "2"}
        for a, k in key.items():
            if math.isclose(float(alpha), a, rel_tol=1e-12):
                return float(self.C_alpha_map.get(k, 1.0))
        raise ParameterError(f"no chaining constant for alpha={alpha}")

    # --- derived constants

    def _over(self, name, compute):
        if name in self.overrides:
            return float(self.overrides[name])
        return compute()

    @property
    def Lambda(self) -> float:
        """``lambda e (4 C (1 + C_mo) + c)``; ``Lambda(t)`` is taken as ``Lambda t``."""
        return self._over(
            "Lambda", lambda: self.lam * E * (4.0 * self.C_growth * (1.0 + self.C_mo) + self.c_bdg)
        )

    def _expo(self, power):
        return math.exp(power * self.C_growth * (2.0 * self.A + self.A ** 2))

    @property
    def Lambda_bar_prox(self) -> float:
        def compute():
            C, L, K, s = self.C_env, self.L_reg, self.K_ratio, self.sup_x2eta_rho
            first = 16.0 * C ** 2 * L * self.C_b ** 2 * self._expo(2.0) * (1.0 + s)
            second = 4.0 * C ** 2 * max(2.0 ** (2.0 * self.eta), 2.0) * (
                2.0 * K ** 2 * L * (1.0 + s) + _sup_exp_power(self.gamma, 2.0 * self.eta) + 1.0
            )
            return math.sqrt(first + second)

        return self._over("Lambda_bar_prox", compute)

    @property
    def Gamma_bar_prox(self) -> float:
        def compute():
            K, L = self.K_ratio, self.L_reg
            inner = (
                0.25 * K ** 2 * L ** 2
                + 0.5 * self.C_growth * (1.0 + _sup_exp_power(self.gamma, 1.0))
                + L ** 2 * self.C_b ** 2 * self._expo(2.0)
            )
            return math.sqrt(8.0 * inner)

        return self._over("Gamma_bar_prox", compute)

    @property
    def Gamma_prox(self) -> float:
        def compute():
            C, A, K, L = self.C_growth, self.A, self.K_ratio, self.L_reg
            return 4.0 * self.U_env * self.C_mo * (
                2.0 * K * (2.0 * L + C * (1.0 + A))
                + 2.0 * self.C_b * self._expo(1.0) * (A * C * (1.0 + A) * L + 0.5 * L)
                + 1.0
            )

        return self._over("Gamma_prox", compute)

    @property
    def Pi1(self) -> float:
        return self._over("Pi1", lambda: math.sqrt(2.0) * self.c_bdg * self.Lambda_bar_prox)

    @property
    def Pi2(self) -> float:
        return self._over("Pi2", lambda: 4.0 * max(self.C_mo, 1.0) * self.U_env * self.Lambda_bar_prox)

    @property
    def Pi1_b(self) -> float:
        return self._over("Pi1_b", lambda: 2.0 ** 1.5 * self.c_bdg * self.Lambda_bar_prox * (1.0 + self.C_mo))

    @property
    def Pi2_b(self) -> float:
        return self._over("Pi2_b", lambda: self.Gamma_prox)

    def exp_tail(self, t) -> float:
        """``exp(-Lambda t / (2 e C_mo))``."""
        return math.exp(-self.Lambda * t / (2.0 * E * self.C_mo))


def _at_least_one(**values):
    for name, v in values.items():
        if not v >= 1:
            raise ParameterError(f"{name} must be at least 1")


# --------------------------------------------------------------------------
# generic tools


def moment_to_tail(f, u: float):
    """``(e f(u), exp(-u))``: if ``||Y||_p <= f(p)`` for all ``p >= 1`` then
    ``P(|Y| >= e f(u)) <= exp(-u)``."""
    _at_least_one(u=u)
    value = float(f(u))
    if not value > 0:
        raise ParameterError("f must be positive")
    return E * value, math.exp(-u)


def diffusion_phis(bp: BoundParams, t: float):
    """``phi_1(t) = 4 C (1 + C_mo) t`` and ``phi_2(t) = sqrt(t)``."""
    return 4.0 * bp.C_growth * (1.0 + bp.C_mo) * t, math.sqrt(t)


def maximal_inequality_threshold(bp: BoundParams, phi1_t: float, phi2_t: float, u: float) -> float:
    """``e (u phi_1 + c sqrt(u) phi_2)``, exceeded by ``max|X_s|`` w.p. at most ``e^{-u}``."""
    _at_least_one(u=u)
    return E * (u * phi1_t + bp.c_bdg * math.sqrt(u) * phi2_t)


# --------------------------------------------------------------------------
# local time


def localtime_general_bound(bp: BoundParams, phi1_t, phi2_t, p) -> float:
    """``kappa (p phi1 + sqrt(p) phi2 + (sqrt(phi1) + sqrt(phi2)) log(2 p Lambda(t)))``
    with ``Lambda(t) = e (phi1 + c phi2)``."""
    _at_least_one(p=p)
    lam_t = E * (phi1_t + bp.c_bdg * phi2_t)
    return bp.kappa * (
        p * phi1_t + math.sqrt(p) * phi2_t + (math.sqrt(phi1_t) + math.sqrt(phi2_t)) * math.log(2.0 * p * lam_t)
    )


def localtime_sup_bound(bp: BoundParams, t: float, p: float) -> float:
    """``kappa (p t + sqrt(p t) + sqrt(t) log t)``."""
    _at_least_one(t=t, p=p)
    return bp.kappa * (p * t + math.sqrt(p * t) + math.sqrt(t) * math.log(t))


def localtime_sup_tail(bp: BoundParams, t: float, u: float):
    """``(e kappa (u t + sqrt(u t) + sqrt(t) log t), exp(-u))``."""
    _at_least_one(t=t, u=u)
    return E * localtime_sup_bound(bp, t, u), math.exp(-u)


def level_metric_scale(bp: BoundParams, phi1_t, phi2_t) -> float:
    """``d_1(t) = e (c sqrt(phi1) + c^{3/2} sqrt(phi2))``."""
    c = bp.c_bdg
    return E * (c * math.sqrt(phi1_t) + c ** 1.5 * math.sqrt(phi2_t))


# --------------------------------------------------------------------------
# martingale approximation moments


def moment_bounds_general(bp: BoundParams, t: float, p: float, f_l2: float):
    """Bounds on ``||M_t^f||_p`` and ``||sup_f |R_t^f| ||_p`` for a general ``b0``."""
    _at_least_one(p=p)
    eta, C_mo = bp.eta, bp.C_mo
    M = ((2.0 * p) ** (eta + 0.5) * math.sqrt(t * bp.S_len) * f_l2 * bp.c_bdg
         * (1.0 + (C_mo * eta) ** eta) * bp.Lambda_bar_prox)
    R = p ** (eta + 1.0) * bp.S_len * 4.0 * max(C_mo ** (eta + 1.0), 1.0) * (eta + 1.0) ** eta * bp.Lambda_bar_prox
    return M, R


def moment_bounds_drift(bp: BoundParams, t: float, p: float, f_l2: float):
    """The same bounds in the case ``b0 = b``."""
    _at_least_one(p=p)
    M = p * math.sqrt(t) * bp.Gamma_bar_prox * f_l2 * math.sqrt(2.0) * bp.c_bdg * math.sqrt(
        1.0 + bp.S_len + bp.C_mo
    )
    return M, p * bp.Gamma_prox


def uniform_moment_bound(bp: BoundParams, t, p, entropy_bound, Psi1, Psi2, alpha, Lambda_t) -> float:
    """Uniform moment bound for a translation invariant class.

    ``3 C_alpha E + 6 Psi1 (2p)^{1/alpha} V + 2 Psi2 p / sqrt(t)
    + sqrt(t) C U (1 + 2 eta C_mo)^eta exp(-Lambda(t) / (2 e C_mo))``, where
    ``entropy_bound`` bounds every ``E(F_k, e Psi1 ||.||_2, alpha)``.
    """
    _at_least_one(t=t, p=p)
    tail = math.exp(-Lambda_t / (2.0 * E * bp.C_mo))
    return (
        3.0 * bp.C_alpha(alpha) * entropy_bound
        + 6.0 * Psi1 * (2.0 * p) ** (1.0 / alpha) * bp.V_rad
        + 2.0 * Psi2 * p / math.sqrt(t)
        + math.sqrt(t) * bp.C_env * bp.U_env * (1.0 + 2.0 * bp.eta * bp.C_mo) ** bp.eta * tail
    )


# --------------------------------------------------------------------------
# uniform concentration


def _class_log(bp: BoundParams, t, u):
    return math.log(bp.vc_A / bp.V_rad * math.sqrt(bp.S_len + u * bp.Lambda * t))


def phi_t(bp: BoundParams, t: float, u: float) -> float:
    """Tail envelope of the empirical process with ``b0 = 1``."""
    _at_least_one(t=t, u=u)
    V, S, L = bp.V_rad, bp.S_len, _class_log(bp, t, u)
    chain = 12.0 * bp.C_alpha(2.0) * E * bp.Pi1 * math.sqrt(bp.vc_v * L) + 6.0 * bp.Pi1 * math.sqrt(2.0 * u)
    return (
        V * math.sqrt(S) * chain
        + 2.0 * S * bp.Pi2 * u / math.sqrt(t)
        + math.sqrt(t) * bp.C_env * bp.U_env * bp.exp_tail(t)
    )


def phi_t_b(bp: BoundParams, t: float, u: float) -> float:
    """Tail envelope of the empirical process with ``b0 = b``."""
    _at_least_one(t=t, u=u)
    V, S, L, v = bp.V_rad, bp.S_len, _class_log(bp, t, u), bp.vc_v
    chain = 3.0 * bp.C_alpha(2.0 / 3.0) * E * bp.Pi1_b * (
        2.0 * (v * L) ** 1.5 + 6.0 * v ** 1.5 * math.sqrt(L)
    ) + 6.0 * bp.Pi1_b * (2.0 * u) ** 1.5
    return (
        V * math.sqrt(S) * chain
        + 2.0 * bp.Pi2_b * u / math.sqrt(t)
        + math.sqrt(t) * bp.C_env * bp.U_env * (1.0 + 2.0 * bp.C_mo) * bp.exp_tail(t)
    )


def stochint_bound(bp: BoundParams, t: float, p: float) -> float:
    """``LL (V (1 + log(1/V) + log t + p) + p / sqrt(t) + sqrt(t) exp(-Lambda t/(2 e C_mo)))``."""
    _at_least_one(t=t, p=p)
    V = bp.V_rad
    return bp.LL * (
        V * (1.0 + math.log(1.0 / V) + math.log(t) + p) + p / math.sqrt(t) + math.sqrt(t) * bp.exp_tail(t)
    )


def stochint_bound_improved(bp: BoundParams, t: float, p: float) -> float:
    """The sharper-in-support moment bound for stochastic integral processes."""
    _at_least_one(t=t, p=p)
    V, S, L = bp.V_rad, bp.S_len, _class_log(bp, t, p)
    q = t ** 0.25
    return bp.L_tilde * (
        V * math.sqrt(S) * (L ** 1.5 + L ** 0.5 + p ** 1.5)
        + p / math.sqrt(t)
        + math.sqrt(t) * math.exp(-bp.L_tilde0 * t)
        + V * L ** 0.5
        + V / q * (1.0 + L)
        + V * (math.sqrt(p) + p / q)
    )


# --------------------------------------------------------------------------
# density estimation


def csi_risk_bound(bp: BoundParams, t, p, h, beta, L_holder, kernel: Kernel) -> float:
    """Sup-norm risk bound of the kernel density estimator."""
    _at_least_one(p=p)
    if not 0 < h < 1:
        raise ParameterError("h must lie in (0, 1)")
    if not t > 0:
        raise ParameterError("t must be positive")
    stoch = bp.nu1 / math.sqrt(t) * (
        1.0 + math.sqrt(math.log(1.0 / math.sqrt(h))) + math.sqrt(max(math.log(p * t), 0.0)) + math.sqrt(p)
    )
    return stoch + bp.nu2 * p / t + bp.exp_tail(t) / h + bias_bound(kernel, h, beta, L_holder)


def centlt_bounds(bp: BoundParams, t, p, u):
    """Moment bound on ``||L_t/t - rho_b||_inf`` and tail threshold for ``||L_t - t rho_b||_inf``."""
    _at_least_one(t=t, p=p, u=u)
    tail = bp.exp_tail(t)
    moment = bp.zeta * (p / t + (1.0 + math.sqrt(p) + math.sqrt(math.log(t))) / math.sqrt(t) + t * tail)
    threshold = E * bp.zeta * (
        math.sqrt(t) * (1.0 + math.sqrt(math.log(u * t)) + math.sqrt(u)) + u + t ** 2 * tail
    )
    return moment, threshold


def cath_threshold(bp: BoundParams, t, h, kernel: Kernel, beta, L_holder):
    """Smallest admissible ``lambda`` and the tail ``lambda -> exp(-Lambda1 lambda / sqrt(h))``
    for ``sqrt(t) ||rho_{t,K}(h) - rho_t||_inf``."""
    if not 0 < h < 1:
        raise ParameterError("h must lie in (0, 1)")
    if h < 1.0 / t:
        raise ParameterError("h must be at least 1/t")
    calV = kernel.sqrt_abs_moment()
    sh = math.sqrt(h)
    bias = math.sqrt(t) * h ** beta * L_holder / (2.0 * math.factorial(lower_integer(beta))) * kernel.abs_beta_moment(beta)
    lam_min = 8.0 * bp.Lambda0 * (
        sh * calV * E * bp.LL * (1.0 + math.log(1.0 / (sh * calV)) + math.log(t))
        + E * bp.LL * math.sqrt(t) * bp.exp_tail(t)
        + bias
    )
    Lambda1 = bp.Lambda1

    def tail(lam):
        return math.exp(-Lambda1 * lam / sh)

    return lam_min, tail


# --------------------------------------------------------------------------
# named formulas for the command line


def _needs(at, *names):
    missing = [n for n in names if n not in at]
    if missing:
        raise ConfigurationError(f"missing inputs {missing}")
    return [float(at[n]) for n in names]


FORMULAS = {
    "moment_to_tail_identity": lambda bp, at: moment_to_tail(lambda p: p, *_needs(at, "u"))[0],
    "maximal_inequality": lambda bp, at: maximal_inequality_threshold(
        bp, *diffusion_phis(bp, _needs(at, "t")[0]), *_needs(at, "u")
    ),
    "localtime_sup_bound": lambda bp, at: localtime_sup_bound(bp, *_needs(at, "t", "p")),
    "localtime_sup_tail": lambda bp, at: localtime_sup_tail(bp, *_needs(at, "t", "u"))[0],
    "phi_t": lambda bp, at: phi_t(bp, *_needs(at, "t", "u")),
    "phi_t_b": lambda bp, at: phi_t_b(bp, *_needs(at, "t", "u")),
    "stochint": lambda bp, at: stochint_bound(bp, *_needs(at, "t", "p")),
    "stochint_improved": lambda bp, at: stochint_bound_improved(bp, *_needs(at, "t", "p")),
    "centlt_moment": lambda bp, at: centlt_bounds(bp, *_needs(at, "t", "p", "u"))[0],
    "centlt_tail": lambda bp, at: centlt_bounds(bp, *_needs(at, "t", "p", "u"))[1],
    "Lambda": lambda bp, at: bp.Lambda,
    "Lambda_bar_prox": lambda bp, at: bp.Lambda_bar_prox,
    "Gamma_bar_prox": lambda bp, at: bp.Gamma_bar_prox,
    "Gamma_prox": lambda bp, at: bp.Gamma_prox,
}


def evaluate_formula(name: str, bp: BoundParams, at: dict) -> float:
    try:
        fn = FORMULAS[name]
    except KeyError:
        raise ConfigurationError(f"unknown formula {name!r}; known: {sorted(FORMULAS)}") from None
    return float(fn(bp, at))
