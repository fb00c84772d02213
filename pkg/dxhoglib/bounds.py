"""Classical communication bounds for DXHOG.

Lower bound: with m bits of one-way communication no classical protocol exceeds an XEB value of
eps(m, a), a closed form in (A, B), the Frobenius/operator norm bounds of the measurement
ensemble, minimised over the free parameter a > 1.

Upper bound: the shared-codebook protocol (2^m random states, Alice names the closest, Bob
outputs its heaviest outcome) reaches (H_N - 1)(1 - N/(N-1) I) with
I = int_0^1 (1 - u^(N-1))^(2^m) du, relaxed to I = int_0^1 exp(-2^m u^(N-1)) du.
"""

import csv
import math
from abc import ABC, abstractmethod
from collections.abc import Callable, Iterable, Sequence
from dataclasses import astuple, dataclass, fields
from enum import StrEnum, auto
from typing import TextIO

import numpy as np
from scipy import integrate, optimize, special

from dxhoglib.exceptions import BoundUnreachableError
from dxhoglib.util.logger import get_logger

LN2 = math.log(2.0)
EULER_GAMMA = 0.5772156649015329
HARMONIC_DIRECT_MAX = 1 << 13
# beyond this exponent the regularised incomplete gamma equals 1 to machine precision
UB_SATURATION_LOG = 40.0
UB_SEARCH_MAX = 1 << 40

logger = get_logger("bounds")

__ENSEMBLE__: dict["EnsembleName", type["Ensemble"]] = {}


class EnsembleName(StrEnum):
    PRODUCT_CLIFFORD = auto()
    CLIFFORD = auto()
    DESIGN = auto()
    HAAR = auto()


def register_ensemble(name: EnsembleName):
    def wrapper(cls):
        if __ENSEMBLE__.get(name):
            raise NameError(f"Name {name} is already registered!")
        __ENSEMBLE__[name] = cls
        return cls

    return wrapper


def get_ensemble(name: EnsembleName, **kwargs) -> "Ensemble":
    if __ENSEMBLE__.get(name) is None:
        raise NameError(f"Name {name} is not defined!")
    return __ENSEMBLE__[name](**kwargs)


@dataclass(frozen=True, kw_only=True)
class NormBounds:
    A: float
    B: float
    t_opt: int | None = None

    def __post_init__(self) -> None:
        if not (self.A > 0.0 and self.B > 0.0):
            raise ValueError(f"Norm bounds must be positive, got A={self.A}, B={self.B}.")


def harmonic(num: int) -> float:
    """num-th harmonic number."""
    if num <= HARMONIC_DIRECT_MAX:
        return math.fsum(1.0 / k for k in range(1, num + 1))
    return math.log(num) + EULER_GAMMA + 1.0 / (2 * num) - 1.0 / (12 * num**2)


def _clifford_frobenius(n: int) -> float:
    return math.sqrt(2.0 / (2**n + 1))


def _min_over_moments(
    log_moment: Callable[[int], float], t_values: Iterable[int]
) -> tuple[float, int]:
    """Minimise exp(log_moment(t) / t) over t; returns (minimum, minimising t)."""
    best_t, best_log = 1, math.inf
    for t in t_values:
        value = log_moment(t) / t
        if value < best_log:
            best_t, best_log = t, value
    return math.exp(best_log), best_t


class Ensemble(ABC):
    name: EnsembleName

    @abstractmethod
    def norm_bounds(self, n: int) -> NormBounds:
        raise NotImplementedError

    @property
    def label(self) -> str:
        return str(self.name)


@register_ensemble(name=EnsembleName.PRODUCT_CLIFFORD)
@dataclass(frozen=True, kw_only=True)
class ProductCliffordEnsemble(Ensemble):
    name = EnsembleName.PRODUCT_CLIFFORD

    def norm_bounds(self, n: int) -> NormBounds:
        norm = (2.0 / 3.0) ** (n / 2)
        return NormBounds(A=norm, B=norm)


@register_ensemble(name=EnsembleName.CLIFFORD)
@dataclass(frozen=True, kw_only=True)
class CliffordEnsemble(Ensemble):
    name = EnsembleName.CLIFFORD

    def norm_bounds(self, n: int) -> NormBounds:
        def log_moment(t: int) -> float:
            return math.fsum(
                math.log(2.0**i + 1.0) - math.log(2.0**n + 2.0**i) for i in range(t - 1)
            )

        op_norm, t_opt = _min_over_moments(log_moment, range(1, n + 1))
        return NormBounds(A=_clifford_frobenius(n), B=op_norm, t_opt=t_opt)


@register_ensemble(name=EnsembleName.DESIGN)
@dataclass(frozen=True, kw_only=True)
class DesignEnsemble(Ensemble):
    """delta-approximate unitary t_max-design, assumed Clifford-invariant for the A bound."""

    name = EnsembleName.DESIGN
    t_max: int = 1
    delta: float = 0.0

    def __post_init__(self) -> None:
        if self.t_max < 1:
            raise ValueError(f"t_max must be >= 1, got {self.t_max}.")
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}.")

    @property
    def label(self) -> str:
        return f"design:{self.t_max}:{self.delta:g}"

    def norm_bounds(self, n: int) -> NormBounds:
        def log_moment(t: int) -> float:
            return (
                math.log1p(self.delta)
                + math.lgamma(t + 1)
                - math.fsum(math.log(2.0**n + j) for j in range(1, t))
            )

        op_norm, t_opt = _min_over_moments(log_moment, range(1, self.t_max + 1))
        return NormBounds(A=_clifford_frobenius(n), B=op_norm, t_opt=t_opt)


@register_ensemble(name=EnsembleName.HAAR)
@dataclass(frozen=True, kw_only=True)
class HaarEnsemble(Ensemble):
    name = EnsembleName.HAAR

    def norm_bounds(self, n: int) -> NormBounds:
        dim = 1 << n
        return NormBounds(A=_clifford_frobenius(n), B=harmonic(dim) / dim)


def norm_bounds(ensemble: Ensemble, n: int) -> NormBounds:
    if n < 1:
        raise ValueError(f"Qubit count must be >= 1, got {n}.")
    return ensemble.norm_bounds(n)


def gamma(a: float) -> float:
    if a <= 1.0:
        raise ValueError(f"The free parameter a must exceed 1, got {a}.")
    return a * math.exp(1.0 / a) / (a + 1.0) + 2.0 / (math.e * (a**3 - a)) - 1.0


def threshold_m(a: float, bounds: NormBounds) -> float:
    """Communication at which the lower bound switches from its Gaussian to its linear branch."""
    return gamma(a) * bounds.A**2 / (LN2 * bounds.B**2)


def t_star(m: float, a: float, bounds: NormBounds) -> float:
    g = gamma(a)
    if m <= threshold_m(a, bounds):
        return math.sqrt(LN2 * m * 4.0 * g * a**2 * bounds.A**2)
    return a * bounds.B * (LN2 * m + g * bounds.A**2 / bounds.B**2)


def lb_eps(n: int, m: float, a: float, bounds: NormBounds) -> float:
    """Largest XEB value reachable by any classical protocol sending m bits, for a fixed a.

    Below the branch point the difference 2^m (erf(x2) - erf(x1)) is evaluated through the scaled
    complementary error function, with x1 = sqrt(m ln 2) so that 2^m exp(-x1^2) = 1.

    Args:
        n (int): Qubit count (the norm bounds carry all n-dependence).
        m (float): Bits of communication, > 0.
        a (float): Free parameter, > 1.
        bounds (NormBounds): Norm bounds of the measurement ensemble at n qubits.

    Returns:
        float: Upper bound on the achievable XEB.
    """
    if m <= 0:
        raise ValueError(f"Communication must be positive, got m={m}.")
    g = gamma(a)
    A, B = bounds.A, bounds.B
    x2_sq = g * A**2 / B**2
    m_ln2 = m * LN2

    if m_ln2 > x2_sq:
        return a * B * (m_ln2 + x2_sq) + a * B

    x1 = math.sqrt(m_ln2)
    x2 = math.sqrt(x2_sq)
    decay = math.exp(m_ln2 - x2_sq)
    t = 2.0 * a * A * math.sqrt(g) * x1
    erf_term = math.sqrt(math.pi * g) * a * A * (special.erfcx(x1) - decay * special.erfcx(x2))
    return float(t + erf_term + a * B * decay)


def lb_eps_opt(
    n: int, m: float, bounds: NormBounds, grid_size: int = 64, a_max: float = 64.0
) -> tuple[float, float]:
    """Minimise lb_eps over a in (1, a_max].

    A log-spaced grid locates the basin, then a bounded Brent search refines between the grid
    neighbours of the best point.

    Returns:
        tuple[float, float]: (minimal eps, minimising a).
    """
    grid = 1.0 + np.geomspace(1e-6, a_max - 1.0, grid_size)
    values = np.array([lb_eps(n, m, float(a), bounds) for a in grid])
    best = int(np.argmin(values))
    lo, hi = grid[max(best - 1, 0)], grid[min(best + 1, grid_size - 1)]

    result = optimize.minimize_scalar(
        lambda a: lb_eps(n, m, float(a), bounds),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-10},
    )
    if result.success and result.fun < values[best]:
        return float(result.fun), float(result.x)
    return float(values[best]), float(grid[best])


def lb_min_m(n: int, ensemble: Ensemble, target_eps: float) -> int:
    """Smallest m with lb_eps_opt(n, m) >= target_eps; fewer bits cannot reach target_eps."""
    if target_eps <= 0:
        raise ValueError(f"Target XEB must be positive, got {target_eps}.")
    bounds = norm_bounds(ensemble, n)

    def reaches(m: int) -> bool:
        return lb_eps_opt(n, m, bounds)[0] >= target_eps

    lo, hi = 1, 1 << (n + 2)
    if not reaches(hi):
        raise BoundUnreachableError(
            f"No m <= {hi} reaches eps={target_eps} for {ensemble.label} at n={n}."
        )
    if reaches(lo):
        return lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if reaches(mid):
            hi = mid
        else:
            lo = mid
    return hi


def tail_bound(t: float, a: float, A: float, B: float) -> float:
    """Bound on P(sum X_i >= t + sum mu_i) for independent exponentials X_i with means mu_i,
    given sum mu_i^2 <= A^2 and max mu_i <= B."""
    g = gamma(a)
    if t <= 2.0 * g * a * A**2 / B:
        return math.exp(-(t**2) / (4.0 * g * a**2 * A**2))
    return math.exp(-(t / (a * B) - g * A**2 / B**2))


def _ub_exponent(n: int) -> int:
    return (1 << n) - 1


def ub_integral(n: int, m: float) -> float:
    """int_0^1 exp(-2^m u^p) du with p = 2^n - 1, via the lower incomplete gamma function."""
    p = _ub_exponent(n)
    log_c = m * LN2
    lower = 1.0 if log_c > UB_SATURATION_LOG else float(special.gammainc(1.0 / p, math.exp(log_c)))
    return math.exp(special.gammaln(1.0 + 1.0 / p) - log_c / p) * lower


def ub_integral_quad(n: int, m: float) -> float:
    """Adaptive quadrature of the same integral, split where the integrand falls off."""
    p = _ub_exponent(n)
    c = 2.0**m
    knee = 2.0 ** (-m / p)
    value, _ = integrate.quad(
        lambda u: math.exp(-c * u**p),
        0.0,
        1.0,
        points=[knee] if knee < 1.0 else None,
        epsrel=1e-9,
        epsabs=0.0,
        limit=200,
    )
    return float(value)


def ub_integral_exact(n: int, m: float) -> float:
    """int_0^1 (1 - u^p)^(2^m) du, the unrelaxed order-statistic integral."""
    p = _ub_exponent(n)
    c = 2.0**m

    def integrand(u: float) -> float:
        up = u**p
        return 0.0 if up >= 1.0 else math.exp(c * math.log1p(-up))

    knee = 2.0 ** (-m / p)
    points = [knee] if knee < 1.0 else None
    value, _ = integrate.quad(integrand, 0.0, 1.0, points=points, epsrel=1e-10, limit=200)
    return float(value)


def _ub_from_integral(n: int, integral: float) -> float:
    dim = 1 << n
    return (harmonic(dim) - 1.0) * (1.0 - dim / (dim - 1.0) * integral)


def ub_eps(n: int, m: float) -> float:
    """XEB reached by the codebook protocol with m bits (relaxed integral, a valid lower bound)."""
    if m < 0:
        raise ValueError(f"Communication must be non-negative, got m={m}.")
    return _ub_from_integral(n, ub_integral(n, m))


def ub_eps_exact(n: int, m: float) -> float:
    """Expected XEB of the codebook protocol with m bits under Haar states and measurements."""
    if m < 0:
        raise ValueError(f"Communication must be non-negative, got m={m}.")
    return _ub_from_integral(n, ub_integral_exact(n, m))


def ub_min_m(n: int, target_eps: float) -> int:
    """Smallest m with ub_eps(n, m) >= target_eps; the codebook protocol reaches it with m bits."""
    asymptote = harmonic(1 << n) - 1.0
    if not 0 < target_eps < asymptote:
        raise BoundUnreachableError(
            f"Target eps={target_eps} outside (0, {asymptote:.10g}) for n={n}."
        )

    if ub_eps(n, 1) >= target_eps:
        return 1
    lo, hi = 1, 2
    while ub_eps(n, hi) < target_eps:
        if hi > UB_SEARCH_MAX:
            raise BoundUnreachableError(f"eps={target_eps} not reached below m={hi} at n={n}.")
        lo, hi = hi, 2 * hi
    # invariant: ub_eps(lo) < target <= ub_eps(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ub_eps(n, mid) >= target_eps:
            hi = mid
        else:
            lo = mid
    return hi


def hm_lb_bits(n: int, eps: float) -> float:
    """Best-known classical communication lower bound (bits) for noisy Hidden Matching."""
    return eps * (math.sqrt(2.0**n) - 1.0) / 2.0 - 1.0


@dataclass(frozen=True, kw_only=True)
class BoundRow:
    n: int
    ensemble: str
    m: int
    eps_lb_opt: float
    a_star: float
    eps_ub: float
    hm_bits: float

    def formatted(self) -> list[str]:
        return [f"{v:.10g}" if isinstance(v, float) else str(v) for v in astuple(self)]


def _row(n: int, ensemble: Ensemble, m: int, bounds: NormBounds, hm_eps: float | None) -> BoundRow:
    eps_lb, a_star = lb_eps_opt(n, m, bounds)
    eps_hm = min(eps_lb if hm_eps is None else hm_eps, 1.0)
    return BoundRow(
        n=n,
        ensemble=ensemble.label,
        m=m,
        eps_lb_opt=eps_lb,
        a_star=a_star,
        eps_ub=ub_eps(n, m),
        hm_bits=hm_lb_bits(n, eps_hm),
    )


def sweep_table(
    n_values: Sequence[int],
    ensembles: Sequence[Ensemble],
    eps: float | None = None,
    m_values: Sequence[int] | None = None,
) -> list[BoundRow]:
    """Bound table ordered by (n, ensemble, m).

    With `eps`, each row holds the minimal lower-bound communication for that XEB target. With
    `m_values`, each row evaluates the bounds at the given communication.
    """
    if (eps is None) == (m_values is None):
        raise ValueError("Give exactly one of eps or m_values.")

    rows = []
    for n in sorted(n_values):
        for ensemble in ensembles:
            bounds = norm_bounds(ensemble, n)
            if eps is not None:
                try:
                    m = lb_min_m(n, ensemble, eps)
                except BoundUnreachableError as err:
                    logger.warning("Skipping row: %s", err)
                    continue
                rows.append(_row(n, ensemble, m, bounds, hm_eps=eps))
            else:
                assert m_values is not None
                rows.extend(_row(n, ensemble, m, bounds, hm_eps=None) for m in sorted(m_values))
    return rows


def write_table(rows: Iterable[BoundRow], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow([f.name for f in fields(BoundRow)])
    for row in rows:
        writer.writerow(row.formatted())
