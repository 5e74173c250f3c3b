"""Geometry of the sub-Cauchy projection family.

Conventions
-----------
Sphere points live on the unit sphere S^d in R^{d+1}, centered at the
origin and stored as plain numpy arrays of shape (..., d+1).  The
projection plane is tangent to the sphere at the south pole
(0, ..., 0, -1); plane points have shape (..., d).

The observer sits inside the sphere and is split into a longitude
``h_o`` (first d coordinates) and a latitude ``ell_o``, measured so
that ``ell_o = 1`` is the sphere center and ``ell_o = 2`` the north
pole.  In origin-centered coordinates the observer's vertical position
is ``ell_o - 1``.  A sphere point ``z`` is on the *bright side* when
``z[d] < ell_o - 1``; the line through the observer and ``z`` then
meets the plane in exactly one point, which defines the projection.
``ell_o = 2`` with ``h_o = 0`` recovers classical stereographic
projection, whose dark side degenerates to the north pole.

A plane point ``y`` is rescaled to ``yhat = (y - mu) / R`` before the
geometric solve, so ``(mu, R)`` shift and scale the projection without
moving the sphere.  The latitude of a sphere point on the chord from
the observer to ``(yhat, 0)`` is controlled by the chord scale ``M``,
the positive root of a quadratic; all Jacobians are evaluated in log
space so that dimensions in the hundreds remain representable.

All functions broadcast over leading axes and are pure; sampling takes
an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    BoundaryWithoutSymmetry,
    DarkSidePoint,
    DomainError,
    NegativeDiscriminant,
    NonfiniteInput,
    NonpositiveScale,
    ObserverOutsideBall,
)

# Margin keeping the observer strictly interior, so the chord-scale
# quadratic's constant term stays strictly negative.
INTERIOR_MARGIN = 1e-9

# Round-off slack below which a negative discriminant is clamped to 0.
DISCRIMINANT_SLACK = 1e-12

_SPHERE_NORM_TOL = 1e-12


@dataclass(frozen=True)
class ProjectionParams:
    """Observer, shift and scale defining one sub-Cauchy projection.

    Attributes
    ----------
    h_o : ndarray, shape (d,)
        Observer longitude.
    ell_o : float
        Observer latitude in [1, 2].
    mu : ndarray, shape (d,)
        Shift applied in target space.
    R : float
        Positive scale applied in target space.
    d : int
        Ambient dimension of the target space.
    """

    h_o: np.ndarray
    ell_o: float
    mu: np.ndarray
    R: float
    d: int = field(default=0)

    def __post_init__(self):
        h_o = np.atleast_1d(np.asarray(self.h_o, dtype=float))
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        d = self.d if self.d else h_o.shape[0]
        if h_o.shape[0] == 1 and d > 1:
            h_o = np.full(d, h_o[0])
        if mu.shape[0] == 1 and d > 1:
            mu = np.full(d, mu[0])
        if h_o.shape != (d,) or mu.shape != (d,):
            raise ValueError(
                f"h_o and mu must have shape ({d},); got {h_o.shape} and {mu.shape}"
            )
        object.__setattr__(self, "h_o", h_o)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "ell_o", float(self.ell_o))
        object.__setattr__(self, "R", float(self.R))
        object.__setattr__(self, "d", int(d))


def make_params(d, h_o=0.0, ell_o=1.0, mu=0.0, R=1.0) -> ProjectionParams:
    """Build validated projection parameters, broadcasting scalars to dimension d."""
    return validate_params(ProjectionParams(h_o=h_o, ell_o=ell_o, mu=mu, R=R, d=d))


class ChordScale(NamedTuple):
    """Chord scale M with the quadratic coefficients it solves.

    M satisfies A*M**2 + 2*B*M + C = 0, equivalently
    A*M**2 + 2*B*M + |h_o|^2 + (ell_o - 1)^2 = 1, with
    A = |yhat - h_o|^2 + ell_o^2,
    B = <yhat - h_o, h_o> - ell_o*(ell_o - 1),
    C = |h_o|^2 + ell_o^2 - 2*ell_o.
    """

    M: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: float


def sphere_point(z) -> np.ndarray:
    """Renormalize ``z`` onto the unit sphere (rowwise for batches)."""
    z = np.asarray(z, dtype=float)
    norm = np.linalg.norm(z, axis=-1, keepdims=True)
    if np.any(norm == 0.0) or not np.all(np.isfinite(norm)):
        raise NonfiniteInput("cannot normalize zero or non-finite vector")
    return z / norm


def is_bright(z, ell_o) -> np.ndarray:
    """True where ``z`` lies strictly below the observer latitude."""
    z = np.asarray(z, dtype=float)
    return z[..., -1] < ell_o - 1.0


def validate_params(p: ProjectionParams) -> ProjectionParams:
    """Check the observer-ball constraint, scale positivity and finiteness.

    The observer must satisfy |h_o|^2 + (ell_o-1)^2 <= 1 - INTERIOR_MARGIN,
    except for the single boundary case ell_o = 2 with h_o = 0 (classical
    stereographic projection).
    """
    if not (np.all(np.isfinite(p.h_o)) and np.all(np.isfinite(p.mu))
            and math.isfinite(p.ell_o) and math.isfinite(p.R)):
        raise NonfiniteInput("projection parameters must be finite")
    if p.R <= 0.0:
        raise NonpositiveScale(f"scale R must be positive, got {p.R}")
    if p.ell_o == 2.0:
        if np.any(p.h_o != 0.0):
            raise BoundaryWithoutSymmetry(
                "ell_o = 2 is admissible only with h_o = 0"
            )
        return p
    if not 1.0 <= p.ell_o < 2.0:
        raise ObserverOutsideBall(
            f"observer latitude must lie in [1, 2], got {p.ell_o}"
        )
    s = float(np.dot(p.h_o, p.h_o)) + (p.ell_o - 1.0) ** 2
    if s > 1.0 - INTERIOR_MARGIN:
        raise ObserverOutsideBall(
            f"|h_o|^2 + (ell_o-1)^2 = {s:.12g} exceeds 1 - {INTERIOR_MARGIN}"
        )
    return p


def scp_forward(x, p: ProjectionParams) -> np.ndarray:
    """Project bright-side sphere points onto the target space.

    y = R * (ell_o * h_x - ell_x * h_o) / (ell_o - ell_x) + mu with
    h_x = x[..., :d] and ell_x = x[..., d] + 1.

    Raises DarkSidePoint if any point is at or above the observer
    latitude, where the chord never reaches the plane.
    """
    x = np.asarray(x, dtype=float)
    hx = x[..., :-1]
    zd = x[..., -1]
    t = (p.ell_o - 1.0) - zd  # ell_o - ell_x
    if np.any(t <= 0.0):
        raise DarkSidePoint("point at or above observer latitude")
    ell_x = zd + 1.0
    num = p.ell_o * hx - ell_x[..., None] * p.h_o
    return p.R * num / t[..., None] + p.mu


def solve_chord_scale(y, p: ProjectionParams) -> ChordScale:
    """Solve for the chord scale M placing ``y`` back on the sphere.

    Uses the conjugate root form M = -C / (B + sqrt(B^2 - A*C)) when
    B > 0, which avoids the catastrophic cancellation of the textbook
    (-B + sqrt(...)) / A form; discriminants within DISCRIMINANT_SLACK
    below zero are clamped to zero.
    """
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise NonfiniteInput("plane point must be finite")
    yhat = (y - p.mu) / p.R
    w = yhat - p.h_o
    A = np.sum(w * w, axis=-1) + p.ell_o**2
    B = w @ p.h_o - p.ell_o * (p.ell_o - 1.0)
    C = float(np.dot(p.h_o, p.h_o)) + p.ell_o**2 - 2.0 * p.ell_o
    disc = B * B - A * C
    if np.any(disc < -DISCRIMINANT_SLACK):
        raise NegativeDiscriminant(
            "chord-scale quadratic has complex roots; observer invalid"
        )
    root = np.sqrt(np.maximum(disc, 0.0))
    denom = B + root
    safe_denom = np.where(denom > 0.0, denom, 1.0)  # unused branch guard
    M = np.where(B > 0.0, -C / safe_denom, (-B + root) / A)
    return ChordScale(M=M, A=A, B=B, C=C)


def scp_inverse(y, p: ProjectionParams) -> np.ndarray:
    """Lift target-space points onto the bright side of the sphere.

    h_x = M*yhat + (1-M)*h_o and ell_x = (1-M)*ell_o; the result is
    renormalized to unit length and always lies strictly on the bright
    side for finite y.
    """
    y = np.asarray(y, dtype=float)
    M = solve_chord_scale(y, p).M
    yhat = (y - p.mu) / p.R
    hx = M[..., None] * yhat + (1.0 - M[..., None]) * p.h_o
    zd = (1.0 - M) * p.ell_o - 1.0
    z = np.concatenate([hx, zd[..., None]], axis=-1)
    return sphere_point(z)


def log_jacobian(y, p: ProjectionParams) -> np.ndarray:
    """Log Jacobian determinant of the forward projection at ``y``.

    log J = d*log R + log(M*|w|^2 + <w, h_o> + ell_o - ell_o^2*(1-M))
            - d*log M - log ell_o,  with w = yhat - h_o,
    evaluated without ever forming M**d.
    """
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise NonfiniteInput("plane point must be finite")
    scale = solve_chord_scale(y, p)
    M = scale.M
    yhat = (y - p.mu) / p.R
    w = yhat - p.h_o
    inner = (M * np.sum(w * w, axis=-1) + w @ p.h_o
             + p.ell_o - p.ell_o**2 * (1.0 - M))
    return (p.d * math.log(p.R) + np.log(inner)
            - p.d * np.log(M) - math.log(p.ell_o))


def log_jacobian_at_cap_point(x, p: ProjectionParams) -> np.ndarray:
    """Log Jacobian evaluated directly at a bright-side sphere point.

    Equal to ``log_jacobian(scp_forward(x, p), p)`` but free of the
    quadratic root solve: with t = ell_o - ell_x the identities
    M = t / ell_o and yhat - h_o = ell_o*(h_x - h_o)/t reduce it to

        log J = d*log R + d*log ell_o + log(<h_x - h_o, h_x> - t*z_d)
                - (d+1)*log t.
    """
    x = np.asarray(x, dtype=float)
    hx = x[..., :-1]
    zd = x[..., -1]
    t = (p.ell_o - 1.0) - zd
    if np.any(t <= 0.0):
        raise DarkSidePoint("point at or above observer latitude")
    bracket = np.sum((hx - p.h_o) * hx, axis=-1) - t * zd
    return (p.d * math.log(p.R) + p.d * math.log(p.ell_o)
            + np.log(bracket) - (p.d + 1.0) * np.log(t))


def sample_uniform_cap(d, ell_o, rng, size=None, with_rejection_stats=False):
    """Draw uniform samples from the bright side of the sphere.

    A standard (d+1)-dimensional Gaussian is normalized onto the sphere
    and rejected while its last coordinate is at or above ell_o - 1.
    The accepted fraction is at least 1/2 for ell_o >= 1, so the
    expected number of raw draws per sample is at most 2.

    Returns a (d+1,) point for ``size=None``, else a (size, d+1) array.
    With ``with_rejection_stats=True`` also returns the raw and accepted
    draw counts (before truncating the final chunk), so the empirical
    rejection fraction is 1 - accepted/raw.
    """
    if not 1.0 <= ell_o <= 2.0:
        raise ObserverOutsideBall(f"ell_o must lie in [1, 2], got {ell_o}")
    n = 1 if size is None else int(size)
    threshold = ell_o - 1.0
    chunks = []
    got = 0
    raw = 0
    while got < n:
        m = 2 * (n - got) + 8
        g = rng.standard_normal((m, d + 1))
        raw += m
        z = g / np.linalg.norm(g, axis=1, keepdims=True)
        keep = z[:, d] < threshold
        accepted = z[keep]
        chunks.append(accepted)
        got += accepted.shape[0]
    out = np.concatenate(chunks, axis=0)[:n]
    if size is None:
        out = out[0]
    if with_rejection_stats:
        return out, raw, got
    return out


def cap_ratio_exact(d, ell_o) -> float:
    """Exact surface fraction of the dark side of the sphere.

    For ell_o in (1, 2] this is (1/2) * I_x(d/2, 1/2) with
    x = 1 - (ell_o - 1)^2, the half accounting for the restriction to
    positive latitudes; ell_o = 1 gives exactly one hemisphere.
    """
    if d < 1:
        raise DomainError(f"dimension must be >= 1, got {d}")
    if not 1.0 <= ell_o <= 2.0:
        raise DomainError(f"ell_o must lie in [1, 2], got {ell_o}")
    if ell_o == 1.0:
        return 0.5
    s = ell_o - 1.0
    x = 1.0 - s * s
    return 0.5 * float(regularized_incomplete_beta(x, d / 2.0, 0.5))


def cap_ratio_bound(d, ell_o) -> float:
    """Chernoff-style upper bound on the dark-side surface fraction.

    (e^{1/2} / 2) * sqrt(d+1) * (1 - (ell_o-1)^2)^{(d-1)/2}; may exceed
    1 in low dimensions, where it is vacuous but still an upper bound.
    """
    if d < 1:
        raise DomainError(f"dimension must be >= 1, got {d}")
    if not 1.0 <= ell_o <= 2.0:
        raise DomainError(f"ell_o must lie in [1, 2], got {ell_o}")
    s = ell_o - 1.0
    return 0.5 * math.exp(0.5) * math.sqrt(d + 1.0) * (1.0 - s * s) ** ((d - 1) / 2.0)


# --- regularized incomplete beta -------------------------------------------

_BETA_EPS = 1e-15
_BETA_FPMIN = 1e-300
_BETA_MAXIT = 500


def _lbeta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _betacf(x, a, b):
    """Continued fraction for the incomplete beta (modified Lentz).

    Elementwise over arrays; converges for x < (a+1)/(a+b+2).
    """
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    dd = 1.0 - qab * x / qap
    dd = np.where(np.abs(dd) < _BETA_FPMIN, _BETA_FPMIN, dd)
    dd = 1.0 / dd
    h = dd.copy()
    for m in range(1, _BETA_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        dd = 1.0 + aa * dd
        dd = np.where(np.abs(dd) < _BETA_FPMIN, _BETA_FPMIN, dd)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _BETA_FPMIN, _BETA_FPMIN, c)
        dd = 1.0 / dd
        h = h * dd * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        dd = 1.0 + aa * dd
        dd = np.where(np.abs(dd) < _BETA_FPMIN, _BETA_FPMIN, dd)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _BETA_FPMIN, _BETA_FPMIN, c)
        dd = 1.0 / dd
        delta = dd * c
        h = h * delta
        if np.all(np.abs(delta - 1.0) < _BETA_EPS):
            return h
    raise DomainError("incomplete beta continued fraction failed to converge")


def regularized_incomplete_beta(x, a, b):
    """Regularized incomplete beta function I_x(a, b).

    Continued-fraction evaluation with the symmetry reduction
    I_x(a, b) = 1 - I_{1-x}(b, a) applied when x > (a+1)/(a+b+2), so
    the fraction is always used in its rapidly convergent region.
    Accepts scalar or array x; a and b are positive scalars.
    """
    a = float(a)
    b = float(b)
    if not (math.isfinite(a) and math.isfinite(b)) or a <= 0.0 or b <= 0.0:
        raise DomainError(f"shape parameters must be positive, got a={a}, b={b}")
    x_arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x_arr)) or np.any((x_arr < 0.0) | (x_arr > 1.0)):
        raise DomainError("x must lie in [0, 1]")
    scalar = x_arr.ndim == 0
    x_arr = np.atleast_1d(x_arr)

    swap = x_arr > (a + 1.0) / (a + b + 2.0)
    xs = np.where(swap, 1.0 - x_arr, x_arr)
    aa = np.where(swap, b, a)
    bb = np.where(swap, a, b)

    interior = (xs > 0.0) & (xs < 1.0)
    out = np.where(xs >= 1.0, 1.0, 0.0)
    if np.any(interior):
        xi = xs[interior]
        ai = aa[interior]
        bi = bb[interior]
        lfront = ai * np.log(xi) + bi * np.log1p(-xi) - _lbeta(a, b)
        cf = _betacf(xi, ai, bi)
        out[interior] = np.exp(lfront) * cf / ai
    out = np.where(swap, 1.0 - out, out)
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out


def log_regularized_incomplete_beta(x, a, b):
    """log I_x(a, b), stable for values far below double-precision range.

    Uses the log of the continued-fraction form directly when x is in
    the convergent region, else the log1p complement of the reflected
    value.  Intended for deep lower tails (e.g. heavy-tail CDF logs).
    """
    a = float(a)
    b = float(b)
    if not (math.isfinite(a) and math.isfinite(b)) or a <= 0.0 or b <= 0.0:
        raise DomainError(f"shape parameters must be positive, got a={a}, b={b}")
    x_arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x_arr)) or np.any((x_arr < 0.0) | (x_arr > 1.0)):
        raise DomainError("x must lie in [0, 1]")
    scalar = x_arr.ndim == 0
    x_arr = np.atleast_1d(x_arr)

    out = np.empty_like(x_arr)
    direct = x_arr <= (a + 1.0) / (a + b + 2.0)
    lo = direct & (x_arr > 0.0)
    if np.any(lo):
        xi = x_arr[lo]
        lfront = a * np.log(xi) + b * np.log1p(-xi) - _lbeta(a, b)
        out[lo] = lfront + np.log(_betacf(xi, a, b)) - math.log(a)
    if np.any(~direct):
        # complement is small there, so the plain value is accurate
        xi = x_arr[~direct]
        out[~direct] = np.log1p(-regularized_incomplete_beta(1.0 - xi, b, a))
    out[x_arr == 0.0] = -np.inf
    out[x_arr == 1.0] = 0.0
    return float(out[0]) if scalar else out
