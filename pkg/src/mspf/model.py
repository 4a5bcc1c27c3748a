"""Noise distributions and state-space models.

Every sampler in the package goes through :meth:`NoiseDistribution.quantile`
applied to uniforms in (0, 1), so plain, stratified and balanced noise share
one code path.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

# Largest double below 1 and a safe replacement for an exact zero draw.
_U_MAX = float(np.nextafter(1.0, 0.0))
_U_MIN = 2.0**-54


class NoiseKind(str, enum.Enum):
    GAUSSIAN = "gauss"
    CAUCHY = "cauchy"

    @classmethod
    def parse(cls, value: "NoiseKind | str") -> "NoiseKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"gauss": cls.GAUSSIAN, "gaussian": cls.GAUSSIAN, "normal": cls.GAUSSIAN,
                   "cauchy": cls.CAUCHY}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown noise kind {value!r} (expected gauss or cauchy)") from None


def open_uniform(rng: np.random.Generator, size=None):
    """Uniform draws on the open interval (0, 1).

    ``Generator.random`` can return exactly 0.0; that value is replaced by
    2**-54 so the quantile functions never see the boundary.
    """
    u = rng.random(size)
    if size is None:
        return u if u > 0.0 else _U_MIN
    u[u == 0.0] = _U_MIN
    return u


def clip_open(u):
    """Clamp values into the representable open unit interval."""
    return np.clip(u, _U_MIN, _U_MAX)


@dataclass(frozen=True)
class NoiseDistribution:
    """Zero-centred Gaussian N(0, scale_sq) or Cauchy C(0, scale_sq).

    For the Cauchy law ``scale_sq`` is the squared scale, so both kinds
    are parameterised the same way.
    """

    kind: NoiseKind
    scale_sq: float

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind.parse(self.kind))
        if not (np.isfinite(self.scale_sq) and self.scale_sq > 0):
            raise ValueError(f"scale_sq must be positive and finite, got {self.scale_sq!r}")

    @classmethod
    def gaussian(cls, variance: float) -> "NoiseDistribution":
        return cls(NoiseKind.GAUSSIAN, float(variance))

    @classmethod
    def cauchy(cls, scale_sq: float) -> "NoiseDistribution":
        return cls(NoiseKind.CAUCHY, float(scale_sq))

    @property
    def scale(self) -> float:
        return float(np.sqrt(self.scale_sq))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind is NoiseKind.GAUSSIAN:
            return np.exp(-0.5 * x * x / self.scale_sq) / np.sqrt(2.0 * np.pi * self.scale_sq)
        return (self.scale / np.pi) / (x * x + self.scale_sq)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind is NoiseKind.GAUSSIAN:
            return special.ndtr(x / self.scale)
        return 0.5 + np.arctan(x / self.scale) / np.pi

    def quantile(self, u):
        """Inverse cdf on (0, 1); raises ``ValueError`` outside it.

        Gaussian uses the Cephes rational approximation behind
        ``scipy.special.ndtri`` (fixed cost per call, no iteration).
        Cauchy uses scale * tan(pi*(u - 1/2)), written as -scale/tan(pi*u)
        below the median and scale/tan(pi*(1-u)) above it so both tails keep
        full relative precision and the function is odd about u = 1/2.
        """
        u = np.asarray(u, dtype=float)
        if np.any(~((u > 0.0) & (u < 1.0))):
            raise ValueError("quantile argument must lie in the open interval (0, 1)")
        if self.kind is NoiseKind.GAUSSIAN:
            return self.scale * special.ndtri(u)
        lower = u < 0.5
        with np.errstate(divide="ignore"):
            t = np.where(lower, -1.0 / np.tan(np.pi * u), 1.0 / np.tan(np.pi * (1.0 - u)))
        t = np.where(u == 0.5, 0.0, t)
        return self.scale * t

    def sample(self, rng: np.random.Generator, size=None):
        return self.quantile(open_uniform(rng, size))


@dataclass(frozen=True)
class LinearModelMatrices:
    """Matrices of a time-invariant linear-Gaussian state-space model.

    x_n = F x_{n-1} + G v_n,  v_n ~ N(0, Q)
    y_n = H x_n + w_n,        w_n ~ N(0, R)
    """

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    x0_mean: np.ndarray
    V0: np.ndarray

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        k = F.shape[0]
        G = np.asarray(self.G, dtype=float).reshape(k, -1)
        ell = G.shape[1]
        H = np.asarray(self.H, dtype=float).reshape(1, k)
        Q = np.asarray(self.Q, dtype=float).reshape(ell, ell)
        R = np.asarray(self.R, dtype=float).reshape(1, 1)
        x0 = np.asarray(self.x0_mean, dtype=float).reshape(k)
        V0 = np.asarray(self.V0, dtype=float).reshape(k, k)
        if F.shape != (k, k):
            raise ValueError("F must be square")
        for name, mat in (("Q", Q), ("R", R), ("V0", V0)):
            if not np.allclose(mat, mat.T):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(mat).min() < -1e-12 * max(1.0, np.abs(mat).max()):
                raise ValueError(f"{name} must be nonnegative definite")
        for name, val in (("F", F), ("G", G), ("H", H), ("Q", Q), ("R", R), ("x0_mean", x0), ("V0", V0)):
            object.__setattr__(self, name, val)

    @property
    def state_dim(self) -> int:
        return self.F.shape[0]


def _additive(state, noise):
    return state + noise


def _identity(state):
    return state


@dataclass(frozen=True)
class StateSpaceModel:
    """x_n = transition(x_{n-1}, v_n), y_n = observation(x_n) + w_n.

    ``transition`` and ``observation`` must accept numpy arrays of particles
    (leading axis = particle index). ``additive_trend`` marks the built-in
    x_n = x_{n-1} + v_n, y_n = x_n + w_n form, which the grid filter and the
    Kalman linearisation rely on.
    """

    transition: Callable
    observation: Callable
    system_noise: NoiseDistribution
    obs_noise: NoiseDistribution
    initial: NoiseDistribution
    initial_mean: float = 0.0
    state_dim: int = 1
    noise_dim: int = 1
    additive_trend: bool = field(default=False)

    def sample_initial(self, rng: np.random.Generator, m: int) -> np.ndarray:
        return self.initial_mean + self.initial.sample(rng, m)

    def linearization(self) -> LinearModelMatrices:
        if not self.additive_trend:
            raise ValueError("only the additive trend model has a built-in linearisation")
        if self.system_noise.kind is not NoiseKind.GAUSSIAN or self.initial.kind is not NoiseKind.GAUSSIAN:
            raise ValueError("linearisation requires Gaussian system noise and initial state")
        return LinearModelMatrices(F=1.0, G=1.0, H=1.0, Q=self.system_noise.scale_sq,
                                   R=self.obs_noise.scale_sq, x0_mean=self.initial_mean,
                                   V0=self.initial.scale_sq)


DEFAULT_TAU2 = 0.01
DEFAULT_SIGMA2 = 1.0
DEFAULT_INITIAL_VAR = 10.0


def trend_model(noise_kind="gauss", tau_sq: float = DEFAULT_TAU2, sigma_sq: float = DEFAULT_SIGMA2,
                initial_var: float = DEFAULT_INITIAL_VAR) -> StateSpaceModel:
    """First-order trend model x_n = x_{n-1} + v_n, y_n = x_n + w_n.

    v_n is Gaussian N(0, tau_sq) or Cauchy C(0, tau_sq); w_n ~ N(0, sigma_sq).
    The initial state is N(0, initial_var) for every filter in the package.
    """
    if not tau_sq > 0 or not sigma_sq > 0:
        raise ValueError("tau_sq and sigma_sq must be positive")
    kind = NoiseKind.parse(noise_kind)
    return StateSpaceModel(
        transition=_additive,
        observation=_identity,
        system_noise=NoiseDistribution(kind, float(tau_sq)),
        obs_noise=NoiseDistribution.gaussian(sigma_sq),
        initial=NoiseDistribution.gaussian(initial_var),
        additive_trend=True,
    )
