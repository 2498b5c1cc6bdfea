"""Discrete-mode stochastic vacuum field with an optional coherent displacement.

A d-mode state is a coherent amplitude alpha along a unit direction psi,
immersed in vacuum noise: one realization has complex mode amplitudes
a = alpha * psi + z / sqrt(2), where the components of z are independent
standard complex Gaussians (E[z] = 0, E[|z|^2] = 1, E[z^2] = 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidDimensionError

# Energy scale for mean_energy_density. Detection math is dimensionless and
# never sees it.
HBAR = 1.0

_NORM_TOL = 1e-12


class RngStream:
    """Deterministic random stream keyed by (seed, stream_id).

    Uniforms come from PCG64 seeded with SeedSequence(seed, spawn_key).
    Normal variates use the Box-Muller transform, so each pair of real
    normals consumes exactly two uniforms and each standard complex Gaussian
    consumes exactly one such pair (radius draw, angle draw). Identical
    (seed, stream_id) therefore reproduces identical output bit for bit,
    independent of how work is split across workers.

    ``substream(i)`` derives an independent child stream; sweeps give one
    child per grid point so results do not depend on scheduling order.
    """

    def __init__(self, seed: int, stream_id: int = 0, _path: tuple[int, ...] = ()):
        if seed < 0 or stream_id < 0:
            raise DomainError("seed and stream_id must be nonnegative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._path = tuple(int(p) for p in _path)
        key = (self.stream_id,) + self._path
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=key)))

    def substream(self, index: int) -> "RngStream":
        """Independent child stream; deterministic function of (seed, stream_id, index)."""
        return RngStream(self.seed, self.stream_id, self._path + (int(index),))

    def uniforms(self, n: int) -> np.ndarray:
        """n uniforms on [0, 1)."""
        return self._gen.random(int(n))

    def standard_normals(self, n: int) -> np.ndarray:
        """n real standard normals (Box-Muller, generated in pairs).

        Consumes exactly 2 * ceil(n / 2) uniforms.
        """
        n = int(n)
        if n < 0:
            raise DomainError("n must be nonnegative")
        if n == 0:
            return np.empty(0)
        pairs = (n + 1) // 2
        u = self._gen.random((pairs, 2))
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        theta = (2.0 * np.pi) * u[:, 1]
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def complex_normals(self, shape) -> np.ndarray:
        """Standard complex Gaussians z = (x + iy)/sqrt(2), one Box-Muller pair each."""
        shape = (int(shape),) if np.isscalar(shape) else tuple(int(s) for s in shape)
        n = int(np.prod(shape)) if shape else 1
        if n == 0:
            return np.empty(shape, dtype=complex)
        u = self._gen.random((n, 2))
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        theta = (2.0 * np.pi) * u[:, 1]
        z = (r * np.cos(theta) + 1j * (r * np.sin(theta))) / np.sqrt(2.0)
        return z.reshape(shape)


def _require_finite(name: str, value: np.ndarray | complex | float) -> None:
    if not np.all(np.isfinite(value)):
        raise DomainError(f"{name} must be finite (no NaN or Inf)")


@dataclass(frozen=True)
class CoherentVector:
    """Coherent amplitude alpha along a unit d-mode direction psi."""

    alpha: complex
    psi: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=complex).reshape(-1)
        if psi.size < 1:
            raise InvalidDimensionError("state needs at least one mode")
        _require_finite("alpha", complex(self.alpha))
        _require_finite("psi", psi)
        nrm = float(np.linalg.norm(psi))
        if abs(nrm - 1.0) > _NORM_TOL:
            raise DomainError(f"psi must be unit norm within {_NORM_TOL} (got {nrm!r})")
        psi.setflags(write=False)
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "psi", psi)

    @property
    def d(self) -> int:
        return self.psi.size

    def mode_amplitudes(self) -> np.ndarray:
        """Mean amplitude per mode, alpha * psi."""
        return self.alpha * self.psi


@dataclass(frozen=True)
class NoiseRealization:
    """One draw of d iid standard complex Gaussian mode amplitudes."""

    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=complex).reshape(-1)
        _require_finite("z", z)
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @property
    def d(self) -> int:
        return self.z.size


@dataclass(frozen=True)
class AmplitudeSample:
    """Realized complex amplitudes a = alpha * psi + z / sqrt(2)."""

    a: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=complex).reshape(-1)
        _require_finite("a", a)
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def d(self) -> int:
        return self.a.size


def sample_noise(d: int, rng: RngStream) -> NoiseRealization:
    """Draw d iid standard complex Gaussians, consuming exactly 2d normal draws."""
    if int(d) < 1:
        raise InvalidDimensionError(f"d must be >= 1 (got {d})")
    return NoiseRealization(rng.complex_normals(int(d)))


def realize(state: CoherentVector, rng: RngStream, noise: NoiseRealization | None = None) -> AmplitudeSample:
    """One field realization a = alpha * psi + z / sqrt(2).

    ``noise`` is a test hook: pass a fixed NoiseRealization instead of
    drawing from ``rng`` (e.g. all zeros for the noiseless limit).
    """
    if noise is None:
        noise = sample_noise(state.d, rng)
    elif noise.d != state.d:
        raise InvalidDimensionError(f"noise has {noise.d} modes, state has {state.d}")
    return AmplitudeSample(state.mode_amplitudes() + noise.z / np.sqrt(2.0))


def realize_batch(state: CoherentVector, n: int, rng: RngStream) -> np.ndarray:
    """n realizations as an (n, d) array; row i equals the i-th realize() call."""
    if int(n) < 0:
        raise DomainError("n must be nonnegative")
    z = rng.complex_normals((int(n), state.d))
    return state.mode_amplitudes()[None, :] + z / np.sqrt(2.0)


def mean_energy_density(state: CoherentVector, omega: float, volume: float, hbar: float = HBAR) -> float:
    """Expected time-averaged energy density (|alpha|^2 + 1/2) * hbar * omega / volume.

    Only defined for a single-mode state; physical units enter nowhere else.
    """
    if state.d != 1:
        raise InvalidDimensionError("mean_energy_density takes a single-mode state")
    if not (math.isfinite(omega) and omega > 0.0):
        raise DomainError("omega must be positive and finite")
    if not (math.isfinite(volume) and volume > 0.0):
        raise DomainError("volume must be positive and finite")
    return (abs(state.alpha) ** 2 + 0.5) * hbar * omega / volume
