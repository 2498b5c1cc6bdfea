"""Density-matrix inference from post-selected click statistics.

A state is probed in d^2 Hermitian basis directions: for each basis matrix
the mode direction is rotated into the matrix's eigenbasis, the conditional
single-click probabilities are computed exactly, and their eigenvalue-
weighted sum estimates the expectation value. Linear inversion reconstructs
rho = sum_k m_k B_k (possibly indefinite); the constrained fit parameterizes
rho = T T^dag / Tr[T T^dag] with lower-triangular T and minimizes the squared
expectation residuals, so its output is positive semidefinite by
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .detection import Threshold, gamma_of, marcum_q1, visibility_single
from .errors import DimensionMismatchError, DomainError, InvalidDimensionError
from .experiments import ScenarioResult, conditional_mode_probs
from .field import CoherentVector, RngStream
from .optics import haar_unitary

__all__ = [
    "HermitianBasis",
    "OptimizerSettings",
    "MLEResult",
    "TomographyReport",
    "SweepResult",
    "build_basis",
    "measure_expectations",
    "linear_qst",
    "mle_qst",
    "fidelity",
    "partial_transpose",
    "ppt_witness",
    "tomography_report",
    "bell_direction",
    "bell_witness_scan",
    "fidelity_scan",
    "ensemble_sweep",
]

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
# Eigenvector matrices (columns) and eigenvalues of each Pauli, fixed once so
# the measurement settings are local and reproducible.
_PAULI_EIG = {
    "I": (np.eye(2, dtype=complex), np.array([1.0, 1.0])),
    "X": (np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0), np.array([1.0, -1.0])),
    "Y": (np.array([[1, 1], [1j, -1j]], dtype=complex) / np.sqrt(2.0), np.array([1.0, -1.0])),
    "Z": (np.eye(2, dtype=complex), np.array([1.0, -1.0])),
}
_PAULI_ORDER = "IXYZ"


@dataclass(frozen=True)
class HermitianBasis:
    """d^2 Hermitian matrices, orthonormal under Tr[B_j^dag B_k], with eigensystems."""

    matrices: np.ndarray       # (d^2, d, d)
    diagonalizers: np.ndarray  # (d^2, d, d); U_k^dag B_k U_k = diag(eigenvalues[k])
    eigenvalues: np.ndarray    # (d^2, d)

    @property
    def d(self) -> int:
        return self.matrices.shape[1]

    @property
    def size(self) -> int:
        return self.matrices.shape[0]


def _gell_mann(d: int) -> list[np.ndarray]:
    mats = [np.eye(d, dtype=complex) / math.sqrt(d)]
    for j in range(d):
        for k in range(j + 1, d):
            sym = np.zeros((d, d), dtype=complex)
            sym[j, k] = sym[k, j] = 1.0 / math.sqrt(2.0)
            mats.append(sym)
            asym = np.zeros((d, d), dtype=complex)
            asym[j, k] = -1j / math.sqrt(2.0)
            asym[k, j] = 1j / math.sqrt(2.0)
            mats.append(asym)
    for l in range(1, d):
        diag = np.zeros(d)
        diag[:l] = 1.0
        diag[l] = -l
        mats.append(np.diag(diag).astype(complex) / math.sqrt(l * (l + 1)))
    return mats


def build_basis(d: int) -> HermitianBasis:
    """Hilbert-Schmidt-orthonormal Hermitian basis with precomputed eigensystems.

    d = 2 uses the scaled Paulis, d = 4 their pairwise Kronecker products
    (diagonalized by local product settings); other d uses generalized
    Gell-Mann matrices plus the scaled identity.
    """
    d = int(d)
    if d < 2:
        raise InvalidDimensionError("build_basis needs d >= 2")
    if d == 2:
        mats = [_PAULI[p] / math.sqrt(2.0) for p in _PAULI_ORDER]
        diags = [_PAULI_EIG[p][0] for p in _PAULI_ORDER]
        eigs = [_PAULI_EIG[p][1] / math.sqrt(2.0) for p in _PAULI_ORDER]
    elif d == 4:
        mats, diags, eigs = [], [], []
        for p1 in _PAULI_ORDER:
            for p2 in _PAULI_ORDER:
                mats.append(np.kron(_PAULI[p1], _PAULI[p2]) / 2.0)
                diags.append(np.kron(_PAULI_EIG[p1][0], _PAULI_EIG[p2][0]))
                eigs.append(np.kron(_PAULI_EIG[p1][1], _PAULI_EIG[p2][1]) / 2.0)
    else:
        mats = _gell_mann(d)
        diags, eigs = [], []
        for b in mats:
            w, v = np.linalg.eigh(b)
            diags.append(v)
            eigs.append(w)
    return HermitianBasis(
        matrices=np.array(mats),
        diagonalizers=np.array(diags),
        eigenvalues=np.array(eigs, dtype=float),
    )


# ---------------------------------------------------------------------------
# Measurement and reconstruction
# ---------------------------------------------------------------------------

def measure_expectations(state: CoherentVector, th: Threshold | float,
                         basis: HermitianBasis) -> np.ndarray:
    """Expectation estimate m_k = sum_i p_i beta_ki from post-selected clicks.

    For each basis element the mode direction is rotated to U_k^dag psi and
    the exact conditional single-click probabilities p_i weight the
    eigenvalues beta_ki.
    """
    if basis.d != state.d:
        raise DimensionMismatchError(f"basis is {basis.d}-mode, state is {state.d}-mode")
    g = gamma_of(th)
    m = np.empty(basis.size)
    for k in range(basis.size):
        psi_k = basis.diagonalizers[k].conj().T @ state.psi
        p = conditional_mode_probs(CoherentVector(state.alpha, _renorm(psi_k)), g)
        m[k] = p @ basis.eigenvalues[k]
    return m


def _renorm(psi: np.ndarray) -> np.ndarray:
    return psi / np.linalg.norm(psi)


def _measure_batch(psis: np.ndarray, alpha: float, gamma: float,
                   basis: HermitianBasis) -> np.ndarray:
    """m vectors for many states at once; one marcum evaluation per grid call."""
    uh = basis.diagonalizers.conj().transpose(0, 2, 1)
    amps = np.abs(alpha) * np.abs(np.einsum("kij,nj->nki", uh, psis))
    q = marcum_q1(2.0 * amps.ravel(), 2.0 * gamma).reshape(amps.shape)
    comp = 1.0 - q
    if np.any(comp <= 0.0):
        # rare saturated rows: fall back to the scalar path with its limit rule
        m = np.empty((psis.shape[0], basis.size))
        for n in range(psis.shape[0]):
            m[n] = measure_expectations(CoherentVector(alpha, psis[n]), gamma, basis)
        return m
    w = q / comp
    p = w / w.sum(axis=2, keepdims=True)
    return np.einsum("nki,ki->nk", p, basis.eigenvalues)


def linear_qst(m: np.ndarray, basis: HermitianBasis) -> np.ndarray:
    """Linear inversion rho = sum_k m_k B_k, rescaled to unit trace.

    Hermitian by construction; eigenvalues may be negative. The trace
    rescaling deviation is available via tomography_report.
    """
    m = np.asarray(m, dtype=float)
    if m.size != basis.size:
        raise DimensionMismatchError(f"need {basis.size} expectation values, got {m.size}")
    rho = np.einsum("k,kij->ij", m, basis.matrices)
    tr = np.real(np.trace(rho))
    if tr <= 0.0:
        raise DomainError("reconstructed matrix has nonpositive trace")
    return rho / tr


def linear_qst_trace(m: np.ndarray, basis: HermitianBasis) -> float:
    """Trace of the raw linear inversion before rescaling."""
    m = np.asarray(m, dtype=float)
    rho = np.einsum("k,kij->ij", m, basis.matrices)
    return float(np.real(np.trace(rho)))


@dataclass(frozen=True)
class OptimizerSettings:
    """Deterministic stopping rule for the constrained fit."""

    maxiter: int = 1000
    maxfun: int = 100_000
    ftol: float = 1e-16
    gtol: float = 1e-12


@dataclass(frozen=True)
class MLEResult:
    rho: np.ndarray
    objective: float
    converged: bool
    n_iter: int


def _psd_projection(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 0.0, None)
    s = w.sum()
    if s <= 0.0:
        return np.eye(rho.shape[0], dtype=complex) / rho.shape[0]
    return (v * (w / s)) @ v.conj().T


def _pack(t: np.ndarray, il) -> np.ndarray:
    return np.concatenate([np.real(np.diag(t)), np.real(t[il]), np.imag(t[il])])


def _unpack(x: np.ndarray, d: int, il) -> np.ndarray:
    t = np.zeros((d, d), dtype=complex)
    t[np.diag_indices(d)] = x[:d]
    n_off = il[0].size
    t[il] = x[d:d + n_off] + 1j * x[d + n_off:]
    return t


def mle_qst(m: np.ndarray, basis: HermitianBasis,
            opts: OptimizerSettings | None = None,
            init: np.ndarray | None = None) -> MLEResult:
    """Positive-semidefinite fit of the expectation vector.

    rho(t) = T T^dag / Tr[T T^dag] with lower-triangular T (d^2 real
    parameters), minimizing sum_k (Tr[rho B_k] - m_k)^2 by L-BFGS with an
    analytic gradient. Initialized from the linear inversion projected to
    the PSD cone; fully deterministic for fixed settings.
    """
    opts = opts or OptimizerSettings()
    m = np.asarray(m, dtype=float)
    d = basis.d
    if m.size != basis.size:
        raise DimensionMismatchError(f"need {basis.size} expectation values, got {m.size}")
    if init is None:
        init = _psd_projection(linear_qst(m, basis))
    il = np.tril_indices(d, -1)
    t0 = np.linalg.cholesky(init + 1e-12 * np.eye(d))
    bs = basis.matrices

    def objective(x: np.ndarray) -> tuple[float, np.ndarray]:
        t = _unpack(x, d, il)
        norm = np.real(np.sum(np.abs(t) ** 2))
        rho = (t @ t.conj().T) / norm
        s = np.real(np.einsum("ij,kji->k", rho, bs))
        r = s - m
        f = float(np.sum(r * r))
        grad_mat = (2.0 / norm) * (np.einsum("k,kij->ij", r, bs) @ t - np.sum(r * s) * t)
        grad = np.concatenate([
            2.0 * np.real(np.diag(grad_mat)),
            2.0 * np.real(grad_mat[il]),
            2.0 * np.imag(grad_mat[il]),
        ])
        return f, grad

    res = optimize.minimize(
        objective, _pack(t0, il), jac=True, method="L-BFGS-B",
        options=dict(maxiter=opts.maxiter, maxfun=opts.maxfun,
                     ftol=opts.ftol, gtol=opts.gtol),
    )
    t = _unpack(res.x, d, il)
    rho = t @ t.conj().T
    rho = rho / np.real(np.trace(rho))
    rho = 0.5 * (rho + rho.conj().T)
    return MLEResult(rho=rho, objective=float(res.fun),
                     converged=bool(res.success), n_iter=int(res.nit))


def fidelity(psi: np.ndarray, rho: np.ndarray) -> float:
    """Overlap <psi| rho |psi>, clamped to its real part."""
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (psi.size, psi.size):
        raise DimensionMismatchError(f"rho shape {rho.shape} does not match psi length {psi.size}")
    val = psi.conj() @ rho @ psi
    return float(np.real(val))


def partial_transpose(rho: np.ndarray, d_a: int, d_b: int) -> np.ndarray:
    """Transpose the second tensor factor of a (d_a x d_b)-partitioned matrix."""
    rho = np.asarray(rho, dtype=complex)
    d_a, d_b = int(d_a), int(d_b)
    if rho.shape != (d_a * d_b, d_a * d_b):
        raise DimensionMismatchError(f"rho shape {rho.shape} does not factor as {d_a}x{d_b}")
    r = rho.reshape(d_a, d_b, d_a, d_b)
    return r.transpose(0, 3, 2, 1).reshape(d_a * d_b, d_a * d_b)


def ppt_witness(rho: np.ndarray, d_a: int, d_b: int) -> float:
    """Minimum eigenvalue of the partial transpose; negative certifies entanglement
    for a 2 x 2 partition."""
    return float(np.linalg.eigvalsh(partial_transpose(rho, d_a, d_b)).min())


@dataclass(frozen=True)
class TomographyReport:
    rho: np.ndarray
    fidelity: float
    min_eigenvalue: float
    ppt_min_eigenvalue: float | None
    method: str
    converged: bool = True
    trace_deviation: float = 0.0
    objective: float = 0.0


def tomography_report(state: CoherentVector, th: Threshold | float,
                      basis: HermitianBasis | None = None, method: str = "mle",
                      opts: OptimizerSettings | None = None) -> TomographyReport:
    """Measure, reconstruct, and summarize one state."""
    basis = basis or build_basis(state.d)
    if method not in ("linear", "mle"):
        raise DomainError(f"method must be 'linear' or 'mle' (got {method!r})")
    m = measure_expectations(state, th, basis)
    trace_dev = abs(linear_qst_trace(m, basis) - 1.0)
    if method == "linear":
        rho = linear_qst(m, basis)
        converged, objective = True, 0.0
    else:
        result = mle_qst(m, basis, opts=opts)
        rho, converged, objective = result.rho, result.converged, result.objective
    d = state.d
    ppt = None
    root = int(round(math.sqrt(d)))
    if root * root == d and root >= 2:
        ppt = ppt_witness(rho, root, root)
    return TomographyReport(
        rho=rho,
        fidelity=fidelity(state.psi, rho),
        min_eigenvalue=float(np.linalg.eigvalsh(rho).min()),
        ppt_min_eigenvalue=ppt,
        method=method,
        converged=converged,
        trace_deviation=trace_dev,
        objective=objective,
    )


# ---------------------------------------------------------------------------
# Scans and sweeps
# ---------------------------------------------------------------------------

def bell_direction() -> np.ndarray:
    """(|R,H> + |D,V>)/sqrt(2) in the [RH, RV, DH, DV] basis."""
    return np.array([1.0, 0.0, 0.0, 1.0], dtype=complex) / np.sqrt(2.0)


def haar_states(d: int, n_states: int, rng: RngStream) -> np.ndarray:
    """n Haar-random pure directions, one substream per state."""
    return np.array([haar_unitary(d, rng.substream(s))[:, 0] for s in range(n_states)])


def bell_witness_scan(alphas: np.ndarray, th: Threshold | float,
                      method: str = "mle",
                      psi: np.ndarray | None = None,
                      opts: OptimizerSettings | None = None):
    """PPT witness and fidelity of the reconstructed Bell state versus amplitude."""
    g = gamma_of(th)
    alphas = np.asarray(alphas, dtype=float)
    psi = bell_direction() if psi is None else np.asarray(psi, dtype=complex)
    basis = build_basis(psi.size)
    wit, fid, mineig = [], [], []
    for a in alphas:
        rep = tomography_report(CoherentVector(a, psi), g, basis, method=method, opts=opts)
        wit.append(rep.ppt_min_eigenvalue if rep.ppt_min_eigenvalue is not None else np.nan)
        fid.append(rep.fidelity)
        mineig.append(rep.min_eigenvalue)
    return ScenarioResult(
        grid_name="alpha",
        grid=alphas,
        analytic={"witness": np.array(wit), "fidelity": np.array(fid),
                  "min_eigenvalue": np.array(mineig)},
        meta={"gamma": g, "method": method, "psi": [repr(c) for c in psi]},
    )


def fidelity_scan(alphas: np.ndarray, th: Threshold | float, n_states: int,
                  rng: RngStream, d: int = 4, method: str = "linear",
                  psis: np.ndarray | None = None,
                  opts: OptimizerSettings | None = None):
    """Reconstruction fidelity of an ensemble of pure states versus amplitude.

    Returns a ScenarioResult whose per-state curves are fid_state_XX columns,
    with valid_state_XX flags (no negative eigenvalues) for the linear method.
    """
    g = gamma_of(th)
    alphas = np.asarray(alphas, dtype=float)
    if psis is None:
        psis = haar_states(d, n_states, rng)
    else:
        psis = np.asarray(psis, dtype=complex)
        n_states = psis.shape[0]
        d = psis.shape[1]
    basis = build_basis(d)
    fids = np.empty((alphas.size, n_states))
    valid = np.empty((alphas.size, n_states), dtype=int)
    for ia, a in enumerate(alphas):
        ms = _measure_batch(psis, a, g, basis)
        for s in range(n_states):
            rho_lin = linear_qst(ms[s], basis)
            if method == "linear":
                rho = rho_lin
            else:
                rho = mle_qst(ms[s], basis, opts=opts,
                              init=_psd_projection(rho_lin)).rho
            fids[ia, s] = fidelity(psis[s], rho)
            valid[ia, s] = int(np.linalg.eigvalsh(rho_lin).min() >= -1e-12)
    analytic = {"fid_mean": fids.mean(axis=1), "frac_invalid": 1.0 - valid.mean(axis=1)}
    for s in range(n_states):
        analytic[f"fid_state_{s:02d}"] = fids[:, s]
        analytic[f"valid_state_{s:02d}"] = valid[:, s].astype(float)
    return ScenarioResult(
        grid_name="alpha",
        grid=alphas,
        analytic=analytic,
        meta={"gamma": g, "method": method, "n_states": n_states, "d": d,
              "seed": rng.seed, "stream_id": rng.stream_id},
    )


@dataclass
class SweepResult:
    """Ensemble tomography metrics on an (alpha, gamma) grid."""

    alphas: np.ndarray
    gammas: np.ndarray
    mean_fidelity: np.ndarray    # (n_alpha, n_gamma)
    frac_invalid: np.ndarray
    mean_visibility: np.ndarray
    mean_ppt_witness: np.ndarray
    per_state_fidelity: np.ndarray  # (n_alpha, n_gamma, n_states)
    meta: dict = field(default_factory=dict)

    def argmax_fidelity(self) -> tuple[float, float, float]:
        """(alpha, gamma, value) of the best mean fidelity."""
        i, j = np.unravel_index(int(np.argmax(self.mean_fidelity)), self.mean_fidelity.shape)
        return float(self.alphas[i]), float(self.gammas[j]), float(self.mean_fidelity[i, j])

    def rows(self):
        for i, a in enumerate(self.alphas):
            for j, g in enumerate(self.gammas):
                yield (a, g, self.mean_fidelity[i, j], self.frac_invalid[i, j],
                       self.mean_visibility[i, j], self.mean_ppt_witness[i, j])

    def to_csv(self, path) -> None:
        import csv as _csv

        with open(path, "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["alpha", "gamma", "mean_fidelity", "frac_invalid",
                             "mean_visibility", "mean_ppt_witness"])
            for row in self.rows():
                writer.writerow([repr(float(v)) for v in row])

    def to_json(self, path) -> None:
        import json as _json
        from pathlib import Path as _Path

        payload = {
            "meta": self.meta,
            "alphas": self.alphas.tolist(),
            "gammas": self.gammas.tolist(),
            "mean_fidelity": self.mean_fidelity.tolist(),
            "frac_invalid": self.frac_invalid.tolist(),
            "mean_visibility": self.mean_visibility.tolist(),
            "mean_ppt_witness": self.mean_ppt_witness.tolist(),
            "per_state_fidelity": self.per_state_fidelity.tolist(),
        }
        _Path(path).write_text(_json.dumps(payload, indent=2, sort_keys=True) + "\n")


def ensemble_sweep(d: int, alphas: np.ndarray, gammas: np.ndarray, n_states: int,
                   method: str = "mle", rng: RngStream | None = None,
                   opts: OptimizerSettings | None = None,
                   threads: int = 1) -> SweepResult:
    """Mean tomography metrics over a Haar ensemble on an (alpha, gamma) grid.

    Per grid point: ensemble-mean fidelity, fraction of indefinite linear
    reconstructions, the fringe visibility of the full amplitude at that
    threshold, and (for d = 4) the mean PPT witness of the reconstruction.
    The ensemble is drawn once, one substream per state, so results are
    independent of grid traversal or thread count.
    """
    if n_states < 1:
        raise DomainError("n_states must be >= 1")
    rng = RngStream(0) if rng is None else rng
    alphas = np.asarray(alphas, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    psis = haar_states(d, n_states, rng)
    basis = build_basis(d)
    root = int(round(math.sqrt(d)))
    has_ppt = root * root == d and root >= 2

    shape = (alphas.size, gammas.size)
    mean_fid = np.empty(shape)
    frac_invalid = np.empty(shape)
    mean_vis = np.empty(shape)
    mean_ppt = np.full(shape, np.nan)
    per_state = np.empty(shape + (n_states,))

    def run_point(flat: int):
        i, j = divmod(flat, gammas.size)
        a, g = alphas[i], gammas[j]
        ms = _measure_batch(psis, a, g, basis)
        fids = np.empty(n_states)
        invalid = 0
        ppts = np.empty(n_states)
        for s in range(n_states):
            rho_lin = linear_qst(ms[s], basis)
            if np.linalg.eigvalsh(rho_lin).min() < -1e-12:
                invalid += 1
            if method == "linear":
                rho = rho_lin
            else:
                rho = mle_qst(ms[s], basis, opts=opts, init=_psd_projection(rho_lin)).rho
            fids[s] = fidelity(psis[s], rho)
            ppts[s] = ppt_witness(rho, root, root) if has_ppt else np.nan
        return flat, fids, invalid / n_states, ppts

    results = [run_point(f) for f in range(alphas.size * gammas.size)] if threads <= 1 else None
    if results is None:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_point, range(alphas.size * gammas.size)))
    for flat, fids, inv, ppts in results:
        i, j = divmod(flat, gammas.size)
        per_state[i, j] = fids
        mean_fid[i, j] = fids.mean()
        frac_invalid[i, j] = inv
        mean_vis[i, j] = visibility_single(alphas[i], gammas[j])
        mean_ppt[i, j] = np.nanmean(ppts) if has_ppt else np.nan
    return SweepResult(
        alphas=alphas, gammas=gammas, mean_fidelity=mean_fid,
        frac_invalid=frac_invalid, mean_visibility=mean_vis,
        mean_ppt_witness=mean_ppt, per_state_fidelity=per_state,
        meta={"d": d, "n_states": n_states, "method": method,
              "seed": rng.seed, "stream_id": rng.stream_id},
    )
