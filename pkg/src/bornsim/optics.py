"""Linear-optics transformations of coherent-plus-vacuum states.

Gates are plain complex ndarrays. A circuit maps the state direction psi to
U psi while the coherent amplitude is unchanged; vacuum noise is redrawn
after the transform because a unitary maps iid standard complex Gaussians to
iid standard complex Gaussians. Four-mode circuits order the tensor factors
(spatial x polarization) with basis [RH, RV, DH, DV].
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import CircuitFormatError, DimensionMismatchError, DomainError, InvalidDimensionError
from .field import AmplitudeSample, CoherentVector, RngStream

UNITARITY_TOL = 1e-12


def assert_unitary(u: np.ndarray, tol: float = UNITARITY_TOL) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {u.shape}")
    dev = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
    if not dev <= tol:
        raise DomainError(f"matrix is not unitary (max |U^dag U - I| = {dev:.3g})")
    return u


def unitarity_defect(u: np.ndarray) -> float:
    u = np.asarray(u, dtype=complex)
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def gate_identity(d: int = 2) -> np.ndarray:
    if int(d) < 1:
        raise InvalidDimensionError("identity needs d >= 1")
    return np.eye(int(d), dtype=complex)


def gate_hadamard() -> np.ndarray:
    """50/50 beam splitter, (1/sqrt2) [[1, 1], [1, -1]]."""
    return np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / np.sqrt(2.0)


def gate_phase(phi: float) -> np.ndarray:
    """Phase shifter diag(1, e^{i phi})."""
    if not np.isfinite(phi):
        raise DomainError("phi must be finite")
    return np.array([[1.0, 0.0], [0.0, np.exp(1j * float(phi))]], dtype=complex)


def gate_x() -> np.ndarray:
    """Mode swap (half-wave plate at 45 degrees)."""
    return np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)


def gate_cnot() -> np.ndarray:
    """Controlled NOT with the first tensor factor (spatial mode) as control."""
    c = np.eye(4, dtype=complex)
    c[[2, 3]] = c[[3, 2]]
    return c


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def apply(u: np.ndarray, state: CoherentVector) -> CoherentVector:
    """Transform the state direction, psi' = U psi (renormalized); alpha unchanged.

    Noise is not propagated: sampling after apply() draws fresh iid noise,
    which is distribution-identical to transforming the old noise.
    """
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape != (state.d, state.d):
        raise DimensionMismatchError(f"gate shape {u.shape} does not match d = {state.d}")
    psi = u @ state.psi
    nrm = np.linalg.norm(psi)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise DomainError("transformed direction is not normalizable")
    return CoherentVector(state.alpha, psi / nrm)


def apply_to_sample(u: np.ndarray, sample: AmplitudeSample) -> AmplitudeSample:
    """Propagate a realized amplitude vector through the circuit, a' = U a.

    Opt-in alternative to redrawing noise after apply(); exists so the
    distributional equivalence of the two routes can be tested directly.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (sample.d, sample.d):
        raise DimensionMismatchError(f"gate shape {u.shape} does not match d = {sample.d}")
    return AmplitudeSample(u @ sample.a)


def haar_unitary(d: int, rng: RngStream) -> np.ndarray:
    """Haar-distributed d x d unitary via QR of a complex Gaussian matrix.

    The R diagonal's phases are folded back into Q so the distribution is
    exactly Haar rather than QR-convention dependent.
    """
    d = int(d)
    if d < 1:
        raise InvalidDimensionError("haar_unitary needs d >= 1")
    z = rng.complex_normals((d, d))
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r).copy()
    diag[diag == 0] = 1.0
    return q * (diag / np.abs(diag))


# ---------------------------------------------------------------------------
# Circuit description files
# ---------------------------------------------------------------------------

_GATE_BUILDERS = {
    "hadamard": (2, lambda params: gate_hadamard()),
    "x": (2, lambda params: gate_x()),
    "phase": (None, None),  # special-cased: 1 or 2 wires
    "cnot": (4, lambda params: gate_cnot()),
    "identity": (0, None),
}


def _embed(gate: np.ndarray, wires: list[int], d: int) -> np.ndarray:
    res = np.eye(d, dtype=complex)
    for wr in wires:
        res[wr, wr] = 0.0
    for r, wr in enumerate(wires):
        for c, wc in enumerate(wires):
            res[wr, wc] = gate[r, c]
    return res


def circuit_unitary(spec: list[dict], d: int | None = None) -> np.ndarray:
    """Compose an ordered gate list [{gate, params, wires}, ...] into one unitary.

    Gates apply in list order (first entry acts first). ``wires`` are mode
    indices; a phase gate takes one wire (phase on that mode) or two wires
    (diag(1, e^{i phi}) across the pair). ``d`` defaults to max wire + 1.
    """
    if not isinstance(spec, list):
        raise CircuitFormatError("circuit description must be a list of gate entries")
    entries = []
    max_wire = -1
    for n, entry in enumerate(spec):
        if not isinstance(entry, dict) or "gate" not in entry:
            raise CircuitFormatError(f"entry {n} must be an object with a 'gate' field")
        name = entry["gate"]
        wires = [int(w) for w in entry.get("wires", [])]
        params = entry.get("params", {})
        if name not in _GATE_BUILDERS:
            raise CircuitFormatError(f"entry {n}: unknown gate {name!r}")
        if any(w < 0 for w in wires):
            raise CircuitFormatError(f"entry {n}: negative wire index")
        if len(set(wires)) != len(wires):
            raise CircuitFormatError(f"entry {n}: repeated wire index")
        max_wire = max(max_wire, *wires) if wires else max_wire
        entries.append((n, name, wires, params))
    if d is None:
        if max_wire < 0:
            raise CircuitFormatError("cannot infer mode count from an empty wire set")
        d = max_wire + 1
    if max_wire >= d:
        raise CircuitFormatError(f"wire {max_wire} out of range for d = {d}")

    total = np.eye(d, dtype=complex)
    for n, name, wires, params in entries:
        if name == "identity":
            continue
        if name == "phase":
            phi = float(params.get("phi", 0.0))
            if len(wires) == 1:
                gate = np.array([[np.exp(1j * phi)]], dtype=complex)
            elif len(wires) == 2:
                gate = gate_phase(phi)
            else:
                raise CircuitFormatError(f"entry {n}: phase takes 1 or 2 wires")
        else:
            arity, builder = _GATE_BUILDERS[name]
            if len(wires) != arity:
                raise CircuitFormatError(f"entry {n}: {name} takes {arity} wires, got {len(wires)}")
            gate = builder(params)
        total = _embed(gate, wires, d) @ total
    return total


def circuit_from_json(path: str | Path, d: int | None = None) -> np.ndarray:
    """Load a circuit description file (JSON list of {gate, params, wires})."""
    try:
        spec = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CircuitFormatError(f"cannot read circuit file {path}: {exc}") from exc
    return circuit_unitary(spec, d=d)
