import hashlib
import json
import os
import tempfile
from collections import Counter
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import InvalidInputError

HERMITIAN_TOLERANCE = 1e-9


def unitary_ifft(x, axis: int = -1) -> np.ndarray:
    """Inverse DFT with the 1/sqrt(K) convention (CFR -> CIR)."""
    x = np.asarray(x, dtype=complex)
    check_finite(x, "CFR")
    return np.fft.ifft(x, axis=axis, norm="ortho")


def unitary_fft(x, axis: int = -1) -> np.ndarray:
    """Forward DFT with the 1/sqrt(K) convention (CIR -> CFR)."""
    x = np.asarray(x, dtype=complex)
    check_finite(x, "CIR")
    return np.fft.fft(x, axis=axis, norm="ortho")


def check_finite(x: np.ndarray, name: str = "input") -> None:
    if not np.all(np.isfinite(x)):
        raise InvalidInputError(f"{name} contains non-finite entries")


def hermitian_eig(m, tol: float = HERMITIAN_TOLERANCE) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix.

    Parameters
    ----------
    m : complex square matrix, Hermitian within ``tol`` (relative to its norm)
    tol : symmetry tolerance

    Returns
    -------
    eigenvalues sorted descending and the matching orthonormal eigenvectors
    as columns.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"Expected a square matrix, got shape {m.shape}")
    check_finite(m, "matrix")
    scale = max(np.linalg.norm(m), 1.0)
    asymmetry = np.linalg.norm(m - m.conj().T)
    if asymmetry > tol * scale:
        raise InvalidInputError(f"Matrix is not Hermitian (asymmetry {asymmetry:.3e})")
    m = 0.5 * (m + m.conj().T)
    values, vectors = scipy.linalg.eigh(m)
    return values[::-1].copy(), vectors[:, ::-1].copy()


def unwrap_phase(h, axis: int = -1) -> np.ndarray:
    """Unwrapped phase of a complex array along ``axis`` (jumps above pi corrected)."""
    return np.unwrap(np.angle(h), axis=axis)


def smallest_mode(values) -> int:
    """Most frequent value, ties going to the smallest."""
    counts = Counter(int(v) for v in values)
    if not counts:
        raise InvalidInputError("Cannot take the mode of an empty sequence")
    best = max(counts.values())
    return min(v for v, c in counts.items() if c == best)


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(data) -> str:
    """sha256 of the canonical JSON form of ``data``."""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def file_hash(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write to a sibling temp file then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def euclidean(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.sqrt(np.sum((a - b) ** 2)))
