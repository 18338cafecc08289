"""Dataset ingestion, synthetic generators and on-disk formats.

Ensemble files
--------------
An ensemble is stored as a directory holding two files:

``meta.json``
    ``{"format": "covprep.ensemble", "format_version": 1, "kind": "pure" | "mixed",
    "size": N, "dim": d, "sha256": <hex digest of amplitudes.bin>, "attributes": {...}}``
``amplitudes.bin``
    N little-endian float64 probabilities followed by the amplitudes as
    little-endian (real, imaginary) float64 pairs in row-major order, shape
    (N, d) for pure and (N, d, d) for mixed ensembles.

Report CSV
----------
Reports are long-format CSV with the fixed header ``quantity,index,value``;
``index`` is an integer position (component, eigenvalue or n) and ``value``
is written with ``repr`` precision.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .dataset import MixedStateEnsemble, PureStateEnsemble, RawDataset
from .errors import (BadMagic, CorruptFile, DegenerateGroundState, InvalidEnsemble, NotEnoughInstances,
                     TruncatedPayload, UnsupportedType, VersionMismatch)
from .numkernel import hermitian_eigendecompose, random_hermitian

FORMAT_NAME = "covprep.ensemble"
FORMAT_VERSION = 1
REPORT_HEADER = ("quantity", "index", "value")

# IDX element type codes and their big-endian numpy dtypes
IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
IDX_CODES = {dt.newbyteorder("="): code for code, dt in IDX_TYPES.items()}


# ---------------------------------------------------------------------------
# IDX


@dataclass(frozen=True, eq=False)
class IdxTensor:
    element_type: int
    dims: tuple[int, ...]
    payload: np.ndarray

    def __post_init__(self):
        if self.element_type not in IDX_TYPES:
            raise UnsupportedType(f"IDX type code 0x{self.element_type:02X}")
        dims = tuple(int(x) for x in self.dims)
        payload = np.asarray(self.payload).reshape(-1)
        if payload.size != math.prod(dims):
            raise TruncatedPayload(f"{payload.size} elements for dims {dims}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "payload", payload)

    def array(self) -> np.ndarray:
        return self.payload.reshape(self.dims)


def parse_idx(data: bytes) -> IdxTensor:
    """Decode the IDX format: two zero bytes, a type code, the rank, then
    ``rank`` big-endian uint32 sizes and the row-major payload."""
    data = bytes(data)
    if len(data) < 4:
        raise BadMagic("IDX stream shorter than its 4-byte magic")
    if data[0] != 0 or data[1] != 0:
        raise BadMagic(f"IDX magic must start with two zero bytes, got {data[:2].hex()}")
    code, rank = data[2], data[3]
    if code not in IDX_TYPES:
        raise UnsupportedType(f"IDX type code 0x{code:02X}")
    header = 4 + 4 * rank
    if len(data) < header:
        raise TruncatedPayload("IDX header is truncated")
    dims = tuple(int(x) for x in np.frombuffer(data, dtype=">u4", count=rank, offset=4))
    dtype = IDX_TYPES[code]
    expected = math.prod(dims) * dtype.itemsize
    body = len(data) - header
    if body < expected:
        raise TruncatedPayload(f"IDX payload has {body} bytes, expected {expected}")
    if body > expected:
        raise TruncatedPayload(f"IDX payload has {body - expected} trailing bytes")
    payload = np.frombuffer(data, dtype=dtype, count=math.prod(dims), offset=header)
    return IdxTensor(code, dims, payload.astype(dtype.newbyteorder("=")))


def write_idx(tensor: IdxTensor) -> bytes:
    dtype = IDX_TYPES[tensor.element_type]
    head = bytes([0, 0, tensor.element_type, len(tensor.dims)])
    head += np.asarray(tensor.dims, dtype=">u4").tobytes()
    return head + np.asarray(tensor.payload).astype(dtype).tobytes()


def idx_from_array(arr: np.ndarray) -> IdxTensor:
    arr = np.asarray(arr)
    code = IDX_CODES.get(arr.dtype.newbyteorder("="))
    if code is None:
        raise UnsupportedType(f"no IDX type for dtype {arr.dtype}")
    return IdxTensor(code, arr.shape, arr.reshape(-1))


def read_idx(path) -> IdxTensor:
    return parse_idx(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# image datasets


def _select_per_class(labels: np.ndarray, per_class: int, rng: np.random.Generator) -> np.ndarray:
    chosen = []
    for digit in range(10):
        pool = np.flatnonzero(labels == digit)
        if pool.size < per_class:
            raise NotEnoughInstances(f"digit {digit} has {pool.size} instances, {per_class} requested")
        chosen.append(np.sort(rng.choice(pool, size=per_class, replace=False)))
    return np.concatenate(chosen)


def load_mnist(images: IdxTensor, labels: IdxTensor, per_class: int, seed: int = 0) -> RawDataset:
    """Draw ``per_class`` images of each digit 0-9 and flatten them row-major.

    Pixels are scaled to [0, 1] by dividing by 255.  Datapoints are ordered by
    digit, and by original index within a digit.
    """
    if images.element_type != 0x08 or labels.element_type != 0x08:
        raise UnsupportedType("MNIST images and labels must be unsigned-byte IDX tensors")
    if len(images.dims) != 3 or len(labels.dims) != 1 or images.dims[0] != labels.dims[0]:
        raise InvalidEnsemble(f"image dims {images.dims} do not match label dims {labels.dims}")
    rng = np.random.default_rng(seed)
    picked = _select_per_class(labels.array(), per_class, rng)
    pixels = images.array()[picked].reshape(picked.size, -1).astype(np.float64) / 255.0
    return RawDataset(pixels)


def load_mnist_files(image_path, label_path, per_class: int, seed: int = 0) -> RawDataset:
    return load_mnist(read_idx(image_path), read_idx(label_path), per_class, seed)


def load_digits_surrogate(per_class: int, seed: int = 0) -> RawDataset:
    """The 8x8 handwritten digits bundled with scikit-learn, 16 grey levels
    scaled to [0, 1]; a desk-scale stand-in for MNIST (d = 64)."""
    from sklearn.datasets import load_digits

    digits = load_digits()
    rng = np.random.default_rng(seed)
    picked = _select_per_class(digits.target, per_class, rng)
    return RawDataset(digits.data[picked].astype(np.float64) / 16.0)


# ---------------------------------------------------------------------------
# synthetic generators


def is_bars_or_stripes(image: np.ndarray) -> bool:
    image = np.asarray(image)
    rows_constant = bool(np.all(image == image[:, :1]))
    cols_constant = bool(np.all(image == image[:1, :]))
    return rows_constant or cols_constant


def bars_and_stripes(n: int, include_uniform: bool = False) -> RawDataset:
    """All n x n binary bars-and-stripes images, flattened row-major.

    Stripes (constant rows) come first, then bars (constant columns), each
    enumerated by the binary code of its row/column pattern; the all-zero and
    all-one images close the list when ``include_uniform``.  For n = 1 every
    image is uniform, so both single-pixel patterns are always returned.
    """
    if n < 1:
        raise ValueError("grid side must be at least 1")
    if n == 1:
        return RawDataset(np.array([[0.0], [1.0]]))
    images = []
    for code in range(1, 2**n - 1):
        bits = np.array([(code >> (n - 1 - k)) & 1 for k in range(n)], dtype=float)
        images.append(np.repeat(bits[:, None], n, axis=1))
    for code in range(1, 2**n - 1):
        bits = np.array([(code >> (n - 1 - k)) & 1 for k in range(n)], dtype=float)
        images.append(np.repeat(bits[None, :], n, axis=0))
    if include_uniform:
        images.append(np.zeros((n, n)))
        images.append(np.ones((n, n)))
    return RawDataset(np.array([im.reshape(-1) for im in images]))


def gaussian_clusters(num_points: int, dim: int, num_clusters: int = 3, spread: float = 0.3,
                      offset: float = 0.0, seed: int = 0) -> RawDataset:
    """Points scattered around ``num_clusters`` standard-normal centres.

    ``offset`` is added to every feature, which controls how uncentered the
    data is after amplitude encoding.
    """
    rng = np.random.default_rng(seed)
    centres = rng.standard_normal((num_clusters, dim))
    labels = rng.integers(0, num_clusters, size=num_points)
    points = centres[labels] + spread * rng.standard_normal((num_points, dim)) + offset
    return RawDataset(points)


@dataclass(frozen=True)
class SurrogateFamilyConfig:
    """One-parameter Hermitian family H(r) = H0 + r H1 sampled at ``num_points``
    equally spaced r in [r_min, r_max]."""

    dim: int
    num_points: int = 401
    r_min: float = 0.3
    r_max: float = 2.3
    seed: int = 0
    randomize_global_phase: bool = True

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be at least 2")
        if self.num_points < 2:
            raise ValueError("num_points must be at least 2")
        if not self.r_min < self.r_max:
            raise ValueError("r_min must be smaller than r_max")

    def distances(self) -> np.ndarray:
        return np.linspace(self.r_min, self.r_max, self.num_points)


def random_phase_family(config: SurrogateFamilyConfig) -> PureStateEnsemble:
    """Ground states of H0 + r H1, optionally with random global phases.

    H0 then H1 are drawn first from ``default_rng(seed)``; phases, uniform in
    [0, 2 pi), follow in order of r.  Each ground state is first phase-fixed
    (largest-magnitude amplitude real positive).  Successive diagonalizations
    are warm-started in the previous eigenbasis.
    """
    from .qpca import canonicalize_phase

    rng = np.random.default_rng(config.seed)
    h0 = random_hermitian(config.dim, rng)
    h1 = random_hermitian(config.dim, rng)
    basis = np.eye(config.dim, dtype=np.complex128)
    states = []
    for r in config.distances():
        h = h0 + r * h1
        spec = hermitian_eigendecompose(basis.conj().T @ h @ basis)
        basis = basis @ spec.eigenvectors
        if spec.eigenvalues[1] - spec.eigenvalues[0] < 1e-10:
            warnings.warn(f"near-degenerate ground state at r={r:.6g}", DegenerateGroundState, stacklevel=2)
        ground = basis[:, 0] / np.linalg.norm(basis[:, 0])
        states.append(canonicalize_phase(ground))
    states = np.array(states)
    if config.randomize_global_phase:
        phases = rng.uniform(0.0, 2.0 * np.pi, size=len(states))
        states = states * np.exp(1j * phases)[:, None]
    return PureStateEnsemble.uniform(states)


# ---------------------------------------------------------------------------
# ensemble files


def _digest(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def write_ensemble_arrays(path, states: np.ndarray, probs: np.ndarray, kind: str = "pure",
                          attributes: dict | None = None) -> Path:
    """Write raw arrays in the ensemble layout without validating them."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    states = np.asarray(states, dtype="<c16")
    blob = np.asarray(probs, dtype="<f8").tobytes() + states.tobytes()
    meta = {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "size": int(states.shape[0]),
        "dim": int(states.shape[1]) if states.ndim > 1 else 0,
        "sha256": _digest(blob),
        "attributes": attributes or {},
    }
    (path / "amplitudes.bin").write_bytes(blob)
    (path / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return path


def write_ensemble(path, ens: PureStateEnsemble | MixedStateEnsemble, attributes: dict | None = None) -> Path:
    kind = "pure" if isinstance(ens, PureStateEnsemble) else "mixed"
    return write_ensemble_arrays(path, ens.states, ens.probs, kind, attributes)


def read_ensemble_meta(path) -> dict:
    path = Path(path)
    try:
        meta = json.loads((path / "meta.json").read_text())
    except FileNotFoundError as exc:
        raise CorruptFile(f"{path} has no meta.json") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFile(f"{path}/meta.json is not valid JSON") from exc
    if not isinstance(meta, dict) or meta.get("format") != FORMAT_NAME:
        raise CorruptFile(f"{path} is not a {FORMAT_NAME} file")
    if meta.get("format_version") != FORMAT_VERSION:
        raise VersionMismatch(f"format version {meta.get('format_version')!r}, expected {FORMAT_VERSION}")
    return meta


def read_ensemble(path) -> PureStateEnsemble | MixedStateEnsemble:
    path = Path(path)
    meta = read_ensemble_meta(path)
    try:
        n, d, kind = int(meta["size"]), int(meta["dim"]), meta["kind"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFile(f"{path}/meta.json lacks size/dim/kind") from exc
    if n <= 0 or d <= 0:
        raise CorruptFile("ensemble is empty")
    if kind not in ("pure", "mixed"):
        raise CorruptFile(f"unknown ensemble kind {kind!r}")
    try:
        blob = (path / "amplitudes.bin").read_bytes()
    except FileNotFoundError as exc:
        raise CorruptFile(f"{path} has no amplitudes.bin") from exc
    if meta.get("sha256") != _digest(blob):
        raise CorruptFile("amplitudes.bin does not match its checksum")
    shape = (n, d) if kind == "pure" else (n, d, d)
    expected = 8 * n + 16 * math.prod(shape)
    if len(blob) != expected:
        raise CorruptFile(f"amplitudes.bin has {len(blob)} bytes, expected {expected}")
    probs = np.frombuffer(blob, dtype="<f8", count=n).astype(np.float64)
    states = np.frombuffer(blob, dtype="<c16", offset=8 * n).reshape(shape).astype(np.complex128)
    try:
        if kind == "pure":
            return PureStateEnsemble(states, probs)
        return MixedStateEnsemble(states, probs)
    except InvalidEnsemble as exc:
        raise CorruptFile(str(exc)) from exc


# ---------------------------------------------------------------------------
# CSV


def read_vectors_csv(path) -> np.ndarray:
    """Numeric rows, one datapoint per line; entries may be Python complex
    literals such as ``1+2j``.  A non-numeric first line is taken as a header."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh)):
            cells = [c.strip() for c in row if c.strip()]
            if not cells:
                continue
            try:
                rows.append([complex(c.replace(" ", "")) for c in cells])
            except ValueError:
                if lineno == 0:
                    continue
                raise InvalidEnsemble(f"{path}:{lineno + 1}: non-numeric entry")
    if not rows:
        raise InvalidEnsemble(f"{path} holds no vectors")
    if len({len(r) for r in rows}) != 1:
        raise InvalidEnsemble(f"{path}: rows differ in length")
    arr = np.array(rows, dtype=np.complex128)
    return arr.real.copy() if not np.any(arr.imag) else arr


def write_vectors_csv(path, vectors) -> None:
    vectors = np.asarray(vectors)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in vectors:
            writer.writerow([repr(complex(x)) if np.iscomplexobj(vectors) else repr(float(x)) for x in row])


def write_report_csv(path, rows: Iterable[tuple[str, int, float]]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER)
        for quantity, index, value in rows:
            writer.writerow([quantity, int(index), repr(float(value))])
    return path


def read_report_csv(path) -> list[tuple[str, int, float]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != REPORT_HEADER:
            raise CorruptFile(f"{path}: expected header {','.join(REPORT_HEADER)}")
        return [(q, int(i), float(v)) for q, i, v in reader]


def report_column(rows, quantity: str) -> np.ndarray:
    """Values of one quantity ordered by index."""
    picked = sorted((i, v) for q, i, v in rows if q == quantity)
    return np.array([v for _, v in picked])
