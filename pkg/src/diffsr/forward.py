"""Linear measurement model: images, operators with singular systems, Gaussian noise.

The degradation is ``y = A(x) + n`` with ``A`` a linear map whose SVD is
available, and ``n ~ N(0, sigma_y^2 I)``.  The workhorse operator is block
averaging (each low-resolution pixel is the mean of an ``f x f`` block), whose
singular system is known in closed form and applied matrix-free.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np


def _as_array(x):
    """Accept ImageGrid / MeasurementVector / ndarray and return an ndarray."""
    return np.asarray(getattr(x, "data", x), dtype=float)


class ImageGrid:
    """A 2-D grayscale image with finite float values, row-major."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.ascontiguousarray(data, dtype=float)
        if arr.ndim != 2:
            raise ValueError(f"image must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image dimensions must be at least 1x1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite values")
        self.data = arr

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def ravel(self) -> np.ndarray:
        return self.data.ravel()

    @classmethod
    def from_flat(cls, vec, height: int, width: int) -> "ImageGrid":
        vec = np.asarray(vec, dtype=float)
        if vec.size != height * width:
            raise ValueError(f"expected {height * width} values, got {vec.size}")
        return cls(vec.reshape(height, width))

    @classmethod
    def constant(cls, height: int, width: int, value: float) -> "ImageGrid":
        return cls(np.full((height, width), float(value)))

    def __eq__(self, other):
        return isinstance(other, ImageGrid) and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"ImageGrid({self.height}x{self.width})"


class MeasurementVector:
    """A flat measurement vector with finite float values."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.ascontiguousarray(data, dtype=float)
        if arr.ndim != 1:
            raise ValueError(f"measurement must be 1-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("measurement contains non-finite values")
        self.data = arr

    @property
    def length(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other):
        return isinstance(other, MeasurementVector) and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"MeasurementVector(len={self.length})"


@dataclass(frozen=True)
class NoiseModel:
    """Isotropic Gaussian measurement noise with std ``sigma_y`` (0 = noiseless)."""

    sigma_y: float

    def __post_init__(self):
        if not np.isfinite(self.sigma_y) or self.sigma_y < 0:
            raise ValueError(f"sigma_y must be finite and >= 0, got {self.sigma_y}")


class LinearOperatorSVD(ABC):
    """Linear map with access to its singular system A = U diag(d) V^T.

    All vector methods accept arrays of shape ``(n,)`` or ``(..., n)`` and map
    the trailing axis; leading axes are treated as independent batch entries.
    ``to_v_basis``/``from_v_basis`` are mutually inverse orthonormal rotations
    ordered so the first ``min(m, n)`` coordinates pair with the singular
    values in descending order.
    """

    input_dim: int
    output_dim: int

    @property
    @abstractmethod
    def singular_values(self) -> np.ndarray:
        """Singular values d_1 >= ... >= d_min(m,n) >= 0."""

    @abstractmethod
    def apply(self, x: np.ndarray) -> np.ndarray:
        """A x, mapping (..., n) -> (..., m)."""

    @abstractmethod
    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """A^T y, mapping (..., m) -> (..., n)."""

    @abstractmethod
    def to_v_basis(self, x: np.ndarray) -> np.ndarray:
        """V^T x, mapping (..., n) -> (..., n)."""

    @abstractmethod
    def from_v_basis(self, coeffs: np.ndarray) -> np.ndarray:
        """V c, mapping (..., n) -> (..., n)."""

    def as_matrix(self) -> np.ndarray:
        """Densify by applying to the standard basis.  Intended for small n."""
        eye = np.eye(self.input_dim)
        return self.apply(eye).T.copy()


class DenseOperator(LinearOperatorSVD):
    """A dense matrix wrapped with its numerically computed full SVD."""

    def __init__(self, matrix):
        a = np.ascontiguousarray(matrix, dtype=float)
        if a.ndim != 2:
            raise ValueError(f"matrix must be 2-D, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix contains non-finite entries")
        m, n = a.shape
        if max(m, n) > 4096:
            raise ValueError("dense SVD limited to dimensions <= 4096")
        u, s, vt = np.linalg.svd(a, full_matrices=True)
        self._a = a
        self._u = u
        self._s = s
        self._vt = vt
        self.output_dim = m
        self.input_dim = n

    @property
    def singular_values(self) -> np.ndarray:
        return self._s

    def apply(self, x):
        return np.asarray(x, dtype=float) @ self._a.T

    def adjoint(self, y):
        return np.asarray(y, dtype=float) @ self._a

    def to_v_basis(self, x):
        return np.asarray(x, dtype=float) @ self._vt.T

    def from_v_basis(self, coeffs):
        return np.asarray(coeffs, dtype=float) @ self._vt

    def as_matrix(self):
        return self._a.copy()

    @property
    def u_matrix(self) -> np.ndarray:
        return self._u


def dense_operator_from_matrix(entries) -> DenseOperator:
    """Wrap an explicit m x n matrix as a LinearOperatorSVD (test oracle path)."""
    return DenseOperator(entries)


def _householder_block_basis(block_size: int) -> np.ndarray:
    """Orthonormal basis of R^k whose first column is the normalized constant.

    Columns 1..k-1 span the complement of the constant vector; the matrix is
    the (symmetric, involutive) Householder reflector mapping e_1 to the
    normalized constant, which makes the construction deterministic.
    """
    k = block_size
    v0 = np.full(k, 1.0 / np.sqrt(k))
    u = v0 - np.eye(k)[0]
    h = np.eye(k) - 2.0 * np.outer(u, u) / (u @ u)
    return h


class BlockAverageOperator(LinearOperatorSVD):
    """Block-average downsampling by an integer factor, with implicit SVD.

    Every singular value equals 1/f.  In the V basis the first m coordinates
    are the block means scaled by f (one per block, raster order) and the
    remaining n - m coordinates are within-block residuals expressed in a
    fixed per-block Householder basis of the complement of the constant
    vector.  U is the identity.
    """

    def __init__(self, factor: int, hr_height: int, hr_width: int):
        if int(factor) != factor or factor < 1:
            raise ValueError(f"factor must be a positive integer, got {factor}")
        factor = int(factor)
        if hr_height % factor or hr_width % factor:
            raise ValueError(
                f"image dims ({hr_height}x{hr_width}) must be divisible by factor {factor}"
            )
        self.factor = factor
        self.hr_height = int(hr_height)
        self.hr_width = int(hr_width)
        self.lr_height = hr_height // factor
        self.lr_width = hr_width // factor
        self.input_dim = self.hr_height * self.hr_width
        self.output_dim = self.lr_height * self.lr_width
        self._block = factor * factor
        self._basis = _householder_block_basis(self._block)

    @property
    def singular_values(self) -> np.ndarray:
        return np.full(self.output_dim, 1.0 / self.factor)

    def _to_blocks(self, x):
        """(..., n) -> (..., m, f^2) gathering each block's pixels contiguously."""
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        f = self.factor
        x = x.reshape(lead + (self.lr_height, f, self.lr_width, f))
        x = np.swapaxes(x, -3, -2)
        return x.reshape(lead + (self.output_dim, self._block))

    def _from_blocks(self, blocks):
        lead = blocks.shape[:-2]
        f = self.factor
        x = blocks.reshape(lead + (self.lr_height, self.lr_width, f, f))
        x = np.swapaxes(x, -3, -2)
        return x.reshape(lead + (self.input_dim,))

    def apply(self, x):
        return self._to_blocks(x).mean(axis=-1)

    def adjoint(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.output_dim:
            raise ValueError(f"expected trailing dim {self.output_dim}, got {y.shape[-1]}")
        blocks = np.repeat(y[..., :, None] / self._block, self._block, axis=-1)
        return self._from_blocks(blocks)

    def to_v_basis(self, x):
        coeffs = self._to_blocks(x) @ self._basis
        lead = coeffs.shape[:-2]
        means = coeffs[..., :, 0]
        resid = coeffs[..., :, 1:].reshape(lead + (-1,))
        return np.concatenate([means, resid], axis=-1)

    def from_v_basis(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != self.input_dim:
            raise ValueError(f"expected trailing dim {self.input_dim}, got {coeffs.shape[-1]}")
        lead = coeffs.shape[:-1]
        m = self.output_dim
        blocks = np.empty(lead + (m, self._block))
        blocks[..., :, 0] = coeffs[..., :m]
        blocks[..., :, 1:] = coeffs[..., m:].reshape(lead + (m, self._block - 1))
        return self._from_blocks(blocks @ self._basis.T)


def block_average_apply(op: BlockAverageOperator, x: ImageGrid) -> MeasurementVector:
    """Forward-project an HR image to its block means."""
    if x.shape != (op.hr_height, op.hr_width):
        raise ValueError(f"expected {op.hr_height}x{op.hr_width} image, got {x.height}x{x.width}")
    return MeasurementVector(op.apply(x.ravel()))


def block_average_adjoint(op: BlockAverageOperator, y: MeasurementVector) -> ImageGrid:
    """Adjoint: spread each measurement back over its block, divided by f^2."""
    if y.length != op.output_dim:
        raise ValueError(f"expected measurement of length {op.output_dim}, got {y.length}")
    return ImageGrid.from_flat(op.adjoint(y.data), op.hr_height, op.hr_width)


def block_average_v_basis(op: BlockAverageOperator, x: ImageGrid, direction: str) -> ImageGrid:
    """Rotate an HR image to ("to") or from ("from") the operator's V basis."""
    if x.shape != (op.hr_height, op.hr_width):
        raise ValueError(f"expected {op.hr_height}x{op.hr_width} image, got {x.height}x{x.width}")
    if direction == "to":
        out = op.to_v_basis(x.ravel())
    elif direction == "from":
        out = op.from_v_basis(x.ravel())
    else:
        raise ValueError(f"direction must be 'to' or 'from', got {direction!r}")
    return ImageGrid.from_flat(out, op.hr_height, op.hr_width)


def degrade(
    x: ImageGrid,
    op: LinearOperatorSVD,
    noise: NoiseModel,
    seed: int,
) -> MeasurementVector:
    """Measure an image: apply the operator and add seeded Gaussian noise."""
    flat = x.ravel()
    if flat.size != op.input_dim:
        raise ValueError(f"image has {flat.size} pixels, operator expects {op.input_dim}")
    y = op.apply(flat)
    if noise.sigma_y > 0:
        rng = np.random.default_rng(seed)
        y = y + noise.sigma_y * rng.standard_normal(y.shape)
    return MeasurementVector(y)
