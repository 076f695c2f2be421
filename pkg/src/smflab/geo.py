"""Location encoding: Equal Earth projection, random Fourier features, and
the multi-scale MLP encoder that sums per-scale embeddings.

The Equal Earth forward mapping uses the projection's published polynomial
coefficients on a unit sphere.  Frequencies for the Fourier features are
drawn once per (seed, sigma) pair and are bitwise reconstructible from
those two values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nn
from . import tensor as T
from .errors import ContractError
from .tensor import Tensor

# Equal Earth polynomial coefficients (Savric / Patterson / Jenny 2019).
_A1 = 1.340264
_A2 = -0.081106
_A3 = 0.000893
_A4 = 0.003796
_M = np.sqrt(3.0) / 2.0

RFF_FREQUENCIES = 256  # frequency rows per scale; features are 2x this

DEFAULT_SCALES = (1.0, 16.0, 256.0)  # 2**0, 2**4, 2**8
FULL_SCALE_HIDDEN = (1024, 1024, 1024)
SYNTHETIC_HIDDEN = (128, 128)


@dataclass(frozen=True)
class GeoCoordinate:
    """Latitude / longitude in degrees, bounds-checked at construction."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise ContractError(f"latitude {self.lat} outside [-90, 90]")
        if not (-180.0 <= self.lon <= 180.0):
            raise ContractError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class ProjectedPoint:
    """Equal Earth plane coordinates on the unit sphere."""

    x: float
    y: float


def equal_earth_project_arrays(
    lat_deg: np.ndarray, lon_deg: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Equal Earth forward mapping (degrees in, plane units out)."""
    phi = np.deg2rad(np.asarray(lat_deg, dtype=np.float64))
    lam = np.deg2rad(np.asarray(lon_deg, dtype=np.float64))
    theta = np.arcsin(_M * np.sin(phi))
    t2 = theta * theta
    t6 = t2 * t2 * t2
    x = lam * np.cos(theta) / (_M * (_A1 + 3.0 * _A2 * t2 + t6 * (7.0 * _A3 + 9.0 * _A4 * t2)))
    y = theta * (_A1 + _A2 * t2 + t6 * (_A3 + _A4 * t2))
    return x, y


def equal_earth_project(coord: GeoCoordinate) -> ProjectedPoint:
    """Equal Earth forward mapping for a single coordinate."""
    x, y = equal_earth_project_arrays(
        np.asarray(coord.lat, dtype=np.float64),
        np.asarray(coord.lon, dtype=np.float64),
    )
    return ProjectedPoint(float(x), float(y))


class RffBasis:
    """Fixed 256x2 Gaussian frequency matrix at one spatial scale.

    The matrix is ``standard_normal((256, 2)) * sigma`` drawn from
    ``default_rng(seed)``, immutable afterwards; rebuilding from the same
    (seed, sigma) reproduces it bitwise.
    """

    def __init__(self, sigma: float, seed: int):
        if sigma <= 0:
            raise ContractError(f"rff scale must be positive, got {sigma}")
        self.sigma = float(sigma)
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        basis = rng.standard_normal((RFF_FREQUENCIES, 2)) * self.sigma
        basis.setflags(write=False)
        self.basis = basis


def rff_features_arrays(points: np.ndarray, basis: RffBasis) -> np.ndarray:
    """Fourier features for an (n, 2) array of projected points.

    Returns (n, 512): cosines of ``2*pi*B*p`` first, then sines.
    """
    points = np.asarray(points, dtype=np.float64)
    angles = (2.0 * np.pi) * (points @ basis.basis.T)
    out = np.empty((angles.shape[0], 2 * RFF_FREQUENCIES))
    np.cos(angles, out=out[:, :RFF_FREQUENCIES])
    np.sin(angles, out=out[:, RFF_FREQUENCIES:])
    return out


def rff_features(point: ProjectedPoint, basis: RffBasis) -> np.ndarray:
    """Fourier features of one projected point: 512 entries, cosines first."""
    return rff_features_arrays(
        np.array([[point.x, point.y]], dtype=np.float64), basis
    )[0]


def _scale_entropy(seed: int, sigma: float, stream: int) -> np.random.SeedSequence:
    # Keyed by the sigma value itself (not its position in the scale list) so
    # a single-scale encoder reproduces the matching slice of a multi-scale one.
    sigma_bits = int(np.float64(sigma).view(np.uint64))
    return np.random.SeedSequence([int(seed), sigma_bits, int(stream)])


class LocationEncoder:
    """Multi-scale location encoder: per-scale RFF -> MLP, summed.

    ``hidden`` follows the full-scale default of three 1024 layers; the
    synthetic benchmark passes two 128 layers.  All per-scale MLPs share
    the output width.

    The per-scale MLPs never interact before the final sum, so their
    parameters are stored stacked along a leading scale axis and each layer
    runs as one batched matrix product.  Initial values are drawn from
    per-(seed, sigma) streams, which keeps a single-scale encoder bitwise
    equal to the matching slice of a multi-scale one.
    """

    def __init__(
        self,
        out_width: int,
        seed: int,
        scales: Sequence[float] = DEFAULT_SCALES,
        hidden: Sequence[int] = FULL_SCALE_HIDDEN,
    ):
        if not scales:
            raise ContractError("location encoder needs at least one scale")
        self.out_width = int(out_width)
        self.seed = int(seed)
        self.scales = tuple(float(s) for s in scales)
        self.hidden = tuple(int(h) for h in hidden)
        self.bases = []
        widths = (2 * RFF_FREQUENCIES,) + self.hidden + (self.out_width,)
        self.widths = widths
        per_scale_rngs = []
        for sigma in self.scales:
            basis_seed = _scale_entropy(seed, sigma, 0).generate_state(1)[0]
            self.bases.append(RffBasis(sigma, int(basis_seed)))
            per_scale_rngs.append(np.random.default_rng(_scale_entropy(seed, sigma, 1)))
        self.weights = []
        self.biases = []
        for layer in range(len(widths) - 1):
            fan_in, fan_out = widths[layer], widths[layer + 1]
            stacked = np.stack(
                [nn.glorot_normal(rng, fan_in, fan_out) for rng in per_scale_rngs]
            )
            self.weights.append(Tensor(stacked, grad_enabled=True))
            self.biases.append(
                Tensor(np.zeros((len(self.scales), 1, fan_out)), grad_enabled=True)
            )

    def parameters(self) -> dict[str, Tensor]:
        params = {}
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            params[f"fc{layer}.weight"] = w
            params[f"fc{layer}.bias"] = b
        return params

    def features(self, lat_deg: np.ndarray, lon_deg: np.ndarray) -> np.ndarray:
        """Stacked (scales, n, 512) RFF blocks for a batch of coordinates.

        These depend only on the frozen bases, so callers may compute them
        once per dataset and reuse them across training steps.
        """
        x, y = equal_earth_project_arrays(lat_deg, lon_deg)
        points = np.stack([x, y], axis=-1)
        return np.stack([rff_features_arrays(points, basis) for basis in self.bases])

    def encode_features(self, feature_blocks: np.ndarray) -> Tensor:
        """Sum of per-scale MLP outputs over precomputed feature blocks."""
        x = (
            feature_blocks
            if isinstance(feature_blocks, Tensor)
            else Tensor(np.asarray(feature_blocks))
        )
        last = len(self.weights) - 1
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = T.linear(x, w, b)
            if layer != last:
                x = T.gelu(x)
        return T.sum_axis(x, axis=0)

    def encode_batch(self, lat_deg: np.ndarray, lon_deg: np.ndarray) -> Tensor:
        return self.encode_features(self.features(lat_deg, lon_deg))


def encode_location(coord: GeoCoordinate, encoder: LocationEncoder) -> np.ndarray:
    """Location embedding of a single coordinate (no gradient tracking)."""
    out = encoder.encode_batch(
        np.asarray([coord.lat], dtype=np.float64),
        np.asarray([coord.lon], dtype=np.float64),
    )
    return out.data[0]
