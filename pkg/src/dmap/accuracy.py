"""Accuracy loss from coarsening the depth image, and its inverse.

``f(gamma)`` is the fraction of the free volume recovered with a relaxed image
(angular resolution scaled by ``gamma``) relative to the standard image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .depth_image import compute_resolution, rasterize
from .determination import determine_many
from .geometry import InvalidParameterError, ScanFrame, SensorModel, SensorPose
from .segtree2d import SegTree2D


@dataclass(frozen=True)
class AccuracyParams:
    """Constants of the accuracy function for a vertical half-FoV ``alpha_fov``."""

    alpha_fov: float

    def __post_init__(self) -> None:
        if not 0 <= self.alpha_fov <= math.pi / 2:
            raise InvalidParameterError("vertical half-FoV must lie in [0, pi/2]")

    @property
    def A(self) -> float:
        a = self.alpha_fov
        # the original ratio reduces to this form since its denominator equals sin(a);
        # the reduced form is also finite at a = 0
        return 12.0 / math.pi + 3.0 * math.tan(a / 2.0)

    @property
    def gamma0(self) -> float:
        g0 = math.sqrt(3.0) * math.sin(min(math.atan(1.0 / math.sqrt(2.0)) + self.alpha_fov, math.pi / 2))
        # exactly 1 at alpha = 0; keep round-off from pushing it below
        return max(1.0, g0)


@dataclass(frozen=True)
class SimOutcome:
    V_I: float
    V: float
    f_empirical: float


def f_of_gamma(gamma: float, params: AccuracyParams) -> float:
    if not gamma > 0:
        raise InvalidParameterError("relax factor must be positive")
    g0, A = params.gamma0, params.A
    if gamma <= g0:
        return 1.0
    return g0**3 / gamma**3 + A * (1.0 - g0 / gamma) / gamma**2


def gamma_for_accuracy(omega: float, params: AccuracyParams) -> float:
    """Largest real root of ``f(gamma) = omega`` (trigonometric Cardano form)."""
    if not 0 < omega <= 1:
        raise InvalidParameterError("target accuracy must lie in (0, 1]")
    if omega == 1:
        return 1.0
    A, g0 = params.A, params.gamma0
    # omega g^3 - A g + (A g0 - g0^3) = 0
    arg = -(A * g0 - g0**3) / (2.0 * omega) * (A / (3.0 * omega)) ** -1.5
    beta = math.acos(max(-1.0, min(1.0, arg))) / 3.0
    return 2.0 * math.sqrt(A / (3.0 * omega)) * math.cos(beta)


def sphere_scan(R: float, sensor: SensorModel, psi: float) -> ScanFrame:
    """Points at range just inside R, one per pixel centre of a grid with pitch ``psi``."""
    W = math.ceil(sensor.fov_h / psi)
    H = math.ceil(sensor.fov_v / psi)
    th = -sensor.fov_h / 2 + (np.arange(W) + 0.5) * psi
    ph = -sensor.fov_v / 2 + (np.arange(H) + 0.5) * psi
    TH, PH = np.meshgrid(th, ph)
    keep = np.abs(PH) <= sensor.fov_v / 2
    TH, PH = TH[keep], PH[keep]
    r = R * (1.0 - 1e-9)
    pts = r * np.stack([np.cos(PH) * np.cos(TH), np.cos(PH) * np.sin(TH), np.sin(PH)], axis=1)
    return ScanFrame(SensorPose.identity(), pts)


def sample_cells(R: float, d: float, alpha_fov: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Centres of lattice cells drawn uniformly from the ball of radius R within the elevation band."""
    out = []
    got = 0
    zmax = R * math.sin(alpha_fov)
    while got < n:
        p = rng.uniform(-1.0, 1.0, size=(2 * n, 3)) * np.array([R, R, zmax])
        r = np.linalg.norm(p, axis=1)
        el = np.arcsin(np.clip(p[:, 2] / np.maximum(r, 1e-300), -1.0, 1.0))
        p = p[(r < R) & (np.abs(el) <= alpha_fov)]
        out.append(p)
        got += len(p)
    p = np.concatenate(out)[:n]
    return (np.floor(p / d) + 0.5) * d


def _known_mask(centers, d, scan, sensor, gamma, eps=0.8) -> np.ndarray:
    spec = compute_resolution(d, sensor, gamma)
    image = rasterize(scan, spec, sensor)
    tree = SegTree2D.build(image)
    pose = scan.pose
    states = determine_many(
        centers, d, pose.matrix, pose.translation, spec.psi_I, spec.theta_min, spec.phi_min,
        spec.panoramic, tree.tmin, tree.tmax, tree.tsum, image.depth, image.point_hit, eps, 1.0,
    )
    return states == 1


def simulate_f(
    R: float, d: float, alpha_fov: float, gamma: float, seed: int = 0, n_cells: int = 200_000
) -> SimOutcome:
    """Monte-Carlo estimate of f(gamma) for an open sphere of returns at range R.

    The returns sit on the pixel centres of the standard image, so the
    standard image is fully observed.  Sampled cells are classified against
    both images with the production determination code.
    """
    if not 0 < d < R:
        raise InvalidParameterError("need 0 < d < R")
    sensor = SensorModel(R, 2 * math.pi, 2 * alpha_fov, 1e-9)
    psi1 = compute_resolution(d, sensor, 1.0).psi_I
    scan = sphere_scan(R, sensor, psi1)
    centers = sample_cells(R, d, alpha_fov, n_cells, np.random.default_rng(seed))
    region = 4.0 / 3.0 * math.pi * R**3 * math.sin(alpha_fov)
    k1 = _known_mask(centers, d, scan, sensor, 1.0)
    kg = k1 if gamma == 1.0 else _known_mask(centers, d, scan, sensor, gamma)
    n1, ng = int(k1.sum()), int(kg.sum())
    V_I = region * n1 / len(centers)
    V = region * ng / len(centers)
    return SimOutcome(V_I, V, ng / n1 if n1 else float("nan"))
