"""Deterministic Cramer-Rao bound for 2D direction estimation under compression.

For S deterministic sources observed in one snapshot through a combining
network, the bound on the summed direction variances is

    C = sigma^2 / 2 * trace( [ Re( D^H P D  .*  (1_{2x2} kron R)^T ) ]^{-1} )

where G stacks the compressed source steering vectors, D their azimuth and
elevation derivatives (azimuth block first), P is the projector onto the
orthogonal complement of range(G), and R = x x^H is the rank-one sample
covariance of the source amplitudes.  Noise is white with variance sigma^2
at the compressed outputs; no whitening by the combining network is applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .array_model import ArrayGeometry, Direction, steering, steering_derivative
from .fileio import atomic_write_csv, atomic_write_json
from .scf_objective import CombiningMatrix, ScfGrid

__all__ = [
    "CONDITION_LIMIT",
    "RankDeficientSteeringError",
    "UnidentifiableScenarioError",
    "CrbScenario",
    "CrbResult",
    "CrbMap",
    "orthogonal_complement_projector",
    "crb",
    "crb_map",
    "write_crb_map",
]

CONDITION_LIMIT = 1e12

_MAP_KINDS = ("single", "azimuth-pair", "elevation-pair")


class RankDeficientSteeringError(ValueError):
    """The compressed source steering matrix is numerically rank deficient."""


class UnidentifiableScenarioError(ValueError):
    """The Fisher information matrix is singular or hopelessly ill conditioned."""

    def __init__(self, message: str, condition: float) -> None:
        super().__init__(message)
        self.condition = condition


@dataclass
class CrbScenario:
    """Sources, amplitudes, noise level, and the combining matrix under test.

    ``phi=None`` marks the uncompressed array (identity combining).
    """

    sources: tuple
    amplitudes: np.ndarray
    noise_variance: float
    phi: CombiningMatrix | None = None

    def __post_init__(self) -> None:
        self.sources = tuple(self.sources)
        if len(self.sources) < 1:
            raise ValueError("need at least one source")
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.shape[0] != len(self.sources):
            raise ValueError("need one amplitude per source")
        if not (np.all(np.isfinite(amps.real)) and np.all(np.isfinite(amps.imag))):
            raise ValueError("amplitudes must be finite")
        if not np.any(amps != 0.0):
            raise ValueError("amplitudes must not all be zero")
        self.amplitudes = amps
        if not (math.isfinite(self.noise_variance) and self.noise_variance > 0.0):
            raise ValueError("noise variance must be positive")


@dataclass(frozen=True)
class CrbResult:
    trace_value: float
    fim_condition: float


def orthogonal_complement_projector(columns: np.ndarray) -> np.ndarray:
    """I - G (G^H G)^{-1} G^H for a full-column-rank matrix G."""
    g = np.asarray(columns, dtype=complex)
    gram = g.conj().T @ g
    eig = np.linalg.eigvalsh(gram)
    if eig[0] <= 0.0 or eig[-1] / eig[0] > CONDITION_LIMIT:
        condition = math.inf if eig[0] <= 0.0 else float(eig[-1] / eig[0])
        raise RankDeficientSteeringError(
            f"source steering matrix is rank deficient (condition {condition:.3e})"
        )
    return np.eye(g.shape[0]) - g @ np.linalg.solve(gram, g.conj().T)


def _source_matrices(geometry: ArrayGeometry, sources, phi: CombiningMatrix | None):
    """Compressed steering matrix G (M x S) and derivative matrix D (M x 2S)."""
    a = np.column_stack([steering(geometry, d) for d in sources])
    derivs = [steering_derivative(geometry, d) for d in sources]
    d = np.column_stack([pair[0] for pair in derivs] + [pair[1] for pair in derivs])
    if phi is None:
        return a, d
    if phi.cols != geometry.element_count:
        raise ValueError(
            f"combining matrix has {phi.cols} columns but the array has "
            f"{geometry.element_count} elements"
        )
    return phi.entries @ a, phi.entries @ d


def crb(geometry: ArrayGeometry, scenario: CrbScenario) -> CrbResult:
    """Trace of the deterministic single-snapshot bound for the scenario."""
    g, d = _source_matrices(geometry, scenario.sources, scenario.phi)
    projector = orthogonal_complement_projector(g)
    sample_cov = np.outer(scenario.amplitudes, scenario.amplitudes.conj())
    # Tiling matches the [azimuth block, elevation block] column layout of D.
    weight = np.kron(np.ones((2, 2)), sample_cov).T
    fim = np.real((d.conj().T @ projector @ d) * weight)
    eig = np.linalg.eigvalsh(fim)
    condition = math.inf if eig[0] <= 0.0 else float(eig[-1] / eig[0])
    if eig[0] <= 0.0 or condition > CONDITION_LIMIT:
        raise UnidentifiableScenarioError(
            f"scenario is unidentifiable (FIM condition {condition:.3e})", condition
        )
    trace_inverse = float(np.sum(1.0 / eig))
    return CrbResult((0.5 * trace_inverse) * scenario.noise_variance, condition)


@dataclass
class CrbMap:
    """Per-cell bound values over a grid, with a status flag for every cell.

    ``values[i, j]`` corresponds to azimuth index i and elevation index j;
    cells whose status is not "ok" hold NaN.
    """

    grid: ScfGrid
    kind: str
    separation: float | None
    noise_variance: float
    values: np.ndarray
    status: np.ndarray

    def ok_mask(self) -> np.ndarray:
        return self.status == "ok"

    def ok_values(self) -> np.ndarray:
        return self.values[self.ok_mask()]

    def log10_statistics(self) -> dict:
        """Median and sample variance of log10(C) over the valid cells."""
        ok = self.ok_values()
        logs = np.log10(ok) if ok.size else np.array([])
        return {
            "cells_total": int(self.values.size),
            "cells_ok": int(ok.size),
            "median_log10_crb": float(np.median(logs)) if logs.size else math.nan,
            "variance_log10_crb": float(np.var(logs, ddof=1)) if logs.size > 1 else math.nan,
        }

    def to_metadata(self) -> dict:
        return {
            "kind": self.kind,
            "separation": self.separation,
            "noise_variance": self.noise_variance,
            "grid": self.grid.to_dict(),
            "statistics": self.log10_statistics(),
        }


def crb_map(
    geometry: ArrayGeometry,
    phi: CombiningMatrix | None,
    grid: ScfGrid,
    scenario_kind: str,
    separation: float | None = None,
    noise_variance: float = 1.0,
) -> CrbMap:
    """Evaluate the bound with source 1 swept over the grid.

    Pair kinds add a second unit-amplitude source offset by ``separation``
    in azimuth (wrapped modulo 2 pi) or elevation; elevation offsets that
    leave the open polar interval (0, pi) mark the cell "absent".  Cells
    where the bound does not exist are flagged, never dropped.
    """
    if scenario_kind not in _MAP_KINDS:
        raise ValueError(f"scenario_kind must be one of {_MAP_KINDS}")
    pair = scenario_kind != "single"
    if pair and (separation is None or not separation > 0.0):
        raise ValueError("pair scenarios need a positive separation")
    azimuths = grid.azimuths()
    elevations = grid.elevations()
    values = np.full((azimuths.size, elevations.size), math.nan)
    status = np.full((azimuths.size, elevations.size), "ok", dtype=object)
    for i, az in enumerate(azimuths):
        for j, el in enumerate(elevations):
            sources = [Direction(float(az), float(el))]
            if scenario_kind == "azimuth-pair":
                sources.append(Direction(float((az + separation) % (2.0 * math.pi)), float(el)))
            elif scenario_kind == "elevation-pair":
                partner = float(el + separation)
                if not 0.0 < partner < math.pi:
                    status[i, j] = "absent"
                    continue
                sources.append(Direction(float(az), partner))
            scenario = CrbScenario(
                tuple(sources), np.ones(len(sources)), noise_variance, phi
            )
            try:
                values[i, j] = crb(geometry, scenario).trace_value
            except RankDeficientSteeringError:
                status[i, j] = "rank-deficient"
            except UnidentifiableScenarioError:
                status[i, j] = "unidentifiable"
    return CrbMap(grid, scenario_kind, separation if pair else None, noise_variance, values, status)


def write_crb_map(map_: CrbMap, csv_path, metadata: dict | None = None):
    """Emit the map as CSV cells plus a JSON sidecar with scenario metadata."""
    rows = []
    azimuths = map_.grid.azimuths()
    elevations = map_.grid.elevations()
    for i, az in enumerate(azimuths):
        for j, el in enumerate(elevations):
            rows.append([repr(float(az)), repr(float(el)), repr(float(map_.values[i, j])), map_.status[i, j]])
    csv_path = atomic_write_csv(csv_path, ["azimuth", "elevation", "crb_value", "status"], rows)
    sidecar = map_.to_metadata()
    if metadata:
        sidecar.update(metadata)
    json_path = atomic_write_json(csv_path.with_suffix(".json"), sidecar)
    return csv_path, json_path
