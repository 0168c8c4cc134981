"""Network parameters, node geometry and clustered mmWave MIMO channels.

Each AP-UE link is a sum of ``n_paths`` rank-one outer products of UPA
responses. Path 1 is the line-of-sight path with Rician power ``kappa``;
the remaining paths carry unit power, and the whole profile is scaled by
``1 / (kappa + n_paths - 1)`` so the expected path powers sum to one.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import linalg

SPEED_OF_LIGHT = 3e8


def dbm_to_watts(dbm):
    return 10.0 ** (dbm / 10.0) / 1000.0


@dataclass(frozen=True)
class NetworkConfig:
    """Scalar parameters of one simulated network.

    ``ap_grid`` and ``ue_grid`` are ``(columns, rows)`` of the planar
    arrays. The number of RF chains per AP is not a free parameter: it is
    the largest cluster a UE partition can produce, ``K - N + 1``.
    """

    n_aps: int = 5
    n_ues: int = 3
    n_clusters: int = 2
    ap_grid: tuple = (2, 2)
    ue_grid: tuple = (2, 1)
    n_paths: int = 3
    rician_factor: float = 4.0
    spacing_ratio: float = 0.5
    carrier_hz: float = 24e9
    tx_power_dbm: float = 35.0
    noise_psd_dbm_hz: float = -169.0
    bandwidth_hz: float = 100e6
    pathloss_exponent: float = 2.0
    radius_m: float = 18.0
    sic_margin_dbm: float = 1.0
    cluster_period: int = 1
    discount: float = 0.01
    learning_rate: float = 1e-3
    episodes_cluster: int = 2000
    episodes_beam: int = 2000
    steps_cluster: int = 200
    steps_beam: int = 200

    def __post_init__(self):
        object.__setattr__(self, "ap_grid", tuple(int(x) for x in self.ap_grid))
        object.__setattr__(self, "ue_grid", tuple(int(x) for x in self.ue_grid))
        self.validate()

    def validate(self):
        M, K, N = self.n_aps, self.n_ues, self.n_clusters
        if not 1 <= N <= M:
            raise ValueError(f"need 1 <= N <= M, got N={N}, M={M}")
        if K < N:
            raise ValueError(f"need K >= N, got K={K}, N={N}")
        if len(self.ap_grid) != 2 or len(self.ue_grid) != 2:
            raise ValueError("antenna grids are (columns, rows) pairs")
        if min(self.ap_grid + self.ue_grid) < 1:
            raise ValueError("antenna grid dimensions must be >= 1")
        if self.n_paths < 1:
            raise ValueError("need at least one path")
        if not self.rician_factor > 0:
            raise ValueError("Rician factor must be positive")
        if self.n_ap_antennas < self.n_ue_antennas:
            raise ValueError(
                f"AP antennas ({self.n_ap_antennas}) must be at least the UE antennas "
                f"({self.n_ue_antennas})")
        if self.radius_m < 0:
            raise ValueError("radius must be >= 0")
        if self.cluster_period < 1:
            raise ValueError("cluster period must be >= 1 slot")
        if not 0 <= self.discount < 1:
            raise ValueError("discount must lie in [0, 1)")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        for name in ("episodes_cluster", "episodes_beam", "steps_cluster", "steps_beam"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def n_ap_antennas(self):
        return self.ap_grid[0] * self.ap_grid[1]

    @property
    def n_ue_antennas(self):
        return self.ue_grid[0] * self.ue_grid[1]

    @property
    def rf_chains(self):
        return self.n_ues - self.n_clusters + 1

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def tx_power_w(self):
        return dbm_to_watts(self.tx_power_dbm)

    @property
    def noise_power_w(self):
        return dbm_to_watts(self.noise_psd_dbm_hz + 10.0 * math.log10(self.bandwidth_hz))

    @property
    def sic_margin_w(self):
        return dbm_to_watts(self.sic_margin_dbm)

    def with_(self, **changes):
        return replace(self, **changes)


def upa_response(elev, azim, grid, spacing_ratio=0.5):
    """Planar array response, flattened w-major (index ``w * rows + z``).

    Entry ``(w, z)`` is
    ``exp(j 2 pi (d/lambda) (w sin(elev) cos(azim) + z sin(azim)))``.
    Array-valued angles broadcast; the antenna index is the last axis.
    """
    cols, rows = grid
    if cols < 1 or rows < 1:
        raise ValueError("grid dimensions must be >= 1")
    w = np.repeat(np.arange(cols), rows)
    z = np.tile(np.arange(rows), cols)
    elev = np.asarray(elev, dtype=float)[..., None]
    azim = np.asarray(azim, dtype=float)[..., None]
    phase = 2 * np.pi * spacing_ratio * (
        w * np.sin(elev) * np.cos(azim) + z * np.sin(azim))
    return np.exp(1j * phase)


def sample_path_gains(n_paths, kappa, rng, size=None):
    """Complex small-scale gains of one link (or a batch of links).

    ``size`` prepends batch dimensions; the last axis always indexes paths.
    """
    if n_paths < 1 or not kappa > 0:
        raise ValueError("need n_paths >= 1 and kappa > 0")
    shape = (n_paths,) if size is None else tuple(np.atleast_1d(size)) + (n_paths,)
    var = np.ones(n_paths)
    var[0] = kappa
    alpha = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(var / 2)
    return alpha / np.sqrt(kappa + n_paths - 1)


def path_variances(n_paths, kappa):
    var = np.ones(n_paths)
    var[0] = kappa
    return var / (kappa + n_paths - 1)


def large_scale_gain(distance, cfg, ref_distance=1.0):
    """Free-space anchored path loss ``(lambda/(4 pi d0))^2 (d0/d)^exp``.

    Distances are clamped at ``ref_distance`` so co-located nodes keep a
    finite gain.
    """
    d = np.maximum(np.asarray(distance, dtype=float), ref_distance)
    anchor = (cfg.wavelength / (4 * np.pi * ref_distance)) ** 2
    return anchor * (ref_distance / d) ** cfg.pathloss_exponent


def _uniform_disc(n, radius, rng):
    r = radius * np.sqrt(rng.random(n))
    theta = rng.uniform(-np.pi, np.pi, n)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


@dataclass
class Geometry:
    """Node positions and per-link, per-path angles and gains.

    Angle and gain arrays have shape ``(K, M, n_paths)``; ``gain`` and
    ``distance`` are ``(K, M)``.
    """

    ap_positions: np.ndarray
    ue_positions: np.ndarray
    ap_elev: np.ndarray
    ap_azim: np.ndarray
    ue_elev: np.ndarray
    ue_azim: np.ndarray
    path_gains: np.ndarray
    distance: np.ndarray
    gain: np.ndarray

    @property
    def n_links(self):
        return self.gain.size


def sample_geometry(cfg, rng):
    """Drop APs and UEs uniformly on the disc and draw the path parameters.

    Positions are planar, so the line-of-sight path leaves the AP at
    elevation pi/2 (in the array plane) toward the UE bearing and arrives at
    the UE from the opposite bearing. Scattered paths draw elevation from
    [-pi/2, pi/2] and azimuth from [-pi, pi] independently at both ends.
    """
    M, K, L = cfg.n_aps, cfg.n_ues, cfg.n_paths
    ap_pos = _uniform_disc(M, cfg.radius_m, rng)
    ue_pos = _uniform_disc(K, cfg.radius_m, rng)
    diff = ue_pos[:, None, :] - ap_pos[None, :, :]
    distance = np.hypot(diff[..., 0], diff[..., 1])
    bearing = np.arctan2(diff[..., 1], diff[..., 0])

    shape = (K, M, L)
    ap_elev = rng.uniform(-np.pi / 2, np.pi / 2, shape)
    ap_azim = rng.uniform(-np.pi, np.pi, shape)
    ue_elev = rng.uniform(-np.pi / 2, np.pi / 2, shape)
    ue_azim = rng.uniform(-np.pi, np.pi, shape)
    ap_elev[..., 0] = np.pi / 2
    ue_elev[..., 0] = np.pi / 2
    ap_azim[..., 0] = bearing
    ue_azim[..., 0] = np.angle(np.exp(1j * (bearing + np.pi)))

    gains = sample_path_gains(L, cfg.rician_factor, rng, size=(K, M))
    return Geometry(
        ap_positions=ap_pos, ue_positions=ue_pos,
        ap_elev=ap_elev, ap_azim=ap_azim, ue_elev=ue_elev, ue_azim=ue_azim,
        path_gains=gains, distance=distance, gain=large_scale_gain(distance, cfg),
    )


@dataclass
class ChannelSet:
    """All ``u x a`` link matrices of one slot, ``matrices[k, m]``.

    SVD factors and the projector products used by the beamsteering
    objective are computed on first use and cached per link.
    """

    matrices: np.ndarray
    slot_index: int = 0
    path_gains: np.ndarray = None
    _svd: dict = field(default_factory=dict, repr=False)
    _proj: dict = field(default_factory=dict, repr=False)

    @property
    def n_ues(self):
        return self.matrices.shape[0]

    @property
    def n_aps(self):
        return self.matrices.shape[1]

    def __getitem__(self, km):
        return self.matrices[km]

    def svd(self, k, m):
        key = (k, m)
        if key not in self._svd:
            self._svd[key] = linalg.svd(self.matrices[k, m])
        return self._svd[key]

    def projected_sigma(self, k, m):
        """``(P_U1 S P_V1, P_U0 S P_V0)`` for link ``(k, m)``.

        ``S`` is the rectangular singular-value matrix and ``P_X`` the
        orthogonal projector onto the columns of ``X``; the row-vector
        projection of a combiner ``delta`` is ``delta^T P_U``, so the
        objective terms reduce to ``||delta^T K A||^2`` with these ``K``.
        """
        key = (k, m)
        if key not in self._proj:
            f = self.svd(k, m)
            u0, v0, u1, v1 = linalg.null_bases(f)
            s = f.sigma_matrix()
            k1 = linalg.projector(u1) @ s @ linalg.projector(v1)
            k0 = linalg.projector(u0) @ s @ linalg.projector(v0)
            self._proj[key] = (k1, k0)
        return self._proj[key]


def channel_from_paths(geom, cfg, gains=None, slot_index=0):
    """Assemble every link matrix from the geometry and the given path gains."""
    gains = geom.path_gains if gains is None else gains
    bu = upa_response(geom.ue_elev, geom.ue_azim, cfg.ue_grid, cfg.spacing_ratio)
    ba = upa_response(geom.ap_elev, geom.ap_azim, cfg.ap_grid, cfg.spacing_ratio)
    H = np.einsum("kml,kmlu,kmla->kmua", gains, bu, ba.conj())
    H *= np.sqrt(geom.gain)[..., None, None]
    return ChannelSet(matrices=H, slot_index=slot_index, path_gains=gains)


def sample_channel(geom, cfg, rng=None, slot_index=0):
    """Channel matrices for one slot.

    With ``rng=None`` the geometry's own path gains are used, so the same
    geometry always yields the same channels. With a generator, fresh
    small-scale gains are drawn for the slot while positions and angles
    stay fixed.
    """
    if rng is None:
        gains = geom.path_gains
    else:
        gains = sample_path_gains(cfg.n_paths, cfg.rician_factor, rng,
                                  size=geom.gain.shape)
    return channel_from_paths(geom, cfg, gains, slot_index)


DUMP_COLUMNS = ("k", "m", "path", "re", "im", "ap_elev", "ap_azim",
                "ue_elev", "ue_azim", "large_scale_gain")


def dump_channel_csv(geom, path, gains=None):
    """Write one row per (UE, AP, path) with the path gain and its angles."""
    gains = geom.path_gains if gains is None else gains
    K, M, L = gains.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DUMP_COLUMNS)
        for k in range(K):
            for m in range(M):
                for l in range(L):
                    g = gains[k, m, l]
                    w.writerow([k, m, l] + [f"{x:.17g}" for x in (
                        g.real, g.imag, geom.ap_elev[k, m, l], geom.ap_azim[k, m, l],
                        geom.ue_elev[k, m, l], geom.ue_azim[k, m, l], geom.gain[k, m])])


def load_channel_csv(path):
    """Rebuild a position-free :class:`Geometry` from :func:`dump_channel_csv`."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no channel rows")
    K = max(int(r["k"]) for r in rows) + 1
    M = max(int(r["m"]) for r in rows) + 1
    L = max(int(r["path"]) for r in rows) + 1
    arrays = {name: np.zeros((K, M, L)) for name in
              ("ap_elev", "ap_azim", "ue_elev", "ue_azim")}
    gains = np.zeros((K, M, L), dtype=complex)
    lsg = np.zeros((K, M))
    for r in rows:
        k, m, l = int(r["k"]), int(r["m"]), int(r["path"])
        gains[k, m, l] = float(r["re"]) + 1j * float(r["im"])
        for name in arrays:
            arrays[name][k, m, l] = float(r[name])
        lsg[k, m] = float(r["large_scale_gain"])
    return Geometry(ap_positions=np.zeros((M, 2)), ue_positions=np.zeros((K, 2)),
                    path_gains=gains, distance=np.full((K, M), np.nan), gain=lsg,
                    **arrays)
