"""Topologies, channel realizations and experiment configuration."""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields, replace

import numpy as np

__all__ = [
    "ScenarioConfig",
    "Topology",
    "ChannelSet",
    "ConfigError",
    "GeometryError",
    "dbm_to_watt",
    "db_to_linear",
    "load_config",
    "trial_rng",
    "generate_topology",
    "assign_receivers",
    "generate_channels",
    "generate_scenario",
]

K0_DB = -40.0
PATHLOSS_EXPONENT = 2.8
NORMALIZED_SENSING_GAIN = 0.05


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


class GeometryError(ValueError):
    """Degenerate topology (e.g. a UE sitting on a transmitter)."""


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    m_t: int = 4
    m_r: int = 2
    k: int = 4
    n: int = 4
    l: int = 12
    region_tx_lambda: float = 2.0
    region_rx_lambda: float = 1.0
    p_t_dbm: float = 20.0
    gamma_db: float = 10.0
    gamma: float | None = None  # linear override of gamma_db
    p_fa: float = 0.05
    t_snapshots: int = 10
    model: str = "geometric"  # or "normalized"
    seed: int = 0
    radius_m: float = 200.0
    noise_dbm: float = -95.0
    snr: float = 4.0  # normalized model only: P_t / sigma^2
    wavelength_m: float = 0.1
    rcs_var: float = 1.0
    target: tuple | None = None  # fixed target position in meters

    def __post_init__(self):
        for name in ("m_t", "m_r", "n", "l", "t_snapshots"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.k < 0:
            raise ConfigError("k must be nonnegative")
        if self.region_tx_lambda < 0 or self.region_rx_lambda < 0:
            raise ConfigError("region sizes must be nonnegative")
        if not 0.0 < self.p_fa < 1.0:
            raise ConfigError("p_fa must lie in (0, 1)")
        if self.gamma_linear < 0:
            raise ConfigError("gamma must be nonnegative")
        if self.model not in ("geometric", "normalized"):
            raise ConfigError(f"unknown channel model {self.model!r}")
        if self.radius_m < 0:
            raise ConfigError("radius must be nonnegative")
        if self.radius_m == 0 and self.m_t + self.m_r + self.k > 0:
            raise ConfigError("zero radius cannot host any node")
        if self.wavelength_m <= 0 or self.snr <= 0:
            raise ConfigError("wavelength and snr must be positive")

    @property
    def gamma_linear(self) -> float:
        return float(self.gamma) if self.gamma is not None else db_to_linear(self.gamma_db)

    @property
    def p_t(self) -> float:
        """Per-transmitter power budget in watts (1 in the normalized model)."""
        return 1.0 if self.model == "normalized" else dbm_to_watt(self.p_t_dbm)

    @property
    def noise_power(self) -> float:
        if self.model == "normalized":
            return self.p_t / self.snr
        return dbm_to_watt(self.noise_dbm)

    @property
    def n_aps(self) -> int:
        return self.m_t + self.m_r

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


_INT_KEYS = {"m_t", "m_r", "k", "n", "l", "t_snapshots", "seed"}
_STR_KEYS = {"model"}


def load_config(path_or_text: str, *, text: bool = False) -> ScenarioConfig:
    """Parse an INI-style config; every section is merged into one namespace.

    Unknown keys and unparsable values raise :class:`ConfigError` naming the
    offending line.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        if text:
            parser.read_string(path_or_text)
        else:
            with open(path_or_text) as fh:
                parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc

    lines = (path_or_text if text else open(path_or_text).read()).splitlines()

    def lineno(key):
        for i, line in enumerate(lines, 1):
            if line.strip().lower().startswith(key):
                return i
        return "?"

    known = {f.name for f in fields(ScenarioConfig)}
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"line {lineno(key)}: unknown key {key!r}")
            try:
                if key in _INT_KEYS:
                    values[key] = int(raw)
                elif key in _STR_KEYS:
                    values[key] = raw.strip()
                elif key == "target":
                    x, y = (float(v) for v in raw.split(","))
                    values[key] = (x, y)
                else:
                    values[key] = float(raw)
            except ValueError as exc:
                raise ConfigError(f"line {lineno(key)}: bad value for {key!r}: {raw!r}") from exc
    try:
        return ScenarioConfig(**values)
    except ConfigError as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def trial_rng(seed: int, trial: int = 0) -> np.random.Generator:
    """Independent stream per (master seed, trial index)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))


@dataclass(frozen=True)
class Topology:
    ap_positions: np.ndarray  # (n_aps, 2) meters
    ue_positions: np.ndarray  # (K, 2)
    target_position: np.ndarray  # (2,)
    tx_indices: np.ndarray
    rx_indices: np.ndarray

    @property
    def tx_positions(self):
        return self.ap_positions[self.tx_indices]

    @property
    def rx_positions(self):
        return self.ap_positions[self.rx_indices]


def _uniform_disk(rng, count, radius):
    r = radius * np.sqrt(rng.random(count))
    th = 2 * np.pi * rng.random(count)
    return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)


def generate_topology(config: ScenarioConfig, rng: np.random.Generator | None = None) -> Topology:
    if rng is None:
        rng = trial_rng(config.seed)
    aps = _uniform_disk(rng, config.n_aps, config.radius_m)
    ues = _uniform_disk(rng, config.k, config.radius_m)
    if config.target is not None:
        target = np.asarray(config.target, dtype=float)
    else:
        target = _uniform_disk(rng, 1, config.radius_m)[0]
    tx, rx = assign_receivers(aps, target, config.m_r)
    return Topology(aps, ues, target, tx, rx)


def assign_receivers(aps: np.ndarray, target: np.ndarray, m_r: int):
    """(tx_indices, rx_indices): the m_r APs nearest the target receive; ties favor lower indices."""
    dist = np.linalg.norm(np.asarray(aps) - np.asarray(target), axis=1)
    order = np.argsort(dist, kind="stable")
    return np.sort(order[m_r:]), np.sort(order[:m_r])


@dataclass(frozen=True)
class ChannelSet:
    aod: np.ndarray  # (M_t, K, L, 2) elevation, azimuth
    aoa: np.ndarray  # (M_t, K, L, 2)
    upsilon: np.ndarray  # (M_t, K, L) complex path responses
    sensing_aod: np.ndarray  # (M_t, 2)
    beta: np.ndarray  # (M_t, M_r) sensing path loss
    rcs_var: np.ndarray  # (M_t, M_r)
    alpha: np.ndarray  # (M_r * M_t,) realized RCS, index r * M_t + t
    b_rx: np.ndarray  # (M_r, N) unit-modulus receive steering
    noise_ue: np.ndarray  # (K,) watts
    noise_rx: float
    wavelength: float
    p_t: float
    snapshots: int

    @property
    def m_t(self):
        return self.upsilon.shape[0]

    @property
    def k(self):
        return self.upsilon.shape[1]

    @property
    def l(self):
        return self.upsilon.shape[2]

    @property
    def m_r(self):
        return self.beta.shape[1]

    @property
    def n(self):
        return self.b_rx.shape[1]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for f in fields(self):
            h.update(np.ascontiguousarray(getattr(self, f.name)).tobytes())
        return h.hexdigest()

    def with_k(self, keep) -> "ChannelSet":
        keep = np.asarray(keep, dtype=int)
        return replace(
            self,
            aod=self.aod[:, keep],
            aoa=self.aoa[:, keep],
            upsilon=self.upsilon[:, keep],
            noise_ue=self.noise_ue[keep],
        )


def generate_channels(
    topology: Topology, config: ScenarioConfig, rng: np.random.Generator | None = None
) -> ChannelSet:
    if rng is None:
        rng = trial_rng(config.seed)
    mt, mr, k, l, n = config.m_t, config.m_r, config.k, config.l, config.n
    tx, rx, ues, tgt = topology.tx_positions, topology.rx_positions, topology.ue_positions, topology.target_position

    aod = np.pi * rng.random((mt, k, l, 2))
    aoa = np.pi * rng.random((mt, k, l, 2))
    sensing_aod = np.pi * rng.random((mt, 2))
    gauss = (rng.standard_normal((mt, k, l)) + 1j * rng.standard_normal((mt, k, l))) / np.sqrt(2)
    rcs_var = np.full((mt, mr), float(config.rcs_var))
    alpha_std = np.sqrt(rcs_var.T.ravel())  # r-major ordering
    alpha = alpha_std * (rng.standard_normal(mr * mt) + 1j * rng.standard_normal(mr * mt)) / np.sqrt(2)
    b_rx = np.exp(2j * np.pi * rng.random((mr, n)))

    if config.model == "normalized":
        var = np.full((mt, k), 1.0 / l)
        beta = np.full((mt, mr), NORMALIZED_SENSING_GAIN)
    else:
        d_tk = np.linalg.norm(tx[:, None, :] - ues[None, :, :], axis=-1)
        d_t0 = np.linalg.norm(tx - tgt, axis=-1)
        d_r0 = np.linalg.norm(rx - tgt, axis=-1)
        if (d_tk == 0).any() or (d_t0 == 0).any() or (d_r0 == 0).any():
            raise GeometryError("zero distance between a transmitter and a UE or the target")
        var = db_to_linear(K0_DB) * d_tk ** (-PATHLOSS_EXPONENT) / l
        lam = config.wavelength_m
        beta = lam**2 / ((4 * np.pi) ** 3 * d_t0[:, None] ** 2 * d_r0[None, :] ** 2)
    upsilon = np.sqrt(var)[..., None] * gauss

    noise = config.noise_power
    return ChannelSet(
        aod=aod,
        aoa=aoa,
        upsilon=upsilon,
        sensing_aod=sensing_aod,
        beta=beta,
        rcs_var=rcs_var,
        alpha=alpha,
        b_rx=b_rx,
        noise_ue=np.full(k, noise),
        noise_rx=noise,
        wavelength=config.wavelength_m,
        p_t=config.p_t,
        snapshots=config.t_snapshots,
    )


def generate_scenario(config: ScenarioConfig, trial: int = 0):
    """Topology and channels for one trial, from a single deterministic stream."""
    rng = trial_rng(config.seed, trial)
    topo = generate_topology(config, rng)
    return topo, generate_channels(topo, config, rng)
