# edge_core/scenario.py

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Optional, Tuple

import numpy as np

import constants as C
from edge_core.errors import InvalidScenarioError, SchemaError
from edge_core.model import Allocation, Scenario, ServerProfile, UserProfile
from edge_core.run_store import read_json, write_json

logger = logging.getLogger(__name__)

# ─────────────────────────────────────────────────────────────────────────────
# Configuration
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ScenarioConfig:
    n_users: int = C.DEFAULT_N_USERS
    n_servers: int = C.DEFAULT_N_SERVERS
    area_m: float = C.DEFAULT_AREA_M
    seed: int = C.DEFAULT_SEED
    b_max_hz: float = C.DEFAULT_B_MAX_HZ
    p_max_user_w: float = C.DEFAULT_P_MAX_USER_W
    p_max_server_w: float = C.DEFAULT_P_MAX_SERVER_W
    f_max_user: float = C.DEFAULT_F_MAX_USER
    f_max_server: float = C.DEFAULT_F_MAX_SERVER
    kappa_user: float = C.DEFAULT_KAPPA
    kappa_server: float = C.DEFAULT_KAPPA
    adapter_params: Tuple[float, float] = C.DEFAULT_ADAPTER_PARAMS
    token_bits: Tuple[float, float] = C.DEFAULT_TOKEN_BITS
    omega_t: float = C.DEFAULT_OMEGA_T
    omega_e: float = C.DEFAULT_OMEGA_E
    varpi1: float = C.DEFAULT_VARPI1
    varpi2: float = C.DEFAULT_VARPI2
    omega_b: float = C.DEFAULT_OMEGA_B
    epochs_user: float = C.DEFAULT_EPOCHS
    epochs_server: float = C.DEFAULT_EPOCHS
    noise_dbm_per_hz: float = C.DEFAULT_NOISE_DBM_PER_HZ
    bits_per_token: float = C.DEFAULT_BITS_PER_TOKEN
    flops_per_param_token: float = C.DEFAULT_FLOPS_PER_PARAM_TOKEN

    def __post_init__(self):
        object.__setattr__(self, "adapter_params", tuple(float(v) for v in self.adapter_params))
        object.__setattr__(self, "token_bits", tuple(float(v) for v in self.token_bits))
        if self.n_users < 1 or self.n_servers < 1:
            raise InvalidScenarioError("n_users and n_servers must be >= 1")
        if not self.area_m > 0:
            raise InvalidScenarioError("area_m must be positive")
        for name in ("adapter_params", "token_bits"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise InvalidScenarioError(f"{name} range [{lo}, {hi}] is empty or nonpositive")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidScenarioError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    # Required keys of a config document; everything else has a default
    REQUIRED = ("n_users", "n_servers")

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "scenario") -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise SchemaError(path, "expected an object")
        known = {f.name: f for f in fields(cls)}
        for key in data:
            if key not in known:
                raise SchemaError(f"{path}.{key}", "unknown field")
        for key in cls.REQUIRED:
            if key not in data:
                raise SchemaError(f"{path}.{key}", "missing required field")
        values: Dict[str, Any] = {}
        for key, value in data.items():
            default = known[key].default
            if isinstance(default, tuple):
                if not (isinstance(value, list) and len(value) == 2 and all(_is_number(v) for v in value)):
                    raise SchemaError(f"{path}.{key}", "expected [low, high]")
                values[key] = tuple(float(v) for v in value)
            elif isinstance(default, int) and not isinstance(default, bool):
                if not isinstance(value, int) or isinstance(value, bool):
                    raise SchemaError(f"{path}.{key}", "expected an integer")
                values[key] = value
            else:
                if not _is_number(value):
                    raise SchemaError(f"{path}.{key}", "expected a number")
                values[key] = float(value)
        try:
            return cls(**values)
        except InvalidScenarioError as e:
            raise SchemaError(path, str(e)) from e

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["adapter_params"] = list(self.adapter_params)
        data["token_bits"] = list(self.token_bits)
        return data


@dataclass(frozen=True)
class RngSpec:
    """Portable generator: numpy's PCG64 bit generator seeded with a 64-bit integer."""
    seed: int
    algorithm: str = C.PRNG_ALGORITHM

    def generator(self) -> np.random.Generator:
        if self.algorithm != "PCG64":
            raise InvalidScenarioError(f"unsupported PRNG {self.algorithm}")
        return np.random.Generator(np.random.PCG64(self.seed))


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)

# ─────────────────────────────────────────────────────────────────────────────
# Channel and workload helpers
# ─────────────────────────────────────────────────────────────────────────────

def adapter_param_count(d_in: int, d_adapt: int, d_out: int) -> int:
    """Parameters of a bottleneck adapter: two weight matrices plus their biases."""
    if min(d_in, d_adapt, d_out) < 1:
        raise ValueError(f"adapter dimensions must be >= 1, got ({d_in}, {d_adapt}, {d_out})")
    return d_in * d_adapt + d_adapt * d_out + d_adapt + d_out


def path_loss_db(d_km):
    """128.1 + 37.6·log10(d) with d in kilometers."""
    d = np.asarray(d_km, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be strictly positive")
    loss = 128.1 + 37.6 * np.log10(d)
    return float(loss) if loss.ndim == 0 else loss


def rayleigh_power_fades(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-mean exponential power gains by inverse CDF of uniform draws."""
    return -np.log1p(-rng.random(shape))


def noise_psd_w_per_hz(dbm_per_hz: float) -> float:
    return 10.0 ** (dbm_per_hz / 10.0) * 1e-3


def generate(cfg: ScenarioConfig) -> Scenario:
    """
    Draw a scenario. The order of draws is fixed: user positions, server
    positions, adapter sizes, token bits, fading.
    """
    rng = RngSpec(cfg.seed).generator()
    n, m = cfg.n_users, cfg.n_servers

    user_xy = rng.random((n, 2)) * cfg.area_m
    server_xy = rng.random((m, 2)) * cfg.area_m
    lo, hi = cfg.adapter_params
    d = lo + (hi - lo) * rng.random(n)
    lo, hi = cfg.token_bits
    bits = lo + (hi - lo) * rng.random(n)
    fades = rayleigh_power_fades(rng, (n, m))

    dist_m = np.hypot(user_xy[:, None, 0] - server_xy[None, :, 0], user_xy[:, None, 1] - server_xy[None, :, 1])
    dist_km = np.maximum(dist_m, C.MIN_LINK_DISTANCE_M) / 1000.0
    g = 10.0 ** (-path_loss_db(dist_km) / 10.0) * fades
    t = cfg.flops_per_param_token * bits / cfg.bits_per_token

    users = tuple(
        UserProfile(
            position=(float(user_xy[i, 0]), float(user_xy[i, 1])),
            d=float(d[i]), t=float(t[i]), e=cfg.epochs_user,
            F_max=cfg.f_max_user, p_max=cfg.p_max_user_w, kappa=cfg.kappa_user,
        )
        for i in range(n)
    )
    servers = tuple(
        ServerProfile(
            position=(float(server_xy[j, 0]), float(server_xy[j, 1])),
            b_max=cfg.b_max_hz, p_max=cfg.p_max_server_w, F_max=cfg.f_max_server,
            e=cfg.epochs_server, kappa=cfg.kappa_server,
        )
        for j in range(m)
    )
    scn = Scenario(
        users=users, servers=servers, g=g,
        sigma2=noise_psd_w_per_hz(cfg.noise_dbm_per_hz),
        omega_t=cfg.omega_t, omega_e=cfg.omega_e,
        varpi1=cfg.varpi1, varpi2=cfg.varpi2, omega_b=cfg.omega_b,
        seed=cfg.seed,
    )
    logger.debug(f"🎲 Generated scenario N={n}, M={m}, seed={cfg.seed}")
    return scn

# ─────────────────────────────────────────────────────────────────────────────
# JSON schema
# ─────────────────────────────────────────────────────────────────────────────

def scenario_to_dict(scn: Scenario) -> Dict[str, Any]:
    return {
        "users": [
            {"position": list(u.position), "d": u.d, "t": u.t, "e": u.e,
             "F_max": u.F_max, "p_max": u.p_max, "kappa": u.kappa}
            for u in scn.users
        ],
        "servers": [
            {"position": list(s.position), "b_max": s.b_max, "p_max": s.p_max,
             "F_max": s.F_max, "e": s.e, "kappa": s.kappa}
            for s in scn.servers
        ],
        "g": scn.g.tolist(),
        "sigma2": scn.sigma2,
        "omega_t": scn.omega_t,
        "omega_e": scn.omega_e,
        "varpi1": scn.varpi1,
        "varpi2": scn.varpi2,
        "omega_b": scn.omega_b,
        "seed": scn.seed,
    }


def allocation_to_dict(a: Allocation) -> Dict[str, Any]:
    return {
        "x": a.x.tolist(), "phi": a.phi.tolist(), "b": a.b.tolist(),
        "p_u": a.p_u.tolist(), "p_s": a.p_s.tolist(),
        "f_u": a.f_u.tolist(), "f_s": a.f_s.tolist(), "T": a.T,
    }


def _field(data: Dict[str, Any], key: str, path: str):
    if not isinstance(data, dict):
        raise SchemaError(path, "expected an object")
    if key not in data:
        raise SchemaError(f"{path}.{key}", "missing required field")
    return data[key]


def _number(data, key, path) -> float:
    value = _field(data, key, path)
    if not _is_number(value):
        raise SchemaError(f"{path}.{key}", "expected a finite number")
    return float(value)


def _matrix(data, key, path, shape) -> np.ndarray:
    value = _field(data, key, path)
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError(f"{path}.{key}", "expected numbers")
    if arr.shape != shape or not np.all(np.isfinite(arr)):
        raise SchemaError(f"{path}.{key}", f"expected finite array of shape {shape}")
    return arr


def _position(data, path) -> Tuple[float, float]:
    value = _field(data, "position", path)
    if not (isinstance(value, list) and len(value) == 2 and all(_is_number(v) for v in value)):
        raise SchemaError(f"{path}.position", "expected [x, y]")
    return float(value[0]), float(value[1])


def scenario_from_dict(data: Dict[str, Any], path: str = "scenario") -> Scenario:
    users_raw = _field(data, "users", path)
    servers_raw = _field(data, "servers", path)
    if not isinstance(users_raw, list) or not users_raw:
        raise SchemaError(f"{path}.users", "expected a nonempty list")
    if not isinstance(servers_raw, list) or not servers_raw:
        raise SchemaError(f"{path}.servers", "expected a nonempty list")
    try:
        users = tuple(
            UserProfile(
                position=_position(u, f"{path}.users[{i}]"),
                **{k: _number(u, k, f"{path}.users[{i}]") for k in ("d", "t", "e", "F_max", "p_max", "kappa")},
            )
            for i, u in enumerate(users_raw)
        )
        servers = tuple(
            ServerProfile(
                position=_position(s, f"{path}.servers[{j}]"),
                **{k: _number(s, k, f"{path}.servers[{j}]") for k in ("b_max", "p_max", "F_max", "e", "kappa")},
            )
            for j, s in enumerate(servers_raw)
        )
        seed = data.get("seed")
        if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
            raise SchemaError(f"{path}.seed", "expected an integer or null")
        return Scenario(
            users=users, servers=servers,
            g=_matrix(data, "g", path, (len(users), len(servers))),
            sigma2=_number(data, "sigma2", path),
            omega_t=_number(data, "omega_t", path),
            omega_e=_number(data, "omega_e", path),
            varpi1=_number(data, "varpi1", path),
            varpi2=_number(data, "varpi2", path),
            omega_b=_number(data, "omega_b", path),
            seed=seed,
        )
    except InvalidScenarioError as e:
        raise SchemaError(path, str(e)) from e


def allocation_from_dict(data: Dict[str, Any], n: int, m: int, path: str = "allocation") -> Allocation:
    return Allocation(
        x=_matrix(data, "x", path, (n, m)),
        phi=_matrix(data, "phi", path, (n,)),
        b=_matrix(data, "b", path, (n, m)),
        p_u=_matrix(data, "p_u", path, (n,)),
        p_s=_matrix(data, "p_s", path, (n, m)),
        f_u=_matrix(data, "f_u", path, (n,)),
        f_s=_matrix(data, "f_s", path, (n, m)),
        T=_number(data, "T", path),
    )


def scenario_hash(scn: Scenario) -> str:
    canonical = json.dumps(scenario_to_dict(scn), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def save(scn: Scenario, path: str, allocation: Optional[Allocation] = None,
         extra: Optional[Dict[str, Any]] = None) -> str:
    """Write a scenario (optionally with an allocation) as versioned JSON."""
    doc: Dict[str, Any] = {
        "schema_version": C.SCHEMA_VERSION,
        "kind": "scenario" if allocation is None else "solution",
        "scenario_hash": scenario_hash(scn),
        "scenario": scenario_to_dict(scn),
    }
    if allocation is not None:
        doc["allocation"] = allocation_to_dict(allocation)
    if extra:
        doc.update(extra)
    write_json(path, doc)
    logger.info(f"💾 Saved {doc['kind']} to {path}")
    return path


def load_with_allocation(path: str) -> Tuple[Scenario, Optional[Allocation]]:
    doc = read_json(path)
    version = doc.get("schema_version") if isinstance(doc, dict) else None
    if version != C.SCHEMA_VERSION:
        raise SchemaError("schema_version", f"expected {C.SCHEMA_VERSION}, got {version!r}")
    scn = scenario_from_dict(_field(doc, "scenario", "$"), "scenario")
    allocation = None
    if doc.get("allocation") is not None:
        allocation = allocation_from_dict(doc["allocation"], scn.N, scn.M)
    return scn, allocation


def load(path: str) -> Scenario:
    return load_with_allocation(path)[0]


def load_config(path: str) -> ScenarioConfig:
    """Read a scenario-config document: {"schema_version": 1, "scenario": {...}}."""
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise SchemaError("config", "expected an object")
    version = doc.get("schema_version", C.SCHEMA_VERSION)
    if version != C.SCHEMA_VERSION:
        raise SchemaError("config.schema_version", f"expected {C.SCHEMA_VERSION}, got {version!r}")
    return ScenarioConfig.from_dict(_field(doc, "scenario", "config"), "config.scenario")
