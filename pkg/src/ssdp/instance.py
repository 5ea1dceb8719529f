"""SSDP instances: data model, validation, JSON documents and a seeded generator."""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass, replace
from typing import Any, Mapping, Sequence

import numpy as np

from .queueing import INF, LocationScaleSpec


class InstanceError(ValueError):
    """Raised for malformed or invariant-violating instance data."""

    def __init__(self, problems: Sequence[str] | str):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class FacilitySpec:
    """Candidate service facility.

    ``m`` and ``M`` bound the service rate of an open facility; ``M`` may be
    ``inf``. Costs are per unit time (``ec``), per unit of service rate
    (``sc``) and per customer-time unit spent in the system (``wc``).
    """

    id: int
    ec: float
    sc: float
    wc: float
    m: float
    M: float
    variance: LocationScaleSpec


@dataclass(frozen=True)
class DemandZone:
    id: int
    lam: float


TERMS = ("establish", "serve", "wait", "travel")


@dataclass(frozen=True, eq=False)
class Instance:
    facilities: tuple[FacilitySpec, ...]
    zones: tuple[DemandZone, ...]
    tc: np.ndarray
    d: np.ndarray | None = None
    weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "facilities", tuple(self.facilities))
        object.__setattr__(self, "zones", tuple(self.zones))
        tc = np.array(self.tc, dtype=float, copy=True)
        tc.setflags(write=False)
        object.__setattr__(self, "tc", tc)
        if self.d is not None:
            d = np.array(self.d, dtype=float, copy=True)
            d.setflags(write=False)
            object.__setattr__(self, "d", d)
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    @property
    def n_facilities(self) -> int:
        return len(self.facilities)

    @property
    def n_zones(self) -> int:
        return len(self.zones)

    @property
    def lam(self) -> np.ndarray:
        return np.array([z.lam for z in self.zones], dtype=float)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        if (other.d is None) != (self.d is None):
            return False
        return (
            self.facilities == other.facilities
            and self.zones == other.zones
            and self.weights == other.weights
            and self.tc.shape == other.tc.shape
            and np.array_equal(self.tc, other.tc)
            and (self.d is None or np.array_equal(self.d, other.d))
        )

    __hash__ = None

    def fold_weights(self) -> "Instance":
        """Return an equivalent instance with the term weights pushed into the costs."""
        we, ws, ww, wt = self.weights
        if self.weights == (1.0, 1.0, 1.0, 1.0):
            return self
        facs = tuple(
            FacilitySpec(f.id, f.ec * we, f.sc * ws, f.wc * ww, f.m, f.M, f.variance)
            for f in self.facilities
        )
        return Instance(facs, self.zones, self.tc * wt, self.d)

    def replace_facilities(self, **changes: Any) -> "Instance":
        """Copy with the given ``FacilitySpec`` fields overridden on every facility."""
        facs = tuple(replace(f, **changes) for f in self.facilities)
        return Instance(facs, self.zones, self.tc, self.d, self.weights)


# ---------------------------------------------------------------------------
# validation


def _type_violations(inst: Instance) -> list[str]:
    out: list[str] = []
    nI, nJ = inst.n_facilities, inst.n_zones
    if nI == 0:
        out.append("instance has no facilities")
    if nJ == 0:
        out.append("instance has no demand zones")
    for f in inst.facilities:
        tag = f"facility {f.id}"
        for name in ("ec", "sc", "wc"):
            val = getattr(f, name)
            if not (val >= 0) or math.isinf(val):
                out.append(f"{tag}: {name} must be finite and nonnegative")
        if not (f.m >= 0) or math.isinf(f.m):
            out.append(f"{tag}: m must be finite and nonnegative")
        if not (f.M > 0):
            out.append(f"{tag}: M must be positive")
        if f.m > f.M:
            out.append(f"{tag}: m ≤ M violated")
    for z in inst.zones:
        if not (z.lam > 0) or math.isinf(z.lam):
            out.append(f"zone {z.id}: lambda must be positive")
    if inst.tc.shape != (nI, nJ):
        out.append(f"tc has shape {inst.tc.shape}, expected {(nI, nJ)}")
    elif np.any(~(inst.tc >= 0)) or np.any(np.isinf(inst.tc)):
        out.append("tc must be finite and nonnegative")
    if inst.d is not None:
        if inst.d.shape != (nI, nJ):
            out.append(f"d has shape {inst.d.shape}, expected {(nI, nJ)}")
        elif np.any(~(inst.d >= 0)) or np.any(np.isinf(inst.d)):
            out.append("d must be finite and nonnegative")
    if any(not (w >= 0) for w in inst.weights):
        out.append("weights must be nonnegative")
    ids = [f.id for f in inst.facilities]
    if len(set(ids)) != len(ids):
        out.append("facility ids must be unique")
    zids = [z.id for z in inst.zones]
    if len(set(zids)) != len(zids):
        out.append("zone ids must be unique")
    return out


def validate(inst: Instance) -> list[str]:
    """Return every violated invariant or necessary feasibility condition.

    An empty list means the instance is well formed and passes the cheap
    necessary conditions for feasibility: total demand does not exceed total
    rate capacity and every zone fits in at least one facility.
    """
    out = _type_violations(inst)
    if out:
        return out
    lam = inst.lam
    total_M = sum(f.M for f in inst.facilities)
    if lam.sum() > total_M:
        out.append(f"aggregate demand {lam.sum():g} exceeds aggregate capacity {total_M:g}")
    for z in inst.zones:
        if not any(f.M > z.lam for f in inst.facilities):
            out.append(f"no facility can host zone {z.id}")
    return out


# ---------------------------------------------------------------------------
# documents


def _num(value: Any, where: str, allow_inf: bool = False) -> float:
    if allow_inf and isinstance(value, str) and value.strip().lower() in ("inf", "+inf", "infinity"):
        return INF
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _matrix(value: Any, where: str) -> np.ndarray:
    if not isinstance(value, list) or not all(isinstance(r, list) for r in value):
        raise InstanceError(f"{where}: expected a list of rows")
    rows = [[_num(v, f"{where}[{i}][{j}]") for j, v in enumerate(r)] for i, r in enumerate(value)]
    if len({len(r) for r in rows}) > 1:
        raise InstanceError(f"{where}: rows have different lengths")
    return np.array(rows, dtype=float).reshape(len(rows), len(rows[0]) if rows else 0)


def instance_from_dict(doc: Mapping[str, Any]) -> Instance:
    if not isinstance(doc, Mapping):
        raise InstanceError("document root must be an object")
    for key in ("facilities", "zones", "tc"):
        if key not in doc:
            raise InstanceError(f"missing top-level key '{key}'")
    facs = []
    for k, f in enumerate(doc["facilities"]):
        where = f"facilities[{k}]"
        if not isinstance(f, Mapping):
            raise InstanceError(f"{where}: expected an object")
        for key in ("id", "ec", "sc", "wc", "m", "M", "deltas"):
            if key not in f:
                raise InstanceError(f"{where}: missing field '{key}'")
        deltas = f["deltas"]
        if not isinstance(deltas, list) or not deltas:
            raise InstanceError(f"{where}.deltas: expected a nonempty list")
        deltas = tuple(_num(v, f"{where}.deltas[{i}]") for i, v in enumerate(deltas))
        try:
            spec = LocationScaleSpec(deltas)
        except ValueError as exc:
            raise InstanceError(f"{where}.deltas: {exc}") from None
        facs.append(
            FacilitySpec(
                id=int(_num(f["id"], f"{where}.id")),
                ec=_num(f["ec"], f"{where}.ec"),
                sc=_num(f["sc"], f"{where}.sc"),
                wc=_num(f["wc"], f"{where}.wc"),
                m=_num(f["m"], f"{where}.m"),
                M=_num(f["M"], f"{where}.M", allow_inf=True),
                variance=spec,
            )
        )
    zones = []
    for k, z in enumerate(doc["zones"]):
        where = f"zones[{k}]"
        if not isinstance(z, Mapping) or "id" not in z or "lambda" not in z:
            raise InstanceError(f"{where}: expected an object with 'id' and 'lambda'")
        zones.append(DemandZone(int(_num(z["id"], f"{where}.id")), _num(z["lambda"], f"{where}.lambda")))
    tc = _matrix(doc["tc"], "tc")
    d = _matrix(doc["d"], "d") if doc.get("d") is not None else None
    weights = (1.0, 1.0, 1.0, 1.0)
    if doc.get("weights") is not None:
        w = doc["weights"]
        if not isinstance(w, Mapping):
            raise InstanceError("weights: expected an object keyed by cost term")
        weights = tuple(_num(w.get(t, 1.0), f"weights.{t}") for t in TERMS)
    inst = Instance(tuple(facs), tuple(zones), tc, d, weights)
    problems = _type_violations(inst)
    if problems:
        raise InstanceError(problems)
    return inst.fold_weights()


def load_instance(source: str) -> Instance:
    """Parse an instance document (JSON text) and check its invariants.

    Raises:
        InstanceError: on malformed JSON (with line and column), a missing or
            mistyped field, or a list of every violated invariant.
    """
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return instance_from_dict(doc)


def _dump_num(x: float):
    return "inf" if math.isinf(x) else x


def instance_to_dict(inst: Instance) -> dict:
    doc = {
        "facilities": [
            {
                "id": f.id,
                "ec": f.ec,
                "sc": f.sc,
                "wc": f.wc,
                "m": f.m,
                "M": _dump_num(f.M),
                "deltas": list(f.variance.deltas),
            }
            for f in inst.facilities
        ],
        "zones": [{"id": z.id, "lambda": z.lam} for z in inst.zones],
        "tc": inst.tc.tolist(),
    }
    if inst.d is not None:
        doc["d"] = inst.d.tolist()
    if inst.weights != (1.0, 1.0, 1.0, 1.0):
        doc["weights"] = dict(zip(TERMS, inst.weights))
    return doc


def save_instance(inst: Instance) -> str:
    return json.dumps(instance_to_dict(inst), indent=1)


# ---------------------------------------------------------------------------
# generator


@dataclass(frozen=True)
class GeneratorConfig:
    """Sampling ranges for :func:`generate_instance`.

    ``sc`` and ``wc`` follow the benchmark adaptation; the remaining ranges
    stand in for the unpublished benchmark values. Variance coefficients are
    ``alpha_0 ~ U(0, 1/sqrt(sum lambda))`` and ``alpha_l ~ U(alpha_range)``
    for ``l >= 1``.
    """

    ec: tuple[float, float] = (500.0, 1500.0)
    sc: tuple[float, float] = (1.0, 5.0)
    wc: tuple[float, float] = (50.0, 300.0)
    lam: tuple[float, float] = (1.0, 10.0)
    tc_factor: tuple[float, float] = (1.0, 5.0)
    alpha_range: tuple[float, float] = (0.0, 2.0)
    degree: int = 2
    rate_bounds: tuple[float, float] = (0.0, INF)

    def check(self) -> None:
        for name in ("ec", "sc", "wc", "lam", "tc_factor", "alpha_range"):
            lo, hi = getattr(self, name)
            if not (lo < hi) or math.isinf(hi):
                raise ValueError(f"empty or unbounded range for {name}: {(lo, hi)}")
        if self.lam[0] <= 0:
            raise ValueError("lambda range must be positive")
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        m, M = self.rate_bounds
        if not (0 <= m <= M) or not M > 0:
            raise ValueError(f"invalid rate bounds {self.rate_bounds}")


def generate_instance(seed: int, n_facilities: int, n_zones: int, cfg: GeneratorConfig | None = None) -> Instance:
    """Draw a random instance; a pure function of its arguments."""
    cfg = cfg or GeneratorConfig()
    cfg.check()
    if n_facilities < 1 or n_zones < 1:
        raise ValueError("need at least one facility and one zone")
    rng = np.random.default_rng(seed)
    fac_xy = rng.uniform(0.0, 1.0, size=(n_facilities, 2))
    zone_xy = rng.uniform(0.0, 1.0, size=(n_zones, 2))
    lam = rng.uniform(*cfg.lam, size=n_zones)
    ec = rng.uniform(*cfg.ec, size=n_facilities)
    sc = rng.uniform(*cfg.sc, size=n_facilities)
    wc = rng.uniform(*cfg.wc, size=n_facilities)
    dist = np.sqrt(((fac_xy[:, None, :] - zone_xy[None, :, :]) ** 2).sum(axis=2))
    tc = dist * rng.uniform(*cfg.tc_factor, size=dist.shape)
    beta = math.sqrt(float(lam.sum()))
    alpha0 = rng.uniform(0.0, 1.0 / beta, size=n_facilities)
    higher = rng.uniform(*cfg.alpha_range, size=(n_facilities, max(cfg.degree, 0)))
    m, M = cfg.rate_bounds
    facs = []
    for i in range(n_facilities):
        alphas = [alpha0[i], *higher[i, : cfg.degree]]
        spec = LocationScaleSpec(tuple(math.sqrt(a) for a in alphas))
        facs.append(FacilitySpec(i + 1, float(ec[i]), float(sc[i]), float(wc[i]), m, M, spec))
    zones = tuple(DemandZone(j + 1, float(lam[j])) for j in range(n_zones))
    return Instance(tuple(facs), zones, tc, dist)


# ---------------------------------------------------------------------------
# distribution families

FAMILIES = ("exponential", "gamma", "uniform", "normal")


def derive_rate_bounds(family: str, params: Mapping[str, float] | None = None, alpha: float = 0.01) -> tuple[float, float]:
    """Rate interval ``(m, M)`` that keeps the service time nonnegative.

    Exponential and gamma service times are nonnegative for every rate.
    ``uniform`` (``theta``: half-width) needs ``mu <= 1/theta``. ``normal``
    (``sigma``: standard deviation) uses the chance constraint
    ``P(S < 0) <= alpha``, i.e. ``mu <= 1 / (z_alpha sigma)``.
    """
    params = dict(params or {})
    if family in ("exponential", "gamma"):
        return 0.0, INF
    if family == "uniform":
        theta = float(params["theta"])
        if theta <= 0:
            raise ValueError("theta must be positive")
        return 0.0, 1.0 / theta
    if family == "normal":
        sigma = float(params["sigma"])
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        if not 0 < alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        z = statistics.NormalDist().inv_cdf(1.0 - alpha)
        if z <= 0:
            return 0.0, INF
        return 0.0, 1.0 / (z * sigma)
    raise ValueError(f"unsupported distribution family {family!r}")


def family_spec(family: str, params: Mapping[str, float] | None = None) -> LocationScaleSpec:
    """Location-scale coefficients reproducing a family's variance function."""
    params = dict(params or {})
    if family == "exponential":
        return LocationScaleSpec((0.0, 1.0))
    if family == "gamma":
        shape = float(params["shape"])
        return LocationScaleSpec((0.0, 1.0 / math.sqrt(shape)))
    if family == "uniform":
        return LocationScaleSpec((float(params["theta"]) / math.sqrt(3.0),))
    if family == "normal":
        return LocationScaleSpec((float(params["sigma"]),))
    raise ValueError(f"unsupported distribution family {family!r}")
