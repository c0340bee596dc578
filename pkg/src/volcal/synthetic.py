"""Seeded generators of scored datasets and spherical phantom cohorts.

Scored sets draw a score ``s`` and a label ``y ~ Bernoulli(g(s))`` where
``g`` is the reliability function; ``g = identity`` yields calibrated data.

Phantom subjects hold one centered sphere of radius ``r`` whose true
per-voxel probability is ``sigmoid((r - d) / softness)`` at distance ``d``
from the grid center. Scores are that probability passed through a
distortion and then shifted on the logit scale by
``size_bias_coupling * (r - r_mid)``.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from ._rng import stream
from ._validation import check_dims, check_positive
from .metrics import DiscreteDataset, LabelVolume, ProbVolume
from .recalibration import temperature_distort, to_logit

__all__ = [
    "PhantomSpec",
    "Reliability",
    "ReliabilitySpec",
    "generate_phantom_cohort",
    "sample_scored_set",
]

_RELIABILITY_ARITY = {"identity": 0, "temperature": 1, "affine_logit": 2, "constant": 1}


@dataclass(frozen=True)
class Reliability:
    """Map from a score to the probability of a positive label.

    kind: ``identity``, ``temperature`` (params ``(T,)``), ``affine_logit``
    (params ``(a, b)``: ``sigmoid(a * logit(s) + b)``) or ``constant``
    (params ``(c,)``).
    """

    kind: str = "identity"
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in _RELIABILITY_ARITY:
            raise ValueError(f"unknown reliability kind {self.kind!r}")
        params = tuple(float(p) for p in self.params)
        if len(params) != _RELIABILITY_ARITY[self.kind]:
            raise ValueError(f"{self.kind} takes {_RELIABILITY_ARITY[self.kind]} parameters")
        if not all(np.isfinite(params)):
            raise ValueError("reliability parameters must be finite")
        if self.kind == "temperature" and params[0] <= 0:
            raise ValueError("temperature must be positive")
        if self.kind == "constant" and not 0.0 <= params[0] <= 1.0:
            raise ValueError("constant reliability must lie in [0, 1]")
        object.__setattr__(self, "params", params)

    def __call__(self, s):
        s = np.asarray(s, dtype=np.float64)
        if self.kind == "identity":
            return s.copy()
        if self.kind == "temperature":
            return temperature_distort(s, self.params[0])
        if self.kind == "affine_logit":
            a, b = self.params
            return expit(a * to_logit(s) + b)
        return np.full_like(s, self.params[0])

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            return cls(obj)
        return cls(obj["kind"], tuple(obj.get("params", ())))

    def to_json(self):
        return {"kind": self.kind, "params": list(self.params)}


@dataclass(frozen=True)
class ReliabilitySpec:
    """Recipe for :func:`sample_scored_set`.

    ``score_distribution`` is ``uniform``, ``beta`` with params ``(alpha,
    beta)``, or ``point_mass`` with params ``((value, weight), ...)``.
    """

    n: int
    seed: int = 0
    score_distribution: str = "uniform"
    distribution_params: tuple = ()
    reliability: Reliability = field(default_factory=Reliability)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        d, p = self.score_distribution, self.distribution_params
        if d == "uniform":
            if p:
                raise ValueError("uniform takes no parameters")
        elif d == "beta":
            if len(p) != 2 or min(p) <= 0:
                raise ValueError("beta needs two positive parameters")
        elif d == "point_mass":
            if not p:
                raise ValueError("point_mass needs at least one (value, weight) pair")
            values = np.array([v for v, _ in p], dtype=np.float64)
            weights = np.array([w for _, w in p], dtype=np.float64)
            if values.min() < 0 or values.max() > 1 or weights.min() < 0 or weights.sum() <= 0:
                raise ValueError("point masses need values in [0, 1] and nonnegative weights")
        else:
            raise ValueError(f"unknown score distribution {d!r}")


def sample_scored_set(spec):
    rng = stream(spec.seed, 0)
    d, p = spec.score_distribution, spec.distribution_params
    if d == "uniform":
        scores = rng.random(spec.n)
    elif d == "beta":
        scores = rng.beta(p[0], p[1], spec.n)
    else:
        values = np.array([v for v, _ in p], dtype=np.float64)
        weights = np.array([w for _, w in p], dtype=np.float64)
        scores = values[rng.choice(values.size, size=spec.n, p=weights / weights.sum())]
    labels = rng.random(spec.n) < spec.reliability(scores)
    return DiscreteDataset(scores, labels)


@dataclass(frozen=True)
class PhantomSpec:
    """Recipe for :func:`generate_phantom_cohort`.

    ``radius_law`` is ``uniform`` (in radius) or ``uniform_volume`` (in
    ``r**3``). ``label_mode`` is ``threshold`` (label where the noiseless
    profile exceeds 0.5) or ``bernoulli`` (label drawn from the profile, which
    makes the undistorted scores calibrated). ``mask`` is ``none`` or
    ``ball``, the largest sphere inscribed in the grid.
    """

    n_subjects: int = 20
    grid_dims: tuple = (48, 48, 48)
    voxel_volume_ml: float = 0.001
    radius_range: tuple = (4.0, 14.0)
    radius_law: str = "uniform"
    boundary_softness: float = 1.5
    distortion: Reliability = field(default_factory=Reliability)
    size_bias_coupling: float = 0.0
    label_mode: str = "threshold"
    mask: str = "none"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "grid_dims", check_dims(self.grid_dims))
        check_positive(self.voxel_volume_ml, "voxel_volume_ml")
        if int(self.n_subjects) != self.n_subjects or self.n_subjects < 1:
            raise ValueError("n_subjects must be a positive integer")
        lo, hi = (float(v) for v in self.radius_range)
        if not 0 < lo <= hi:
            raise ValueError("radius_range must satisfy 0 < min <= max")
        object.__setattr__(self, "radius_range", (lo, hi))
        if hi > (min(self.grid_dims) - 1) / 2:
            raise ValueError(f"radius {hi} does not fit in grid {self.grid_dims}")
        if self.radius_law not in ("uniform", "uniform_volume"):
            raise ValueError(f"unknown radius law {self.radius_law!r}")
        if not self.boundary_softness >= 0:
            raise ValueError("boundary_softness must be nonnegative")
        if self.label_mode not in ("threshold", "bernoulli"):
            raise ValueError(f"unknown label mode {self.label_mode!r}")
        if self.mask not in ("none", "ball"):
            raise ValueError(f"unknown mask {self.mask!r}")
        if isinstance(self.distortion, (str, dict)):
            object.__setattr__(self, "distortion", Reliability.from_json(self.distortion))

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        for key in ("grid_dims", "radius_range"):
            if key in obj:
                obj[key] = tuple(obj[key])
        if "distortion" in obj:
            obj["distortion"] = Reliability.from_json(obj["distortion"])
        return cls(**obj)

    def to_json(self):
        d = asdict(self)
        d["grid_dims"] = list(self.grid_dims)
        d["radius_range"] = list(self.radius_range)
        d["distortion"] = self.distortion.to_json()
        return d


def _center_distance(dims):
    idx = np.indices(dims, dtype=np.float64)
    center = (np.array(dims, dtype=np.float64) - 1.0) / 2.0
    sq = sum((idx[k] - center[k]) ** 2 for k in range(3))
    return np.sqrt(sq).ravel()


def _draw_radius(rng, spec):
    lo, hi = spec.radius_range
    u = rng.random()
    if spec.radius_law == "uniform":
        return lo + (hi - lo) * u
    return (lo**3 + (hi**3 - lo**3) * u) ** (1.0 / 3.0)


def _profile(dist, radius, softness):
    if softness == 0:
        return np.where(dist < radius, 1.0, np.where(dist > radius, 0.0, 0.5))
    return expit((radius - dist) / softness)


def generate_phantom_cohort(spec):
    """Return a list of ``(ProbVolume, LabelVolume, subject_id, tags)``.

    Subject ``i`` draws from its own stream ``(seed, i)``. Tags are
    ``size=small`` or ``size=large`` relative to the middle of the radius range.
    """
    dist = _center_distance(spec.grid_dims)
    r_mid = 0.5 * sum(spec.radius_range)
    mask = None
    if spec.mask == "ball":
        mask = dist <= (min(spec.grid_dims) - 1) / 2
    width = len(str(spec.n_subjects - 1))
    cohort = []
    for i in range(spec.n_subjects):
        rng = stream(spec.seed, i)
        radius = _draw_radius(rng, spec)
        truth = _profile(dist, radius, spec.boundary_softness)
        if spec.label_mode == "threshold":
            labels = truth > 0.5
        else:
            labels = rng.random(truth.size) < truth
        scores = spec.distortion(truth)
        if spec.size_bias_coupling != 0.0:
            scores = expit(to_logit(scores) + spec.size_bias_coupling * (radius - r_mid))
        sid = f"sub{i:0{width}d}"
        tags = ("size=large" if radius >= r_mid else "size=small",)
        cohort.append((
            ProbVolume(scores, spec.grid_dims, spec.voxel_volume_ml, mask),
            LabelVolume(labels, spec.grid_dims, spec.voxel_volume_ml),
            sid,
            tags,
        ))
    return cohort
