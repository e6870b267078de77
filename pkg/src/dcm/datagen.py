"""Deterministic synthetic benchmarks: Gaussian class blobs with controllable
separation, a displaced far-OOD blob, geometrically interleaved near-OOD
classes, and a label-preserving covariate-shift corruption.

Every generator is a pure function of its BenchmarkSpec, including the
seed; independent RNG streams per purpose keep draws stable when unrelated
knobs change.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

DOMAIN_ID = "ID"
DOMAIN_OOD = "OOD"

# label carried by far-OOD examples, which have no valid class
OOD_LABEL = -1

# RNG stream ids, hashed together with the benchmark seed
_S_TRAIN, _S_VAL, _S_UNC, _S_TEST, _S_CORRUPT, _S_RESPLIT = range(6)


class BenchmarkKind(enum.Enum):
    STANDARD_OOD = "standard"
    NEAR_OOD = "near"
    COVARIATE_SHIFT = "shift"

    @classmethod
    def parse(cls, value: "BenchmarkKind | str") -> "BenchmarkKind":
        if isinstance(value, BenchmarkKind):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigError(
                f"unknown benchmark kind {value!r}; expected "
                f"{', '.join(k.value for k in cls)}"
            ) from None


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


@dataclass
class LabeledDataset:
    """Features, integer labels, and a per-example ID/OOD tag.

    OOD examples either carry OOD_LABEL (far OOD, no valid class) or a
    label in [0, C) (near OOD and corrupted examples, where the class
    identity survives).
    """

    features: np.ndarray
    labels: np.ndarray
    is_ood: np.ndarray
    n_classes: int

    def __post_init__(self) -> None:
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        self.is_ood = np.ascontiguousarray(self.is_ood, dtype=bool)
        if self.features.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {self.features.shape}")
        n = self.features.shape[0]
        if self.labels.shape != (n,) or self.is_ood.shape != (n,):
            raise ShapeError("features, labels, and is_ood lengths disagree")
        if int(self.n_classes) < 2:
            raise ConfigError(f"n_classes must be >= 2, got {self.n_classes}")
        self.n_classes = int(self.n_classes)
        if n:
            id_labels = self.labels[~self.is_ood]
            if id_labels.size and (id_labels.min() < 0 or id_labels.max() >= self.n_classes):
                raise ConfigError("ID labels must lie in [0, n_classes)")
            ood_labels = self.labels[self.is_ood]
            if ood_labels.size and (
                ood_labels.min() < OOD_LABEL or ood_labels.max() >= self.n_classes
            ):
                raise ConfigError("OOD labels must be OOD_LABEL or lie in [0, n_classes)")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def domain_tag(self) -> np.ndarray:
        return np.where(self.is_ood, DOMAIN_OOD, DOMAIN_ID)

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        return LabeledDataset(
            self.features[idx], self.labels[idx], self.is_ood[idx], self.n_classes
        )

    def id_part(self) -> "LabeledDataset":
        return self.subset(np.flatnonzero(~self.is_ood))

    def ood_part(self) -> "LabeledDataset":
        return self.subset(np.flatnonzero(self.is_ood))

    def n_ood(self) -> int:
        return int(self.is_ood.sum())


def concat(datasets: "list[LabeledDataset]") -> LabeledDataset:
    if not datasets:
        raise ConfigError("cannot concatenate zero datasets")
    cs = {ds.n_classes for ds in datasets}
    if len(cs) != 1:
        raise ConfigError(f"datasets declare different class counts: {sorted(cs)}")
    return LabeledDataset(
        np.concatenate([ds.features for ds in datasets]),
        np.concatenate([ds.labels for ds in datasets]),
        np.concatenate([ds.is_ood for ds in datasets]),
        cs.pop(),
    )


@dataclass
class BenchmarkSpec:
    """Everything that determines a generated benchmark, seed included."""

    kind: BenchmarkKind = BenchmarkKind.STANDARD_OOD
    n_classes: int = 4
    dim: int = 8
    class_separation: float = 6.0
    ood_offset: float = 12.0
    alpha_u: float = 0.5
    alpha_test: float = 0.5
    n_train: int = 400
    n_val: int = 200
    n_uncertainty: int = 240
    n_test: int = 400
    corruption_severity: float = 0.0
    corruption_rotation: float = 0.0
    seed: int = 0
    unc_id_from_train: bool = False

    def __post_init__(self) -> None:
        self.kind = BenchmarkKind.parse(self.kind)
        if self.n_classes < 2:
            raise ConfigError(f"n_classes must be >= 2, got {self.n_classes}")
        if self.dim < self.n_classes:
            raise ConfigError(
                f"dim must be >= n_classes for the simplex construction, got {self.dim}"
            )
        if self.class_separation <= 0 or self.ood_offset <= 0:
            raise ConfigError("class_separation and ood_offset must be positive")
        for name in ("alpha_u", "alpha_test"):
            a = getattr(self, name)
            if not 0.0 <= a <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {a}")
        for name in ("n_train", "n_val", "n_uncertainty", "n_test"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.corruption_severity < 0:
            raise ConfigError("corruption_severity must be nonnegative")
        if self.kind is BenchmarkKind.NEAR_OOD:
            if self.n_classes % 2 != 0:
                raise ConfigError("near-OOD requires an even n_classes")
            if self.dim < self.n_classes + 1:
                raise ConfigError("near-OOD requires dim >= n_classes + 1")
        if self.unc_id_from_train and self.kind is not BenchmarkKind.STANDARD_OOD:
            raise ConfigError("unc_id_from_train applies to the standard benchmark only")


def default_spec(kind: "BenchmarkKind | str", seed: int = 0) -> BenchmarkSpec:
    """The canonical benchmark for each kind, used by config defaults and
    the acceptance checks.

    Standard: well-separated ID blobs and a far OOD blob, so the
    disjoint-support premise of the separation guarantee is genuinely met.
    Near: OOD blobs at ID-like range, a much harder detection task.
    Shift: more classes in a higher-dimensional space with a small training
    set (so the pretrained model makes some validation errors) plus a
    rotation-and-noise corruption of the test pool.
    """
    kind = BenchmarkKind.parse(kind)
    if kind is BenchmarkKind.STANDARD_OOD:
        return BenchmarkSpec(kind=kind, seed=seed)
    if kind is BenchmarkKind.NEAR_OOD:
        return BenchmarkSpec(
            kind=kind,
            class_separation=6.0,
            seed=seed,
        )
    return BenchmarkSpec(
        kind=kind,
        n_classes=8,
        dim=16,
        class_separation=4.5,
        corruption_severity=2.0,
        corruption_rotation=0.25,
        n_train=160,
        n_val=400,
        n_test=600,
        seed=seed,
    )


def id_means(spec: BenchmarkSpec) -> np.ndarray:
    """Class means: scaled standard-basis simplex, centered at the origin.

    Pairwise distance between means is exactly class_separation.
    """
    c, d = spec.n_classes, spec.dim
    means = np.zeros((c, d))
    means[np.arange(c), np.arange(c)] = spec.class_separation / np.sqrt(2.0)
    return means - means.mean(axis=0)


def _balanced_labels(n: int, c: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(np.resize(np.arange(c, dtype=np.int64), n))


def _sample_id(
    spec: BenchmarkSpec, n: int, rng: np.random.Generator, means: np.ndarray
) -> LabeledDataset:
    labels = _balanced_labels(n, spec.n_classes, rng)
    feats = means[labels] + rng.standard_normal((n, spec.dim))
    return LabeledDataset(feats, labels, np.zeros(n, dtype=bool), spec.n_classes)


def mixture_counts(alpha: float, n: int) -> tuple[int, int]:
    """(n_id, n_ood) with n_id = round(alpha * n), half rounded up."""
    n_id = _round_half_up(alpha * n)
    return n_id, n - n_id


def _mix(id_part: LabeledDataset, ood_part: LabeledDataset, rng: np.random.Generator):
    both = concat([id_part, ood_part])
    return both.subset(rng.permutation(len(both)))


def gen_standard_ood(spec: BenchmarkSpec) -> dict[str, LabeledDataset]:
    """ID simplex blobs plus one far-OOD blob displaced along an unused axis."""
    if spec.kind is not BenchmarkKind.STANDARD_OOD:
        raise ConfigError(f"spec kind is {spec.kind.value}, expected standard")
    means = id_means(spec)
    ood_mean = np.zeros(spec.dim)
    ood_mean[-1] = spec.ood_offset

    def ood_blob(n: int, rng: np.random.Generator) -> LabeledDataset:
        feats = ood_mean + rng.standard_normal((n, spec.dim))
        return LabeledDataset(
            feats, np.full(n, OOD_LABEL), np.ones(n, dtype=bool), spec.n_classes
        )

    rng_train = np.random.default_rng([spec.seed, _S_TRAIN])
    train = _sample_id(spec, spec.n_train, rng_train, means)
    val = _sample_id(spec, spec.n_val, np.random.default_rng([spec.seed, _S_VAL]), means)

    rng_unc = np.random.default_rng([spec.seed, _S_UNC])
    n_id_u, n_ood_u = mixture_counts(spec.alpha_u, spec.n_uncertainty)
    if spec.unc_id_from_train:
        if n_id_u > spec.n_train:
            raise ConfigError(
                f"unc_id_from_train needs n_id_u={n_id_u} <= n_train={spec.n_train}"
            )
        unc_id = train.subset(rng_unc.permutation(spec.n_train)[:n_id_u])
    else:
        unc_id = _sample_id(spec, n_id_u, rng_unc, means) if n_id_u else _empty_like(spec)
    unc_ood = ood_blob(n_ood_u, rng_unc) if n_ood_u else _empty_like(spec)
    uncertainty = _mix(unc_id, unc_ood, rng_unc)

    rng_test = np.random.default_rng([spec.seed, _S_TEST])
    n_id_t, n_ood_t = mixture_counts(spec.alpha_test, spec.n_test)
    test_id = _sample_id(spec, n_id_t, rng_test, means) if n_id_t else _empty_like(spec)
    test_ood = ood_blob(n_ood_t, rng_test) if n_ood_t else _empty_like(spec)
    test = _mix(test_id, test_ood, rng_test)

    return {"train": train, "val": val, "uncertainty": uncertainty, "test": test}


def _empty_like(spec: BenchmarkSpec) -> LabeledDataset:
    return LabeledDataset(
        np.zeros((0, spec.dim)), np.zeros(0, dtype=np.int64),
        np.zeros(0, dtype=bool), spec.n_classes,
    )


def near_ood_means(spec: BenchmarkSpec) -> tuple[np.ndarray, np.ndarray]:
    """ID means plus interleaved OOD means.

    OOD mean j sits at distance exactly class_separation from ID mean j,
    along an axis orthogonal to the ID simplex, so each OOD blob's nearest
    ID mean is as close as two ID classes are to each other.
    """
    means = id_means(spec)
    shift = np.zeros(spec.dim)
    shift[spec.n_classes] = spec.class_separation
    return means, means + shift


def gen_near_ood(spec: BenchmarkSpec) -> dict[str, LabeledDataset]:
    """2C blobs as one family: first C are ID, last C are OOD at ID-like range."""
    if spec.kind is not BenchmarkKind.NEAR_OOD:
        raise ConfigError(f"spec kind is {spec.kind.value}, expected near")
    means_id, means_ood = near_ood_means(spec)

    def ood_blobs(n: int, rng: np.random.Generator) -> LabeledDataset:
        # family classes C..2C-1, relabeled to [0, C) since the classifier
        # has only C outputs
        labels = _balanced_labels(n, spec.n_classes, rng)
        feats = means_ood[labels] + rng.standard_normal((n, spec.dim))
        return LabeledDataset(feats, labels, np.ones(n, dtype=bool), spec.n_classes)

    train = _sample_id(spec, spec.n_train, np.random.default_rng([spec.seed, _S_TRAIN]), means_id)
    val = _sample_id(spec, spec.n_val, np.random.default_rng([spec.seed, _S_VAL]), means_id)

    rng_unc = np.random.default_rng([spec.seed, _S_UNC])
    n_id_u, n_ood_u = mixture_counts(spec.alpha_u, spec.n_uncertainty)
    unc_id = _sample_id(spec, n_id_u, rng_unc, means_id) if n_id_u else _empty_like(spec)
    unc_ood = ood_blobs(n_ood_u, rng_unc) if n_ood_u else _empty_like(spec)
    uncertainty = _mix(unc_id, unc_ood, rng_unc)

    rng_test = np.random.default_rng([spec.seed, _S_TEST])
    n_id_t, n_ood_t = mixture_counts(spec.alpha_test, spec.n_test)
    test_id = _sample_id(spec, n_id_t, rng_test, means_id) if n_id_t else _empty_like(spec)
    test_ood = ood_blobs(n_ood_t, rng_test) if n_ood_t else _empty_like(spec)
    test = _mix(test_id, test_ood, rng_test)

    return {"train": train, "val": val, "uncertainty": uncertainty, "test": test}


def rotation_matrix(dim: int, angle: float, rng: np.random.Generator) -> np.ndarray:
    """Rotation by `angle` in a random 2-plane; exactly identity at angle 0."""
    if dim < 2:
        raise ConfigError("rotation needs dim >= 2")
    u = rng.standard_normal(dim)
    u /= np.linalg.norm(u)
    v = rng.standard_normal(dim)
    v -= u * (u @ v)
    v /= np.linalg.norm(v)
    eye = np.eye(dim)
    return (
        eye
        + (np.cos(angle) - 1.0) * (np.outer(u, u) + np.outer(v, v))
        + np.sin(angle) * (np.outer(u, v) - np.outer(v, u))
    )


def corrupt_features(spec: BenchmarkSpec, features: np.ndarray) -> np.ndarray:
    """Fixed random rotation plus severity-scaled Gaussian noise.

    The noise draw depends only on the seed and the array shape, so raising
    corruption_severity rescales the same displacement rather than
    redrawing it; corruption strength is then nested across severities.
    """
    rng = np.random.default_rng([spec.seed, _S_CORRUPT])
    rot = rotation_matrix(spec.dim, spec.corruption_rotation, rng)
    noise = rng.standard_normal(features.shape)
    return features @ rot.T + spec.corruption_severity * noise


def gen_covariate_shift(spec: BenchmarkSpec) -> dict[str, LabeledDataset]:
    """ID blobs plus corrupted copies of the clean test pool, labels preserved."""
    if spec.kind is not BenchmarkKind.COVARIATE_SHIFT:
        raise ConfigError(f"spec kind is {spec.kind.value}, expected shift")
    means = id_means(spec)
    train = _sample_id(spec, spec.n_train, np.random.default_rng([spec.seed, _S_TRAIN]), means)
    val = _sample_id(spec, spec.n_val, np.random.default_rng([spec.seed, _S_VAL]), means)

    clean = _sample_id(spec, spec.n_test, np.random.default_rng([spec.seed, _S_TEST]), means)
    corrupted = LabeledDataset(
        corrupt_features(spec, clean.features),
        clean.labels,
        np.ones(len(clean), dtype=bool),
        spec.n_classes,
    )
    half = spec.n_test // 2
    test_mixed = concat([clean.subset(np.arange(half)), corrupted.subset(np.arange(half, spec.n_test))])
    return {
        "train": train,
        "val": val,
        "test_id": clean,
        "test_ood": corrupted,
        "test_mixed": test_mixed,
    }


def generate(spec: BenchmarkSpec) -> dict[str, LabeledDataset]:
    """Dispatch to the generator matching spec.kind."""
    if spec.kind is BenchmarkKind.STANDARD_OOD:
        return gen_standard_ood(spec)
    if spec.kind is BenchmarkKind.NEAR_OOD:
        return gen_near_ood(spec)
    return gen_covariate_shift(spec)


def resplit(
    dataset: LabeledDataset, fractions: list[float], seed: int
) -> list[LabeledDataset]:
    """Seed-deterministic stratified partition into len(fractions) splits.

    Stratified over (domain, label) groups, so class proportions are
    preserved within one example per class per split.
    """
    fracs = [float(f) for f in fractions]
    if not fracs or any(f <= 0 for f in fracs):
        raise ConfigError("fractions must be positive")
    if sum(fracs) > 1.0 + 1e-9:
        raise ConfigError(f"fractions sum to {sum(fracs)} > 1")
    rng = np.random.default_rng([seed, _S_RESPLIT])
    buckets: list[list[np.ndarray]] = [[] for _ in fracs]
    strata = sorted(
        {(bool(o), int(lab)) for o, lab in zip(dataset.is_ood, dataset.labels)}
    )
    for is_ood, label in strata:
        idx = np.flatnonzero((dataset.is_ood == is_ood) & (dataset.labels == label))
        idx = rng.permutation(idx)
        bounds = [_round_half_up(sum(fracs[: k + 1]) * len(idx)) for k in range(len(fracs))]
        prev = 0
        for k, b in enumerate(bounds):
            buckets[k].append(idx[prev:b])
            prev = b
    out = []
    for parts in buckets:
        take = np.sort(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)
        out.append(dataset.subset(take))
    return out


def write_dataset_csv(path, dataset: LabeledDataset) -> None:
    """CSV dump: comment line with n_classes, header, then one row per example."""
    lines = [f"# n_classes={dataset.n_classes}\n"]
    cols = [f"feature_{j}" for j in range(dataset.dim)] + ["label", "domain_tag"]
    lines.append(",".join(cols) + "\n")
    tags = dataset.domain_tag
    for i in range(len(dataset)):
        feats = ",".join(repr(float(v)) for v in dataset.features[i])
        lines.append(f"{feats},{int(dataset.labels[i])},{tags[i]}\n")
    with open(path, "w", encoding="ascii") as fh:
        fh.writelines(lines)


def read_dataset_csv(path) -> LabeledDataset:
    with open(path, "r", encoding="ascii") as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    n_classes = None
    if raw and raw[0].startswith("#"):
        head = raw.pop(0).lstrip("# ")
        if "=" in head:
            key, _, val = head.partition("=")
            if key.strip() == "n_classes":
                n_classes = int(val)
    if not raw:
        raise ConfigError(f"{path}: empty dataset file")
    header = raw.pop(0).split(",")
    if header[-2:] != ["label", "domain_tag"]:
        raise ConfigError(f"{path}: expected trailing label,domain_tag columns")
    d = len(header) - 2
    feats, labels, is_ood = [], [], []
    for ln in raw:
        parts = ln.split(",")
        if len(parts) != d + 2:
            raise ConfigError(f"{path}: row with {len(parts)} fields, expected {d + 2}")
        feats.append([float(v) for v in parts[:d]])
        labels.append(int(parts[d]))
        tag = parts[d + 1].strip()
        if tag not in (DOMAIN_ID, DOMAIN_OOD):
            raise ConfigError(f"{path}: unknown domain tag {tag!r}")
        is_ood.append(tag == DOMAIN_OOD)
    labels_arr = np.array(labels, dtype=np.int64)
    if n_classes is None:
        id_labels = labels_arr[~np.array(is_ood)]
        pool = id_labels if id_labels.size else labels_arr
        n_classes = max(int(pool.max()) + 1, 2)
    return LabeledDataset(np.array(feats), labels_arr, np.array(is_ood), n_classes)
