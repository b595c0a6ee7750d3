from __future__ import annotations
from typing import Optional, Tuple

import numpy as np
from loguru import logger

from fedgems.models.dataset import Dataset, PartitionPlan
from fedgems.models.experiment import DatasetSpec, SplitSpec


def generate_blobs(class_count: int, input_dim: int, samples_per_class: int, spread: float, seed: int) -> Dataset:
    """Gaussian clusters with one N(0, I) mean per class and isotropic ``spread``."""
    if class_count < 1 or input_dim < 1 or samples_per_class < 1:
        raise ValueError("class_count, input_dim and samples_per_class must be >= 1")
    if not spread > 0:
        raise ValueError("spread must be > 0")
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, 1.0, size=(class_count, input_dim))
    y = np.repeat(np.arange(class_count), samples_per_class)
    x = means[y] + spread * rng.normal(0.0, 1.0, size=(y.shape[0], input_dim))
    return Dataset(x, y, class_count)


def load_external(path: Optional[str], spec: DatasetSpec) -> Dataset:
    # Hook for real image datasets; ingestion is not shipped.
    raise NotImplementedError(f"external dataset loading is not implemented (path={path!r})")


def build_dataset(spec: DatasetSpec, seed: int) -> Dataset:
    if spec.source == "external":
        return load_external(spec.path, spec)
    return generate_blobs(spec.class_count, spec.input_dim, spec.samples_per_class, spec.spread, seed)


def split_public_private(ds: Dataset, spec: SplitSpec, seed: int, label_skew: float = 0.0) -> Tuple[Dataset, Dataset]:
    n = len(ds)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    if n < 2:
        raise ValueError("need at least 2 samples to split public/private")
    rng = np.random.default_rng(seed)
    if label_skew == 0.0:
        n_public = min(max(int(round(spec.public_fraction * n)), 1), n - 1)
        perm = rng.permutation(n)
        public_pos = np.sort(perm[:n_public])
    else:
        # per-class public fractions ramp linearly from f(1 - skew) to f(1 + skew)
        c = ds.class_count
        ramp = np.linspace(-1.0, 1.0, c) if c > 1 else np.zeros(1)
        chosen = []
        for k in range(c):
            members = np.flatnonzero(ds.y == k)
            frac = float(np.clip(spec.public_fraction * (1.0 + label_skew * ramp[k]), 0.0, 1.0))
            take = int(round(frac * members.shape[0]))
            chosen.append(rng.permutation(members)[:take])
        public_pos = np.sort(np.concatenate(chosen)) if chosen else np.array([], dtype=np.int64)
    mask = np.zeros(n, dtype=bool)
    mask[public_pos] = True
    return ds.subset(np.flatnonzero(mask)), ds.subset(np.flatnonzero(~mask))


def partition_iid(private: Dataset, client_count: int, seed: int) -> PartitionPlan:
    n = len(private)
    if client_count < 1 or client_count > n:
        raise ValueError(f"cannot partition {n} samples over {client_count} clients")
    rng = np.random.default_rng(seed)
    assignment = np.empty(n, dtype=np.int64)
    assignment[rng.permutation(n)] = np.arange(n) % client_count
    return PartitionPlan(client_count, assignment, "iid")


def partition_dirichlet(private: Dataset, client_count: int, alpha: float, seed: int) -> PartitionPlan:
    """Per class, split the class's samples over clients by a Dir(alpha * 1_K) draw."""
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    if client_count < 2:
        raise ValueError("dirichlet partitioning needs at least 2 clients")
    n = len(private)
    if client_count > n:
        raise ValueError(f"cannot partition {n} samples over {client_count} clients")
    rng = np.random.default_rng(seed)
    assignment = np.full(n, -1, dtype=np.int64)
    for c in range(private.class_count):
        members = np.flatnonzero(private.y == c)
        if members.size == 0:
            continue
        members = rng.permutation(members)
        proportions = rng.dirichlet(np.full(client_count, alpha))
        cuts = (np.cumsum(proportions) * members.size).astype(int)[:-1]
        for k, part in enumerate(np.split(members, cuts)):
            assignment[part] = k

    # repair: an empty client steals one sample from the currently largest client
    sizes = np.bincount(assignment, minlength=client_count)
    for k in range(client_count):
        if sizes[k] == 0:
            donor = int(np.argmax(sizes))
            moved = int(np.flatnonzero(assignment == donor)[-1])
            assignment[moved] = k
            sizes[donor] -= 1
            sizes[k] += 1
    return PartitionPlan(client_count, assignment, "dirichlet", alpha)


def split_train_test(ds: Dataset, seed: int, ratio: Tuple[int, int] = (5, 1)) -> Tuple[Dataset, Dataset]:
    """Shuffled split; the test part is ``floor(n * b / (a + b))``, the rest trains."""
    a, b = ratio
    n = len(ds)
    if n < a + b:
        raise ValueError(f"need at least {a + b} samples for a {a}:{b} split, got {n}")
    n_test = (n * b) // (a + b)
    perm = np.random.default_rng(seed).permutation(n)
    test_pos = np.sort(perm[:n_test])
    train_pos = np.sort(perm[n_test:])
    return ds.subset(train_pos), ds.subset(test_pos)


def split_shard(ds: Dataset, seed: int, ratio: Tuple[int, int], client_id: int) -> Tuple[Dataset, Dataset]:
    if len(ds) < sum(ratio):
        logger.warning(f"client {client_id}: shard of {len(ds)} samples is too small for a test split; all used for training")
        return ds, ds.subset(np.array([], dtype=np.int64))
    return split_train_test(ds, seed, ratio)
