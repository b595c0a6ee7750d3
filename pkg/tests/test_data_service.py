import numpy as np
import pytest

from fedgems.errors import ConfigError
from fedgems.models.dataset import Dataset
from fedgems.models.experiment import DatasetSpec, ExperimentConfig, SplitSpec
from fedgems.services import experiment_service
from fedgems.services.data_service import (
    build_dataset,
    generate_blobs,
    partition_dirichlet,
    partition_iid,
    split_public_private,
    split_shard,
    split_train_test,
)


def _labelled(n: int, classes: int = 2) -> Dataset:
    return Dataset(np.arange(n * 2, dtype=float).reshape(n, 2), np.arange(n) % classes, classes)


def test_blobs_shape_and_determinism():
    a = generate_blobs(3, 5, 20, 1.0, seed=4)
    b = generate_blobs(3, 5, 20, 1.0, seed=4)
    assert len(a) == 60 and a.input_dim == 5
    assert a.label_histogram() == [20, 20, 20]
    np.testing.assert_array_equal(a.x, b.x)


def test_blobs_reject_bad_arguments():
    with pytest.raises(ValueError):
        generate_blobs(2, 2, 10, 0.0, seed=0)
    with pytest.raises(ValueError):
        generate_blobs(2, 0, 10, 1.0, seed=0)


def test_external_source_is_a_config_error():
    cfg = ExperimentConfig(dataset=DatasetSpec(source="external", path="cifar/"))
    with pytest.raises(NotImplementedError):
        build_dataset(cfg.dataset, 0)
    with pytest.raises(ConfigError):
        experiment_service.prepare_data(cfg)


def test_public_private_split_exact_half():
    ds = generate_blobs(2, 2, 50, 1.0, seed=0)
    public, private = split_public_private(ds, SplitSpec(public_fraction=0.5), seed=1)
    assert (len(public), len(private)) == (50, 50)
    assert not set(public.ids) & set(private.ids)
    assert sorted([*public.ids, *private.ids]) == list(range(100))


def test_public_private_split_large():
    ds = generate_blobs(10, 2, 5000, 1.0, seed=0)
    public, private = split_public_private(ds, SplitSpec(public_fraction=0.2), seed=1)
    assert (len(public), len(private)) == (10000, 40000)


def test_public_private_split_is_deterministic_and_pure():
    ds = generate_blobs(2, 2, 30, 1.0, seed=0)
    x_before = ds.x.copy()
    a, _ = split_public_private(ds, SplitSpec(), seed=9)
    b, _ = split_public_private(ds, SplitSpec(), seed=9)
    np.testing.assert_array_equal(a.ids, b.ids)
    np.testing.assert_array_equal(ds.x, x_before)
    assert not ds.x.flags.writeable


def test_public_private_split_too_small():
    with pytest.raises(ValueError):
        split_public_private(_labelled(1), SplitSpec(), seed=0)


def test_public_label_skew_tilts_public_classes():
    ds = generate_blobs(4, 2, 200, 1.0, seed=0)
    public, private = split_public_private(ds, SplitSpec(public_fraction=0.5), seed=0, label_skew=0.8)
    hist = public.label_histogram()
    assert hist[0] < hist[-1]
    assert len(public) + len(private) == len(ds)


def test_iid_even_and_remainder():
    assert partition_iid(_labelled(160), 16, seed=0).sizes() == [10] * 16
    sizes = partition_iid(_labelled(161), 16, seed=0).sizes()
    assert sorted(sizes) == [10] * 15 + [11]


def test_iid_deterministic_and_bounded():
    a = partition_iid(_labelled(50), 4, seed=3)
    b = partition_iid(_labelled(50), 4, seed=3)
    np.testing.assert_array_equal(a.assignment, b.assignment)
    with pytest.raises(ValueError):
        partition_iid(_labelled(3), 4, seed=0)


def test_dirichlet_near_iid_limit():
    private = generate_blobs(4, 2, 4000, 1.0, seed=0)
    plan = partition_dirichlet(private, 4, 1e6, seed=2)
    for k, hist in plan.label_table(private).items():
        share = np.asarray(hist) / np.sum(hist)
        assert np.all(np.abs(share - 0.25) < 0.05)


@pytest.mark.parametrize("seed", range(25))
def test_dirichlet_every_client_nonempty(seed):
    private = generate_blobs(3, 2, 10, 1.0, seed=seed)
    plan = partition_dirichlet(private, 8, 0.1, seed=seed)
    assert min(plan.sizes()) >= 1
    assert sum(plan.sizes()) == len(private)


def test_dirichlet_reproducible():
    private = generate_blobs(5, 2, 30, 1.0, seed=0)
    a = partition_dirichlet(private, 6, 0.5, seed=7)
    b = partition_dirichlet(private, 6, 0.5, seed=7)
    np.testing.assert_array_equal(a.assignment, b.assignment)


def test_dirichlet_rejects_bad_arguments():
    private = _labelled(20)
    with pytest.raises(ValueError):
        partition_dirichlet(private, 4, 0.0, seed=0)
    with pytest.raises(ValueError):
        partition_dirichlet(private, 1, 0.5, seed=0)


@pytest.mark.slow
def test_dirichlet_variance_matches_theory():
    k, alpha = 16, 0.5
    private = Dataset(np.zeros((2000, 1)), np.repeat([0, 1], 1000), 2)
    shares = []
    for seed in range(1000):
        plan = partition_dirichlet(private, k, alpha, seed=seed)
        counts = np.bincount(plan.assignment[:1000], minlength=k)
        shares.append(counts / 1000.0)
    a0 = k * alpha
    theory = alpha * (a0 - alpha) / (a0**2 * (a0 + 1))
    assert np.var(np.concatenate(shares)) == pytest.approx(theory, rel=0.10)


def test_train_test_split_sizes():
    train, test = split_train_test(_labelled(60), seed=0)
    assert (len(train), len(test)) == (50, 10)
    assert sorted([*train.ids, *test.ids]) == list(range(60))
    train, test = split_train_test(Dataset(np.zeros((25000, 1)), np.zeros(25000, dtype=int), 2), seed=0)
    assert abs(len(train) - 20833) <= 1 and abs(len(test) - 4167) <= 1
    with pytest.raises(ValueError):
        split_train_test(_labelled(5), seed=0)


def test_small_shard_trains_on_everything():
    train, test = split_shard(_labelled(4), seed=0, ratio=(5, 1), client_id=2)
    assert len(train) == 4 and len(test) == 0
