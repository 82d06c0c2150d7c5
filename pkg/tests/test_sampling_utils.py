import numpy as np
import pytest

from utils.problem_utils import Box, FitTarget, eval_target
from utils.sampling_utils import (BatchSampler, Rng, generator_description, make_dataset, normal_draws,
                                  sample_boundary, sample_interior)


def test_same_seed_same_stream():
    a = Rng(7).stream('interior').random(5)
    b = Rng(7).stream('interior').random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, Rng(8).stream('interior').random(5))


def test_streams_are_isolated():
    # Consuming the boundary stream does not move the interior stream
    box = Box.cube(0., 1., 3)
    rng1, rng2 = Rng(3), Rng(3)
    sample_boundary(box, 100, rng1.stream('boundary'))
    sample_boundary(box, 7, rng2.stream('boundary'))
    np.testing.assert_array_equal(sample_interior(box, 50, rng1.stream('interior')),
                                  sample_interior(box, 50, rng2.stream('interior')))


def test_invalid_seed_and_stream():
    with pytest.raises(ValueError):
        Rng(-1)
    with pytest.raises(ValueError):
        Rng(0).stream('weights')


def test_generator_description():
    assert 'PCG64' in generator_description()


def test_sample_interior_unit_cube(gen):
    x = sample_interior(Box.cube(0., 1., 3), 1000, gen)
    assert x.shape == (1000, 3)
    assert np.all((x >= 0) & (x < 1))
    np.testing.assert_allclose(x.mean(axis=0), 0.5, atol=0.05)


def test_sample_interior_symmetric_box(gen):
    x = sample_interior(Box.cube(-np.pi / 2, np.pi / 2, 3), 500, gen)
    assert np.all((x >= -np.pi / 2) & (x <= np.pi / 2))


def test_sample_interior_uniformity(gen):
    x = sample_interior(Box.cube(0., 1., 2), 100000, gen)
    expected = len(x) / 10
    for axis in range(2):
        counts, _ = np.histogram(x[:, axis], bins=10, range=(0, 1))
        chi2 = np.sum((counts - expected) ** 2 / expected)
        # chi-square quantile at 0.999 with 9 degrees of freedom
        assert chi2 < 27.88


def test_single_point_is_reproducible():
    box = Box.cube(0., 1., 2)
    np.testing.assert_array_equal(sample_interior(box, 1, Rng(5).stream('interior')),
                                  sample_interior(box, 1, Rng(5).stream('interior')))


def test_degenerate_box(gen):
    with pytest.raises(ValueError):
        sample_interior(Box(np.array([0., 1.]), np.array([1., 1.])), 10, gen)
    with pytest.raises(ValueError):
        sample_interior(Box.cube(0., 1., 2), 0, gen)


def test_boundary_1d_endpoints(gen):
    points = sample_boundary(Box.cube(0., 1., 1), 1, gen)
    np.testing.assert_array_equal(points, [[0.], [1.]])


def test_boundary_faces(gen):
    points = sample_boundary(Box.cube(0., 1., 3), 100, gen)
    assert points.shape == (600, 3)
    assert np.all(np.min(np.minimum(points, 1 - points), axis=1) == 0)
    # faces in order: x_0 = 0, x_0 = 1, x_1 = 0, ...
    for face in range(6):
        k, side = divmod(face, 2)
        assert np.all(points[100 * face:100 * (face + 1), k] == side)


def test_normal_draws(gen):
    z = normal_draws(gen, 20001)
    assert z.shape == (20001,)
    assert abs(z.mean()) < 0.05
    assert abs(z.std() - 1) < 0.05


def test_normal_draws_reproducible():
    np.testing.assert_array_equal(normal_draws(Rng(2).stream('init'), 9), normal_draws(Rng(2).stream('init'), 9))


def test_embedded_dataset(gen):
    target = FitTarget('embed60', 'linear', 60, 3)
    dataset = make_dataset(target, 200, gen)
    assert dataset.inputs.shape == (200, 60)
    assert np.all(np.abs(dataset.inputs) <= 1)
    assert len(dataset) == 200
    assert dataset.domain.dim == 3


def test_dataset_labels_match_target(gen):
    target = FitTarget('hf1d')
    dataset = make_dataset(target, 50, gen, split='test')
    np.testing.assert_array_equal(dataset.labels, eval_target(target, dataset.inputs))
    assert dataset.split == 'test'
    assert np.all(dataset.domain.contains(dataset.inputs))


def test_dataset_domain_dimension(gen):
    with pytest.raises(ValueError):
        make_dataset(FitTarget('osc3d'), 10, gen, domain=Box.cube(0., 1., 2))


def test_full_batch_is_one_batch(gen):
    dataset = make_dataset(FitTarget('hf1d'), 30, gen)
    sampler = BatchSampler(dataset, 30, gen)
    batches = list(sampler.epoch())
    assert sampler.full_batch and sampler.batches_per_epoch == 1
    assert len(batches) == 1
    np.testing.assert_array_equal(batches[0][0], dataset.inputs)


def test_mini_batches_cover_dataset(gen):
    dataset = make_dataset(FitTarget('hf1d'), 30, gen)
    sampler = BatchSampler(dataset, 8, gen)
    batches = list(sampler.epoch())
    assert [len(labels) for _, labels in batches] == [8, 8, 8, 6]
    seen = np.sort(np.concatenate([inputs[:, 0] for inputs, _ in batches]))
    np.testing.assert_array_equal(seen, np.sort(dataset.inputs[:, 0]))


def test_batches_are_deterministic():
    def two_epochs(seed):
        rng = Rng(seed)
        dataset = make_dataset(FitTarget('hf1d'), 20, rng.stream('data'))
        sampler = BatchSampler(dataset, 6, rng.stream('shuffle'))
        return [labels for _ in range(2) for _, labels in sampler.epoch()]

    for a, b in zip(two_epochs(4), two_epochs(4)):
        np.testing.assert_array_equal(a, b)


def test_next_batch_cycles(gen):
    dataset = make_dataset(FitTarget('hf1d'), 10, gen)
    sampler = BatchSampler(dataset, 4, gen)
    sizes = [len(sampler.next_batch()[1]) for _ in range(6)]
    assert sizes == [4, 4, 2, 4, 4, 2]


def test_batch_larger_than_dataset(gen):
    dataset = make_dataset(FitTarget('hf1d'), 10, gen)
    with pytest.raises(ValueError):
        BatchSampler(dataset, 11, gen)
