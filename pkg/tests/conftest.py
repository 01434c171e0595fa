import numpy as np
import pytest
import torch

from priorlens.synthetic import random_scene


@pytest.fixture(autouse=True)
def _fixed_torch_seed():
    torch.manual_seed(0)


@pytest.fixture(scope="session")
def trained_teacher():
    """Frozen 10-class pattern teacher shared across the session."""
    from priorlens.synthetic import pattern_dataset
    from priorlens.teacher import TeacherTrainConfig, train_teacher

    images, labels = pattern_dataset(n_per_class=40, size=32, seed=5)
    teacher, log = train_teacher(images, labels, TeacherTrainConfig(steps=400, seed=0))
    return teacher, log


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def scene64(rng):
    return random_scene(rng, 64, 64)


@pytest.fixture
def scene128(rng):
    return random_scene(rng, 128, 128)


@pytest.fixture
def sharp_dir(tmp_path, rng):
    """Directory of four 64x64 synthetic sharp images."""
    from priorlens.images import save_image

    d = tmp_path / "sharp"
    d.mkdir()
    for i in range(4):
        save_image(random_scene(rng, 64, 64), d / f"scene{i}.png")
    return d
