import numpy as np
import pytest

from partseg.synth import preset_domain, generate_domain_dataset
from partseg.types import ClassVocabulary


@pytest.fixture(scope="session")
def vocab():
    return ClassVocabulary()


@pytest.fixture(scope="session")
def camus_small():
    """20 fully labelled samples from the high-contrast preset, 32x32."""
    return generate_domain_dataset(preset_domain("camus_like", image_size=32), 20, seed=11)


@pytest.fixture(scope="session")
def echonet_small():
    """20 pool-only samples from the low-contrast preset, 32x32."""
    return generate_domain_dataset(preset_domain("echonet_like", image_size=32), 20, seed=12)


def make_sample(labels, presence, domain_id="dom", sample_id="s0", image=None):
    labels = np.asarray(labels, dtype=np.uint8)
    if image is None:
        image = np.zeros(labels.shape, dtype=np.float32)
    from partseg.types import SegmentationSample

    return SegmentationSample(image=image, labels=labels, presence=np.asarray(presence, bool),
                              domain_id=domain_id, sample_id=sample_id)
