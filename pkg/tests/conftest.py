import numpy as np
import pytest

from segrt.embedding import EmbeddingTable
from segrt.neuralnet import limit_blas_threads
from segrt.segmenter import InferenceConfig, ModelConfig, SegmenterModel

limit_blas_threads()


def random_embedding_table(chars, dim=8, buckets=64, seed=0, scale=0.5):
    """A fixed random table; good enough anywhere training quality does
    not matter."""
    rng = np.random.default_rng(seed)
    rows = {ch: i for i, ch in enumerate(chars)}
    return EmbeddingTable(
        dim=dim,
        char_rows=rows,
        char_vecs=rng.normal(scale=scale, size=(len(rows), dim)).astype(np.float32),
        bucket_vecs=rng.normal(scale=scale, size=(buckets, dim)).astype(np.float32),
        ngram_min=2,
        ngram_max=3,
        hash_seed=seed,
    )


TINY_CONFIG = ModelConfig(
    l_max=16,
    embed_dim=8,
    conv_filters=4,
    conv1_kernel=(3, 8),
    conv2_kernel=(3, 1),
    pool=(2, 1),
    lstm_hidden=4,
    mlp_hidden=16,
    dropout=0.0,
)

TINY_INFERENCE = InferenceConfig(threshold=0.5, overlap=5, l_max=16)


@pytest.fixture
def tiny_model():
    table = random_embedding_table("abcdefgh")
    return SegmenterModel(TINY_CONFIG, table, seed=0)


@pytest.fixture(scope="session")
def full_size_model():
    """Untrained production-shape model shared across tests."""
    table = random_embedding_table("abcdefgh가나다", dim=100, seed=1)
    return SegmenterModel(ModelConfig(), table, seed=0)
