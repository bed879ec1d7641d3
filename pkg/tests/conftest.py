import numpy as np
import pytest

from trfvq import dsp, fixtures


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    fixtures.make_fixture_corpus(d)
    return d


@pytest.fixture(scope="session")
def short_utterance():
    """16 MFCC frames of a three-phone synthetic utterance."""
    w = fixtures.utterance("aiu", "spk_low", seg_s=0.06, seed=0)
    return dsp.extract(w, "mfcc").data[:16]


def random_waveform(seed, n):
    rng = np.random.default_rng(seed)
    return dsp.Waveform(rng.uniform(-0.5, 0.5, n))


TOY_VQVAE = dict(input_dims=39, d_mdl=32, heads=4, d_ff=64, code_dim=16, K=16, speaker_dim=8)
