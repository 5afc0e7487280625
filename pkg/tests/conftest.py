import numpy as np
import pytest

from mergecap import build_caption_set, build_vocabulary, parse_token_file, synth_features

# 8 images, captions of 3-6 words, 15 distinct words
OVERFIT_CAPTIONS = {
    "img0": "dog runs on grass",
    "img1": "man rides red bike",
    "img2": "girl plays in water",
    "img3": "dog plays with ball",
    "img4": "man runs on grass",
    "img5": "red ball in water",
    "img6": "girl rides red bike",
    "img7": "dog with ball runs on grass",
}
OVERFIT_DIM = 64


def overfit_token_text():
    return "".join(f"{k}.jpg#0\t{v}\n" for k, v in OVERFIT_CAPTIONS.items())


@pytest.fixture
def overfit_corpus():
    captions = build_caption_set(parse_token_file(overfit_token_text()))
    vocab = build_vocabulary(captions)
    store = synth_features(list(captions), OVERFIT_DIM, seed=7)
    return captions, vocab, store


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
