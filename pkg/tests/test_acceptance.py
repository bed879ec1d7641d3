"""End-to-end acceptance criteria, one test per criterion.

Each test prints a single ``PASS`` or ``FAIL`` line (visible even without
``-s``) and then asserts, so the pytest outcome and the printed line agree.
"""
import contextlib
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trfvq import cli, dsp, fixtures, vq
from trfvq import evaluation as ev
from trfvq.autodiff import AdamState, Tensor
from trfvq.models import (
    Batch,
    CodebookInverter,
    InverterConfig,
    TransformerVQVAE,
    VqVaeConfig,
    synthesize,
    train_step_vqvae,
)

from . import gradcheck
from .conftest import TOY_VQVAE


@pytest.fixture
def criterion(capsys):
    @contextlib.contextmanager
    def run(number, title):
        start = time.perf_counter()
        notes = []
        try:
            yield notes
        except BaseException as exc:
            with capsys.disabled():
                print(f"\nFAIL  C{number:<2} {title}: {exc}".rstrip())
            raise
        line = f"PASS  C{number:<2} {title} ({time.perf_counter() - start:.1f}s) " + "; ".join(notes)
        with capsys.disabled():
            print("\n" + line.rstrip())
    return run


def test_c01_gradient_correctness(criterion):
    with criterion(1, "finite-difference gradients") as notes:
        start = time.perf_counter()
        worst, where = 0.0, None
        for name, builder in {**gradcheck.PRIMITIVES, **gradcheck.COMPOSED}.items():
            for seed in range(20):
                err = gradcheck.max_error(builder, seed)
                if err > worst:
                    worst, where = err, (name, seed)
        elapsed = time.perf_counter() - start
        notes.append(f"max rel err {worst:.2e} at {where}")
        assert worst <= gradcheck.TOL, f"max relative error {worst:.3e} at {where}"
        assert elapsed < 60.0, f"took {elapsed:.1f}s"


def scan(Z, E):
    best = np.zeros(len(Z), dtype=int)
    for t, z in enumerate(Z):
        d = [float(np.sum((z - e) ** 2)) for e in E]
        best[t] = int(np.argmin(d))
    return best


def test_c02_quantizer_oracle(criterion):
    with criterion(2, "quantizer matches exhaustive argmin"):
        rng = np.random.default_rng(0)
        mismatches = 0
        for _ in range(1000):
            K, T, D = rng.integers(2, 65), rng.integers(1, 33), rng.integers(1, 17)
            E, Z = rng.standard_normal((K, D)), rng.standard_normal((T, D))
            res = vq.quantize_sequence(Tensor(Z), E)
            mismatches += int(np.sum(res.indices != scan(Z, E)))
        assert mismatches == 0, f"{mismatches} mismatched frames"


def test_c03_ema_convergence(criterion):
    with criterion(3, "EMA codebook converges to cluster means") as notes:
        rng = np.random.default_rng(0)
        means = np.array([[-3.0, 1.0], [4.0, -2.0]])
        cb = vq.Codebook(np.array([[-1.0, 0.0], [1.0, 0.0]]), decay=0.99)
        for _ in range(200):
            labels = rng.integers(0, 2, 256)
            Z = means[labels] + 0.3 * rng.standard_normal((256, 2))
            vq.ema_update(cb, Z, vq.nearest_codes(Z, cb))
        dist = np.linalg.norm(cb.vectors - means, axis=1)
        notes.append(f"L2 {dist.max():.4f}")
        assert dist.max() < 0.05, f"distances {dist}"


def test_c04_regularizer_contracts(criterion):
    with criterion(4, "smoothing and jitter contracts") as notes:
        frames = arrays(np.float64, st.tuples(st.integers(1, 16), st.integers(1, 8)),
                        elements=st.floats(-100, 100))

        @given(frames)
        @settings(max_examples=500, deadline=None, database=None)
        def reversal(Z):
            a = float(vq.temporal_smoothing_loss(Tensor(Z)).values)
            b = float(vq.temporal_smoothing_loss(Tensor(Z[::-1].copy())).values)
            assert a == pytest.approx(b, rel=1e-12, abs=1e-9)

        @given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-100, 100)),
               st.integers(1, 16))
        @settings(max_examples=500, deadline=None, database=None)
        def constant(row, T):
            assert float(vq.temporal_smoothing_loss(Tensor(np.tile(row, (T, 1)))).values) == 0.0

        reversal()
        constant()

        c = np.arange(100_000)
        frac = float(np.mean(vq.temporal_jitter(c, 0.05, 0) != c))
        notes.append(f"swap fraction {frac:.4f}")
        assert abs(frac - 0.10) <= 0.005, f"swap fraction {frac}"
        codes = np.random.default_rng(1).integers(0, 64, 100_000)
        np.testing.assert_array_equal(vq.temporal_jitter(codes, 0.0, 2), codes)


def test_c05_overfit_sanity(criterion, short_utterance):
    with criterion(5, "single-utterance overfit") as notes:
        start = time.perf_counter()
        ratios = []
        for extra in ({}, {"smoothing": 5e-3, "jitter_p": 0.05}):
            # default widths are the toy config
            model = TransformerVQVAE(VqVaeConfig(**extra), ["s"], seed=0)
            model.fit_normalization([short_utterance])
            adam = AdamState(lr=model.config.lr)
            rng = np.random.default_rng(0)
            batch = Batch(short_utterance[None], ["s"])
            hist = [train_step_vqvae(model, batch, adam, rng) for _ in range(500)]
            key = "total" if extra else "rec"
            ratios.append(getattr(hist[-1], key) / getattr(hist[0], key))
        elapsed = time.perf_counter() - start
        notes.append(f"rec kept {ratios[0]:.2e}, regularized total kept {ratios[1]:.2e}")
        assert short_utterance.shape[0] == 16
        assert ratios[0] <= 0.10, f"reconstruction kept {ratios[0]:.3f}"
        assert ratios[1] <= 0.20, f"regularized loss kept {ratios[1]:.3f}"
        assert elapsed < 300.0, f"took {elapsed:.1f}s"


def test_c06_shape_law(criterion):
    with criterion(6, "frames to units to spectrogram to samples"):
        rng = np.random.default_rng(0)
        model = TransformerVQVAE(VqVaeConfig(**TOY_VQVAE), ["s"], seed=0)
        model.codebook.init_from_samples(rng.standard_normal((64, TOY_VQVAE["code_dim"])), rng)
        inv = CodebookInverter(InverterConfig(code_dim=TOY_VQVAE["code_dim"], d_mdl=32, d_ff=64),
                               model.codebook.vectors, seed=0)
        for T in (4, 17, 100, 1000):
            units = model.encode_utterance(rng.standard_normal((T, 39)))
            n_units = math.ceil(T / 4)
            assert len(units) == n_units, f"T={T}: {len(units)} units"
            S = inv.forward(units).shape[0]
            assert S == 4 * n_units, f"T={T}: {S} spectrogram frames"
            w = synthesize(units, inv, 2)
            assert len(w) == (S - 1) * 160 + 400, f"T={T}: {len(w)} samples"


def test_c07_griffin_lim(criterion):
    with criterion(7, "Griffin-Lim monotone and accurate on a sine") as notes:
        rng = np.random.default_rng(0)
        for i in range(50):
            target = rng.random((int(rng.integers(5, 40)), 257))
            _, errors = dsp.griffin_lim(target, 60, return_errors=True)
            steps = np.diff(errors)
            assert len(errors) == 60
            assert steps.max() <= 1e-6, f"target {i}: error rose by {steps.max():.2e}"
        t = np.arange(16000) / 16000
        mag, _ = dsp.stft(dsp.Waveform(np.sin(2 * np.pi * 440 * t), 16000))
        _, errors = dsp.griffin_lim(mag, 60, return_errors=True)
        notes.append(f"sine SC {errors[-1]:.4f}")
        assert errors[-1] < 0.1, f"sine spectral convergence {errors[-1]:.4f}"


def test_c08_bitrate_exactness(criterion):
    with criterion(8, "bitrate exact on hand corpora"):
        cases = [([[5] * 100], [1.0], 0.0),
                 ([[0, 1] * 50], [1.0], 100.0),
                 ([[0, 1, 2, 3] * 10, [3, 2, 1, 0] * 15], [0.25, 0.25], 400.0)]
        for streams, durations, expected in cases:
            got = ev.bitrate(streams, durations).bitrate
            assert abs(got - expected) <= 1e-9, f"expected {expected}, got {got}"
        rng = np.random.default_rng(0)
        for _ in range(100):
            seq = rng.integers(0, 16, int(rng.integers(1, 200)))
            perm = rng.permutation(64)
            a = ev.bitrate([seq], [2.0]).bitrate
            b = ev.bitrate([perm[seq]], [2.0]).bitrate
            assert abs(a - b) <= 1e-9, "relabeling changed the bitrate"


def categories(rng, n_per):
    protos = np.eye(3)
    items = [np.tile(protos[c], (4, 1)) + 0.05 * rng.random((4, 3))
             for c in range(3) for _ in range(n_per)]
    labels = [c for c in range(3) for _ in range(n_per)]
    return items, labels


def test_c09_abx_sanity(criterion):
    with criterion(9, "ABX separable and shuffled") as notes:
        rng = np.random.default_rng(0)
        items, labels = categories(rng, 40)
        sep = ev.abx_error_rate(ev.make_triplets(labels, rng, 1000), embed=lambda i: items[i])
        shuffled = ev.make_triplets(rng.permutation(labels), rng, 1000)
        chance = ev.abx_error_rate(shuffled, embed=lambda i: items[i])
        notes.append(f"separable {sep:.1f}%, shuffled {chance:.1f}%")
        assert sep == 0.0, f"separable error {sep}"
        assert abs(chance - 50.0) <= 3.0, f"shuffled error {chance}"


def pipeline_run(root):
    manifest = fixtures.make_fixture_corpus(root / "corpus")
    config = fixtures.write_toy_config(root / "toy.json")
    steps = [
        ["extract-features", "--manifest", manifest, "--config", config, "--out", root / "f"],
        ["train-vqvae", "--manifest", manifest, "--config", config, "--features", root / "f",
         "--out", root / "vq"],
        ["train-inverter", "--manifest", manifest, "--config", config,
         "--checkpoint", root / "vq" / "vqvae.tvq", "--out", root / "inv"],
        ["encode", "--manifest", manifest, "--checkpoint", root / "vq" / "vqvae.tvq",
         "--features", root / "f", "--out", root / "units"],
    ]
    for argv in steps:
        code = cli.main([str(a) for a in argv])
        assert code == 0, f"{argv[0]} exited {code}"
    artifacts = [root / "vq" / "vqvae.tvq", root / "inv" / "inverter.tvq"]
    artifacts += sorted((root / "units").glob("*.txt"))
    return {p.relative_to(root): p.read_bytes() for p in artifacts}


def test_c10_determinism(criterion, tmp_path):
    with criterion(10, "byte-identical pipeline reruns") as notes:
        first = pipeline_run(tmp_path / "a")
        second = pipeline_run(tmp_path / "b")
        notes.append(f"{len(first)} artifacts")
        assert len(first) >= 6
        assert first.keys() == second.keys()
        differing = [str(k) for k in first if first[k] != second[k]]
        assert not differing, f"differing artifacts: {differing}"
