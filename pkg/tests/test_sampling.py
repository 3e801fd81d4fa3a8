import math
import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from strokegen.geometry import CubicBezier, Path, Point, Polyline, StrokeImage
from strokegen.sampling import (
    GenerationResult,
    SamplerConfig,
    center_polylines,
    generate_image,
    generate_images,
    make_init_vector,
    render_svg,
    top_k_distribution,
    top_k_sample,
)
from strokegen.svgout import line_chart_svg
from strokegen.tokenizer import IMAGE_END, build_vocabulary
from strokegen.training import TrainConfig, train


def segment_path(x0, y0, x1, y1) -> Path:
    t = np.array([x1 - x0, y1 - y0]) / 3.0
    return Path(
        [
            CubicBezier(
                Point(x0, y0),
                Point(x0 + t[0], y0 + t[1]),
                Point(x0 + 2 * t[0], y0 + 2 * t[1]),
                Point(x1, y1),
            )
        ]
    )


@pytest.fixture(scope="module")
def micro_ckpt():
    image = StrokeImage(
        [
            segment_path(70, 70, 110, 70),
            segment_path(110, 70, 110, 110),
            segment_path(110, 110, 70, 110),
        ],
        boundary=180.0,
    )
    cfg = TrainConfig(
        epochs=3, patches_per_epoch=8, batch_size=8, warmup_steps=20,
        heldout_patches=6, seq_ceiling=16, d_model=8, n_layers=1, n_heads=2,
        d_ff=16, seed=5,
    )
    return train(image, cfg)


class TestTopKSample:
    def test_k1_is_argmax(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            logits = rng.standard_normal(30)
            pick = top_k_sample(logits, 1, rng)
            assert pick == int(np.argmax(logits))

    def test_closed_form_renormalization(self):
        logits = np.array([3.0, 2.0, -5.0])
        rng = np.random.default_rng(1)
        draws = np.array([top_k_sample(logits, 2, rng) for _ in range(20_000)])
        p0 = math.e / (math.e + 1.0)  # 0.7311
        assert np.mean(draws == 0) == pytest.approx(p0, abs=0.01)
        assert np.mean(draws == 1) == pytest.approx(1.0 - p0, abs=0.01)
        assert not np.any(draws == 2)  # excluded token: probability exactly 0

    def test_never_leaves_top_k_set(self):
        rng = np.random.default_rng(2)
        for _ in range(500):
            logits = rng.standard_normal(20)
            k = int(rng.integers(1, 21))
            top = set(np.argsort(-logits, kind="stable")[:k].tolist())
            assert top_k_sample(logits, k, rng) in top

    def test_tie_at_kth_prefers_lower_id(self):
        logits = np.array([1.0, 0.5, 0.5, 0.0])
        rng = np.random.default_rng(3)
        draws = {top_k_sample(logits, 2, rng) for _ in range(500)}
        assert draws == {0, 1}

    def test_k_equals_v_matches_full_softmax(self):
        rng = np.random.default_rng(4)
        logits = rng.standard_normal(10)
        n = 100_000
        draws = np.array([top_k_sample(logits, 10, rng) for _ in range(n)])
        counts = np.bincount(draws, minlength=10)
        z = logits - logits.max()
        probs = np.exp(z) / np.exp(z).sum()
        chi2 = float(np.sum((counts - n * probs) ** 2 / (n * probs)))
        # dof=9; chi2 below the 0.01 critical value 21.666 means p > 0.01
        assert chi2 < 21.666

    def test_invalid_k(self):
        with pytest.raises(ValueError):
            top_k_sample(np.zeros(5), 0, np.random.default_rng(0))
        with pytest.raises(ValueError):
            top_k_sample(np.zeros(5), 6, np.random.default_rng(0))

    def test_distribution_invariants(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            v = int(rng.integers(2, 40))
            logits = rng.standard_normal(v) * 3.0
            k = int(rng.integers(1, v + 1))
            probs = top_k_distribution(logits, k)
            top = set(np.argsort(-logits, kind="stable")[:k].tolist())
            excluded = [i for i in range(v) if i not in top]
            assert all(probs[i] == 0.0 for i in excluded)
            assert abs(probs.sum() - 1.0) < 1e-12

    def test_k_equals_v_distribution_is_full_softmax(self):
        rng = np.random.default_rng(6)
        logits = rng.standard_normal(12)
        z = logits - logits.max()
        full = np.exp(z) / np.exp(z).sum()
        assert np.allclose(top_k_distribution(logits, 12), full, atol=1e-15)


class TestMakeInitVector:
    @pytest.fixture
    def vocab(self):
        return build_vocabulary([[IMAGE_END]], max_len=3)

    def test_length_one_is_just_image_end(self, vocab):
        out = make_init_vector(1, vocab, np.random.default_rng(0))
        assert out == [vocab.image_end_id]

    def test_always_ends_with_image_end(self, vocab):
        rng = np.random.default_rng(1)
        for n in (1, 2, 5, 17):
            out = make_init_vector(n, vocab, rng)
            assert len(out) == n
            assert out[-1] == vocab.image_end_id
            assert all(i < vocab.n_regular for i in out[:-1])

    def test_deterministic(self, vocab):
        a = make_init_vector(9, vocab, np.random.default_rng(7))
        b = make_init_vector(9, vocab, np.random.default_rng(7))
        assert a == b


class TestGenerateImage:
    def test_greedy_fixed_seed_deterministic(self, micro_ckpt):
        cfg = SamplerConfig(k=1, seed=3)
        a = generate_image(micro_ckpt, cfg)
        b = generate_image(micro_ckpt, cfg)
        assert a.token_ids == b.token_ids
        assert a.hit_cap == b.hit_cap

    def test_image_end_only_as_terminator(self, micro_ckpt):
        end = micro_ckpt.vocab.image_end_id
        for seed in range(6):
            res = generate_image(micro_ckpt, SamplerConfig(k=5, seed=seed))
            body = res.token_ids[:-1]
            assert end not in body
            if not res.hit_cap:
                assert res.token_ids[-1] == end

    def test_cap_flagged_in_metadata(self, micro_ckpt):
        results = generate_images(
            micro_ckpt, SamplerConfig(k=10, max_moves=1, seed=0), 20
        )
        end = micro_ckpt.vocab.image_end_id
        for r in results:
            assert r.hit_cap == (not r.token_ids or r.token_ids[-1] != end)
            assert r.metadata()["hit_cap"] == r.hit_cap
        assert any(r.hit_cap for r in results)

    def test_long_generation_respects_window(self, micro_ckpt):
        # would raise inside encoder_forward if the context ever exceeded L
        L = micro_ckpt.model.seq_len
        res = generate_image(
            micro_ckpt, SamplerConfig(k=10, max_moves=3 * L, init_len=L, seed=1)
        )
        assert len(res.token_ids) <= 3 * L

    def test_count_and_determinism_of_batch(self, micro_ckpt):
        cfg = SamplerConfig(k=3, seed=9)
        a = generate_images(micro_ckpt, cfg, 5)
        b = generate_images(micro_ckpt, cfg, 5)
        assert [r.token_ids for r in a] == [r.token_ids for r in b]

    def test_parallel_matches_serial(self, micro_ckpt):
        cfg = SamplerConfig(k=3, seed=4, max_moves=20)
        serial = generate_images(micro_ckpt, cfg, 4)
        parallel = generate_images(micro_ckpt, cfg, 4, jobs=2)
        assert [r.token_ids for r in serial] == [r.token_ids for r in parallel]

    def test_k_exceeding_vocab_rejected(self, micro_ckpt):
        with pytest.raises(ValueError):
            generate_image(
                micro_ckpt, SamplerConfig(k=micro_ckpt.vocab.size + 1)
            )


class TestCenterPolylines:
    def test_bbox_lands_on_canvas_center(self):
        polys = [
            Polyline(np.array([[1000.0, -500.0], [1040.0, -500.0]])),
            Polyline(np.array([[1000.0, -470.0], [1040.0, -470.0]])),
        ]
        out = center_polylines(polys, 180.0)
        pts = np.concatenate([p.points for p in out])
        center = (pts.min(axis=0) + pts.max(axis=0)) / 2.0
        assert np.allclose(center, [90.0, 90.0])
        # translation only: spans preserved exactly
        assert pts[:, 0].max() - pts[:, 0].min() == 40.0

    def test_empty_input(self):
        assert center_polylines([], 180.0) == []


class TestRenderSvg:
    def test_single_polyline_path_element(self):
        poly = Polyline(np.array([[0.0, 0.0], [10.0, 0.0]]))
        svg = render_svg([[poly]])
        assert 'd="M 0 0 L 10 0"' in svg
        ET.fromstring(svg)  # well-formed XML

    def test_empty_image_valid_document(self):
        svg = render_svg([[]])
        root = ET.fromstring(svg)
        assert root.tag.endswith("svg")
        assert "<path" not in svg

    def test_grid_layout_arithmetic(self):
        images = [[Polyline(np.array([[0.0, 0.0], [5.0, 5.0]]))]
                  for _ in range(7)]
        svg = render_svg(images, columns=3, boundary=180.0, margin=10.0)
        cells = re.findall(r'<svg x="([\d.]+)" y="([\d.]+)"', svg)
        assert len(cells) == 7
        coords = {(float(x), float(y)) for x, y in cells}
        assert len(coords) == 7  # no two cells share a position
        rows = {y for _, y in coords}
        assert len(rows) == math.ceil(7 / 3)
        # cells are spaced a full cell apart: no viewbox overlap
        xs = sorted({x for x, _ in coords})
        assert all(b - a >= 180.0 for a, b in zip(xs, xs[1:]))

    def test_random_coloring_is_deterministic(self):
        poly = [Polyline(np.array([[0.0, 0.0], [5.0, 5.0]]))] * 3
        a = render_svg([poly], color_seed=5)
        b = render_svg([poly], color_seed=5)
        assert a == b
        assert len(set(re.findall(r'stroke="(#\w{6})"', a))) > 1

    def test_stroke_image_input(self, micro_ckpt):
        img = StrokeImage([segment_path(10, 10, 50, 50)], 180.0)
        svg = render_svg([img])
        ET.fromstring(svg)
        assert svg.count("<path") == 1


class TestLineChart:
    def test_series_rendered(self):
        svg = line_chart_svg(
            {"train": [3.0, 2.0, 1.5], "heldout": [3.2, 2.5, 2.2]},
            title="loss",
        )
        ET.fromstring(svg)
        assert svg.count("<polyline") == 2
        assert "train" in svg and "heldout" in svg

    def test_flat_series_no_crash(self):
        ET.fromstring(line_chart_svg({"x": [1.0, 1.0]}))
