import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forgeguard.cascade import (
    DetectionBackendError,
    StageBackend,
    StageOutput,
    StageRoleError,
    TemplateMatchBackend,
    WeightFormatError,
    apply_box_regression,
    detect_faces,
    load_stage_weights,
    render_marker,
    save_stage_weights,
)
from forgeguard.imaging import Box, ImageBuffer, build_pyramid, iou

# stage thresholds used by the planted-marker fixtures; the pyramid quantizes
# marker framing, so proposal/refine run permissive and the output stage is
# strict after regression snaps boxes onto the marker
FIXTURE_THRESHOLDS = (0.55, 0.55, 0.9)


def stub_backends(regress=True, landmarks=True):
    return [
        TemplateMatchBackend(role, regress=regress, landmarks=landmarks)
        for role in ("proposal", "refine", "output")
    ]


def blank_image(w=200, h=200):
    return ImageBuffer(np.zeros((h, w, 3), np.float32))


def planted_image(boxes, w=200, h=200):
    img = blank_image(w, h)
    for box in boxes:
        render_marker(img, box)
    return img


# ---------------------------------------------------------------------------
# apply_box_regression


def test_regression_zero_offsets_identity():
    b = Box(3, 4, 10, 12)
    out = apply_box_regression(b, (0, 0, 0, 0))
    assert (out.x, out.y, out.w, out.h) == (3, 4, 10, 12)


def test_regression_hand_case():
    out = apply_box_regression(Box(0, 0, 10, 10), (0.1, 0.1, -0.1, -0.1))
    assert (out.x, out.y, out.w, out.h) == (1, 1, 8, 8)


@settings(max_examples=500, deadline=None)
@given(
    x=st.floats(-50, 50),
    y=st.floats(-50, 50),
    w=st.floats(0, 40),
    h=st.floats(0, 40),
    offs=st.tuples(*[st.floats(-1, 1)] * 4),
)
def test_regression_matches_corner_arithmetic_oracle(x, y, w, h, offs):
    got = apply_box_regression(Box(x, y, w, h), offs)
    # independent corner arithmetic
    x1 = x + offs[0] * w
    y1 = y + offs[1] * h
    x2 = (x + w) + offs[2] * w
    y2 = (y + h) + offs[3] * h
    assert got.x == pytest.approx(min(x1, x2))
    assert got.y == pytest.approx(min(y1, y2))
    assert got.w == pytest.approx(abs(x2 - x1))
    assert got.h == pytest.approx(abs(y2 - y1))
    assert got.w >= 0 and got.h >= 0


# ---------------------------------------------------------------------------
# StageOutput / backend basics


def test_stage_output_validates_confidence():
    with pytest.raises(ValueError):
        StageOutput(classifier=1.2, bbox_regress=(0, 0, 0, 0))


def test_stage_output_landmark_length():
    with pytest.raises(ValueError):
        StageOutput(classifier=0.5, bbox_regress=(0, 0, 0, 0), landmark_regress=(0.5, 0.5))


def test_backend_scores_blank_patches_zero():
    p = TemplateMatchBackend("proposal")
    zeros = np.zeros((12, 12, 3))
    assert p.evaluate(zeros).classifier == 0.0


def test_backend_rejects_unknown_role():
    with pytest.raises(StageRoleError):
        TemplateMatchBackend("detect")


def test_backend_input_sizes_follow_roles():
    sizes = {b.stage_role: b.input_size for b in stub_backends()}
    assert sizes == {"proposal": 12, "refine": 24, "output": 48}


def test_landmarks_only_from_output_stage():
    patch12 = np.zeros((12, 12, 3))
    patch48 = np.zeros((48, 48, 3))
    assert TemplateMatchBackend("proposal").evaluate(patch12).landmark_regress is None
    assert TemplateMatchBackend("output").evaluate(patch48).landmark_regress is not None


# ---------------------------------------------------------------------------
# weight container


def test_weights_round_trip_identical_outputs(tmp_path):
    rng = np.random.default_rng(42)
    for role, size in (("proposal", 12), ("refine", 24), ("output", 48)):
        backend = TemplateMatchBackend(role, sharpness=2.5)
        path = tmp_path / f"{role}.fgsw"
        save_stage_weights(backend, path)
        loaded = load_stage_weights(path)
        patches = rng.uniform(0, 255, size=(100, size, size, 3))
        s1, o1, l1 = backend.evaluate_batch(patches)
        s2, o2, l2 = loaded.evaluate_batch(patches)
        assert np.array_equal(s1, s2)
        assert np.array_equal(o1, o2)
        assert (l1 is None) == (l2 is None)
        if l1 is not None:
            assert np.array_equal(l1, l2)


def test_weights_truncated_file_raises(tmp_path):
    path = tmp_path / "p.fgsw"
    save_stage_weights(TemplateMatchBackend("proposal"), path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(WeightFormatError, match="truncated"):
        load_stage_weights(path)


def test_weights_bad_magic_raises(tmp_path):
    path = tmp_path / "junk.fgsw"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(WeightFormatError, match="magic"):
        load_stage_weights(path)


def test_weights_role_mismatch_raises(tmp_path):
    path = tmp_path / "r.fgsw"
    save_stage_weights(TemplateMatchBackend("refine"), path)
    with pytest.raises(StageRoleError, match="refine.*proposal"):
        load_stage_weights(path, expected_role="proposal")
    # and the honest load works
    assert load_stage_weights(path, expected_role="refine").stage_role == "refine"


# ---------------------------------------------------------------------------
# detect_faces


def test_blank_image_yields_nothing():
    assert detect_faces(blank_image(), stub_backends(), thresholds=FIXTURE_THRESHOLDS) == []


def test_single_plant_detected_with_good_iou():
    plant = Box(100, 100, 60, 60)
    dets = detect_faces(planted_image([plant]), stub_backends(), thresholds=FIXTURE_THRESHOLDS)
    assert len(dets) == 1
    assert iou(dets[0].box, plant) >= 0.6
    assert dets[0].confidence >= FIXTURE_THRESHOLDS[2]
    assert dets[0].landmarks is not None


def test_two_plants_detected_individually():
    plants = [Box(30, 40, 50, 50), Box(150, 140, 60, 60)]
    dets = detect_faces(
        planted_image(plants, w=240, h=260), stub_backends(), thresholds=FIXTURE_THRESHOLDS
    )
    assert len(dets) == 2
    matched = {min(range(2), key=lambda i: -iou(d.box, plants[i])) for d in dets}
    assert matched == {0, 1}
    for d in dets:
        assert max(iou(d.box, p) for p in plants) >= 0.6


def test_detections_sorted_and_mutually_non_overlapping():
    plants = [Box(30, 40, 50, 50), Box(150, 140, 60, 60)]
    dets = detect_faces(
        planted_image(plants, w=240, h=260), stub_backends(), thresholds=FIXTURE_THRESHOLDS
    )
    confs = [d.confidence for d in dets]
    assert confs == sorted(confs, reverse=True)
    for i in range(len(dets)):
        for j in range(i + 1, len(dets)):
            assert iou(dets[i].box, dets[j].box) <= 0.7


def test_landmarks_decoded_as_box_fractions():
    plant = Box(100, 100, 60, 60)
    dets = detect_faces(planted_image([plant]), stub_backends(), thresholds=FIXTURE_THRESHOLDS)
    d = dets[0]
    lx, ly = d.landmarks.left_eye
    assert lx == pytest.approx(d.box.x + 0.30 * d.box.w)
    assert ly == pytest.approx(d.box.y + 0.35 * d.box.h)


def test_missing_role_raises():
    backends = stub_backends()[:2]
    with pytest.raises(ValueError, match="missing backends"):
        detect_faces(blank_image(), backends)


def test_backend_failure_propagates_as_detection_error():
    class Exploding(StageBackend):
        stage_role = "proposal"
        input_size = 12

        def evaluate_batch(self, patches):
            raise RuntimeError("kaboom")

    backends = [Exploding()] + stub_backends()[1:]
    with pytest.raises(DetectionBackendError, match="proposal"):
        detect_faces(planted_image([Box(50, 50, 60, 60)]), backends)


def test_tiny_image_empty_pyramid_returns_empty():
    img = ImageBuffer(np.zeros((8, 8, 3), np.float32))
    assert detect_faces(img, stub_backends()) == []


def proposal_scan_oracle(image, backend, threshold, stride=2):
    """Loop-based proposal scan, independent of the vectorized path."""
    boxes = []
    for level in build_pyramid(image, 0.709, 12):
        px = level.image.pixels
        size = backend.input_size
        for y in range(0, level.image.height - size + 1, stride):
            for x in range(0, level.image.width - size + 1, stride):
                out = backend.evaluate(px[y : y + size, x : x + size])
                if out.classifier >= threshold:
                    inv = 1.0 / level.scale
                    boxes.append((x * inv, y * inv, size * inv, size * inv))
    return boxes


def test_zero_offset_output_boxes_are_proposal_boxes():
    # a 12x12 plant at even coordinates is exactly framed at pyramid level 0,
    # so with regression and landmarks disabled the surviving output box must
    # be one of the proposal-stage boxes, unchanged
    plant = Box(40, 60, 12, 12)
    img = planted_image([plant], w=120, h=120)
    backends = stub_backends(regress=False, landmarks=False)
    dets = detect_faces(img, backends, thresholds=FIXTURE_THRESHOLDS)
    assert dets
    proposals = proposal_scan_oracle(img, backends[0], FIXTURE_THRESHOLDS[0])
    for d in dets:
        assert d.landmarks is None
        assert any(
            d.box.x == pytest.approx(px)
            and d.box.y == pytest.approx(py)
            and d.box.w == pytest.approx(pw)
            and d.box.h == pytest.approx(ph)
            for px, py, pw, ph in proposals
        )


@settings(max_examples=10, deadline=None)
@given(
    cx=st.integers(20, 120),
    cy=st.integers(20, 120),
    side=st.integers(40, 70),
    bump1=st.floats(0, 0.2),
    bump2=st.floats(0, 0.08),
)
def test_raising_thresholds_never_increases_detections(cx, cy, side, bump1, bump2):
    img = planted_image([Box(cx, cy, side, side)], w=220, h=220)
    backends = stub_backends()
    base = (0.5, 0.5, 0.85)
    n_base = len(detect_faces(img, backends, thresholds=base))
    for idx, bump in ((0, bump1), (1, bump1), (2, bump2)):
        raised = list(base)
        raised[idx] += bump
        n_raised = len(detect_faces(img, backends, thresholds=tuple(raised)))
        assert n_raised <= n_base
