from __future__ import annotations

import json

import httpx
import numpy as np
import pytest

from ambiance.annotation import (
    NO_FACE,
    SCHEMA_VERSION,
    AnnotationSource,
    FaceAnnotation,
    RemoteFaceClient,
    annotate,
    parse_annotation_file,
    parse_service_response,
    scan_annotation_file,
    stub_annotate,
    write_annotation_file,
)
from ambiance.errors import DuplicatePictureId, MalformedResponse, ProviderUnavailable, SchemaMismatch
from ambiance.imaging import ImageBuffer, Region
from ambiance.synthetic import rgb_noise, solid, synthetic_face_centered

FACE = FaceAnnotation(
    detected=True,
    bbox=Region(10, 10, 50, 60),
    landmarks={"left_eye": (20.0, 25.0), "right_eye": (40.0, 25.0), "nose": (30.0, 35.0), "mouth": (30.0, 48.0)},
    smile=0.7, age=31.0, sex="female", sex_confidence=0.9, race=(0.5, 0.3, 0.2), glasses="none", tilt_deg=0.0,
)


def service_face(confidence=95.0, left=10, roll=3.0, mouth=True):
    lm = {
        "left_eye_center": {"x": left + 10, "y": 25}, "right_eye_center": {"x": left + 30, "y": 25},
        "nose_tip": {"x": left + 20, "y": 35},
    }
    if mouth:
        lm["mouth_left_corner"] = {"x": left + 14, "y": 48}
        lm["mouth_right_corner"] = {"x": left + 26, "y": 48}
    return {
        "face_confidence": confidence,
        "face_rectangle": {"left": left, "top": 10, "width": 40, "height": 50},
        "landmark": lm,
        "attributes": {
            "smile": {"value": 80.0}, "age": {"value": 27}, "gender": {"value": "Male", "confidence": 97.0},
            "ethnicity": {"value": "Asian"}, "eyeglass": {"value": "Dark"}, "headpose": {"roll_angle": roll},
        },
    }


def write_lines(path, records, header=None):
    header = header or {"schema_version": SCHEMA_VERSION}
    path.write_text("\n".join(json.dumps(r) for r in [header, *records]) + "\n")
    return path


# record invariants

def test_valid_record_round_trips():
    assert FaceAnnotation.from_record(FACE.to_record("a/1")) == FACE


def test_undetected_face_must_be_bare():
    assert NO_FACE.validate() is NO_FACE
    with pytest.raises(SchemaMismatch):
        FaceAnnotation(False, smile=0.5).validate()


def test_race_must_sum_to_one():
    bad = FACE.to_record("a/1")
    bad["race"] = {"caucasian": 0.4, "black": 0.2, "asian": 0.2}
    with pytest.raises(SchemaMismatch):
        FaceAnnotation.from_record(bad)


def test_landmarks_must_sit_near_the_box():
    rec = FACE.to_record("a/1")
    rec["landmarks"]["nose"] = [200.0, 200.0]
    with pytest.raises(SchemaMismatch, match="nose"):
        FaceAnnotation.from_record(rec)


def test_partial_landmarks_rejected():
    rec = FACE.to_record("a/1")
    del rec["landmarks"]["mouth"]
    with pytest.raises(SchemaMismatch):
        FaceAnnotation.from_record(rec)


# file ingest

def test_single_record_file(tmp_path):
    p = write_lines(tmp_path / "a.jsonl", [FACE.to_record("p/1")])
    assert parse_annotation_file(p) == {"p/1": FACE}


def test_header_only_file_is_empty(tmp_path):
    assert parse_annotation_file(write_lines(tmp_path / "a.jsonl", [])) == {}


def test_bad_race_reported_with_record_id(tmp_path):
    rec = FACE.to_record("p/7")
    rec["race"] = {"caucasian": 0.4, "black": 0.2, "asian": 0.2}
    p = write_lines(tmp_path / "a.jsonl", [FACE.to_record("p/1"), rec])
    with pytest.raises(SchemaMismatch, match="p/7"):
        parse_annotation_file(p)
    _, findings = scan_annotation_file(p)
    assert [(f.line, f.picture_id) for f in findings] == [(3, "p/7")]


def test_duplicate_picture_id(tmp_path):
    p = write_lines(tmp_path / "a.jsonl", [FACE.to_record("p/1"), FACE.to_record("p/1")])
    with pytest.raises(DuplicatePictureId):
        parse_annotation_file(p)


def test_unknown_schema_version(tmp_path):
    p = write_lines(tmp_path / "a.jsonl", [], header={"schema_version": 99})
    with pytest.raises(SchemaMismatch):
        parse_annotation_file(p)


def test_writer_and_parser_agree(tmp_path):
    table = {"x/1": FACE, "x/2": NO_FACE}
    write_annotation_file(tmp_path / "a.jsonl", table)
    assert parse_annotation_file(tmp_path / "a.jsonl") == table


def test_file_source_looks_up_picture(tmp_path):
    write_annotation_file(tmp_path / "a.jsonl", {"x/1": FACE})
    src = AnnotationSource("file", path=str(tmp_path / "a.jsonl"))
    img = solid(8, 8, (0, 0, 0))
    assert annotate(img, src, "x/1") == FACE
    with pytest.raises(ProviderUnavailable):
        annotate(img, src, "x/2")


# stub

def test_stub_sees_no_face_on_flat_gray():
    assert not stub_annotate(solid(64, 64, (128, 128, 128)), seed=0).detected


def test_stub_reads_face_fixture_geometry():
    img = synthetic_face_centered()
    ann = stub_annotate(img, seed=0)
    assert ann.detected and ann.tilt_deg == 0.0
    cx, cy = ann.bbox.center
    assert abs(cx - img.width / 2) <= 2 and abs(cy - img.height / 2) <= 2


def test_stub_is_deterministic():
    img = rgb_noise(24, 24, seed=11)
    assert stub_annotate(img, seed=3) == stub_annotate(img, seed=3)


def test_stub_seed_changes_outcomes():
    imgs = [rgb_noise(8, 8, seed=s) for s in range(60)]
    a = [stub_annotate(i, 0).detected for i in imgs]
    b = [stub_annotate(i, 1).detected for i in imgs]
    assert a != b


def test_stub_detection_rate_on_10000_random_images():
    rng = np.random.default_rng(0)
    hits = sum(stub_annotate(ImageBuffer(rng.integers(0, 256, (6, 6, 3))), seed=0).detected for _ in range(10_000))
    assert hits / 10_000 == pytest.approx(0.53, abs=0.02)


def test_stub_annotations_are_valid():
    for s in range(40):
        stub_annotate(rgb_noise(32, 20, seed=s), seed=0).validate()


# remote service

def make_client(handler, **kw):
    return RemoteFaceClient("https://faces.test/detect", "k", "s", transport=httpx.MockTransport(handler),
                            sleep=lambda _: None, **kw)


def test_highest_confidence_face_wins():
    ann = parse_service_response({"faces": [service_face(60.0, left=0), service_face(99.0, left=40)]})
    assert ann.bbox.x0 == 40
    assert ann.glasses == "sunglasses" and ann.sex == "male" and ann.race == (0.0, 0.0, 1.0)
    assert ann.smile == pytest.approx(0.8) and ann.tilt_deg == 3.0


def test_empty_face_list_means_no_face():
    assert parse_service_response({"faces": []}) == NO_FACE


def test_incomplete_landmarks_are_malformed():
    with pytest.raises(MalformedResponse):
        parse_service_response({"faces": [service_face(mouth=False)]})


def test_missing_faces_key_is_malformed():
    with pytest.raises(MalformedResponse):
        parse_service_response({"error": "x"})


def test_client_retries_5xx_then_succeeds():
    calls = []

    def handler(request):
        calls.append(request)
        if len(calls) < 3:
            return httpx.Response(503)
        return httpx.Response(200, json={"faces": [service_face()]})

    with make_client(handler) as c:
        ann = c.annotate(solid(16, 16, (1, 2, 3)))
    assert ann.detected and len(calls) == 3
    assert b"image_file" in calls[0].content and b"api_key" in calls[0].content


def test_client_gives_up_after_three_retries():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(500)

    with make_client(handler) as c, pytest.raises(ProviderUnavailable):
        c.annotate(solid(4, 4, (0, 0, 0)))
    assert len(calls) == 4


def test_client_does_not_retry_4xx():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401)

    with make_client(handler) as c, pytest.raises(ProviderUnavailable):
        c.annotate(solid(4, 4, (0, 0, 0)))
    assert len(calls) == 1


def test_client_non_json_is_malformed():
    with make_client(lambda r: httpx.Response(200, text="<html>")) as c, pytest.raises(MalformedResponse):
        c.annotate(solid(4, 4, (0, 0, 0)))


def test_unreachable_endpoint_is_provider_unavailable():
    def handler(request):
        raise httpx.ConnectError("refused", request=request)

    with make_client(handler) as c, pytest.raises(ProviderUnavailable):
        c.annotate(solid(4, 4, (0, 0, 0)))


def test_missing_endpoint_is_provider_unavailable(monkeypatch):
    monkeypatch.delenv("AMBIANCE_FACE_ENDPOINT", raising=False)
    with pytest.raises(ProviderUnavailable):
        annotate(solid(4, 4, (0, 0, 0)), AnnotationSource.remote_from_env())


def test_annotate_many_preserves_order_and_caps_concurrency():
    import threading

    lock, state = threading.Lock(), {"now": 0, "peak": 0}

    def handler(request):
        with lock:
            state["now"] += 1
            state["peak"] = max(state["peak"], state["now"])
        import time

        time.sleep(0.01)
        faces = [service_face()]
        with lock:
            state["now"] -= 1
        # odd-sized images carry no face, so the result order is observable
        from ambiance.imaging import decode_image

        img = decode_image(request.content[request.content.index(b"\x89PNG"):])
        return httpx.Response(200, json={"faces": [] if img.width % 2 else faces})

    imgs = [solid(8 + i % 2, 8, (0, 0, 0)) for i in range(8)]
    with make_client(handler, max_concurrency=2) as c:
        anns = c.annotate_many(imgs)
    assert [a.detected for a in anns] == [i % 2 == 0 for i in range(8)]
    assert state["peak"] <= 2
