"""RemoteBackend against an in-process stub speaking the sidecar protocol."""

import base64
import io
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from PIL import Image

from patchdistill.errors import BackendError
from patchdistill.remote import RemoteBackend, RemoteTeacher, decode_tensor, encode_tensor
from patchdistill.types import DrawSpec, LatentMap, PromptSpec


class StubHandler(BaseHTTPRequestHandler):
    fail_next = 0  # class-level: abort this many requests without replying

    def log_message(self, *args):
        pass

    def _read_json(self):
        length = int(self.headers.get("Content-Length", 0))
        return json.loads(self.rfile.read(length))

    def _send(self, doc, status=200):
        body = json.dumps(doc).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/v1/health":
            self._send({"status": "ok", "downsample_factor": 2,
                        "teacher_class_names": ["r", "g", "b"], "T_total": 100})
        else:
            self._send({"error": "not found"}, 404)

    def do_POST(self):
        if StubHandler.fail_next > 0:
            StubHandler.fail_next -= 1
            self.connection.close()
            return
        doc = self._read_json()
        if self.path == "/v1/encode":
            img = np.asarray(Image.open(io.BytesIO(base64.b64decode(doc["image"]))).convert("RGB"))
            lum = img.astype(np.float32).mean(axis=2) / 255.0
            latent = lum[::2, ::2]
            self._send({"latent": encode_tensor(latent), "downsample_factor": 2})
        elif self.path == "/v1/loss_map":
            latent = decode_tensor(doc["latent"])
            prompt_bias = 0.0 if doc["prompt"] is None else 0.125
            maps = []
            for d in doc["draws"]:
                maps.append(np.full_like(latent, d["t"] + prompt_bias) + 1e-3 * (d["noise_seed"] % 7))
            self._send({"loss_maps": encode_tensor(np.stack(maps))})
        elif self.path == "/v1/features":
            feats = []
            for payload in doc["latents"]:
                latent = decode_tensor(payload)
                feats.append(encode_tensor(np.array([latent.mean(), latent.std(), doc["t"]], dtype=np.float32)))
            self._send({"features": feats})
        elif self.path == "/v1/teacher_logits":
            logits = []
            for b64 in doc["images"]:
                img = np.asarray(Image.open(io.BytesIO(base64.b64decode(b64))).convert("RGB"))
                logits.append(encode_tensor(img.reshape(-1, 3).mean(axis=0).astype(np.float32)))
            self._send({"logits": logits, "class_names": ["r", "g", "b"]})
        elif self.path == "/v1/broken":
            self._send({"error": "teapot"}, 422)
        else:
            self._send({"error": "not found"}, 404)


@pytest.fixture(scope="module")
def stub_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


def test_tensor_codec_round_trip():
    arr = np.random.default_rng(0).normal(size=(3, 4)).astype(np.float32)
    back = decode_tensor(encode_tensor(arr))
    np.testing.assert_array_equal(back, arr)
    with pytest.raises(BackendError):
        decode_tensor({"shape": [2, 2], "dtype": "f64", "data": ""})
    with pytest.raises(BackendError):
        decode_tensor({"shape": [2, 2], "dtype": "f32", "data": base64.b64encode(b"xx").decode()})


def test_remote_encode_and_factor(stub_server):
    backend = RemoteBackend(stub_server)
    img = np.full((8, 8, 3), 128, dtype=np.uint8)
    lat = backend.encode(img, "img0")
    assert lat.shape == (4, 4)
    assert lat.downsample_factor == 2
    assert backend.downsample_factor == 2
    np.testing.assert_allclose(lat.data, 128 / 255, atol=1e-6)


def test_remote_loss_map_pairing_and_prompt_sensitivity(stub_server):
    backend = RemoteBackend(stub_server)
    lat = LatentMap(np.zeros((4, 4), dtype=np.float32), 2, "x")
    draw = DrawSpec(0.4, 21)
    cond = backend.loss_map(lat, PromptSpec.for_label("cat"), draw)
    null = backend.loss_map(lat, PromptSpec.null(), draw)
    assert cond.data.shape == lat.shape
    np.testing.assert_allclose(cond.data - null.data, 0.125, atol=1e-6)
    again = backend.loss_map(lat, PromptSpec.for_label("cat"), draw)
    assert again.data.tobytes() == cond.data.tobytes()


def test_remote_features(stub_server):
    backend = RemoteBackend(stub_server)
    lat = LatentMap(np.full((4, 4), 0.5, dtype=np.float32), 2, "x")
    vec = backend.features(lat, PromptSpec.for_label("cat"), 1.6)
    assert vec.values.shape == (3,)
    assert vec.values[0] == pytest.approx(0.5, abs=1e-6)
    assert vec.values[2] == pytest.approx(1.6, abs=1e-6)


def test_remote_teacher(stub_server):
    teacher = RemoteTeacher(stub_server)
    img = np.zeros((6, 6, 3), dtype=np.uint8)
    img[..., 1] = 200
    p = teacher.probabilities(img)
    assert p.argmax() == 1
    assert p.sum() == pytest.approx(1.0, abs=1e-9)
    assert teacher.class_names == ["r", "g", "b"]


def test_remote_retries_transport_errors(stub_server):
    StubHandler.fail_next = 2
    backend = RemoteBackend(stub_server, retries=3, backoff=0.01)
    img = np.full((8, 8, 3), 10, dtype=np.uint8)
    lat = backend.encode(img, "img0")  # succeeds on the third attempt
    assert lat.shape == (4, 4)

    StubHandler.fail_next = 5
    flaky = RemoteBackend(stub_server, retries=3, backoff=0.01)
    with pytest.raises(BackendError, match="after 3 attempts"):
        flaky.encode(img, "img0")
    StubHandler.fail_next = 0


def test_remote_protocol_error_no_retry(stub_server):
    backend = RemoteBackend(stub_server)
    with pytest.raises(BackendError, match="422"):
        backend._http.post("/v1/broken", {})


def test_remote_unreachable_raises_backend_error():
    backend = RemoteBackend("http://127.0.0.1:9", retries=2, backoff=0.01)
    with pytest.raises(BackendError):
        backend.encode(np.zeros((4, 4, 3), dtype=np.uint8), "x")
