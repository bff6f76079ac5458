"""Record golden fixtures for the contract tests.

Writes tests/fixtures/golden_input.png (a fixed seeded image) and
tests/goldens.json (semantic hashes of every endpoint's response to fixed
requests). Run once at build time; the test suite replays the requests and
compares hashes.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient
from PIL import Image

from inference_sidecar import create_app

HERE = Path(__file__).resolve().parent.parent
FIXTURES = HERE / "tests" / "fixtures"

GOLDEN_PROMPT = "An image of golden retriever"
GOLDEN_DRAWS = [{"t": 0.25, "noise_seed": 7}, {"t": 0.6, "noise_seed": 8}]


def tensor_hash(payload: dict) -> str:
    return hashlib.sha256(base64.b64decode(payload["data"])).hexdigest()


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20240917)
    img = rng.integers(0, 256, size=(96, 80, 3), dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="PNG")
    png = buf.getvalue()
    (FIXTURES / "golden_input.png").write_bytes(png)
    b64 = base64.b64encode(png).decode("ascii")

    client = TestClient(create_app())
    goldens: dict = {"prompt": GOLDEN_PROMPT, "draws": GOLDEN_DRAWS}

    enc = client.post("/v1/encode", json={"image": b64}).json()
    goldens["encode"] = {
        "latent_sha256": tensor_hash(enc["latent"]),
        "shape": enc["latent"]["shape"],
        "downsample_factor": enc["downsample_factor"],
    }

    for key, prompt in (("loss_map_label", GOLDEN_PROMPT), ("loss_map_null", None)):
        out = client.post(
            "/v1/loss_map",
            json={"latent": enc["latent"], "prompt": prompt, "draws": GOLDEN_DRAWS},
        ).json()
        goldens[key] = {
            "maps_sha256": tensor_hash(out["loss_maps"]),
            "shape": out["loss_maps"]["shape"],
            "scheduler_steps": out["scheduler_steps"],
        }

    feats = client.post(
        "/v1/features",
        json={"latents": [enc["latent"]], "prompt": GOLDEN_PROMPT, "t": 1.6, "layer": "mid"},
    ).json()
    goldens["features"] = {
        "sha256": tensor_hash(feats["features"][0]),
        "shape": feats["features"][0]["shape"],
        "scheduler_step": feats["scheduler_step"],
    }

    logits = client.post("/v1/teacher_logits", json={"images": [b64]}).json()
    goldens["teacher"] = {
        "sha256": tensor_hash(logits["logits"][0]),
        "class_names": logits["class_names"],
    }

    out_path = HERE / "tests" / "goldens.json"
    out_path.write_text(json.dumps(goldens, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out_path}")


if __name__ == "__main__":
    main()
