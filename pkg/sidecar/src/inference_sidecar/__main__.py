"""Run the sidecar: ``python -m inference_sidecar`` or ``inference-sidecar``.

Environment: PORT (default 8700), MODEL_ID, TEACHER_ID.
"""

import os

import uvicorn

from .app import create_app


def main():
    port = int(os.environ.get("PORT", "8700"))
    uvicorn.run(create_app(), host="0.0.0.0", port=port)


if __name__ == "__main__":
    main()
