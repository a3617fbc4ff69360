import base64
import io

import numpy as np
import pytest
from fastapi.testclient import TestClient

from vfmsidecar.service import create_app


def png_b64(arr: np.ndarray) -> str:
    """uint8 (H, W, 3) image -> base64 PNG string for the wire."""
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode="RGB").save(
        buf, format="PNG"
    )
    return base64.b64encode(buf.getvalue()).decode("ascii")


def blocks_image() -> np.ndarray:
    """Two same-gray blocks that are not 4-connected, plus a brighter one."""
    img = np.zeros((16, 20, 3), dtype=np.uint8)
    img[2:7, 2:7] = 128
    img[2:7, 10:15] = 128
    img[10:15, 2:7] = 230
    return img


def rim_image() -> np.ndarray:
    """Core 128 with a 117 rim: near in color, expelled by one halving."""
    img = np.zeros((16, 20, 3), dtype=np.uint8)
    img[2:7, 2:7] = 128
    img[2:7, 7:9] = 117
    return img


def pt(x: int, y: int, positive: bool = True) -> dict:
    return {"x": int(x), "y": int(y), "positive": bool(positive)}


@pytest.fixture()
def client() -> TestClient:
    return TestClient(create_app(), raise_server_exceptions=False)
