"""Regenerate the golden wire-format fixtures under tests/fixtures/protocol.

Every conforming implementation (the Python client and the model server)
must decode these byte-for-byte and re-encode them identically, so the
fixture bytes are committed and this script only exists to rebuild them
after a deliberate format change.
"""

import json
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from ptdiff.protocol import FrameType, encode_frame, tensor_to_payload  # noqa: E402

OUT_DIR = pathlib.Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "protocol"

EPS_TENSOR = [0.5, -1.25, 3.0, 0.125]

FRAMES = [
    ("hello_req", FrameType.HELLO, {"id": 1}, None),
    (
        "hello_resp",
        FrameType.RESULT,
        {
            "id": 1,
            "model": "toy-gmm",
            "schedule": "scaled_linear",
            "shape": [4, 16, 16],
            "t_train": 1000,
        },
        None,
    ),
    ("embed_req", FrameType.EMBED_TEXT, {"id": 2, "text": "a watercolor forest"}, None),
    (
        "eps_req",
        FrameType.EPS,
        {"cond": 0, "id": 3, "shape": [1, 2, 2], "t": 500},
        EPS_TENSOR,
    ),
    ("result_resp", FrameType.RESULT, {"id": 3, "shape": [1, 2, 2]}, EPS_TENSOR),
    (
        "error_resp",
        FrameType.ERROR,
        {"code": "cond_unknown", "id": 4, "message": "unknown condition id 9"},
        None,
    ),
    ("bye_req", FrameType.BYE, {"id": 5}, None),
]


def main():
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    manifest = []
    for name, msg_type, header, tensor in FRAMES:
        payload = b"" if tensor is None else tensor_to_payload(np.array(tensor))
        frame = encode_frame(msg_type, header, payload)
        (OUT_DIR / f"{name}.bin").write_bytes(frame)
        manifest.append(
            {
                "name": name,
                "file": f"{name}.bin",
                "type": msg_type.name,
                "type_code": int(msg_type),
                "header": header,
                "payload_f32": tensor,
            }
        )
    with open(OUT_DIR / "manifest.json", "w") as fh:
        json.dump({"frames": manifest}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(FRAMES)} frames to {OUT_DIR}")


if __name__ == "__main__":
    main()
