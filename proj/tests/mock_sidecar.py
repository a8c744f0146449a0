#!/usr/bin/env python3
"""Scripted stand-in for the guidance sidecar, used by the wire tests.

Modes (argv[1]): ok, error, badid, die, nan, garbage, dieafterN (answer N requests, then exit).
"""
import base64
import json
import struct
import sys

REQUIRED = {
    "sds_grad": ["prompt", "image_b64", "width", "height", "seed", "component_id"],
    "segment": ["image_b64"],
    "clip_score": ["image_b64", "prompt"],
    "stylize": ["prompt", "alpha", "K", "image_b64", "seed"],
}


def reply(msg):
    sys.stdout.write(json.dumps(msg) + "\n")
    sys.stdout.flush()


def handle(req, mode):
    rid = req["id"]
    if mode == "error":
        return {"id": rid, "error": "model not loaded"}
    if mode == "badid":
        return {"id": rid + 100, "score": 0.0}
    if mode == "garbage":
        return None
    op = req.get("op")
    missing = [k for k in REQUIRED.get(op, []) if k not in req]
    if op not in REQUIRED or missing:
        return {"id": rid, "error": "bad request %s missing %s" % (op, missing)}
    if op == "sds_grad":
        w, h = req["width"], req["height"]
        raw = base64.b64decode(req["image_b64"])
        if len(raw) != 4 * w * h * 3:
            return {"id": rid, "error": "payload size"}
        vals = struct.unpack("<%df" % (w * h * 3), raw)
        grad = [float("nan") if mode == "nan" else 2.0 * (v - 0.25) for v in vals]
        out = {"id": rid, "grad_b64": base64.b64encode(struct.pack("<%df" % len(grad), *grad)).decode(),
               "weight": 0.5}
        # Echo t and component so the caller can see what was sent.
        out["loss"] = float(req["t"]) if "t" in req else float(req["component_id"])
        return out
    if op == "segment":
        w, h = 4, 3
        vals = [i / 12.0 for i in range(w * h)]
        blob = b"HMAP" + struct.pack("<II", w, h) + struct.pack("<%df" % (w * h), *vals)
        return {"id": rid, "heatmap_b64": base64.b64encode(blob).decode()}
    if op == "clip_score":
        return {"id": rid, "score": len(req["prompt"]) / 100.0}
    if op == "stylize":
        if not base64.b64decode(req["image_b64"]).startswith(b"\x89PNG"):
            return {"id": rid, "error": "not a png"}
        return {"id": rid, "image_b64": req["image_b64"]}


def main():
    mode = sys.argv[1] if len(sys.argv) > 1 else "ok"
    budget = int(mode[len("dieafter"):]) if mode.startswith("dieafter") else None
    for line in sys.stdin:
        if mode == "die" or budget == 0:
            return 3
        if budget is not None:
            budget -= 1
            mode = "ok"
        req = json.loads(line)
        out = handle(req, mode)
        if out is None:
            sys.stdout.write("{not json\n")
            sys.stdout.flush()
        else:
            reply(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
