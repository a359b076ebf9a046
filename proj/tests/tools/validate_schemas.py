#!/usr/bin/env python3
# Copyright Contributors to the splatcore project
# SPDX-License-Identifier: Apache-2.0

"""Runs the CLI on small generated scenes and validates every JSON output
against docs/schemas, plus the on-disk layout a scene.json points at."""

import argparse
import copy
import json
import shutil
import struct
import subprocess
import sys
from pathlib import Path

import jsonschema


def load_schemas(root):
    out = {}
    for path in sorted(Path(root).glob("*.schema.json")):
        schema = json.loads(path.read_text())
        jsonschema.Draft202012Validator.check_schema(schema)
        out[path.name.removesuffix(".schema.json")] = jsonschema.Draft202012Validator(schema)
    return out


def png_header(path):
    """(width, height, bit depth, color type) from the IHDR chunk."""
    data = Path(path).read_bytes()[:33]
    if data[:8] != b"\x89PNG\r\n\x1a\n" or data[12:16] != b"IHDR":
        raise ValueError(f"{path}: not a PNG")
    width, height, depth, color = struct.unpack(">IIBB", data[16:26])
    return width, height, depth, color


class Checker:
    def __init__(self, schemas):
        self.schemas = schemas
        self.failures = []
        self.checked = 0

    def fail(self, message):
        self.failures.append(message)

    def validate(self, kind, doc, where):
        self.checked += 1
        errors = sorted(self.schemas[kind].iter_errors(doc), key=lambda e: list(e.path))
        for e in errors:
            self.fail(f"{where}: {'/'.join(map(str, e.path)) or '<root>'}: {e.message}")
        return not errors

    def validate_file(self, kind, path):
        return self.validate(kind, json.loads(Path(path).read_text()), str(path))

    def scene_dir(self, scene):
        index = scene / "scene.json"
        doc = json.loads(index.read_text())
        if not self.validate("scene", doc, str(index)):
            return 0
        for frame in doc["frames"]:
            size = (frame["width"], frame["height"])
            for key, depth, color in (("image", 8, 2), ("depth", 16, 0)):
                path = scene / frame[key]
                if not path.is_file():
                    self.fail(f"{index}: {frame['name']} {key} missing: {frame[key]}")
                    continue
                w, h, d, c = png_header(path)
                if (w, h) != size or d != depth or c != color:
                    self.fail(f"{path}: {w}x{h} depth {d} color {c}, want {size[0]}x{size[1]} depth {depth} color {color}")
            if frame["pose"][12:] != [0, 0, 0, 1]:
                self.fail(f"{index}: {frame['name']} pose bottom row is not 0 0 0 1")
        return len(doc["frames"])

    def pairs(self, path, frame_count):
        doc = json.loads(Path(path).read_text())
        if not self.validate("pairs", doc, str(path)):
            return doc
        for p in doc["pairs"]:
            frames = list(p["context"]) + [t["frame"] for t in p["targets"]]
            if any(f >= frame_count for f in frames):
                self.fail(f"{path}: frame index out of range in {p}")
            if p["context"][0] == p["context"][1]:
                self.fail(f"{path}: context pair repeats a frame")
        return doc

    def model(self, path):
        doc = json.loads(Path(path).read_text())
        if not self.validate("model", doc, str(path)):
            return
        sizes = doc["layer_sizes"]
        if len(sizes) != len(doc["layers"]) + 1:
            self.fail(f"{path}: layer_sizes does not match the layer count")
            return
        for i, layer in enumerate(doc["layers"]):
            if len(layer["weights"]) != sizes[i + 1] or any(len(r) != sizes[i] for r in layer["weights"]):
                self.fail(f"{path}: layer {i} weight shape")
            if len(layer["bias"]) != sizes[i + 1]:
                self.fail(f"{path}: layer {i} bias size")

    def train_log(self, path):
        lines = Path(path).read_text().splitlines()
        if not lines:
            self.fail(f"{path}: empty")
        for n, line in enumerate(lines):
            self.validate("train_log", json.loads(line), f"{path}:{n + 1}")

    def rejects(self, kind, doc, what):
        """Negative control: a broken document must not validate."""
        self.checked += 1
        if not list(self.schemas[kind].iter_errors(doc)):
            self.fail(f"{kind} schema accepted a document with {what}")


def run(cli, *args):
    cmd = [cli, *map(str, args)]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"{' '.join(cmd)} exited {proc.returncode}: {proc.stderr.strip()}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cli", required=True)
    ap.add_argument("--schemas", required=True)
    ap.add_argument("--work", required=True)
    ap.add_argument("--size", type=int, default=32)
    args = ap.parse_args()

    work = Path(args.work)
    shutil.rmtree(work, ignore_errors=True)
    dataset = work / "dataset"
    dataset.mkdir(parents=True)
    check = Checker(load_schemas(args.schemas))
    for kind in ("scene", "pairs", "metrics", "model", "cloud_meta", "train_log"):
        if kind not in check.schemas:
            check.fail(f"missing schema {kind}.schema.json")
    if check.failures:
        print("\n".join(check.failures))
        return 1

    size = ("--width", args.size, "--height", args.size)
    try:
        for seed in (1, 2):
            scene = dataset / f"scene_{seed}"
            run(args.cli, "gen", "--seed", seed, "--out", scene, *size)
            run(args.cli, "curate", "--scene", scene, "--out", scene / "pairs.json")
            frames = check.scene_dir(scene)
            check.validate_file("cloud_meta", scene / "ground_truth.meta.json")
            pairs = check.pairs(scene / "pairs.json", frames)
            if not pairs.get("pairs"):
                check.fail(f"{scene}: curation found no pairs")
                continue
            fit = work / f"fit_{seed}"
            run(args.cli, "fit", "--scene", scene, "--out", fit, "--iters", 5)
            check.validate_file("metrics", fit / "fit_report.json")
            check.validate_file("cloud_meta", fit / "cloud.meta.json")
            run(args.cli, "eval", "--scene", scene, "--ply", fit / "cloud.ply", "--out", work / f"eval_{seed}.json")
            check.validate_file("metrics", work / f"eval_{seed}.json")

        train = work / "train"
        run(args.cli, "train", "--dataset", dataset, "--out", train, "--iters", 2)
        check.model(train / "model.json")
        check.train_log(train / "train_log.jsonl")
        run(args.cli, "eval", "--scene", dataset / "scene_1", "--model", train / "model.json",
            "--out", work / "eval_model.json")
        check.validate_file("metrics", work / "eval_model.json")
    except RuntimeError as e:
        check.fail(str(e))

    pairs = json.loads((dataset / "scene_1" / "pairs.json").read_text())
    bad = copy.deepcopy(pairs)
    bad["phi"] = 1.5
    check.rejects("pairs", bad, "phi outside (0, 1]")
    bad = copy.deepcopy(pairs)
    bad.pop("schema_version")
    check.rejects("pairs", bad, "no schema_version")
    scene = json.loads((dataset / "scene_1" / "scene.json").read_text())
    bad = copy.deepcopy(scene)
    bad["frames"][0]["pose"] = bad["frames"][0]["pose"][:12]
    check.rejects("scene", bad, "a 12-number pose")

    for f in check.failures:
        print(f"FAIL {f}")
    print(f"schema validation: {check.checked} documents, {len(check.failures)} failures")
    return 1 if check.failures else 0


if __name__ == "__main__":
    sys.exit(main())
