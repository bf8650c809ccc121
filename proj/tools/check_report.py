# Copyright 2026 The cembed Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#   http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Runs `cembed gen` and `cembed eval`, then validates the report.

usage: check_report.py <cembed binary> <schema> <work dir>
"""

import json
import pathlib
import shutil
import subprocess
import sys

import jsonschema


def run(binary, *args):
    subprocess.run([binary, *args], check=True, stdout=subprocess.DEVNULL)


def check_ordering(name, r1, r5, r10, mrr):
    if not (r1 <= r5 <= r10 <= 1.0):
        raise AssertionError(f"{name}: recall not monotone ({r1}, {r5}, {r10})")
    if mrr < r1:
        raise AssertionError(f"{name}: mrr {mrr} below recall@1 {r1}")


def main():
    binary, schema_path, work = sys.argv[1], pathlib.Path(sys.argv[2]), pathlib.Path(sys.argv[3])
    shutil.rmtree(work, ignore_errors=True)
    work.mkdir(parents=True)
    schema = json.loads(schema_path.read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)

    run(binary, "gen", "--n", "200", "--frames", "3", "--dim-frame", "8", "--dim-concept", "4",
        "--noise", "0.5", "--out", str(work / "data"))
    reports = []
    for name, projector in (("oracle", "oracle"), ("random", None)):
        if projector is None:
            stage = {"name": "s", "dataset": str(work / "data"), "epochs": 1, "batch_size": 16}
            (work / "stage.json").write_text(json.dumps(stage))
            (work / "cfg.json").write_text(json.dumps(
                {"projector": {"heads": 2}, "align": {"warmup_steps": 2, "max_epochs": 1}}))
            run(binary, "align", "--config", str(work / "cfg.json"), "--stages", str(work / "stage.json"),
                "--out", str(work / "align"))
            projector = str(work / "align" / "checkpoint")
        out = work / f"{name}.json"
        run(binary, "eval", "--projector", projector, "--data", str(work / "data"), "--split", "all",
            "--out", str(out))
        reports.append((name, json.loads(out.read_text())))

    for name, report in reports:
        validator.validate(report)
        r = report["recall_at"]
        check_ordering(name + " t2v", r["1"], r["5"], r["10"], report["mrr"])
        v = report["v2t"]
        check_ordering(name + " v2t", v["r1"], v["r5"], v["r10"], v["mrr"])
        for group, g in report["roundtrip"].items():
            gr = g["recall_at"]
            check_ordering(f"{name} roundtrip {group}", gr["1"], gr["5"], gr["10"], g["mrr"])
    if reports[0][1]["recall_at"]["1"] != 1.0:
        raise AssertionError("oracle projector should give recall@1 = 1")

    broken = dict(reports[0][1])
    del broken["mrr"]
    if validator.is_valid(broken):
        raise AssertionError("schema accepted a report without mrr")
    print("report schema check passed")


if __name__ == "__main__":
    main()
