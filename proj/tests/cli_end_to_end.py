# Copyright 2026 The VarMix Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Drives the varmix binary through a tiny pipeline and checks its outputs."""

import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema


def run(binary, *args, expect=0):
    proc = subprocess.run([binary, *args], capture_output=True, text=True)
    if proc.returncode != expect:
        sys.exit(f"{' '.join(args)} exited {proc.returncode}, expected {expect}\n{proc.stderr}")
    return proc


def pipeline(binary, config, out):
    common = ["--config", str(config), "--out", str(out), "--quiet"]
    for cmd in (["train-vae"], ["train"], ["attack"], ["eval", "--sweep", "lambda-mi=0:1:0.5"], ["corrupt-eval"]):
        run(binary, *cmd, *common)
    return json.loads((out / "run.json").read_text())


def main():
    binary, source = sys.argv[1], pathlib.Path(sys.argv[2])
    config = source / "configs" / "mnist-smoke.json"
    schema = json.loads((source / "schemas" / "report.schema.json").read_text())
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        first = pipeline(binary, config, tmp / "a")
        second = pipeline(binary, config, tmp / "b")

        report = json.loads((tmp / "a" / "report.json").read_text())
        jsonschema.validate(report, schema, cls=jsonschema.Draft202012Validator)

        for key, value in first["metrics"].items():
            if abs(value - second["metrics"][key]) > 0.005:
                sys.exit(f"{key} differs across identical runs: {value} vs {second['metrics'][key]}")
        if first["config_hash"] != second["config_hash"]:
            sys.exit("config hash differs across identical runs")

        listed = set(first["artifacts"].values()) | {"run.json"}
        on_disk = {str(p.relative_to(tmp / "a")) for p in (tmp / "a").rglob("*") if p.is_file()}
        if on_disk - listed:
            sys.exit(f"orphan artifacts: {sorted(on_disk - listed)}")
        if listed - on_disk:
            sys.exit(f"missing artifacts: {sorted(listed - on_disk)}")

        table = run(binary, "report", str(tmp / "a"), str(tmp / "b"), "--out", str(tmp / "cmp")).stdout
        again = run(binary, "report", str(tmp / "a"), str(tmp / "b")).stdout
        if table != again or "(" not in table:
            sys.exit("report table is not deterministic or lacks parenthesized clean accuracy")
        header = (tmp / "cmp" / "report.csv").read_text().splitlines()[0]
        if header != "run,policy,clean,fgsm,pgd10":
            sys.exit(f"unexpected report columns: {header}")

        err = run(binary, "report", str(tmp / "missing"), expect=2).stderr
        if "does not exist" not in err:
            sys.exit(f"missing run dir error: {err}")
        err = run(binary, "train", "--preset", "nope", "--out", str(tmp / "c"), expect=2).stderr
        if "available: erm, mixup" not in err:
            sys.exit(f"unknown preset error: {err}")
        bad = tmp / "bad.json"
        bad.write_text(json.dumps({"train": {"batch_size": "many"}}))
        err = run(binary, "train", "--config", str(bad), expect=2).stderr
        if "'train'" not in err:
            sys.exit(f"malformed config error does not name the field: {err}")

        zero = tmp / "zero.json"
        cfg = json.loads(config.read_text())
        cfg["dataset"]["path"] = str(source / "data" / "mnist-subset")
        cfg["attacks"] = [{"name": "none", "kind": "pgd", "budget": {"epsilon": 0, "alpha": 0.01, "steps": 3}}]
        zero.write_text(json.dumps(cfg))
        common = ["--config", str(zero), "--out", str(tmp / "a"), "--quiet", "--inference", "plain"]
        run(binary, "eval", *common)
        rec = json.loads((tmp / "a" / "run.json").read_text())["metrics"]
        if rec["eval/plain/attack/none"] != rec["eval/plain/clean"]:
            sys.exit("zero-budget attack accuracy differs from clean accuracy")
    print("cli end-to-end: ok")


if __name__ == "__main__":
    main()
