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

"""Runs the CIFAR-10 acceptance criteria on a tiny synthetic dataset in CIFAR binary format."""

import json
import pathlib
import random
import subprocess
import sys
import tempfile


def write_batch(path, records, rng):
    out = bytearray()
    for label in records:
        out.append(label)
        for channel in range(3):
            base = (label * 25 + channel * 60) % 256
            out.extend(max(0, min(255, base + rng.randint(-40, 40))) for _ in range(1024))
    path.write_bytes(bytes(out))


def main():
    binary = sys.argv[1]
    rng = random.Random(3)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        data = tmp / "cifar"
        data.mkdir()
        for i in range(1, 6):
            write_batch(data / f"data_batch_{i}.bin", [k % 10 for k in range(20)], rng)
        write_batch(data / "test_batch.bin", [k % 10 for k in range(20)], rng)
        eps = 8 / 255
        config = {
            "seed": 0,
            "dataset": {"kind": "cifar10", "path": "cifar", "train_per_class": 6, "test_per_class": 2},
            "model": {"architecture": "thin_resnet", "width": 0.125, "stage_blocks": [1, 1, 1, 1],
                      "input_shape": [3, 32, 32]},
            "vae": {"architecture": "mlp", "latent_dim": 4, "hidden": 16, "epochs": 1, "batch_size": 20,
                    "image_shape": [3, 32, 32]},
            "train": {"trainer": "varmixup", "epochs": 1, "batch_size": 20, "mixup": {"eta": 1.0}},
            "attacks": [{"name": "pgd10", "kind": "pgd", "budget": {"epsilon": eps, "alpha": eps / 4, "steps": 2}}],
            "inference": [
                {"name": "plain", "variant": "plain"},
                {"name": "mi-ol", "variant": "mi-ol", "n_mi": 2},
                {"name": "var-mi", "variant": "var-mi", "n_mi": 2},
            ],
            "metrics": {"latent_stat_samples": 40},
        }
        (tmp / "cifar.json").write_text(json.dumps(config))
        results = tmp / "results.json"
        proc = subprocess.run(
            [binary, "--only", "8", "9", "10", "11", "--cifar-config", str(tmp / "cifar.json"), "--cifar-seeds", "2",
             "--json", str(results)],
            capture_output=True, text=True)
        if proc.returncode not in (0, 1):
            sys.exit(f"acceptance exited {proc.returncode}\n{proc.stdout}{proc.stderr}")
        lines = proc.stdout.splitlines()
        if len(lines) != 5 or not lines[-1].endswith("criteria passed"):
            sys.exit(f"unexpected output:\n{proc.stdout}")
        rows = json.loads(results.read_text())
        if [r["criterion"] for r in rows] != [8, 9, 10, 11]:
            sys.exit(f"unexpected criteria: {rows}")
        for row in rows:
            if "unavailable" in row["detail"]:
                sys.exit(f"synthetic dataset not used: {row['detail']}")
        if not rows[3]["pass"]:
            sys.exit(f"identical seed did not reproduce: {rows[3]['detail']}")
        print(proc.stdout, end="")


if __name__ == "__main__":
    main()
