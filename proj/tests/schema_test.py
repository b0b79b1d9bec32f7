# Copyright 2026 The FGDM Authors.
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

"""The published schema and the C++ parser agree on accepted configs."""

import copy
import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema

FGDM, ROOT = sys.argv[1], pathlib.Path(sys.argv[2])
schema = json.loads((ROOT / "docs" / "run_config.schema.json").read_text())
validator = jsonschema.Draft202012Validator(schema)


def parser_accepts(config):
    with tempfile.TemporaryDirectory() as tmp:
        path = pathlib.Path(tmp) / "c.json"
        path.write_text(json.dumps(config))
        # No checkpoint exists: 3 means the config parsed, 2 that it did not.
        code = subprocess.run([FGDM, "sample", "--config", str(path), "--prompt", "circle"],
                              capture_output=True).returncode
        assert code in (2, 3), code
        return code == 3


default = json.loads(subprocess.run([FGDM, "init-config"], check=True,
                                    capture_output=True, text=True).stdout)
shipped = json.loads((ROOT / "configs" / "toy.json").read_text())
minimal = {"graph": default["graph"]}
for config in (default, shipped, minimal):
    validator.validate(config)
    assert parser_accepts(config)

paths = [(), ("dataset",), ("dataset", "world"), ("graph",), ("graph", "backbone"),
         ("graph", "schedule"), ("graph", "factors", 0), ("sampler",), ("train",),
         ("train", "teacher"), ("train", "teacher", "optimizer"), ("train", "factors", "distill"),
         ("sbpc",), ("service",)]
for path in paths:
    bad = copy.deepcopy(default)
    node = bad
    for key in path:
        node = node[key]
    node["unexpected"] = 1
    assert not validator.is_valid(bad), path
    assert not parser_accepts(bad), path

for mutate in (lambda c: c["sampler"].update(steps="20"),
               lambda c: c["sbpc"].update(n=0),
               lambda c: c["graph"]["factors"][0].update(kind="pose"),
               lambda c: c.pop("graph")):
    bad = copy.deepcopy(default)
    mutate(bad)
    assert not validator.is_valid(bad)
    assert not parser_accepts(bad)
print("schema and parser agree")
