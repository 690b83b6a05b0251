"""End-to-end checks of the rsepi_cli binary: exit codes, output files and
JSON schema conformance."""

import csv
import json
import pathlib
import subprocess
import sys
import tempfile
import unittest

import jsonschema
from referencing import Registry, Resource

CLI = pathlib.Path(sys.argv.pop(1))
SCHEMAS = pathlib.Path(sys.argv.pop(1))


def load_schema(name):
    return json.loads((SCHEMAS / name).read_text())


def registry():
    resources = []
    for path in SCHEMAS.glob("*.json"):
        schema = json.loads(path.read_text())
        resources.append((schema["$id"], Resource.from_contents(schema)))
        resources.append((path.name, Resource.from_contents(schema)))
    return Registry().with_resources(resources)


def validate(doc, name):
    schema = load_schema(name)
    jsonschema.Draft202012Validator(schema, registry=registry()).validate(doc)


def run(*args):
    return subprocess.run([str(CLI), *map(str, args)], capture_output=True, text=True,
                          timeout=600)


class CliTest(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = pathlib.Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def synth(self, name, *extra):
        data, gt = self.dir / f"{name}.txt", self.dir / f"{name}_gt.json"
        res = run("synth", "--out", data, "--gt", gt, *extra)
        self.assertEqual(res.returncode, 0, res.stderr)
        return data, gt

    def test_synth_is_seed_deterministic(self):
        a, _ = self.synth("a", "--seed", 5, "--points", 40)
        b, _ = self.synth("b", "--seed", 5, "--points", 40)
        c, _ = self.synth("c", "--seed", 6, "--points", 40)
        self.assertEqual(a.read_text(), b.read_text())
        self.assertNotEqual(a.read_text(), c.read_text())
        validate(json.loads((self.dir / "a_gt.json").read_text())["params"],
                 "params.schema.json")

    def test_solve_chains(self):
        data, gt = self.synth("rs", "--points", 80, "--seed", 2)
        for chain in ("linear", "minimal", "ransac"):
            out = self.dir / f"{chain}.json"
            res = run("solve", "--input", data, "--chain", chain, "--gt", gt, "--out", out)
            self.assertEqual(res.returncode, 0, res.stderr)
            doc = json.loads(out.read_text())
            validate(doc, "solve_result.schema.json")
            self.assertEqual(doc["model"], "linear-rs")
            self.assertLess(doc["errors"]["e_R"], 1e-4, chain)

    def test_solve_uniform_model(self):
        data, gt = self.synth("uni", "--model", "uniform-rs", "--points", 80, "--seed", 3)
        out = self.dir / "uni.json"
        res = run("solve", "--input", data, "--chain", "linear", "--gt", gt, "--out", out)
        self.assertEqual(res.returncode, 0, res.stderr)
        doc = json.loads(out.read_text())
        validate(doc, "solve_result.schema.json")
        self.assertIn("linear_residual_ratio", doc)

    def test_ransac_is_seed_deterministic(self):
        data, _ = self.synth("r", "--points", 60, "--noise", 1e-5)
        outs = []
        for name in ("x", "y"):
            out = self.dir / f"{name}.json"
            res = run("solve", "--input", data, "--chain", "ransac", "--seed", 9, "--out", out)
            self.assertEqual(res.returncode, 0, res.stderr)
            outs.append(out.read_text())
        self.assertEqual(outs[0], outs[1])

    def test_sweep_outputs(self):
        csv_path, json_path = self.dir / "sweep.csv", self.dir / "sweep.json"
        res = run("sweep", "--kind", "noise", "--grid", "0,1e-3", "--trials", 3, "--points", 60,
                  "--csv", csv_path, "--json", json_path)
        self.assertEqual(res.returncode, 0, res.stderr)
        with csv_path.open() as f:
            rows = list(csv.DictReader(f))
        self.assertEqual(len(rows), 2 * 3 * 3)
        self.assertEqual(set(rows[0]), {"sweep_value", "trial", "model", "e_R", "e_T",
                                        "F_angle", "status"})
        doc = json.loads(json_path.read_text())
        validate(doc, "report.schema.json")
        self.assertEqual(len(doc["aggregates"]), 6)

    def test_curves_and_audit(self):
        data, gt = self.synth("cv", "--model", "uniform-pb", "--points", 5, "--seed", 4)
        out = self.dir / "curves.csv"
        res = run("curves", "--params", gt, "--points", data, "--samples", 50, "--out", out)
        self.assertEqual(res.returncode, 0, res.stderr)
        with out.open() as f:
            rows = list(csv.reader(f))
        self.assertEqual(rows[0], ["curve_id", "u", "v", "degree", "source_u", "source_v"])
        self.assertGreater(len(rows), 1)
        self.assertTrue(all(r[3] == "3" for r in rows[1:]))

        data, gt = self.synth("au", "--points", 50, "--seed", 8)
        res = run("audit", "--input", data, "--params", gt)
        self.assertEqual(res.returncode, 0, res.stderr)
        doc = json.loads(res.stdout)
        self.assertTrue(doc["cheirality_pass"])
        self.assertEqual(doc["cheirality_fraction"], 1.0)

    def test_error_exit_codes(self):
        out = self.dir / "never.json"
        res = run("solve", "--input", self.dir / "missing.txt", "--out", out)
        self.assertEqual(res.returncode, 3)
        self.assertFalse(out.exists())
        err = json.loads(res.stderr.strip().splitlines()[-1])
        self.assertEqual(err["error"], "Io")
        self.assertEqual(err["exit_code"], 3)

        self.assertEqual(run("solve").returncode, 2)
        self.assertEqual(run("synth", "--out", self.dir / "x.txt", "--points", 0).returncode, 2)

        few, _ = self.synth("few", "--points", 9)
        res = run("solve", "--input", few, "--chain", "minimal", "--out", out)
        self.assertEqual(res.returncode, 10)
        self.assertFalse(out.exists())

        bad = self.dir / "bad.txt"
        bad.write_text("rsepi-correspondences 1\nintrinsics 640 640 320 240 480\ncount 3\n1 2 3 4\n")
        self.assertEqual(run("solve", "--input", bad).returncode, 3)


if __name__ == "__main__":
    unittest.main(verbosity=2)
