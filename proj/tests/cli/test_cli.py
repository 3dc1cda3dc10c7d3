"""End-to-end checks of the resdiff command line tool.

Usage: python3 test_cli.py <path to resdiff> <data dir>
"""
import csv
import json
import pathlib
import subprocess
import sys
import tempfile
import unittest

BINARY = None
DATA = None


def run(*args, cwd=None):
    return subprocess.run([str(BINARY), *map(str, args)], capture_output=True, text=True, cwd=cwd)


class CliTest(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = pathlib.Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def out(self, name):
        path = self.tmp / name
        path.mkdir()
        return path

    def test_valid_maps(self):
        for name in ["doubling", "asymmetric", "quadrant", "reflected_doubling"]:
            r = run("validate", "--map", DATA / "maps" / f"{name}.json", cwd=self.tmp)
            self.assertEqual(r.returncode, 0, name + r.stderr)
            self.assertTrue(json.loads(r.stdout)["ok"])

    def test_malformed_map_lists_every_error(self):
        r = run("validate", "--map", DATA / "maps" / "malformed_overlap.json", cwd=self.tmp)
        self.assertEqual(r.returncode, 1)
        report = json.loads(r.stdout)
        self.assertFalse(report["ok"])
        codes = {e["code"] for e in report["errors"]}
        self.assertIn("OverlappingCells", codes)
        self.assertIn("VolumeDeficit", codes)

    def test_unknown_config_key(self):
        cfg = self.tmp / "bad.json"
        cfg.write_text(json.dumps({"map": str(DATA / "maps" / "doubling.json"), "kv": {"epz": 0.1}}))
        r = run("kv", "--config", cfg, "--out", self.out("o"))
        self.assertEqual(r.returncode, 1)
        self.assertIn("epz", r.stdout + r.stderr)

    def test_sweep_is_reproducible(self):
        cfg = DATA / "configs" / "sweep_quick.json"
        a, b, c = self.out("a"), self.out("b"), self.out("c")
        self.assertEqual(run("sweep", "--config", cfg, "--out", a).returncode, 0)
        self.assertEqual(run("sweep", "--config", cfg, "--out", b).returncode, 0)
        self.assertEqual(run("sweep", "--config", cfg, "--out", c, "--threads", 2).returncode, 0)
        first = (a / "sweep.csv").read_bytes()
        self.assertEqual(first, (b / "sweep.csv").read_bytes())
        self.assertEqual(first, (c / "sweep.csv").read_bytes())

        manifest = json.loads((a / "sweep.manifest.json").read_text())
        self.assertEqual(manifest["subcommand"], "sweep")
        self.assertEqual(manifest["seed"], 7)
        self.assertTrue(manifest["config_digest"])
        d = self.out("d")
        self.assertEqual(run("sweep", "--config", a / "sweep.manifest.json", "--out", d).returncode, 0)
        self.assertEqual(first, (d / "sweep.csv").read_bytes())

    def test_oracle_fixtures(self):
        out = self.out("o")
        r = run("oracle", "--config", DATA / "configs" / "oracle_fixtures.json", "--out", out)
        self.assertEqual(r.returncode, 0, r.stdout + r.stderr)
        with open(out / "oracle.csv") as fh:
            rows = list(csv.DictReader(fh))
        self.assertGreaterEqual(len(rows), 9)
        for row in rows:
            self.assertLessEqual(float(row["abs_diff"]), 1e-6, row["name"])
        eq = [row for row in rows if row["name"] == "equality_case"]
        self.assertEqual(len(eq), 1)
        self.assertEqual(eq[0]["bound_pass"], "1")

    def test_other_subcommands(self):
        for sub, cfg in [("simulate", "simulate_doubling"), ("mixing", "mixing_doubling"), ("kv", "kv_doubling"),
                         ("minorize", "minorize_bump"), ("minorize", "minorize_two_step")]:
            out = self.out(cfg)
            r = run(sub, "--config", DATA / "configs" / f"{cfg}.json", "--out", out)
            self.assertEqual(r.returncode, 0, cfg + r.stdout + r.stderr)
            self.assertTrue((out / f"{sub}.csv").exists())
            manifest = json.loads((out / f"{sub}.manifest.json").read_text())
            self.assertEqual([o["file"] for o in manifest["outputs"]][0], f"{sub}.csv")


if __name__ == "__main__":
    BINARY = pathlib.Path(sys.argv[1]).resolve()
    DATA = pathlib.Path(sys.argv[2]).resolve()
    unittest.main(argv=sys.argv[:1], verbosity=2)
