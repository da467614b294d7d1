import json
import os
import shutil
import tempfile
import unittest

from click.testing import CliRunner

from airylink.cli import cli
from airylink.design import MODE_NO_BEND, MODE_ULA
from airylink.evaluation import SWEEP_HEADER


def runner() -> CliRunner:
    # Logs go to stderr; keep them out of the captured payload.
    try:
        return CliRunner(mix_stderr=False)
    except TypeError:
        return CliRunner()


def link_document(count: int = 64, blockages=(), **sections) -> dict:
    document = {
        "scenario": {
            "link_distance": 3.0,
            "tx": {"count": count},
            "rx": {"count": count},
            "blockages": list(blockages),
        }
    }
    document.update(sections)
    return document


class TestCli(unittest.TestCase):
    def setUp(self):
        self.workspace_root = tempfile.mkdtemp()
        self.out = os.path.join(self.workspace_root, "out")

    def tearDown(self):
        shutil.rmtree(self.workspace_root)

    def write_config(self, document) -> str:
        path = os.path.join(self.workspace_root, "config.json")
        with open(path, "w") as handle:
            handle.write(document if isinstance(document, str) else json.dumps(document))
        return path

    def invoke(self, *args, document=None):
        path = self.write_config(document if document is not None else link_document())
        return runner().invoke(cli, list(args) + ["-c", path, "-o", self.out])

    def test_design_of_the_large_link(self):
        document = link_document(count=256, blockages=[{"z_b": 1.5, "edge": 0.071}])
        result = self.invoke("design", document=document)
        self.assertEqual(result.exit_code, 0, msg=result.stdout)
        payload = json.loads(result.stdout)
        self.assertEqual(payload["mode"], MODE_ULA)
        self.assertLess(payload["boundary_residual"], 1e-9)
        self.assertAlmostEqual(payload["Bx"], 3.27, delta=0.01)
        self.assertAlmostEqual(payload["R_bl"], 0.76, delta=0.005)
        with open(os.path.join(self.out, "design.json")) as handle:
            self.assertEqual(json.load(handle), payload)

    def test_design_without_an_obstacle(self):
        result = self.invoke("design")
        self.assertEqual(result.exit_code, 0, msg=result.stdout)
        payload = json.loads(result.stdout)
        self.assertEqual(payload["mode"], MODE_NO_BEND)
        self.assertIsNone(payload["R_bl"])

    def test_malformed_config(self):
        result = self.invoke("design", document="{ not json")
        self.assertEqual(result.exit_code, 1)
        payload = json.loads(result.stdout)
        self.assertEqual(payload["error"], "ConfigurationError")
        self.assertEqual(payload["exit_code"], 1)

    def test_trailing_comma_in_json(self):
        result = self.invoke("design", document='{"scenario": {"link_distance": 3,}, }')
        self.assertEqual(result.exit_code, 1)
        payload = json.loads(result.stdout)
        self.assertEqual(payload["error"], "ConfigurationError")
        self.assertIn("line 1 column", payload["message"])

    def test_infeasible_design(self):
        document = link_document(blockages=[{"z_b": 1.5, "edge": 0.9}])
        result = self.invoke("design", document=document)
        self.assertEqual(result.exit_code, 2)
        self.assertEqual(json.loads(result.stdout)["error"], "InfeasibleDesignError")

    def test_trajectory_from_params(self):
        document = link_document(
            params={"x": {"B": 5.0, "F": 0.5, "theta": -0.03}},
            output={"trajectory": {"z_start": 0.3, "z_stop": 1.2, "samples": 5}},
        )
        result = self.invoke("trajectory", "--from-params", document=document)
        self.assertEqual(result.exit_code, 0, msg=result.stdout)
        lines = result.stdout.splitlines()
        self.assertEqual(lines[0], "lobe,z,x")
        self.assertEqual(len(lines), 16)
        self.assertEqual({line.split(",")[0] for line in lines[1:]}, {"0", "1", "2"})
        self.assertTrue(os.path.exists(os.path.join(self.out, "trajectory.csv")))

    def test_trajectory_without_lobes(self):
        document = link_document(
            params={"x": {"B": 5.0, "F": 0.5}}, output={"trajectory": {"lobes": []}}
        )
        result = self.invoke("trajectory", "--from-params", document=document)
        self.assertEqual(result.exit_code, 0, msg=result.stdout)
        self.assertEqual(result.stdout, "lobe,z,x\n")

    def test_trajectory_needs_a_source(self):
        self.assertEqual(self.invoke("trajectory").exit_code, 2)
        both = self.invoke("trajectory", "--from-design", "--from-params")
        self.assertEqual(both.exit_code, 2)

    def test_from_params_needs_the_section(self):
        result = self.invoke("trajectory", "--from-params")
        self.assertEqual(result.exit_code, 1)
        self.assertEqual(json.loads(result.stdout)["error"], "ConfigurationError")

    def test_propagate_focuses_on_the_receiver(self):
        document = link_document(output={"slices": [3.0]})
        result = self.invoke("propagate", "--from-design", document=document)
        self.assertEqual(result.exit_code, 0, msg=result.stdout)
        summary = json.loads(result.stdout)
        (last,) = summary["slices"]
        self.assertEqual(last["z"], 3.0)
        self.assertLess(abs(last["peak"]), 2e-3)
        self.assertTrue(os.path.exists(last["dump"]))
        self.assertTrue(os.path.exists(summary["intensity_csv"]))

    def test_sweep(self):
        document = link_document(
            blockages=[{"z_b": 1.5, "edge": 0.01}],
            eval={"schemes": ["steering", "focusing"]},
            sweep={"edges": [0.01]},
        )
        result = self.invoke("sweep", "-j", "2", document=document)
        self.assertEqual(result.exit_code, 0, msg=result.stdout)
        lines = result.stdout.splitlines()
        self.assertEqual(lines[0], ",".join(SWEEP_HEADER))
        self.assertEqual([line.split(",")[3] for line in lines[1:]], ["steering", "focusing"])
        self.assertTrue(all(line.endswith(",ok") for line in lines[1:]))
        self.assertEqual(len(os.listdir(os.path.join(self.out, "channels"))), 2)

    def test_sweep_needs_the_section(self):
        self.assertEqual(self.invoke("sweep").exit_code, 1)
