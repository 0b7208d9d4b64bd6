import io
import json
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

from mtmct_tracker import __version__
from mtmct_tracker.cli import run
from mtmct_tracker.clm import CameraLinkModel
from mtmct_tracker.ingest import parse_track_file


def run_captured(argv):
    stdout, stderr = io.StringIO(), io.StringIO()
    with redirect_stdout(stdout), redirect_stderr(stderr):
        status = run(argv)
    return status, stdout.getvalue(), stderr.getvalue()


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


class CliTestCase(unittest.TestCase):
    """The command line, end to end."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.scenario = self.root / "scenario"
        status, _, _ = run_captured(
            [
                "synth",
                "--out",
                str(self.scenario),
                "--cameras",
                "2",
                "--vehicles",
                "4",
                "--miss-rate",
                "0",
                "--seed",
                "7",
                "--log-level",
                "error",
            ]
        )
        self.assertEqual(0, status)

    def tearDown(self):
        self.tmp.cleanup()

    def test_synth_manifest(self):
        manifest = read_json(self.scenario / "manifest.json")
        self.assertEqual("synth", manifest["subcommand"])
        self.assertEqual(7, manifest["seed"])
        self.assertEqual(["synth"], manifest["stages"])
        self.assertEqual(__version__, manifest["version"])
        self.assertEqual(7, read_json(self.scenario / "spec.json")["seed"])

    def test_synth_from_spec(self):
        out = self.root / "again"
        spec = str(self.scenario / "spec.json")
        status, _, _ = run_captured(
            ["synth", "--spec", spec, "--out", str(out), "--seed", "8"]
        )
        self.assertEqual(0, status)
        self.assertEqual(8, read_json(out / "spec.json")["seed"])
        self.assertEqual(8, read_json(out / "manifest.json")["seed"])

    def test_train_track_eval(self):
        clm = self.root / "clm.json"
        gt = str(self.scenario / "gt.csv")
        status, _, _ = run_captured(["clm-train", "--gt", gt, "--out", str(clm)])
        self.assertEqual(0, status)
        CameraLinkModel.from_json(clm)
        manifest = read_json(self.root / "manifest.json")
        self.assertEqual("clm-train", manifest["subcommand"])
        self.assertEqual({"gt": gt}, manifest["inputs"])
        self.assertEqual(str(clm), manifest["out"])

        out = self.root / "run"
        status, _, _ = run_captured(
            [
                "track",
                "--in",
                str(self.scenario),
                "--clm",
                str(clm),
                "--out",
                str(out),
                "--jobs",
                "2",
            ]
        )
        self.assertEqual(0, status)
        manifest = read_json(out / "manifest.json")
        self.assertEqual(
            ["ingest", "sct", "zones", "reconnect", "fusion", "mtmct"],
            manifest["stages"],
        )
        self.assertEqual({"jobs": 2}, manifest["options"])
        self.assertTrue(read_json(out / "report.json")["constrained"])
        parse_track_file(out / "tracks.csv")

        per_camera = self.root / "per_camera.csv"
        status, stdout, _ = run_captured(
            [
                "eval",
                "--pred",
                str(out / "tracks.csv"),
                "--gt",
                gt,
                "--per-camera",
                str(per_camera),
            ]
        )
        self.assertEqual(0, status)
        report = json.loads(stdout)
        self.assertEqual(0.5, report["iou_threshold"])
        self.assertLessEqual(report["idf1"], 1.0)
        self.assertEqual(
            3, len(per_camera.read_text(encoding="utf-8").splitlines())
        )
        manifest = read_json(self.root / "manifest.json")
        self.assertEqual("eval", manifest["subcommand"])
        self.assertEqual(str(per_camera), manifest["out"])
        self.assertEqual({"iou": 0.5}, manifest["options"])

        report_dir = self.root / "scores"
        report_dir.mkdir()
        status, _, _ = run_captured(
            [
                "eval",
                "--pred",
                str(out / "tracks.csv"),
                "--gt",
                gt,
                "--iou",
                "0.7",
                "--out",
                str(report_dir / "report.json"),
            ]
        )
        self.assertEqual(0, status)
        manifest = read_json(report_dir / "manifest.json")
        self.assertEqual(["eval"], manifest["stages"])
        self.assertEqual({"iou": 0.7}, manifest["options"])
        self.assertEqual(0.7, read_json(report_dir / "report.json")["iou_threshold"])

    def test_track_is_reproducible(self):
        outputs = []
        for name, jobs in (("first", "1"), ("second", "2")):
            out = self.root / name
            status, _, _ = run_captured(
                ["track", "--in", str(self.scenario), "--out", str(out)]
                + ["--jobs", jobs, "--log-level", "error"]
            )
            self.assertEqual(0, status)
            outputs.append(
                [(out / f).read_bytes() for f in ("tracks.csv", "report.json")]
            )
        self.assertEqual(outputs[0], outputs[1])

    def test_without_reconnection(self):
        config = self.root / "config.json"
        config.write_text(json.dumps({"reconnect": False}), encoding="utf-8")
        out = self.root / "run"
        status, _, _ = run_captured(
            ["track", "--in", str(self.scenario), "--config", str(config)]
            + ["--out", str(out)]
        )
        self.assertEqual(0, status)
        self.assertEqual(
            ["ingest", "sct", "zones", "fusion", "mtmct"],
            read_json(out / "manifest.json")["stages"],
        )

    def test_staged_commands(self):
        sct_out = self.root / "sct"
        status, _, _ = run_captured(
            ["sct", "--in", str(self.scenario), "--out", str(sct_out)]
        )
        self.assertEqual(0, status)
        self.assertTrue((sct_out / "c001" / "sct.csv").is_file())

        zones_out = self.root / "zones"
        status, _, _ = run_captured(
            [
                "zones",
                "--in",
                str(self.scenario),
                "--from-sct",
                str(sct_out),
                "--out",
                str(zones_out),
            ]
        )
        self.assertEqual(0, status)
        self.assertTrue((zones_out / "zones.csv").is_file())
        self.assertEqual(
            ["ingest", "zones"], read_json(zones_out / "manifest.json")["stages"]
        )

    def test_eval_camera_mismatch(self):
        pred = self.root / "pred.csv"
        pred.write_text("3,1,1,0,0,10,10\n", encoding="utf-8")
        status, stdout, stderr = run_captured(
            ["eval", "--pred", str(pred), "--gt", str(self.scenario / "gt.csv")]
        )
        self.assertEqual(1, status)
        self.assertEqual("", stdout)
        self.assertEqual(
            "error: ValidationError: "
            "predictions contain cameras without ground truth: 3\n",
            stderr.splitlines(keepends=True)[-1],
        )

    def test_failures(self):
        status, _, stderr = run_captured(
            ["track", "--in", str(self.root / "missing"), "--out", str(self.root)]
        )
        self.assertEqual(1, status)
        self.assertTrue(stderr.startswith("error: ValidationError: "))

        status, _, stderr = run_captured(
            ["track", "--in", str(self.scenario), "--out", str(self.root)]
            + ["--log-level", "loud"]
        )
        self.assertEqual(1, status)
        self.assertTrue(stderr.startswith("error: ValidationError: "))

    def test_badly_typed_config(self):
        config = self.root / "config.json"
        config.write_text(json.dumps({"bandwidth": "wide"}), encoding="utf-8")
        status, _, stderr = run_captured(
            ["clm-train", "--gt", str(self.scenario / "gt.csv")]
            + ["--config", str(config), "--out", str(self.root / "clm.json")]
        )
        self.assertEqual(1, status)
        self.assertEqual(
            "error: ValidationError: bandwidth must be a number but is 'wide'\n",
            stderr.splitlines(keepends=True)[-1],
        )
        self.assertFalse((self.root / "clm.json").exists())

    def test_usage_error(self):
        with self.assertRaises(SystemExit) as cm:
            run_captured(["track", "--out", str(self.root)])
        self.assertEqual(2, cm.exception.code)
        with self.assertRaises(SystemExit) as cm:
            run_captured(["tune"])
        self.assertEqual(2, cm.exception.code)


if __name__ == "__main__":
    unittest.main()
