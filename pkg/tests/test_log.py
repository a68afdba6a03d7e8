import os
import unittest
import warnings
from pathlib import Path
from tempfile import TemporaryDirectory

from endonav._fs import get_cache_path, get_log_path, log, log_to


class TestLog(unittest.TestCase):
    def test_log_path(self):
        # One log file per process in the cache directory.
        self.assertEqual(Path(get_cache_path(f"{os.getpid()}.txt")), get_log_path())

    def test_log(self):
        log_path = get_log_path()
        log_path.unlink(missing_ok=True)
        log("hello world", category="test")
        self.assertTrue(log_path.exists(), "Logs not created")
        text = log_path.read_text()
        self.assertIn("hello world", text, "Log not logged")
        self.assertIn("test]", text, "Category missing")

    def test_exc(self):
        log_path = get_log_path()
        log_path.unlink(missing_ok=True)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                raise RuntimeError("boom")
            except RuntimeError as e:
                log("hello world", exc=e)
        self.assertTrue(log_path.exists(), "Logs not created")
        # Check log level elevation to ERROR
        self.assertIn("ERROR] hello world", log_path.read_text(), "Exc not logged")
        self.assertIn("boom", log_path.read_text())
        self.assertEqual(1, len(caught))
        self.assertIn(str(log_path), str(caught[0].message))

    def test_log_to(self):
        with TemporaryDirectory() as d:
            path = Path(d) / "run" / "log.txt"
            with log_to(path):
                self.assertEqual(path, get_log_path())
                log("redirected", level="info")
            self.assertNotEqual(path, get_log_path())
            self.assertIn("INFO] redirected", path.read_text())
