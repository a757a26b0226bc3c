import json
import os
import subprocess
import sys
import tempfile
import unittest

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.dirname(os.path.dirname(HERE))
SCRIPT = os.path.join(ROOT, "tools", "extract_wordnet_meta.py")
SAMPLE = os.path.join(ROOT, "tests", "data", "data.noun.sample")


def run(*args):
    return subprocess.run([sys.executable, SCRIPT, "--data-noun", SAMPLE, *args],
                          capture_output=True, text=True)


class ExtractTest(unittest.TestCase):
    def test_fields(self):
        out = run()
        self.assertEqual(out.returncode, 0, out.stderr)
        by = {r["wnid"]: r for r in json.loads(out.stdout)}
        self.assertEqual(len(by), 5)
        pap = by["n02086910"]
        self.assertEqual(pap["lemmas"], ["papillon"])
        self.assertEqual(pap["hypernym_lemmas"], ["toy spaniel", "canine"])
        self.assertEqual(pap["definition"],
                         "small slender toy spaniel with erect ears and a black-spotted brown to white coat")
        self.assertEqual(by["n02085374"]["lemmas"], ["toy dog", "toy"])
        # Example sentences after the gloss are dropped.
        self.assertEqual(by["n02084071"]["definition"], "a member of the genus Canis")
        self.assertEqual(by["n02083346"]["hypernym_lemmas"], [])

    def test_class_list_order_and_missing(self):
        with tempfile.TemporaryDirectory() as tmp:
            classes = os.path.join(tmp, "c.txt")
            with open(classes, "w") as fh:
                fh.write("# two classes\nn02085620\nn02086910\n")
            out = run("--classes", classes)
            self.assertEqual([r["wnid"] for r in json.loads(out.stdout)], ["n02085620", "n02086910"])
            with open(classes, "w") as fh:
                fh.write("n09999999\n")
            self.assertNotEqual(run("--classes", classes).returncode, 0)


if __name__ == "__main__":
    unittest.main()
