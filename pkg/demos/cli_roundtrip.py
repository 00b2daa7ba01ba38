"""generate -> analyze -> report on the plane reference config.

Writes bundles under a temporary directory, runs the analysis twice and
checks the bundles agree byte for byte.  Takes about a minute.

    python demos/cli_roundtrip.py
"""

import filecmp
import os
import tempfile

from rectilab.cli import main

here = os.path.dirname(os.path.abspath(__file__))
config = os.path.join(here, "..", "configs", "plane.toml")

with tempfile.TemporaryDirectory() as tmp:
    meas, one, two = (os.path.join(tmp, n) for n in ("measure", "one", "two"))
    assert main(["generate", config, "--out", meas]) == 0
    for out in (one, two):
        code = main(["analyze", config, "--measure", os.path.join(meas, "measure.txt"),
                     "--out", out, "--check"])
        print("analyze exit code", code)
    names = sorted(os.listdir(one))
    _, diff, err = filecmp.cmpfiles(one, two, names, shallow=False)
    # report output goes elsewhere so the bundles stay as analyze wrote them
    main(["report", one, "--compare", two, "--out", os.path.join(tmp, "report")])
    print(f"\n{len(names)} bundle files, {len(diff) + len(err)} differ")
