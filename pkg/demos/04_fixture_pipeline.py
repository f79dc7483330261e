"""
The full pipeline on the shipped offline fixture
================================================

The package ships 200 synthetic samples and a replay cache of four
simulated judges, so the whole pipeline runs without network access.
A prompt-sensitivity sweep is run against a freshly generated cache.
"""

import shutil
import tempfile
from pathlib import Path

from malfam.cli import main
from malfam.fixtures import FIXTURE_DIR, build_fixture

work = Path(tempfile.mkdtemp(prefix="malfam-demo-"))
fixture = work / "fixture"
shutil.copytree(FIXTURE_DIR, fixture)
config = str(fixture / "config.json")
out = str(work / "run")

# predict -> calibrate -> ensemble (all three modes) -> evaluate
main(["predict", "--config", config, "--out-dir", out])
main(["calibrate", "--config", config, "--out-dir", out])
for mode in ("uniform", "weighted", "weighted_hierarchical"):
    main(["ensemble", "--config", config, "--out-dir", out, "--mode", mode])
main(["evaluate", "--config", config, "--out-dir", out])

# %%
# The sweep needs cached answers for every prompt it covers. Generate a
# fixture holding P1 and P2 and score both.
sweep_fx = build_fixture(work / "sweep-fixture", prompt_ids=("P1", "P2"))
main(["sweep", "--config", str(sweep_fx["config"]), "--out-dir", str(work / "sweep"), "--prompts", "P1,P2"])

# %%
# ``report`` gathers everything in an output directory.
main(["report", "--out-dir", out])
print(f"\noutputs left in {work}")
