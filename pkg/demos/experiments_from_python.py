"""
Running the experiment commands from Python
===========================================

The ``greenwave`` command (train / eval / compare / trace / validate /
replay) is a thin wrapper around ``greenwave.cli.main``. Every run writes a
``lock.json`` next to its CSVs; replaying it regenerates the same bytes.
"""
import filecmp
import tempfile
from pathlib import Path

from greenwave.cli import main
from greenwave.marl.config import TrainConfig
from greenwave.scenario import heldout_scenario, save_scenario, stepped_scenario

work = Path(tempfile.mkdtemp(prefix="greenwave-"))
# Three iterations only exercise the plumbing; the policy stays poor.
quick = TrainConfig(iterations=3, episodes_per_iter=2)
scenario = stepped_scenario().with_(training=quick)
save_scenario(scenario, work / "stepped.json")
save_scenario(heldout_scenario(scenario), work / "shifted.json")
args = ["--scenario", str(work / "stepped.json")]

main(["validate", *args])
main(["train", *args, "--out", str(work / "train")])
ckpt = work / "train" / "checkpoint.json"
demand = ["--demand", f"shifted={work / 'shifted.json'}", "--replications", "3"]
main(["eval", "fixtime", "maxpressure", *args, *demand, "--out", str(work / "baselines")])
main(["eval", f"rl={ckpt}", *args, *demand, "--out", str(work / "policy")])
main(["compare", str(work / "baselines" / "eval.csv"), str(work / "policy" / "eval.csv"),
      "--out", str(work / "compare")])
print((work / "compare" / "compare.txt").read_text())

# Green time of the arterial phase per cycle, against the vehicles it had to serve.
main(["trace", str(ckpt), *args, "--intersection", "I00", "--out", str(work / "trace")])
main(["trace", "fixtime", *args, "--intersection", "I00", "--out", str(work / "trace-fixed")])

main(["replay", str(work / "policy" / "lock.json"), "--out", str(work / "eval-again")])
same = filecmp.cmp(work / "policy" / "eval.csv", work / "eval-again" / "eval.csv", shallow=False)
print("replayed eval.csv identical:", same)
print("outputs in", work)
