"""Write the synthetic probe suite as *.jsonl files for `sufisent eval --tasks`."""
import argparse
from pathlib import Path

from sufisent.transfer import gen_probe_tasks, write_probe_task

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--seed", type=int, default=0)
ap.add_argument("--out", default="probe_tasks")
args = ap.parse_args()

out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)
for task in gen_probe_tasks(args.seed):
    write_probe_task(out / f"{task.name}.jsonl", task)
    n_train, n_val = task.split_sizes
    print(f"{task.name:12s} classes={task.n_classes} train={n_train} val={n_val}")
