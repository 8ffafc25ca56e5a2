"""Scratch calibration: reducer accuracy relationships at N'=16 (temporary, not part of package)."""
import sys, time, tempfile
from dataclasses import replace
from pathlib import Path

from semtok.train import RunConfig, train_stage1, train_stage2, evaluate, _datasets_for_seed, derived_seed
from semtok.data import generate_dataset

root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="cal_"))
root.mkdir(parents=True, exist_ok=True)
print("root:", root, flush=True)

base = RunConfig(train_count=2000, eval_count=500, epochs=3, learning_rate=1e-3, out_dir=str(root))

for seed in (0, 1):
    t0 = time.time()
    train_ds, eval_ds = _datasets_for_seed(base, seed, root)
    cfg1 = replace(base, seed=seed, out_dir=str(root / f"s1_{seed}"))
    s1 = train_stage1(cfg1, train_ds, eval_ds)
    print(f"seed {seed} stage1 {time.time()-t0:.0f}s: {(Path(cfg1.out_dir)/'stage1_report.txt').read_text().strip()}", flush=True)
    for reducer, tokens in [("identity", 64), ("grouping", 16), ("random_drop", 16), ("avg_pool", 16)]:
        t1 = time.time()
        cfg2 = replace(base, seed=seed, epochs=6, reducer=reducer, target_tokens=tokens,
                       out_dir=str(root / f"s2_{reducer}{tokens}_{seed}"))
        ck = train_stage2(cfg2, s1, train_ds, eval_ds)
        rep = (Path(cfg2.out_dir) / "stage2_report.txt").read_text().strip().replace("\n", " ")
        print(f"seed {seed} {reducer}@{tokens}: {rep}  [{time.time()-t1:.0f}s]", flush=True)
