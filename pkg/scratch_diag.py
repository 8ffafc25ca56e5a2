"""Scratch diagnostics: lr/epoch sweep on identity reducer + per-kind accuracy (temporary)."""
import sys, time
from dataclasses import replace
from pathlib import Path

from semtok.train import RunConfig, train_stage1, train_stage2, evaluate, accuracy_by_query_kind, _datasets_for_seed

root = Path(sys.argv[1]); root.mkdir(parents=True, exist_ok=True)
base = RunConfig(train_count=2000, eval_count=500, out_dir=str(root))
train_ds, eval_ds = _datasets_for_seed(base, 0, root)

for s1_lr, s1_ep in [(2e-3, 6)]:
    cfg1 = replace(base, seed=0, learning_rate=s1_lr, epochs=s1_ep, out_dir=str(root / f"s1_{s1_lr}_{s1_ep}"))
    t0 = time.time()
    s1 = train_stage1(cfg1, train_ds, eval_ds)
    rep = (Path(cfg1.out_dir) / "stage1_report.txt").read_text().strip().replace("\n", " ")
    print(f"stage1 lr={s1_lr} ep={s1_ep}: {rep} [{time.time()-t0:.0f}s]", flush=True)
    for lr, ep in [(1e-3, 12), (3e-3, 12)]:
        cfg2 = replace(base, seed=0, learning_rate=lr, epochs=ep, reducer="identity", target_tokens=64,
                       out_dir=str(root / f"s2_id_{s1_lr}_{lr}_{ep}"))
        t0 = time.time()
        ck = train_stage2(cfg2, s1, train_ds, eval_ds)
        rep = (Path(cfg2.out_dir) / "stage2_report.txt").read_text().strip().replace("\n", " ")
        kinds = accuracy_by_query_kind(ck, eval_ds)
        print(f"  identity lr={lr} ep={ep}: {rep} kinds={kinds} [{time.time()-t0:.0f}s]", flush=True)
