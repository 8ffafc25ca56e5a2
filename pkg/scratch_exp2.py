"""Scratch: rebalanced query mix; reducer relationships at 16 tokens; purity probe (temporary)."""
import sys, time
from dataclasses import replace
from pathlib import Path

from semtok.train import RunConfig, train_stage1, train_stage2, evaluate, accuracy_by_query_kind, _datasets_for_seed

root = Path(sys.argv[1]); root.mkdir(parents=True, exist_ok=True)
base = RunConfig(train_count=2000, eval_count=500, out_dir=str(root), query_mix=(0.3, 0.5, 0.2))

for seed in (0, 1):
    train_ds, eval_ds = _datasets_for_seed(base, seed, root)
    cfg1 = replace(base, seed=seed, learning_rate=2e-3, epochs=8, out_dir=str(root / f"s1_{seed}"))
    t0 = time.time()
    s1 = train_stage1(cfg1, train_ds, eval_ds)
    rep = (Path(cfg1.out_dir) / "stage1_report.txt").read_text().strip().replace("\n", " ")
    print(f"seed {seed} stage1: {rep} [{time.time()-t0:.0f}s]", flush=True)
    for reducer, tokens in [("identity", 64), ("grouping", 16), ("random_drop", 16), ("avg_pool", 16)]:
        cfg2 = replace(base, seed=seed, epochs=12, learning_rate=1e-3, reducer=reducer, target_tokens=tokens,
                       out_dir=str(root / f"s2_{reducer}{tokens}_{seed}"))
        t0 = time.time()
        ck = train_stage2(cfg2, s1, train_ds, eval_ds)
        rep = (Path(cfg2.out_dir) / "stage2_report.txt").read_text().strip().replace("\n", " ")
        kinds = accuracy_by_query_kind(ck, eval_ds)
        kinds_s = {k[:5]: round(v, 3) for k, v in kinds.items()}
        print(f"seed {seed} {reducer}@{tokens}: {rep} {kinds_s} [{time.time()-t0:.0f}s]", flush=True)

# purity probe: K=4 scenes, 8 semantic tokens, default two-stage scale
pur = replace(base, seed=0, min_regions=4, max_regions=4, out_dir=str(root / "pur"))
train4, eval4 = _datasets_for_seed(pur, 7, root / "pur_data")
c1 = replace(pur, learning_rate=2e-3, epochs=8, out_dir=str(root / "pur_s1"))
s1 = train_stage1(c1, train4, eval4)
c2 = replace(pur, epochs=12, learning_rate=1e-3, reducer="grouping", target_tokens=8, out_dir=str(root / "pur_s2"))
t0 = time.time()
ck = train_stage2(c2, s1, train4, eval4)
print("purity probe:", (Path(c2.out_dir) / "stage2_report.txt").read_text().strip().replace("\n", " "), f"[{time.time()-t0:.0f}s]", flush=True)
