"""Scratch: grouping optimization grid - epochs/lr/noise mode (temporary)."""
import sys, time
from dataclasses import replace
from pathlib import Path
import numpy as np

from semtok.train import RunConfig, train_stage2, load_stage2_model, _batches, accuracy_by_query_kind
from semtok.data import load_dataset
from semtok import tensor as T
import semtok.grouping as G

root = Path("/tmp/exp3")   # reuse exp3 stage1 + data
out = Path(sys.argv[1]); out.mkdir(parents=True, exist_ok=True)
base = RunConfig(train_count=2000, eval_count=500, out_dir=str(out))
train_ds = load_dataset(root / "data_train_seed0")
eval_ds = load_dataset(root / "data_eval_seed0")
s1 = root / "s1_0" / "stage1"

def occupancy(ck):
    model, cfg = load_stage2_model(ck)
    model.prepare(eval_ds)
    occ = []
    with T.no_grad():
        for batch in _batches(len(eval_ds), 64):
            img_out, sem_out = model.visual_outputs(eval_ds, batch)
            ids = G.assign_eval(sem_out, img_out, model.grouping)
            occ.extend(len(np.unique(r)) for r in ids)
    return float(np.mean(occ))

for ep, lr, ptn in [(24, 1e-3, False), (24, 2e-3, False), (24, 1e-3, True), (36, 1e-3, False)]:
    cfg = replace(base, seed=0, epochs=ep, learning_rate=lr, reducer="grouping", target_tokens=16,
                  per_token_noise=ptn, out_dir=str(out / f"g16_ep{ep}_lr{lr}_ptn{int(ptn)}"))
    t0 = time.time()
    ck = train_stage2(cfg, s1, train_ds, eval_ds)
    rep = (Path(cfg.out_dir) / "stage2_report.txt").read_text().strip().replace("\n", " ")
    kinds = {k[:5]: round(v, 3) for k, v in accuracy_by_query_kind(ck, eval_ds).items()}
    print(f"ep={ep} lr={lr} ptn={ptn}: {rep} occ={occupancy(ck):.2f} {kinds} [{time.time()-t0:.0f}s]", flush=True)
