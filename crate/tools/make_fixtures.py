#!/usr/bin/env python3
"""Regenerates the committed inference fixtures under crates/core/tests/fixtures.

The forward pass here is built from stock torch modules (Conv1d, BatchNorm1d,
Hardswish, GRU, Linear), independently of the Rust engine, and evaluated in
float64. Outputs:

  session.csv                 240 s slow-breathing session at 100 Hz (two segments)
  random_full.bkw             default architecture, random weights
  slow_25hz.csv               360 s slow-breathing session at 25 Hz (three segments)
  skills/<skill>.bkw          reduced-width 25 Hz nets trained on synthetic
                              slow-vs-fast breathing segments
  reference.json              probabilities for every bundle on its session

This is a fixture generator, not the project's trainer.

    python3 tools/make_fixtures.py [out_dir]
"""

import json
import math
import struct
import sys
from pathlib import Path

import numpy as np
import torch
from torch import nn

SKILLS = ["concentration", "sensory_clarity", "equanimity"]
FS = 100.0
SEGMENT_S = 120.0
GRAVITY = np.array([0.08, -0.2, 0.976])


def network_spec(widths, segment_len):
    blocks = []
    for stage, c in enumerate(widths):
        opens = stage > 0
        blocks.append({"kind": "conv-shortcut" if opens else "identity", "channels": c, "kernel": 3, "stride": 2 if opens else 1})
        blocks.append({"kind": "identity", "channels": c, "kernel": 3, "stride": 1})
    return {
        "input_channels": 3,
        "segment_len": segment_len,
        "stem": {"out_channels": widths[0], "kernel": 7, "stride": 2},
        "blocks": blocks,
        "gru_hidden": 128,
        "bn_eps": 1e-5,
    }


class Block(nn.Module):
    def __init__(self, cin, spec):
        super().__init__()
        c, k, s = spec["channels"], spec["kernel"], spec["stride"]
        self.conv1 = nn.Conv1d(cin, c, k, s, padding=k // 2, bias=False)
        self.bn1 = nn.BatchNorm1d(c, eps=1e-5)
        self.conv2 = nn.Conv1d(c, c, k, 1, padding=k // 2, bias=False)
        self.bn2 = nn.BatchNorm1d(c, eps=1e-5)
        self.act = nn.Hardswish()
        self.shortcut = None
        if spec["kind"] == "conv-shortcut":
            self.shortcut = nn.Sequential(nn.Conv1d(cin, c, 1, s, bias=False), nn.BatchNorm1d(c, eps=1e-5))

    def forward(self, x):
        y = self.act(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        skip = x if self.shortcut is None else self.shortcut(x)
        return self.act(y + skip)


class Net(nn.Module):
    def __init__(self, spec):
        super().__init__()
        st = spec["stem"]
        self.stem = nn.Conv1d(3, st["out_channels"], st["kernel"], st["stride"], padding=st["kernel"] // 2, bias=False)
        self.stem_bn = nn.BatchNorm1d(st["out_channels"], eps=1e-5)
        self.act = nn.Hardswish()
        blocks, cin = [], st["out_channels"]
        for b in spec["blocks"]:
            blocks.append(Block(cin, b))
            cin = b["channels"]
        self.blocks = nn.ModuleList(blocks)
        self.gru = nn.GRU(1, spec["gru_hidden"], batch_first=True)
        self.head = nn.Linear(spec["gru_hidden"], 1)

    def logits(self, x):
        x = self.act(self.stem_bn(self.stem(x)))
        for b in self.blocks:
            x = b(x)
        seq = x.mean(dim=1).unsqueeze(-1)  # average over channels, keep time
        _, h = self.gru(seq)
        return self.head(h[-1]).squeeze(-1)


def export_tensors(net, spec):
    """Named tensors in the bundle's canonical order."""
    out = []

    def bn(prefix, m):
        out.extend([(f"{prefix}.gamma", m.weight), (f"{prefix}.beta", m.bias),
                    (f"{prefix}.running_mean", m.running_mean), (f"{prefix}.running_var", m.running_var)])

    out.append(("stem.conv.weight", net.stem.weight))
    bn("stem.bn", net.stem_bn)
    for i, b in enumerate(net.blocks):
        out.append((f"blocks.{i}.conv1.weight", b.conv1.weight))
        bn(f"blocks.{i}.bn1", b.bn1)
        out.append((f"blocks.{i}.conv2.weight", b.conv2.weight))
        bn(f"blocks.{i}.bn2", b.bn2)
        if b.shortcut is not None:
            out.append((f"blocks.{i}.shortcut.conv.weight", b.shortcut[0].weight))
            bn(f"blocks.{i}.shortcut.bn", b.shortcut[1])
    h = spec["gru_hidden"]
    g = net.gru
    for k, gate in enumerate(["reset", "update", "candidate"]):
        rows = slice(k * h, (k + 1) * h)
        out.append((f"gru.{gate}.w_ih", g.weight_ih_l0[rows]))
        out.append((f"gru.{gate}.w_hh", g.weight_hh_l0[rows]))
        out.append((f"gru.{gate}.b_ih", g.bias_ih_l0[rows]))
        out.append((f"gru.{gate}.b_hh", g.bias_hh_l0[rows]))
    out.append(("head.weight", net.head.weight))
    out.append(("head.bias", net.head.bias))
    return out


def write_bundle(path, net, spec):
    entries, payload = [], bytearray()
    for name, t in export_tensors(net, spec):
        arr = t.detach().to(torch.float32).contiguous().numpy()
        data = arr.astype("<f4").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": len(payload), "length": len(data)})
        payload.extend(data)
    header = json.dumps({"format_version": 1, "spec": spec, "tensors": entries}).encode()
    with open(path, "wb") as f:
        f.write(b"BKW1")
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        f.write(payload)


def round_to_f32(net):
    """Snap parameters and buffers to float32 so the float64 reference uses
    exactly the stored weights."""
    with torch.no_grad():
        for t in list(net.parameters()) + list(net.buffers()):
            if t.is_floating_point():
                t.copy_(t.to(torch.float32).to(t.dtype))


# --- synthetic data ---------------------------------------------------------

def mixing():
    v = np.array([0.25, 0.15, 0.95])  # breathing dominant on z
    return v / np.linalg.norm([0.95, 0.25, 0.15])


def session(rng, duration_s, rate_steps, amplitude=0.02, jitter=0.005, drift=0.03):
    n = int(round(duration_s * FS))
    t = np.arange(n) / FS
    bpm = np.empty(n)
    starts = [s for s, _ in rate_steps] + [duration_s]
    for (s, r), e in zip(rate_steps, starts[1:]):
        bpm[(t >= s) & (t < e)] = r
    phase = np.concatenate([[0.0], np.cumsum(bpm[:-1] / 60.0 / FS)])
    motion = amplitude * np.sin(2 * np.pi * phase)
    motion += drift * np.sin(2 * np.pi * t / 240.0 + rng.uniform(0, 2 * np.pi))
    axes = GRAVITY[None, :] + motion[:, None] * mixing()[None, :]
    axes += rng.normal(0.0, jitter, size=axes.shape)
    return t, axes


def standardize(axes):
    """Per-channel zero mean, unit (population) variance with a 1e-8 floor."""
    out = np.zeros((axes.shape[1], axes.shape[0]))
    for c in range(axes.shape[1]):
        v = axes[:, c]
        mean = v.sum() / len(v)
        var = ((v - mean) ** 2).sum() / len(v)
        out[c] = 0.0 if var < 1e-8 else (v - mean) / math.sqrt(var)
    return out.astype(np.float32)


def segments_of(axes):
    seg = int(round(SEGMENT_S * FS))
    return [standardize(axes[k * seg:(k + 1) * seg]) for k in range(len(axes) // seg)]


def labeled_segment(rng, label):
    if label:
        base, wobble = rng.uniform(5.0, 8.0), 0.3
    else:
        base, wobble = rng.uniform(12.0, 20.0), 2.0
    steps = [(k * 20.0, float(np.clip(base + rng.normal(0, wobble), 3.0, 35.0))) for k in range(6)]
    amp = rng.uniform(0.012, 0.03)
    _, axes = session(rng, SEGMENT_S, steps, amplitude=amp, jitter=rng.uniform(0.0, 0.006))
    return standardize(axes)


def train_skill(seed, spec, n_per_class=128, epochs=30):
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    def batch():
        xs = [labeled_segment(rng, i % 2 == 0) for i in range(2 * n_per_class)]
        ys = [1.0 if i % 2 == 0 else 0.0 for i in range(2 * n_per_class)]
        return torch.tensor(np.stack(xs)), torch.tensor(ys, dtype=torch.float32)

    net = Net(spec)
    opt = torch.optim.Adam(net.parameters(), lr=3e-3)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, epochs)
    loss_fn = nn.BCEWithLogitsLoss()
    for epoch in range(epochs):
        # Fresh segments every epoch; a fixed set of 256 is memorized.
        x, y = batch()
        net.train()
        perm = torch.randperm(len(x))
        total = 0.0
        for b in range(0, len(x), 32):
            idx = perm[b:b + 32]
            opt.zero_grad()
            loss = loss_fn(net.logits(x[idx]), y[idx])
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        sched.step()
        net.eval()
        with torch.no_grad():
            acc = ((net.logits(x) > 0).float() == y).float().mean().item()
        print(f"  seed {seed} epoch {epoch}: loss {total / len(x):.4f} acc {acc:.3f}", flush=True)
    net.eval()
    held_x = torch.tensor(np.stack([labeled_segment(rng, i % 2 == 0) for i in range(64)]))
    held_y = torch.tensor([1.0 if i % 2 == 0 else 0.0 for i in range(64)])
    with torch.no_grad():
        acc = ((net.logits(held_x) > 0).float() == held_y).float().mean().item()
    print(f"  seed {seed} held-out acc {acc:.3f}", flush=True)
    return net


def randomize(net):
    g = torch.Generator().manual_seed(7)
    with torch.no_grad():
        for name, p in net.named_parameters():
            if "gru" in name or "head" in name:
                p.uniform_(-0.15, 0.15, generator=g)
            elif p.dim() == 3:
                fan_in = p.shape[1] * p.shape[2]
                p.normal_(0.0, math.sqrt(2.0 / fan_in), generator=g)
            elif name.endswith("weight"):  # BN gamma
                p.uniform_(0.6, 1.2, generator=g)
            else:
                p.uniform_(-0.1, 0.1, generator=g)
        for name, b in net.named_buffers():
            if name.endswith("running_mean"):
                b.uniform_(-0.2, 0.2, generator=g)
            elif name.endswith("running_var"):
                b.uniform_(0.5, 2.0, generator=g)
    net.eval()
    return net


def reference_probs(net, segs):
    net64 = net.double().eval()
    with torch.no_grad():
        logits = net64.logits(torch.tensor(np.stack(segs)).double())
    net.float()
    return [float(v) for v in torch.sigmoid(logits)]


def write_session(path, session_id, fs, t, axes):
    with open(path, "w", newline="\n") as f:
        f.write(f"# session_id={session_id}\n# sample_rate_hz={fs:g}\nt,x,y,z\n")
        for ti, (a, b, c) in zip(t, axes):
            f.write(f"{float(ti)!r},{float(a)!r},{float(b)!r},{float(c)!r}\n")
    # Re-read so the segments come from exactly the written values.
    data = np.loadtxt(path, delimiter=",", comments="#", skiprows=3)
    return segments_of(data[:, 1:4])


def main():
    global FS
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "crates/core/tests/fixtures"
    (out / "skills").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(2024)
    reference = {}

    FS = 100.0
    t, axes = session(rng, 240.0, [(0.0, 6.0), (60.0, 6.5), (120.0, 5.5), (180.0, 6.0)])
    segs = write_session(out / "session.csv", "fixture", FS, t, axes)
    full = network_spec([32, 64, 128, 256], int(SEGMENT_S * FS))
    net = randomize(Net(full))
    round_to_f32(net)
    write_bundle(out / "random_full.bkw", net, full)
    reference["random_full"] = {"session": "session.csv", "probs": reference_probs(net, segs)}
    print("random_full", reference["random_full"], flush=True)

    # The skill nets run at 25 Hz: 3000-sample segments train in minutes on a
    # CPU, where 12000-sample ones did not converge in a comparable budget.
    FS = 25.0
    t, axes = session(rng, 360.0, [(0.0, 6.0), (90.0, 5.5), (180.0, 6.5), (270.0, 6.0)])
    segs = write_session(out / "slow_25hz.csv", "fixture-slow", FS, t, axes)
    small = network_spec([8, 8, 16, 16], int(SEGMENT_S * FS))
    reference["skills"] = {"session": "slow_25hz.csv"}
    for k, skill in enumerate(SKILLS):
        net = train_skill(100 + k, small, epochs=40)
        round_to_f32(net)
        write_bundle(out / "skills" / f"{skill}.bkw", net, small)
        reference["skills"][skill] = reference_probs(net, segs)
        print(skill, reference["skills"][skill], flush=True)

    with open(out / "reference.json", "w") as f:
        json.dump(reference, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
