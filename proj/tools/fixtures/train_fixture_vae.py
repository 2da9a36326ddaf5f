# Copyright 2026 The Foveate Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Produces the committed weight fixture fixtures/vae.vaew.

This is a minimal fixture generator, not the project trainer. It fits the
joint continuous/categorical autoencoder with the capacity-regularised loss
plus a label cross-entropy on the categorical logits, so that category h of
z_d is digit h (an unsupervised run only identifies classes up to a
permutation). It also writes fixtures/vae_parity.bin: decoder outputs for
the all-zeros code and a few random codes, used as a cross-component golden.

    python3 tools/fixtures/train_fixture_vae.py
"""
import math
import struct
import zlib

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

N_C, N_D = 10, 10
ACT = {"identity": 0, "relu": 1, "sigmoid": 2}


def read_idx(path):
    with open(path, "rb") as f:
        magic, n = struct.unpack(">II", f.read(8))
        if magic == 0x803:
            rows, cols = struct.unpack(">II", f.read(8))
            return np.frombuffer(f.read(), np.uint8).reshape(n, rows * cols)
        return np.frombuffer(f.read(), np.uint8)


class JointVae(nn.Module):
    def __init__(self):
        super().__init__()
        self.enc = nn.ModuleList([nn.Linear(784, 512), nn.Linear(512, 256), nn.Linear(256, 2 * N_C + N_D)])
        self.dec = nn.ModuleList([nn.Linear(N_C + N_D, 256), nn.Linear(256, 512), nn.Linear(512, 784)])

    def encode(self, x):
        h = F.relu(self.enc[0](x))
        h = F.relu(self.enc[1](h))
        out = self.enc[2](h)
        return out[:, :N_C], out[:, N_C:2 * N_C], out[:, 2 * N_C:]

    def decode(self, z):
        h = F.relu(self.dec[0](z))
        h = F.relu(self.dec[1](h))
        return torch.sigmoid(self.dec[2](h))


def export(model, path):
    layers = [(l, "relu") for l in model.enc[:2]] + [(model.enc[2], "identity")]
    layers += [(l, "relu") for l in model.dec[:2]] + [(model.dec[2], "sigmoid")]
    body = bytearray(b"VAEW")
    body += struct.pack("<II", 1, len(layers))
    for lin, act in layers:
        w = lin.weight.detach().numpy().astype("<f4")
        b = lin.bias.detach().numpy().astype("<f4")
        body += struct.pack("<IIB", w.shape[1], w.shape[0], ACT[act])
        body += w.tobytes() + b.tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
    with open(path + ".tmp", "wb") as f:
        f.write(body)
    import os
    os.replace(path + ".tmp", path)


def main():
    torch.manual_seed(7)
    rng = np.random.default_rng(7)
    x_tr = torch.tensor(read_idx("fixtures/mnist/train-images-idx3-ubyte") / 255.0, dtype=torch.float32)
    y_tr = torch.tensor(read_idx("fixtures/mnist/train-labels-idx1-ubyte").astype(np.int64))
    x_te = torch.tensor(read_idx("fixtures/mnist/test-images-idx3-ubyte") / 255.0, dtype=torch.float32)
    y_te = torch.tensor(read_idx("fixtures/mnist/test-labels-idx1-ubyte").astype(np.int64))

    model = JointVae()
    opt = torch.optim.Adam(model.parameters(), lr=1e-3)
    epochs, batch, r_c, r_d, ce_gain = 60, 64, 30.0, 30.0, 20.0
    for epoch in range(epochs):
        frac = min(1.0, epoch / 20.0)
        k_c, k_d = 5.0 * frac, math.log(N_D) * frac
        temp = 1.0 - 0.5 * min(1.0, epoch / epochs)
        perm = torch.randperm(len(x_tr))
        total = 0.0
        for i in range(0, len(x_tr), batch):
            idx = perm[i:i + batch]
            x, y = x_tr[idx], y_tr[idx]
            mu, logvar, logits = model.encode(x)
            z_c = mu + torch.randn_like(mu) * torch.exp(0.5 * logvar)
            z_d = F.gumbel_softmax(logits, tau=temp)
            recon = model.decode(torch.cat([z_c, z_d], 1))
            bce = F.binary_cross_entropy(recon, x, reduction="none").sum(1).mean()
            kl_c = (0.5 * (mu ** 2 + logvar.exp() - 1 - logvar)).sum(1).mean()
            q = F.softmax(logits, 1)
            kl_d = (q * (torch.log(q + 1e-12) + math.log(N_D))).sum(1).mean()
            loss = bce + r_c * (kl_c - k_c).abs() + r_d * (kl_d - k_d).abs() + ce_gain * F.cross_entropy(logits, y)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        with torch.no_grad():
            acc = (model.encode(x_te)[2].argmax(1) == y_te).float().mean().item()
        print(f"epoch {epoch:3d} loss {total / len(x_tr):9.3f} kl_c {kl_c.item():.2f} kl_d {kl_d.item():.3f} held-out zd acc {acc:.3f}")

    export(model, "fixtures/vae.vaew")
    codes = np.zeros((11, N_C + N_D), np.float32)
    codes[1:, :N_C] = rng.standard_normal((10, N_C))
    codes[1:, N_C:][np.arange(10), np.arange(10)] = 1.0
    with torch.no_grad():
        outs = model.decode(torch.tensor(codes)).numpy().astype("<f4")
    with open("fixtures/vae_parity.bin", "wb") as f:
        f.write(struct.pack("<III", len(codes), N_C + N_D, 784))
        for c, o in zip(codes, outs):
            f.write(c.astype("<f4").tobytes() + o.tobytes())


if __name__ == "__main__":
    main()
