"""
Plugging in pretrained networks
===============================

The optimizer only needs ``synthesize`` and ``vjp`` from a generator and
``extract`` and ``vjp`` from a feature extractor. The torch adapters wrap a
scripted generator and torchvision's VGG16. This script builds a tiny
generator that follows the scripted-module contract and runs a few steps; set
``HAIRTRANSFER_GENERATOR_WEIGHTS`` to load a real one instead.
"""

import os
import tempfile
from pathlib import Path
from typing import List

import numpy as np
import torch

from hairtransfer.generator import init_latent_state
from hairtransfer.optimizer import OptimizationConfig, TransferProblem, run_two_stage
from hairtransfer.torch_backends import TorchScriptGenerator, VGG16Extractor


class Tiny(torch.nn.Module):
    def __init__(self):
        super().__init__()
        self.num_layers, self.latent_dim, self.resolution = 4, 16, 32
        self.noise_sides = [8, 32]
        self.mean_latent = torch.zeros(16)
        self.proj = torch.nn.Parameter(torch.randn(64, 3 * 32 * 32) * 0.05)

    def forward(self, w, noise: List[torch.Tensor]):
        img = (w.reshape(1, -1) @ self.proj).reshape(3, 32, 32)
        for n in noise:
            f = 32 // n.shape[0]
            img = img + 0.05 * n.repeat_interleave(f, 0).repeat_interleave(f, 1)
        return torch.sigmoid(img)


weights = os.environ.get("HAIRTRANSFER_GENERATOR_WEIGHTS")
if weights:
    gen = TorchScriptGenerator(weights)
else:
    path = Path(tempfile.mkdtemp()) / "tiny.pt"
    torch.jit.script(Tiny()).save(str(path))
    gen = TorchScriptGenerator(path, expect=None)
print("geometry", gen.geometry)

ext = VGG16Extractor(os.environ.get("HAIRTRANSFER_VGG_WEIGHTS"))
r = gen.geometry.resolution
hair = np.zeros((r, r), bool)
hair[: r // 3, r // 5 : 4 * r // 5] = True
face = np.zeros((r, r), bool)
face[r // 3 : 5 * r // 6, r // 4 : 3 * r // 4] = True
target = gen.synthesize(init_latent_state(gen, 1))
problem = TransferProblem(target, target, target, face, hair, hair, hair)
run = run_two_stage(gen, ext, problem, OptimizationConfig(stage1_iters=5, stage2_iters=5, lr0=0.01))
print("total loss", [f"{row['total']:.3e}" for row in run.log])
