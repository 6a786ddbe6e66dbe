"""Optional PyTorch adapters for pretrained networks.

Importing this module requires ``torch``; everything else in the package
runs on numpy alone. Gradients come from autograd and are returned as
float64 numpy arrays, so these adapters plug into the same optimizer as the
toy backends.

Generator contract. A TorchScript module with attributes ``num_layers``,
``latent_dim``, ``resolution``, ``noise_sides`` (list of ints) and
``mean_latent`` (tensor of length ``latent_dim``), whose ``forward(w_plus,
noise)`` maps an ``(L, D)`` tensor and a list of ``(s, s)`` noise tensors to
a ``(3, R, R)`` image in [0, 1]. Converting a published checkpoint to this
contract is a data-preparation step outside the package.
"""
from __future__ import annotations

import numpy as np
import torch

from .errors import LevelError, ShapeError
from .features import APPEARANCE_TAP, LEVEL_TAPS, STYLE_TAPS
from .generator import Geometry, LatentState, check_state

FULL_SCALE_GEOMETRY = (15, 512, 512)


def _as_numpy(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().numpy().astype(np.float64)


class TorchScriptGenerator:
    """Generator backend around a scripted module (see the module docstring).

    ``expect`` is the ``(L, D, resolution)`` the weights must report;
    ``None`` skips the check.
    """

    def __init__(self, path=None, module=None, expect=FULL_SCALE_GEOMETRY, device="cpu"):
        if (path is None) == (module is None):
            raise ValueError("give exactly one of a weight path or a module")
        self.module = torch.jit.load(str(path), map_location=device) if module is None else module
        self.module.eval()
        self.device = torch.device(device)
        m = self.module
        self.geometry = Geometry(
            int(m.num_layers), int(m.latent_dim), tuple(int(s) for s in m.noise_sides), int(m.resolution)
        )
        self.mean_latent = _as_numpy(torch.as_tensor(m.mean_latent))
        got = (self.geometry.num_layers, self.geometry.latent_dim, self.geometry.resolution)
        if expect is not None and got != tuple(expect):
            raise ShapeError(f"generator geometry (L, D, R) = {got}, expected {tuple(expect)}")

    def _tensors(self, state: LatentState, grad: bool):
        check_state(self.geometry, state)
        dtype = next((p.dtype for p in self.module.parameters()), torch.float32)
        w = torch.tensor(state.w_plus, dtype=dtype, device=self.device, requires_grad=grad)
        noise = [torch.tensor(n, dtype=dtype, device=self.device, requires_grad=grad) for n in state.noise]
        return w, noise

    def synthesize(self, state: LatentState) -> np.ndarray:
        w, noise = self._tensors(state, grad=False)
        with torch.no_grad():
            return _as_numpy(self.module(w, noise))

    def vjp(self, state: LatentState, grad_image: np.ndarray) -> LatentState:
        w, noise = self._tensors(state, grad=True)
        out = self.module(w, noise)
        seed = torch.as_tensor(np.asarray(grad_image), dtype=out.dtype, device=self.device)
        if seed.shape != out.shape:
            raise ShapeError(f"image gradient {tuple(seed.shape)} vs output {tuple(out.shape)}")
        g_w, *g_noise = torch.autograd.grad(out, [w, *noise], seed, allow_unused=True)
        zeros = [torch.zeros_like(t) for t in (w, *noise)]
        grads = [z if g is None else g for g, z in zip((g_w, *g_noise), zeros)]
        return LatentState(_as_numpy(grads[0]), [_as_numpy(g) for g in grads[1:]])


# indices of the ReLU outputs in torchvision's vgg16().features
VGG16_RELU_INDEX = {
    "relu1_1": 1, "relu1_2": 3, "relu2_2": 8, "relu3_3": 15, "relu4_3": 22, "relu5_3": 29,
}
VGG16_LEVELS = {1: (64, 1), 2: (128, 2), 3: (256, 4), 4: (512, 8), 5: (512, 16)}
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class VGG16Extractor:
    """VGG16 feature taps on ImageNet-normalized input.

    ``path`` is a state dict for ``torchvision.models.vgg16``; ``None``
    leaves the network randomly initialized (seeded), which is only useful
    for testing the plumbing.
    """

    appearance_tap = APPEARANCE_TAP
    style_taps = STYLE_TAPS
    levels = VGG16_LEVELS

    def __init__(self, path=None, seed: int = 0, device="cpu", lpips_weights=None):
        from torchvision.models import vgg16

        torch.manual_seed(seed)
        net = vgg16(weights=None)
        if path is not None:
            net.load_state_dict(torch.load(str(path), map_location=device))
        self.features = net.features[: VGG16_RELU_INDEX["relu5_3"] + 1].to(device).eval()
        for p in self.features.parameters():
            p.requires_grad_(False)
        self.device = torch.device(device)
        self.mean = torch.tensor(IMAGENET_MEAN, device=device).view(3, 1, 1)
        self.std = torch.tensor(IMAGENET_STD, device=device).view(3, 1, 1)
        self.lpips_weights = lpips_weights

    def _index(self, layer) -> int:
        key = LEVEL_TAPS.get(layer, layer)
        if key not in VGG16_RELU_INDEX:
            raise LevelError(f"unknown feature level {layer!r}")
        return VGG16_RELU_INDEX[key]

    def _forward(self, x, layer):
        x = (x - self.mean) / self.std
        return self.features[: self._index(layer) + 1](x.unsqueeze(0))[0]

    def extract(self, image, layer) -> np.ndarray:
        x = torch.as_tensor(np.asarray(image), dtype=torch.float32, device=self.device)
        with torch.no_grad():
            return _as_numpy(self._forward(x, layer))

    def vjp(self, image, layer, grad) -> np.ndarray:
        x = torch.tensor(np.asarray(image), dtype=torch.float32, device=self.device, requires_grad=True)
        out = self._forward(x, layer)
        seed = torch.as_tensor(np.asarray(grad), dtype=out.dtype, device=self.device)
        (g,) = torch.autograd.grad(out, [x], seed)
        return _as_numpy(g)
