"""VGG-19 activation export.

Runs a VGG-19 on one RGB image and captures the post-ReLU activations of
conv1_2, conv2_2, conv3_2, conv4_2, conv5_2 and conv5_3, written as l1..l5
and the terminal map.  Input preprocessing: RGB scaled to [0,1], ImageNet
mean/std normalization, then zero padding on the right and bottom to the
next multiple of 16 so every pool stage divides evenly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image
from torchvision.models import VGG19_Weights, vgg19

from .dfmt import LAYER_NAMES, write_dfmt, write_manifest
from .errors import ImageTooSmall, ModelUnavailable

# index into vgg19().features of the ReLU following each captured conv
_TAPS = {"l1": 3, "l2": 8, "l3": 13, "l4": 22, "l5": 31, "terminal": 33}

_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)

PAD_MULTIPLE = 16
CHANNELS = {"l1": 64, "l2": 128, "l3": 256, "l4": 512, "l5": 512, "terminal": 512}


@dataclass(frozen=True)
class ExportJob:
    image_path: str
    output_dir: str
    device: str = "cpu"
    weights: str = "pretrained"   # "pretrained" or "random"
    seed: int = 0

    def __post_init__(self):
        if self.weights not in ("pretrained", "random"):
            raise ValueError("weights must be 'pretrained' or 'random'")


def _load_model(job: ExportJob) -> torch.nn.Module:
    if job.weights == "pretrained":
        try:
            model = vgg19(weights=VGG19_Weights.IMAGENET1K_V1)
        except Exception as exc:
            raise ModelUnavailable(f"could not load pretrained weights: {exc}") from exc
    else:
        torch.manual_seed(job.seed)
        model = vgg19(weights=None)
    model.eval()
    return model.features[: max(_TAPS.values()) + 1].to(job.device)


def _preprocess(path: str) -> tuple[torch.Tensor, int, int]:
    """Returns the padded normalized tensor plus the source width and height."""
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        width, height = rgb.size
        arr = np.asarray(rgb, dtype=np.float32) / 255.0
    if width < PAD_MULTIPLE or height < PAD_MULTIPLE:
        raise ImageTooSmall(f"{path}: {width}x{height} is below one 16 px cell")
    mean = np.array(_IMAGENET_MEAN, dtype=np.float32)
    std = np.array(_IMAGENET_STD, dtype=np.float32)
    arr = (arr - mean) / std
    tensor = torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)
    pad_w = -width % PAD_MULTIPLE
    pad_h = -height % PAD_MULTIPLE
    if pad_w or pad_h:
        tensor = torch.nn.functional.pad(tensor, (0, pad_w, 0, pad_h))
    return tensor, width, height


def export_pyramid(job: ExportJob) -> str:
    """Run the network and write six DFMT files plus a manifest.

    Returns the manifest path.
    """
    model = _load_model(job)
    tensor, width, height = _preprocess(job.image_path)
    padded_h, padded_w = tensor.shape[2], tensor.shape[3]

    captured: dict[str, torch.Tensor] = {}
    with torch.no_grad():
        x = tensor.to(job.device)
        for idx, module in enumerate(model):
            x = module(x)
            for name, tap in _TAPS.items():
                if idx == tap:
                    captured[name] = x

    os.makedirs(job.output_dir, exist_ok=True)
    files = {}
    for name in LAYER_NAMES:
        data = captured[name].squeeze(0).cpu().numpy()
        fname = f"{name}.dfmt"
        write_dfmt(os.path.join(job.output_dir, fname), data)
        files[name] = fname
    manifest_path = os.path.join(job.output_dir, "manifest.json")
    write_manifest(manifest_path, width, height, padded_w, padded_h, files)
    return manifest_path
