"""Pretrained backbone loading.

Named backbones resolve through torch.hub to the publicly released
self-supervised vision-transformer checkpoints; a filesystem path loads a
TorchScript module instead, for ablations with other encoders. Both paths
produce a module whose forward maps a (B, 3, 224, 224) batch to (B, D)
embeddings (the transformer's class-token output, un-normalized).
"""

from pathlib import Path

import torch

HUB_REPO = "facebookresearch/dino:main"
HUB_BACKBONES = {
    "dino_vitb16": 768,
    "dino_vits16": 384,
    "dino_resnet50": 2048,
}


class BackboneError(RuntimeError):
    """Backbone could not be obtained; the message says what to do."""


def expected_dim(identifier):
    return HUB_BACKBONES.get(identifier)


def load_backbone(identifier, device="cpu"):
    path = Path(identifier)
    if path.suffix in (".pt", ".pth") or path.exists():
        try:
            model = torch.jit.load(str(path), map_location=device)
        except Exception as err:
            raise BackboneError(
                f"could not load TorchScript backbone from {path}: {err}"
            ) from err
    elif identifier in HUB_BACKBONES:
        try:
            model = torch.hub.load(HUB_REPO, identifier)
        except Exception as err:
            raise BackboneError(
                f"could not download backbone {identifier!r} from "
                f"{HUB_REPO}: {err}. This needs network access on first "
                f"use; alternatively pass a local TorchScript file via "
                f"--backbone /path/to/model.pt"
            ) from err
    else:
        raise BackboneError(
            f"unknown backbone {identifier!r}; choose one of "
            f"{sorted(HUB_BACKBONES)} or pass a TorchScript file path"
        )
    model.eval()
    return model.to(device)
