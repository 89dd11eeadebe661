"""Image dataset -> MSCE embedding export.

For every image, V augmented views are pushed through the frozen backbone
and the resulting embeddings are written as one MSCE record together with
the true label. Single-process and seeded, so a given spec always produces
byte-identical output.
"""

from dataclasses import dataclass

import torch

from .augment import view_transform
from .backbone import BackboneError, expected_dim, load_backbone
from .writer import MsceWriter

DATASETS = ("cifar10", "cifar100")


class DatasetError(RuntimeError):
    """Dataset could not be obtained; the message says what to do."""


@dataclass
class ExtractionSpec:
    dataset: str
    split: str = "train"
    backbone: str = "dino_vitb16"
    views: int = 2
    batch_size: int = 256
    out: str = "embeddings.msce"
    seed: int = 0
    data_root: str = "./data"
    device: str = "cpu"
    stochastic: bool = True

    def __post_init__(self):
        if self.views < 1:
            raise ValueError(f"views must be >= 1, got {self.views}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be train or test, got {self.split!r}")


def check_dataset_name(name):
    if name not in DATASETS:
        raise DatasetError(
            f"unknown dataset {name!r}; choose one of {DATASETS}")


def load_dataset(spec):
    """Torchvision dataset of (PIL image, int label) pairs."""
    check_dataset_name(spec.dataset)
    from torchvision import datasets
    cls = datasets.CIFAR10 if spec.dataset == "cifar10" else datasets.CIFAR100
    try:
        return cls(root=spec.data_root, train=spec.split == "train",
                   download=True)
    except Exception as err:
        raise DatasetError(
            f"could not obtain {spec.dataset} ({spec.split}) under "
            f"{spec.data_root}: {err}. Downloading needs network access; "
            f"place the extracted torchvision files there to run offline."
        ) from err


def extract(spec, backbone=None, dataset=None):
    """Run the export described by `spec`; returns the output path.

    `backbone` and `dataset` may be passed directly (e.g. for tests or
    custom encoders); otherwise they are resolved from the spec.
    """
    torch.manual_seed(spec.seed)
    # Cheap name validation first, expensive downloads after.
    if dataset is None:
        check_dataset_name(spec.dataset)
    if backbone is None:
        backbone = load_backbone(spec.backbone, spec.device)
    if dataset is None:
        dataset = load_dataset(spec)
    transform = view_transform(spec.stochastic)

    # Probe the embedding width with the first image.
    first_img, _ = dataset[0]
    with torch.no_grad():
        probe = backbone(transform(first_img).unsqueeze(0).to(spec.device))
    dim = int(probe.shape[-1])
    want = expected_dim(spec.backbone)
    if want is not None and dim != want:
        raise BackboneError(
            f"backbone {spec.backbone!r} produced {dim}-dim embeddings, "
            f"expected {want}")

    # Reseed so the probe transform does not shift the augmentation stream.
    torch.manual_seed(spec.seed)
    n = len(dataset)
    with MsceWriter(spec.out, dim=dim, views=spec.views) as writer:
        for start in range(0, n, spec.batch_size):
            stop = min(start + spec.batch_size, n)
            labels = []
            stack = []
            for i in range(start, stop):
                img, label = dataset[i]
                labels.append(int(label))
                for _ in range(spec.views):
                    stack.append(transform(img))
            batch = torch.stack(stack).to(spec.device)
            with torch.no_grad():
                emb = backbone(batch).cpu()
            emb = emb.reshape(stop - start, spec.views, dim)
            for row, label in enumerate(labels):
                writer.add(emb[row].numpy(), label)
    return spec.out
