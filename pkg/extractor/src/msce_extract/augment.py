"""Image pre-processing and stochastic view augmentation.

Every image is first upsampled to 224/0.875 = 256 and center-cropped to
224 to match the pretrained transformer's input statistics. Stochastic
views then apply SimCLR-style augmentations on top. The exact stochastic
parameters are a reproduction variable; the defaults below are the usual
ones and can be disabled per flag.
"""

from torchvision import transforms

IMAGE_SIZE = 224
UPSAMPLE_SIZE = int(IMAGE_SIZE / 0.875)  # 256

# ImageNet statistics, as used by the pretrained backbone.
NORMALIZE = transforms.Normalize(mean=[0.485, 0.456, 0.406],
                                 std=[0.229, 0.224, 0.225])


def base_transform():
    """Deterministic pre-processing: upsample then center-crop."""
    return transforms.Compose([
        transforms.Resize(UPSAMPLE_SIZE,
                          interpolation=transforms.InterpolationMode.BILINEAR),
        transforms.CenterCrop(IMAGE_SIZE),
        transforms.ToTensor(),
        NORMALIZE,
    ])


def stochastic_transform():
    """One random view: pre-processing plus SimCLR-like augmentations."""
    return transforms.Compose([
        transforms.Resize(UPSAMPLE_SIZE,
                          interpolation=transforms.InterpolationMode.BILINEAR),
        transforms.CenterCrop(IMAGE_SIZE),
        transforms.RandomResizedCrop(IMAGE_SIZE, scale=(0.5, 1.0)),
        transforms.RandomHorizontalFlip(p=0.5),
        transforms.RandomApply(
            [transforms.ColorJitter(0.4, 0.4, 0.4, 0.1)], p=0.8),
        transforms.RandomGrayscale(p=0.2),
        transforms.ToTensor(),
        NORMALIZE,
    ])


def view_transform(stochastic=True):
    return stochastic_transform() if stochastic else base_transform()
