"""Stage III: label-to-image generation with GAN and feature-pyramid losses.

The generator maps one-hot layout + patch conditioning to RGB; a
downsampling discriminator scores realism; a frozen random conv pyramid
supplies the multi-level feature distances. Loss formulas are kept in one
place here so the accounting identity (total equals the sum of reported
parts) is checked against these exact tensors.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError
from .nn import Block, Conv, InstanceNorm, avg_pool2
from .segnet import ResBlock, place_patch

ADV_CLIP = 1e-12


def one_hot_labels(labels: np.ndarray, n_classes: int) -> np.ndarray:
    """(C, H, W) indicator planes from an (H, W) class grid."""
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= n_classes:
        raise ContractError(f"label outside [0, {n_classes})")
    planes = np.zeros((n_classes,) + labels.shape)
    h_idx, w_idx = np.indices(labels.shape)
    planes[labels, h_idx, w_idx] = 1.0
    return planes


class GeneratorNet(Block):
    """Encoder-decoder from (|C|+4, H, W) conditioning to sigmoid RGB.

    Long skip connections carry the half-resolution features and the raw
    conditioning planes into the decoder; without them the bottleneck has
    to re-encode the observed patch and the known region comes out blurry.
    """

    def __init__(self, n_classes: int, seed: int, base: int = 8,
                 blocks: int = 2, name: str = "stage3.gen"):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.n_classes = n_classes
        cin = n_classes + 4
        w1, w2 = base, base * 2
        self.d1 = Conv(f"{name}.d1", cin, w1, rng)
        self.n1 = InstanceNorm(f"{name}.n1", w1)
        self.d2 = Conv(f"{name}.d2", w1, w2, rng)
        self.n2 = InstanceNorm(f"{name}.n2", w2)
        self.blocks = [ResBlock(f"{name}.res{i}", w2, rng) for i in range(blocks)]
        self.u1 = Conv(f"{name}.u1", w2, w1, rng)
        self.n3 = InstanceNorm(f"{name}.n3", w1)
        self.u2 = Conv(f"{name}.u2", w1 * 2, w1, rng)
        self.n4 = InstanceNorm(f"{name}.n4", w1)
        # pointwise path over the raw conditioning; a wide 1x1 hidden layer
        # maps each observed pixel onto its output logit without spatial
        # mixing, so the known region can be reproduced without blur
        self.skip = Conv(f"{name}.skip", cin, w2, rng, k=1)
        self.out = Conv(f"{name}.out", w1 + w2 + cin, 3, rng, k=1,
                        gain="linear")
        self._children = ([self.d1, self.n1, self.d2, self.n2]
                          + self.blocks
                          + [self.u1, self.n3, self.u2, self.n4,
                             self.skip, self.out])

    def __call__(self, x: T.Tensor) -> T.Tensor:
        h, w = x.shape[-2], x.shape[-1]
        if h % 4 or w % 4 or h < 8 or w < 8:
            raise ConfigError(f"generator canvas {h}x{w} must be a multiple "
                              "of 4 and at least 8x8")
        e1 = T.relu(self.n1(avg_pool2(self.d1(x))))
        e2 = T.relu(self.n2(avg_pool2(self.d2(e1))))
        for b in self.blocks:
            e2 = b(e2)
        d = T.relu(self.n3(self.u1(T.upsample_nearest(e2, 2))))
        d = T.relu(self.n4(self.u2(T.upsample_nearest(
            T.concat([d, e1], axis=-3), 2))))
        s = T.relu(self.skip(x))
        return T.sigmoid(self.out(T.concat([d, s, x], axis=-3)))


class DiscriminatorNet(Block):
    """Downsampling conv stack ending in one sigmoid realism score per image."""

    def __init__(self, seed: int, base: int = 8, name: str = "stage3.disc"):
        super().__init__()
        rng = np.random.default_rng(seed)
        w1, w2, w3 = base, base * 2, base * 4
        self.c1 = Conv(f"{name}.c1", 3, w1, rng)
        self.c2 = Conv(f"{name}.c2", w1, w2, rng)
        self.n2 = InstanceNorm(f"{name}.in2", w2)
        self.c3 = Conv(f"{name}.c3", w2, w3, rng)
        self.n3 = InstanceNorm(f"{name}.in3", w3)
        self.w3 = w3
        # spatial average then linear, so any lawful canvas size works
        self.fc_w = T.Parameter(f"{name}.fc.w", rng.standard_normal((w3, 1)) / np.sqrt(w3))
        self.fc_b = T.Parameter(f"{name}.fc.b", np.zeros(1))
        self._children = [self.c1, self.c2, self.n2, self.c3, self.n3]
        self._params = [self.fc_w, self.fc_b]

    def __call__(self, batch: T.Tensor) -> T.Tensor:
        """(N, 3, H, W) images to (N, 1) probabilities in (0, 1)."""
        if batch.ndim != 4 or batch.shape[1] != 3:
            raise ContractError(f"discriminator wants (N, 3, H, W), "
                                f"got {batch.shape}")
        h, w = batch.shape[-2], batch.shape[-1]
        if h % 8 or w % 8 or h < 16 or w < 16:
            raise ConfigError(f"discriminator canvas {h}x{w} must be a "
                              "multiple of 8 and at least 16x16")
        x = T.leaky_relu(avg_pool2(self.c1(batch)))
        x = T.leaky_relu(self.n2(avg_pool2(self.c2(x))))
        x = T.leaky_relu(self.n3(avg_pool2(self.c3(x))))
        pooled = T.reduce_mean(x, axis=(-2, -1))  # (N, w3)
        return T.sigmoid(T.add(T.matmul(pooled, self.fc_w), self.fc_b))


class FeaturePyramid:
    """Four frozen random conv stages, each halving the grid.

    Weights are plain arrays seeded once; they never train, so feature
    distances act as fixed random projections of local structure.
    """

    def __init__(self, seed: int = 0, base: int = 6, levels: int = 4):
        rng = np.random.default_rng(seed)
        self.levels = levels
        self.kernels = []
        cin = 3
        for i in range(levels):
            cout = base * (i + 1)
            k = rng.standard_normal((cout, cin, 3, 3)) * np.sqrt(2.0 / (cin * 9))
            self.kernels.append(T.Tensor(k))
            cin = cout

    def features(self, img: T.Tensor) -> list[T.Tensor]:
        if img.ndim != 3 or img.shape[0] != 3:
            raise ContractError(f"pyramid wants a (3, H, W) image, got {img.shape}")
        h, w = img.shape[-2], img.shape[-1]
        scale = 2 ** self.levels
        if h % scale or w % scale:
            raise ConfigError(f"pyramid input {h}x{w} must be divisible "
                              f"by {scale}")
        out = []
        x = img
        for k in self.kernels:
            x = avg_pool2(T.relu(T.conv2d(x, k, stride=1, padding=1)))
            out.append(x)
        return out


def perceptual_loss(x: T.Tensor, x_hat: T.Tensor,
                    pyramid: FeaturePyramid) -> T.Tensor:
    """Sum over levels of the mean squared feature difference."""
    if x.shape != x_hat.shape:
        raise ContractError(f"image shapes differ: {x.shape} vs {x_hat.shape}")
    fa = pyramid.features(x)
    fb = pyramid.features(x_hat)
    total = None
    for a, b in zip(fa, fb):
        d = T.sub(a, b)
        level = T.reduce_mean(T.mul(d, d))
        total = level if total is None else T.add(total, level)
    return total


def adversarial_losses(disc: DiscriminatorNet, real: T.Tensor,
                       fake: T.Tensor):
    """(d_loss, g_loss) from Bernoulli log-likelihoods.

    The discriminator loss sees the fake batch detached; the generator loss
    is the non-saturating -log D(fake).
    """
    if real.shape[0] == 0 or fake.shape[0] == 0:
        raise ContractError("adversarial losses need non-empty batches")
    lo, hi = ADV_CLIP, 1.0 - ADV_CLIP
    d_real = T.clip(disc(real), lo, hi)
    d_fake_detached = T.clip(disc(fake.detach()), lo, hi)
    d_loss = T.sub(0.0, T.add(T.reduce_mean(T.log(d_real)),
                              T.reduce_mean(T.log(T.sub(1.0, d_fake_detached)))))
    d_fake = T.clip(disc(fake), lo, hi)
    g_loss = T.sub(0.0, T.reduce_mean(T.log(d_fake)))
    return d_loss, g_loss


def reconstruction_loss(x: T.Tensor, x_hat: T.Tensor) -> T.Tensor:
    """Mean squared error over all 3·H·W values."""
    if x.shape != x_hat.shape:
        raise ContractError(f"image shapes differ: {x.shape} vs {x_hat.shape}")
    d = T.sub(x, x_hat)
    return T.reduce_mean(T.mul(d, d))


def total_loss(x: T.Tensor, x_hat: T.Tensor, g_adv, lam: float,
               pyramid: FeaturePyramid | None = None):
    """Combined image objective and its parts.

    Returns (total, parts) where parts maps name -> scalar Tensor and the
    total is built by summing the parts in a fixed order (recon, adv,
    perceptual), so total.item() == sum of part items bit for bit.
    """
    if lam < 0:
        raise ConfigError(f"adversarial weight must be >= 0, got {lam}")
    parts = {"recon": reconstruction_loss(x, x_hat)}
    total = parts["recon"]
    if g_adv is not None and lam > 0:
        parts["adv"] = T.mul(g_adv, lam)
        total = T.add(total, parts["adv"])
    if pyramid is not None:
        parts["perceptual"] = perceptual_loss(x, x_hat, pyramid)
        total = T.add(total, parts["perceptual"])
    return total, parts


class Stage3Model(Block):
    """Generator plus the conditioning assembly used at inference."""

    def __init__(self, n_classes: int, seed: int = 0, base: int = 8,
                 blocks: int = 2):
        super().__init__()
        self.n_classes = n_classes
        self.gen = GeneratorNet(n_classes, seed, base=base, blocks=blocks)
        self._children = [self.gen]

    def forward(self, labels: np.ndarray, patch=None, offset_x: int = 0,
                offset_y: int = 0) -> T.Tensor:
        labels = np.asarray(labels)
        h, w = labels.shape
        planes = one_hot_labels(labels, self.n_classes)
        canvas, known = place_patch(patch, offset_x, offset_y, h, w)
        x = T.Tensor(np.concatenate([planes, canvas, known], axis=0))
        return self.gen(x)
