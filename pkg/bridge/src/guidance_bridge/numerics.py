"""Latent-space arithmetic shared with the engine, duplicated expression for
expression so an analytic bridge is bit-identical to the in-process oracle."""

import numpy as np


def scaled_linear_alpha_bar(num_steps=1000, beta_start=8.5e-4, beta_end=1.2e-2):
    betas = np.linspace(np.sqrt(beta_start), np.sqrt(beta_end), num_steps) ** 2
    return np.cumprod(1.0 - betas)


def overlap_weights(n_out: int, n_in: int) -> np.ndarray:
    if n_out > n_in:
        raise ValueError(f"upsampling requested ({n_in} -> {n_out})")
    w = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, n_in)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / scale


def image_to_latent(image: np.ndarray, latent_spec) -> np.ndarray:
    """(H, W, 3) -> float32 latent, area-averaged, constant 0.5 pad channel."""
    h, w, c = latent_spec
    image = np.asarray(image, dtype=np.float64)
    rows = overlap_weights(h, image.shape[0])
    cols = overlap_weights(w, image.shape[1])
    tmp = np.tensordot(rows, image, axes=(1, 0))
    down = np.transpose(np.tensordot(tmp, cols, axes=(1, 1)), (0, 2, 1))
    if c == 4:
        pad = np.full((h, w, 1), 0.5)
        down = np.concatenate([down, pad], axis=2)
    return np.asarray(down, dtype=np.float32)


def invert_noise_against_target(x_t, target_latent, alpha_bar_t) -> np.ndarray:
    a = np.float32(np.sqrt(alpha_bar_t))
    b = np.float32(np.sqrt(1.0 - alpha_bar_t))
    return (np.asarray(x_t, np.float32) - a * np.asarray(target_latent, np.float32)) / b


def composite_mask(image, mask, replacement) -> np.ndarray:
    image = np.asarray(image, np.float32)
    m = np.asarray(mask, np.float32)
    if m.ndim == 2:
        m = m[:, :, None]
    return image * (np.float32(1.0) - m) + np.asarray(replacement, np.float32) * m


def load_png_f32(path) -> np.ndarray:
    from PIL import Image

    img = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32)
    return img / np.float32(255.0)
