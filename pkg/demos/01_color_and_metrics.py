"""Lab conversion and the four image metrics on small synthetic images."""

import numpy as np

from lightxfer.color import lab_to_rgb, linear_to_srgb, rgb_to_lab, srgb_to_linear
from lightxfer.metrics import compute_metrics, lab_angle, psnr, ssim

# reference white, black and mid gray
for rgb in ([1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [0.18, 0.18, 0.18]):
    lab = rgb_to_lab(np.array([[rgb]]))[0, 0]
    print(rgb, "->", np.round(lab, 3))

# round trip through Lab
rng = np.random.default_rng(0)
img = rng.random((16, 16, 3))
back = lab_to_rgb(rgb_to_lab(img))
print("max round-trip error:", np.abs(back - img).max())

# sRGB transfer curve
codes = np.linspace(0, 1, 5)
print("sRGB -> linear:", np.round(srgb_to_linear(codes), 4))
print("and back:", np.round(linear_to_srgb(srgb_to_linear(codes)), 4))

# metrics against a noisy copy
noisy = np.clip(img + rng.normal(0, 0.05, img.shape), 0, 1)
print("PSNR", round(psnr(img, noisy), 2), "dB")
print("SSIM", round(ssim(rng.random((32, 32, 3)), rng.random((32, 32, 3))), 4), "(unrelated noise)")

# the Lab angle ignores overall brightness more than hue
darker = img * 0.5
tinted = img * np.array([1.0, 0.6, 0.6])
print("angle to a darker copy:", round(lab_angle(img, darker), 4))
print("angle to a tinted copy:", round(lab_angle(img, tinted), 4))

# everything at once, restricted to a mask
mask = np.zeros((16, 16), bool)
mask[4:12, 4:12] = True
print(compute_metrics(img, noisy, mask).to_dict())
