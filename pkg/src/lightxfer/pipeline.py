"""Dataset synthesis, training, evaluation, ablations, lighting transfer and scene compositing.

Training data pairs a clean-mesh render under source lighting (standing in
for a neural-field rendering of the object) with the shading of a roughened
copy of the object under new lighting, and the clean-mesh render under that
new lighting as the target.

Radiometric layers (I_s, S', I_t) are clamped to [0, 4] and scaled by 1/4
before they reach the network; D and R are already in [0, 1].
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .io import FormatError, read_json, read_pfm, write_json, write_pfm
from .losses import FeatureExtractor, LossConfig, combine, loss_config, loss_terms
from .mesh import TriMesh, bounding_radius, make_primitive, make_r3dm, make_ground, tessellate
from .metrics import SSIM_WINDOW, compute_metrics
from .network import Formulation, TransferModel, NetConfig, ShadingMode, build_model, forward
from .render import Camera, Light, Material, Scene, SceneObject, perturb_lighting, render_layers

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CLIP = 4.0
SCALE = 1.0 / CLIP
SHAPES = ("sphere", "box", "torus", "ellipsoid")
ELEMENTS = ("I_s", "S_prime", "I_t_bar", "D_bar", "R_bar", "M", "I_scene")
SUBSTITUTIONS = {
    "feature_extractor": "fixed-seed random conv pyramid in place of ImageNet VGG-19",
    "source_image": "clean-mesh render in place of neural-field rendering",
    "boundary_fill": "iterative neighbour diffusion in place of learned inpainting",
}


class TrainingError(RuntimeError):
    """Raised when training diverges."""


def derive_seed(master: int, *keys: int) -> int:
    """Stable 63-bit seed from a master seed and integer keys, independent of call order."""
    # the key count keeps (a, b) and (a, b, 0) apart; SeedSequence ignores trailing zeros
    state = np.random.SeedSequence([int(master), len(keys), *[int(k) for k in keys]]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 31 | int(state[1]) >> 1


def scale_layer(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, CLIP) * SCALE


# -- procedural scenes ------------------------------------------------------------

def shape_mesh(name: str) -> tuple[TriMesh, bool]:
    """Clean mesh for a named shape and whether it is shaded smoothly."""
    if name == "sphere":
        return make_primitive("icosphere", 1.0, subdiv=2), True
    if name == "box":
        return tessellate(make_primitive("box", 0.75), 2), False
    if name == "torus":
        return make_primitive("torus", 1.0, rings=24, sides=12), True
    if name == "ellipsoid":
        m = make_primitive("icosphere", 1.0, subdiv=2)
        return TriMesh(m.vertices * np.array([1.2, 0.7, 0.85]), m.faces), True
    raise ValueError(f"unknown shape {name!r}; choose from {SHAPES}")


def _on_ground(m: TriMesh, scale: float, x: float, z: float, rot: float) -> TriMesh:
    placed = m.transformed(scale=scale, rotate_y=rot)
    return placed.transformed(translate=(x, -placed.vertices[:, 1].min(), z))


def _random_material(rng) -> Material:
    return Material(
        albedo=tuple(float(c) for c in rng.uniform(0.2, 0.9, 3)),
        reflect_strength=float(rng.uniform(0.0, 0.5)),
        specular_exponent=float(rng.uniform(8.0, 64.0)),
        specular_scale=float(rng.uniform(0.0, 0.6)),
    )


@dataclass(frozen=True)
class GenConfig:
    scenes: int = 8
    shapes: tuple = SHAPES
    views: int = 16
    size: int = 64
    noise_sigma: float = 0.01  # fraction of the target's bounding radius
    subdiv: int = 1
    seed: int = 0
    energy_gain: tuple = (1.5, 2.5)
    light_jitter: float = 0.5
    test_scenes: int | None = None  # default: scenes // 4

    def __post_init__(self):
        object.__setattr__(self, "shapes", tuple(self.shapes))
        object.__setattr__(self, "energy_gain", tuple(float(g) for g in self.energy_gain))
        for s in self.shapes:
            if s not in SHAPES:
                raise ValueError(f"unknown shape {s!r}; choose from {SHAPES}")
        if self.scenes < 1 or self.views < 1 or not self.shapes:
            raise ValueError("scenes, views and shapes must be non-empty")
        if self.noise_sigma < 0 or self.subdiv < 0:
            raise ValueError("noise_sigma and subdiv must be >= 0")

    @property
    def n_test_scenes(self) -> int:
        return self.scenes // 4 if self.test_scenes is None else self.test_scenes

    def to_dict(self) -> dict:
        d = asdict(self)
        d["test_scenes"] = self.n_test_scenes
        return d


ROOM_HALF = 7.5
ROOM_HEIGHT = 6.0


def _room_shell(half: float, height: float) -> TriMesh:
    """Four walls and a ceiling around the floor square; shading is two-sided."""
    h, t = half, height
    v = np.array([[-h, 0, -h], [h, 0, -h], [h, 0, h], [-h, 0, h],
                  [-h, t, -h], [h, t, -h], [h, t, h], [-h, t, h]], dtype=np.float64)
    quads = [(0, 1, 5, 4), (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7), (4, 5, 6, 7)]
    faces = [f for a, b, c, d in quads for f in ((a, b, c), (a, c, d))]
    return TriMesh(v, np.array(faces))


def build_scene(gen: GenConfig, scene_idx: int, shape_idx: int):
    """Room with one target object, its occluders, point lights and ambient light.

    Returns ``(scene, target_centre)``.
    """
    rng = np.random.default_rng(derive_seed(gen.seed, 0, scene_idx))
    floor = SceneObject(
        make_ground(ROOM_HALF),
        Material(tuple(float(c) for c in rng.uniform(0.3, 0.8, 3)), float(rng.uniform(0.0, 0.3)), 16.0, 0.05),
    )
    shell = SceneObject(
        _room_shell(ROOM_HALF, ROOM_HEIGHT),
        Material(tuple(float(c) for c in rng.uniform(0.55, 0.9, 3)), 0.0, 8.0, 0.0),
        smooth=False,
    )
    lights = []
    for _ in range(int(rng.integers(1, 3))):
        ang, rad = rng.uniform(0, 2 * np.pi), rng.uniform(1.0, 3.5)
        pos = np.array([rad * np.cos(ang), rng.uniform(3.5, 5.0), rad * np.sin(ang)])
        # unit-ish irradiance at the room centre
        power = float(pos @ pos) * rng.uniform(0.7, 1.0)
        lights.append(Light("point", tuple(float(c) for c in pos), tuple(float(c) for c in rng.uniform(0.9, 1.1, 3) * power)))
    # stand-in for indoor indirect light; keeps shadowed shading well away from zero
    ambient = (float(rng.uniform(0.25, 0.45)),) * 3
    occluders = []
    for _ in range(int(rng.integers(1, 3))):
        mesh, smooth = shape_mesh(SHAPES[int(rng.integers(len(SHAPES)))])
        ang, rad = rng.uniform(0, 2 * np.pi), rng.uniform(1.5, 2.3)
        placed = _on_ground(mesh, rng.uniform(0.35, 0.6), rad * np.cos(ang), rad * np.sin(ang), rng.uniform(0, 2 * np.pi))
        occluders.append(SceneObject(placed, _random_material(rng), smooth))

    trng = np.random.default_rng(derive_seed(gen.seed, 1, scene_idx, shape_idx))
    mesh, smooth = shape_mesh(gen.shapes[shape_idx])
    target = _on_ground(mesh, 1.0, 0.0, 0.0, trng.uniform(0, 2 * np.pi))
    objects = (SceneObject(target, _random_material(trng), smooth), floor, shell, *occluders)
    centre = tuple(float(c) for c in 0.5 * (target.vertices.min(0) + target.vertices.max(0)))
    return Scene(objects=objects, lights=tuple(lights), ambient=ambient, target_object_index=0), centre


def _view_camera(gen: GenConfig, rng, centre) -> Camera:
    az = rng.uniform(0.0, 2 * np.pi)
    el = math.radians(rng.uniform(15.0, 45.0))
    dist = rng.uniform(4.5, 6.0)
    pos = np.array(centre) + dist * np.array([math.cos(el) * math.cos(az), math.sin(el), math.cos(el) * math.sin(az)])
    return Camera(tuple(float(c) for c in pos), centre, (0.0, 1.0, 0.0), 40.0, gen.size, gen.size)


def _target_lighting(scene: Scene, gen: GenConfig, seed: int) -> Scene:
    lit = perturb_lighting(scene, seed, gen.energy_gain, gen.light_jitter)
    lights = []
    for light in lit.lights:
        if light.kind == "point":
            # keep jittered lights inside the room and clear of the target
            lim = ROOM_HALF - 0.5
            x, y, z = light.vector
            pos = (min(max(x, -lim), lim), min(max(y, 3.0), ROOM_HEIGHT - 0.5), min(max(z, -lim), lim))
            light = Light(light.kind, tuple(float(c) for c in pos), light.intensity)
        lights.append(light)
    return replace(lit, lights=tuple(lights))


def _light_record(scene: Scene) -> list:
    return [{"kind": l.kind, "vector": list(l.vector), "intensity": list(l.intensity)} for l in scene.lights]


def render_sample(gen: GenConfig, scene_idx: int, shape_idx: int, view: int):
    """Render one training pair. Returns ``(images, record, source_layers, target_layers)``."""
    scene, centre = build_scene(gen, scene_idx, shape_idx)
    clean = scene.objects[scene.target_object_index].mesh
    noise_seed = derive_seed(gen.seed, 4, scene_idx, shape_idx)
    rough = make_r3dm(clean, gen.subdiv, gen.noise_sigma * bounding_radius(clean), noise_seed)
    cam = _view_camera(gen, np.random.default_rng(derive_seed(gen.seed, 2, scene_idx, shape_idx, view)), centre)
    light_seed = derive_seed(gen.seed, 3, scene_idx, shape_idx, view)
    target_scene = _target_lighting(scene, gen, light_seed)

    src = render_layers(scene, cam)
    tgt = render_layers(target_scene, cam, substitute_rough=rough)
    # training elements are object-only: everything outside the target mask is zero
    M = tgt.M
    images = {
        "I_s": scale_layer(src.I) * M,
        "S_prime": scale_layer(tgt.S_rough) * M,
        "I_t_bar": scale_layer(tgt.I) * M,
        "D_bar": src.D * M,
        "R_bar": src.R[:, :, :1] * M,
        "M": M,
        "I_scene": scale_layer(tgt.I),
    }
    record = {
        "scene": scene_idx,
        "shape": gen.shapes[shape_idx],
        "view": view,
        "seeds": {"noise": noise_seed, "light": light_seed},
        "camera": {"position": list(cam.position), "look_at": list(cam.look_at)},
        "source_lights": _light_record(scene),
        "target_lights": _light_record(target_scene),
        "ambient": list(scene.ambient),
        "composition_error": tgt.composition_error(),
        "source_composition_error": src.composition_error(),
    }
    return images, record, src, tgt


def generate_dataset(gen: GenConfig, out_dir) -> dict:
    """Render every (scene, shape, view) sample into `out_dir` and write ``manifest.json``."""
    out = Path(out_dir)
    (out / "samples").mkdir(parents=True, exist_ok=True)
    samples, failed = [], []
    n_shapes = len(gen.shapes)
    for scene_idx in range(gen.scenes):
        split = "test" if scene_idx >= gen.scenes - gen.n_test_scenes else "train"
        for shape_idx in range(n_shapes):
            for view in range(gen.views):
                index = (scene_idx * n_shapes + shape_idx) * gen.views + view
                try:
                    images, record, _, _ = render_sample(gen, scene_idx, shape_idx, view)
                except (ValueError, FloatingPointError) as exc:
                    log.warning("sample %d failed: %s", index, exc)
                    failed.append({"index": index, "reason": str(exc)})
                    continue
                files = {}
                for name in ELEMENTS:
                    rel = f"samples/{index:05d}_{name}.pfm"
                    write_pfm(out / rel, images[name])
                    files[name] = rel
                samples.append({"index": index, "split": split, "files": files, **record})
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": "dataset",
        "generator": gen.to_dict(),
        "scaling": {"clip": CLIP, "scale": SCALE, "scaled_layers": ["I_s", "S_prime", "I_t_bar", "I_scene"],
                    "masked_layers": ["I_s", "S_prime", "I_t_bar", "D_bar", "R_bar"]},
        "samples": samples,
        "failed": failed,
    }
    write_json(out / "manifest.json", manifest)
    return manifest


# -- loading --------------------------------------------------------------------

@dataclass
class Split:
    ids: list
    arrays: dict  # name -> (N, C, H, W) float32

    def __len__(self):
        return len(self.ids)

    def batch(self, idx) -> dict:
        return {k: v[idx] for k, v in self.arrays.items()}


@dataclass
class Dataset:
    root: Path
    manifest: dict
    splits: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return int(self.manifest["generator"]["size"])

    def split(self, name: str) -> Split:
        if name not in self.splits or len(self.splits[name]) == 0:
            raise ValueError(f"dataset {self.root} has no {name!r} samples")
        return self.splits[name]

    def fingerprint(self) -> str:
        return hashlib.sha256((self.root / "manifest.json").read_bytes()).hexdigest()


def load_dataset(root) -> Dataset:
    """Load a generated dataset; every referenced file must exist and parse."""
    root = Path(root)
    path = root / "manifest.json"
    if not path.exists():
        raise FormatError(f"{root}: no manifest.json")
    manifest = read_json(path)
    if manifest.get("schema_version") != SCHEMA_VERSION or manifest.get("kind") != "dataset":
        raise FormatError(f"{path}: not a version-{SCHEMA_VERSION} dataset manifest")
    grouped: dict = {}
    for rec in manifest["samples"]:
        entry = grouped.setdefault(rec["split"], {"ids": [], **{k: [] for k in ELEMENTS}})
        entry["ids"].append(rec["index"])
        for name in ELEMENTS:
            f = root / rec["files"][name]
            if not f.exists():
                raise FormatError(f"{f}: referenced by manifest but missing")
            entry[name].append(read_pfm(f).transpose(2, 0, 1))
    splits = {
        s: Split(g["ids"], {k: np.stack(g[k]).astype(np.float32) for k in ELEMENTS}) for s, g in grouped.items()
    }
    return Dataset(root, manifest, splits)


# -- training ---------------------------------------------------------------------

def _targets(batch: dict) -> dict:
    return {"D_bar": batch["D_bar"], "R_bar": batch["R_bar"], "I_t_bar": batch["I_t_bar"]}


def split_loss(model: TransferModel, split: Split, loss_cfg: LossConfig, extractor, batch_size: int = 8) -> dict:
    """Mean total loss and per-term means over a whole split, without recording a graph."""
    sums: dict = {}
    n = len(split)
    with ad.no_grad():
        for s in range(0, n, batch_size):
            b = split.batch(slice(s, s + batch_size))
            fwd = forward(model, b["I_s"], b["S_prime"])
            terms = loss_terms(fwd, _targets(b), loss_cfg, extractor)
            terms["total"] = combine(terms, loss_cfg)
            k = len(b["I_s"])
            for name, t in terms.items():
                sums[name] = sums.get(name, 0.0) + t.item() * k
    return {k: v / n for k, v in sums.items()}


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 2


def train(data: Dataset, net_cfg: NetConfig, loss_cfg: LossConfig, epochs: int | None = 1, seed: int = 0,
          steps: int | None = None, optim: OptimConfig = OptimConfig(), extractor_seed: int = 1234,
          split: str = "train", eval_split: str | None = "test"):
    """Adam-train a fresh model on `split`.

    Runs `steps` updates when given, else `epochs` full passes. Returns the
    model and a run manifest with the per-epoch loss log and, when the dataset
    has an `eval_split`, the final mean metrics on it.
    """
    train_split = data.split(split)
    if net_cfg.input_size != data.size:
        raise ValueError(f"network input size {net_cfg.input_size} != dataset image size {data.size}")
    model = build_model(net_cfg, seed)
    extractor = FeatureExtractor(extractor_seed)
    opt = ad.Adam(model.parameters(), optim.lr, optim.betas, optim.eps)
    rng = np.random.default_rng(derive_seed(seed, 5))
    n, bs = len(train_split), optim.batch_size
    per_epoch = math.ceil(n / bs)
    total_steps = steps if steps is not None else epochs * per_epoch
    order_hash = hashlib.sha256()
    epochs_log = []
    step = 0
    epoch = 0
    while step < total_steps:
        perm = rng.permutation(n)
        order_hash.update(perm.astype("<i8").tobytes())
        sums: dict = {}
        count = 0
        for s in range(0, n, bs):
            if step >= total_steps:
                break
            b = train_split.batch(perm[s:s + bs])
            fwd = forward(model, b["I_s"], b["S_prime"])
            terms = loss_terms(fwd, _targets(b), loss_cfg, extractor)
            total = combine(terms, loss_cfg)
            value = total.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at epoch {epoch}, step {step}")
            opt.zero_grad()
            total.backward()
            opt.step()
            for name, t in terms.items():
                sums[name] = sums.get(name, 0.0) + t.item()
            sums["total"] = sums.get("total", 0.0) + value
            count += 1
            step += 1
        epochs_log.append({"epoch": epoch, "steps": count, **{f"mean_{k}": v / count for k, v in sums.items()}})
        log.info("epoch %d: mean total loss %.5f", epoch, sums["total"] / count)
        epoch += 1
    final_metrics = None
    if eval_split is not None and len(data.splits.get(eval_split, ())) > 0:
        final_metrics = evaluate(model, data, eval_split)["full"]["mean"]
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": "run",
        "config": {
            "net": net_cfg.to_dict(),
            "loss": loss_cfg.to_dict(),
            "optimizer": {"name": "adam", **asdict(optim)},
            "seed": seed,
            "extractor_seed": extractor_seed,
            "steps": total_steps,
            "split": split,
            "substitutions": SUBSTITUTIONS,
            "dataset": data.fingerprint(),
        },
        "epochs": epochs_log,
        "data_order_hash": order_hash.hexdigest(),
        "final_loss": epochs_log[-1]["mean_total"] if epochs_log else None,
        "final_metrics": final_metrics,
    }
    return model, manifest


# -- inference and evaluation --------------------------------------------------------

def predict(model: TransferModel, I_s: np.ndarray, S_prime: np.ndarray, batch_size: int = 8) -> np.ndarray:
    """Network output I_t for NCHW inputs, unclamped."""
    outs = []
    with ad.no_grad():
        for s in range(0, len(I_s), batch_size):
            outs.append(forward(model, I_s[s:s + batch_size], S_prime[s:s + batch_size]).I_t.data)
    return np.concatenate(outs)


def _hwc(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=np.float64).transpose(1, 2, 0)


def _summarise(rows: list) -> dict:
    keys = ("l1_norm", "psnr", "ssim", "lab_angle")
    return {k: float(np.mean([r[k] for r in rows])) for k in keys}


def evaluate_predictions(pred: np.ndarray, split: Split, masked: bool = False) -> dict:
    """Metrics between clamped predictions and ground truth for every sample of `split`."""
    full_rows, mask_rows = [], []
    for i, sid in enumerate(split.ids):
        p = np.clip(_hwc(pred[i]), 0.0, 1.0)
        t = _hwc(split.arrays["I_t_bar"][i])
        rep = compute_metrics(p, t)
        full_rows.append({"id": sid, "l1_norm": rep.l1_norm, "psnr": rep.psnr, "ssim": rep.ssim,
                          "lab_angle": rep.lab_angle, "pixel_count": rep.pixel_count})
        if masked:
            m = _hwc(split.arrays["M"][i])
            r = SSIM_WINDOW // 2
            if m[r:-r, r:-r].max() > 0.5:
                mrep = compute_metrics(p, t, m)
                mask_rows.append({"id": sid, "l1_norm": mrep.l1_norm, "psnr": mrep.psnr, "ssim": mrep.ssim,
                                  "lab_angle": mrep.lab_angle, "pixel_count": mrep.pixel_count})
    report = {"full": {"mean": _summarise(full_rows), "rows": full_rows}}
    if masked:
        report["masked"] = {"mean": _summarise(mask_rows) if mask_rows else None, "rows": mask_rows}
    return report


def evaluate(model: TransferModel, data: Dataset, split: str = "test", masked: bool = False) -> dict:
    """Per-sample and mean L1-Norm, PSNR, SSIM and Lab angle of the model's I_t against the ground truth."""
    s = data.split(split)
    if model.config.input_size != data.size:
        raise ValueError(f"model input size {model.config.input_size} != dataset image size {data.size}")
    # same convention as transfer(): nothing is predicted outside the mask
    pred = predict(model, s.arrays["I_s"], s.arrays["S_prime"]) * s.arrays["M"]
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "evaluation",
        "split": split,
        "n_samples": len(s),
        "model": model.config.to_dict(),
        **evaluate_predictions(pred, s, masked),
    }


# -- ablations ------------------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    name: str
    formulation: str = "full"
    shading: str = "residual"
    loss: str = "full"


ABLATION_CELLS = (
    Cell("D*S", "ds"),
    Cell("(D+R)*S", "drs"),
    Cell("(D+R)*S+a", "drs+a"),
    Cell("(D+R+a)*(S'+S'r)"),
    Cell("(D+R+a)*S'", shading="raw"),
    Cell("(D+R+a)*S*", shading="direct"),
    Cell("L1", loss="l1"),
    Cell("FR", loss="fr"),
    Cell("FR+DSSIM", loss="fr+dssim"),
    Cell("FR+DSSIM+Lab+L1", loss="full+l1"),
)


def run_ablation(data: Dataset, cells=ABLATION_CELLS, seed: int = 0, steps: int | None = None, epochs: int = 1,
                 base_channels: int = 16, depth: int = 3, eval_split: str = "test") -> dict:
    """Train one model per cell on identical data, order and seeds; evaluate each on `eval_split`."""
    data.split(eval_split)
    if not cells:
        raise ValueError("no ablation cells given")
    rows = []
    for cell in cells:
        net_cfg = NetConfig(base_channels, depth, data.size, Formulation(cell.formulation), ShadingMode(cell.shading))
        _, run = train(data, net_cfg, loss_config(cell.loss), epochs=epochs, seed=seed, steps=steps,
                       eval_split=eval_split)
        rows.append({**asdict(cell), "metrics": run["final_metrics"], "final_loss": run["final_loss"],
                     "data_order_hash": run["data_order_hash"]})
        log.info("ablation cell %s: %s", cell.name, run["final_metrics"])
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "ablation",
        "seed": seed,
        "steps": steps,
        "cells": rows,
        "identical_data_order": len({r["data_order_hash"] for r in rows}) <= 1,
    }


# -- transfer and compositing ---------------------------------------------------------

def transfer(model: TransferModel, I_s, S_prime, M) -> np.ndarray:
    """Transfer lighting from ``S' * M`` onto ``I_s * M``; pixels outside M are zero.

    Inputs are ``(H, W, C)`` arrays already scaled per the dataset contract.
    The result is clamped to [0, 1].
    """
    I_s = np.asarray(I_s, dtype=np.float32)
    S_prime = np.asarray(S_prime, dtype=np.float32)
    M = np.asarray(M, dtype=np.float32)
    if M.ndim == 2:
        M = M[:, :, None]
    if I_s.shape != S_prime.shape or I_s.shape[:2] != M.shape[:2] or I_s.shape[2] != 3:
        raise ValueError(f"transfer: shape mismatch I_s {I_s.shape}, S' {S_prime.shape}, M {M.shape}")
    x = (I_s * M).transpose(2, 0, 1)[None]
    s = (S_prime * M).transpose(2, 0, 1)[None]
    out = predict(model, x, s)[0].transpose(1, 2, 0)
    return np.clip(np.nan_to_num(out * M, nan=0.0, posinf=1.0, neginf=0.0), 0.0, 1.0)


def diffusion_fill(img: np.ndarray, holes: np.ndarray, tol: float = 1e-6, max_iter: int = 2000) -> np.ndarray:
    """Fill `holes` by repeatedly averaging valid 4-neighbours until the update stalls."""
    out = np.array(img, dtype=np.float64)
    holes = np.asarray(holes, dtype=bool)
    out[holes] = 0.0
    known = ~holes
    for _ in range(max_iter):
        pad_v = np.pad(out, ((1, 1), (1, 1), (0, 0)))
        pad_k = np.pad(known, 1).astype(np.float64)
        total = sum(pad_v[1 + dy:pad_v.shape[0] - 1 + dy, 1 + dx:pad_v.shape[1] - 1 + dx] *
                    pad_k[1 + dy:pad_k.shape[0] - 1 + dy, 1 + dx:pad_k.shape[1] - 1 + dx, None]
                    for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)))
        cnt = sum(pad_k[1 + dy:pad_k.shape[0] - 1 + dy, 1 + dx:pad_k.shape[1] - 1 + dx]
                  for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)))
        upd = holes & (cnt > 0)
        new = np.where(upd[:, :, None], total / np.maximum(cnt, 1)[:, :, None], out)
        change = np.abs(new - out).max() if upd.any() else 0.0
        newly_known = upd & ~known
        out = new
        known = known | upd
        if change < tol and not newly_known.any():
            break
    return out


def composite_scene(I_pbr, M, I_t, fill: str = "none", invalid=None) -> np.ndarray:
    """``I_pbr * (1 - M) + M * I_t``.

    With ``fill="diffusion"``, pixels inside M whose transferred value is
    flagged in `invalid` (default: non-finite) are filled from their neighbours.
    """
    I_pbr = np.asarray(I_pbr, dtype=np.float64)
    I_t = np.asarray(I_t, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 2:
        M = M[:, :, None]
    if I_pbr.shape != I_t.shape or M.shape[:2] != I_pbr.shape[:2] or M.shape[2] != 1:
        raise ValueError(f"composite: shape mismatch I_pbr {I_pbr.shape}, M {M.shape}, I_t {I_t.shape}")
    if fill not in ("none", "diffusion"):
        raise ValueError(f"unknown fill mode {fill!r}")
    bad = ~np.all(np.isfinite(I_t), axis=2) if invalid is None else np.asarray(invalid, dtype=bool)
    holes = bad & (M[:, :, 0] > 0.5)
    if fill == "none" or not holes.any():
        return I_pbr * (1.0 - M) + M * I_t
    out = I_pbr * (1.0 - M) + M * np.where(bad[:, :, None], 0.0, I_t)
    return diffusion_fill(out, holes)
