"""Semi-supervised adversarial classifier for hyperspectral cuboids.

A (1+n_y)-way softmax discriminator built from spectral then spatial
convolution blocks is trained against a generator built from the transposed
counterparts. The discriminator loss is the sum of a supervised term over
labeled cubes, a real-vs-fake term over real cubes, and a fake-detection
term over synthetic cubes; the generator minimizes the discriminator's
real-belief penalty on its own output. Training alternates one Adam update
of the discriminator with one of the generator, fresh noise for each.

Entry 0 of every prediction vector is the fake probability; entries 1..n_y
are class probabilities. All losses and softmax outputs are float64; layer
parameters and activations are float32.
"""

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from hsigancrf import tensors as T
from hsigancrf.errors import ContractError, FormatError, ShapeError

SPECTRAL_K = 7
SPATIAL_K = 3

CHECKPOINT_MAGIC = b"GANC"
CHECKPOINT_VERSION = 1
LOSS_FIELDS = ("step", "l_sup", "l_d1", "l_d2", "l_semi", "l_g")


# ---------------------------------------------------------------------------
# model construction
# ---------------------------------------------------------------------------


@dataclass
class GanModel:
    disc_layers: list
    gen_layers: list
    n_y: int
    bands: int
    w: int
    noise_dim: int
    k: int
    arch: tuple

    def named_layers(self):
        for i, p in enumerate(self.disc_layers):
            yield f"d{i}", p
        for i, p in enumerate(self.gen_layers):
            yield f"g{i}", p

    def params(self):
        """Trainable arrays keyed by '<layer>.<name>', fixed order."""
        out = {}
        for tag, layer in self.named_layers():
            for name, arr in layer.param_arrays():
                out[f"{tag}.{name}"] = arr
        return out

    def disc_params(self):
        return {k: v for k, v in self.params().items() if k.startswith("d")}

    def gen_params(self):
        return {k: v for k, v in self.params().items() if k.startswith("g")}


def _gaussian(rng, shape, fan_in):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)


def _with_bn(p, c):
    p.bn_gamma = np.ones(c, dtype=np.float32)
    p.bn_beta = np.zeros(c, dtype=np.float32)
    p.bn_running_mean = np.zeros(c, dtype=np.float32)
    p.bn_running_var = np.ones(c, dtype=np.float32)
    return p


def gen_band_seed(bands, n_spectral):
    """Starting band count so the stride-2 transposed spectral chain reaches
    at least ``bands`` before the center crop."""
    doubled = 2 ** (n_spectral - 1)
    grown = 5 * (doubled - 1)
    return max(1, -(-(bands - grown) // doubled))


def build_model(n_y, bands, *, k=24, arch=(3, 3), noise_dim=200, w=9, rng=None):
    """Assemble discriminator and generator layer stacks.

    arch = (n_spectral, n_spatial) for the discriminator; the generator uses
    n_spectral transposed spectral layers and n_spatial+1 transposed spatial
    layers, so the cuboid width must equal 2*(n_spatial+1)+1.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    ds, dp = arch
    if ds < 1 or dp < 1:
        raise ContractError(f"arch must have at least one layer per stage, got {arch}")
    if n_y < 2:
        raise ContractError(f"need at least 2 classes, got {n_y}")
    gp = dp + 1
    if w != 2 * gp + 1:
        raise ContractError(
            f"cuboid width {w} does not fit the {ds}+{dp} topology; "
            f"the generator's {gp} spatial stages produce width {2 * gp + 1}"
        )
    same_pad = (SPECTRAL_K - 1) // 2

    disc = []
    c = 1
    b = bands
    for i in range(ds):
        stride, pad = (2, 0) if i == 0 else (1, same_pad)
        p = T.LayerParams(
            kind="spectral",
            kernel=_gaussian(rng, (SPECTRAL_K, c, k), SPECTRAL_K * c),
            bias=np.zeros(k, dtype=np.float32),
            stride=(1, stride), padding=(0, pad),
        )
        disc.append(_with_bn(p, k))
        b = (b + 2 * pad - SPECTRAL_K) // stride + 1
        if b < 1:
            raise ShapeError(f"band axis exhausted after spectral layer {i}: {b}")
        c = k
    depth = b * k
    c = depth
    for i in range(dp):
        p = T.LayerParams(
            kind="spatial",
            kernel=_gaussian(rng, (SPATIAL_K, SPATIAL_K, c, k), SPATIAL_K * SPATIAL_K * c),
            bias=np.zeros(k, dtype=np.float32),
            stride=(1, 1), padding=(1, 0),
        )
        disc.append(_with_bn(p, k))
        c = k
    flat = w * w * k
    disc.append(T.LayerParams(
        kind="dense",
        kernel=_gaussian(rng, (flat, 1 + n_y), flat),
        bias=np.zeros(1 + n_y, dtype=np.float32),
    ))

    b0 = gen_band_seed(bands, ds)
    gen = []
    proj = T.LayerParams(
        kind="dense",
        kernel=_gaussian(rng, (noise_dim, b0 * k), noise_dim),
        bias=np.zeros(b0 * k, dtype=np.float32),
    )
    gen.append(_with_bn(proj, k))
    for i in range(ds):
        last = i == ds - 1
        stride, pad = (1, same_pad) if last else (2, 0)
        p = T.LayerParams(
            kind="tspectral",
            kernel=_gaussian(rng, (SPECTRAL_K, k, k), SPECTRAL_K * k),
            bias=np.zeros(k, dtype=np.float32),
            stride=(1, stride), padding=(0, pad),
        )
        gen.append(_with_bn(p, k))
    c = bands * k
    for i in range(gp):
        last = i == gp - 1
        co = bands if last else k
        p = T.LayerParams(
            kind="tspatial",
            kernel=_gaussian(rng, (SPATIAL_K, SPATIAL_K, c, co), SPATIAL_K * SPATIAL_K * c),
            bias=np.zeros(co, dtype=np.float32),
            stride=(1, 1), padding=(0, 0),
        )
        gen.append(p if last else _with_bn(p, co))
        c = co

    return GanModel(disc_layers=disc, gen_layers=gen, n_y=n_y, bands=bands,
                    w=w, noise_dim=noise_dim, k=k, arch=(ds, dp))


# ---------------------------------------------------------------------------
# cuboid batches
# ---------------------------------------------------------------------------

BATCH_KINDS = ("labeled_real", "unlabeled_real", "synthetic")


@dataclass
class CuboidBatch:
    """A stack of (w, w, bands) cubes with optional labels in [1..n_y]."""

    cubes: np.ndarray
    kind: str
    labels: np.ndarray = None

    def __post_init__(self):
        if self.kind not in BATCH_KINDS:
            raise ContractError(f"batch kind {self.kind!r} not in {BATCH_KINDS}")
        self.cubes = np.asarray(self.cubes)
        if self.cubes.dtype not in (np.float32, np.float64):
            self.cubes = self.cubes.astype(np.float32)
        if self.cubes.ndim != 4:
            raise ShapeError(f"cubes must be (n, w, w, bands), got ndim={self.cubes.ndim}")
        if self.cubes.shape[1] != self.cubes.shape[2]:
            raise ShapeError(f"cubes must be square, got {self.cubes.shape[1:3]}")
        if self.cubes.shape[1] % 2 == 0:
            raise ContractError(f"cuboid width {self.cubes.shape[1]} must be odd")
        if self.kind == "labeled_real":
            if self.labels is None or len(self.labels) != len(self.cubes):
                raise ContractError("labeled_real batches need one label per cube")
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.min(initial=1) < 1:
                raise ContractError("labels must be in [1..n_y]")
        elif self.labels is not None:
            raise ContractError(f"{self.kind} batches must not carry labels")

    def __len__(self):
        return len(self.cubes)


# ---------------------------------------------------------------------------
# forward / backward machinery
# ---------------------------------------------------------------------------

_FWD = {
    "spectral": T.conv_spectral,
    "spatial": T.conv_spatial,
    "tspectral": T.tconv_spectral,
    "tspatial": T.tconv_spatial,
}
_BWD = {
    "spectral": T.conv_spectral_backward,
    "spatial": T.conv_spatial_backward,
    "tspectral": T.tconv_spectral_backward,
    "tspatial": T.tconv_spatial_backward,
}


def _block_forward(x, p, act, mode, update_running):
    pre = _FWD[p.kind](x, p)
    if p.has_bn():
        normed, bn_cache = T.batchnorm(pre, p, mode, update_running=update_running)
    else:
        normed, bn_cache = pre, None
    out = T.activate(act, normed)
    return out, (x, pre, bn_cache, normed, act)


def _block_backward(p, cache, grad, want_param_grads=True):
    x, pre, bn_cache, normed, act = cache
    g = T.activate_backward(act, normed, grad)
    pgrads = {}
    if p.has_bn():
        g, bn_g = T.batchnorm_backward(pre, p, g, bn_cache, want_param_grads)
        if want_param_grads:
            pgrads.update(bn_g)
    dx, conv_g = _BWD[p.kind](x, p, g, want_param_grads)
    if want_param_grads:
        pgrads.update(conv_g)
    return dx, pgrads


def _merge_depth(x):
    n, h, w, b, c = x.shape
    return x.reshape(n, h, w, 1, b * c)


def model_dtype(model):
    return model.disc_layers[0].kernel.dtype


def _disc_forward(model, cubes, mode, update_running=False):
    x = np.asarray(cubes, dtype=model_dtype(model))[..., None]
    blocks = []
    merge_shape = None
    for p in model.disc_layers[:-1]:
        if p.kind == "spatial" and x.shape[3] != 1:
            merge_shape = x.shape
            x = _merge_depth(x)
        x, c = _block_forward(x, p, "lrelu", mode, update_running)
        blocks.append(c)
    pre_flat_shape = x.shape
    flat = x.reshape(x.shape[0], -1)
    head = model.disc_layers[-1]
    probs = T.softmax(T.dense(flat, head))
    cache = dict(blocks=blocks, merge_shape=merge_shape,
                 pre_flat_shape=pre_flat_shape, flat=flat, probs=probs)
    return probs, cache


def _disc_backward(model, cache, dprobs, want_param_grads=True):
    """Pull dL/dprobs back to cube space; returns (dcubes, named θ_D grads)."""
    grads = {}
    head = model.disc_layers[-1]
    dlogits = T.softmax_backward(cache["probs"], dprobs).astype(model_dtype(model))
    dflat, head_g = T.dense_backward(cache["flat"], head, dlogits, want_param_grads)
    if want_param_grads:
        tag = f"d{len(model.disc_layers) - 1}"
        for name, arr in head_g.items():
            grads[f"{tag}.{name}"] = arr
    g = dflat.reshape(cache["pre_flat_shape"])
    for i in range(len(model.disc_layers) - 2, -1, -1):
        p = model.disc_layers[i]
        g, pg = _block_backward(p, cache["blocks"][i], g, want_param_grads)
        if want_param_grads:
            for name, arr in pg.items():
                grads[f"d{i}.{name}"] = arr
        if (p.kind == "spatial" and cache["merge_shape"] is not None
                and model.disc_layers[i - 1].kind == "spectral"):
            g = g.reshape(cache["merge_shape"])
    return g[..., 0], grads


def discriminator_forward(model, batch, mode="infer"):
    """Per-cube prediction vectors, shape (n, 1+n_y); column 0 is fake_prob."""
    cubes = batch.cubes if isinstance(batch, CuboidBatch) else np.asarray(batch)
    if cubes.ndim != 4 or cubes.shape[1:] != (model.w, model.w, model.bands):
        raise ShapeError(
            f"cubes {cubes.shape} do not match model (n, {model.w}, {model.w}, {model.bands})"
        )
    probs, _ = _disc_forward(model, cubes, mode)
    return probs


def _gen_forward(model, noise, mode, update_running=False):
    noise = np.asarray(noise, dtype=model_dtype(model))
    if noise.ndim != 2 or noise.shape[1] != model.noise_dim:
        raise ShapeError(
            f"noise {noise.shape} does not match (n, {model.noise_dim})"
        )
    n = noise.shape[0]
    proj = model.gen_layers[0]
    ds = model.arch[0]
    b0 = proj.kernel.shape[1] // model.k

    lin = T.dense(noise, proj).reshape(n, 1, 1, b0, model.k)
    normed, proj_bn = T.batchnorm(lin, proj, mode, update_running=update_running)
    x = T.activate("relu", normed)
    cache = dict(noise=noise, lin=lin, proj_bn=proj_bn, normed=normed, blocks=[])

    for p in model.gen_layers[1:1 + ds]:
        x, c = _block_forward(x, p, "relu", mode, update_running)
        cache["blocks"].append(c)

    grown = x.shape[3]
    lo = (grown - model.bands) // 2
    cache["crop"] = (grown, lo)
    x = x[:, :, :, lo:lo + model.bands, :]

    cache["merge_shape"] = x.shape
    x = _merge_depth(x)

    for p in model.gen_layers[1 + ds:-1]:
        x, c = _block_forward(x, p, "relu", mode, update_running)
        cache["blocks"].append(c)

    last = model.gen_layers[-1]
    pre = T.tconv_spatial(x, last)
    out = T.activate("tanh", pre)
    cache["last_in"] = x
    cache["pre_tanh"] = pre
    cubes = out.reshape(n, model.w, model.w, model.bands)
    return cubes, cache


def _gen_backward(model, cache, dcubes):
    """Named θ_G grads from dL/dcubes."""
    grads = {}
    ds = model.arch[0]
    n = dcubes.shape[0]
    g = dcubes.reshape(n, model.w, model.w, 1, model.bands).astype(model_dtype(model))
    g = T.activate_backward("tanh", cache["pre_tanh"], g)
    last_i = len(model.gen_layers) - 1
    g, pg = _BWD["tspatial"](cache["last_in"], model.gen_layers[last_i], g)
    for name, arr in pg.items():
        grads[f"g{last_i}.{name}"] = arr

    n_blocks = len(cache["blocks"])
    for bi in range(n_blocks - 1, -1, -1):
        layer_i = bi + 1
        p = model.gen_layers[layer_i]
        g, pg = _block_backward(p, cache["blocks"][bi], g)
        for name, arr in pg.items():
            grads[f"g{layer_i}.{name}"] = arr
        if layer_i == 1 + ds:
            # undo the depth-merge, then the band center-crop
            g = g.reshape(cache["merge_shape"])
            grown, lo = cache["crop"]
            wide = np.zeros(g.shape[:3] + (grown, g.shape[4]), dtype=g.dtype)
            wide[:, :, :, lo:lo + model.bands, :] = g
            g = wide

    proj = model.gen_layers[0]
    g = T.activate_backward("relu", cache["normed"], g)
    g, bn_g = T.batchnorm_backward(cache["lin"], proj, g, cache["proj_bn"])
    for name, arr in bn_g.items():
        grads[f"g0.{name}"] = arr
    _, lin_g = T.dense_backward(cache["noise"], proj, g.reshape(n, -1))
    for name, arr in lin_g.items():
        grads[f"g0.{name}"] = arr
    return grads


def generator_forward(model, noise, mode="infer"):
    """Synthetic cuboids from Gaussian noise vectors, values in (-1, 1)."""
    cubes, _ = _gen_forward(model, noise, mode)
    return CuboidBatch(cubes=cubes, kind="synthetic")


# ---------------------------------------------------------------------------
# losses (all float64; log arguments clamped at 1e-12)
# ---------------------------------------------------------------------------

CLAMP = T.LOG_CLAMP


def _clamped_neglog_mean(q):
    return float(np.mean(-np.log(np.maximum(q, CLAMP))))


def _neglog_grad(q, n):
    """d/dq of mean(-log(max(q, clamp))): zero where the clamp is active."""
    return np.where(q > CLAMP, -1.0 / (np.maximum(q, CLAMP) * n), 0.0)


def loss_sup(preds, labels):
    """Mean -log class_probs[true] over a labeled batch."""
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels)
    n_y = preds.shape[1] - 1
    if labels.min() < 1 or labels.max() > n_y:
        raise ContractError(f"labels must lie in [1..{n_y}]")
    q = preds[np.arange(len(preds)), labels]
    return _clamped_neglog_mean(q)


def _loss_sup_grad(preds, labels):
    n = len(preds)
    q = preds[np.arange(n), labels]
    d = np.zeros_like(preds)
    d[np.arange(n), labels] = _neglog_grad(q, n)
    return _clamped_neglog_mean(q), d


def loss_d1(preds_real):
    """Mean -log(1 - fake_prob) over real cubes."""
    q = 1.0 - np.asarray(preds_real, dtype=np.float64)[:, 0]
    return _clamped_neglog_mean(q)


def _loss_d1_grad(preds_real):
    n = len(preds_real)
    q = 1.0 - preds_real[:, 0]
    d = np.zeros_like(preds_real)
    d[:, 0] = -_neglog_grad(q, n)
    return _clamped_neglog_mean(q), d


def loss_d2(preds_fake):
    """Mean -log(fake_prob) over synthetic cubes."""
    q = np.asarray(preds_fake, dtype=np.float64)[:, 0]
    return _clamped_neglog_mean(q)


def _loss_d2_grad(preds_fake):
    n = len(preds_fake)
    q = preds_fake[:, 0]
    d = np.zeros_like(preds_fake)
    d[:, 0] = _neglog_grad(q, n)
    return _clamped_neglog_mean(q), d


def loss_g(preds_fake):
    """Mean -log(1 - fake_prob) over synthetic cubes, the generator objective."""
    q = 1.0 - np.asarray(preds_fake, dtype=np.float64)[:, 0]
    return _clamped_neglog_mean(q)


_loss_g_grad = _loss_d1_grad


def loss_semi(model, labeled, synthetic, unlabeled=None, update_running=False):
    """Three-term discriminator loss and its θ_D gradients.

    Returns (losses, grads): losses has l_sup/l_d1/l_d2/l_semi; grads maps
    discriminator parameter names to arrays. Unlabeled real cubes only widen
    the l_d1 average. The synthetic batch is treated as fixed data: no
    gradient flows toward the generator.
    """
    if labeled is None or labeled.kind != "labeled_real":
        raise ContractError("loss_semi requires a labeled_real batch")
    if synthetic.kind != "synthetic":
        raise ContractError("loss_semi requires a synthetic batch")
    n_lab = len(labeled)
    if unlabeled is not None and len(unlabeled):
        real_cubes = np.concatenate([labeled.cubes, unlabeled.cubes], axis=0)
    else:
        real_cubes = labeled.cubes

    # running stats track real data only: inference never sees synthetic
    # cubes, and the generator's drifting statistics would skew them
    preds_real, cache_r = _disc_forward(model, real_cubes, "train", update_running)
    preds_fake, cache_f = _disc_forward(model, synthetic.cubes, "train", False)

    l_sup, d_sup = _loss_sup_grad(preds_real[:n_lab], labeled.labels)
    l_d1, d_d1 = _loss_d1_grad(preds_real)
    l_d2, d_d2 = _loss_d2_grad(preds_fake)

    d_real = d_d1
    d_real[:n_lab] += d_sup
    _, grads_r = _disc_backward(model, cache_r, d_real)
    _, grads_f = _disc_backward(model, cache_f, d_d2)
    grads = {name: grads_r[name] + grads_f[name] for name in grads_r}

    losses = {"l_sup": l_sup, "l_d1": l_d1, "l_d2": l_d2,
              "l_semi": l_sup + l_d1 + l_d2}
    return losses, grads


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


class BatchSampler:
    """Epoch-shuffled labeled batches, with an optional unlabeled stream of
    the same batch size. One epoch = floor(pool/batch) steps."""

    def __init__(self, cubes, labels, batch, rng, unlabeled=None):
        cubes = np.asarray(cubes, dtype=np.float32)
        if len(cubes) == 0:
            raise ContractError("empty labeled pool")
        labels = np.asarray(labels, dtype=np.int64)
        if len(labels) != len(cubes):
            raise ContractError("one label per labeled cube required")
        self.batch = min(batch, len(cubes))
        if self.batch < 2:
            raise ContractError("batch size must be at least 2 (batch statistics)")
        self.cubes = cubes
        self.labels = labels
        self.unlabeled = None
        if unlabeled is not None and len(unlabeled):
            self.unlabeled = np.asarray(unlabeled, dtype=np.float32)
        self.rng = rng
        self._order = []
        self._pos = 0
        self._uorder = []
        self._upos = 0

    @property
    def steps_per_epoch(self):
        return len(self.cubes) // self.batch

    def _next_indices(self):
        if self._pos + self.batch > len(self._order):
            self._order = self.rng.permutation(len(self.cubes))
            self._pos = 0
        idx = self._order[self._pos:self._pos + self.batch]
        self._pos += self.batch
        return idx

    def _next_unlabeled(self):
        if self.unlabeled is None:
            return None
        take = min(self.batch, len(self.unlabeled))
        if self._upos + take > len(self._uorder):
            self._uorder = self.rng.permutation(len(self.unlabeled))
            self._upos = 0
        idx = self._uorder[self._upos:self._upos + take]
        self._upos += take
        return CuboidBatch(cubes=self.unlabeled[idx], kind="unlabeled_real")

    def next(self):
        idx = self._next_indices()
        labeled = CuboidBatch(cubes=self.cubes[idx], kind="labeled_real",
                              labels=self.labels[idx])
        return labeled, self._next_unlabeled()


def train_step(model, sampler, opt_d, opt_g, rng, noise_samples=1):
    """One discriminator update then one generator update, fresh noise each.

    Returns the loss record {l_sup, l_d1, l_d2, l_semi, l_g}.
    """
    labeled, unlabeled = sampler.next()
    n = len(labeled)

    noise = rng.standard_normal((n, model.noise_dim)).astype(np.float32)
    fake_cubes, _ = _gen_forward(model, noise, "train", update_running=False)
    synthetic = CuboidBatch(cubes=fake_cubes, kind="synthetic")
    losses, grads_d = loss_semi(model, labeled, synthetic, unlabeled,
                                update_running=True)
    T.adam_step(model.disc_params(), grads_d, opt_d)

    l_g_total = 0.0
    grads_g = None
    for _ in range(noise_samples):
        noise = rng.standard_normal((n, model.noise_dim)).astype(np.float32)
        fake_cubes, gcache = _gen_forward(model, noise, "train", update_running=True)
        preds_fake, dcache = _disc_forward(model, fake_cubes, "train",
                                           update_running=False)
        l_g, d_fake = _loss_g_grad(preds_fake)
        l_g_total += l_g
        dcubes, _ = _disc_backward(model, dcache, d_fake, want_param_grads=False)
        step_g = _gen_backward(model, gcache, dcubes)
        if grads_g is None:
            grads_g = step_g
        else:
            for name in grads_g:
                grads_g[name] += step_g[name]
    if noise_samples > 1:
        for name in grads_g:
            grads_g[name] /= noise_samples
    T.adam_step(model.gen_params(), grads_g, opt_g)

    record = dict(losses)
    record["l_g"] = l_g_total / noise_samples
    return record


def fit(model, cubes, labels, *, epochs, batch=50, lr=0.0007, seed=0,
        unlabeled=None, noise_samples=1, checkpoint_every=0,
        checkpoint_dir=None, log_every=0):
    """Alternating training over epoch-shuffled labeled batches.

    Returns (model, history); history holds one loss record per step.
    """
    rng = np.random.default_rng(seed)
    opt_d = T.AdamState(lr=lr)
    opt_g = T.AdamState(lr=lr)
    history = []
    if epochs <= 0:
        return model, history
    sampler = BatchSampler(cubes, labels, batch, rng, unlabeled=unlabeled)
    step = 0
    for epoch in range(epochs):
        for _ in range(sampler.steps_per_epoch):
            record = train_step(model, sampler, opt_d, opt_g, rng, noise_samples)
            step += 1
            record["step"] = step
            history.append(record)
        if log_every and (epoch + 1) % log_every == 0:
            r = history[-1]
            print(f"epoch {epoch + 1}/{epochs} l_semi={r['l_semi']:.4f} l_g={r['l_g']:.4f}")
        if (checkpoint_every and checkpoint_dir
                and (epoch + 1) % checkpoint_every == 0):
            path = os.path.join(checkpoint_dir, f"epoch{epoch + 1:05d}.ganc")
            save_checkpoint(model, path)
    return model, history


# ---------------------------------------------------------------------------
# whole-image prediction
# ---------------------------------------------------------------------------


def predict_field(model, image, batch=256):
    """Softmax field (h, w, 1+n_y) by classifying the cuboid centered at each
    pixel; borders are mirror-padded. The model is read-only here."""
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 3:
        raise ShapeError(f"image must be (h, w, bands), got ndim={image.ndim}")
    if image.shape[2] != model.bands:
        raise ShapeError(
            f"band axis mismatch: image has {image.shape[2]}, model expects {model.bands}"
        )
    h, w = image.shape[:2]
    half = model.w // 2
    padded = np.pad(image, ((half, half), (half, half), (0, 0)), mode="symmetric")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (model.w, model.w), axis=(0, 1))
    field = np.empty((h, w, 1 + model.n_y), dtype=np.float64)
    # windows is a view (h, w, bands, wh, ww); copy one row of cuboids at a
    # time so memory stays at row scale on full-size scenes
    for r in range(h):
        row = np.ascontiguousarray(windows[r].transpose(0, 2, 3, 1))
        for lo in range(0, w, batch):
            probs, _ = _disc_forward(model, row[lo:lo + batch], "infer")
            field[r, lo:lo + batch] = probs
    return field


# ---------------------------------------------------------------------------
# checkpoint and loss-history serialization
# ---------------------------------------------------------------------------


def save_checkpoint(model, path):
    """Write magic, version, config block, then float32 LE parameters in
    declared layer order (running statistics included)."""
    header = struct.pack(
        "<4sH7I", CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
        model.n_y, model.bands, model.w, model.k, model.noise_dim,
        model.arch[0], model.arch[1],
    )
    chunks = [header]
    for _, layer in model.named_layers():
        for _, arr in layer.state_arrays():
            chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    blob = b"".join(chunks)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    head_len = struct.calcsize("<4sH7I")
    if len(blob) < head_len:
        raise FormatError(f"checkpoint truncated: {len(blob)} bytes")
    magic, version, n_y, bands, w, k, noise_dim, ds, dp = struct.unpack(
        "<4sH7I", blob[:head_len])
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    model = build_model(n_y, bands, k=k, arch=(ds, dp), noise_dim=noise_dim,
                        w=w, rng=np.random.default_rng(0))
    off = head_len
    for tag, layer in model.named_layers():
        for name, arr in layer.state_arrays():
            nbytes = arr.size * 4
            if off + nbytes > len(blob):
                raise FormatError(
                    f"checkpoint truncated inside {tag}.{name} at byte {off}")
            vals = np.frombuffer(blob, dtype="<f4", count=arr.size, offset=off)
            arr[...] = vals.reshape(arr.shape)
            off += nbytes
    if off != len(blob):
        raise FormatError(f"{len(blob) - off} trailing bytes after parameters")
    return model


def write_loss_history(path, history):
    """CSV with columns step,l_sup,l_d1,l_d2,l_semi,l_g."""
    lines = [",".join(LOSS_FIELDS)]
    for rec in history:
        lines.append(",".join(
            str(rec["step"]) if f == "step" else repr(float(rec[f]))
            for f in LOSS_FIELDS))
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)
