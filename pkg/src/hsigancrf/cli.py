"""Command-line pipeline: synthesize scenes, train the adversarial
classifier, refine softmax fields with the dense pairwise model, and score
or render label maps. Every command is deterministic given its config.
"""

import os
import sys

import numpy as np

from . import crf, data, evaluate, gan
from .config import load_config, parse_arch, window_for
from .errors import ContractError, FormatError, HsiGanError, NumericError, ShapeError

USAGE = """\
usage: hsigan <command> [--config FILE] [--<section>.<key> VALUE] [args]

commands:
  synth                      write a synthetic labeled scene as HSC
  train                      split, fit, predict a softmax field, score
  crf FIELD.sfp SCENE.hsc    refine a field with the dense pairwise model
  eval TRUTH.hsc PRED.hsc    print metrics comparing two label maps
  render SCENE.hsc OUT.ppm   render a label map to a PPM image

flags mirror config keys, e.g. --train.lr 0.0007 --model.arch 3+3
--split.m-l 300 --crf.c 3.0; HSIGAN_SEED overrides split.seed
"""


def _parse_argv(argv):
    if not argv:
        raise ContractError("missing command\n" + USAGE)
    command, rest = argv[0], argv[1:]
    positionals = []
    overrides = {}
    config_path = None
    i = 0
    while i < len(rest):
        arg = rest[i]
        if arg == "--config":
            if i + 1 >= len(rest):
                raise ContractError("--config needs a file path")
            config_path = rest[i + 1]
            i += 2
        elif arg.startswith("--"):
            if i + 1 >= len(rest):
                raise ContractError(f"flag {arg} needs a value")
            key = arg[2:].replace("-", "_")
            overrides[key] = rest[i + 1]
            i += 2
        else:
            positionals.append(arg)
            i += 1
    return command, positionals, config_path, overrides


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _write_provenance(cfg, out_dir):
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        fh.write(cfg.to_json())


def _load_scene(cfg):
    """The configured scene: a file if data.path is set, else synthetic."""
    if cfg["data.path"]:
        return data.load_hsc(cfg["data.path"])
    return data.synth_scene(
        height=cfg["synth.height"], width=cfg["synth.width"],
        bands=cfg["synth.bands"], n_y=cfg["synth.n_y"],
        noise_sigma=cfg["synth.noise_sigma"], seed=cfg["synth.seed"])


def _test_mask(labels, test_idx):
    """Truth restricted to held-out pixels, so scoring skips training draws."""
    masked = np.zeros_like(labels.labels)
    if len(test_idx):
        masked[test_idx[:, 0], test_idx[:, 1]] = \
            labels.labels[test_idx[:, 0], test_idx[:, 1]]
    return data.LabelMap(labels=masked)


def cmd_synth(cfg, out):
    if cfg["synth.n_y"] < 2:
        raise ContractError(f"synth.n_y must be >= 2, got {cfg['synth.n_y']}")
    cube, labels = data.synth_scene(
        height=cfg["synth.height"], width=cfg["synth.width"],
        bands=cfg["synth.bands"], n_y=cfg["synth.n_y"],
        noise_sigma=cfg["synth.noise_sigma"], seed=cfg["synth.seed"])
    data.save_hsc(out, cube, labels)
    hist = np.bincount(labels.labels.ravel(), minlength=cube.n_y + 1)
    print(f"wrote {out}: {cube.height}x{cube.width}x{cube.bands}, "
          f"{cube.n_y} classes, pixels per class {hist[1:].tolist()}")
    return 0


def cmd_train(cfg):
    out_dir = _ensure_dir(cfg["out.dir"])
    _write_provenance(cfg, out_dir)
    cube, labels = _load_scene(cfg)
    scaled = data.scale_bands(cube)
    window = window_for(cfg)
    seed = cfg["split.seed"]

    spec = data.SplitSpec(labeled_count=cfg["split.m_l"],
                          unlabeled_count=cfg["split.m_u"], seed=seed)
    labeled, unlabeled, test_idx = data.sample_split(scaled, labels, spec,
                                                     window=window)

    arch = parse_arch(cfg["model.arch"])
    model = gan.build_model(
        cube.n_y, cube.bands, k=cfg["model.k"], arch=arch,
        noise_dim=cfg["model.noise_dim"], w=window,
        rng=np.random.default_rng(seed))
    model, history = gan.fit(
        model, labeled.cubes, labeled.labels, epochs=cfg["train.epochs"],
        batch=cfg["train.batch"], lr=cfg["train.lr"], seed=seed,
        unlabeled=None if unlabeled is None else unlabeled.cubes,
        noise_samples=cfg["train.noise_samples"])

    gan.save_checkpoint(model, os.path.join(out_dir, "model.ganc"))
    gan.write_loss_history(os.path.join(out_dir, "loss.csv"), history)
    data.save_hsc(os.path.join(out_dir, "scene.hsc"), scaled, labels)

    field = gan.predict_field(model, scaled.radiance)
    crf.write_field(os.path.join(out_dir, "field.sfp"),
                    field.astype(np.float32))
    pred = crf.map_decode(crf.init_field(field))
    with open(os.path.join(out_dir, "map_unary.ppm"), "wb") as fh:
        fh.write(evaluate.render_map(pred))

    report = evaluate.metrics(
        evaluate.confusion(_test_mask(labels, test_idx).labels, pred,
                           n_y=cube.n_y))
    blob = evaluate.metrics_json(report)
    with open(os.path.join(out_dir, "metrics.json"), "w") as fh:
        fh.write(blob + "\n")
    if history:
        last = history[-1]
        print(f"trained {cfg['train.epochs']} epochs, final losses "
              f"sup {last['l_sup']:.4f} semi {last['l_semi']:.4f} "
              f"g {last['l_g']:.4f}")
    print(blob)
    return 0


def cmd_crf(cfg, field_path, scene_path):
    out_dir = _ensure_dir(cfg["out.dir"])
    _write_provenance(cfg, out_dir)
    field = crf.read_field(field_path).astype(np.float64)
    cube, labels = data.load_hsc(scene_path)
    if field.shape[:2] != (cube.height, cube.width):
        raise ShapeError(
            f"field grid {field.shape[:2]} does not match scene "
            f"({cube.height}, {cube.width})")
    if field.shape[2] != cube.n_y + 1:
        raise ShapeError(
            f"field carries {field.shape[2]} entries per pixel, scene has "
            f"n_y={cube.n_y}")
    # renormalize: the f32 container rounds the f64 softmax rows
    field = field / field.sum(axis=2, keepdims=True)

    feats = data.pca3(cube)
    ccfg = crf.CrfConfig(potts_c=cfg["crf.c"],
                         theta_alpha=cfg["crf.theta_alpha"],
                         theta_beta=cfg["crf.theta_beta"],
                         iterations=cfg["crf.iterations"])
    q = crf.meanfield_infer(
        field, feats, ccfg,
        progress=lambda tile, it, delta: print(
            f"tile {tile} iteration {it} max_change {delta:.6e}"))
    refined = crf.map_decode(q)
    with open(os.path.join(out_dir, "map_refined.ppm"), "wb") as fh:
        fh.write(evaluate.render_map(refined))

    # index draws depend only on labels and seed, so the unscaled cube is fine
    seed = cfg["split.seed"]
    spec = data.SplitSpec(labeled_count=cfg["split.m_l"],
                          unlabeled_count=cfg["split.m_u"], seed=seed)
    _, _, test_idx = data.sample_split(cube, labels, spec,
                                       window=window_for(cfg))
    report = evaluate.metrics(
        evaluate.confusion(_test_mask(labels, test_idx).labels, refined,
                           n_y=cube.n_y))
    blob = evaluate.metrics_json(report)
    with open(os.path.join(out_dir, "metrics_refined.json"), "w") as fh:
        fh.write(blob + "\n")
    print(blob)
    return 0


def cmd_eval(truth_path, pred_path):
    _, truth = data.load_hsc(truth_path)
    _, pred = data.load_hsc(pred_path)
    if truth.labels.shape != pred.labels.shape:
        raise ShapeError(
            f"truth {truth.labels.shape} and prediction {pred.labels.shape} "
            f"grids differ")
    report = evaluate.metrics(evaluate.confusion(truth.labels, pred.labels))
    print(evaluate.metrics_json(report))
    return 0


def cmd_render(scene_path, out_path):
    _, labels = data.load_hsc(scene_path)
    blob = evaluate.render_map(labels)
    with open(out_path, "wb") as fh:
        fh.write(blob)
    print(f"wrote {out_path}: {len(blob)} bytes")
    return 0


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        command, positionals, config_path, overrides = _parse_argv(argv)
        if command == "synth":
            cfg = load_config(config_path, overrides)
            if len(positionals) > 1:
                raise ContractError("synth takes at most one output path")
            out = positionals[0] if positionals else cfg["synth.out"]
            return cmd_synth(cfg, out)
        if command == "train":
            if positionals:
                raise ContractError("train takes no positional arguments")
            return cmd_train(load_config(config_path, overrides))
        if command == "crf":
            if len(positionals) != 2:
                raise ContractError("crf needs FIELD.sfp and SCENE.hsc")
            return cmd_crf(load_config(config_path, overrides), *positionals)
        if command == "eval":
            if len(positionals) != 2 or config_path or overrides:
                raise ContractError("eval needs exactly TRUTH.hsc and PRED.hsc")
            return cmd_eval(*positionals)
        if command == "render":
            if len(positionals) != 2 or config_path or overrides:
                raise ContractError("render needs exactly SCENE.hsc and OUT.ppm")
            return cmd_render(*positionals)
        if command in ("help", "--help", "-h"):
            print(USAGE)
            return 0
        raise ContractError(f"unknown command {command!r}\n" + USAGE)
    except (ShapeError, ContractError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, HsiGanError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
