"""Command-line pipeline: encode, select, profile, cost, and the full chain.

Every run is driven by a JSON config (plus a few overriding flags) and
writes deterministic artifacts into the output directory: per-layer
attention and embeddings as tensor files, reports as sorted-key JSON with
floats rounded to 6 significant digits. Identical configs produce
byte-identical output trees.

Exit codes: 0 success, 1 usage or config error, 2 data or format error.
Log level comes from PMTK_LOG (error, info, debug); --quiet silences
stdout summaries and non-error logs.
"""

import argparse
import json
import logging
import os
import sys
import tempfile

import numpy as np

from . import costmodel, encoder, kernels, selector, tensorio
from .config import load_config, with_outputs, with_seed
from .errors import ConfigError, DataError

log = logging.getLogger("pmtk")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
HIST_BINS = 16
EMBEDDINGS_FILE = "embeddings.pmtk"


def _fmt(x):
    """All floats shown to the user carry 6 significant digits."""
    return f"{x:.6g}"


def _round6(obj):
    if isinstance(obj, float):
        return float(f"{obj:.6g}")
    if isinstance(obj, dict):
        return {k: _round6(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round6(v) for v in obj]
    return obj


def _write_text(path, text):
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path, obj):
    _write_text(path, json.dumps(_round6(obj), indent=2, sort_keys=True) + "\n")


def _say(args, msg):
    if not args.quiet:
        print(msg)


# ---------------------------------------------------------------- trace IO

def attn_filename(layer):
    return f"attn_layer_{layer}.pmtk"


def save_trace(trace, out_dir):
    files = []
    for l, a in enumerate(trace.attention):
        name = attn_filename(l)
        tensorio.write_tensor(a, os.path.join(out_dir, name))
        files.append(name)
    tensorio.write_tensor(trace.embeddings, os.path.join(out_dir, EMBEDDINGS_FILE))
    return files


def load_stack(trace_dir):
    """Per-layer attention matrices from attn_layer_{l}.pmtk files."""
    if not os.path.isdir(trace_dir):
        raise DataError(f"trace directory {trace_dir} does not exist")
    stack = []
    while True:
        path = os.path.join(trace_dir, attn_filename(len(stack)))
        if not os.path.isfile(path):
            break
        arr = tensorio.read_tensor(path)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DataError(f"{path}: attention must be square 2-D, got shape {arr.shape}")
        stack.append(arr)
    if len(stack) < 2:
        raise DataError(
            f"trace directory {trace_dir} holds {len(stack)} attention layers; need at least 2"
        )
    n = stack[0].shape[0]
    for l, a in enumerate(stack):
        if a.shape != (n, n):
            raise DataError(
                f"trace layer {l} has shape {a.shape}, but layer 0 has {stack[0].shape}"
            )
        try:
            kernels.check_attention(a, name=f"trace layer {l}")
        except ValueError as exc:
            raise DataError(str(exc)) from None
    return stack


def load_trace_embeddings(trace_dir, n):
    path = os.path.join(trace_dir, EMBEDDINGS_FILE)
    if not os.path.isfile(path):
        raise DataError(f"trace directory {trace_dir} is missing {EMBEDDINGS_FILE}")
    emb = tensorio.read_tensor(path)
    if emb.ndim != 2 or emb.shape[0] != n:
        raise DataError(
            f"{path}: embeddings shape {emb.shape} inconsistent with {n} tokens"
        )
    return emb


def _image_for(cfg):
    if cfg.input_is_pattern:
        return encoder.synthetic_image(cfg.input, cfg.encoder), cfg.input
    arr = tensorio.read_tensor(cfg.input)
    expected = (cfg.encoder.image_size, cfg.encoder.image_size, cfg.encoder.channels)
    if arr.shape != expected:
        raise DataError(
            f"input image {cfg.input} has shape {arr.shape}; config expects {expected}"
        )
    return arr, os.path.basename(cfg.input)


# ------------------------------------------------------------- stage cores

def run_encode(cfg):
    image, label = _image_for(cfg)
    weights = encoder.init_weights(cfg.encoder)
    trace = encoder.forward(image, weights, cfg.encoder)
    report = {
        "input": label,
        "n": trace.n,
        "layers": trace.layers,
        "dim": cfg.encoder.dim,
        "heads": cfg.encoder.heads,
        "grid": cfg.encoder.grid,
        "seed": cfg.encoder.seed,
        "positional_embeddings": cfg.encoder.use_pos_embed,
    }
    return trace, report


def run_select(cfg, stack, embeddings):
    try:
        result = selector.select_tokens(stack, cfg.selection)
    except ValueError as exc:
        raise ConfigError(f"selection failed: {exc}") from None
    reduced = selector.gather(embeddings, result.selected)

    def rec(t):
        return {"index": t.index, "kind": t.kind, "score": float(t.score),
                "flagged_by": [int(x) for x in t.flagged_by]}

    kind_of = {t.index: t.kind for t in result.provenance}
    for t in result.dropped:
        kind_of[t.index] = "dropped"
    grid = cfg.encoder.grid
    grid_map = None
    if grid * grid == result.n:
        grid_map = [
            {"token": i, "row": i // grid, "col": i % grid,
             "kind": kind_of.get(i, "discarded")}
            for i in range(result.n)
        ]
    report = {
        "n": result.n,
        "m": result.m,
        "kept_fraction": result.kept_fraction,
        "scan_layers": list(result.scan),
        "selected": [int(i) for i in result.selected],
        "pivotal": [int(i) for i in result.pivotal],
        "complementary": [int(i) for i in result.complementary],
        "provenance": [rec(t) for t in result.provenance],
        "dropped": [rec(t) for t in result.dropped],
        "grid": {"width": grid, "map": grid_map} if grid_map else None,
    }
    return result, reduced, report


def run_profile(stack):
    profiles = selector.profile_layers(stack)
    n = profiles[0].n
    layers = []
    for p in profiles:
        counts, edges = np.histogram(p.r, bins=HIST_BINS, range=(0.0, float(max(n - 1, 1))))
        layers.append({
            "layer": p.layer,
            "mean": p.mean,
            "max": p.max,
            "gini": p.gini,
            "histogram": {"edges": [float(e) for e in edges],
                          "counts": [int(c) for c in counts]},
        })
    traj = selector.token_trajectories(profiles)
    return {
        "n": n,
        "layers": layers,
        "trajectories": [[float(x) for x in row] for row in traj],
    }


def run_cost(cfg, visual, reduced_visual, source):
    if cfg.model is None or cfg.hardware is None:
        raise ConfigError("cost reports need both a model and a hardware section in the config")
    full_tokens = visual + cfg.text_tokens
    reduced_tokens = reduced_visual + cfg.text_tokens
    sp = costmodel.compare(cfg.model, cfg.hardware, full_tokens, reduced_tokens)

    def side(rep):
        return {"tokens": rep.tokens, "ops_total_t": rep.ops_total,
                "prefill_ms": rep.prefill_ms, "mem_access_gb": rep.mem_access_gb,
                "activation_gb": rep.activation_gb, "bound": rep.bound}

    report = {
        "model": {
            "name": cfg.model.name, "layers": cfg.model.layers,
            "hidden_dim": cfg.model.hidden_dim, "heads": cfg.model.heads,
            "ffn_dim": cfg.model.ffn_dim, "ffn_matrices": cfg.model.ffn_matrices,
            "vocab_size": cfg.model.vocab_size,
            "param_count": cfg.model.param_count,
            "bytes_per_param": cfg.model.bytes_per_param,
        },
        "hardware": {
            "name": cfg.hardware.name, "peak_flops": cfg.hardware.peak_flops,
            "mem_bandwidth": cfg.hardware.mem_bandwidth,
        },
        "assumptions": {
            "source": source,
            "note": "token counts are modeling assumptions, not measurements",
            "text_tokens": cfg.text_tokens,
            "visual_tokens": visual,
            "reduced_visual_tokens": reduced_visual,
        },
        "full": side(sp.full),
        "reduced": side(sp.reduced),
        "ratios": {
            "ops": sp.ops_ratio,
            "prefill_speedup": sp.speedup,
            "mem_access": sp.mem_access_ratio,
            "activation": sp.activation_ratio,
        },
        "formulas": dict(costmodel.FORMULAS),
    }
    return sp, report


def _print_cost(args, cfg, sp, visual, reduced_visual):
    _say(args, f"cost model: {cfg.model.name} on {cfg.hardware.name} "
               f"({_fmt(cfg.model.bytes_per_param)} bytes/param)")
    _say(args, f"tokens: full {sp.full.tokens} ({visual} visual + {cfg.text_tokens} text), "
               f"reduced {sp.reduced.tokens} ({reduced_visual} visual + {cfg.text_tokens} text) "
               f"[assumed counts]")
    rows = [
        ("ops (T)", _fmt(sp.full.ops_total), _fmt(sp.reduced.ops_total)),
        ("prefill (ms)", _fmt(sp.full.prefill_ms), _fmt(sp.reduced.prefill_ms)),
        ("mem access (GB)", _fmt(sp.full.mem_access_gb), _fmt(sp.reduced.mem_access_gb)),
        ("activation (GB)", _fmt(sp.full.activation_gb), _fmt(sp.reduced.activation_gb)),
        ("bound", sp.full.bound, sp.reduced.bound),
    ]
    _say(args, f"{'':18}{'full':>12}{'reduced':>12}")
    for label, a, b in rows:
        _say(args, f"{label:18}{a:>12}{b:>12}")
    _say(args, f"prefill speedup {_fmt(sp.speedup)}x, ops ratio {_fmt(sp.ops_ratio)}")
    for name, formula in sorted(costmodel.FORMULAS.items()):
        _say(args, f"formula {name}: {formula}")


# ------------------------------------------------------------- subcommands

def cmd_encode(cfg, args):
    trace, report = run_encode(cfg)
    files = save_trace(trace, cfg.outputs)
    report["files"] = {"attention": files, "embeddings": EMBEDDINGS_FILE}
    _write_json(os.path.join(cfg.outputs, "encode.json"), report)
    _say(args, f"encoded {report['input']}: {trace.n} tokens, {trace.layers} layers, "
               f"dim {cfg.encoder.dim} -> {cfg.outputs}")


def _obtain_stack(cfg, args, need_embeddings):
    if args.trace:
        stack = load_stack(args.trace)
        emb = load_trace_embeddings(args.trace, stack[0].shape[0]) if need_embeddings else None
        return stack, emb, f"trace:{os.path.basename(os.path.abspath(args.trace))}"
    trace, _ = run_encode(cfg)
    return list(trace.attention), trace.embeddings, "encoder"


def cmd_select(cfg, args):
    stack, emb, source = _obtain_stack(cfg, args, need_embeddings=True)
    n = stack[0].shape[0]
    if n != cfg.encoder.tokens:
        raise DataError(
            f"trace has {n} tokens but the config encoder produces {cfg.encoder.tokens}"
        )
    result, reduced, report = run_select(cfg, stack, emb)
    report["source"] = source
    tensorio.write_tensor(reduced, os.path.join(cfg.outputs, "reduced.pmtk"))
    _write_json(os.path.join(cfg.outputs, "selection.json"), report)
    _say(args, f"selected {result.m} of {result.n} tokens "
               f"(kept fraction {_fmt(result.kept_fraction)}): "
               f"{result.pivotal.size} pivotal + {result.complementary.size} complementary"
               f" -> {cfg.outputs}")


def cmd_profile(cfg, args):
    stack, _, source = _obtain_stack(cfg, args, need_embeddings=False)
    report = run_profile(stack)
    report["source"] = source
    _write_json(os.path.join(cfg.outputs, "profile.json"), report)
    ginis = ", ".join(_fmt(layer["gini"]) for layer in report["layers"])
    _say(args, f"profiled {len(report['layers'])} layers over {report['n']} tokens "
               f"-> {cfg.outputs}")
    _say(args, f"gini by layer: {ginis}")


def cmd_cost(cfg, args):
    visual = cfg.visual_tokens if cfg.visual_tokens is not None else cfg.encoder.tokens
    reduced = cfg.reduced_visual_tokens
    if reduced is None:
        reduced = max(visual // 2, 1)
    if reduced > visual:
        raise ConfigError(f"reduced visual tokens {reduced} exceed full count {visual}")
    sp, report = run_cost(cfg, visual, reduced, source="config")
    _write_json(os.path.join(cfg.outputs, "cost.json"), report)
    _print_cost(args, cfg, sp, visual, reduced)


def cmd_pipeline(cfg, args):
    trace, enc_report = run_encode(cfg)
    files = save_trace(trace, cfg.outputs)
    enc_report["files"] = {"attention": files, "embeddings": EMBEDDINGS_FILE}
    _write_json(os.path.join(cfg.outputs, "encode.json"), enc_report)
    _say(args, f"encoded {enc_report['input']}: {trace.n} tokens, {trace.layers} layers")

    result, reduced_emb, sel_report = run_select(cfg, list(trace.attention), trace.embeddings)
    sel_report["source"] = "encoder"
    tensorio.write_tensor(reduced_emb, os.path.join(cfg.outputs, "reduced.pmtk"))
    _write_json(os.path.join(cfg.outputs, "selection.json"), sel_report)
    _say(args, f"selected {result.m} of {result.n} tokens "
               f"(kept fraction {_fmt(result.kept_fraction)})")

    prof_report = run_profile(list(trace.attention))
    prof_report["source"] = "encoder"
    _write_json(os.path.join(cfg.outputs, "profile.json"), prof_report)

    stages = ["encode", "select", "profile"]
    if cfg.model is not None and cfg.hardware is not None:
        sp, cost_report = run_cost(cfg, result.n, result.m, source="pipeline")
        _write_json(os.path.join(cfg.outputs, "cost.json"), cost_report)
        _print_cost(args, cfg, sp, result.n, result.m)
        stages.append("cost")
    else:
        log.info("cost stage skipped: no model/hardware in config")

    _write_json(os.path.join(cfg.outputs, "pipeline.json"),
                {"stages": stages, "n": result.n, "m": result.m,
                 "kept_fraction": result.kept_fraction})
    _say(args, f"pipeline complete: {', '.join(stages)} -> {cfg.outputs}")


# ------------------------------------------------------------------ driver

class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; our contract says 1."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser():
    parser = _Parser(prog="pmtk", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    commands = {
        "encode": (cmd_encode, "run the encoder and dump its attention trace"),
        "select": (cmd_select, "run token selection over a trace"),
        "profile": (cmd_profile, "emit per-layer contribution distributions"),
        "cost": (cmd_cost, "roofline cost comparison for configured token counts"),
        "pipeline": (cmd_pipeline, "encode, select, profile, and cost in sequence"),
    }
    for name, (func, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text, parents=[_shared_flags()])
        p.set_defaults(func=func)
    return parser


def _shared_flags():
    shared = _Parser(add_help=False)
    shared.add_argument("--config", required=True, help="path to a JSON run config")
    shared.add_argument("--out", help="output directory (overrides config)")
    shared.add_argument("--seed", type=int, help="encoder seed (overrides config)")
    shared.add_argument("--trace", help="directory of attention tensor files to use "
                                        "instead of running the encoder (select/profile)")
    shared.add_argument("--quiet", action="store_true",
                        help="suppress stdout summaries and non-error logs")
    return shared


def _setup_logging(quiet=False):
    raw = os.environ.get("PMTK_LOG", "info").lower()
    if raw not in LOG_LEVELS:
        raise ConfigError(
            f"PMTK_LOG={raw!r} is not valid; expected one of {sorted(LOG_LEVELS)}"
        )
    level = logging.ERROR if quiet else LOG_LEVELS[raw]
    logging.basicConfig(level=level, format="%(levelname)s %(message)s", force=True)
    log.setLevel(level)


def entry(argv=None):
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        _setup_logging(quiet=args.quiet)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = with_seed(cfg, args.seed)
        if args.out:
            cfg = with_outputs(cfg, args.out)
        os.makedirs(cfg.outputs, exist_ok=True)
        args.func(cfg, args)
        return 0
    except ConfigError as exc:
        log.error("%s", exc)
        return 1
    except DataError as exc:
        log.error("%s", exc)
        return 2


def main():
    sys.exit(entry())


if __name__ == "__main__":
    main()
