"""Command-line entry points.

Every run materializes its full configuration into a sidecar JSON next
to the artifacts; re-running with ``--config sidecar.json`` reproduces
the artifacts byte for byte (analytic backend). Artifacts are written
to a ``.partial`` path first and renamed only once complete, so an
aborted run never leaves a truncated file under its final name.

Exit codes: 0 success, 2 invalid configuration or input data,
3 backend unreachable or failed mid-run, 4 filesystem trouble.
"""

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import assets
from .codec import RemoteCodec, clamp_fraction, decode, encode
from .denoiser import AnalyticDenoiser, RemoteDenoiser, make_image_mixture
from .engine import GUIDANCE_SOURCES, SamplerConfig, run_illusion, run_inversion
from .errors import BackendError, ConditionError, DataError, ParameterError
from .formats import read_pgm, write_pgm, write_ptt
from .metrics import phase_correlation
from .protocol import EchoServer, Ptd1Client, parse_addr
from .schedule import (DEFAULT_T_TRAIN, SCHEDULE_KINDS, SD_BETA_END,
                       SD_BETA_START, TOY_BETA_END, TOY_BETA_START,
                       build_schedule)
from .spectral import BlendParams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_IO = 4

ABLATE_MODES = ("no_decay", "no_refine", "no_inversion", "no_ptm")
# Component std for the bundled pattern mixture. Wide components keep the
# posterior mean tracking the latent (rather than snapping to the nearest
# pattern), which preserves transferred phase through the refining stage.
DEFAULT_SIGMA = 1.0


def _beta_range(kind):
    if kind == "scaled_linear":
        return SD_BETA_START, SD_BETA_END
    return TOY_BETA_START, TOY_BETA_END


def _schedule_for(kind, t_train):
    start, end = _beta_range(kind)
    return build_schedule(kind, t_train, start, end)


def _atomic_write(path, writer):
    """Run ``writer(partial_path)`` then rename into place."""
    path = Path(path)
    partial = path.with_name(path.name + ".partial")
    writer(partial)
    os.replace(partial, path)


def _write_json(path, obj):
    data = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    _atomic_write(path, lambda p: p.write_text(data, encoding="utf-8"))


def _config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def _resolve_ref(ref):
    """Reference image path: the filesystem first, bundled assets second."""
    path = Path(ref)
    if path.is_file():
        return path
    name = path.name.removesuffix(".pgm")
    try:
        return assets.asset_path(name)
    except ParameterError:
        raise ParameterError(f"reference image {ref!r} not found") from None


def _parse_d_single(text):
    try:
        return int(text)
    except ValueError:
        raise ParameterError(
            f"--d must be an integer for this command, got {text!r}"
        ) from None


def _parse_d_range(text, step):
    if ".." in text:
        lo_s, _, hi_s = text.partition("..")
        try:
            lo, hi = int(lo_s), int(hi_s)
        except ValueError:
            raise ParameterError(f"bad --d range {text!r}") from None
        if hi < lo:
            raise ParameterError(f"--d range {text!r} is empty")
        if step < 1:
            raise ParameterError(f"--d-step must be >= 1, got {step}")
        return list(range(lo, hi + 1, step))
    return [_parse_d_single(text)]


class _Runtime:
    """Everything a run needs: backend, codec, schedule, conditions."""

    def __init__(self, denoiser, codec_encode, codec_decode, sched, v, v_null,
                 client=None):
        self.denoiser = denoiser
        self.encode = codec_encode
        self.decode = codec_decode
        self.sched = sched
        self.v = v
        self.v_null = v_null
        self.client = client

    def close(self):
        if self.client is not None:
            self.client.close()


def _build_runtime(cfg):
    if cfg["backend"] == "analytic":
        sched = _schedule_for(cfg["schedule"], cfg["t_train"])
        pattern_latents = [encode(img) for img in assets.load_patterns()]
        mix = make_image_mixture(pattern_latents, cfg["sigma"])
        den = AnalyticDenoiser(mix, sched)
        if cfg["components"]:
            tokens = cfg["components"].split(",")
            v = den.prompt_condition(assets.match_components(tokens))
        else:
            v = den.null_condition()
        return _Runtime(den, encode, decode, sched, v, den.null_condition())

    if cfg["backend"] == "remote":
        if not cfg["addr"]:
            raise ParameterError(
                "remote backend needs --addr or the PTDIFF_ADDR environment variable"
            )
        client = Ptd1Client(cfg["addr"])
        den = RemoteDenoiser(client)
        advert = client.hello_info
        kind = advert.get("schedule", "scaled_linear")
        t_train = int(advert.get("t_train", DEFAULT_T_TRAIN))
        sched = _schedule_for(kind, t_train)
        remote_codec = RemoteCodec(client)
        if cfg["prompt"] is not None:
            v = den.prompt_condition(cfg["prompt"])
        else:
            v = den.null_condition()
        return _Runtime(
            den, remote_codec.encode, remote_codec.decode, sched, v,
            den.null_condition(), client=client,
        )

    raise ParameterError(f"unknown backend {cfg['backend']!r}")


def _sampler_config(cfg, lam_override=None, guidance_override=None):
    lam = cfg["lambda"] if lam_override is None else lam_override
    source = cfg["guidance_source"] if guidance_override is None else guidance_override
    # A lambda above the decay onset just shrinks the transfer stage to
    # nothing, so lift tau along with it instead of rejecting the run.
    tau = max(cfg["tau"], lam)
    return SamplerConfig(
        steps=cfg["steps"],
        invert_steps=cfg["invert_steps"],
        omega=cfg["omega"],
        blend=BlendParams(lam=lam, tau=tau),
        d=cfg["d"],
        seed=cfg["seed"],
        guidance_source=source,
    )


def _dump_trajectory(out_dir, record):
    for t, z in record.latents.items():
        _atomic_write(
            out_dir / f"{record.tag}_{t:04d}.ptt", lambda p, z=z: write_ptt(p, z)
        )


def _load_config_defaults(parser, argv):
    """Apply --config file values as parser defaults before real parsing.

    The defaults must land on the subcommand's parser: subparsers parse
    into a fresh namespace and copy it over the parent's, so top-level
    ``set_defaults`` values would be clobbered. Explicit flags still win.
    """
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    try:
        stored = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParameterError(f"cannot read --config file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ParameterError(f"--config file is not valid JSON: {exc}") from None
    if not isinstance(stored, dict):
        raise ParameterError("--config file must hold a JSON object")
    flat = {k: v for k, v in stored.items() if k != "command"}
    if "lambda" in flat:
        flat["lam"] = flat.pop("lambda")  # argparse dest for --lambda
    if "d" in flat and flat["d"] is not None:
        flat["d"] = str(flat["d"])
    command = argv[0] if argv and not argv[0].startswith("-") else None
    target = parser.command_parsers.get(command)
    if target is None:
        raise ParameterError("--config requires a subcommand that accepts it")
    target.set_defaults(**flat)


def _common_flags(sp, with_generation=True):
    sp.add_argument("--config", default=None,
                    help="JSON sidecar to take defaults from")
    sp.add_argument("--backend", choices=("analytic", "remote"), default="analytic")
    sp.add_argument("--addr", default=None,
                    help="model server host:port (default: $PTDIFF_ADDR)")
    sp.add_argument("--ref", default="face.pgm", help="reference image (PGM)")
    sp.add_argument("--prompt", default=None, help="text prompt (remote backend)")
    sp.add_argument("--components", default=None,
                    help="comma-separated pattern names/indices (analytic backend)")
    sp.add_argument("--steps", type=int, default=100)
    sp.add_argument("--invert-steps", type=int, default=1000)
    sp.add_argument("--lambda", dest="lam", type=float, default=0.4)
    sp.add_argument("--tau", type=float, default=0.6)
    sp.add_argument("--omega", type=float, default=7.5)
    sp.add_argument("--d", default="0",
                    help="async transfer distance in coarse steps"
                         + (" (sweep: LO..HI range)" if not with_generation else ""))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--guidance-source", choices=GUIDANCE_SOURCES,
                    default="ddim_inversion")
    sp.add_argument("--schedule", choices=SCHEDULE_KINDS, default="linear")
    sp.add_argument("--t-train", type=int, default=DEFAULT_T_TRAIN)
    sp.add_argument("--sigma", type=float, default=DEFAULT_SIGMA,
                    help="mixture component std (analytic backend)")
    sp.add_argument("--out", default="out", help="artifact directory")
    sp.add_argument("--dump-trajectory",
                    choices=("sampling", "reconstruction", "inversion", "all"),
                    default=None)


def _resolved_config(args, command, extra=None):
    cfg = {
        "command": command,
        "backend": args.backend,
        "addr": args.addr or os.environ.get("PTDIFF_ADDR"),
        "ref": args.ref,
        "prompt": args.prompt,
        "components": args.components,
        "steps": args.steps,
        "invert_steps": args.invert_steps,
        "lambda": args.lam,
        "tau": args.tau,
        "omega": args.omega,
        "d": _parse_d_single(args.d) if command != "sweep" else args.d,
        "seed": args.seed,
        "guidance_source": args.guidance_source,
        "schedule": args.schedule,
        "t_train": args.t_train,
        "sigma": args.sigma,
        "out": args.out,
        "dump_trajectory": args.dump_trajectory,
    }
    if extra:
        cfg.update(extra)
    return cfg


def _prepare_out(cfg):
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def _reference_latent(cfg, rt):
    if cfg["backend"] == "analytic" or rt.client is not None:
        path = _resolve_ref(cfg["ref"])
        return rt.encode(read_pgm(path))
    raise ParameterError("no reference source available")


def _run_generate_like(cfg, use_aptm=True, use_decay=True):
    """Shared pipeline for generate/ablate: invert, run, write artifacts."""
    rt = _build_runtime(cfg)
    try:
        z_ref = _reference_latent(cfg, rt)
        sconf = _sampler_config(cfg)
        inv = run_inversion(z_ref, rt.v_null, rt.denoiser, rt.sched, sconf)
        result = run_illusion(
            inv.final, rt.v, sconf, rt.denoiser, rt.sched, z_ref=z_ref,
            use_aptm=use_aptm, use_decay=use_decay,
        )
        report = phase_correlation(z_ref, result.latent)
        image = rt.decode(result.latent)

        out_dir = _prepare_out(cfg)
        _write_json(out_dir / "config.json", cfg)
        _atomic_write(out_dir / "latent.ptt", lambda p: write_ptt(p, result.latent))
        _atomic_write(out_dir / "output.pgm", lambda p: write_pgm(p, image))
        payload = report.to_json_dict()
        payload.update(
            transfer_steps=result.transfer_steps,
            refine_steps=result.refine_steps,
            clamp_events=result.clamp_events,
            clamp_fraction=clamp_fraction(result.latent),
        )
        _write_json(out_dir / "metrics.json", payload)
        if cfg["dump_trajectory"] in ("sampling", "all"):
            _dump_trajectory(out_dir, result.sampling)
        if cfg["dump_trajectory"] in ("reconstruction", "all"):
            _dump_trajectory(out_dir, result.reconstruction)
        if cfg["dump_trajectory"] in ("inversion", "all"):
            _dump_trajectory(out_dir, inv)
        print(f"wrote {out_dir}/output.pgm (global phase correlation "
              f"{report.global_corr:.4f})")
        return EXIT_OK
    finally:
        rt.close()


def cmd_generate(args):
    cfg = _resolved_config(args, "generate")
    return _run_generate_like(cfg)


def cmd_ablate(args):
    if args.mode is None:
        raise ParameterError(f"--mode is required (one of {ABLATE_MODES})")
    cfg = _resolved_config(args, "ablate", extra={"mode": args.mode})
    if args.mode == "no_refine":
        cfg["lambda"] = 0.0
    if args.mode == "no_inversion":
        cfg["guidance_source"] = "forward_diffusion"
    return _run_generate_like(
        cfg,
        use_aptm=(args.mode != "no_ptm"),
        use_decay=(args.mode != "no_decay"),
    )


def cmd_invert(args):
    cfg = _resolved_config(args, "invert")
    rt = _build_runtime(cfg)
    try:
        z_ref = _reference_latent(cfg, rt)
        sconf = _sampler_config(cfg)
        record = run_inversion(z_ref, rt.v_null, rt.denoiser, rt.sched, sconf)
        out_dir = _prepare_out(cfg)
        _write_json(out_dir / "config.json", cfg)
        _atomic_write(out_dir / "code.ptt", lambda p: write_ptt(p, record.final))
        if cfg["dump_trajectory"] in ("inversion", "all"):
            _dump_trajectory(out_dir, record)
        code = record.final
        print(f"wrote {out_dir}/code.ptt (mean {code.mean():+.4f}, "
              f"var {code.var():.4f})")
        return EXIT_OK
    finally:
        rt.close()


def _sweep_worker(task):
    """One (d, seed) cell; runs in its own process when --workers > 1."""
    cfg, d, seed = task
    cell = dict(cfg)
    cell.update(d=d, seed=seed)
    rt = _build_runtime(cell)
    try:
        z_ref = _reference_latent(cell, rt)
        sconf = _sampler_config(cell)
        inv = run_inversion(z_ref, rt.v_null, rt.denoiser, rt.sched, sconf)
        result = run_illusion(
            inv.final, rt.v, sconf, rt.denoiser, rt.sched, z_ref=z_ref
        )
        report = phase_correlation(z_ref, result.latent)
        return {
            "d": d,
            "seed": seed,
            "global": report.global_corr,
            "n_bins": report.n_bins,
            "clamp_events": result.clamp_events,
        }
    finally:
        rt.close()


def cmd_sweep(args):
    cfg = _resolved_config(
        args, "sweep",
        extra={"d_step": args.d_step, "seeds": args.seeds, "workers": args.workers},
    )
    d_values = _parse_d_range(args.d, args.d_step)
    if args.seeds < 1:
        raise ParameterError(f"--seeds must be >= 1, got {args.seeds}")
    # validate once up front so a bad grid fails before any work
    for d in d_values:
        probe = dict(cfg)
        probe.update(d=d)
        _sampler_config(probe)

    tasks = [
        (dict(cfg, d=d, seed=cfg["seed"] + s), d, cfg["seed"] + s)
        for d in d_values
        for s in range(args.seeds)
    ]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_worker, tasks))
    else:
        rows = [_sweep_worker(task) for task in tasks]

    rows.sort(key=lambda r: (r["d"], r["seed"]))
    out_dir = _prepare_out(cfg)
    _write_json(out_dir / "config.json", cfg)
    lines = "".join(
        json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n" for row in rows
    )
    _atomic_write(out_dir / "sweep.jsonl",
                  lambda p: p.write_text(lines, encoding="utf-8"))
    summary = []
    for d in d_values:
        vals = [r["global"] for r in rows if r["d"] == d]
        summary.append({"d": d, "mean": sum(vals) / len(vals), "n": len(vals)})
        cell_cfg = dict(cfg)
        cell_cfg.update(d=d)
        _write_json(
            out_dir / f"metrics_{_config_hash(cell_cfg)}.json",
            {"d": d, "mean": sum(vals) / len(vals), "n": len(vals)},
        )
    _write_json(out_dir / "summary.json", summary)
    print(f"wrote {out_dir}/summary.json ({len(rows)} runs over "
          f"{len(d_values)} d values)")
    return EXIT_OK


def cmd_schedule_dump(args):
    sched = _schedule_for(args.schedule, args.t_train)
    start, end = _beta_range(args.schedule)
    payload = {
        "kind": sched.kind,
        "t_train": sched.t_train,
        "beta_start": start,
        "beta_end": end,
        "alpha_bar": [float(v) for v in sched.alpha_bar],
    }
    if args.out:
        out = Path(args.out)
        if out.parent != Path("."):
            out.parent.mkdir(parents=True, exist_ok=True)
        _write_json(out, payload)
        print(f"wrote {out}")
    else:
        json.dump(payload, sys.stdout, sort_keys=True, indent=2)
        sys.stdout.write("\n")
    return EXIT_OK


def cmd_protocol_echo(args):
    addr = args.addr or os.environ.get("PTDIFF_ADDR") or "127.0.0.1:0"
    host, port = parse_addr(addr)
    server = EchoServer(host=host, port=port)
    if args.check:
        with server:
            with Ptd1Client(server.addr) as client:
                probe = np.arange(8, dtype=np.float64).reshape(1, 2, 4)
                back = client.eps(probe, 500, 0)
                if not np.array_equal(back, probe):
                    raise BackendError("echo round trip mismatched")
                cond = client.embed_text("a watercolor forest")
                if cond == 0:
                    raise BackendError("non-empty text embedded to the null id")
        print("protocol echo round trip ok")
        return EXIT_OK
    server.start()
    print(f"echo server listening on {server.addr}", flush=True)
    try:
        server._thread.join()
    except KeyboardInterrupt:
        server.stop()
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ptdiff",
        description="Hidden-structure image generation via spectral phase "
                    "transfer between diffusion trajectories.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_invert = sub.add_parser("invert", help="invert a reference into noise")
    _common_flags(p_invert)
    p_invert.set_defaults(func=cmd_invert)

    p_gen = sub.add_parser("generate", help="full illusion pipeline")
    _common_flags(p_gen)
    p_gen.set_defaults(func=cmd_generate)

    p_abl = sub.add_parser("ablate", help="generate with one stage disabled")
    _common_flags(p_abl)
    p_abl.add_argument("--mode", choices=ABLATE_MODES, default=None)
    p_abl.set_defaults(func=cmd_ablate)

    p_sweep = sub.add_parser("sweep", help="grid of runs over d and seeds")
    _common_flags(p_sweep, with_generation=False)
    p_sweep.add_argument("--d-step", type=int, default=1)
    p_sweep.add_argument("--seeds", type=int, default=1,
                         help="number of consecutive seeds starting at --seed")
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.set_defaults(func=cmd_sweep)

    p_dump = sub.add_parser("schedule-dump", help="print the noise schedule")
    p_dump.add_argument("--schedule", choices=SCHEDULE_KINDS, default="linear")
    p_dump.add_argument("--t-train", type=int, default=DEFAULT_T_TRAIN)
    p_dump.add_argument("--out", default=None)
    p_dump.set_defaults(func=cmd_schedule_dump)

    p_echo = sub.add_parser("protocol-echo", help="loopback conformance server")
    p_echo.add_argument("--addr", default=None)
    p_echo.add_argument("--check", action="store_true",
                        help="run a self round trip and exit")
    p_echo.set_defaults(func=cmd_protocol_echo)

    parser.command_parsers = {
        "invert": p_invert,
        "generate": p_gen,
        "ablate": p_abl,
        "sweep": p_sweep,
    }
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _load_config_defaults(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except (ParameterError, DataError, ConditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
