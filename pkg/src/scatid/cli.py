"""Command-line front end: ``scatid {gen,sound,identify,analyze}``.

Configuration is a flat ``key=value`` file (``--config``) with any key
overridable on the command line as ``--key value``.  A run directory
holds everything one command hands to the next:

    grid.txt         grid parameters, master seed, weight seed, cond
    cover.csv        j,a,b,occupied
    mask.txt         occupancy mask, n_a lines of n_b 0/1 characters
    weights.csv      k,re,im
    scattering.csv   a,b,s,q,value (the true scattering function)
    echoes.bin       SCID echo ensemble (``sound``)
    reconstruction_<mode>.csv, identify_<mode>.txt   (``identify``)
    mc_report.txt, mc_points.csv                      (``analyze``)

Every file except ``scatid.log`` is a deterministic function of the
configuration and master seed.

Exit codes: 0 success, 2 usage or configuration error, 3 ill-conditioned
frame.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import formats
from .analysis import monte_carlo
from .channel import simulate_echoes
from .gabor import RNG_NAME, IllConditionedFrame, build_frame_matrices, random_weights
from .grid import ScatteringFunction, assemble, build_cover, build_grid
from .ident import estimate_raw, identify_oracle, _to_scattering

log = logging.getLogger("scatid")

CONFIG_KEYS = {
    "J", "T", "n_t", "n_g", "n_a", "n_b", "mask", "cells", "scattering", "synth",
    "seed", "L", "trials", "scale", "scaling_trials", "out", "in", "threads", "mode",
}
MAX_RESEED = 32

# stream tags for seeds derived from the master seed
_WEIGHTS, _SYNTH, _SOUND, _ANALYZE = 1, 2, 3, 4


class ConfigError(ValueError):
    pass


def derive_seed(master: int, tag: int, *extra: int) -> int:
    ss = np.random.SeedSequence([int(master) % 2**64, tag, *extra])
    return int(ss.generate_state(1, np.uint64)[0])


def load_config(path: str | None, overrides: list[str]) -> dict[str, str]:
    cfg: dict[str, str] = {}
    if path is not None:
        cfg.update(formats.read_manifest(path))
        base = Path(path).parent
        for key in ("mask", "scattering"):
            if key in cfg and not Path(cfg[key]).is_absolute():
                cfg[key] = str(base / cfg[key])
    i = 0
    while i < len(overrides):
        tok = overrides[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        elif i + 1 < len(overrides):
            value = overrides[i + 1]
            i += 2
        else:
            raise ConfigError(f"missing value for {tok}")
        norm = key.replace("-", "_")
        cfg[norm if norm in CONFIG_KEYS else key] = value
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    return cfg


def _require(cfg, key, conv=str):
    if key not in cfg:
        raise ConfigError(f"missing configuration key {key!r}")
    try:
        return conv(cfg[key])
    except ValueError:
        raise ConfigError(f"bad value for {key}: {cfg[key]!r}") from None


def _parse_cells(text: str, n_a: int, n_b: int) -> np.ndarray:
    mask = np.zeros((n_a, n_b), dtype=bool)
    for item in filter(None, (t.strip() for t in text.split(","))):
        a, b = (int(v) for v in item.split(":"))
        if not (0 <= a < n_a and 0 <= b < n_b):
            raise ConfigError(f"cell {a}:{b} outside the {n_a}x{n_b} box")
        mask[a, b] = True
    return mask


def _synth_values(spec: str, grid, cover, master: int) -> np.ndarray:
    kind, _, arg = spec.partition(":")
    values = np.zeros((grid.J, grid.n_t, grid.n_g))
    occ = slice(0, cover.occupied)
    if kind == "constant":
        values[occ] = float(arg or 1.0)
    elif kind == "random":
        seed = int(arg) if arg else derive_seed(master, _SYNTH)
        rng = np.random.Generator(np.random.PCG64(seed))
        values[occ] = rng.uniform(0.1, 1.0, size=values[occ].shape)
    else:
        raise ConfigError(f"unknown synth spec {spec!r} (use constant:VALUE or random[:SEED])")
    return values


def _load_run(indir: Path):
    rec = formats.read_manifest(indir / "grid.txt")
    grid = formats.grid_from_record(rec)
    cover = formats.read_cover_csv(indir / "cover.csv")
    w = formats.read_weights_csv(indir / "weights.csv")
    sf = formats.read_scattering_csv(indir / "scattering.csv", grid, cover)
    return rec, grid, cover, w, sf


def _dirs(cfg):
    out = Path(_require(cfg, "out"))
    out.mkdir(parents=True, exist_ok=True)
    return Path(cfg.get("in", out)), out


def _max_rel_error(estimate: ScatteringFunction, truth: ScatteringFunction) -> float:
    ref = np.abs(assemble(truth)).max()
    err = np.abs(assemble(estimate) - assemble(truth)).max()
    return float(err / ref) if ref > 0 else float(err)


def cmd_gen(cfg) -> int:
    _, out = _dirs(cfg)
    master = _require(cfg, "seed", int)
    grid = build_grid(_require(cfg, "J", int), _require(cfg, "T", float), _require(cfg, "n_t", int),
                      _require(cfg, "n_g", int), _require(cfg, "n_a", int), _require(cfg, "n_b", int))
    if "mask" in cfg:
        mask = formats.read_mask(cfg["mask"])
    elif "cells" in cfg:
        mask = _parse_cells(cfg["cells"], grid.n_a, grid.n_b)
    else:
        raise ConfigError("need either mask=PATH or cells=a:b,...")
    cover = build_cover(grid, mask)
    if "scattering" in cfg:
        sf = formats.read_scattering_csv(cfg["scattering"], grid, cover)
    else:
        sf = ScatteringFunction(grid, cover, _synth_values(cfg.get("synth", "constant:1"), grid, cover, master))

    for attempt in range(MAX_RESEED):
        wseed = derive_seed(master, _WEIGHTS, attempt)
        w = random_weights(grid.J, wseed)
        try:
            fm = build_frame_matrices(w, cover)
            break
        except IllConditionedFrame:
            log.info("weights attempt %d ill-conditioned, reseeding", attempt)
    else:
        raise IllConditionedFrame(
            f"no well-conditioned weights in {MAX_RESEED} draws; the cover is likely "
            "degenerate (two cells congruent mod J)")

    record = formats.grid_record(grid)
    record.update({"seed": master, "weights_seed": wseed, "weights_attempt": attempt,
                   "rng": RNG_NAME, "cond": repr(fm.cond),
                   "cond_U": repr(float(np.linalg.cond(fm.U))),
                   "occupied": cover.occupied, "box_area": repr(grid.box_area)})
    formats.write_manifest(out / "grid.txt", record)
    formats.write_cover_csv(out / "cover.csv", cover)
    formats.write_mask(out / "mask.txt", mask)
    formats.write_weights_csv(out / "weights.csv", w)
    formats.write_scattering_csv(out / "scattering.csv", sf)
    log.info("gen: wrote run files to %s", out)
    return 0


def cmd_sound(cfg) -> int:
    indir, out = _dirs(cfg)
    rec, grid, cover, w, sf = _load_run(indir)
    L = _require(cfg, "L", int)
    if L < 1:
        raise ConfigError(f"L must be >= 1, got {L}")
    master = int(cfg.get("seed", rec["seed"]))
    seed = derive_seed(master, _SOUND)
    echoes = simulate_echoes(sf, w, L, seed)
    formats.write_echoes(out / "echoes.bin", echoes)
    formats.write_manifest(out / "sound.txt", {"seed": master, "echo_seed": seed, "L": L,
                                               "rng": RNG_NAME, "N_total": grid.n_total})
    log.info("sound: %d echoes -> %s", L, out / "echoes.bin")
    return 0


def cmd_identify(cfg) -> int:
    indir, out = _dirs(cfg)
    mode = _require(cfg, "mode")
    if mode not in ("oracle", "estimate"):
        raise ConfigError(f"mode must be oracle or estimate, got {mode!r}")
    rec, grid, cover, w, sf = _load_run(indir)
    fm = build_frame_matrices(w, cover)
    record = {"mode": mode, "seed": rec["seed"], "J": grid.J, "T": repr(grid.T),
              "n_t": grid.n_t, "n_g": grid.n_g}
    if mode == "oracle":
        result = identify_oracle(sf, w, fm)
        record["L"] = "inf"
    else:
        echoes = formats.read_echoes(indir / "echoes.bin", grid)
        raw = estimate_raw(echoes, w, cover, fm)
        result = _to_scattering(raw, grid, cover, clamp=True)
        occ = raw[:cover.occupied]
        record.update({"L": echoes.L,
                       "clamped_points": int(np.sum(occ.real < 0)),
                       "max_abs_imag": repr(float(np.abs(occ.imag).max(initial=0.0)))})
    record.update({"cond": repr(fm.cond), "cond_U": repr(float(np.linalg.cond(fm.U))),
                   "max_relative_error": repr(_max_rel_error(result, sf))})
    formats.write_scattering_csv(out / f"reconstruction_{mode}.csv", result)
    formats.write_manifest(out / f"identify_{mode}.txt", record)
    log.info("identify (%s): max relative error %s", mode, record["max_relative_error"])
    return 0


def cmd_analyze(cfg) -> int:
    indir, out = _dirs(cfg)
    rec, grid, cover, w, sf = _load_run(indir)
    master = int(cfg.get("seed", rec["seed"]))
    L = _require(cfg, "L", int)
    trials = _require(cfg, "trials", int)
    scale = int(cfg.get("scale", 4))
    scaling_trials = int(cfg.get("scaling_trials", trials))
    if L < 1 or trials < 2:
        raise ConfigError("analyze needs L >= 1 and trials >= 2")
    threads = int(cfg.get("threads", 1))
    seed = derive_seed(master, _ANALYZE)
    report = monte_carlo(sf, w, cover, L, trials, seed, scale=scale,
                         scaling_trials=scaling_trials, threads=threads)
    formats.write_mc_report(out / "mc_report.txt", out / "mc_points.csv", report,
                            extra={"master_seed": master, "rng": RNG_NAME})
    log.info("analyze: slack ratio %.3e, scaling ratio %.3f", report.slack_ratio, report.scaling_ratio)
    return 0


COMMANDS = {"gen": cmd_gen, "sound": cmd_sound, "identify": cmd_identify, "analyze": cmd_analyze}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scatid", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--out", help="run directory to write")
    p.add_argument("--in", dest="indir", help="run directory to read (default: --out)")
    p.add_argument("--mode", choices=("oracle", "estimate"))
    p.add_argument("--threads", type=int, help="worker cap for analyze")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)
    try:
        cfg = load_config(args.config, rest)
        for key, value in (("seed", args.seed), ("out", args.out), ("in", args.indir),
                           ("mode", args.mode), ("threads", args.threads)):
            if value is not None:
                cfg[key] = str(value)
        if "out" in cfg:
            Path(cfg["out"]).mkdir(parents=True, exist_ok=True)
            handler = logging.FileHandler(Path(cfg["out"]) / "scatid.log")
            handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
            log.addHandler(handler)
            log.setLevel(logging.INFO)
        return COMMANDS[args.command](cfg)
    except IllConditionedFrame as exc:
        print(f"scatid: {exc}", file=sys.stderr)
        return 3
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"scatid: {exc}", file=sys.stderr)
        return 2
    finally:
        for h in list(log.handlers):
            log.removeHandler(h)
            h.close()


if __name__ == "__main__":
    sys.exit(main())
