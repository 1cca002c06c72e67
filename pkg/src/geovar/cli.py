"""Command-line runner: ``geovar {gac|beltrami|chanvese|gradcheck}``.

Every run writes ``trace.csv`` (or ``gradcheck.csv``), its outputs and a
``manifest.json`` holding the resolved configuration and SHA-256 checksums
of every artifact.  Exit codes: 0 success, 2 invalid configuration or
input (nothing is written), 3 numerical failure.  Failures print one JSON
line on stderr.  ``GEOVAR_LOG`` sets the logging level.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fixtures
from .beltrami import EmbeddingMap, PolyakovFunctional, evolve_beltrami, induced_metric
from .chanvese import ChanVeseFunctional, CvParams, OneSidedError, evolve_cv, region_means
from .curve import ClosedCurve
from .gac import EdgeIndicatorParams, GacFunctional, GacState, edge_indicator, evolve_gac
from .grid import ScalarField
from .io import ImageFormatError, curves_csv, encode_pgm, load_matrix, read_image
from .variation import InnerProductKind, check_gradient

log = logging.getLogger("geovar")

COMMANDS = ("gac", "beltrami", "chanvese", "gradcheck")
EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3

DEFAULTS = {
    "gac": {"sigma": 2.0, "contrast": 0.05, "nodes": 128, "init_radius": 45.0, "dt": 0.5,
            "steps": 4000, "kind": "geometric_curve", "resample_every": 20, "snapshot_every": 500,
            "fixture_radius": 25.0, "noise": 0.0},
    "beltrami": {"beta": 1.0, "dt": 0.2, "steps": 100, "refreeze_every": 1, "size": 64, "noise": 0.1},
    "chanvese": {"mode": "geometric", "mu": 0.05, "eps_h": 0.1, "eps_grad": 1e-8, "dt": 0.5,
                 "reinit_every": None, "reinit_on_stall": True, "max_steps": 2000, "tol": 1e-4, "init": "circle",
                 "init_radius": 40.0, "snapshot_every": 0, "fixture_radius": 20.0, "noise": 0.1,
                 "size": 128},
    "gradcheck": {"model": "gac", "kind": None, "trials": 20, "tolerance": None, "eps_h": 2.0},
}
GRADCHECK_MODELS = {
    # model: (default inner product, default tolerance)
    "gac": ("geometric_curve", 1e-4),
    "polyakov": ("geometric_surface", 1e-4),
    "chanvese": ("parameter_l2", 2e-3),
}


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


@dataclass
class RunConfig:
    command: str
    output_dir: str = "out"
    input_path: str | None = None
    seed: int = 0
    params: dict = field(default_factory=dict)

    @classmethod
    def build(cls, command: str, data: dict | None = None, overrides=(), output_dir=None,
              seed=None) -> "RunConfig":
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}")
        data = copy.deepcopy(data or {})
        params = dict(DEFAULTS[command])
        block = data.pop(command, {})
        for other in COMMANDS:
            data.pop(other, None)
        if not isinstance(block, dict):
            raise ConfigError(f"section {command!r} must be an object")
        cfg = cls(command, data.pop("output_dir", "out"), data.pop("input_path", None),
                  data.pop("seed", 0), params)
        if data:
            raise ConfigError(f"unknown top-level keys {sorted(data)}")
        cfg._merge(block)
        for item in overrides:
            key, sep, raw = item.partition("=")
            if not sep:
                raise ConfigError(f"override {item!r} is not key=value")
            key = key.removeprefix(command + ".")
            if key in ("output_dir", "input_path", "seed"):
                setattr(cfg, key, _parse_value(raw))
            else:
                cfg._merge({key: _parse_value(raw)})
        if output_dir is not None:
            cfg.output_dir = output_dir
        if seed is not None:
            cfg.seed = seed
        cfg.validate()
        return cfg

    def _merge(self, block: dict):
        unknown = set(block) - set(DEFAULTS[self.command])
        if unknown:
            raise ConfigError(f"unknown {self.command} parameters {sorted(unknown)}")
        self.params.update(block)

    def validate(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.input_path is not None and not Path(self.input_path).is_file():
            raise ConfigError(f"input file {self.input_path!r} does not exist")
        p = self.params
        try:
            if self.command == "gac":
                EdgeIndicatorParams(p["sigma"], p["contrast"])
                InnerProductKind.parse(p["kind"])
                _positive(p, "dt", "init_radius")
                _count(p, "steps", 1)
                _count(p, "nodes", 8)
                _count(p, "resample_every", 0)
                _count(p, "snapshot_every", 0)
            elif self.command == "beltrami":
                _positive(p, "beta", "dt")
                _count(p, "steps", 1)
                _count(p, "refreeze_every", 1)
                _count(p, "size", 3)
            elif self.command == "chanvese":
                if p["mode"] not in ("classical", "geometric"):
                    raise ConfigError(f"mode must be classical or geometric, not {p['mode']!r}")
                self.cv_params()
                _positive(p, "init_radius")
                _count(p, "snapshot_every", 0)
                _count(p, "size", 3)
                if p["init"] not in ("circle", "checkerboard") and not Path(p["init"]).is_file():
                    raise ConfigError(f"init must be circle, checkerboard or a matrix file, not {p['init']!r}")
            else:
                if p["model"] not in GRADCHECK_MODELS:
                    raise ConfigError(f"model must be one of {sorted(GRADCHECK_MODELS)}")
                InnerProductKind.parse(self.gradcheck_kind())
                _count(p, "trials", 1)
                _positive(p, "eps_h")
                if p["tolerance"] is not None:
                    _positive(p, "tolerance")
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from None
        if self.command == "gradcheck" and self.input_path is not None:
            raise ConfigError("gradcheck runs on synthetic fixtures only")

    def cv_params(self) -> CvParams:
        p = self.params
        return CvParams(mu=p["mu"], eps_h=p["eps_h"], eps_grad=p["eps_grad"], dt=p["dt"],
                        reinit_every=p["reinit_every"], max_steps=p["max_steps"], tol=p["tol"],
                        reinit_on_stall=bool(p["reinit_on_stall"]))

    def gradcheck_kind(self) -> str:
        return self.params["kind"] or GRADCHECK_MODELS[self.params["model"]][0]

    def gradcheck_tolerance(self) -> float:
        return self.params["tolerance"] or GRADCHECK_MODELS[self.params["model"]][1]

    def echo(self) -> dict:
        return {"command": self.command, "input_path": self.input_path, "seed": self.seed,
                self.command: dict(self.params)}


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _positive(p, *names):
    for n in names:
        if not (isinstance(p[n], (int, float)) and not isinstance(p[n], bool) and p[n] > 0):
            raise ConfigError(f"{n} must be positive, got {p[n]!r}")


def _count(p, name, low):
    v = p[name]
    if not isinstance(v, int) or isinstance(v, bool) or v < low:
        raise ConfigError(f"{name} must be an integer >= {low}, got {v!r}")


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


# -- inputs ------------------------------------------------------------------

def _gray_input(cfg: RunConfig):
    """Input image or ``None``; format problems are configuration errors."""
    if cfg.input_path is None:
        return None
    try:
        img = read_image(cfg.input_path)
    except ImageFormatError as exc:
        raise ConfigError(f"{exc.code}: {exc}") from None
    return img


def _prepare(cfg: RunConfig):
    """Load and check everything a run needs before any output is written."""
    p = cfg.params
    img = _gray_input(cfg)
    if cfg.command == "gac":
        if img is None:
            img = fixtures.noisy_disk(128, p["fixture_radius"], p["noise"], cfg.seed) if p["noise"] \
                else fixtures.disk_image(128, p["fixture_radius"])
        if isinstance(img, tuple):
            img = img[0].with_values(np.mean([c.values for c in img], axis=0))
        s = img.spec
        center = ((s.nx - 1) * s.hx / 2, (s.ny - 1) * s.hy / 2)
        return img, ClosedCurve.circle(p["init_radius"], p["nodes"], center)
    if cfg.command == "beltrami":
        if img is None:
            clean = fixtures.smooth_random_image(p["size"], cfg.seed)
            rng = np.random.default_rng(cfg.seed)
            img = clean.with_values(clean.values + p["noise"] * rng.standard_normal(clean.values.shape))
        return (img,) if isinstance(img, ScalarField) else img
    if cfg.command == "chanvese":
        truth = None
        if img is None:
            n = p["size"]
            img = fixtures.noisy_disk(n, p["fixture_radius"], p["noise"], cfg.seed)
            truth = fixtures.disk_mask(n, p["fixture_radius"])
        if isinstance(img, tuple):
            img = img[0].with_values(np.mean([c.values for c in img], axis=0))
        if p["init"] == "circle":
            phi0 = fixtures.circle_sdf(img.spec, p["init_radius"])
        elif p["init"] == "checkerboard":
            phi0 = fixtures.checkerboard_phi(img.spec)
        else:
            try:
                phi0 = load_matrix(p["init"], img.spec.hx, img.spec.hy)
            except ValueError as exc:
                raise ConfigError(f"cannot load initial level set: {exc}") from None
            if phi0.spec != img.spec:
                raise ConfigError("initial level set and image sizes differ")
        if not (np.any(phi0.values > 0) and np.any(phi0.values < 0)):
            raise ConfigError("initial level set must have both signs")
        return img, phi0, truth
    return None


# -- runs ---------------------------------------------------------------------

def _run_gac(cfg, prepared, out: dict):
    img, c0 = prepared
    p = cfg.params
    g = edge_indicator(img, EdgeIndicatorParams(p["sigma"], p["contrast"]))
    final, trace = evolve_gac(GacState(c0, g), p["dt"], p["steps"], p["kind"],
                              resample_every=p["resample_every"], snapshot_every=p["snapshot_every"])
    curves = list(trace.snapshots)
    if not curves or curves[-1][0] != trace.stop_step:
        curves.append((trace.stop_step, final))
    out["trace.csv"] = trace.to_csv().encode()
    out["curves.csv"] = curves_csv(curves).encode()
    metrics = {"final_nodes": len(final), "final_energy": trace.rows[-1].energy}
    if trace.status == "collapsed":
        raise NumericalFailure(f"curve collapsed at step {trace.stop_step}")
    return trace, metrics


def _run_beltrami(cfg, channels, out: dict):
    p = cfg.params
    final, trace = evolve_beltrami(EmbeddingMap(tuple(channels), p["beta"]), p["dt"], p["steps"],
                                   p["refreeze_every"])
    out["trace.csv"] = trace.to_csv().encode()
    for k, ch in enumerate(final.channels):
        out[f"channel{k}.pgm" if len(final.channels) > 1 else "result.pgm"] = encode_pgm(ch.values, 255)
        out[f"channel{k}.txt" if len(final.channels) > 1 else "result.txt"] = _matrix_bytes(ch)
    if trace.status == "non-finite":
        raise NumericalFailure(f"non-finite values at step {trace.stop_step}")
    return trace, {"final_action": trace.rows[-1].energy}


def _run_chanvese(cfg, prepared, out: dict):
    img, phi0, truth = prepared
    p = cfg.params
    state, trace = evolve_cv(img, phi0, cfg.cv_params(), p["mode"], snapshot_every=p["snapshot_every"])
    out["trace.csv"] = trace.to_csv().encode()
    mask = state.phi.values > 0
    out["mask.pgm"] = encode_pgm(mask.astype(float), 255)
    out["phi.txt"] = _matrix_bytes(state.phi)
    for step, phi in trace.snapshots:
        out[f"phi_{step:06d}.txt"] = _matrix_bytes(phi)
    metrics = {"c1": state.stats.c1, "c2": state.stats.c2}
    if truth is not None:
        metrics["mask_accuracy"] = float(np.mean(mask == truth))
    if trace.status == "collapsed":
        raise NumericalFailure(f"level set became one-sided at step {trace.stop_step}")
    return trace, metrics


def _run_gradcheck(cfg, _prepared, out: dict):
    p = cfg.params
    kind = cfg.gradcheck_kind()
    rng = np.random.default_rng(cfg.seed)
    if p["model"] == "gac":
        g = edge_indicator(fixtures.disk_image(128, 25.0), EdgeIndicatorParams(2.0, 0.05))
        F, state = GacFunctional(g), fixtures.ellipse_curve(256, 40.0, 28.0, (64.2, 63.7)).points
    elif p["model"] == "polyakov":
        img = fixtures.smooth_random_image(32, cfg.seed)
        e = EmbeddingMap((img,), 3.0)
        F, state = PolyakovFunctional(induced_metric(e), e.beta), img.values
    else:
        img = fixtures.noisy_disk(128, 20.0, 0.1, cfg.seed)
        center = 64.0 + rng.uniform(-1, 1, size=2)
        phi = fixtures.circle_sdf(img.spec, 30.0, tuple(center))
        params = CvParams(eps_h=p["eps_h"])
        F, state = ChanVeseFunctional(img, region_means(img, phi, params.eps_h), params), phi.values
    report = check_gradient(F, kind, state, trials=p["trials"], seed=cfg.seed,
                            tolerance=cfg.gradcheck_tolerance())
    lines = ["trial,directional_gradient,finite_difference,rel_error"]
    lines += [f"{t},{lhs!r},{rhs!r},{err!r}" for t, lhs, rhs, err in report.rows]
    out["gradcheck.csv"] = ("\n".join(lines) + "\n").encode()
    metrics = {"max_rel_error": report.max_rel_error, "tolerance": report.tolerance,
               "passed": report.passed, "kind": report.kind.value}
    if not report.passed:
        raise NumericalFailure(f"gradient check failed: max rel error {report.max_rel_error:.3e} "
                               f"> {report.tolerance:.1e}")
    return None, metrics


def _matrix_bytes(f: ScalarField) -> bytes:
    buf = io.BytesIO()
    np.savetxt(buf, f.values, fmt="%.17g")
    return buf.getvalue()


RUNNERS = {"gac": _run_gac, "beltrami": _run_beltrami, "chanvese": _run_chanvese,
           "gradcheck": _run_gradcheck}


def _write(cfg: RunConfig, artifacts: dict, trace, metrics, status, reason=None):
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    sums = {}
    for name in sorted(artifacts):
        (outdir / name).write_bytes(artifacts[name])
        sums[name] = hashlib.sha256(artifacts[name]).hexdigest()
    manifest = {"config": cfg.echo(), "status": status, "metrics": metrics, "artifacts": sums}
    if trace is not None:
        manifest["trace_status"] = trace.status
        manifest["stop_step"] = trace.stop_step
    if reason:
        manifest["reason"] = reason
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _fail(code: int, kind: str, reason: str) -> int:
    print(json.dumps({"exit": code, "error": kind, "reason": reason}), file=sys.stderr)
    return code


def run(cfg: RunConfig) -> int:
    """Run a validated configuration; see the module docstring for exit codes."""
    try:
        cfg.validate()
        prepared = _prepare(cfg)
    except ConfigError as exc:
        return _fail(EXIT_INVALID, "validation", str(exc))
    artifacts: dict[str, bytes] = {}
    metrics: dict = {}
    try:
        trace, metrics = RUNNERS[cfg.command](cfg, prepared, artifacts)
    except NumericalFailure as exc:
        _write(cfg, artifacts, None, metrics, "numerical_failure", str(exc))
        return _fail(EXIT_NUMERIC, "numerical", str(exc))
    except (FloatingPointError, OneSidedError) as exc:
        _write(cfg, artifacts, None, metrics, "numerical_failure", str(exc))
        return _fail(EXIT_NUMERIC, "numerical", str(exc))
    _write(cfg, artifacts, trace, metrics, "ok")
    log.info("%s finished; outputs in %s", cfg.command, cfg.output_dir)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="geovar", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON configuration file")
    ap.add_argument("--out", help="output directory (default: out)")
    ap.add_argument("--seed", type=int, help="seed for fixtures and probe directions")
    ap.add_argument("overrides", nargs="*", metavar="key=value",
                    help="parameter overrides; values are parsed as JSON when possible")
    return ap


def main(argv=None) -> int:
    level = logging.getLevelName(os.environ.get("GEOVAR_LOG", "WARNING").upper())
    logging.basicConfig(level=level if isinstance(level, int) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_intermixed_args(argv)
    try:
        data = load_config(args.config) if args.config else {}
        cfg = RunConfig.build(args.command, data, args.overrides, args.out, args.seed)
    except ConfigError as exc:
        return _fail(EXIT_INVALID, "validation", str(exc))
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
