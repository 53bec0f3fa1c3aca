"""Command-line surface: configuration, computation sweeps, CSV/JSON emission.

One JSON config document describes the tower, the coefficient family and any
command-specific grids; flags override config fields.  Every output carries
a header with the config hash and seed so a run can be reproduced
byte-for-byte (suppress the timestamp for strict determinism).

Exit codes: 0 success, 1 diverged/inconclusive computation, 2 config error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import measure, profile, spectral, transforms, walk_sim
from .measure import (
    ExplicitSequence,
    GeometricSequence,
    IteratedLogSequence,
    PolynomialSequence,
    tail_regularity,
)
from .presets import factorial_tail_sequence
from .tower import (
    CustomVolumesTower,
    FactorialTower,
    FiniteTruncatedTower,
    PowersOfTwoTower,
    level_radius,
)


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "tower": {"kind": "powers_of_two"},
    "coefficients": {"family": "geometric", "q": 0.5},
    "tol": 1e-14,
    "max_level": 10_000,
    "seed": 1,
    "format": "csv",
    "timestamp": True,
}


@dataclass
class RunConfig:
    data: dict

    @classmethod
    def load(cls, path: Optional[str], overrides: dict) -> "RunConfig":
        data = json.loads(json.dumps(DEFAULTS))
        if path:
            try:
                with open(path) as fh:
                    user = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(user, dict):
                raise ConfigError("config document must be a JSON object")
            data.update(user)
        for key, value in overrides.items():
            if value is not None:
                data[key] = value
        cfg = cls(data)
        cfg.validate()
        return cfg

    def validate(self):
        fmt = self.data.get("format")
        if fmt not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {fmt!r}")
        tol = self.data.get("tol")
        if not (isinstance(tol, (int, float)) and 0 < tol < 1):
            raise ConfigError(f"tol must lie in (0,1), got {tol!r}")
        if not isinstance(self.data.get("seed"), int):
            raise ConfigError("seed must be an integer")
        ml = self.data.get("max_level")
        if not (isinstance(ml, int) and ml >= 8):
            raise ConfigError(f"max_level must be an integer >= 8, got {ml!r}")
        self.tower()  # force constructor validation
        self.sequence()

    def canonical_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def tol(self) -> float:
        return self.data["tol"]

    def tower(self):
        spec = self.data.get("tower", {})
        kind = spec.get("kind")
        cap = self.data["max_level"]
        try:
            if kind == "powers_of_two":
                return PowersOfTwoTower(level_cap=cap)
            if kind == "factorial":
                return FactorialTower(level_cap=cap)
            if kind == "custom":
                return CustomVolumesTower(spec["volumes"], level_cap=cap)
            if kind == "finite":
                base = RunConfig({**self.data, "tower": spec["base"]}).tower()
                return FiniteTruncatedTower(base, int(spec["levels"]))
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"invalid tower spec: {exc}") from exc
        raise ConfigError(f"unknown tower kind {kind!r}")

    def sequence(self):
        spec = self.data.get("coefficients", {})
        if "path" in spec:
            try:
                with open(spec["path"]) as fh:
                    spec = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read coefficient file: {exc}") from exc
        family = spec.get("family")
        try:
            if family == "geometric":
                return GeometricSequence(float(spec["q"]))
            if family == "polynomial":
                return PolynomialSequence(float(spec["p"]))
            if family == "iterated_log":
                return IteratedLogSequence(int(spec["depth"]), float(spec["p"]))
            if family == "factorial_tails":
                return factorial_tail_sequence()
            if family == "explicit":
                return ExplicitSequence([float(c) for c in spec["coeffs"]])
            if family == "designed":
                return self._designed_sequence(spec)
        except ConfigError:
            raise
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"invalid coefficients: {exc}") from exc
        raise ConfigError(f"unknown coefficient family {family!r}")

    def _designed_sequence(self, spec):
        target = _decay_target(spec["decay"])
        tower = self.tower()
        if spec.get("designer") == "fast":
            return transforms.design_fast_decay(tower, target, label=spec["decay"])
        if spec.get("designer") == "slow":
            return transforms.design_slow_decay(tower, target, label=spec["decay"])
        raise ConfigError("designed coefficients need designer: fast|slow")

    def section(self, name: str) -> dict:
        sec = self.data.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"section {name!r} must be an object")
        return sec


def _decay_target(name: str):
    """Named decay profiles usable as designer targets."""
    if name == "log":
        return lambda t: math.log(t) if t > 1 else 0.0
    if name == "sqrt":
        return lambda t: math.sqrt(t)
    if name.startswith("pow:"):
        a = float(name.split(":", 1)[1])
        if not 0 < a < 1:
            raise ConfigError("pow:<a> needs 0 < a < 1")
        return lambda t: t**a
    if name == "loglog":
        return lambda t: math.log(1.0 + math.log1p(t))
    raise ConfigError(f"unknown decay target {name!r}")


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

class Emitter:
    def __init__(self, cfg: RunConfig, command: str, out):
        self.cfg = cfg
        self.command = command
        self.out = out
        self.fmt = cfg.data["format"]
        self._notes = []
        self._columns = None
        self._rows = []

    def note(self, text: str):
        self._notes.append(text)

    def table(self, columns, rows):
        self._columns = list(columns)
        self._rows = [list(r) for r in rows]

    def _header_fields(self):
        fields = {
            "command": self.command,
            "config_hash": self.cfg.digest,
            "seed": self.cfg.seed,
        }
        if self.cfg.data.get("timestamp", True):
            fields["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        return fields

    @staticmethod
    def _fmt(value):
        if isinstance(value, float):
            return repr(value)
        return str(value)

    def flush(self):
        if self.fmt == "csv":
            head = " ".join(f"{k}={v}" for k, v in self._header_fields().items())
            print(f"# {head}", file=self.out)
            for note in self._notes:
                print(f"# {note}", file=self.out)
            if self._columns:
                print(",".join(self._columns), file=self.out)
                for row in self._rows:
                    print(",".join(self._fmt(v) for v in row), file=self.out)
        else:
            doc = {
                "meta": {**self._header_fields(), "notes": self._notes},
                "rows": [dict(zip(self._columns or [], row)) for row in self._rows],
            }
            json.dump(doc, self.out, indent=1, sort_keys=True)
            print(file=self.out)


def _grid(section: dict, key: str, lo: float, hi: float, points: int):
    g = section.get(key, {})
    lo = float(g.get("start", lo))
    hi = float(g.get("stop", hi))
    points = int(g.get("points", points))
    if not (0 < lo < hi and points >= 2):
        raise ConfigError(f"grid {key} needs 0 < start < stop and points >= 2")
    return np.geomspace(lo, hi, points)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_spectrum(cfg: RunConfig, em: Emitter) -> int:
    tower, seq = cfg.tower(), cfg.sequence()
    sec = cfg.section("spectrum")
    levels = int(sec.get("levels", 32))
    dist = spectral.StepSpectralDistribution(seq, tower)
    pts = dist.jump_points(levels)
    em.note("spectrum = {0} union jump points; 0 is an accumulation point"
            if dist.accumulates_at_zero else "finite model: spectrum is the listed points plus 0")
    em.table(
        ["level", "eigenvalue", "spectral_mass"],
        [(k, lam, dist.value_at(lam)) for k, lam in enumerate(pts)],
    )
    return 0


def cmd_return(cfg: RunConfig, em: Emitter) -> int:
    tower, seq = cfg.tower(), cfg.sequence()
    sec = cfg.section("return")
    ts = _grid(sec, "t_grid", 1.0, 1e6, 61)
    dist = spectral.StepSpectralDistribution(seq, tower)
    rows = []
    for t in ts:
        t = float(t)
        rows.append((
            t,
            math.exp(dist.log_return_probability(t)),
            dist.decay_rate(t),
            dist.supnorm_power_bound(t),
        ))
    em.table(["t", "return_probability", "decay_rate", "supnorm_bound"], rows)
    return 0


def cmd_profile(cfg: RunConfig, em: Emitter) -> int:
    tower, seq = cfg.tower(), cfg.sequence()
    sec = cfg.section("profile")
    us = _grid(sec, "u_grid", 2.0, 1e6, 41)
    band = profile.ProfileBand(seq, tower)
    reg = tail_regularity(seq)
    em.note(f"tail_regularity holds={reg.holds} lambda={reg.lam:.6g} analytic={reg.analytic}")
    rows = [(float(u), band.lower_bound(float(u)), band.upper_bound(float(u))) for u in us]
    em.table(["u", "lower_bound", "folner_upper"], rows)
    return 0


def cmd_heat(cfg: RunConfig, em: Emitter) -> int:
    tower, seq = cfg.tower(), cfg.sequence()
    sec = cfg.section("heat")
    ts = _grid(sec, "t_grid", 1.0, 1e4, 13)
    levels = int(sec.get("levels", 12))
    dist = spectral.StepSpectralDistribution(seq, tower)
    rows = []
    for t in ts:
        for k in range(levels + 1):
            rho = level_radius(seq, k)
            band = dist.heat_kernel_band(float(t), level=k)
            rows.append((float(t), rho, dist.heat_kernel(float(t), level=k),
                         band.lower, band.upper))
    em.table(["t", "rho", "heat_kernel", "lower", "upper"], rows)
    return 0


def cmd_walk(cfg: RunConfig, em: Emitter) -> int:
    tower, seq = cfg.tower(), cfg.sequence()
    if not tower.has_elements():
        raise ConfigError("walk simulation needs a tower with element arithmetic")
    sec = cfg.section("walk")
    n = int(sec.get("steps", 16))
    walks = int(sec.get("walks", 20_000))
    shells = int(sec.get("shells", 8))
    levels = walk_sim.batch_final_levels(seq, tower, n, walks, cfg.seed)
    em.note(f"steps={n} walks={walks} seed={cfg.seed}")
    rows = []
    for k in range(shells + 1):
        emp = float(np.mean(levels == k))
        exact = (walk_sim.exit_mass(seq, tower, n, k - 1).exact if k > 0 else 1.0) - \
            walk_sim.exit_mass(seq, tower, n, k).exact
        se = math.sqrt(max(exact * (1 - exact), 1e-300) / walks)
        z = (emp - exact) / se if se > 0 else 0.0
        rows.append((k, emp, exact, se, z))
    em.table(["shell", "empirical", "exact", "stderr", "zscore"], rows)
    return 0


def cmd_recurrence(cfg: RunConfig, em: Emitter) -> int:
    tower, seq = cfg.tower(), cfg.sequence()
    report = spectral.classify_recurrence(seq, tower)
    em.note(f"verdict={report.verdict} basis={report.basis} ({report.details})")
    em.table(
        ["level", "term_reciprocal_volume_tail"],
        [(k, math.exp(v)) for k, v in enumerate(report.log_terms[:40])],
    )
    return 0 if report.verdict != "inconclusive" else 1


def cmd_design(cfg: RunConfig, em: Emitter) -> int:
    tower = cfg.tower()
    sec = cfg.section("design")
    designer = sec.get("designer", "fast")
    decay = sec.get("decay", "log" if designer == "fast" else "sqrt")
    depth = int(sec.get("depth", 24))
    target = _decay_target(decay)
    if designer == "fast":
        seq = transforms.design_fast_decay(tower, target, label=decay)
    elif designer == "slow":
        seq = transforms.design_slow_decay(tower, target, label=decay)
    else:
        raise ConfigError("designer must be fast or slow")
    trend = transforms.decay_trend_report(seq, tower, target,
                                          [1e2, 1e3, 1e4, 1e5])
    em.note(f"designer={designer} decay={decay} k0={seq.provenance['k0']} "
            f"trend={trend.direction} from n={trend.monotone_from:g}")
    if "emit" in sec:
        doc = {
            "family": "designed",
            "designer": designer,
            "decay": decay,
            "tower": cfg.data["tower"],
            "k0": seq.provenance["k0"],
            "coeffs": [seq.coeff(k) for k in range(depth + 1)],
            "tails": [seq.tail(k) for k in range(depth + 1)],
        }
        with open(sec["emit"], "w") as fh:
            json.dump(doc, fh, indent=1)
        em.note(f"coefficient file written to {sec['emit']}")
    em.table(
        ["level", "coeff", "tail"],
        [(k, seq.coeff(k), seq.tail(k)) for k in range(depth + 1)],
    )
    return 0


def cmd_transform(cfg: RunConfig, em: Emitter) -> int:
    sec = cfg.section("transform")
    kind = sec.get("kind", "inverse_power")
    param = float(sec.get("param", 1.0))
    depth = int(sec.get("depth", 1))
    xs = _grid(sec, "x_grid", 1.0, 1e6, 25)
    rate = transforms.reference_rate(kind, param, depth)
    ref = transforms.reference_transform(kind, param, depth)
    rows = []
    for x in xs:
        x = float(x)
        lt = transforms.legendre_transform(rate, x)
        kt = transforms.kohlbecker_transform(rate, x)
        rows.append((x, lt, kt, ref(x)))
    em.note(f"rate={kind}({param}) depth={depth}; reference column is the closed form")
    em.table(["x", "legendre", "kohlbecker", "reference"], rows)
    return 0


def cmd_validate(cfg: RunConfig, em: Emitter) -> int:
    """Compact oracle suite: exact identities on small frozen fixtures."""
    from . import oracle
    from .presets import dyadic_geometric

    checks = []

    base, seq = dyadic_geometric()
    trunc, folded, enum = oracle.make_fixture(base, seq, 8)
    mu = oracle.dense_measure(enum, folded)
    dist = spectral.StepSpectralDistribution(folded, trunc)
    power = mu
    ok = True
    for n in range(2, 9):
        power = oracle.convolve(power, mu)
        ok &= abs(power.at_identity() - dist.return_probability(float(n))) < 1e-12
    checks.append(("return_probability matches dense powers (n<=8)", ok))

    coeffs_half = [measure.semigroup_coeff(folded, k, 0.5) for k in range(9)]
    half_mu = oracle.DenseDistribution(
        enum,
        sum(c * oracle.uniform_on_level(enum, k).probs for k, c in enumerate(coeffs_half)),
    )
    prod = oracle.convolve(half_mu, half_mu)
    checks.append((
        "half-time convolution squares to the step law",
        bool(np.max(np.abs(prod.probs - mu.probs)) < 1e-12),
    ))

    gap = oracle.dirichlet_gap(oracle.subgroup_indices(enum, 1), mu)
    exact = profile.subgroup_spectral_gap(folded, trunc, 1, allow_finite=True)
    checks.append(("power iteration matches subgroup gap", abs(gap - exact) < 1e-6))

    resid = oracle.eigenfunction_residual(mu, folded, 0, enum.tower.identity())
    checks.append(("eigenfunction residual < 1e-12", resid < 1e-12))

    rows = [(name, "PASS" if ok else "FAIL") for name, ok in checks]
    em.table(["check", "status"], rows)
    return 0 if all(ok for _, ok in checks) else 1


COMMANDS = {
    "spectrum": cmd_spectrum,
    "return": cmd_return,
    "profile": cmd_profile,
    "heat": cmd_heat,
    "walk": cmd_walk,
    "recurrence": cmd_recurrence,
    "design": cmd_design,
    "transform": cmd_transform,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="towerwalk",
        description="Spectral quantities of level-averaged random walks on group towers.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON config document")
    parser.add_argument("--seed", type=int, help="RNG seed (overrides config)")
    parser.add_argument("--tol", type=float, help="series truncation tolerance")
    parser.add_argument("--max-level", type=int, dest="max_level")
    parser.add_argument("--format", choices=["csv", "json"])
    parser.add_argument("--no-timestamp", action="store_true",
                        help="omit the timestamp header field (byte-stable output)")
    parser.add_argument("--output", help="write to a file instead of stdout")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        "seed": args.seed,
        "tol": args.tol,
        "max_level": args.max_level,
        "format": args.format,
    }
    try:
        cfg = RunConfig.load(args.config, overrides)
        if args.no_timestamp:
            cfg.data["timestamp"] = False
        out = open(args.output, "w") if args.output else sys.stdout
        try:
            em = Emitter(cfg, args.command, out)
            code = COMMANDS[args.command](cfg, em)
            em.flush()
        finally:
            if args.output:
                out.close()
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError) as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
