"""Experiment runner.

Commands::

    qem run config.json [-o OUTDIR]
    qem calibrate-readout config.json -o A.json
    qem compare results.csv

Exit codes: 0 success, 2 invalid input (schema, unknown method, unreadable
file), 3 simulation failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import learn, pec, purify, readout, symx, zne
from .core import channels as chans
from .core.circuit import Location, NoisyCircuit, run_circuit
from .core.gates import gate
from .core.paulis import observable
from .core.rng import stream
from .core.sampling import sample_shots
from .core.states import expectation
from .stats import CSV_FIELDS, EstimatorReport, exact_report, summarize, write_reports_csv

log = logging.getLogger("qem")

METHODS = ("raw", "zne", "pec", "readout", "sv", "subspace", "vd", "ev", "learn")
EXACT_ONLY = ("subspace", "vd", "ev")

_NOISE = {
    "type": "object",
    "required": ["channel", "p"],
    "properties": {
        "channel": {
            "enum": ["pauli", "depolarizing", "dephasing", "bit_flip", "global_depolarizing", "coherent_z"]
        },
        "p": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "targets": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "probs": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
        "theta": {"type": "number"},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "required": ["n_qubits", "circuit", "observable", "methods"],
    "properties": {
        "n_qubits": {"type": "integer", "minimum": 1, "maximum": 12},
        "circuit": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["gate", "targets"],
                "properties": {
                    "gate": {"type": "string"},
                    "targets": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                    "theta": {"type": "number"},
                    "noise": _NOISE,
                },
                "additionalProperties": False,
            },
        },
        "default_noise": _NOISE,
        "observable": {"type": "object", "minProperties": 1, "additionalProperties": {"type": "number"}},
        "methods": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name"],
                "properties": {
                    "name": {"enum": list(METHODS)},
                    "model": {"enum": list(zne.MODELS)},
                    "nodes": {"type": "array", "items": {"type": "number", "minimum": 1}, "minItems": 1},
                    "degree": {"type": "integer", "minimum": 0},
                    "abscissa": {"enum": ["auto", "scale", "fault_rate"]},
                    "lambda_target": {"type": "number", "minimum": 0},
                    "decomposition": {"enum": ["rewrite", "inversion"]},
                    "twirl": {"type": "boolean"},
                    "symmetries": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                    "eigenvalues": {"type": "array", "items": {"enum": [1, -1]}},
                    "sv_mode": {"enum": ["direct", "postprocess"]},
                    "basis": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                    "hamiltonian": {"type": "object", "additionalProperties": {"type": "number"}},
                    "copies": {"type": "integer", "minimum": 1},
                    "train_count": {"type": "integer", "minimum": 2},
                    "truncate_top": {"type": "integer", "minimum": 2},
                    "form": {"enum": ["full", "tensor"]},
                    "ibu": {"type": "boolean"},
                    "label": {"type": "string"},
                },
                "additionalProperties": False,
            },
        },
        "shots": {"type": "integer", "minimum": 2},
        "seed": {"type": "integer", "minimum": 0},
        "mode": {"enum": ["exact", "sampled"]},
        "readout": {
            "type": "object",
            "properties": {
                "flips": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
                "pauli": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
                "assignment": {"type": "string"},
                "form": {"enum": ["full", "tensor"]},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
    "if": {"properties": {"mode": {"const": "sampled"}}, "required": ["mode"]},
    "then": {"required": ["seed", "shots"]},
}


class ConfigError(ValueError):
    """Invalid experiment configuration (exit code 2)."""


def _noise_channel(spec: dict, gate_targets: tuple[int, ...], n: int):
    name = spec["channel"]
    targets = tuple(spec.get("targets", gate_targets))
    if name == "global_depolarizing":
        targets = tuple(range(n))
        return chans.CompleteDepolarizing(n), targets
    k = len(targets)
    if name == "depolarizing":
        return chans.CompleteDepolarizing(k), targets
    if name in ("dephasing", "bit_flip"):
        letter = "Z" if name == "dephasing" else "X"
        return chans.PauliChannel({letter * k: 1.0}, name=name), targets
    if name == "pauli":
        if "probs" not in spec:
            raise ConfigError("pauli noise needs 'probs'")
        total = sum(spec["probs"].values())
        return chans.PauliChannel({lab: v / total for lab, v in spec["probs"].items()}), targets
    if name == "coherent_z":
        if k != 1:
            raise ConfigError("coherent_z noise acts on one qubit")
        return chans.coherent_z_rotation(spec.get("theta", 0.0)), targets
    raise ConfigError(f"unknown noise channel {name!r}")


def build_circuit(cfg: dict) -> NoisyCircuit:
    n = cfg["n_qubits"]
    default = cfg.get("default_noise")
    locs = []
    for k, item in enumerate(cfg["circuit"]):
        try:
            g = gate(item["gate"], *item["targets"], theta=item.get("theta"))
        except ValueError as exc:
            raise ConfigError(f"circuit[{k}]: {exc}") from None
        noise = item.get("noise", default)
        if noise is None or noise["p"] == 0:
            locs.append(Location(g))
            continue
        ch, targets = _noise_channel(noise, g.targets, n)
        locs.append(Location(g, ch, noise["p"], targets))
    try:
        return NoisyCircuit(n, tuple(locs))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def read_config(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from None


def validate_config(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema violation at {where}: {exc.message}") from None
    try:
        observable(cfg["observable"])
        if any(len(lab) != cfg["n_qubits"] for lab in cfg["observable"]):
            raise ValueError("observable labels must have one letter per qubit")
    except ValueError as exc:
        raise ConfigError(f"observable: {exc}") from None
    return cfg


def load_config(path) -> dict:
    return validate_config(read_config(path))


# command-line flag -> method-block key
_METHOD_FLAGS = {
    "model": "model",
    "nodes": "nodes",
    "degree": "degree",
    "lambda_target": "lambda_target",
    "decomposition": "decomposition",
    "symmetries": "symmetries",
    "sv_mode": "sv_mode",
    "basis": "basis",
    "copies": "copies",
    "train_count": "train_count",
    "truncate_top": "truncate_top",
}


def apply_overrides(cfg: dict, args) -> dict:
    """Fold ``qem run`` flags into the config; ``--method`` replaces the method list."""
    cfg = dict(cfg)
    for key in ("mode", "shots", "seed"):
        if getattr(args, key, None) is not None:
            cfg[key] = getattr(args, key)
    if getattr(args, "method", None):
        block = {"name": args.method}
        for flag, key in _METHOD_FLAGS.items():
            value = getattr(args, flag, None)
            if value is not None:
                block[key] = value
        if getattr(args, "twirl", False):
            block["twirl"] = True
        cfg["methods"] = [block]
    return cfg


def _readout_channel(spec: dict, n: int):
    if "flips" in spec:
        if len(spec["flips"]) != n:
            raise ConfigError("readout flips need one probability per qubit")
        return chans.tensor(*(chans.bit_flip(q) for q in spec["flips"]))
    if "pauli" in spec:
        return chans.PauliChannel(spec["pauli"])
    raise ConfigError("readout block needs 'flips' or 'pauli'")


def _assignment(cfg: dict, base: Path, form: str) -> tuple[readout.AssignmentMatrix, object]:
    spec = cfg.get("readout")
    if not spec:
        raise ConfigError("the readout method needs a 'readout' block")
    ch = _readout_channel(spec, cfg["n_qubits"]) if ("flips" in spec or "pauli" in spec) else None
    if "assignment" in spec:
        a = readout.AssignmentMatrix.load(base / spec["assignment"])
    elif ch is not None:
        a = readout.calibrate(ch, form)
    else:
        raise ConfigError("readout block needs a channel or an assignment file")
    return a, ch


class Runner:
    """Evaluates the method blocks of one configuration."""

    def __init__(self, cfg: dict, base: Path, threads: int = 1):
        self.cfg = cfg
        self.base = base
        self.threads = threads
        self.circuit = build_circuit(cfg)
        self.obs = observable(cfg["observable"])
        self.mode = cfg.get("mode", "exact")
        self.shots = cfg.get("shots", 0)
        self.seed = cfg.get("seed", 0)
        self.rho = run_circuit(self.circuit, 1.0)
        self.reference = expectation(run_circuit(self.circuit, 0.0), self.obs)
        self.sweep_rows: list[dict] = []

    @property
    def sampled(self) -> bool:
        return self.mode == "sampled"

    def method_seed(self, k: int) -> int:
        return int(stream(self.seed, k).integers(0, 2**63))

    def ideal(self) -> EstimatorReport:
        return exact_report(self.reference, self.reference, method="ideal")

    def raw(self, block: dict, seed: int) -> EstimatorReport:
        if not self.sampled:
            return exact_report(expectation(self.rho, self.obs), self.reference, method="raw")
        return summarize(sample_shots(self.rho, self.obs, self.shots, seed), self.reference, method="raw", seed=seed)

    def run_zne(self, block: dict, seed: int) -> EstimatorReport:
        cfg = zne.ZneConfig(
            nodes=tuple(block.get("nodes", (1.0, 2.0))),
            model=block.get("model", "richardson"),
            degree=block.get("degree"),
            shots_per_node=self.shots if self.sampled else 0,
            abscissa=block.get("abscissa", "auto"),
        )
        rep = zne.zne_mitigate(self.circuit, self.obs, cfg, seed, workers=self.threads)
        label = block.get("label", rep.method)
        for row in rep.extras["sweep"]:
            self.sweep_rows.append({"method": label, **row})
        return rep

    def run_pec(self, block: dict, seed: int) -> EstimatorReport:
        mode = "sampled" if self.sampled else "propagate"
        kwargs = dict(method=block.get("decomposition", "rewrite"), twirl=block.get("twirl", False))
        if "lambda_target" in block:
            rep = pec.partial_pec(self.circuit, block["lambda_target"], self.obs, self.shots, seed, mode, **kwargs)
        else:
            rep = pec.pec_mitigate(self.circuit, self.obs, self.shots, seed, mode=mode, **kwargs)
        return _with_overhead(rep, rep.extras["predicted_overhead"])

    def run_readout(self, block: dict, seed: int) -> EstimatorReport:
        if not self.obs.is_diagonal():
            raise ValueError("readout mitigation needs a computational-basis observable")
        a, ch = _assignment(self.cfg, self.base, block.get("form", self.cfg.get("readout", {}).get("form", "full")))
        spectrum = self.obs.diagonal()
        p_true = readout.readout_distribution(self.rho.elements)
        if ch is not None:
            p_noisy = readout.readout_distribution(self.rho.elements, ch)
        else:
            # a stored assignment matrix is its own forward model
            p_noisy = readout.ReadoutDistribution(np.clip(a.forward(p_true.probs), 0.0, None))
        sol = a.solve(spectrum, transpose=True)
        predicted = float(np.max(np.abs(sol)) / max(np.max(np.abs(spectrum)), 1e-300)) ** 2
        if self.sampled:
            g = np.random.default_rng(seed)
            idx = g.choice(p_noisy.probs.size, size=self.shots, p=p_noisy.probs)
            if block.get("ibu", False):
                counts = np.bincount(idx, minlength=p_noisy.probs.size) / self.shots
                value = readout.ibu(a, counts).expectation(spectrum)
                per_shot = spectrum[idx]
                var = float(np.var(per_shot, ddof=1))
                return EstimatorReport(value, var, self.shots, self.reference, "readout-ibu", predicted, "predicted", seed)
            return summarize(sol[idx], self.reference, method="readout", overhead=predicted, overhead_kind="predicted", seed=seed)
        if block.get("ibu", False):
            value = readout.ibu(a, p_noisy).expectation(spectrum)
            return exact_report(value, self.reference, method="readout-ibu", overhead=predicted, overhead_kind="predicted")
        value = readout.mitigated_expectation(a, spectrum, p_noisy)
        return exact_report(value, self.reference, method="readout", overhead=predicted, overhead_kind="predicted")

    def _symmetry(self, block: dict) -> symx.SymmetrySpec:
        labels = block.get("symmetries")
        if not labels:
            raise ConfigError("symmetry method needs 'symmetries'")
        return symx.SymmetrySpec.of(*labels, eigenvalues=block.get("eigenvalues"))

    def run_sv(self, block: dict, seed: int) -> EstimatorReport:
        sym = self._symmetry(block)
        sv_mode = block.get("sv_mode", "postprocess")
        rate = symx.pass_rate(self.rho, sym)
        direct, post = symx.sv_overheads(rate)
        predicted = direct if sv_mode == "direct" else post
        if self.sampled:
            rep = symx.sv_shot_mitigate(self.circuit, sym, self.obs, self.shots, seed, mode=sv_mode)
            return _with_overhead(rep, predicted)
        value = symx.sv_postprocess(self.rho, sym, self.obs)
        return exact_report(value, self.reference, method=f"sv-{sv_mode}", overhead=predicted, overhead_kind="predicted")

    def run_subspace(self, block: dict, seed: int) -> EstimatorReport:
        if "basis" in block:
            basis = symx.ExpansionBasis.from_labels(*block["basis"])
        else:
            basis = symx.ExpansionBasis.from_symmetry(self._symmetry(block))
        h = observable(block.get("hamiltonian", self.cfg["observable"]))
        res = symx.subspace_expand(self.rho, h, basis, obs=self.obs)
        predicted = float(np.sum(np.abs(res.weights)) ** 4)
        return exact_report(res.value, self.reference, method="subspace", overhead=predicted, overhead_kind="predicted")

    def run_vd(self, block: dict, seed: int) -> EstimatorReport:
        est = purify.vd_expectation(self.rho, self.obs, block.get("copies", 2))
        return exact_report(est.value, self.reference, method=f"vd-{est.degree}", overhead=est.overhead, overhead_kind="predicted")

    def run_ev(self, block: dict, seed: int) -> EstimatorReport:
        est = purify.echo_verification(self.rho, self.obs)
        return exact_report(est.value, self.reference, method="ev", overhead=est.overhead, overhead_kind="predicted")

    def run_learn(self, block: dict, seed: int) -> EstimatorReport:
        rep = learn.learn_mitigate(
            self.circuit,
            self.obs,
            train_count=block.get("train_count", 24),
            rng=seed,
            shots=self.shots if self.sampled else 0,
            truncate_top=block.get("truncate_top"),
        )
        return rep

    def execute(self) -> list[EstimatorReport]:
        reports = [self.ideal(), self.raw({}, self.method_seed(0))]
        for k, block in enumerate(self.cfg["methods"], start=1):
            name = block["name"]
            if name == "raw":
                continue
            if self.sampled and name in EXACT_ONLY:
                log.warning("method %s is evaluated exactly; reporting n_shots = 0", name)
            seed = self.method_seed(k)
            start = time.perf_counter()
            rep = getattr(self, f"run_{name}")(block, seed)
            log.info("%s finished in %.3f s", name, time.perf_counter() - start)
            if "label" in block:
                rep = rep.with_method(block["label"])
            reports.append(rep)
        return reports


def _with_overhead(rep: EstimatorReport, predicted: float) -> EstimatorReport:
    d = {f: getattr(rep, f) for f in ("mean", "variance", "n_shots", "reference", "method", "seed", "extras")}
    return EstimatorReport(overhead=predicted, overhead_kind="predicted", **d)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("QEM_THREADS", "1")))
    except ValueError:
        return 1


def write_sweep(rows: list[dict], path: Path) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=("method", "scale", "abscissa", "mean", "variance"), lineterminator="\r\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) and math.isfinite(v) else ("nan" if isinstance(v, float) else v)) for k, v in row.items()})
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")


def cmd_run(args) -> int:
    cfg = validate_config(apply_overrides(read_config(args.config), args))
    runner = Runner(cfg, Path(args.config).resolve().parent, _threads())
    reports = runner.execute()
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(write_reports_csv(reports), encoding="utf-8", newline="")
    if runner.sweep_rows:
        write_sweep(runner.sweep_rows, out / "sweep.csv")
    print(f"wrote {out / 'results.csv'}")
    return 0


def cmd_calibrate(args) -> int:
    cfg = load_config(args.config)
    spec = cfg.get("readout")
    if not spec:
        raise ConfigError("config has no 'readout' block")
    ch = _readout_channel(spec, cfg["n_qubits"])
    a = readout.calibrate(ch, spec.get("form", "full"))
    a.save(args.output)
    print(f"wrote {args.output} (condition number {a.condition_number():.4g})")
    return 0


def read_results(path) -> list[dict]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ConfigError("results file has no rows")
    missing = set(CSV_FIELDS) - set(rows[0])
    if missing:
        raise ConfigError(f"results file lacks columns {sorted(missing)}")
    out = []
    for row in rows:
        try:
            parsed = {k: (float(row[k]) if row[k] not in ("", None) else float("nan")) for k in CSV_FIELDS if k != "method"}
        except ValueError as exc:
            raise ConfigError(f"malformed number in results file: {exc}") from None
        parsed["method"] = row["method"]
        out.append(parsed)
    return out


def compare_table(rows: list[dict]) -> str:
    """Bias, variance, measured and predicted overheads, ranked by MSE."""
    raw = next((r for r in rows if r["method"] == "raw"), None)
    var_raw = raw["variance"] if raw else float("nan")
    lines = [f"{'rank':>4}  {'method':<18}{'bias':>13}{'variance':>13}{'measured':>11}{'predicted':>11}{'mse':>13}"]
    ranked = sorted((r for r in rows if r["method"] != "ideal"), key=lambda r: (math.isnan(r["mse"]), r["mse"]))
    for i, r in enumerate(ranked, start=1):
        measured = r["variance"] / var_raw if var_raw and var_raw > 0 and math.isfinite(r["variance"]) else float("nan")
        lines.append(
            f"{i:>4}  {r['method']:<18}{r['bias']:>13.4e}{r['variance']:>13.4e}{measured:>11.4g}{r['overhead']:>11.4g}{r['mse']:>13.4e}"
        )
    return "\n".join(lines)


def cmd_compare(args) -> int:
    print(compare_table(read_results(args.results)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qem", description="Quantum error mitigation experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress and timings")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run every method block of a config")
    p.add_argument("config")
    p.add_argument("-o", "--output", default=".", help="output directory (default: current)")
    p.add_argument("--mode", help="exact or sampled")
    p.add_argument("--shots", type=int)
    p.add_argument("--seed", type=int)
    g = p.add_argument_group("single method", "replace the config's method list with one block")
    g.add_argument("--method", help=f"one of {', '.join(METHODS)}")
    g.add_argument("--model", help="ZNE model")
    g.add_argument("--nodes", type=float, nargs="+", help="ZNE noise scales")
    g.add_argument("--degree", type=int, help="polynomial ZNE degree")
    g.add_argument("--lambda-target", type=float, help="residual fault rate for partial PEC")
    g.add_argument("--decomposition", help="PEC decomposition: rewrite or inversion")
    g.add_argument("--twirl", action="store_true", help="Pauli-twirl gate noise before PEC")
    g.add_argument("--symmetries", nargs="+", help="symmetry Pauli labels")
    g.add_argument("--sv-mode", help="direct or postprocess")
    g.add_argument("--basis", nargs="+", help="subspace expansion Pauli labels")
    g.add_argument("--copies", type=int, help="virtual distillation degree")
    g.add_argument("--train-count", type=int, help="Clifford training circuits")
    g.add_argument("--truncate-top", type=int, help="keep the training pairs with largest |ideal|")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("calibrate-readout", help="write the assignment matrix of the config's readout channel")
    p.add_argument("config")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_calibrate)
    p = sub.add_parser("compare", help="tabulate a results.csv")
    p.add_argument("results")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
