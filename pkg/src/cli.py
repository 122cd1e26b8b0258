#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Command line front end of the character variety dynamics laboratory."""

import argparse
import datetime
import json
import logging
import pathlib
import re
import sys
import typing

import numpy as np
import pydantic

import exotic_components
import flow_sim
import group_models
import nilpotent_catalog
import torus_dynamics
from errors import CapExceededError, InternalError, InvalidInputError
from exact_linalg import IntegerMatrix, char_poly, spectral_classify

logger = logging.getLogger(__name__)

TOOL_VERSION = "1.0.0"

_INTEGER = re.compile(r"^[+-]?\d+$")


def _split_rows(text: str) -> list[list[str]]:
    compact = re.sub(r"\s+", "", text)
    if not (compact.startswith("[[") and compact.endswith("]]")):
        raise InvalidInputError(f"expected bracketed rows like [[1,0],[0,1]], got {text!r}")
    inner = compact[2:-2]
    if not inner:
        raise InvalidInputError("matrix has an empty row")
    rows = [row.split(",") for row in inner.split("],[")]
    if any("[" in token or "]" in token or not token for row in rows for token in row):
        raise InvalidInputError(f"malformed matrix {text!r}")
    if len({len(row) for row in rows}) != 1:
        raise InvalidInputError(f"ragged rows in {text!r}")
    return rows


def matrix_parse(text: str) -> IntegerMatrix:
    """Parse an integer matrix in bracketed row syntax, ignoring whitespace.

    Raises:
        InvalidInputError: on ragged rows or non-integer tokens.
    """
    rows = _split_rows(text)
    for token in (token for row in rows for token in row):
        if not _INTEGER.match(token):
            raise InvalidInputError(f"{token!r} is not an integer")
    return IntegerMatrix.from_rows([[int(token) for token in row] for row in rows])


def real_matrix_parse(text: str) -> np.ndarray:
    """Parse a real matrix in bracketed row syntax.

    Raises:
        InvalidInputError: on ragged rows or non-numeric tokens.
    """
    rows = _split_rows(text)
    try:
        return np.array([[float(token) for token in row] for row in rows], dtype=np.float64)
    except ValueError as exc:
        raise InvalidInputError(f"malformed real matrix {text!r}") from exc


class _Model(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")


class ExperimentConfig(_Model):
    """One invocation of the harness.

    Attributes:
        command: subcommand name.
        parameters: command parameters; matrices stay in bracket syntax.
        seed: base seed of stochastic commands.
        workers: worker processes; part of the determinism contract.
        output_path: JSON destination; stdout when unset.
    """

    command: str
    parameters: dict[str, typing.Any] = pydantic.Field(default_factory=dict)
    seed: int | None = pydantic.Field(default=None, ge=0, lt=2**64)
    workers: int = pydantic.Field(default=1, ge=1)
    output_path: str | None = None


class ClassifyResult(_Model):
    """Spectral class of a matrix."""

    matrix: str
    determinant: int
    char_poly: str
    has_root_of_unity_eigenvalue: bool
    has_unit_modulus_eigenvalue: bool
    hyperbolic: bool
    witness: str | None
    cyclotomic_index: int | None
    unit_circle_eigenvalues: int


class EscapeResult(_Model):
    """Summary of an escape report."""

    matrix: str
    box_radius: int
    escape_radius: int
    t_max: int
    k: int
    frequencies: int
    escaped: int
    periodic: int
    undecided: int
    max_escape_steps: int
    periods: list[int]


class SeriesPoint(_Model):
    """One estimate of a series."""

    t: float
    estimate: float
    stderr: float


class MixResult(_Model):
    """Mixing estimates on X⁰(Z^r, K)."""

    group: str
    r: int
    matrix: str
    set_a: str
    set_b: str
    points: list[SeriesPoint]
    baseline: float
    samples: int
    workers: int


class BirkhoffResult(_Model):
    """Ergodic average of a character along an orbit."""

    matrix: str
    frequency: str
    theta: list[list[float]]
    steps: int
    magnitude: float


class ExoticCountResult(_Model):
    """Number of exotic components."""

    r: int
    m: int
    p: int
    count: int


class ExoticOrbitsResult(_Model):
    """Orbits of the exotic components under GL(r, Z)."""

    r: int
    p: int
    components: int
    orbit_sizes: list[int]
    orbits: list[list[str]]


class NormalFormResult(_Model):
    """Symplectic normal form of a skew form over Z_p."""

    p: int
    form: str
    normal_form: str
    transform: str
    rank: int


class GroupInfoResult(_Model):
    """Torus and Weyl data of a group model."""

    group: str
    rank: int
    weyl_order: int
    constraints: list[list[int]]
    r: int | None
    torus_dimension: int | None


class NilpotentCheckResult(_Model):
    """Admissibility and mixing verdict for an automorphism of a nilpotent group."""

    group: str
    matrix: str
    abelianization_rank: int
    torsion: list[int]
    admissible: bool
    mixing_guaranteed: bool
    reason: str
    hyperbolic: bool | None
    witness: str | None
    model: str | None
    torus_dimension: int | None
    weyl_order: int | None


class FlowResult(_Model):
    """A flow trajectory on F_K, or ensemble correlations."""

    group: str
    n: int
    generator: list[list[float]]
    noncompact: bool
    t_end: float | None = None
    dt: float
    holonomy_log: list[str] = pydantic.Field(default_factory=list)
    holonomy_determinant: int | None = None
    final_basis: list[list[float]] | None = None
    initial_fiber: list[list[float]] | None = None
    final_fiber: list[list[float]] | None = None
    replay_matches: bool | None = None
    ensemble: int | None = None
    base_observable: str | None = None
    fiber_observable: str | None = None
    points: list[SeriesPoint] | None = None


RESULT_SCHEMAS: dict[str, type[_Model]] = {
    "classify": ClassifyResult,
    "escape": EscapeResult,
    "mix": MixResult,
    "birkhoff": BirkhoffResult,
    "exotic-count": ExoticCountResult,
    "exotic-orbits": ExoticOrbitsResult,
    "normal-form": NormalFormResult,
    "group-info": GroupInfoResult,
    "nilpotent-check": NilpotentCheckResult,
    "flow": FlowResult,
}


class ResultEnvelope(_Model):
    """Serialized outcome of one command; results follow the per-command schema."""

    command: str
    parameters: dict[str, typing.Any]
    seed: int | None
    workers: int
    tool_version: str
    results: dict[str, typing.Any]
    timestamp: str

    @pydantic.model_validator(mode="after")
    def _check_results(self) -> "ResultEnvelope":
        schema = RESULT_SCHEMAS.get(self.command)
        if schema is None:
            raise ValueError(f"unknown command {self.command!r}")
        schema.model_validate(self.results)
        return self


def load_envelope(text: str) -> ResultEnvelope:
    """Parse and validate a JSON envelope.

    Raises:
        pydantic.ValidationError: if the envelope or its results do not validate.
    """
    return ResultEnvelope.model_validate_json(text)


def dump_envelope(envelope: ResultEnvelope) -> str:
    """Render an envelope as UTF-8 JSON with sorted keys."""
    payload = envelope.model_dump(mode="json")
    return json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=2) + "\n"


_Params = dict[str, typing.Any]
_Handled = tuple[_Model, str | None]


def _require_seed(config: ExperimentConfig) -> int:
    if config.seed is None:
        raise InvalidInputError(f"{config.command} is stochastic and needs --seed")
    return config.seed


def _classify(params: _Params, config: ExperimentConfig) -> _Handled:
    matrix = matrix_parse(params["matrix"])
    spectral = spectral_classify(matrix)
    return (
        ClassifyResult(
            matrix=str(matrix),
            determinant=matrix.det(),
            char_poly=str(char_poly(matrix)),
            **spectral._asdict(),
        ),
        None,
    )


def _escape(params: _Params, config: ExperimentConfig) -> _Handled:
    matrix = matrix_parse(params["matrix"])
    report = torus_dynamics.escape_report(
        matrix, params["box"], params["escape"], params["t_max"], params["k"]
    )
    periods = sorted({rec.period for rec in report.records if rec.period is not None})
    return (
        EscapeResult(
            matrix=str(matrix),
            box_radius=params["box"],
            escape_radius=params["escape"],
            t_max=params["t_max"],
            k=params["k"],
            frequencies=len(report.records),
            escaped=report.escaped,
            periodic=report.periodic,
            undecided=report.undecided,
            max_escape_steps=report.max_escape_steps,
            periods=periods,
        ),
        None,
    )


def _mix(params: _Params, config: ExperimentConfig) -> _Handled:
    seed = _require_seed(config)
    model = group_models.parse_model(params["group"])
    matrix = matrix_parse(params["matrix"])
    set_a = torus_dynamics.parse_set_descriptor(params["A"])
    set_b = set_a if params["B"] == "same" else torus_dynamics.parse_set_descriptor(params["B"])
    series = torus_dynamics.estimate_mixing(
        model,
        matrix,
        params["r"],
        set_a,
        set_b,
        params["t"],
        params["samples"],
        seed,
        config.workers,
    )
    return (
        MixResult(
            group=model.name,
            r=params["r"],
            matrix=str(matrix),
            set_a=series.set_a,
            set_b=series.set_b,
            points=[SeriesPoint(**point._asdict()) for point in series.points],
            baseline=series.baseline,
            samples=series.samples,
            workers=series.workers,
        ),
        series.to_csv(),
    )


def _birkhoff(params: _Params, config: ExperimentConfig) -> _Handled:
    matrix = matrix_parse(params["matrix"])
    frequency = matrix_parse(params["frequency"])
    if params.get("theta"):
        theta = torus_dynamics.TorusPoint.from_rows(real_matrix_parse(params["theta"]).tolist())
    else:
        rng = np.random.default_rng(_require_seed(config))
        theta = torus_dynamics.sample_torus_point(
            group_models.builtin_model("torus", frequency.rows), frequency.cols, rng
        )
    magnitude = torus_dynamics.birkhoff_character_average(
        matrix, frequency, theta, params["steps"]
    )
    return (
        BirkhoffResult(
            matrix=str(matrix),
            frequency=str(frequency),
            theta=[list(row) for row in theta.angles],
            steps=params["steps"],
            magnitude=magnitude,
        ),
        None,
    )


def _exotic_count(params: _Params, config: ExperimentConfig) -> _Handled:
    count = exotic_components.component_count(params["r"], params["m"], params["p"])
    return ExoticCountResult(**count._asdict()), None


def _exotic_orbits(params: _Params, config: ExperimentConfig) -> _Handled:
    orbits = exotic_components.orbit_partition(params["r"], params["p"])
    return (
        ExoticOrbitsResult(
            r=params["r"],
            p=params["p"],
            components=sum(len(orbit) for orbit in orbits),
            orbit_sizes=[len(orbit) for orbit in orbits],
            orbits=[[str(form) for form in orbit] for orbit in orbits],
        ),
        None,
    )


def _normal_form(params: _Params, config: ExperimentConfig) -> _Handled:
    form = exotic_components.SkewFormFp.from_matrix(matrix_parse(params["form"]), params["p"])
    normal, transform = exotic_components.skew_normal_form(form)
    return (
        NormalFormResult(
            p=form.p,
            form=str(form),
            normal_form=str(normal),
            transform=str(transform),
            rank=exotic_components.rank_mod_p(form),
        ),
        None,
    )


def _group_info(params: _Params, config: ExperimentConfig) -> _Handled:
    model = group_models.parse_model(params["group"])
    r = params.get("r")
    dimension = group_models.identity_component_dims(model, r)[0] if r else None
    return (
        GroupInfoResult(
            group=model.name,
            rank=model.rank,
            weyl_order=model.weyl_order,
            constraints=[list(subset) for subset in model.constraints],
            r=r,
            torus_dimension=dimension,
        ),
        None,
    )


def _nilpotent_check(params: _Params, config: ExperimentConfig) -> _Handled:
    group = nilpotent_catalog.parse_descriptor(params["group"])
    matrix = matrix_parse(params["matrix"])
    rank, torsion = nilpotent_catalog.abelianization_rank(group)
    verdict = nilpotent_catalog.classify_induced_action(group, matrix)
    component = None
    if params.get("model"):
        component = nilpotent_catalog.identity_component_model(
            group, group_models.parse_model(params["model"])
        )
    return (
        NilpotentCheckResult(
            group=str(group),
            matrix=str(matrix),
            abelianization_rank=rank,
            torsion=list(torsion),
            admissible=verdict.admissible,
            mixing_guaranteed=verdict.mixing_guaranteed,
            reason=verdict.reason,
            hyperbolic=verdict.spectral.hyperbolic if verdict.spectral else None,
            witness=verdict.spectral.witness if verdict.spectral else None,
            model=component.model.name if component else None,
            torus_dimension=component.torus_dimension if component else None,
            weyl_order=component.weyl_order if component else None,
        ),
        None,
    )


def _flow(params: _Params, config: ExperimentConfig) -> _Handled:
    seed = _require_seed(config)
    model = group_models.parse_model(params["group"])
    generator = flow_sim.make_generator(real_matrix_parse(params["generator"]))
    dt = params.get("dt") or flow_sim.default_dt(generator)
    common = {
        "group": model.name,
        "n": generator.n,
        "generator": generator.matrix.tolist(),
        "noncompact": generator.noncompact,
        "dt": dt,
    }
    if params.get("ensemble"):
        series = flow_sim.flow_correlation(
            params["ensemble"],
            generator,
            flow_sim.ShortestVectorBelow(params["threshold"]),
            flow_sim.FiberBox(torus_dynamics.parse_set_descriptor(params["fiber_box"])),
            params["t"],
            seed,
            model,
            config.workers,
        )
        result = FlowResult(
            **common,
            ensemble=series.samples,
            base_observable=series.set_a,
            fiber_observable=series.set_b,
            points=[SeriesPoint(**point._asdict()) for point in series.points],
        )
        return result, series.to_csv()
    state = flow_sim.random_flow_state(model, generator.n, np.random.default_rng(seed))
    trajectory = flow_sim.run_trajectory(state, generator, params["t_end"], dt)
    final = trajectory.final
    replayed = flow_sim.replay_holonomy(state.fiber, final.holonomy_log)
    result = FlowResult(
        **common,
        t_end=params["t_end"],
        holonomy_log=[str(unimodular) for unimodular in final.holonomy_log],
        holonomy_determinant=final.holonomy().det(),
        final_basis=final.basis.tolist(),
        initial_fiber=[list(row) for row in state.fiber.theta.angles],
        final_fiber=[list(row) for row in final.fiber.theta.angles],
        replay_matches=replayed.theta == final.fiber.theta,
    )
    return result, trajectory.to_csv()


_HANDLERS: dict[str, typing.Callable[[_Params, ExperimentConfig], _Handled]] = {
    "classify": _classify,
    "escape": _escape,
    "mix": _mix,
    "birkhoff": _birkhoff,
    "exotic-count": _exotic_count,
    "exotic-orbits": _exotic_orbits,
    "normal-form": _normal_form,
    "group-info": _group_info,
    "nilpotent-check": _nilpotent_check,
    "flow": _flow,
}


def _sidecar_path(output_path: str) -> pathlib.Path:
    return pathlib.Path(output_path).with_suffix(".csv")


def run(config: ExperimentConfig) -> tuple[ResultEnvelope, str | None]:
    """Dispatch a command and write its JSON envelope and CSV sidecar.

    Args:
        config: the validated experiment configuration.

    Returns:
        the envelope and the CSV text of series-producing commands.

    Raises:
        InvalidInputError: on an unknown command or invalid parameters.
        CapExceededError: when an enumeration cap is exceeded.
    """
    handler = _HANDLERS.get(config.command)
    if handler is None:
        raise InvalidInputError(f"unknown command {config.command!r}")
    logger.info("running %s with %s", config.command, config.parameters)
    results, sidecar = handler(config.parameters, config)
    envelope = ResultEnvelope(
        command=config.command,
        parameters=config.parameters,
        seed=config.seed,
        workers=config.workers,
        tool_version=TOOL_VERSION,
        results=results.model_dump(mode="json"),
        timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat(),
    )
    text = dump_envelope(envelope)
    if config.output_path:
        path = pathlib.Path(config.output_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        if sidecar is not None:
            _sidecar_path(config.output_path).write_text(sidecar, encoding="utf-8")
        logger.info("wrote %s", path)
    else:
        sys.stdout.write(text)
    return envelope, sidecar


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--output", help="path of the JSON result; a .csv sidecar is written next to it"
    )
    common.add_argument("--seed", type=int, help="base seed of stochastic commands")
    common.add_argument("--workers", type=int, default=1, help="worker processes")
    common.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="logging threshold",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with one subcommand per operation."""
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog="charvar", description="Dynamics on character varieties of nilpotent groups."
    )
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    classify = commands.add_parser("classify", parents=[common], help="spectral classification")
    classify.add_argument("--matrix", required=True)

    escape = commands.add_parser("escape", parents=[common], help="Fourier orbit escape report")
    escape.add_argument("--matrix", required=True)
    escape.add_argument("--box", type=int, default=5)
    escape.add_argument("--escape", type=int, default=10**6)
    escape.add_argument("--t-max", type=int, default=1000)
    escape.add_argument("--k", type=int, default=1)

    mix = commands.add_parser("mix", parents=[common], help="Monte Carlo mixing estimate")
    mix.add_argument("--group", required=True)
    mix.add_argument("--r", type=int, required=True)
    mix.add_argument("--matrix", required=True)
    mix.add_argument("--A", dest="A", required=True)
    mix.add_argument("--B", dest="B", default="same")
    mix.add_argument("--t", type=int, nargs="+", required=True)
    mix.add_argument("--samples", type=int, required=True)

    birkhoff = commands.add_parser("birkhoff", parents=[common], help="ergodic character average")
    birkhoff.add_argument("--matrix", required=True)
    birkhoff.add_argument("--frequency", required=True)
    birkhoff.add_argument("--theta")
    birkhoff.add_argument("--steps", type=int, required=True)

    count = commands.add_parser(
        "exotic-count", parents=[common], help="number of exotic components"
    )
    count.add_argument("--r", type=int, required=True)
    count.add_argument("--m", type=int, default=1)
    count.add_argument("--p", type=int, required=True)

    orbits = commands.add_parser("exotic-orbits", parents=[common], help="orbits of GL(r, Z)")
    orbits.add_argument("--r", type=int, required=True)
    orbits.add_argument("--p", type=int, required=True)

    normal = commands.add_parser("normal-form", parents=[common], help="skew normal form mod p")
    normal.add_argument("--form", required=True)
    normal.add_argument("--p", type=int, required=True)

    info = commands.add_parser("group-info", parents=[common], help="torus and Weyl data")
    info.add_argument("--group", required=True)
    info.add_argument("--r", type=int)

    check = commands.add_parser(
        "nilpotent-check", parents=[common], help="classify an automorphism"
    )
    check.add_argument("--group", required=True)
    check.add_argument("--matrix", required=True)
    check.add_argument("--model")

    flow = commands.add_parser("flow", parents=[common], help="flow on the bundle F_K")
    flow.add_argument("--group", required=True)
    flow.add_argument("--generator", required=True)
    flow.add_argument("--t-end", type=float, default=10.0)
    flow.add_argument("--dt", type=float)
    flow.add_argument("--ensemble", type=int)
    flow.add_argument("--t", type=float, nargs="+", default=[0.0, 10.0, 30.0])
    flow.add_argument("--threshold", type=float, default=0.9)
    flow.add_argument("--fiber-box", default="full")
    return parser


_GLOBAL_OPTIONS = ("output", "seed", "workers", "log_level", "command")


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Turn parsed arguments into a validated configuration."""
    parameters = {key: value for key, value in vars(args).items() if key not in _GLOBAL_OPTIONS}
    return ExperimentConfig(
        command=args.command,
        parameters=parameters,
        seed=args.seed,
        workers=args.workers,
        output_path=args.output,
    )


def main(argv: typing.Sequence[str] | None = None) -> int:
    """Run the command line.

    Returns:
        0 on success, 1 for an unknown command or internal failure, 2 on validation errors,
        3 when a size cap is exceeded.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv or (argv[0] not in _HANDLERS and argv[0] not in ("-h", "--help")):
        parser.print_usage(sys.stderr)
        return 1
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )
    try:
        run(config_from_args(args))
    except CapExceededError as exc:
        logger.error("%s", exc.message)
        return 3
    except InternalError:
        logger.exception("internal failure")
        return 1
    except ValueError as exc:
        logger.error("invalid input: %s", exc)
        return 2
    return 0


if __name__ == "__main__":  # pragma: nocover
    sys.exit(main())
