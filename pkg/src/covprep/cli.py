"""``covprep`` command line: generate or ingest data, encode it, and report on
its moments, spectra, compression curves and variational diagonalization.

Every subcommand writes into an output directory (``--out``, defaulting to
``$COVPREP_OUTPUT_DIR`` or the working directory) and leaves a
``<command>.manifest.json`` there recording the parameters, seed, input
checksums and library versions.  Exit status is 0 on success, 2 for usage
errors, 3 for data errors and 4 for numerical failures; failures also print a
one-line JSON object on stderr.
"""

from __future__ import annotations

import hashlib
import json
import platform
import sys
from importlib import metadata
from pathlib import Path

import click
import numpy as np

from . import dataio, plotting
from .dataset import PureStateEnsemble, RawDataset, amplitude_encode, is_power_of_two
from .errors import CovprepError, InvalidEnsemble
from .moments import moments
from .numkernel import hermitian_eigendecompose
from .qpca import (SOURCES, compression_curve, default_shift, fit, infidelities, model_from_spectrum,
                   overlap_report)
from .spectral import (CLUSTER_WIDTH, eigenvalue_gap_bound_check, eigenvector_error_table,
                       interlacing_check)
from .varcost import OptimizerConfig, RotationAnsatz, VqseHamiltonian, optimize_diagonalization

MANIFEST_SCHEMA = "covprep.manifest"
MANIFEST_VERSION = 1
OUTPUT_ENV = "COVPREP_OUTPUT_DIR"

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _version(dist: str) -> str:
    try:
        return metadata.version(dist)
    except metadata.PackageNotFoundError:
        return "unknown"


def _sha256(path: Path) -> str:
    path = Path(path)
    h = hashlib.sha256()
    files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    for f in files:
        h.update(f.name.encode())
        h.update(f.read_bytes())
    return h.hexdigest()


def _jsonable(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (tuple, list)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_manifest(out: Path, command: str, params: dict, inputs=(), outputs=()) -> Path:
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "schema_version": MANIFEST_VERSION,
        "command": command,
        "parameters": {k: _jsonable(v) for k, v in params.items()},
        "seed": params.get("seed"),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": sorted(str(Path(p).name) for p in outputs),
        "versions": {
            "covprep": _version("covprep"),
            "numpy": np.__version__,
            "matplotlib": _version("matplotlib"),
            "scipy": _version("scipy"),
            "python": platform.python_version(),
        },
    }
    path = out / f"{command}.manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _fail(exc: CovprepError) -> None:
    payload = {"error": type(exc).__name__, "code": exc.code, "category": exc.category, "message": str(exc)}
    click.echo(json.dumps(payload), err=True)
    sys.exit(EXIT_NUMERICAL if exc.category == "numerical" else EXIT_DATA)


class _Group(click.Group):
    """Translate library errors into the documented exit codes."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except CovprepError as exc:
            _fail(exc)


def _out_dir(ctx: click.Context, out: Path | None) -> Path:
    target = Path(out) if out is not None else ctx.obj["out"]
    target.mkdir(parents=True, exist_ok=True)
    return target


def _parse_int_list(text: str) -> list[int]:
    """``1,2,8`` or ranges such as ``1-4,8``."""
    values = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            values.extend(range(int(lo), int(hi) + 1))
        else:
            values.append(int(part))
    return values


def _int_list(ctx, param, value):
    if value is None:
        return None
    try:
        values = _parse_int_list(value)
    except ValueError:
        raise click.BadParameter(f"{value!r} is not a list of integers") from None
    if not values or min(values) < 1:
        raise click.BadParameter("values must be positive integers")
    return values


def _load_pure(path) -> PureStateEnsemble:
    ens = dataio.read_ensemble(path)
    if not isinstance(ens, PureStateEnsemble):
        raise InvalidEnsemble("this command needs a pure-state ensemble")
    return ens


out_option = click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None,
                          help=f"Output directory (default: ${OUTPUT_ENV} or the working directory).")
plots_option = click.option("--plots/--no-plots", default=True, show_default=True, help="Also render SVG plots.")


@click.group(cls=_Group)
@click.option("--output-dir", envvar=OUTPUT_ENV, type=click.Path(file_okay=False, path_type=Path),
              default=Path("."), show_default=True, help="Default output directory for every subcommand.")
@click.version_option(_version("covprep"), prog_name="covprep")
@click.pass_context
def main(ctx, output_dir):
    """Covariance versus ensemble-density analysis of amplitude-encoded data."""
    ctx.ensure_object(dict)
    ctx.obj["out"] = output_dir


# ---------------------------------------------------------------------------
# encode / generate


def _encode_and_write(ctx, raw: RawDataset, dim, qubits, out, name, command, params, inputs=()):
    target = dim
    if qubits and target is None:
        target = 1 << max(0, (raw.dim - 1).bit_length())
    ens = amplitude_encode(raw, target, qubits=qubits)
    out = _out_dir(ctx, out)
    path = dataio.write_ensemble(out / name, ens, attributes={"command": command})
    write_manifest(out, command, params, inputs, [path])
    click.echo(json.dumps({"ensemble": str(path), "size": ens.size, "dim": ens.dim}))


@main.command()
@click.argument("raw", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--dim", type=click.IntRange(min=1), default=None, help="Pad vectors to this length.")
@click.option("--qubits", is_flag=True, help="Require a power-of-two dimension (next one up if --dim is absent).")
@click.option("--name", default="ensemble", show_default=True, help="Name of the ensemble directory.")
@out_option
@click.pass_context
def encode(ctx, raw, dim, qubits, name, out):
    """Amplitude-encode the CSV rows of RAW into an ensemble."""
    if qubits and dim is not None and not is_power_of_two(dim):
        raise click.UsageError(f"--dim {dim} is not a power of two, as --qubits requires")
    data = RawDataset(dataio.read_vectors_csv(raw))
    _encode_and_write(ctx, data, dim, qubits, out, name, "encode",
                      {"raw": raw, "dim": dim, "qubits": qubits, "name": name}, [raw])


@main.command()
@click.argument("kind", type=click.Choice(["bars-and-stripes", "gaussian", "surrogate"]))
@click.option("--side", type=click.IntRange(min=1), default=3, show_default=True, help="Bars-and-stripes grid side.")
@click.option("--include-uniform", is_flag=True, help="Bars-and-stripes: add the all-one image.")
@click.option("--num-points", type=click.IntRange(min=2), default=None,
              help="Datapoints (gaussian: 200, surrogate: 401).")
@click.option("--dim", type=click.IntRange(min=2), default=None, help="Feature/state dimension (gaussian: 16, surrogate: 64).")
@click.option("--clusters", type=click.IntRange(min=1), default=3, show_default=True)
@click.option("--spread", type=click.FloatRange(min=0.0), default=0.3, show_default=True)
@click.option("--offset", type=float, default=0.0, show_default=True, help="Gaussian: constant added to every feature.")
@click.option("--r-min", type=float, default=0.3, show_default=True)
@click.option("--r-max", type=float, default=2.3, show_default=True)
@click.option("--random-phase/--no-random-phase", default=True, show_default=True)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--qubits", is_flag=True, help="Pad to the next power of two.")
@click.option("--name", default=None, help="Name of the ensemble directory (default: KIND).")
@out_option
@click.pass_context
def generate(ctx, kind, side, include_uniform, num_points, dim, clusters, spread, offset, r_min, r_max,
             random_phase, seed, qubits, name, out):
    """Generate a synthetic ensemble."""
    params = dict(kind=kind, seed=seed, qubits=qubits)
    name = name or kind
    if kind == "bars-and-stripes":
        raw = dataio.bars_and_stripes(side, include_uniform=False)
        if include_uniform:
            # the all-zero image has no amplitude encoding; only the all-one image is kept
            raw = RawDataset(np.vstack([raw.vectors, np.ones((1, side * side))]))
        params.update(side=side, include_uniform=include_uniform)
        _encode_and_write(ctx, raw, None, qubits, out, name, "generate", params)
        return
    if kind == "gaussian":
        num_points, dim = num_points or 200, dim or 16
        raw = dataio.gaussian_clusters(num_points, dim, clusters, spread, offset, seed)
        params.update(num_points=num_points, dim=dim, clusters=clusters, spread=spread, offset=offset)
        _encode_and_write(ctx, raw, None, qubits, out, name, "generate", params)
        return
    if not r_min < r_max:
        raise click.BadParameter("--r-min must be smaller than --r-max")
    cfg = dataio.SurrogateFamilyConfig(dim=dim or 64, num_points=num_points or 401, r_min=r_min, r_max=r_max,
                                       seed=seed, randomize_global_phase=random_phase)
    ens = dataio.random_phase_family(cfg)
    params.update(dim=cfg.dim, num_points=cfg.num_points, r_min=r_min, r_max=r_max, random_phase=random_phase)
    target = _out_dir(ctx, out)
    path = dataio.write_ensemble(target / name, ens,
                                 attributes={"command": "generate", "r": cfg.distances().tolist()})
    write_manifest(target, "generate", params, outputs=[path])
    click.echo(json.dumps({"ensemble": str(path), "size": ens.size, "dim": ens.dim}))


# ---------------------------------------------------------------------------
# reports


ensemble_argument = click.argument("ensemble", type=click.Path(exists=True, file_okay=False, path_type=Path))


@main.command("moments")
@ensemble_argument
@out_option
@click.pass_context
def moments_cmd(ctx, ensemble, out):
    """Mean, spectra of Q and rho_bar, and the identity residual."""
    ens = _load_pure(ensemble)
    m = moments(ens)
    q = hermitian_eigendecompose(m.covariance).eigenvalues[::-1]
    r = hermitian_eigendecompose(m.ensemble_density).eigenvalues[::-1]
    rows = [("mean_real", k, v.real) for k, v in enumerate(m.mean)]
    rows += [("mean_imag", k, v.imag) for k, v in enumerate(m.mean)]
    rows += [("q", k, v) for k, v in enumerate(q)] + [("r", k, v) for k, v in enumerate(r)]
    rows += [("mean_norm_sq", 0, m.mean_norm_sq), ("identity_residual", 0, m.identity_residual()),
             ("trace_rho", 0, float(np.trace(m.ensemble_density).real))]
    target = _out_dir(ctx, out)
    csv_path = dataio.write_report_csv(target / "moments.csv", rows)
    write_manifest(target, "moments", {"ensemble": ensemble}, [ensemble], [csv_path])
    click.echo(json.dumps({"mean_norm_sq": m.mean_norm_sq, "identity_residual": m.identity_residual()}))


@main.command()
@ensemble_argument
@click.option("--n", "n_rows", type=click.IntRange(min=1), default=None, help="Rows per table (default: all).")
@click.option("--shift", type=click.IntRange(min=0), default=None,
              help="Offset pairing q_(d-j) with r_(d-j-shift) (default: 1 if uncentered, else 0).")
@click.option("--tolerance", type=click.FloatRange(min=0.0), default=None,
              help="Interlacing tolerance (default: 1e-10 times the spectral range, at least 1e-10).")
@click.option("--cluster-width", type=click.FloatRange(min=0.0), default=None,
              help=f"Make overlaps degeneracy-aware with this eigenvalue cluster width (e.g. {CLUSTER_WIDTH:g}).")
@plots_option
@out_option
@click.pass_context
def compare(ctx, ensemble, n_rows, shift, tolerance, cluster_width, plots, out):
    """Compare principal components of Q and rho_bar."""
    ens = _load_pure(ensemble)
    m = moments(ens)
    q_spec = hermitian_eigendecompose(m.covariance)
    r_spec = hermitian_eigendecompose(m.ensemble_density)
    d = ens.dim
    shift = default_shift(ens) if shift is None else shift
    if shift >= d:
        raise click.BadParameter(f"--shift must be smaller than the dimension {d}")
    rows_n = d if n_rows is None else min(n_rows, d)

    q_desc = q_spec.eigenvalues[::-1]
    r_desc = r_spec.eigenvalues[::-1]
    count = min(rows_n, d - shift)
    model_q = model_from_spectrum(q_spec, d, "covariance")
    model_r = model_from_spectrum(r_spec, d, "ensemble_density")
    overlaps = overlap_report(model_q, model_r, shift, cluster_width)[:count]
    table = eigenvector_error_table(ens, q_spec, r_spec)
    inter = interlacing_check(r_spec.eigenvalues, q_spec.eigenvalues, tolerance)
    gap_ok = eigenvalue_gap_bound_check(r_spec.eigenvalues, q_spec.eigenvalues, m.mean_norm_sq, tolerance)

    rows = [("q", j, q_desc[j]) for j in range(count)]
    rows += [("r_shifted", j, r_desc[j + shift]) for j in range(count)]
    rows += [("overlap", j, v) for j, v in enumerate(overlaps)]
    errors = {
        "error_q_in_rho_direct": table.q_in_rho_direct[::-1],
        "error_q_in_rho_closed": table.q_in_rho_closed[::-1],
        "error_r_in_q_direct": table.r_in_q_direct[::-1],
        "error_r_in_q_closed": table.r_in_q_closed[::-1],
    }
    for label, values in errors.items():
        rows += [(label, j, values[j]) for j in range(rows_n)]
    rows += [("interlacing_gap", j, g) for j, g in enumerate(inter.per_index_gaps)]
    rows += [("interlacing_max_violation", 0, inter.max_violation), ("interlacing_satisfied", 0, inter.satisfied),
             ("gap_bound_satisfied", 0, gap_ok), ("mean_norm_sq", 0, m.mean_norm_sq)]

    target = _out_dir(ctx, out)
    outputs = [dataio.write_report_csv(target / "compare.csv", rows)]
    summary = {
        "shift": shift,
        "mean_norm_sq": m.mean_norm_sq,
        "interlacing_satisfied": inter.satisfied,
        "interlacing_tolerance": inter.tolerance,
        "gap_bound_satisfied": gap_ok,
        "max_error_discrepancy": table.max_discrepancy(),
        "first_overlap": float(overlaps[0]) if len(overlaps) else None,
    }
    (target / "compare.json").write_text(json.dumps(summary, indent=2) + "\n")
    outputs.append(target / "compare.json")
    if plots:
        outputs.append(plotting.eigenvalue_plot(target / "compare_eigenvalues.svg", q_desc[:count],
                                                r_desc[shift:shift + count]))
        outputs.append(plotting.overlap_plot(target / "compare_overlaps.svg", overlaps))
        outputs.append(plotting.eigenvector_error_plot(
            target / "compare_errors.svg",
            {"Q eigenvectors in rho_bar": errors["error_q_in_rho_direct"][:rows_n],
             "rho_bar eigenvectors in Q": errors["error_r_in_q_direct"][:rows_n]}))
    params = {"ensemble": ensemble, "n": n_rows, "shift": shift, "tolerance": tolerance,
              "cluster_width": cluster_width, "plots": plots}
    write_manifest(target, "compare", params, [ensemble], outputs)
    click.echo(json.dumps(summary))


@main.command()
@ensemble_argument
@click.option("--source", type=click.Choice([*SOURCES, "both"]), default="both", show_default=True)
@click.option("--n", "n_values", callback=_int_list, default=None,
              help="Component counts, e.g. '1-4,8' (default: 1..d).")
@click.option("--per-point", is_flag=True, help="Also tabulate each datapoint's infidelity.")
@plots_option
@out_option
@click.pass_context
def curve(ctx, ensemble, source, n_values, per_point, plots, out):
    """Median and 90th-percentile infidelity against the number of components."""
    ens = _load_pure(ensemble)
    n_values = n_values or list(range(1, ens.dim + 1))
    if max(n_values) > ens.dim:
        raise click.BadParameter(f"component counts must not exceed the dimension {ens.dim}")
    sources = SOURCES if source == "both" else (source,)
    rows, curves = [], {}
    for src in sources:
        model = fit(ens, max(n_values), src)
        c = compression_curve(ens, model, n_values)
        curves[src] = (c.median_infidelity, c.p90_infidelity)
        rows += [(f"median_{src}", n, v) for n, v in zip(n_values, c.median_infidelity)]
        rows += [(f"p90_{src}", n, v) for n, v in zip(n_values, c.p90_infidelity)]
        if per_point:
            for n in n_values:
                rows += [(f"infidelity_{src}_n{n}", i, v) for i, v in enumerate(infidelities(ens.states, model, n))]
    target = _out_dir(ctx, out)
    outputs = [dataio.write_report_csv(target / "curve.csv", rows)]
    if plots:
        outputs.append(plotting.curve_plot(target / "curve.svg", n_values, curves))
    params = {"ensemble": ensemble, "source": source, "n": n_values, "per_point": per_point, "plots": plots}
    write_manifest(target, "curve", params, [ensemble], outputs)
    click.echo(json.dumps({src: {"median": med.tolist()} for src, (med, _) in curves.items()}))


@main.command()
@ensemble_argument
@click.option("--cost", type=click.Choice(["vqsd", "vqse"]), default="vqsd", show_default=True)
@click.option("--mode", type=click.Choice(["exact", "sampled"]), default="exact", show_default=True)
@click.option("--epsilon", type=click.FloatRange(min=0.0, max=1.0, min_open=True), default=0.05, show_default=True,
              help="Target accuracy of each sampled estimate.")
@click.option("--delta", type=click.FloatRange(min=0.0, max=1.0, min_open=True, max_open=True), default=0.05,
              show_default=True, help="Failure probability of each sampled estimate.")
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--layers", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--max-sweeps", type=click.IntRange(min=1), default=400, show_default=True)
@click.option("--tolerance", type=click.FloatRange(min=0.0), default=1e-13, show_default=True,
              help="Stop once the exact VQSD cost is below this.")
@click.option("--levels", type=click.IntRange(min=1), default=None, help="VQSE target eigenvalues (default: min(d, 3)).")
@click.option("--shots", is_flag=True, help="Sampled mode: one simulated measurement per sample.")
@click.option("--top", type=click.IntRange(min=1), default=3, show_default=True,
              help="Eigenvalues reported against the dense eigensolver.")
@plots_option
@out_option
@click.pass_context
def varcost(ctx, ensemble, cost, mode, epsilon, delta, seed, layers, max_sweeps, tolerance, levels, shots, top,
            plots, out):
    """Variationally diagonalize rho_bar with the VQSD or VQSE cost."""
    ens = _load_pure(ensemble)
    if levels is not None and levels > ens.dim:
        raise click.BadParameter(f"--levels must not exceed the dimension {ens.dim}")
    if shots and mode != "sampled":
        raise click.UsageError("--shots only applies to --mode sampled")
    cfg = OptimizerConfig(max_sweeps=max_sweeps, tolerance=tolerance, seed=seed, delta=delta, shots=shots,
                          epsilon=epsilon if mode == "sampled" else None, vqse_levels=levels)
    ham = VqseHamiltonian.standard(ens.dim, levels or min(ens.dim, 3)) if cost == "vqse" else None
    result = optimize_diagonalization(ens, cost, RotationAnsatz.full(ens.dim, layers), cfg, ham)

    rho = moments(ens).ensemble_density
    exact = hermitian_eigendecompose(rho).eigenvalues[::-1]
    k = min(top, len(result.eigenvalues))
    recovered = np.asarray(result.eigenvalues[:k])
    rows = [("exact_cost", t, c) for t, c in enumerate(result.cost_trace)]
    rows += [("estimate", t + 1, c) for t, c in enumerate(result.estimate_trace)]
    rows += [("recovered_eigenvalue", j, v) for j, v in enumerate(recovered)]
    rows += [("exact_eigenvalue", j, v) for j, v in enumerate(exact[:k])]
    rows += [("samples_per_evaluation", 0, result.samples_per_evaluation), ("evaluations", 0, result.evaluations)]
    target = _out_dir(ctx, out)
    outputs = [dataio.write_report_csv(target / "varcost.csv", rows)]
    if plots:
        outputs.append(plotting.trace_plot(target / "varcost_trace.svg", result.cost_trace,
                                           np.asarray(result.estimate_trace)))
    summary = {
        "cost": cost,
        "mode": mode,
        "converged": result.converged,
        "initial_cost": result.initial_cost,
        "final_cost": result.final_cost,
        "sweeps": result.sweeps,
        "samples_per_evaluation": result.samples_per_evaluation,
        "top_eigenvalue_error": float(np.max(np.abs(recovered - exact[:k]))),
    }
    params = {"ensemble": ensemble, "cost": cost, "mode": mode, "epsilon": epsilon, "delta": delta, "seed": seed,
              "layers": layers, "max_sweeps": max_sweeps, "tolerance": tolerance, "levels": levels, "shots": shots,
              "top": top, "plots": plots}
    write_manifest(target, "varcost", params, [ensemble], outputs)
    click.echo(json.dumps(summary))


@main.command("idx-dump")
@click.argument("path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--limit", type=click.IntRange(min=0), default=0, show_default=True,
              help="Write the first LIMIT records to idx.csv.")
@out_option
@click.pass_context
def idx_dump(ctx, path, limit, out):
    """Print the header of an IDX file and optionally export records."""
    tensor = dataio.read_idx(path)
    info = {"element_type": f"0x{tensor.element_type:02X}", "dims": list(tensor.dims),
            "dtype": str(tensor.payload.dtype)}
    if limit:
        target = _out_dir(ctx, out)
        records = tensor.array()[:limit].reshape(min(limit, tensor.dims[0]), -1)
        csv_path = target / "idx.csv"
        dataio.write_vectors_csv(csv_path, records.astype(np.float64))
        write_manifest(target, "idx-dump", {"path": path, "limit": limit}, [path], [csv_path])
        info["records"] = str(csv_path)
    click.echo(json.dumps(info))


if __name__ == "__main__":
    main()
