"""Command-line client for the bandfuse service.

Every verb builds a request payload and posts it to the service API. With
--server the requests go to a running instance over HTTP; without it the
service app is mounted in-process, so the CLI works standalone while
exercising the same endpoints.

Exit codes: 0 success, 2 configuration error, 3 data error,
4 non-convergence when --strict is set.
"""

from __future__ import annotations

import json
import sys

import click

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NONCONVERGED = 4

_EXIT_BY_CODE = {"config": EXIT_CONFIG, "data": EXIT_DATA, "nonconvergence": EXIT_NONCONVERGED}


class ServiceClient:
    def __init__(self, server: str | None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            from fastapi.testclient import TestClient

            from .service.app import app

            self._client = TestClient(app)

    def post(self, path: str, payload: dict) -> dict:
        resp = self._client.post(path, json=payload)
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail", {})
            except ValueError:
                detail = {}
            if isinstance(detail, dict) and "message" in detail:
                message = detail["message"]
                code = _EXIT_BY_CODE.get(detail.get("code", ""), EXIT_DATA)
            else:
                message = str(detail) if detail else resp.text
                code = EXIT_CONFIG if resp.status_code == 422 else EXIT_DATA
            click.echo(f"error: {message}", err=True)
            sys.exit(code)
        return resp.json()


@click.group()
@click.option("--server", default=None, help="Service URL; defaults to an in-process service.")
@click.pass_context
def main(ctx, server):
    """Band grouping and multi-kernel fusion for hyperspectral data."""
    ctx.obj = ServiceClient(server)


def _dataset_payload(data, format, exclude_bands, keep_classes):
    payload = {"path": data, "format": format}
    if exclude_bands:
        payload["exclude_bands"] = [int(t) for t in exclude_bands.split(",") if t]
    if keep_classes:
        payload["keep_classes"] = [int(t) for t in keep_classes.split(",") if t]
    return payload


def _split_payload(seed, train_fraction, validation_fraction):
    return {
        "seed": seed,
        "train_fraction": train_fraction,
        "validation_fraction_of_train": validation_fraction,
    }


dataset_options = [
    click.option("--data", required=True, help="Dataset file."),
    click.option("--format", default="csv", type=click.Choice(["csv", "raw-cube"])),
    click.option("--exclude-bands", default="", help="Comma-separated band ids to drop."),
    click.option("--keep-classes", default="", help="Comma-separated class ids to keep."),
]

split_options = [
    click.option("--seed", default=0, type=int),
    click.option("--train-fraction", default=0.2, type=float),
    click.option("--validation-fraction", default=0.5, type=float),
]


def add_options(options):
    def wrap(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn

    return wrap


@main.command()
@click.option("--out", required=True, help="Output CSV path.")
@click.option("--seed", default=0, type=int)
@click.option("--n-per-class", default=500, type=int)
@click.option("--bands", default=60, type=int)
@click.option("--classes", default=4, type=int)
@click.option("--groups", default=12, type=int)
@click.pass_obj
def synth(client, out, seed, n_per_class, bands, classes, groups):
    """Generate the synthetic benchmark dataset."""
    res = client.post(
        "/synth",
        {
            "out_path": out,
            "seed": seed,
            "n_per_class": n_per_class,
            "bands": bands,
            "classes": classes,
            "groups": groups,
        },
    )
    click.echo(
        f"wrote {res['path']}: {res['rows']} pixels x {res['bands']} bands, "
        f"{res['classes']} classes, {len(res['planted_groups'])} planted groups"
    )


@main.command()
@add_options(dataset_options)
@add_options(split_options)
@click.option("--measure", default="squared_euclidean", type=click.Choice(["squared_euclidean", "correlation"]))
@click.option("--all-rows", is_flag=True, help="Use every pixel instead of the training portion.")
@click.option("--raw", is_flag=True, help="Skip [0,1] normalization (also skips images).")
@click.option("--out", default=None, help="Output prefix for text/PGM exports.")
@click.pass_obj
def dm(client, data, format, exclude_bands, keep_classes, seed, train_fraction,
       validation_fraction, measure, all_rows, raw, out):
    """Compute a band dissimilarity matrix and export text/PGM renderings."""
    payload = {
        "dataset": _dataset_payload(data, format, exclude_bands, keep_classes),
        "split": None if all_rows else _split_payload(seed, train_fraction, validation_fraction),
        "measure": measure,
        "normalize": not raw,
        "out_prefix": out,
        "images": not raw,
    }
    res = client.post("/dm", payload)
    click.echo(
        f"{res['measure']} DM: {res['bands']} bands, max {res['max_value']:.6g}"
        + (f", wrote {res['text_path']}" if res.get("text_path") else "")
    )
    for path in res.get("image_paths", []):
        click.echo(f"  image: {path}")


@main.command()
@add_options(dataset_options)
@add_options(split_options)
@click.option("--measure", default="squared_euclidean", type=click.Choice(["squared_euclidean", "correlation"]))
@click.option("--grouper", default="clodd_c", type=click.Choice(["clodd_c", "clodd_n", "bg_mean", "hierarchical"]))
@click.option("--alpha", default=0.5, type=float)
@click.option("--gamma", default=3.0, type=float)
@click.option("--min-size", default=5, type=int)
@click.option("--max-size", default=20, type=int)
@click.option("--search", default="annealed", type=click.Choice(["annealed", "exhaustive"]))
@click.option("--threshold", default=0.95, type=float, help="BG-Mean similarity threshold.")
@click.option("--bg-max-size", default=30, type=int)
@click.option("--linkage", default="single", type=click.Choice(["single", "ward"]))
@click.option("--clusters", default=10, type=int, help="Cluster count for the hierarchical baseline.")
@click.option("--out", default=None, help="Partition file to write.")
@click.pass_obj
def band(client, data, format, exclude_bands, keep_classes, seed, train_fraction,
         validation_fraction, measure, grouper, alpha, gamma, min_size, max_size,
         search, threshold, bg_max_size, linkage, clusters, out):
    """Run one band grouper and print/save the partition."""
    payload = {
        "dataset": _dataset_payload(data, format, exclude_bands, keep_classes),
        "split": _split_payload(seed, train_fraction, validation_fraction),
        "measure": measure,
        "grouper": grouper,
        "clodd": {
            "alpha": alpha,
            "gamma": gamma,
            "min_size": min_size,
            "max_size": max_size,
            "search": search,
            "seed": seed,
        },
        "bg_mean": {"threshold": threshold, "max_size": bg_max_size},
        "hierarchical": {"linkage": linkage, "clusters": clusters},
        "out_path": out,
    }
    res = client.post("/band", payload)
    obj = res["objective_value"]
    click.echo(
        f"{res['grouper']} ({res['mode']}): {len(res['groups'])} groups"
        + (f", objective {obj:.6f}" if obj is not None else "")
        + ("" if res["feasible"] else " [infeasible sizes]")
    )
    for i, group in enumerate(res["groups"], start=1):
        click.echo(f"  group {i}: {','.join(str(b) for b in group)}")
    if res.get("path"):
        click.echo(f"wrote {res['path']}")


@main.command()
@add_options(dataset_options)
@add_options(split_options)
@click.option("--grouper", default="clodd_c", type=click.Choice(["clodd_c", "clodd_n", "bg_mean", "hierarchical"]))
@click.option("--method", default="M1", type=click.Choice(["M1", "M2", "M3", "M4"]))
@click.option("--alpha", default=0.5, type=float)
@click.option("--c-reg", default=1.0, type=float)
@click.pass_obj
def rank(client, data, format, exclude_bands, keep_classes, seed, train_fraction,
         validation_fraction, grouper, method, alpha, c_reg):
    """Rank the sigma grid of a method by validation accuracy."""
    payload = {
        "dataset": _dataset_payload(data, format, exclude_bands, keep_classes),
        "split": _split_payload(seed, train_fraction, validation_fraction),
        "grouper": grouper,
        "method": method,
        "clodd": {"alpha": alpha, "seed": seed},
        "c_reg": c_reg,
    }
    res = client.post("/rank", payload)
    click.echo(f"{res['method']} kernels via {res['grouper']} (validation accuracy):")
    for entry in res["ranking"]:
        click.echo(f"  {entry['family']} sigma={entry['sigma']:g}: {entry['validation_accuracy']:.4f}")


def _run_payload(config, seed, out, strict, extra=None):
    overrides = dict(extra or {})
    if seed is not None:
        overrides["seed"] = seed
    if out is not None:
        overrides["out_dir"] = out
    if strict:
        overrides["strict"] = True
    return {"config_path": config, "config": overrides}


@main.command()
@click.option("--config", required=True, help="Experiment config file.")
@click.option("--seed", default=None, type=int, help="Override the master seed.")
@click.option("--out", default=None, help="Override the output directory.")
@click.option("--scope", default="both", type=click.Choice(["intra", "inter", "both"]))
@click.option("--strict", is_flag=True, help="Exit 4 if any solver failed to converge.")
@click.pass_obj
def fuse(client, config, seed, out, scope, strict):
    """Run the intra-/inter-method fusion experiments and print the rows."""
    payload = _run_payload(config, seed, out, strict)
    payload["scope"] = scope
    res = client.post("/fuse", payload)
    for row in res["rows"]:
        click.echo(
            f"{row['clustering']},{row['method']},{row['trainer']},"
            f"p={row['p'] or '-'},top{row['topk']}: {row['overall_acc']:.4f}"
        )
    if not res["converged"]:
        click.echo("warning: at least one solver did not converge", err=True)
        if strict:
            sys.exit(EXIT_NONCONVERGED)


@main.command()
@click.option("--config", required=True, help="Experiment config file.")
@click.option("--seed", default=None, type=int, help="Override the master seed.")
@click.option("--out", default=None, help="Override the output directory.")
@click.option("--strict", is_flag=True, help="Exit 4 if any solver failed to converge.")
@click.pass_obj
def run(client, config, seed, out, strict):
    """Run the full protocol and write reports, images, and models."""
    res = client.post("/run", _run_payload(config, seed, out, strict))
    click.echo(
        f"wrote {res['intra_rows']} intra rows and {res['inter_rows']} inter rows to {res['out_dir']}"
    )
    for key, val in sorted(res["outputs"].items()):
        click.echo(f"  {key}: {val if isinstance(val, str) else ', '.join(map(str, val))}")
    if not res["converged"]:
        click.echo("warning: at least one solver did not converge", err=True)
        if strict:
            sys.exit(EXIT_NONCONVERGED)


@main.command()
@click.option("--model", required=True, help="Saved model file.")
@add_options(dataset_options)
@click.option("--out", default=None, help="Write one predicted class id per line.")
@click.pass_obj
def predict(client, model, data, format, exclude_bands, keep_classes, out):
    """Predict with a saved model on new data."""
    payload = {
        "model_path": model,
        "dataset": _dataset_payload(data, format, exclude_bands, keep_classes),
        "out_path": out,
    }
    res = client.post("/predict", payload)
    if res.get("accuracy") is not None:
        click.echo(f"accuracy: {res['accuracy']:.4f} on {len(res['predictions'])} pixels")
    else:
        click.echo(f"predicted {len(res['predictions'])} pixels")
    if res.get("path"):
        click.echo(f"wrote {res['path']}")
    elif res.get("accuracy") is None:
        click.echo(json.dumps(res["predictions"]))


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def serve(host, port):
    """Start the service with uvicorn."""
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
