"""Command-line entry point: probability tables, tensor files, experiments, text.

One binary, subcommand style.  Results go to stdout (or --out) as CSV with a
fixed header, or as a JSON array of row objects with --format json; figures
are rendered next to the tables on request with --plot.  All randomized
commands take --seed and are reproducible given the seed (and --threads,
where work is split).

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import experiments, plots, ternary, textlang
from .core import DIRECT, RANDOM, DimensionSpec, NriSpec, NriTensor, PersistenceError, CapacityError

log = logging.getLogger("nri")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _positive_int(text: str) -> int:
    value = int(float(text))  # accepts 1e7 style
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected positive integer, got {text!r}")
    return value


def _int_list(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p != ""]


def _float_list(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p != ""]


def _dims_list(text: str) -> list[int]:
    return [int(p) for p in text.lower().split("x")]


@dataclass
class _Table:
    header: list[str]
    rows: list[dict]


def _sanitize(value):
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, np.integer):
        return int(value)
    return value


def _emit(table: _Table, fmt: str, out: str | None) -> None:
    rows = [{k: _sanitize(row.get(k, "")) for k in table.header} for row in table.rows]
    if fmt == "json":
        text = json.dumps(rows) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(table.header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else str(v) for v in
                             (row[k] for k in table.header)])
        text = buf.getvalue()
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _common_parser(table_out: bool = True) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="64-bit seed for all randomness")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="table output format")
    common.add_argument("--memcap", type=int, default=None,
                        help="memory cap in bytes for state allocation (env NRI_MEMCAP)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads where work can be split (1 = fully serial)")
    common.add_argument("-v", "--verbose", action="count", default=0)
    if table_out:
        common.add_argument("--out", default=None, help="write the table here instead of stdout")
    return common


def build_parser() -> _Parser:
    common = _common_parser()
    file_common = _common_parser(table_out=False)
    parser = _Parser(prog="nri", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prob", parents=[common], help="analytic dot-product probability")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--d", type=int, required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--exact", action="store_true", help="exact count ratio")
    g.add_argument("--series", action="store_true", help="series expansion (default)")

    p = sub.add_parser("mc", parents=[common], help="Monte Carlo dot-product distribution")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--samples", type=_positive_int, required=True)
    p.add_argument("--plot", default=None, help="render the distribution figure to this file")

    p = sub.add_parser("table1", parents=[common],
                       help="analytic vs simulated probabilities for one (n, chi) block")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--chi", type=_positive_int, required=True, help="number of nonzeros (2k)")
    p.add_argument("--samples", type=_positive_int, required=True)
    p.add_argument("--exact", action="store_true", help="use the exact ratio instead of the series")
    p.add_argument("--plot", default=None)

    p = sub.add_parser("tensor", parents=[], help="create and manipulate tensor files")
    tsub = p.add_subparsers(dest="tensor_command", required=True)

    t = tsub.add_parser("new", parents=[file_common])
    t.add_argument("--dims", type=_dims_list, required=True, help="component ranges, e.g. 100x100")
    t.add_argument("--state", type=_dims_list, required=True, help="state ranges, e.g. 50x50")
    t.add_argument("--chi", type=_dims_list, required=True, help="nonzeros per dimension, e.g. 8x8")
    t.add_argument("--mode", default=None,
                   help="comma list of random|direct per dimension (default all random)")
    t.add_argument("--kind", choices=("int64", "float64"), default="int64")
    t.add_argument("--out", dest="file", required=True, help="output tensor file")

    t = tsub.add_parser("encode", parents=[common])
    t.add_argument("--file", required=True)
    t.add_argument("--at", type=_int_list, required=True, help="component indices, e.g. 3,7")
    t.add_argument("--w", type=float, required=True)

    t = tsub.add_parser("decode", parents=[common])
    t.add_argument("--file", required=True)
    t.add_argument("--at", type=_int_list, required=True)

    t = tsub.add_parser("find", parents=[common])
    t.add_argument("--file", required=True)
    t.add_argument("--at", required=True, help="indices with one free dimension as *, e.g. *,7")
    t.add_argument("--top", type=_positive_int, required=True)

    t = tsub.add_parser("extend", parents=[common])
    t.add_argument("--file", required=True)
    t.add_argument("--dim", type=int, required=True)
    t.add_argument("--to", type=_positive_int, required=True, help="new component range")

    t = tsub.add_parser("info", parents=[common])
    t.add_argument("--file", required=True)

    p = sub.add_parser("experiment", parents=[], help="feature-recovery simulations")
    esub = p.add_subparsers(dest="experiment_command", required=True)

    e = esub.add_parser("recover", parents=[common])
    _recover_args(e)
    e.add_argument("--plot", default=None, help="render the decoded-weight profile here")

    e = esub.add_parser("sweep", parents=[common])
    _recover_args(e)
    e.add_argument("--axis", choices=("rho", "xi", "chi"), required=True)
    e.add_argument("--values", required=True, help="comma-separated axis values")
    e.add_argument("--plot", default=None)

    p = sub.add_parser("text", parents=[], help="co-occurrence text pipeline")
    xsub = p.add_subparsers(dest="text_command", required=True)

    x = xsub.add_parser("build", parents=[file_common])
    x.add_argument("--corpus", required=True, help="UTF-8 plain text file")
    x.add_argument("--window", type=_positive_int, default=2)
    x.add_argument("--transform", choices=textlang.TRANSFORMS, default="identity")
    x.add_argument("--mode", choices=("one_way", "two_way"), default="one_way")
    x.add_argument("--n", type=_positive_int, required=True, help="state size (index vector length)")
    x.add_argument("--chi", type=_positive_int, default=8)
    x.add_argument("--out", dest="model_out", required=True, metavar="FILE",
                   help="output model file (vocabulary sidecar written next to it)")

    x = xsub.add_parser("query", parents=[common])
    x.add_argument("--model", required=True)
    x.add_argument("--word", required=True)
    x.add_argument("--top", type=_positive_int, default=10)

    x = xsub.add_parser("synonym", parents=[common])
    x.add_argument("--model", default=None, help="evaluate a saved model once")
    x.add_argument("--corpus", default=None, help="rebuild from this corpus per repeat")
    x.add_argument("--items", required=True, help="TSV: given, alt1..alt4, answer index")
    x.add_argument("--L", type=_positive_int, default=60, help="top-list length")
    x.add_argument("--method", choices=("jaccard", "cosine"), default="jaccard")
    x.add_argument("--repeats", type=_positive_int, default=1)
    x.add_argument("--window", type=_positive_int, default=2)
    x.add_argument("--transform", choices=textlang.TRANSFORMS, default="sqrt")
    x.add_argument("--mode", choices=("one_way", "two_way"), default="one_way")
    x.add_argument("--n", type=_positive_int, default=None)
    x.add_argument("--reduction", type=float, default=4.0)
    x.add_argument("--chi", type=_positive_int, default=8)

    x = xsub.add_parser("synth", parents=[common], help="generate a planted-synonym corpus")
    x.add_argument("--pairs", type=_positive_int, default=10)
    x.add_argument("--contexts", type=_positive_int, default=30)
    x.add_argument("--fillers", type=_positive_int, default=3600)
    x.add_argument("--sentences", type=_positive_int, default=250)
    x.add_argument("--filler-sentences", type=_positive_int, default=2500)
    x.add_argument("--stop-rate", type=float, default=0.0)
    x.add_argument("--corpus", required=True, help="output corpus file")
    x.add_argument("--items", required=True, help="output items TSV")

    return parser


def _recover_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--N", type=_positive_int, required=True, help="matrix size per dimension")
    p.add_argument("--n", type=_positive_int, default=None, help="state size per reduced dimension")
    p.add_argument("--chi", type=_positive_int, default=8)
    p.add_argument("--mode", choices=("one_way", "two_way", "direct"), default="two_way")
    p.add_argument("--rho", type=float, default=0.005, help="feature density")
    p.add_argument("--w", type=_positive_int, default=100, help="feature weight")
    p.add_argument("--M", type=int, default=10, help="background noise maximum")
    p.add_argument("--classes", type=_positive_int, default=None, help="classes sampled for decoding")


# -- ternary commands ---------------------------------------------------------


def _cmd_prob(args) -> int:
    fn = ternary.prob_dot_exact if args.exact else ternary.prob_dot_series
    value = fn(args.n, args.k, args.d)
    table = _Table(
        ["n", "2k", "d", "P_analytic", "P_mc", "stderr"],
        [{"n": args.n, "2k": 2 * args.k, "d": args.d, "P_analytic": value, "P_mc": "", "stderr": ""}],
    )
    _emit(table, args.format, args.out)
    return 0


def _mc_table(n: int, k: int, samples: int, seed: int, workers: int, exact: bool,
              dmax: int | None = None) -> _Table:
    dist = ternary.monte_carlo_dot(n, k, samples, seed, workers=workers)
    fn = ternary.prob_dot_exact if exact else ternary.prob_dot_series
    rows = []
    for d in sorted(dist.entries):
        if dmax is not None and d > dmax:
            continue
        rows.append({
            "n": n, "2k": 2 * k, "d": d,
            "P_analytic": fn(n, k, d),
            "P_mc": dist.entries[d],
            "stderr": dist.stderr(d),
        })
    return _Table(["n", "2k", "d", "P_analytic", "P_mc", "stderr"], rows)


def _cmd_mc(args) -> int:
    table = _mc_table(args.n, args.k, args.samples, args.seed, args.threads, exact=False)
    _emit(table, args.format, args.out)
    if args.plot:
        plots.plot_dot_distribution(table.rows, args.plot)
        log.info("figure written to %s", args.plot)
    return 0


def _cmd_table1(args) -> int:
    if args.chi % 2 != 0:
        raise ValueError("chi must be even")
    k = args.chi // 2
    table = _mc_table(args.n, k, args.samples, args.seed, args.threads,
                      exact=args.exact, dmax=min(k, 4))
    _emit(table, args.format, args.out)
    if args.plot:
        plots.plot_dot_distribution(table.rows, args.plot)
        log.info("figure written to %s", args.plot)
    return 0


# -- tensor commands ------------------------------------------------------------


def _cmd_tensor_new(args) -> int:
    rank = len(args.dims)
    if len(args.state) != rank or len(args.chi) != rank:
        raise ValueError("--dims, --state and --chi must agree on rank")
    modes = args.mode.split(",") if args.mode else [RANDOM] * rank
    if len(modes) != rank:
        raise ValueError("--mode must list one mode per dimension")
    dims = []
    for big_n, small_n, chi, mode in zip(args.dims, args.state, args.chi, modes):
        if mode == DIRECT:
            dims.append(DimensionSpec.direct(big_n))
        else:
            dims.append(DimensionSpec.random(big_n, small_n, chi))
    tensor = NriTensor(NriSpec(tuple(dims), master_seed=args.seed, element_kind=args.kind),
                       memory_cap=args.memcap)
    tensor.save(args.file)
    log.info("tensor written to %s (%d state cells)", args.file, tensor.state.size)
    return 0


def _cmd_tensor_encode(args) -> int:
    tensor = NriTensor.load(args.file, memory_cap=args.memcap)
    tensor.encode_add(args.at, args.w)
    tensor.save(args.file)
    return 0


def _cmd_tensor_decode(args) -> int:
    tensor = NriTensor.load(args.file, memory_cap=args.memcap)
    value = tensor.decode(args.at)
    table = _Table(["indices", "value"],
                   [{"indices": " ".join(map(str, args.at)), "value": value}])
    _emit(table, args.format, args.out)
    return 0


def _cmd_tensor_find(args) -> int:
    tensor = NriTensor.load(args.file, memory_cap=args.memcap)
    parts = args.at.split(",")
    if len(parts) != tensor.rank:
        raise ValueError(f"--at must give {tensor.rank} entries")
    fixed = {i: int(p) for i, p in enumerate(parts) if p.strip() != "*"}
    toplist = tensor.find_top(fixed, args.top)
    rows = [
        {"rank": r + 1, "indices": " ".join(map(str, idx)), "value": value}
        for r, (idx, value) in enumerate(toplist.entries)
    ]
    _emit(_Table(["rank", "indices", "value"], rows), args.format, args.out)
    return 0


def _cmd_tensor_extend(args) -> int:
    tensor = NriTensor.load(args.file, memory_cap=args.memcap)
    tensor.extend_dimension(args.dim, args.to)
    tensor.save(args.file)
    return 0


def _cmd_tensor_info(args) -> int:
    tensor = NriTensor.load(args.file, memory_cap=args.memcap)
    spec = tensor.spec
    row = {
        "kind": spec.element_kind,
        "rank": spec.rank,
        "seed": spec.master_seed,
        "dims": "x".join(str(d.component_range) for d in spec.dims),
        "state": "x".join(str(d.state_range) for d in spec.dims),
        "chi": "x".join(str(d.nonzero_count) for d in spec.dims),
        "modes": ",".join(d.mode for d in spec.dims),
        "normalization": spec.normalization,
        "xi": spec.reduction_ratio,
        "saturated": int(tensor.saturated),
    }
    _emit(_Table(list(row), [row]), args.format, args.out)
    return 0


# -- experiment commands ---------------------------------------------------------


def _base_config(args, **overrides) -> experiments.RecoveryConfig:
    fields = dict(
        matrix_size=args.N,
        state_size=args.n,
        chi=args.chi,
        mode=args.mode,
        feature_density=args.rho,
        feature_weight=args.w,
        noise_max=args.M,
        classes_sampled=args.classes,
        seed=args.seed,
    )
    fields.update(overrides)
    if fields["state_size"] is None:
        if fields["mode"] == "direct":
            fields["state_size"] = fields["matrix_size"]
        else:
            raise ValueError("give --n (state size) for one_way/two_way")
    return experiments.RecoveryConfig(**fields)


def _cmd_experiment_recover(args) -> int:
    report = experiments.run_recovery(_base_config(args), memory_cap=args.memcap)
    rows = experiments.sweep_rows([experiments.SweepRow(report.config, report=report)])
    _emit(_Table(experiments.SWEEP_HEADER.split(","), rows), args.format, args.out)
    if args.plot:
        plots.plot_recovery_profile(report, args.plot)
        log.info("figure written to %s", args.plot)
    return 0


def _cmd_experiment_sweep(args) -> int:
    configs = []
    if args.axis == "rho":
        for rho in _float_list(args.values):
            configs.append(_base_config(args, feature_density=rho))
    elif args.axis == "chi":
        for chi in _int_list(args.values):
            configs.append(_base_config(args, chi=chi))
    else:
        rank = 1 if args.mode == "one_way" else 2
        for xi in _float_list(args.values):
            state = experiments.index_dim_for_ratio(args.N, xi, rank)
            configs.append(_base_config(args, state_size=state))
    rows = experiments.sweep(configs, threads=args.threads, memory_cap=args.memcap)
    for row in rows:
        if row.error:
            log.warning("config %s failed: %s", row.config, row.error)
    records = experiments.sweep_rows(rows)
    _emit(_Table(experiments.SWEEP_HEADER.split(","), records), args.format, args.out)
    if args.plot:
        plots.plot_sweep(records, args.axis, args.plot)
        log.info("figure written to %s", args.plot)
    return 0


# -- text commands ------------------------------------------------------------------


def _sidecar_path(model_path: str) -> str:
    return model_path + ".json"


def _cmd_text_build(args) -> int:
    with open(args.corpus, "r", encoding="utf-8") as fh:
        tokens = textlang.tokenize(fh.read())
    model = textlang.build_cooc_model(
        tokens,
        state_size=args.n,
        mode=args.mode,
        window_halfwidth=args.window,
        transform=args.transform,
        chi=args.chi,
        master_seed=args.seed,
        memory_cap=args.memcap,
    )
    model.nri.save(args.model_out)
    sidecar = {
        "words": model.vocabulary.words(),
        "counts": [model.vocabulary.count(w) for w in model.vocabulary.words()],
        "window_halfwidth": model.window_halfwidth,
        "transform": model.transform,
        "mode": model.mode,
        "encode_policy": model.encode_policy,
        "corpus": os.path.abspath(args.corpus),
    }
    with open(_sidecar_path(args.model_out), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh)
    log.info("model written to %s (+ vocabulary sidecar), vocabulary %d words",
             args.model_out, len(model.vocabulary))
    return 0


def _load_text_model(path: str, memory_cap=None) -> textlang.CoocModel:
    with open(_sidecar_path(path), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    tensor = NriTensor.load(path, memory_cap=memory_cap)
    return textlang.CoocModel.from_parts(
        tensor,
        textlang.Vocabulary.from_items(meta["words"], meta["counts"]),
        window_halfwidth=meta["window_halfwidth"],
        transform=meta["transform"],
        mode=meta["mode"],
        encode_policy=meta["encode_policy"],
    )


def _cmd_text_query(args) -> int:
    model = _load_text_model(args.model, memory_cap=args.memcap)
    values = model.correlate_values(args.word)
    words = model.top_correlates(args.word, args.top)
    rows = [
        {"rank": r + 1, "word": w, "value": float(values[model.vocabulary.id(w)])}
        for r, w in enumerate(words)
    ]
    _emit(_Table(["rank", "word", "value"], rows), args.format, args.out)
    return 0


def _cmd_text_synonym(args) -> int:
    items = textlang.read_items_tsv(args.items)
    method = "jaccard_toplist" if args.method == "jaccard" else "cosine"
    if args.corpus is None:
        if args.model is None:
            raise ValueError("give --model or --corpus")
        if args.repeats != 1:
            raise ValueError("--repeats needs --corpus to rebuild the model")
        model = _load_text_model(args.model, memory_cap=args.memcap)
        hits = sum(model.answer_synonym(it, args.L, method) == it.answer for it in items)
        mean, std, per_seed = hits / len(items), 0.0, [hits / len(items)]
    else:
        with open(args.corpus, "r", encoding="utf-8") as fh:
            tokens = textlang.tokenize(fh.read())
        seeds = [int(s) for s in np.random.SeedSequence(args.seed).generate_state(args.repeats)]
        kwargs = dict(mode=args.mode, window_halfwidth=args.window,
                      transform=args.transform, chi=args.chi, memory_cap=args.memcap)
        if args.n is not None:
            kwargs["state_size"] = args.n
        else:
            kwargs["reduction"] = args.reduction
        mean, std, per_seed = textlang.evaluate_synonyms(
            tokens, items, top=args.L, method=method, seeds=seeds, **kwargs)
    rows = [{
        "items": len(items), "L": args.L, "method": args.method,
        "repeats": len(per_seed), "accuracy_mean": mean, "accuracy_std": std,
    }]
    _emit(_Table(["items", "L", "method", "repeats", "accuracy_mean", "accuracy_std"], rows),
          args.format, args.out)
    return 0


def _cmd_text_synth(args) -> int:
    sentences, items = textlang.make_planted_corpus(
        pairs=args.pairs,
        contexts_per_topic=args.contexts,
        filler_words=args.fillers,
        topic_sentences=args.sentences,
        filler_sentences=args.filler_sentences,
        stop_rate=args.stop_rate,
        seed=args.seed,
    )
    with open(args.corpus, "w", encoding="utf-8") as fh:
        for sentence in sentences:
            fh.write(" ".join(sentence) + "\n")
    textlang.write_items_tsv(items, args.items)
    log.info("corpus written to %s, %d items to %s", args.corpus, len(items), args.items)
    return 0


_HANDLERS = {
    ("prob",): _cmd_prob,
    ("mc",): _cmd_mc,
    ("table1",): _cmd_table1,
    ("tensor", "new"): _cmd_tensor_new,
    ("tensor", "encode"): _cmd_tensor_encode,
    ("tensor", "decode"): _cmd_tensor_decode,
    ("tensor", "find"): _cmd_tensor_find,
    ("tensor", "extend"): _cmd_tensor_extend,
    ("tensor", "info"): _cmd_tensor_info,
    ("experiment", "recover"): _cmd_experiment_recover,
    ("experiment", "sweep"): _cmd_experiment_sweep,
    ("text", "build"): _cmd_text_build,
    ("text", "query"): _cmd_text_query,
    ("text", "synonym"): _cmd_text_synonym,
    ("text", "synth"): _cmd_text_synth,
}


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except SystemExit as exc:  # --help paths
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s", stream=sys.stderr)
    key = (args.command,)
    for attr in ("tensor_command", "experiment_command", "text_command"):
        if getattr(args, attr, None):
            key = (args.command, getattr(args, attr))
    try:
        return _HANDLERS[key](args)
    except (ValueError, KeyError, OSError, PersistenceError, CapacityError, RuntimeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
