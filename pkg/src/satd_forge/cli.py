"""Command-line surface wiring the pipeline end to end.

Exit codes: 0 success, 1 usage, 2 data error, 3 training failure.
SATD_THREADS caps the mining worker count. All randomness flows from the
explicit --seed flags and every artifact records the producing config.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__, evalkit
from .detector import (
    DetectorHp,
    fit_traditional,
    load_detector,
    predict,
    save_detector,
    train_dl_detector,
)
from .errors import DataError, JavaLexError, SatdForgeError, TrainingError
from .generator import (
    GeneratorHp,
    generate_comment,
    load_generator,
    save_generator,
    train_generator,
)
from .java_miner import (
    SATD,
    build_dataset,
    label_comment,
    mine_file,
    read_jsonl,
    write_jsonl,
)
from .pretrainer import load_lm, save_lm, train_next_token_lm
from .textpipe import frame_comment, normalize_comment

DETECT_TASKS = ("detect-code", "detect-comment")
ALL_TASKS = DETECT_TASKS + ("generate",)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- dataset plumbing ------------------------------------------------------


def _task_sequences(records, task: str):
    """(items, labels) for a detector task over corpus records."""
    if task == "detect-code":
        items = [r.sbt_tokens for r in records]
    elif task == "detect-comment":
        items = [r.comment_words for r in records]
    else:
        raise DataError(f"unknown detector task: {task!r}")
    labels = [1 if r.label == SATD else 0 for r in records]
    return items, labels


def _generation_pairs(records):
    """(sbt_tokens, framed comment) for every SATD record."""
    pairs = [
        (r.sbt_tokens, frame_comment(r.comment_words))
        for r in records
        if r.label == SATD and r.comment_words
    ]
    if not pairs:
        raise DataError("no SATD pairs available for generation")
    return pairs


def _vocab_kind(task: str) -> str:
    return "code" if task == "detect-code" else "comment"


def _safe_predict(model, sequence) -> bool:
    if not sequence:
        return False  # no tokens carry no admission
    return predict(model, sequence)[1]


def make_detector_recipe(task: str, hp_dict: dict, seed: int):
    """A run_cv/cross-project recipe: fit on the training side, score
    precision/recall/F1 on the held-out side."""
    model_type = hp_dict.get("model", "dl")
    kind = _vocab_kind(task)

    def recipe(train_items, train_labels, test_items, test_labels, fold_index):
        fold_seed = seed + 1000 * fold_index
        if model_type == "dl":
            hp = DetectorHp.from_dict(hp_dict)
            usable = [(s, y) for s, y in zip(train_items, train_labels) if s]
            model = train_dl_detector(
                [s for s, _ in usable],
                [y for _, y in usable],
                hp,
                fold_seed,
                vocab_kind=kind,
            )
        elif model_type in ("mnb", "svm"):
            model = fit_traditional(
                train_items,
                train_labels,
                kind=model_type,
                hp=DetectorHp.from_dict(hp_dict),
                features=hp_dict.get("features", "bow"),
                alpha=hp_dict.get("alpha", 1.0),
                lam=hp_dict.get("lam", 1e-2),
                epochs=hp_dict.get("epochs", 20),
                seed=fold_seed,
                vocab_kind=kind,
            )
        else:
            raise DataError(f"unknown model type: {model_type!r}")
        preds = [_safe_predict(model, s) for s in test_items]
        return evalkit.prf1(preds, test_labels).as_dict()

    return recipe


def make_generator_recipe(hp_dict: dict, seed: int):
    def recipe(train_items, _train_labels, test_items, _test_labels, fold_index):
        hp = GeneratorHp.from_dict(hp_dict)
        model = train_generator(train_items, hp, seed + 1000 * fold_index)
        scored = []
        for code, framed in test_items:
            hyp = generate_comment(model, code)
            scored.append((hyp, framed[1:-1]))
        return evalkit.mean_bleu(scored)

    return recipe


def _expand_grid(grid: dict) -> list[dict]:
    fixed = {k: v for k, v in grid.items() if not isinstance(v, list)}
    swept = {k: v for k, v in grid.items() if isinstance(v, list)}
    if not swept:
        return [dict(fixed)]
    keys = sorted(swept)
    combos = []
    for values in itertools.product(*(swept[k] for k in keys)):
        combo = dict(fixed)
        combo.update(dict(zip(keys, values)))
        combos.append(combo)
    return combos


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise DataError(f"missing file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc


# -- subcommands -----------------------------------------------------------


def _mine_one(args_tuple):
    path, root = args_tuple
    diagnostics: list[str] = []
    rel = path.relative_to(root)
    project = rel.parts[0] if len(rel.parts) > 1 else root.name
    try:
        records = mine_file(path, root=root, project=project, diagnostics=diagnostics)
    except JavaLexError as exc:
        # one unlexable file must not abort a corpus-scale run
        return [], [f"skipped {rel}: {exc}"]
    return records, [f"{rel}: {d}" for d in diagnostics]


def cmd_mine(args) -> int:
    root = Path(args.src_dir)
    if not root.is_dir():
        raise DataError(f"not a directory: {root}")
    files = sorted(root.rglob("*.java"))
    workers = int(os.environ.get("SATD_THREADS", "1") or "1")
    all_records = []
    all_diagnostics = []
    if workers > 1 and len(files) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for records, diags in pool.map(_mine_one, [(f, root) for f in files]):
                all_records.extend(records)
                all_diagnostics.extend(diags)
    else:
        for f in files:
            records, diags = _mine_one((f, root))
            all_records.extend(records)
            all_diagnostics.extend(diags)
    meta = {
        "command": "mine",
        "src_dir": str(root),
        "files": len(files),
        "pairs": len(all_records),
        "diagnostics": all_diagnostics,
    }
    write_jsonl(args.out, all_records, meta=meta)
    print(f"mined {len(all_records)} pairs from {len(files)} files -> {args.out}")
    return 0


def cmd_label(args) -> int:
    records, meta = read_jsonl(args.corpus)
    n_labeled = 0
    for r in records:
        if r.comment_raw is not None:
            r.label = label_comment(r.comment_raw)
            n_labeled += 1
    meta = dict(meta)
    meta["command"] = "label"
    out = args.out or args.corpus
    write_jsonl(out, records, meta=meta)
    counts = {}
    for r in records:
        counts[r.label] = counts.get(r.label, 0) + 1
    print(f"labeled {n_labeled} commented pairs -> {out} {json.dumps(counts, sort_keys=True)}")
    return 0


def cmd_dataset(args) -> int:
    records, _ = read_jsonl(args.corpus)
    dataset = build_dataset(records, seed=args.seed, balance=args.balance)
    meta = {
        "command": "dataset",
        "seed": args.seed,
        "balance": args.balance,
        "provenance": dataset.provenance,
    }
    write_jsonl(args.out, dataset.pairs, meta=meta)
    print(f"dataset: {dataset.provenance} -> {args.out}")
    if args.pool_out:
        pool_meta = {"command": "dataset", "role": "pretraining-pool", "seed": args.seed}
        write_jsonl(args.pool_out, dataset.leftover_pool, meta=pool_meta)
        print(f"pool: {len(dataset.leftover_pool)} leftover NonSATD -> {args.pool_out}")
    return 0


def cmd_tune(args) -> int:
    records, _ = read_jsonl(args.data)
    grid = _read_json(args.grid)
    settings = _expand_grid(grid)
    config = {
        "command": "tune",
        "task": args.task,
        "seed": args.seed,
        "fraction": args.fraction,
        "grid": grid,
    }
    rows = []
    if args.task in DETECT_TASKS:
        items, labels = _task_sequences(records, args.task)
        tuning_ids, rest_ids = evalkit.tuning_split(
            labels, fraction=args.fraction, stratified=True, seed=args.seed
        )
        train_items = [items[i] for i in rest_ids]
        train_labels = [labels[i] for i in rest_ids]
        test_items = [items[i] for i in tuning_ids]
        test_labels = [labels[i] for i in tuning_ids]
        for setting in settings:
            recipe = make_detector_recipe(args.task, setting, args.seed)
            scores = recipe(train_items, train_labels, test_items, test_labels, 0)
            rows.append({**setting, **scores})
        rows = evalkit.sort_result_rows(rows)
        by_pool: dict[str, list[dict]] = {}
        for row in rows:
            by_pool.setdefault(str(row.get("pooling", "-")), []).append(row)
        nominated = [row for pod in by_pool.values() for row in pod[:3]]
        nominated = evalkit.sort_result_rows(nominated)
    else:
        pairs = _generation_pairs(records)
        tuning_ids, rest_ids = evalkit.tuning_split(
            [0] * len(pairs), fraction=args.fraction, stratified=False, seed=args.seed
        )
        train_pairs = [pairs[i] for i in rest_ids]
        test_pairs = [pairs[i] for i in tuning_ids]
        for setting in settings:
            recipe = make_generator_recipe(setting, args.seed)
            scores = recipe(train_pairs, None, test_pairs, None, 0)
            rows.append({**setting, **scores})
        rows = evalkit.sort_result_rows(rows, primary="bleu_4", tiebreak="bleu_1")
        nominated = rows[:1]
    payload = {"config": config, "rows": rows, "nominated": nominated}
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True))
    print(f"tuned {len(settings)} settings -> {args.out}")
    return 0


def cmd_cv(args) -> int:
    records, _ = read_jsonl(args.data)
    hp_dict = _read_json(args.hp)
    config = {
        "command": "cv",
        "task": args.task,
        "seed": args.seed,
        "k": args.k,
        "hp": hp_dict,
    }
    if args.task in DETECT_TASKS:
        items, labels = _task_sequences(records, args.task)
        plan = evalkit.stratified_folds(labels, k=args.k, stratified=True, seed=args.seed)
        recipe = make_detector_recipe(args.task, hp_dict, args.seed)
        result = evalkit.run_cv(items, labels, recipe, plan)
        columns = ["fold", "test_size", "precision", "recall", "f1"]
    else:
        pairs = _generation_pairs(records)
        labels = [0] * len(pairs)
        plan = evalkit.stratified_folds(labels, k=args.k, stratified=False, seed=args.seed)
        recipe = make_generator_recipe(hp_dict, args.seed)
        result = evalkit.run_cv(pairs, labels, recipe, plan)
        columns = ["fold", "test_size", "bleu_1", "bleu_2", "bleu_3", "bleu_4"]
    rows = list(result.per_fold) + [{**result.mean, "fold": "mean"}]
    evalkit.write_report(args.report, rows, folds=plan, config=config, columns=columns,
                         title=f"{args.task} {args.k}-fold cross validation")
    print(f"cv mean: {json.dumps(result.mean, sort_keys=True)} -> {args.report}")
    return 0


def cmd_pretrain(args) -> int:
    records, _ = read_jsonl(args.pool)
    sequences = [r.sbt_tokens for r in records]
    hp = DetectorHp.from_dict(_read_json(args.hp) if args.hp else {})
    model = train_next_token_lm(sequences, hp, args.seed)
    save_lm(model, args.out)
    print(f"pretrained LM on {len(sequences)} sequences, loss {model.final_loss:.4f} -> {args.out}")
    return 0


def cmd_train(args) -> int:
    records, _ = read_jsonl(args.data)
    hp_dict = _read_json(args.hp) if args.hp else {}
    mode = args.mode.replace("-", "_")
    if args.task == "generate":
        pairs = _generation_pairs(records)
        model = train_generator(pairs, GeneratorHp.from_dict(hp_dict), args.seed)
        save_generator(model, args.out)
        print(f"generator trained on {len(pairs)} pairs, loss {model.final_loss:.4f} -> {args.out}")
        return 0
    items, labels = _task_sequences(records, args.task)
    model_type = hp_dict.get("model", "dl")
    kind = _vocab_kind(args.task)
    if model_type == "dl":
        hp = DetectorHp.from_dict(hp_dict)
        usable = [(s, y) for s, y in zip(items, labels) if s]
        init_blocks = None
        vocab = None
        if args.init:
            lm = load_lm(args.init)
            init_blocks = lm.blocks()
            vocab = lm.vocab  # indices must match the pre-trained embedding
        model = train_dl_detector(
            [s for s, _ in usable],
            [y for _, y in usable],
            hp,
            args.seed,
            vocab=vocab,
            vocab_kind=kind,
            init_blocks=init_blocks,
            init_mode=mode,
        )
    elif model_type in ("mnb", "svm"):
        if args.init and mode == "embedding_only" and model_type == "svm":
            lm = load_lm(args.init)
            model = fit_traditional(
                items,
                labels,
                kind="pretrained_embed_svm",
                hp=DetectorHp.from_dict(hp_dict),
                lam=hp_dict.get("lam", 1e-2),
                epochs=hp_dict.get("epochs", 20),
                seed=args.seed,
                vocab=lm.vocab,
                embedding=lm.network.embedding.p["M"],
            )
        else:
            model = fit_traditional(
                items,
                labels,
                kind=model_type,
                hp=DetectorHp.from_dict(hp_dict),
                features=hp_dict.get("features", "bow"),
                alpha=hp_dict.get("alpha", 1.0),
                lam=hp_dict.get("lam", 1e-2),
                epochs=hp_dict.get("epochs", 20),
                seed=args.seed,
                vocab_kind=kind,
            )
    else:
        raise DataError(f"unknown model type: {model_type!r}")
    save_detector(model, args.out)
    print(f"{model.kind} detector trained on {len(items)} sequences -> {args.out}")
    return 0


def _input_lines(path) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise DataError(f"missing file: {path}") from exc
    return [line for line in text.splitlines() if line.strip()]


def _line_to_sequence(line: str, kind: str) -> list[str]:
    if kind == "comment":
        return normalize_comment(line)
    from .ast_sbt import parse_if_statement, sbt_serialize
    from .java_miner import lex_java

    return sbt_serialize(parse_if_statement(lex_java(line)))


def cmd_detect(args) -> int:
    model = load_detector(args.model)
    kind = args.kind or model.vocab.kind
    for line in _input_lines(args.input):
        seq = _line_to_sequence(line, kind)
        if not seq:
            print(f"0.000000\tNonSATD\t{line}")
            continue
        prob, positive = predict(model, seq)
        verdict = "SATD" if positive else "NonSATD"
        print(f"{prob:.6f}\t{verdict}\t{line}")
    return 0


def cmd_generate(args) -> int:
    model = load_generator(args.model)
    for line in _input_lines(args.input):
        seq = _line_to_sequence(line, "code")
        words = generate_comment(model, seq)
        print("// " + " ".join(words))
    return 0


def cmd_xproject(args) -> int:
    records, _ = read_jsonl(args.data)
    hp_dict = _read_json(args.hp) if args.hp else {}
    items, labels = _task_sequences(records, args.task)
    projects = [r.project for r in records]
    recipe = make_detector_recipe(args.task, hp_dict, args.seed)
    rows, mean = evalkit.cross_project_rounds(items, labels, projects, recipe)
    config = {"command": "xproject", "task": args.task, "seed": args.seed, "hp": hp_dict}
    table_rows = rows + [{"project": "average", **mean}]
    evalkit.write_report(
        args.report,
        table_rows,
        config=config,
        columns=["project", "test_size", "precision", "recall", "f1"],
        title=f"{args.task} leave-one-project-out",
    )
    print(f"{len(rows)} rounds, average {json.dumps(mean, sort_keys=True)} -> {args.report}")
    return 0


# -- parser ----------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="satd-forge", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("mine", help="mine a directory tree of .java files")
    p.add_argument("src_dir")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("label", help="apply keyword labels to a mined corpus")
    p.add_argument("corpus")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("dataset", help="dedup, filter, shuffle, balance")
    p.add_argument("corpus")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--balance", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--pool-out", default=None)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("tune", help="grid search on the stratified tuning split")
    p.add_argument("data")
    p.add_argument("--task", choices=ALL_TASKS, required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fraction", type=float, default=0.10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("cv", help="k-fold cross validation")
    p.add_argument("data")
    p.add_argument("--task", choices=ALL_TASKS, required=True)
    p.add_argument("--hp", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("pretrain", help="next-token LM over a code pool")
    p.add_argument("pool")
    p.add_argument("--hp", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="train one model on a dataset")
    p.add_argument("data")
    p.add_argument("--task", choices=ALL_TASKS, required=True)
    p.add_argument("--hp", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--init", default=None, help="pre-trained LM checkpoint")
    p.add_argument("--mode", choices=["end2end", "embedding-only"], default="end2end")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="classify code or comments from a file")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--kind", choices=["code", "comment"], default=None)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("generate", help="generate comments for code lines")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("xproject", help="leave-one-project-out validation")
    p.add_argument("data")
    p.add_argument("--task", choices=DETECT_TASKS, default="detect-comment")
    p.add_argument("--hp", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_xproject)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    if not getattr(args, "func", None):
        parser.print_help()
        return 1
    try:
        return args.func(args)
    except TrainingError as exc:
        print(f"training failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, SatdForgeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
