"""``codedkt`` command line: synthesize, ingest, train, evaluate, ablate, tune,
heatmap, parse-debug and paths-debug."""
import argparse
import json
import logging
import os
import sys

from . import codepaths, dataset, experiment, javaparse
from .ktmodels.config import ModelConfig
from .synth import SynthConfig, generate

log = logging.getLogger("codedkt")

MODEL_NAMES = {"bkt": "bkt", "dkt": "dkt", "codedkt": "codedkt", "dkt-tfidf": "dkt_tfidf",
               "dkt-expert": "dkt_expert"}
PLACEMENT_NAMES = {"both": "attention_and_trace", "attention": "attention_only", "trace": "trace_only"}
EMBEDDING_NAMES = {"joint": "joint", "static": "static_pretrained"}

# flag dest -> ModelConfig field
MODEL_FLAGS = {
    "hidden_size": "hidden_size", "embedding_size": "code_embedding_size",
    "code_vector_size": "code_vector_size", "lr": "learning_rate", "epochs": "epochs",
    "batch_size": "batch_size", "R": "R", "max_seq_len": "max_seq_len",
    "max_path_nodes": "max_path_nodes", "min_count": "min_count", "grad_clip": "grad_clip",
    "embed_init_std": "embed_init_std", "pretrain_epochs": "pretrain_epochs", "tfidf_k": "tfidf_k",
}


def _run_args(p, model_default="codedkt"):
    p.add_argument("--config", help="RunConfig JSON; flags override it")
    p.add_argument("--data")
    p.add_argument("--assignment")
    p.add_argument("--model", choices=sorted(MODEL_NAMES))
    p.add_argument("--cell", choices=["rnn", "lstm"])
    p.add_argument("--placement", choices=sorted(PLACEMENT_NAMES))
    p.add_argument("--embedding", choices=sorted(EMBEDDING_NAMES))
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--skills", help="JSON mapping problem id -> 9-bit skill vector")
    p.add_argument("--rules", help="JSON list of expert rule names")
    p.add_argument("--workers", type=int)
    p.add_argument("--single-worker", action="store_true")
    p.add_argument("--pool-per-problem", action="store_true", default=None)
    p.add_argument("--direction-markers", action="store_true", default=None)
    p.add_argument("--no-resample", action="store_true", default=None,
                   help="sample each submission's paths once instead of every epoch")
    for dest, typ in (("hidden_size", int), ("embedding_size", int), ("code_vector_size", int),
                      ("lr", float), ("epochs", int), ("batch_size", int), ("R", int),
                      ("max_seq_len", int), ("max_path_nodes", int), ("min_count", int),
                      ("grad_clip", float), ("embed_init_std", float), ("pretrain_epochs", int),
                      ("tfidf_k", int)):
        flag = "--" + dest.replace("_", "-") if dest != "R" else "--R"
        p.add_argument(flag, dest=dest, type=typ)
    p.set_defaults(model_default=model_default)


def build_run_config(args):
    base = {}
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            base = json.load(f)
    overrides = dict(base.get("model_overrides", {}))
    for dest, fld in MODEL_FLAGS.items():
        v = getattr(args, dest, None)
        if v is not None:
            overrides[fld] = v
    if args.cell:
        overrides["cell"] = args.cell
    if args.placement:
        overrides["correctness_placement"] = PLACEMENT_NAMES[args.placement]
    if args.embedding:
        overrides["embedding_mode"] = EMBEDDING_NAMES[args.embedding]
    if args.direction_markers:
        overrides["direction_markers"] = True
    if args.no_resample:
        overrides["resample_paths"] = False
    if args.rules:
        with open(args.rules, encoding="utf-8") as f:
            overrides["expert_rules"] = list(json.load(f))
    fields = {"data": args.data, "assignment": args.assignment, "repetitions": args.reps,
              "seed": args.seed, "out": args.out, "skills": args.skills, "workers": args.workers,
              "pool_per_problem": args.pool_per_problem}
    if args.model:
        fields["model"] = MODEL_NAMES[args.model]
    merged = {**base, **{k: v for k, v in fields.items() if v is not None}, "model_overrides": overrides}
    merged.setdefault("model", args.model_default)
    if args.single_worker:
        merged["workers"] = 1
    for req in ("data", "assignment"):
        if not merged.get(req):
            raise SystemExit(f"error: --{req} is required (or set it in --config)")
    return experiment.RunConfig.from_dict(merged)


def cmd_synthesize(args):
    cfg = SynthConfig(n_students=args.students, n_problems=args.problems, n_assignments=args.assignments,
                      code_mode=args.mode, seed=args.seed, corrupt_fraction=args.corrupt,
                      p_init=args.p_init, learn=args.learn, guess=args.guess, slip=args.slip,
                      max_attempts=args.max_attempts)
    rows = generate(cfg, args.out)
    print(f"wrote {len(rows)} submissions for {cfg.n_students} students to {args.out}")


def cmd_ingest(args):
    records, warnings = dataset.load_progsnap2(args.data)
    assignments = sorted({r.assignment_id for r in records})
    print(f"{len(records)} records, {len({r.student_id for r in records})} students, "
          f"{len({r.problem_id for r in records})} problems, assignments: {', '.join(assignments)}")
    for k, v in sorted(warnings.items()):
        print(f"warning: {v} {k.replace('_', ' ')}")
    if args.assignment:
        vectors = dataset.load_skill_vectors(args.skills) if args.skills else None
        catalog = dataset.build_catalog(records, args.assignment, vectors)
        seqs = dataset.build_sequences(records, args.assignment, catalog)
        print(f"assignment {args.assignment}: {len(seqs)} sequences, M={catalog.M}, "
              f"{sum(len(s) for s in seqs)} attempts")
        if args.dump_sequences:
            dataset.dump_sequences(seqs, args.assignment, args.dump_sequences)
            print(f"sequences written to {args.dump_sequences}")
    elif args.dump_sequences:
        raise SystemExit("error: --dump-sequences needs --assignment")


def _summary_line(d):
    s = d["summary"]
    o, f = s["overall_auc"], s["first_attempt_auc"]
    fmt = lambda m: "n/a" if m["mean"] is None else f"{m['mean']:.4f} ({m['std']:.4f})"
    return f"{d['model']}: overall AUC {fmt(o)}, first-attempt AUC {fmt(f)}"


def cmd_evaluate(args):
    rc = build_run_config(args)
    d = experiment.run_experiment(rc)
    print(_summary_line(d))
    print(f"report written to {rc.out}")


def cmd_train(args):
    rc = build_run_config(args)
    model = experiment.train_checkpoint(rc)
    print(f"{model.kind}: final training loss {model.loss_history[-1]:.6f}; checkpoint in {rc.out}")


def cmd_ablate(args):
    rc = build_run_config(args)
    out = experiment.run_ablation(rc)
    for row in out["rows"]:
        print(f"{row['variant']}\t{row['overall_auc']:.4f}\t({row['overall_std']:.4f})")


def cmd_tune(args):
    rc = build_run_config(args)
    grid = None
    if args.grid:
        with open(args.grid, encoding="utf-8") as f:
            grid = json.load(f)
    out = experiment.run_tuning(rc, grid, repetitions=args.tune_reps)
    print(f"best {json.dumps(out['best'], sort_keys=True)} validation AUC {out['best_auc']}")


def cmd_heatmap(args):
    rc = build_run_config(args)
    written = experiment.heatmap(rc, args.student, args.checkpoint)
    for sid in written:
        print(os.path.join(rc.out, f"heatmap_{sid}.csv"))
        print(os.path.join(rc.out, f"heatmap_{sid}.svg"))


def _read_source(path):
    with open(path, encoding="utf-8", errors="replace") as f:
        return f.read()


def cmd_parse_debug(args):
    outcome = javaparse.parse_source(_read_source(args.file))
    if args.json:
        print(json.dumps({"mode": outcome.mode, "tree": outcome.tree.to_dict()}))
    else:
        print(f"# mode: {outcome.mode}")
        print(outcome.tree.pretty())


def cmd_paths_debug(args):
    outcome = javaparse.parse_source(_read_source(args.file))
    paths = codepaths.extract_paths(outcome.tree, args.max_path_nodes, args.direction_markers)
    print("start\tpath\tend")
    if paths:
        print(codepaths.format_tsv(paths))


def cmd_gradcheck(path, instances):
    from . import gradcheck
    rows = gradcheck.run(instances=instances)
    gradcheck.write_csv(rows, path)
    worst = max(e for _, _, e in rows)
    print(f"{len(rows)} checks, worst relative error {worst:.3e}; written to {path}")


def build_parser():
    p = argparse.ArgumentParser(prog="codedkt", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--dump-gradcheck", metavar="CSV", help=argparse.SUPPRESS)
    p.add_argument("--gradcheck-instances", type=int, default=50, help=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command")

    s = sub.add_parser("synthesize", help="generate a synthetic ProgSnap2 dataset")
    d = SynthConfig()
    s.add_argument("--out", required=True)
    s.add_argument("--students", type=int, default=d.n_students)
    s.add_argument("--problems", type=int, default=d.n_problems)
    s.add_argument("--assignments", type=int, default=d.n_assignments)
    s.add_argument("--mode", choices=["structural", "random", "none"], default=d.code_mode)
    s.add_argument("--seed", type=int, default=d.seed)
    s.add_argument("--corrupt", type=float, default=d.corrupt_fraction,
                   help="fraction of submissions made syntactically invalid")
    s.add_argument("--p-init", type=float, default=d.p_init)
    s.add_argument("--learn", type=float, default=d.learn)
    s.add_argument("--guess", type=float, default=d.guess)
    s.add_argument("--slip", type=float, default=d.slip)
    s.add_argument("--max-attempts", type=int, default=d.max_attempts)
    s.set_defaults(fn=cmd_synthesize)

    s = sub.add_parser("ingest", help="load a dataset and summarise it")
    s.add_argument("--data", required=True)
    s.add_argument("--assignment")
    s.add_argument("--skills")
    s.add_argument("--dump-sequences", metavar="JSONL")
    s.set_defaults(fn=cmd_ingest)

    for name, fn, helptext in (("train", cmd_train, "train one model and save a checkpoint"),
                               ("evaluate", cmd_evaluate, "repeated split/train/test evaluation"),
                               ("ablate", cmd_ablate, "run the Code-DKT ablation variants"),
                               ("tune", cmd_tune, "grid search on a fit/validation split"),
                               ("heatmap", cmd_heatmap, "prediction heatmaps for students")):
        s = sub.add_parser(name, help=helptext)
        _run_args(s)
        s.set_defaults(fn=fn)
        if name == "tune":
            s.add_argument("--grid", help="JSON object mapping ModelConfig fields to value lists")
            s.add_argument("--tune-reps", type=int, default=5)
        if name == "heatmap":
            s.add_argument("--student", action="append", default=[])
            s.add_argument("--checkpoint")

    s = sub.add_parser("parse-debug", help="print the parse tree of a Java file")
    s.add_argument("file")
    s.add_argument("--json", action="store_true")
    s.set_defaults(fn=cmd_parse_debug)

    s = sub.add_parser("paths-debug", help="print the leaf-to-leaf paths of a Java file as TSV")
    s.add_argument("file")
    s.add_argument("--max-path-nodes", type=int, default=codepaths.DEFAULT_MAX_PATH_NODES)
    s.add_argument("--direction-markers", action="store_true")
    s.set_defaults(fn=cmd_paths_debug)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.dump_gradcheck:
            cmd_gradcheck(args.dump_gradcheck, args.gradcheck_instances)
            if not args.command:
                return 0
        if not args.command:
            parser.print_help()
            return 2
        args.fn(args)
    except (dataset.IngestError, ValueError, KeyError, FloatingPointError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
