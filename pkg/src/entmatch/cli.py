"""Command-line pipeline: synth, prepare, train, transfer, active, eval,
baseline, repeat.

Every command resolves its settings as defaults < config file < flags,
echoes the resolved values to ``resolved_config.json`` in the output
directory, and exits 0 on success, 2 on configuration errors, 1 on
runtime failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import random
import sys
import threading
import time

import numpy as np

from .active import (ALConfig, HUMAN, IterationWriter, OracleAnnotator,
                     PROXY_NEGATIVE, PROXY_POSITIVE, UnlabeledPool, gold_map,
                     run_dtal)
from .baselines import (extract_features, predict_gnb, predict_logreg,
                        train_gnb, train_logreg)
from .checkpoint import load_model, read_manifest, save_model
from .data import (ConfigError, SynthConfig, block, candidate_set_from_tables,
                   default_blocking_rules, load_blocking_rules,
                   load_candidates, load_matches, load_table, split, stats,
                   synth_generate, write_matches, write_table)
from .model import DeepERModel, ModelConfig, encode_pairs
from .prepared import load_prepared, write_prepared
from .text import EmbeddingStore
from .training import (MetricsWriter, SourceDataset, TrainConfig, confusion,
                       evaluate, report_from_counts, train_adversarial,
                       train_supervised)

TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}
MODEL_KEYS = {f.name for f in dataclasses.fields(ModelConfig)}
ACTIVE_KEYS = {f.name for f in dataclasses.fields(ALConfig)} - {"train"}
TOP_KEYS = {"train", "model", "active", "embeddings"}


# --------------------------------------------------------------------------
# config resolution


def load_run_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: run config must be a JSON object")
    unknown = set(doc) - TOP_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    for section, allowed in (("train", TRAIN_KEYS), ("model", MODEL_KEYS),
                             ("active", ACTIVE_KEYS)):
        extra = set(doc.get(section, {})) - allowed
        if extra:
            raise ConfigError(f"{path}: unknown {section} keys {sorted(extra)}")
    return doc


def _merge(section: dict, flag_map: dict) -> dict:
    out = dict(section)
    for key, value in flag_map.items():
        if value is not None:
            out[key] = value
    return out


def resolve_train(args, file_cfg: dict) -> TrainConfig:
    merged = _merge(file_cfg.get("train", {}), {
        "batch_size": getattr(args, "batch_size", None),
        "epochs": getattr(args, "epochs", None),
        "learning_rate": getattr(args, "learning_rate", None),
        "threshold": getattr(args, "threshold", None),
        "seed": getattr(args, "seed", None),
    })
    return TrainConfig(**merged)


def resolve_model(args, file_cfg: dict) -> ModelConfig:
    merged = _merge(file_cfg.get("model", {}), {
        "embedding_dim": getattr(args, "embedding_dim", None),
        "hidden_size": getattr(args, "hidden_size", None),
        "reversal_lambda": getattr(args, "reversal_lambda", None),
        "fine_tune_embeddings": True if getattr(args, "fine_tune", False) else None,
        "dataset_mode": getattr(args, "dataset_mode", None),
        "seed": getattr(args, "seed", None),
    })
    return ModelConfig(**merged)


def resolve_active(args, file_cfg: dict, train: TrainConfig) -> ALConfig:
    merged = _merge(file_cfg.get("active", {}), {
        "k_per_iteration": getattr(args, "K", None),
        "iterations": getattr(args, "T", None),
        "inner_epochs": getattr(args, "inner_epochs", None),
        "strategy": getattr(args, "strategy", None),
        "remove_high_confidence":
            False if getattr(args, "keep_high_confidence", False) else None,
        "inner_eval": getattr(args, "inner_eval", None),
    })
    return ALConfig(train=train, **merged)


def resolve_embeddings(args, file_cfg: dict) -> str | None:
    return getattr(args, "embeddings", None) or file_cfg.get("embeddings")


def make_store(embeddings: str | None, dim: int) -> EmbeddingStore:
    if embeddings is None:
        return EmbeddingStore.hash_only(dim)
    return EmbeddingStore.load(embeddings)


def out_dir_for(args, command: str, seed: int) -> str:
    out = getattr(args, "out", None)
    if out is None:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        out = os.path.join("runs", f"{command}-{stamp}-s{seed}")
    os.makedirs(out, exist_ok=True)
    return out


def echo_config(out: str, payload: dict) -> None:
    with open(os.path.join(out, "resolved_config.json"), "w",
              encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def config_payload(command_name: str, **extra) -> dict:
    payload = {"command": command_name}
    for key, value in extra.items():
        if dataclasses.is_dataclass(value) and not isinstance(value, type):
            value = dataclasses.asdict(value)
        payload[key] = value
    return payload


# --------------------------------------------------------------------------
# shared pieces


def require_labeled(prepared, what: str) -> None:
    if not prepared.labeled:
        raise ConfigError(f"{what} needs labeled candidates; run prepare "
                          "with --matches (or a labeled --candidates file)")


def encode_split(prepared, store, model, which: str):
    return encode_pairs(store, model.schema, getattr(prepared, which),
                        model.tokenizer)


def rehost_model(loaded: DeepERModel, schema: list[str]) -> DeepERModel:
    """Move checkpoint weights onto a dataset with a different schema; no
    parameter shape depends on the attribute count, so the snapshot fits."""
    if loaded.schema == schema:
        return loaded
    fresh = DeepERModel(schema, loaded.store, loaded.config,
                        dataset_names=loaded.dataset_names,
                        tokenizer=loaded.tokenizer)
    fresh.restore(loaded.snapshot())
    return fresh


# --------------------------------------------------------------------------
# commands


def cmd_synth(args) -> dict:
    seed = args.seed if args.seed is not None else 7
    out = out_dir_for(args, "synth", seed)
    cfg = SynthConfig(typo_rate=args.typo_rate, abbrev_rate=args.abbrev_rate,
                      null_rate=args.null_rate,
                      year_jitter_rate=args.year_jitter_rate,
                      decoy_rate=args.decoy_rate)
    left, right, matches = synth_generate(args.n, cfg, seed)
    write_table(left, os.path.join(out, "left.csv"))
    write_table(right, os.path.join(out, "right.csv"))
    write_matches(matches, os.path.join(out, "matches.csv"))
    rules = default_blocking_rules()
    with open(os.path.join(out, "rules.json"), "w", encoding="utf-8") as fh:
        json.dump({"rules": [vars(r) for r in rules]}, fh, indent=2)
        fh.write("\n")
    echo_config(out, config_payload("synth", n=args.n, seed=seed,
                                    synth=cfg, out=out))
    return {"out": out, "entities": args.n, "matches": len(matches)}


def cmd_prepare(args) -> dict:
    seed = args.seed if args.seed is not None else 1
    out = out_dir_for(args, "prepare", seed)
    left = load_table(args.left)
    right = load_table(args.right)
    matches = load_matches(args.matches) if args.matches else None
    if args.candidates:
        ids, labels = load_candidates(args.candidates)
        candidates = candidate_set_from_tables(left, right, ids,
                                               matches=matches, labels=labels)
        source = {"candidates": args.candidates}
    else:
        rules = load_blocking_rules(args.block)
        candidates = block(left, right, rules, matches=matches,
                           max_pairs=args.max_pairs,
                           allow_full_cartesian=args.allow_full_cartesian)
        source = {"block": args.block}
    splits = split(candidates, seed)
    write_prepared(out, left, right, candidates, splits)
    echo_config(out, config_payload(
        "prepare", left=args.left, right=args.right, matches=args.matches,
        seed=seed, out=out, **source))
    st = stats(candidates)
    return {"out": out, "pairs": st.pairs, "matches": st.matches,
            "sizes": splits.manifest["sizes"]}


def cmd_train(args) -> dict:
    file_cfg = load_run_config(args.config)
    train_cfg = resolve_train(args, file_cfg)
    embeddings = resolve_embeddings(args, file_cfg)
    out = out_dir_for(args, "train", train_cfg.seed)
    prepared = load_prepared(args.data)
    require_labeled(prepared, "train")
    model_cfg = resolve_model(args, file_cfg)
    store = make_store(embeddings, model_cfg.embedding_dim)
    if store.dim != model_cfg.embedding_dim:
        model_cfg = dataclasses.replace(model_cfg, embedding_dim=store.dim)
    model = DeepERModel(prepared.schema, store, model_cfg)
    train_enc = encode_split(prepared, store, model, "train")
    dev_enc = encode_split(prepared, store, model, "dev")
    test_enc = encode_split(prepared, store, model, "test")
    if model_cfg.fine_tune_embeddings:
        model.enable_embedding_training(train_enc)

    echo_config(out, config_payload("train", data=args.data, out=out,
                                    train=train_cfg, model=model_cfg,
                                    embeddings=embeddings))
    metrics = MetricsWriter(os.path.join(out, "metrics.csv"))
    ckpt = train_supervised(model, train_enc, dev_enc, train_cfg, metrics)
    test_f1 = None
    if test_enc and test_enc[0].label is not None:
        report = evaluate(model, test_enc, train_cfg.threshold)
        metrics.write(ckpt.epoch, "test", report, None)
        test_f1 = report.f1
    ckpt_path = os.path.join(out, "model.ckpt")
    save_model(model, ckpt_path)
    return {"out": out, "best_epoch": ckpt.epoch, "dev_f1": ckpt.dev.f1,
            "test_f1": test_f1, "checkpoint": ckpt_path,
            "f1": test_f1 if test_f1 is not None else ckpt.dev.f1}


def cmd_transfer(args) -> dict:
    file_cfg = load_run_config(args.config)
    train_cfg = resolve_train(args, file_cfg)
    embeddings = resolve_embeddings(args, file_cfg)
    out = out_dir_for(args, "transfer", train_cfg.seed)

    sources = [load_prepared(d) for d in args.source]
    target = load_prepared(args.target)
    for src, path in zip(sources, args.source):
        require_labeled(src, f"transfer source {path}")
        if src.schema != target.schema:
            raise ConfigError(f"transfer needs a shared schema; {path} has "
                              f"{src.schema} but the target has {target.schema}")
    names = [os.path.basename(os.path.normpath(d)) for d in args.source]
    target_name = os.path.basename(os.path.normpath(args.target))
    if len(set(names + [target_name])) != len(names) + 1:
        raise ConfigError(f"dataset directory names must be distinct, got "
                          f"{names + [target_name]}")

    model_cfg = resolve_model(args, file_cfg)
    store = make_store(embeddings, model_cfg.embedding_dim)
    if store.dim != model_cfg.embedding_dim:
        model_cfg = dataclasses.replace(model_cfg, embedding_dim=store.dim)
    dataset_names = names + [target_name] if args.adapt else None
    model = DeepERModel(target.schema, store, model_cfg,
                        dataset_names=dataset_names)

    echo_config(out, config_payload(
        "transfer", sources=list(args.source), target=args.target, out=out,
        adapt=args.adapt, train=train_cfg, model=model_cfg,
        embeddings=embeddings, dataset_names=dataset_names))
    metrics = MetricsWriter(os.path.join(out, "metrics.csv"))
    if args.adapt:
        source_sets = [
            SourceDataset(nm,
                          encode_pairs(store, src.schema, src.train,
                                       model.tokenizer),
                          encode_pairs(store, src.schema, src.dev,
                                       model.tokenizer))
            for nm, src in zip(names, sources)]
        target_enc = [p.relabeled(None) for p in
                      encode_pairs(store, target.schema, target.train,
                                   model.tokenizer)]
        ckpt = train_adversarial(model, source_sets, target_enc, train_cfg,
                                 metrics)
    else:
        merged_train, merged_dev = [], []
        for src in sources:
            merged_train.extend(encode_pairs(store, src.schema, src.train,
                                             model.tokenizer))
            merged_dev.extend(encode_pairs(store, src.schema, src.dev,
                                           model.tokenizer))
        ckpt = train_supervised(model, merged_train, merged_dev, train_cfg,
                                metrics)

    target_f1 = None
    target_test = encode_pairs(store, target.schema, target.test,
                               model.tokenizer)
    if target_test and target_test[0].label is not None:
        report = evaluate(model, target_test, train_cfg.threshold)
        metrics.write(ckpt.epoch, "target-test", report, None)
        target_f1 = report.f1
    ckpt_path = os.path.join(out, "model.ckpt")
    save_model(model, ckpt_path)
    return {"out": out, "adversarial": args.adapt, "best_epoch": ckpt.epoch,
            "source_dev_f1": ckpt.dev.f1, "target_test_f1": target_f1,
            "checkpoint": ckpt_path,
            "f1": target_f1 if target_f1 is not None else ckpt.dev.f1}


def _active_model(args, prepared, model_cfg: ModelConfig,
                  embeddings: str | None):
    if args.init == "checkpoint":
        if not args.checkpoint:
            raise ConfigError("--init checkpoint needs --checkpoint PATH")
        manifest = read_manifest(args.checkpoint)
        store = make_store(embeddings, manifest["config"]["embedding_dim"])
        loaded = load_model(args.checkpoint, store)
        return rehost_model(loaded, prepared.schema), store
    store = make_store(embeddings, model_cfg.embedding_dim)
    if store.dim != model_cfg.embedding_dim:
        model_cfg = dataclasses.replace(model_cfg, embedding_dim=store.dim)
    return DeepERModel(prepared.schema, store, model_cfg), store


def cmd_active(args) -> dict:
    file_cfg = load_run_config(args.config)
    train_cfg = resolve_train(args, file_cfg)
    al_cfg = resolve_active(args, file_cfg, train_cfg)
    embeddings = resolve_embeddings(args, file_cfg)
    out = out_dir_for(args, "active", train_cfg.seed)
    prepared = load_prepared(args.data)
    model_cfg = resolve_model(args, file_cfg)

    echo_config(out, config_payload(
        "active", data=args.data, out=out, annotator=args.annotator,
        init=args.init, checkpoint=args.checkpoint, train=train_cfg,
        model=model_cfg, active=al_cfg, embeddings=embeddings))

    if args.annotator == "serve":
        return _active_serve(args, prepared, model_cfg, al_cfg, out,
                             embeddings)

    require_labeled(prepared, "active --annotator oracle")
    model, store = _active_model(args, prepared, model_cfg, embeddings)
    train_enc = encode_split(prepared, store, model, "train")
    gold = gold_map(train_enc)
    pool = UnlabeledPool([p.relabeled(None) for p in train_enc])
    test_enc = encode_split(prepared, store, model, "test") or None
    dev_enc = encode_split(prepared, store, model, "dev") or None
    writer = IterationWriter(os.path.join(out, "iterations.csv"))
    labeled, logs = run_dtal(pool, model, OracleAnnotator(gold), al_cfg,
                             gold=gold, test_pairs=test_enc,
                             dev_pairs=dev_enc, writer=writer)
    ckpt_path = os.path.join(out, "model.ckpt")
    save_model(model, ckpt_path)
    last = logs[-1] if logs else None
    f1 = None
    if last is not None:
        f1 = last.test_f1 if last.test_f1 is not None else last.f1_on_labeled
    return {"out": out, "iterations": len(logs),
            "human_labels": labeled.count(HUMAN),
            "proxy_labels": (labeled.count(PROXY_POSITIVE)
                             + labeled.count(PROXY_NEGATIVE)),
            "checkpoint": ckpt_path, "f1": f1}


def _active_serve(args, prepared, model_cfg, al_cfg, out, embeddings) -> dict:
    import uvicorn

    from .server import (CreateSessionRequest, LoopSettings, ModelSettings,
                         TrainSettings, create_app)

    name = os.path.basename(os.path.normpath(args.data))
    app = create_app({name: args.data},
                     journal_dir=os.path.join(out, "journals"),
                     token=args.token)
    request = CreateSessionRequest(
        dataset=name,
        config=LoopSettings(
            k_per_iteration=al_cfg.k_per_iteration,
            iterations=al_cfg.iterations,
            inner_epochs=al_cfg.inner_epochs,
            strategy=al_cfg.strategy,
            remove_high_confidence=al_cfg.remove_high_confidence,
            inner_eval=al_cfg.inner_eval,
            train=TrainSettings(batch_size=al_cfg.train.batch_size,
                                learning_rate=al_cfg.train.learning_rate,
                                seed=al_cfg.train.seed,
                                threshold=al_cfg.train.threshold)),
        model=ModelSettings(embedding_dim=model_cfg.embedding_dim,
                            hidden_size=model_cfg.hidden_size,
                            seed=model_cfg.seed),
        init=args.init, checkpoint=args.checkpoint, embeddings=embeddings)
    session = app.state.store.create(request)

    config = uvicorn.Config(app, host=args.host, port=args.port,
                            log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    while not server.started:
        if not thread.is_alive():
            raise RuntimeError(f"server failed to start on port {args.port}")
        time.sleep(0.02)
    sock = server.servers[0].sockets[0]
    port = sock.getsockname()[1]
    print(json.dumps({"url": f"http://{args.host}:{port}",
                      "session_id": session.id}), flush=True)

    session.finished_event.wait()
    writer = IterationWriter(os.path.join(out, "iterations.csv"))
    for log in session.history:
        writer.write(log)
    ckpt_path = os.path.join(out, "model.ckpt")
    save_model(session.model, ckpt_path)
    server.should_exit = True
    thread.join(timeout=10)
    last = session.history[-1] if session.history else None
    f1 = None
    if last is not None:
        f1 = last.test_f1 if last.test_f1 is not None else last.f1_on_labeled
    return {"out": out, "iterations": len(session.history),
            "human_labels": session.labeled.count(HUMAN),
            "session_id": session.id, "checkpoint": ckpt_path, "f1": f1}


def cmd_eval(args) -> dict:
    prepared = load_prepared(args.data)
    pairs = getattr(prepared, args.split)
    if not pairs:
        raise ConfigError(f"split {args.split!r} is empty")
    if pairs[0].label is None:
        raise ConfigError(f"split {args.split!r} has no labels; prepare the "
                          "dataset with --matches to evaluate against gold")
    manifest = read_manifest(args.checkpoint)
    store = make_store(args.embeddings, manifest["config"]["embedding_dim"])
    model = rehost_model(load_model(args.checkpoint, store), prepared.schema)
    encoded = encode_pairs(store, model.schema, pairs, model.tokenizer)
    report = evaluate(model, encoded, args.threshold or 0.5)
    summary = {"data": args.data, "split": args.split,
               "checkpoint": args.checkpoint, **report.as_dict(),
               "f1": report.f1}
    if args.out is not None:
        out = out_dir_for(args, "eval", manifest.get("config", {}).get("seed", 0))
        echo_config(out, config_payload("eval", data=args.data,
                                        split=args.split,
                                        checkpoint=args.checkpoint,
                                        threshold=args.threshold or 0.5))
        with open(os.path.join(out, "eval.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return summary


def cmd_baseline(args) -> dict:
    seed = args.seed if args.seed is not None else 1
    out = out_dir_for(args, "baseline", seed)
    prepared = load_prepared(args.data)
    require_labeled(prepared, "baseline")
    schema = prepared.schema
    feats_train = extract_features(prepared.train, schema)
    y_train = np.array([p.label for p in prepared.train], dtype=np.int64)
    feats_test = extract_features(prepared.test, schema)
    y_test = np.array([p.label for p in prepared.test], dtype=np.int64)

    if args.algo == "logreg":
        epochs = args.epochs or 500
        params = train_logreg(feats_train, y_train,
                              lr=args.learning_rate or 0.5, epochs=epochs)
        probs = predict_logreg(params, feats_test)
    else:
        epochs = 1
        params = train_gnb(feats_train, y_train)
        probs = predict_gnb(params, feats_test)
    report = report_from_counts(*confusion(probs >= 0.5, y_test))

    echo_config(out, config_payload(
        "baseline", data=args.data, out=out, algo=args.algo, seed=seed,
        learning_rate=args.learning_rate, epochs=args.epochs))
    metrics = MetricsWriter(os.path.join(out, "metrics.csv"))
    metrics.write(epochs, "test", report, None)
    return {"out": out, "algo": args.algo, **report.as_dict(),
            "f1": report.f1}


def cmd_repeat(args) -> dict:
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [1, 2, 3, 4, 5]
    if not seeds:
        raise ConfigError("repeat needs at least one seed")
    child = list(args.command)
    if child and child[0] == "--":
        child = child[1:]
    if not child:
        raise ConfigError("repeat needs a wrapped command after the seeds")
    if child[0] == "repeat":
        raise ConfigError("repeat cannot wrap itself")
    out = out_dir_for(args, "repeat", seeds[0])

    values = []
    for seed in seeds:
        run_dir = os.path.join(out, f"seed-{seed}")
        argv = child + ["--seed", str(seed), "--out", run_dir]
        code, summary = _run(argv)
        if code != 0:
            raise RuntimeError(f"seed {seed} failed with exit code {code}")
        if summary is None or summary.get("f1") is None:
            raise RuntimeError(f"seed {seed} produced no f1 value")
        values.append(float(summary["f1"]))

    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    formatted = f"{mean:.2f}±{std:.2f}"
    with open(os.path.join(out, "aggregate.csv"), "w", encoding="utf-8") as fh:
        fh.write("seed,f1\n")
        for seed, value in zip(seeds, values):
            fh.write(f"{seed},{value:.6f}\n")
        fh.write(f"aggregate,{formatted}\n")
    echo_config(out, config_payload("repeat", seeds=seeds, command=child,
                                    out=out))
    return {"out": out, "seeds": seeds, "f1_values": values, "mean": mean,
            "std": std, "formatted": formatted, "f1": mean}


# --------------------------------------------------------------------------
# parser


def _add_common_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run-config JSON file")
    p.add_argument("--seed", type=int, help="seed for init and shuffling")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--threshold", type=float)
    p.add_argument("--embedding-dim", type=int, dest="embedding_dim")
    p.add_argument("--hidden-size", type=int, dest="hidden_size")
    p.add_argument("--embeddings", help="pretrained vector file (token v1..vd)")
    p.add_argument("--fine-tune", action="store_true", dest="fine_tune")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entmatch",
        description="entity-resolution pipeline: synthesize, prepare, train, "
                    "transfer, label actively, evaluate")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("synth", help="generate a two-table synthetic corpus")
    p.add_argument("--out")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--seed", type=int)
    p.add_argument("--typo-rate", type=float, default=0.25, dest="typo_rate")
    p.add_argument("--abbrev-rate", type=float, default=0.3, dest="abbrev_rate")
    p.add_argument("--null-rate", type=float, default=0.03, dest="null_rate")
    p.add_argument("--year-jitter-rate", type=float, default=0.05,
                   dest="year_jitter_rate")
    p.add_argument("--decoy-rate", type=float, default=0.35, dest="decoy_rate")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="block, label, and split a table pair")
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--matches")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--block", help="blocking rules JSON")
    group.add_argument("--candidates", help="precomputed candidate CSV")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-pairs", type=int, default=5_000_000,
                   dest="max_pairs")
    p.add_argument("--allow-full-cartesian", action="store_true",
                   dest="allow_full_cartesian")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="supervised training on one dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    _add_common_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("transfer",
                       help="train on sources for use on a target")
    p.add_argument("--source", action="append", required=True,
                   help="prepared source dir (repeatable)")
    p.add_argument("--target", required=True)
    p.add_argument("--adapt", action="store_true",
                   help="adversarial dataset adaptation")
    p.add_argument("--reversal-lambda", type=float, dest="reversal_lambda")
    p.add_argument("--dataset-mode", choices=["per-dataset",
                                              "source-vs-target"],
                   dest="dataset_mode")
    p.add_argument("--out")
    _add_common_train_flags(p)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("active", help="active-learning labeling loop")
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.add_argument("--annotator", choices=["oracle", "serve"],
                   default="oracle")
    p.add_argument("--K", type=int, dest="K",
                   help="labels requested per iteration")
    p.add_argument("--T", type=int, dest="T", help="iterations")
    p.add_argument("--inner-epochs", type=int, dest="inner_epochs")
    p.add_argument("--strategy",
                   choices=["partition-high-confidence", "partition-only",
                            "high-confidence-only", "topk-entropy"])
    p.add_argument("--keep-high-confidence", action="store_true",
                   dest="keep_high_confidence",
                   help="leave proxy-labeled pairs in the pool")
    p.add_argument("--inner-eval", choices=["labeled", "dev"],
                   dest="inner_eval")
    p.add_argument("--init", choices=["random", "checkpoint"],
                   default="random")
    p.add_argument("--checkpoint")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--token", help="bearer token for the served session")
    _add_common_train_flags(p)
    p.set_defaults(func=cmd_active)

    p = sub.add_parser("eval", help="score a checkpoint on a prepared split")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "dev", "test"],
                   default="test")
    p.add_argument("--threshold", type=float)
    p.add_argument("--embeddings")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", help="feature-based matcher baselines")
    p.add_argument("--data", required=True)
    p.add_argument("--algo", choices=["logreg", "gnb"], required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("repeat",
                       help="run a command across seeds and aggregate")
    p.add_argument("--seeds", help="comma-separated list (default 1,2,3,4,5)")
    p.add_argument("--out")
    p.add_argument("command", nargs=argparse.REMAINDER,
                   help="wrapped command and its flags")
    p.set_defaults(func=cmd_repeat)

    return parser


def _run(argv) -> tuple[int, dict | None]:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return (exc.code if isinstance(exc.code, int) else 2), None
    try:
        summary = args.func(args)
        return 0, summary
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2, None
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1, None


def main(argv=None) -> int:
    code, summary = _run(argv if argv is not None else sys.argv[1:])
    if summary is not None:
        print(json.dumps(summary, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
