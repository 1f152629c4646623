"""Experiment stages and the sweep orchestrator.

Every stage reads files produced by earlier stages from the run directory,
writes its outputs plus a manifest.json (config hash, component seeds, corpus
sizes, wall clock, output list), and is deterministic given config + seed:
rerunning a stage yields byte-identical data outputs (manifests differ only
in wall clock). Sweep cells are keyed by a hash of their cell configuration
and are skipped when already complete, so sweeps resume for free.

Layout under the run directory:

    toy/          generated toy corpora
    prep/         tokenized/filtered/deduped word-level corpora
    bpe/          merges.txt + BPE-segmented corpora
    models/       translation models, LM count tables
    synth/        back-translated corpora (TSV, third column = method)
    augmented/    combined training data + augmentation manifest
    translations/ word-level decoder outputs
    reports/      bleu.csv / loss.csv / richness.csv / lm.csv
    sweep/        shared artifacts + one directory per cell + bleu.csv
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from btkit import bpe as bpe_mod
from btkit.augment import AugmentedDataset, back_translate, combine_upsampled, filter_copies
from btkit.config import Config, config_hash
from btkit.corpus import (
    SUBWORD,
    WORD,
    Corpus,
    ParallelCorpus,
    Sentence,
    SentencePair,
    dedup,
    filter_pairs,
    parallel_from_sides,
    read_mono,
    read_parallel,
    subsample,
    tokenize,
    write_mono,
    write_parallel,
)
from btkit.decode import beam
from btkit.errors import ConfigError, DataError
from btkit.evaluate import BleuReport, bleu, richness_analysis
from btkit.lm import count_ngrams, estimate_kn, perplexity, replace_singletons, write_counts
from btkit.model import cross_entropy, load_model, save_model, train_translation_model
from btkit.rng import derive_seed

BITEXT_TAG = "bitext"


# ---------------------------------------------------------------------------
# Manifests and small file helpers.


def write_manifest(stage_dir: Path, stage: str, cfg_hash: str, seeds: dict,
                   sizes: dict, outputs: list[Path], started: float) -> Path:
    manifest = {
        "stage": stage,
        "config_hash": cfg_hash,
        "component_seeds": seeds,
        "corpus_sizes": sizes,
        "outputs": sorted(str(p.name) for p in outputs),
        "wall_clock_sec": round(time.perf_counter() - started, 6),
    }
    path = stage_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _ensure(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def _require_file(path: Path, hint: str) -> Path:
    if not path.exists():
        raise DataError(f"missing input {path} ({hint})")
    return path


def read_tagged_parallel(path, level=WORD):
    """TSV with an optional third column; returns (corpus, tags)."""
    pairs = []
    tags = []
    with open(path, encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, 1):
            cols = line.rstrip("\n").split("\t")
            if len(cols) < 2:
                raise DataError(f"{path}:{lineno}: expected source<TAB>target")
            pairs.append(
                SentencePair(
                    Sentence(tuple(cols[0].split()), level),
                    Sentence(tuple(cols[1].split()), level),
                )
            )
            tags.append(cols[2] if len(cols) > 2 else None)
    return ParallelCorpus(pairs), tags


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(v) for v in row) + "\n")


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


# ---------------------------------------------------------------------------
# Stages.


def stage_make_toy(cfg: Config, out: Path) -> Path:
    from btkit.toytask import ToyTaskConfig, generate_toy_task

    started = time.perf_counter()
    toy = cfg["toy"]
    data = generate_toy_task(
        derive_seed(cfg.seed, "toytask"),
        n_bitext=toy["n_bitext"],
        n_mono=toy["n_mono"],
        n_dev=toy["n_dev"],
        n_test=toy["n_test"],
        cfg=ToyTaskConfig(
            target_vocab=toy["target_vocab"],
            branching=toy["branching"],
            jump_prob=toy["jump_prob"],
            ambig_fraction=toy["ambig_fraction"],
            max_group=toy["max_group"],
            swap_prob=toy["swap_prob"],
            min_len=toy["min_len"],
            max_len=toy["max_len"],
        ),
    )
    stage_dir = _ensure(out / "toy")
    outputs = []
    for name, corpus in (("bitext.tsv", data.bitext), ("dev.tsv", data.dev), ("test.tsv", data.test)):
        write_parallel(corpus, stage_dir / name)
        outputs.append(stage_dir / name)
    write_mono(data.mono, stage_dir / "mono.txt")
    outputs.append(stage_dir / "mono.txt")
    write_manifest(
        stage_dir, "make-toy", config_hash(cfg, "make-toy"),
        {"toytask": derive_seed(cfg.seed, "toytask")},
        {"bitext": len(data.bitext), "mono": len(data.mono),
         "dev": len(data.dev), "test": len(data.test)},
        outputs, started,
    )
    return stage_dir


def _read_maybe_raw(path, cfg: Config, parallel: bool, level=WORD):
    if not cfg["prep"]["tokenize_raw"]:
        return read_parallel(path, level=level) if parallel else read_mono(path, level=level)
    if parallel:
        pairs = []
        with open(path, encoding="utf-8", newline="\n") as fh:
            for lineno, line in enumerate(fh, 1):
                cols = line.rstrip("\n").split("\t")
                if len(cols) < 2:
                    raise DataError(f"{path}:{lineno}: expected source<TAB>target")
                pairs.append(SentencePair(tokenize(cols[0]), tokenize(cols[1])))
        return ParallelCorpus(pairs)
    with open(path, encoding="utf-8", newline="\n") as fh:
        return Corpus([tokenize(line.rstrip("\n")) for line in fh])


def stage_prep(cfg: Config, out: Path) -> Path:
    """Tokenize (optional), length/ratio-filter the bitext, dedup everything."""
    started = time.perf_counter()
    paths = dict(cfg["paths"])
    for name, default in (("bitext", "toy/bitext.tsv"), ("mono", "toy/mono.txt"),
                          ("dev", "toy/dev.tsv"), ("test", "toy/test.tsv")):
        if paths[name] is None:
            paths[name] = str(out / default)
    bitext = _read_maybe_raw(_require_file(Path(paths["bitext"]), "paths.bitext"), cfg, True)
    mono = _read_maybe_raw(_require_file(Path(paths["mono"]), "paths.mono"), cfg, False)
    dev = _read_maybe_raw(_require_file(Path(paths["dev"]), "paths.dev"), cfg, True)
    test = _read_maybe_raw(_require_file(Path(paths["test"]), "paths.test"), cfg, True)

    bitext = dedup(filter_pairs(bitext, cfg.filter_config()))
    mono = dedup(mono)

    stage_dir = _ensure(out / "prep")
    write_parallel(bitext, stage_dir / "bitext.tsv")
    write_mono(mono, stage_dir / "mono.txt")
    write_parallel(dev, stage_dir / "dev.tsv")
    write_parallel(test, stage_dir / "test.tsv")
    outputs = [stage_dir / n for n in ("bitext.tsv", "mono.txt", "dev.tsv", "test.tsv")]
    write_manifest(
        stage_dir, "prep", config_hash(cfg, "prep"), {},
        {"bitext": len(bitext), "mono": len(mono), "dev": len(dev), "test": len(test)},
        outputs, started,
    )
    return stage_dir


def stage_learn_bpe(cfg: Config, out: Path) -> Path:
    """Learn joint source+target BPE on the bitext; segment all corpora."""
    started = time.perf_counter()
    prep = out / "prep"
    bitext = read_parallel(_require_file(prep / "bitext.tsv", "run prep first"))
    mono = read_mono(prep / "mono.txt")
    dev = read_parallel(prep / "dev.tsv")
    test = read_parallel(prep / "test.tsv")

    model = bpe_mod.learn_bpe([bitext], cfg["bpe"]["num_ops"])
    stage_dir = _ensure(out / "bpe")
    bpe_mod.write_merges(model, stage_dir / "merges.txt")
    outputs = [stage_dir / "merges.txt"]
    for name, corpus in (("bitext.tsv", bitext), ("dev.tsv", dev), ("test.tsv", test)):
        write_parallel(bpe_mod.apply_bpe_corpus(model, corpus), stage_dir / name)
        outputs.append(stage_dir / name)
    write_mono(bpe_mod.apply_bpe_corpus(model, mono), stage_dir / "mono.txt")
    outputs.append(stage_dir / "mono.txt")
    write_manifest(
        stage_dir, "learn-bpe", config_hash(cfg, "learn-bpe"), {},
        {"bitext": len(bitext), "mono": len(mono), "merges": model.num_ops},
        outputs, started,
    )
    return stage_dir


def _train_from_file(cfg: Config, data_path: Path, direction: str,
                     heldout_path: Path | None, upsample_rate: float,
                     level=SUBWORD):
    corpus, tags = read_tagged_parallel(data_path, level=level)
    weights = None
    if any(t is not None for t in tags):
        r = upsample_rate
        if abs(r - round(r)) > 1e-9:
            raise ConfigError("augment.upsample_rate must be an integer for training")
        weights = [float(round(r)) if t == BITEXT_TAG else 1.0 for t in tags]
    if direction == "rev":
        corpus = corpus.swapped()
    heldout = None
    if heldout_path is not None and heldout_path.exists():
        heldout = read_parallel(heldout_path, level=level)
        if direction == "rev":
            heldout = heldout.swapped()
        cap = min(len(heldout), 300)
        heldout = subsample(heldout, cap, derive_seed(cfg.seed, "heldout"))
    m = cfg["model"]
    return train_translation_model(
        corpus,
        em_iterations=m["em_iterations"],
        lm_order=m["lm_order"],
        lm_discount=m["lm_discount"],
        lambda_lex=m["lambda_lex"],
        lambda_lm=m["lambda_lm"],
        weights=weights,
        heldout=heldout,
        heldout_tol=m["heldout_tol"],
        heldout_patience=m["heldout_patience"],
    )


def stage_train(cfg: Config, out: Path, data: str | None = None,
                direction: str = "fwd", name: str | None = None,
                upsample_rate: float | None = None) -> Path:
    started = time.perf_counter()
    if direction not in ("fwd", "rev"):
        raise ConfigError(f"unknown training direction {direction!r}")
    data_path = Path(data) if data else _require_file(out / "bpe" / "bitext.tsv", "run learn-bpe first")
    r = cfg["augment"]["upsample_rate"] if upsample_rate is None else upsample_rate
    model, history = _train_from_file(
        cfg, data_path, direction, out / "bpe" / "dev.tsv", r
    )
    stage_dir = _ensure(out / "models")
    model_name = name or f"{direction}.model"
    model_path = stage_dir / model_name
    save_model(model, model_path)
    write_manifest(
        stage_dir, f"train-{model_name}", config_hash(cfg, "train", str(data_path), direction, r),
        {}, {"pairs": "-", "em_iterations": len(history.em_loglik),
             "stopped_at": history.stopped_at},
        [model_path], started,
    )
    return model_path


def stage_backtranslate(cfg: Config, out: Path, model: str | None = None,
                        mono: str | None = None, method: str | None = None,
                        amount: int | None = None) -> Path:
    started = time.perf_counter()
    model_path = Path(model) if model else _require_file(out / "models" / "rev.model", "train --direction rev first")
    mono_path = Path(mono) if mono else _require_file(out / "bpe" / "mono.txt", "run learn-bpe first")
    reverse_model = load_model(model_path)
    corpus = read_mono(mono_path, level=SUBWORD)
    if amount is not None:
        if amount > len(corpus):
            raise DataError(f"requested {amount} sentences, corpus has {len(corpus)}")
        corpus = Corpus(corpus.sentences[:amount], side=corpus.side)
    gen = cfg.gen_config(method=method, seed=derive_seed(cfg.seed, "backtranslate", method or cfg["gen"]["method"]))
    bpe_model = None
    merges = out / "bpe" / "merges.txt"
    if gen.method == "beam_noise" and merges.exists():
        bpe_model = bpe_mod.read_merges(merges)
    synth, dropped = back_translate(
        reverse_model, corpus, gen,
        noise_cfg=cfg.noise_config(seed=derive_seed(cfg.seed, "noise")),
        bpe_model=bpe_model,
    )
    stage_dir = _ensure(out / "synth")
    method_name = method or cfg["gen"]["method"]
    out_path = stage_dir / f"{method_name}.tsv"
    write_parallel(synth, out_path, extra=[method_name] * len(synth))
    write_manifest(
        stage_dir, f"backtranslate-{method_name}",
        config_hash(cfg, "backtranslate", method_name, amount or -1),
        {"generation": gen.seed},
        {"mono": len(corpus), "synthetic": len(synth), "dropped": dropped},
        [out_path], started,
    )
    return out_path


def stage_augment(cfg: Config, out: Path, synthetic: str,
                  bitext: str | None = None, preview_batches: int = 0) -> Path:
    """Combine bitext with synthetic pairs; optional source-copy filtering."""
    started = time.perf_counter()
    bitext_path = Path(bitext) if bitext else _require_file(out / "bpe" / "bitext.tsv", "run learn-bpe first")
    bi = read_parallel(bitext_path, level=SUBWORD)
    synth, tags = read_tagged_parallel(Path(synthetic), level=SUBWORD)
    method_tags = [t or "synthetic" for t in tags]

    aug = cfg["augment"]
    copy_rate = 0.0
    if aug["copy_filter"]:
        kept, flagged, copy_rate = filter_copies(synth, aug["copy_threshold"])
        if aug["drop_flagged"]:
            kept_idx = []
            flag_set = {id(p) for p in flagged.pairs}
            kept_idx = [i for i, p in enumerate(synth.pairs) if id(p) not in flag_set]
            method_tags = [method_tags[i] for i in kept_idx]
            synth = kept

    stage_dir = _ensure(out / "augmented")
    data_path = stage_dir / "data.tsv"
    combined = ParallelCorpus(bi.pairs + synth.pairs)
    write_parallel(combined, data_path, extra=[BITEXT_TAG] * len(bi) + method_tags)

    ds = AugmentedDataset(bitext=bi, synthetic=synth, upsample_rate=aug["upsample_rate"])
    outputs = [data_path]
    if preview_batches > 0:
        stream = combine_upsampled(ds, batch_size=500, seed=derive_seed(cfg.seed, "batches"))
        rows = []
        for b in range(preview_batches):
            batch = next(stream)
            n_bi = sum(1 for _p, pool in batch if pool == BITEXT_TAG)
            rows.append([b, n_bi, len(batch) - n_bi])
        batches_path = stage_dir / "batches.csv"
        _write_csv(batches_path, ["batch", "bitext_slots", "synthetic_slots"], rows)
        outputs.append(batches_path)

    info_path = stage_dir / "augment.json"
    with open(info_path, "w", encoding="utf-8") as fh:
        json.dump(
            {"bitext_size": len(bi), "synthetic_size": len(synth),
             "upsample_rate": aug["upsample_rate"], "copy_rate": round(copy_rate, 8),
             "copy_filter": aug["copy_filter"], "drop_flagged": aug["drop_flagged"]},
            fh, indent=2, sort_keys=True,
        )
        fh.write("\n")
    outputs.append(info_path)
    write_manifest(
        stage_dir, "augment", config_hash(cfg, "augment", str(synthetic)),
        {"batches": derive_seed(cfg.seed, "batches")},
        {"bitext": len(bi), "synthetic": len(synth)},
        outputs, started,
    )
    return data_path


def stage_translate(cfg: Config, out: Path, model: str | None = None,
                    input_file: str | None = None, name: str = "test") -> Path:
    """Decode the source side of a TSV (or a mono file) with beam search and
    write word-level output (BPE reversed)."""
    started = time.perf_counter()
    model_path = Path(model) if model else _require_file(out / "models" / "fwd.model", "train first")
    m = load_model(model_path)
    in_path = Path(input_file) if input_file else _require_file(out / "bpe" / "test.tsv", "run learn-bpe first")
    with open(in_path, encoding="utf-8", newline="\n") as fh:
        first = fh.readline()
    if "\t" in first:
        sources = read_parallel(in_path, level=SUBWORD).source_corpus()
    else:
        sources = read_mono(in_path, level=SUBWORD)
    k = cfg["gen"]["beam_size"]
    hyps = []
    for s in sources.sentences:
        best, _ = beam(m, s, k=k, max_len=cfg["gen"]["max_len"])
        sub = Sentence(best.surface_tokens(), SUBWORD)
        hyps.append(bpe_mod.reverse_bpe(sub))
    stage_dir = _ensure(out / "translations")
    out_path = stage_dir / f"{name}.txt"
    write_mono(Corpus(hyps), out_path)
    write_manifest(
        stage_dir, f"translate-{name}", config_hash(cfg, "translate", str(in_path), k),
        {}, {"sentences": len(hyps)}, [out_path], started,
    )
    return out_path


def stage_bleu(cfg: Config, out: Path, hyp: str, ref: str,
               config_id: str = "run", test_set: str = "test") -> BleuReport:
    started = time.perf_counter()
    hyps = read_mono(Path(hyp))
    ref_path = Path(ref)
    with open(ref_path, encoding="utf-8", newline="\n") as fh:
        first = fh.readline()
    if "\t" in first:
        refs = read_parallel(ref_path).target_corpus()
    else:
        refs = read_mono(ref_path)
    report = bleu(hyps, refs)
    stage_dir = _ensure(out / "reports")
    _write_csv(
        stage_dir / "bleu.csv",
        ["config_id", "test_set", "bleu", "p1", "p2", "p3", "p4", "bp"],
        [[config_id, test_set, report.bleu, *report.precisions, report.brevity_penalty]],
    )
    write_manifest(
        stage_dir, "bleu", config_hash(cfg, "bleu", hyp, ref), {},
        {"sentences": len(hyps)}, [stage_dir / "bleu.csv"], started,
    )
    return report


def stage_lm(cfg: Config, out: Path, train_file: str | None = None,
             eval_files: list[str] | None = None) -> Path:
    """Train the standalone Kneser-Ney LM; report perplexities."""
    started = time.perf_counter()
    train_path = Path(train_file) if train_file else _require_file(out / "prep" / "mono.txt", "run prep first")
    corpus = replace_singletons(read_mono(train_path))
    ana = cfg["analysis"]
    counts = count_ngrams(corpus, ana["lm_order"])
    lm = estimate_kn(counts, ana["lm_discount"])
    stage_dir = _ensure(out / "models")
    counts_path = stage_dir / "lm_counts.txt"
    write_counts(counts, counts_path)
    rows = []
    for f in eval_files or []:
        rows.append([f, perplexity(lm, read_mono(Path(f)))])
    reports = _ensure(out / "reports")
    _write_csv(reports / "lm.csv", ["file", "perplexity"], rows)
    write_manifest(
        stage_dir, "lm", config_hash(cfg, "lm", str(train_path)), {},
        {"sentences": len(corpus), "order": ana["lm_order"]},
        [counts_path, reports / "lm.csv"], started,
    )
    return counts_path


def stage_analyze(cfg: Config, out: Path) -> Path:
    """Richness (Table-2 analog) and per-epoch loss (Figure-2 analog)."""
    started = time.perf_counter()
    prep = out / "prep"
    bitext = read_parallel(_require_file(prep / "bitext.tsv", "run prep first"))
    mono = read_mono(prep / "mono.txt")
    ana = cfg["analysis"]
    reports = _ensure(out / "reports")

    gen_configs = [
        (name, cfg.gen_config(method=name, seed=0)) for name in ana["methods"]
    ]
    rich_rows = richness_analysis(
        bitext,
        tuple(ana["split_fractions"]),
        gen_configs,
        seed=derive_seed(cfg.seed, "richness"),
        lm_order=ana["lm_order"],
        lm_discount=ana["lm_discount"],
        noise_cfg=cfg.noise_config(),
        em_iterations=cfg["model"]["em_iterations"],
        lm_lambda=cfg["model"]["lambda_lm"],
        model_lm_order=cfg["model"]["lm_order"],
    )
    _write_csv(reports / "richness.csv", ["method", "perplexity"],
               [[name, ppl] for name, ppl in rich_rows])

    loss_rows = run_loss_analysis(cfg, bitext, mono)
    _write_csv(reports / "loss.csv", ["epoch", "pool", "method", "cross_entropy", "ppl"],
               loss_rows)

    write_manifest(
        reports, "analyze", config_hash(cfg, "analyze"),
        {"richness": derive_seed(cfg.seed, "richness")},
        {"bitext": len(bitext), "mono": len(mono)},
        [reports / "richness.csv", reports / "loss.csv"], started,
    )
    return reports


def run_loss_analysis(cfg: Config, bitext: ParallelCorpus, mono: Corpus):
    """Train one forward model per generation method on bitext+synthetic
    (no upsampling) and measure per-epoch cross entropy on a fixed synthetic
    sample (same target tokens across methods) and a bitext sample."""
    import math

    ana = cfg["analysis"]
    seed = cfg.seed
    amount = min(ana["loss_synth_amount"], len(mono))
    mono_slice = Corpus(mono.sentences[:amount], side=mono.side)
    reverse_model, _ = train_translation_model(
        bitext.swapped(),
        em_iterations=cfg["model"]["em_iterations"],
        lm_order=cfg["model"]["lm_order"],
        lm_discount=cfg["model"]["lm_discount"],
        lambda_lex=cfg["model"]["lambda_lex"],
        lambda_lm=cfg["model"]["lambda_lm"],
    )
    sample_n = min(ana["loss_sample"], amount, len(bitext))
    sample_rng_seed = derive_seed(seed, "loss-sample")
    import numpy as np

    idx = sorted(
        np.random.default_rng(sample_rng_seed)
        .choice(amount, size=sample_n, replace=False)
        .tolist()
    )
    bitext_sample = subsample(bitext, sample_n, derive_seed(seed, "loss-bitext"))

    rows = []
    for method in ana["loss_methods"]:
        gen = cfg.gen_config(method=method, seed=derive_seed(seed, "loss-bt", method))
        synth, dropped = back_translate(
            reverse_model, mono_slice, gen,
            noise_cfg=cfg.noise_config(seed=derive_seed(seed, "loss-noise")),
        )
        if dropped:
            raise DataError(f"loss analysis: {dropped} dropped back-translations")
        synth_sample = ParallelCorpus([synth.pairs[i] for i in idx])
        train_pool = ParallelCorpus(bitext.pairs + synth.pairs)

        def checkpoint(epoch, model, method=method, synth_sample=synth_sample):
            ce_s = cross_entropy(model, synth_sample)
            ce_b = cross_entropy(model, bitext_sample)
            rows.append([epoch, "synthetic", method, ce_s, math.exp(ce_s)])
            rows.append([epoch, "bitext", method, ce_b, math.exp(ce_b)])

        train_translation_model(
            train_pool,
            em_iterations=ana["loss_epochs"],
            lm_order=cfg["model"]["lm_order"],
            lm_discount=cfg["model"]["lm_discount"],
            lambda_lex=cfg["model"]["lambda_lex"],
            lambda_lm=cfg["model"]["lambda_lm"],
            on_checkpoint=checkpoint,
        )
    return rows


# ---------------------------------------------------------------------------
# Sweep.


def _cell_id(method: str, amount: int, bitext_size, rate) -> str:
    size_part = "full" if bitext_size is None else str(bitext_size)
    return f"method={method}_amount={amount}_bitext={size_part}_r={_csv_cell(rate)}"


def run_sweep_cell(cell: dict) -> dict:
    """One sweep cell: train forward on bitext (+ synthetic slice), translate
    the test set, score BLEU. File-based so it can run in a worker process."""
    cfg = Config(cell["config"])
    out = Path(cell["out_dir"])
    cell_dir = Path(cell["cell_dir"])
    started = time.perf_counter()

    bitext, _ = read_tagged_parallel(Path(cell["bitext_file"]), level=SUBWORD)
    parts = list(bitext.pairs)
    tags = [BITEXT_TAG] * len(parts)
    if cell["amount"] > 0:
        synth, s_tags = read_tagged_parallel(Path(cell["synth_file"]), level=SUBWORD)
        if cell["amount"] > len(synth):
            raise DataError(
                f"cell {cell['cell_id']}: needs {cell['amount']} synthetic pairs, "
                f"got {len(synth)}"
            )
        parts += synth.pairs[: cell["amount"]]
        tags += [t or "synthetic" for t in s_tags[: cell["amount"]]]
    data = ParallelCorpus(parts)
    weights = [float(round(cell["rate"])) if t == BITEXT_TAG else 1.0 for t in tags]
    if all(w == 1.0 for w in weights):
        weights = None

    heldout = read_parallel(Path(cell["dev_file"]), level=SUBWORD)
    heldout = subsample(heldout, min(len(heldout), 300), derive_seed(cfg.seed, "heldout"))
    m = cfg["model"]
    model, history = train_translation_model(
        data,
        em_iterations=m["em_iterations"],
        lm_order=m["lm_order"],
        lm_discount=m["lm_discount"],
        lambda_lex=m["lambda_lex"],
        lambda_lm=m["lambda_lm"],
        weights=weights,
        heldout=heldout,
        heldout_tol=m["heldout_tol"],
        heldout_patience=m["heldout_patience"],
    )

    test_src = read_parallel(Path(cell["test_bpe_file"]), level=SUBWORD).source_corpus()
    refs = read_parallel(Path(cell["test_word_file"])).target_corpus()
    hyps = []
    for s in test_src.sentences:
        best, _ = beam(model, s, k=cfg["gen"]["beam_size"], max_len=cfg["gen"]["max_len"])
        hyps.append(bpe_mod.reverse_bpe(Sentence(best.surface_tokens(), SUBWORD)))
    report = bleu(Corpus(hyps), refs)

    result = {
        "cell_id": cell["cell_id"],
        "config_hash": cell["cell_hash"],
        "bleu": report.bleu,
        "precisions": list(report.precisions),
        "bp": report.brevity_penalty,
        "em_iterations": len(history.em_loglik),
        "stopped_at": history.stopped_at,
    }
    _ensure(cell_dir)
    with open(cell_dir / "result.json", "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(
        cell_dir, f"sweep-cell-{cell['cell_id']}", cell["cell_hash"],
        {"backtranslate": cell["bt_seed"]},
        {"bitext": len(bitext), "synthetic": cell["amount"], "test": len(refs)},
        [cell_dir / "result.json"], started,
    )
    return result


def stage_sweep(cfg: Config, out: Path, workers: int = 1) -> Path:
    """Cross-product of (method x synthetic amount x bitext size x upsample
    rate); one BLEU row per cell; completed cells are skipped on rerun."""
    started = time.perf_counter()
    sweep_cfg = cfg["sweep"]
    bpe_dir = out / "bpe"
    _require_file(bpe_dir / "bitext.tsv", "run learn-bpe first")
    sweep_dir = _ensure(out / "sweep")
    shared = _ensure(sweep_dir / "shared")

    bitext_full = read_parallel(bpe_dir / "bitext.tsv", level=SUBWORD)
    mono = read_mono(bpe_dir / "mono.txt", level=SUBWORD)
    sizes = sweep_cfg["bitext_sizes"] or [None]
    amounts = sorted(set(sweep_cfg["synthetic_amounts"]))
    max_amount = max(amounts) if amounts else 0
    methods = sweep_cfg["methods"]
    rates = sweep_cfg["upsample_rates"]

    # Shared per-size artifacts: bitext slice, reverse model, synthetic data.
    size_files: dict = {}
    for size in sizes:
        key = "full" if size is None else str(size)
        bitext_file = shared / f"bitext_{key}.tsv"
        if not bitext_file.exists():
            sub = bitext_full if size is None else subsample(
                bitext_full, size, derive_seed(cfg.seed, "sweep-bitext", key)
            )
            write_parallel(sub, bitext_file, extra=[BITEXT_TAG] * len(sub))
        rev_file = shared / f"rev_{key}.model"
        if not rev_file.exists():
            rev_model, _ = _train_from_file(cfg, bitext_file, "rev", bpe_dir / "dev.tsv", 1.0)
            save_model(rev_model, rev_file)
        synth_files = {}
        if max_amount > 0:
            reverse_model = load_model(rev_file)
            mono_slice = Corpus(mono.sentences[: min(max_amount, len(mono))], side=mono.side)
            if max_amount > len(mono):
                raise DataError(
                    f"sweep needs {max_amount} monolingual sentences, got {len(mono)}"
                )
            merges = bpe_dir / "merges.txt"
            bpe_model = bpe_mod.read_merges(merges) if merges.exists() else None
            for method in methods:
                synth_file = shared / f"synth_{method}_{key}.tsv"
                if not synth_file.exists():
                    gen = cfg.gen_config(
                        method=method,
                        seed=derive_seed(cfg.seed, "sweep-bt", method, key),
                    )
                    synth, _dropped = back_translate(
                        reverse_model, mono_slice, gen,
                        noise_cfg=cfg.noise_config(seed=derive_seed(cfg.seed, "sweep-noise", key)),
                        bpe_model=bpe_model,
                    )
                    write_parallel(synth, synth_file, extra=[method] * len(synth))
                synth_files[method] = synth_file
        size_files[key] = (bitext_file, synth_files)

    cells = []
    for size in sizes:
        key = "full" if size is None else str(size)
        bitext_file, synth_files = size_files[key]
        for method in methods:
            for amount in amounts:
                for rate in rates:
                    cell_id = _cell_id(method, amount, size, rate)
                    cell_hash = config_hash(cfg, "sweep-cell", cell_id)
                    cells.append({
                        "config": cfg.data,
                        "out_dir": str(out),
                        "cell_dir": str(sweep_dir / "cells" / cell_id),
                        "cell_id": cell_id,
                        "cell_hash": cell_hash,
                        "bitext_file": str(bitext_file),
                        "synth_file": str(synth_files.get(method, "")),
                        "amount": amount,
                        "rate": rate,
                        "dev_file": str(bpe_dir / "dev.tsv"),
                        "test_bpe_file": str(bpe_dir / "test.tsv"),
                        "test_word_file": str(out / "prep" / "test.tsv"),
                        "bt_seed": derive_seed(cfg.seed, "sweep-bt", method, key),
                    })

    results = []
    todo = []
    for cell in cells:
        result_file = Path(cell["cell_dir"]) / "result.json"
        if result_file.exists():
            with open(result_file, encoding="utf-8") as fh:
                prior = json.load(fh)
            if prior.get("config_hash") == cell["cell_hash"]:
                results.append(prior)
                continue
        todo.append(cell)
    if todo:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results.extend(pool.map(run_sweep_cell, todo))
        else:
            for cell in todo:
                results.append(run_sweep_cell(cell))

    results.sort(key=lambda r: r["cell_id"])
    _write_csv(
        sweep_dir / "bleu.csv",
        ["config_id", "test_set", "bleu", "p1", "p2", "p3", "p4", "bp"],
        [[r["cell_id"], "test", r["bleu"], *r["precisions"], r["bp"]] for r in results],
    )
    write_manifest(
        sweep_dir, "sweep", config_hash(cfg, "sweep"), {},
        {"cells": len(cells), "computed": len(todo)},
        [sweep_dir / "bleu.csv"], started,
    )
    return sweep_dir / "bleu.csv"
