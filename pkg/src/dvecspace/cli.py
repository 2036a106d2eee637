"""Command-line entry point: ``dvecspace <subcommand> [options]``.

Each subcommand wraps one library operation. Every file written records the
options it was produced with (seed included); output locations are left
out so the same inputs always give the same bytes.
"""

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import analysis, encoder, features, oracle, store, transform
from .container import StreamTag, atomic_write_bytes, dumps_json, read_container, write_container
from .errors import DvecError
from .tsne import TsneConfig, tsne

PROG = "dvecspace"
_OUTPUT_KEYS = {"out", "out_dir", "json_out", "csv_out", "predictions"}


# -- helpers -----------------------------------------------------------------

def _recorded(args) -> dict:
    cfg = {k: v for k, v in vars(args).items()
           if k not in _OUTPUT_KEYS and k not in ("func", "config") and not callable(v)}
    return json.loads(dumps_json(cfg))


def _header(args, **extra) -> dict:
    out = {"config": _recorded(args), "seed": args.seed}
    out.update(extra)
    return out


def _write_json(path, obj) -> None:
    atomic_write_bytes(path, (json.dumps(obj, sort_keys=True, indent=2, allow_nan=False)
                              + "\n").encode("utf-8"))


def _write_csv(path, args, header_row, rows) -> None:
    buf = io.StringIO()
    buf.write("# " + dumps_json(_header(args)) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header_row)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                         for v in row])
    atomic_write_bytes(path, buf.getvalue().encode("utf-8"))


def _floats(text) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise DvecError(f"expected comma-separated numbers, got {text!r}") from None


def _words(text) -> list:
    return [t.strip() for t in text.split(",") if t.strip()]


def _read_vectors(path):
    """Rows and vectors of any embedding container (utterances, profiles,
    translated or sweep outputs)."""
    box = read_container(path)
    if box.tag != StreamTag.EMBEDDING:
        raise DvecError(f"{path}: not an embedding container")
    kind = box.header.get("kind")
    if kind == "utterances":
        st = store.load_embeddings(path)
        recs = [r for r in st if r.embedding is not None]
        return kind, box.header, [r.meta() for r in recs], np.vstack(
            [r.embedding.values for r in recs]) if recs else np.zeros((0, 0))
    if kind == "delta":
        raise DvecError(f"{path}: holds a delta, not embeddings")
    return kind, box.header, list(box.rows), box.data


def _load_store(path) -> store.EmbeddingStore:
    if str(path).endswith(".jsonl"):
        return store.ingest_manifest(path)
    return store.load_embeddings(path)


def _reference_speaker(st, requested):
    if requested:
        return requested
    bilingual = st.bilingual_speakers()
    if not bilingual:
        raise DvecError("no bilingual speaker found; pass --speaker/--reference")
    return bilingual[0]


def _fit_reference_lda(st, speaker, languages, args):
    recs = [r for r in st if r.speaker_id == speaker and r.language in languages]
    X = st.matrix(recs)
    y = np.array([r.language for r in recs])
    return analysis.lda_fit(X, y, args.split, args.seed, classes=tuple(languages))


def _check_inputs(args, *names):
    for name in names:
        path = getattr(args, name, None)
        if path is not None and not os.path.isfile(path):
            raise DvecError(f"input file not found: {path}")


def _prepare_out(path):
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise DvecError(f"output directory does not exist: {parent}")


# -- subcommands ----------------------------------------------------------------

def cmd_gen_data(args):
    os.makedirs(args.out_dir, exist_ok=True)
    spec = oracle.SpaceSpec(
        embedding_dim=args.dim, speaker_sigma=args.speaker_sigma,
        utterance_sigma=args.utterance_sigma, language_separation=args.separation,
        n_utterances=args.n_utterances, n_bilingual_utterances=args.n_bilingual_utterances,
        seed=args.seed)
    st, truth = oracle.gen_space(spec)
    store.write_manifest(st, os.path.join(args.out_dir, "manifest.jsonl"))
    store.save_embeddings(st, os.path.join(args.out_dir, "embeddings.dvec"), _header(args))
    _write_json(os.path.join(args.out_dir, "truth.json"), {**_header(args), **truth.to_json()})


def cmd_gen_audio(args):
    os.makedirs(os.path.join(args.out_dir, "wav"), exist_ok=True)
    spec = oracle.AudioSpec(n_speakers=args.n_speakers, utterances_per_speaker=args.utterances,
                            duration_range=(args.min_duration, args.max_duration),
                            sample_rate=args.sample_rate, seed=args.seed)
    records, per_speaker = [], {}
    for clip, label in oracle.gen_audio(spec):
        k = per_speaker.get(label, 0)
        per_speaker[label] = k + 1
        uid = f"s{label:02d}-{k:04d}"
        rel = f"wav/{uid}.wav"
        features.write_wav(os.path.join(args.out_dir, rel), clip)
        records.append(store.UtteranceRecord(
            uid, f"s{label:02d}", args.language, "", max(1, int(round(3 * clip.duration))),
            source=rel))
    st = store.EmbeddingStore(records)
    store.write_manifest(st, os.path.join(args.out_dir, "manifest.jsonl"))
    _write_json(os.path.join(args.out_dir, "audio_config.json"), _header(args))


def _mfcc_config(args):
    return features.MfccConfig(n_coeffs=args.n_coeffs, window_ms=args.window_ms,
                               hop_ms=args.hop_ms, n_mel_filters=args.n_mels,
                               normalize=args.normalize)


def cmd_extract(args):
    _check_inputs(args, "manifest")
    _prepare_out(args.out)
    st = store.ingest_manifest(args.manifest)
    base = os.path.dirname(os.path.abspath(args.manifest))
    clips = {}
    for rec in st:
        if not rec.source:
            raise DvecError(f"{rec.utterance_id}: manifest record has no source path")
        path = rec.source if os.path.isabs(rec.source) else os.path.join(base, rec.source)
        clips[rec.utterance_id] = features.read_wav(path)
    cfg = _mfcc_config(args)
    items = features.extract_batch(clips, cfg)
    store.save_features(items, args.out, _header(args, mfcc=asdict(cfg)))


def _labelled_features(feature_path, manifest_path):
    st = store.ingest_manifest(manifest_path)
    feats = dict(store.load_features(feature_path))
    speakers = st.speakers()
    index = {s: i for i, s in enumerate(speakers)}
    missing = [r.utterance_id for r in st if r.utterance_id not in feats]
    if missing:
        raise DvecError(f"no features for utterance {missing[0]}")
    return st, feats, speakers, [(feats[r.utterance_id], index[r.speaker_id]) for r in st]


def cmd_train(args):
    _check_inputs(args, "features", "manifest")
    _prepare_out(args.out)
    _, _, speakers, dataset = _labelled_features(args.features, args.manifest)
    cfg = encoder.EncoderConfig(
        input_dim=dataset[0][0].width, n_recurrent_layers=args.layers,
        recurrent_units=args.units, embedding_dim=args.dim,
        n_speakers=max(args.n_speakers or len(speakers), len(speakers)),
        learning_rate=args.lr, batch_size=args.batch_size, max_steps=args.steps,
        seed=args.seed, pooling=args.pooling)
    model, losses = encoder.train(dataset, cfg)
    encoder.save_model(model, args.out, _header(args, speakers=speakers,
                                                losses=[float(x) for x in losses]))


def cmd_embed(args):
    _check_inputs(args, "model", "features", "manifest")
    _prepare_out(args.out)
    model = encoder.load_model(args.model)
    st = store.ingest_manifest(args.manifest)
    feats = dict(store.load_features(args.features))
    records = []
    for rec in st:
        if rec.utterance_id not in feats:
            raise DvecError(f"no features for utterance {rec.utterance_id}")
        rec = store.UtteranceRecord(rec.utterance_id, rec.speaker_id, rec.language, rec.locale,
                                    rec.n_words, encoder.embed(model, feats[rec.utterance_id]),
                                    rec.source, rec.gender)
        records.append(rec)
    store.save_embeddings(store.EmbeddingStore(records), args.out, _header(args))


def cmd_profiles(args):
    _check_inputs(args, "embeddings")
    _prepare_out(args.out)
    profiles = store.build_profiles(_load_store(args.embeddings))
    store.save_profiles(profiles, args.out, _header(args))
    if args.json_out:
        _write_json(args.json_out, {**_header(args), "profiles": store.profiles_to_json(profiles)})


def _speaker_records(st, speaker):
    recs = [r for r in st if speaker is None or r.speaker_id == speaker]
    if not recs:
        raise DvecError(f"no utterances for speaker {speaker!r}")
    return recs


def _json_path(csv_path):
    return os.path.splitext(csv_path)[0] + ".json"


def cmd_pca(args):
    _check_inputs(args, "embeddings")
    _prepare_out(args.out)
    st = _load_store(args.embeddings)
    speaker = _reference_speaker(st, args.speaker) if not args.all_speakers else None
    recs = _speaker_records(st, speaker)
    X = st.matrix(recs)
    if not args.raw:
        X = analysis.unit_rows(X)
    model, Z = analysis.pca_fit(X, args.k)
    labels = [r.language for r in recs]
    _write_csv(args.out, args, ["utterance_id", "speaker_id", "language", "n_words"]
               + [f"pc{j + 1}" for j in range(args.k)],
               [[r.utterance_id, r.speaker_id, r.language, r.n_words] + list(z)
                for r, z in zip(recs, Z)])
    report = {"explained_variance_ratio": model.explained_variance_ratio.tolist(),
              "n": len(recs)}
    if len(set(labels)) >= 2:
        report["silhouette_by_language"] = analysis.silhouette_score(Z, labels)
    _write_json(_json_path(args.out), {**_header(args), "result": report})


def cmd_lda(args):
    _check_inputs(args, "embeddings", "apply")
    _prepare_out(args.out)
    st = _load_store(args.embeddings)
    speaker = _reference_speaker(st, args.speaker)
    languages = _words(args.languages) if args.languages else st.languages(speaker)
    if len(languages) != 2:
        raise DvecError(f"LDA needs exactly two languages, got {languages}")
    model = _fit_reference_lda(st, speaker, languages, args)
    result = {"speaker_id": speaker, "model": model.to_json()}
    if args.apply:
        _, _, rows, X = _read_vectors(args.apply)
        scores = model.scores(X) if len(rows) else np.zeros(0)
        labels = [model.classes[1] if s > 0 else model.classes[0] for s in scores]
        hits = [lab == row.get("language") for lab, row in zip(labels, rows)]
        result["applied"] = {"n": len(rows),
                             "fraction_matching_language": (sum(hits) / len(hits)
                                                            if hits else None)}
        if args.predictions:
            _write_csv(args.predictions, args,
                       ["speaker_id", "language", "predicted", "score"],
                       [[row.get("speaker_id", ""), row.get("language", ""), lab, s]
                        for row, lab, s in zip(rows, labels, scores)])
    _write_json(args.out, {**_header(args), "result": result})


def cmd_tsne(args):
    _check_inputs(args, "embeddings")
    _prepare_out(args.out)
    kind, _, rows, X = _read_vectors(args.embeddings)
    if args.speakers:
        keep = set(_words(args.speakers))
        sel = [i for i, r in enumerate(rows) if r.get("speaker_id") in keep]
        rows, X = [rows[i] for i in sel], X[sel]
    if args.max_points and len(rows) > args.max_points:
        sel = np.sort(np.random.default_rng(args.seed).permutation(len(rows))[: args.max_points])
        rows, X = [rows[i] for i in sel], X[sel]
    cfg = TsneConfig(perplexity=args.perplexity, iterations=args.iterations, seed=args.seed)
    res = tsne(X, cfg)
    _write_csv(args.out, args, ["speaker_id", "language", "x", "y"],
               [[r.get("speaker_id", ""), r.get("language", ""), y[0], y[1]]
                for r, y in zip(rows, res.embedding)])
    _write_json(_json_path(args.out), {**_header(args), "result": {
        "kl": res.kl.tolist(), "rejected_steps": res.rejected_steps,
        "max_perplexity_error": float(np.max(np.abs(res.perplexities - args.perplexity)))}})


def cmd_cosine(args):
    _check_inputs(args, "embeddings")
    _prepare_out(args.out)
    if args.a or args.b:
        if not (args.a and args.b):
            raise DvecError("--a and --b must be given together")
        st = _load_store(args.embeddings)
        try:
            a, b = st[args.a], st[args.b]
        except KeyError as exc:
            raise DvecError(f"unknown utterance id {exc}") from None
        if a.embedding is None or b.embedding is None:
            raise DvecError("missing embedding for --a/--b")
        value = analysis.cosine_similarity(a.embedding, b.embedding)
        _write_json(args.out, {**_header(args), "result": {"a": args.a, "b": args.b,
                                                             "cosine": value}})
        return
    profiles = store.build_profiles(_load_store(args.embeddings))
    names = [f"{p.speaker_id}/{lang}" for p in profiles for lang in p.languages]
    M = analysis.cosine_matrix(np.vstack([p.clusters[lang].mean.values
                                          for p in profiles for lang in p.languages]))
    _write_csv(args.out, args, ["voice"] + names,
               [[n] + [float(v) for v in row] for n, row in zip(names, M)])


def cmd_overlap(args):
    _check_inputs(args, "embeddings")
    _prepare_out(args.out)
    st = _load_store(args.embeddings)
    report = analysis.overlap_by_length(st, args.speaker, args.threshold,
                                        _words(args.languages) if args.languages else None,
                                        args.split, args.seed)
    _write_json(args.out, {**_header(args), "result": report})


def cmd_delta(args):
    _check_inputs(args, "profiles")
    _prepare_out(args.out)
    if args.profiles.endswith(".dvec"):
        profiles = store.load_profiles(args.profiles)
    else:
        profiles = store.build_profiles(_load_store(args.profiles))
    ref = args.reference
    if ref is None:
        bilingual = [p.speaker_id for p in profiles if len(p.languages) >= 2]
        if not bilingual:
            raise DvecError("no bilingual reference speaker in profiles")
        ref = bilingual[0]
    delta = transform.compute_delta(store.find_profile(profiles, ref), args.source, args.target)
    transform.save_delta(delta, args.out, _header(args))


def _translated_rows(args, rows, X, delta, epsilon):
    """Apply the delta to every row whose language is in the pair."""
    by_speaker = {}
    for row in rows:
        by_speaker.setdefault(row.get("speaker_id"), set()).add(row.get("language"))
    out_rows, out_vecs = [], []
    for row, x in zip(rows, X):
        src = row.get("language")
        if args.monolingual_only and len(by_speaker[row.get("speaker_id")]) != 1:
            continue
        if src == delta.source_language:
            shift = delta
        elif args.bidirectional and src == delta.target_language:
            shift = delta.reversed()
        else:
            continue
        setting = transform.AccentSetting(epsilon, args.allow_extrapolation)
        out_vecs.append(transform.translate(x, shift, setting, normalize=args.normalize).values)
        new = dict(row)
        new.update({"language": shift.target_language, "source_language": src,
                    "epsilon": epsilon})
        out_rows.append(new)
    return out_rows, out_vecs


def _write_translated(path, args, kind, rows, vecs, dim):
    data = np.vstack(vecs) if vecs else np.zeros((0, dim))
    write_container(path, StreamTag.EMBEDDING, data, _header(args, kind=kind), rows)


def cmd_translate(args):
    _check_inputs(args, "input", "delta")
    _prepare_out(args.out)
    delta = transform.load_delta(args.delta)
    _, _, rows, X = _read_vectors(args.input)
    rows_out, vecs = _translated_rows(args, rows, X, delta, args.epsilon)
    _write_translated(args.out, args, "translated", rows_out, vecs, delta.dim)


def cmd_sweep(args):
    _check_inputs(args, "input", "delta")
    _prepare_out(args.out)
    delta = transform.load_delta(args.delta)
    _, _, rows, X = _read_vectors(args.input)
    all_rows, all_vecs = [], []
    for eps in _floats(args.epsilons):
        r, v = _translated_rows(args, rows, X, delta, eps)
        all_rows += r
        all_vecs += v
    _write_translated(args.out, args, "sweep", all_rows, all_vecs, delta.dim)


def cmd_transfer_report(args):
    _check_inputs(args, "embeddings", "delta")
    _prepare_out(args.out)
    st = _load_store(args.embeddings)
    delta = transform.load_delta(args.delta)
    pair = [delta.source_language, delta.target_language]
    lda = _fit_reference_lda(st, delta.reference_speaker_id or _reference_speaker(st, None),
                             pair, args)
    report = transform.transfer_report(st, delta, lda, args.epsilon)
    report["lda_test_accuracy"] = lda.test_accuracy
    _write_json(args.out, {**_header(args), "result": report})
    if args.csv_out:
        cols = ["speaker_id", "source_language", "target_language", "lda_label",
                "lda_score_toward_target", "cosine_to_original", "nearest_speaker",
                "identity_rank"]
        _write_csv(args.csv_out, args, cols, [[e[c] for c in cols] for e in report["speakers"]])


def cmd_export_plot(args):
    _check_inputs(args, "embeddings", "delta")
    os.makedirs(args.out_dir, exist_ok=True)
    st = _load_store(args.embeddings)
    ref = _reference_speaker(st, args.reference)
    langs = st.languages(ref)
    if args.delta:
        delta = transform.load_delta(args.delta)
    else:
        profile = store.find_profile(store.build_profiles(st.select(
            lambda r: r.speaker_id == ref)), ref)
        delta = transform.compute_delta(profile, langs[0], langs[1])

    recs = [r for r in st if r.speaker_id == ref]
    X = st.matrix(recs)
    if not args.raw:
        X = analysis.unit_rows(X)
    _, Z = analysis.pca_fit(X, 2)
    _write_csv(os.path.join(args.out_dir, "fig2_pca.csv"), args,
               ["utterance_id", "language", "n_words", "pc1", "pc2"],
               [[r.utterance_id, r.language, r.n_words, z[0], z[1]] for r, z in zip(recs, Z)])

    speakers = _words(args.speakers) if args.speakers else [
        s for s in oracle.PLOT_SPEAKERS if s in set(st.speakers())]
    if ref not in speakers:
        speakers = [ref] + speakers
    Xv, voices, speaker_of = transform.transfer_voices(st, delta, speakers, args.per_voice,
                                                      args.seed)
    res = tsne(Xv, TsneConfig(perplexity=args.perplexity, iterations=args.iterations,
                              seed=args.seed))
    _write_csv(os.path.join(args.out_dir, "fig3_tsne.csv"), args,
               ["voice", "speaker_id", "translated", "x", "y"],
               [[v, speaker_of[v], int(v.endswith("*")), y[0], y[1]]
                for v, y in zip(voices, res.embedding)])
    spk = np.array([speaker_of[v] for v in voices])
    _write_json(os.path.join(args.out_dir, "figures.json"), {**_header(args), "result": {
        "tsne_speaker_purity": analysis.nearest_centroid_purity(res.embedding, spk),
        "tsne_mutual_nearest": analysis.mutual_nearest_pairs(res.embedding, voices, speaker_of),
        "tsne_final_kl": float(res.kl[-1]),
    }})


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=PROG, description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="subcommand", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", help="JSON file of option defaults; flags override it")
        p.set_defaults(func=func)
        return p

    p = add("gen-data", cmd_gen_data, "synthetic bilingual embedding space")
    p.add_argument("--out-dir", "--out", dest="out_dir", required=True)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--speaker-sigma", type=float, default=2.0)
    p.add_argument("--utterance-sigma", type=float, default=1.0)
    p.add_argument("--separation", type=float, default=6.0)
    p.add_argument("--n-utterances", type=int, default=400)
    p.add_argument("--n-bilingual-utterances", type=int, default=8350)

    p = add("gen-audio", cmd_gen_audio, "synthetic multi-speaker audio")
    p.add_argument("--out-dir", "--out", dest="out_dir", required=True)
    p.add_argument("--n-speakers", type=int, default=8)
    p.add_argument("--utterances", type=int, default=24)
    p.add_argument("--min-duration", type=float, default=0.5)
    p.add_argument("--max-duration", type=float, default=1.0)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--language", default="en")

    p = add("extract", cmd_extract, "MFCC features for a manifest of WAV files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-coeffs", type=int, default=20)
    p.add_argument("--window-ms", type=float, default=25.0)
    p.add_argument("--hop-ms", type=float, default=10.0)
    p.add_argument("--n-mels", type=int, default=40)
    p.add_argument("--normalize", action="store_true")

    p = add("train", cmd_train, "train the speaker encoder")
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--units", type=int, default=64)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--n-speakers", type=int, default=None)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--pooling", choices=("mean", "last"), default="mean")

    p = add("embed", cmd_embed, "d-vectors for extracted features")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)

    p = add("profiles", cmd_profiles, "per-speaker, per-language cluster means")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--json", dest="json_out")

    p = add("pca", cmd_pca, "PCA projection of one speaker's utterances")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True, help="CSV path; a .json report goes alongside")
    p.add_argument("--speaker")
    p.add_argument("--all-speakers", action="store_true")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--raw", action="store_true", help="skip unit-normalizing embeddings")

    p = add("lda", cmd_lda, "two-language LDA on a bilingual speaker")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--speaker")
    p.add_argument("--languages")
    p.add_argument("--split", type=float, default=0.75)
    p.add_argument("--apply", help="embedding container to classify with the fitted model")
    p.add_argument("--predictions", help="CSV of per-row predictions for --apply")

    p = add("tsne", cmd_tsne, "exact tSNE of embeddings")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True, help="CSV path; a .json KL trace goes alongside")
    p.add_argument("--speakers")
    p.add_argument("--max-points", type=int, default=2000)
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iterations", type=int, default=1000)

    p = add("cosine", cmd_cosine, "cosine similarity of two utterances or all voice means")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--a")
    p.add_argument("--b")

    p = add("overlap", cmd_overlap, "short vs long sentence language overlap")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--speaker")
    p.add_argument("--languages")
    p.add_argument("--threshold", type=int, default=5)
    p.add_argument("--split", type=float, default=0.75)

    p = add("delta", cmd_delta, "language-pair delta from a bilingual reference")
    p.add_argument("--profiles", required=True, help="profiles .dvec or an embedding store")
    p.add_argument("--out", required=True)
    p.add_argument("--reference")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)

    for name, func, help_text in (("translate", cmd_translate, "apply the delta"),
                                  ("sweep", cmd_sweep, "apply the delta at several epsilons")):
        p = add(name, func, help_text)
        p.add_argument("--input", required=True)
        p.add_argument("--delta", required=True)
        p.add_argument("--out", required=True)
        if name == "translate":
            p.add_argument("--epsilon", type=float, default=1.0)
        else:
            p.add_argument("--epsilons", default="0,0.5,1")
        p.add_argument("--bidirectional", action="store_true",
                       help="also move target-language rows back to the source language")
        p.add_argument("--monolingual-only", action="store_true")
        p.add_argument("--normalize", action="store_true")
        p.add_argument("--allow-extrapolation", action="store_true")

    p = add("transfer-report", cmd_transfer_report, "check translated monolingual means")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--delta", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", dest="csv_out")
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--split", type=float, default=0.75)

    p = add("export-plot", cmd_export_plot, "CSV data for the PCA and tSNE figures")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out-dir", "--out", dest="out_dir", required=True)
    p.add_argument("--delta")
    p.add_argument("--reference")
    p.add_argument("--speakers")
    p.add_argument("--per-voice", type=int, default=80)
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--raw", action="store_true")
    return parser


def _apply_config_file(parser, args, argv):
    with open(args.config, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise DvecError(f"{args.config}: expected a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    known = set(vars(args))
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise DvecError(f"{args.config}: unknown option(s) {unknown}")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    subparser.set_defaults(**cfg)
    return parser.parse_args(argv)


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    try:
        if args.config:
            args = _apply_config_file(parser, args, argv)
        args.func(args)
    except (DvecError, OSError, json.JSONDecodeError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"{PROG}: error: {msg}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
