"""Operator command line: validate, perturb, embed, summarize, measure,
audit, report, and the composite run.

Exit codes: 0 ok, 2 configuration error, 3 backend error, 4 data error.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from hirefair import perturb, retrieval, stats, textmetrics
from hirefair.backends import BackendConfig, BackendError, ResponseCache, build_backend
from hirefair.config import ConfigError, load_run_config
from hirefair.corpus import (
    CorpusError,
    load_corpus,
    load_name_pools,
    pair_jobs,
    save_corpus,
    validate_corpus,
)
from hirefair.pipeline import DataError, run_audit
from hirefair.report import ReportError, aggregate, emit, read_ledger
from hirefair.retrieval import PooledScore, RetrievalError, SimilarityRecord

EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_DATA = 4

logger = logging.getLogger(__name__)


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Enable debug logging.")
def main(verbose: bool):
    """Fairness audits for embedding-based resume retrieval and summarization."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.group()
def corpus():
    """Corpus inspection and validation."""


@corpus.command("validate")
@click.argument("path", type=click.Path(exists=True))
def corpus_validate(path):
    """Load a corpus, run invariant checks, and summarize occupation pairing."""
    try:
        resumes, jobs = load_corpus(path)
        pools = load_name_pools()
        problems = validate_corpus(resumes, jobs, pools)
    except CorpusError as exc:
        _fail(EXIT_DATA, str(exc))
    click.echo(f"resumes: {len(resumes)}")
    click.echo(f"jobs: {len(jobs)}")
    groups = pair_jobs(resumes, jobs)
    for occupation in sorted(groups):
        rs, js = groups[occupation]
        click.echo(f"occupation {occupation!r}: {len(rs)} resumes, {len(js)} jobs")
    if problems:
        for p in problems:
            click.echo(f"problem: {p}", err=True)
        _fail(EXIT_DATA, f"{len(problems)} validation problem(s)")
    click.echo("corpus ok")


@main.command("perturb")
@click.option("--plan", "plan_path", required=True, type=click.Path(exists=True))
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def perturb_cmd(plan_path, in_path, out_path):
    """Apply an ordered perturbation plan to a corpus."""
    try:
        specs = perturb.load_plan(plan_path)
        resumes, jobs = load_corpus(in_path)
        pools = load_name_pools()
        perturbed = perturb.apply_plan(resumes, specs, pools=pools)
        save_corpus(perturbed, jobs, out_path)
    except (CorpusError, perturb.PerturbError) as exc:
        _fail(EXIT_DATA, str(exc))
    click.echo(f"wrote {len(perturbed)} resumes to {out_path}")


def _load_backend_config(path, backend_id, kind):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    blocks = doc.get("backends", doc if isinstance(doc, list) else [doc])
    for raw in blocks:
        if backend_id is None:
            if raw.get("kind") == kind:
                return BackendConfig.from_dict(raw)
        elif raw.get("id") == backend_id:
            return BackendConfig.from_dict(raw)
    raise ConfigError(f"no {kind} backend {backend_id or ''!r} found in {path}")


@main.command("embed")
@click.option("--backends", "backends_path", required=True, type=click.Path(exists=True),
              help="JSON file with backend blocks.")
@click.option("--backend-id", default=None, help="Which embedding backend block to use.")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--cache-dir", default=None, type=click.Path())
def embed_cmd(backends_path, backend_id, in_path, out_path, cache_dir):
    """Embed a corpus and write the (job, resume, variant, score) table."""
    try:
        cfg = _load_backend_config(backends_path, backend_id, "embedding")
        cache = ResponseCache(cache_dir) if cache_dir else None
        backend = build_backend(cfg, cache)
        resumes, jobs = load_corpus(in_path)
        if not jobs:
            _fail(EXIT_DATA, "corpus has no job posts to score against")
        vectors = backend.embed_batch([r.body for r in resumes])
        job_vectors = backend.embed_batch([j.body for j in jobs])
        rows = []
        for job, jv in zip(jobs, job_vectors):
            for resume, rv in zip(resumes, vectors):
                variant = resume.lineage[-1] if resume.lineage else "original"
                rows.append(retrieval.ScoreRow(
                    job_id=job.id, resume_id=resume.id, variant_id=variant,
                    score=retrieval.cosine(rv.values, jv.values),
                ))
        retrieval.write_score_table(rows, out_path)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    except BackendError as exc:
        _fail(EXIT_BACKEND, str(exc))
    except (CorpusError, RetrievalError) as exc:
        _fail(EXIT_DATA, str(exc))
    click.echo(f"wrote {len(rows)} scores to {out_path}")


@main.command("summarize")
@click.option("--backends", "backends_path", required=True, type=click.Path(exists=True))
@click.option("--backend-id", default=None)
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--length", type=click.Choice(["100", "200"]), default="100")
@click.option("--pov", type=click.Choice(["first", "third"]), default="third")
@click.option("--temperature", type=click.Choice(["0.0", "0.3"]), default="0.0")
@click.option("--runs", type=click.IntRange(1, 5), default=1)
@click.option("--cache-dir", default=None, type=click.Path())
def summarize_cmd(backends_path, backend_id, in_path, out_path, length, pov,
                  temperature, runs, cache_dir):
    """Generate summaries for every resume at one grid cell."""
    from hirefair.backends import CompletionRequest
    from hirefair.pipeline import summary_prompt

    try:
        cfg = _load_backend_config(backends_path, backend_id, "completion")
        cache = ResponseCache(cache_dir) if cache_dir else None
        backend = build_backend(cfg, cache)
        resumes, _ = load_corpus(in_path)
        rows = []
        for resume in resumes:
            prompt = summary_prompt(resume, int(length), pov)
            for run_index in range(1, runs + 1):
                text = backend.complete(CompletionRequest(
                    backend_id=cfg.id, model_name=cfg.model_name, prompt=prompt,
                    temperature=float(temperature), max_words_hint=int(length),
                    run_index=run_index,
                ))
                rows.append({
                    "resume_id": resume.id,
                    "variant_id": resume.lineage[-1] if resume.lineage else "original",
                    "model_name": cfg.model_name, "length": int(length),
                    "pov": pov, "temperature": float(temperature),
                    "run_index": run_index, "text": text,
                })
        with Path(out_path).open("w", encoding="utf-8", newline="\n") as fh:
            for row in rows:
                fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    except BackendError as exc:
        _fail(EXIT_BACKEND, str(exc))
    except CorpusError as exc:
        _fail(EXIT_DATA, str(exc))
    click.echo(f"wrote {len(rows)} summaries to {out_path}")


@main.command("measure")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True),
              help="Summaries JSONL from the summarize stage.")
@click.option("--out", "out_path", required=True, type=click.Path())
def measure_cmd(in_path, out_path):
    """Compute the proxy measures for generated summaries."""
    rows = []
    try:
        with Path(in_path).open("r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                record = textmetrics.SummaryRecord(
                    resume_id=rec["resume_id"], variant_id=rec["variant_id"],
                    model_name=rec["model_name"], length_setting=rec["length"],
                    pov=rec["pov"], temperature=rec["temperature"],
                    run_index=rec["run_index"], text=rec["text"],
                )
                rows.append((record, textmetrics.measure_text(record.text)))
        textmetrics.write_measures(rows, out_path)
    except (KeyError, json.JSONDecodeError, textmetrics.TextMetricsError) as exc:
        _fail(EXIT_DATA, f"bad summaries file: {exc}")
    click.echo(f"wrote {len(rows)} measure rows to {out_path}")


@main.command("rank")
@click.option("--scores", "scores_path", required=True, type=click.Path(exists=True))
@click.option("--variant", default="name:MW", help="Variant id to rank.")
@click.option("--top", default=0, type=int, help="Print only the top N rows per job.")
def rank_cmd(scores_path, variant, top):
    """Print competition ranks per job from a saved score table."""
    try:
        rows = retrieval.read_score_table(scores_path)
    except (RetrievalError, OSError, ValueError) as exc:
        _fail(EXIT_DATA, str(exc))
    by_job: dict[str, list] = {}
    for row in rows:
        if row.variant_id == variant:
            by_job.setdefault(row.job_id, []).append(
                SimilarityRecord(row.resume_id, row.job_id, row.score))
    if not by_job:
        _fail(EXIT_DATA, f"variant {variant!r} not present in score table")
    for job_id in sorted(by_job):
        ranked = retrieval.rank_resumes(by_job[job_id])
        for entry in ranked.entries:
            if top and entry.rank > top:
                break
            click.echo(f"{job_id}\t{entry.rank}\t{entry.resume_id}\t{entry.score:.6f}")


@main.group()
def audit():
    """Standalone metric computation from stage artifacts."""


@audit.command("retrieval")
@click.option("--scores", "scores_path", required=True, type=click.Path(exists=True))
@click.option("--metric", type=click.Choice(["exclusion", "nonuniformity"]),
              required=True)
@click.option("--n", "n_values", multiple=True, type=int, help="Top-n sizes.")
@click.option("--x", "x_values", multiple=True, type=float, help="Top-x percentages.")
@click.option("--mode", type=click.Choice(["sep", "pool"]), default="sep")
@click.option("--original", "original_variant", default="name:MW",
              help="Variant id treated as the original ranking (exclusion).")
@click.option("--perturbed", "perturbed_variant", default="swap:MW->FW",
              help="Variant id whose scores re-rank the originals (exclusion).")
@click.option("--alpha", type=float, default=0.05)
def audit_retrieval(scores_path, metric, n_values, x_values, mode,
                    original_variant, perturbed_variant, alpha):
    """Recompute retrieval metrics from a saved score table."""
    try:
        rows = retrieval.read_score_table(scores_path)
    except (RetrievalError, OSError, ValueError) as exc:
        _fail(EXIT_DATA, str(exc))
    by_job: dict[str, list[retrieval.ScoreRow]] = {}
    for row in rows:
        by_job.setdefault(row.job_id, []).append(row)

    try:
        if metric == "exclusion":
            if not n_values:
                n_values = (5, 10, 100)
            for job_id in sorted(by_job):
                job_rows = by_job[job_id]
                orig = [SimilarityRecord(r.resume_id, r.job_id, r.score)
                        for r in job_rows if r.variant_id == original_variant]
                pert = {r.resume_id: r.score for r in job_rows
                        if r.variant_id == perturbed_variant}
                if not orig or not pert:
                    _fail(EXIT_DATA,
                          f"job {job_id}: variants {original_variant!r} / "
                          f"{perturbed_variant!r} not present in score table")
                ranked = retrieval.rank_resumes(orig)
                for n in n_values:
                    value = retrieval.exclusion(ranked, pert, n)
                    click.echo(f"{job_id}\texclusion\tn={n}\t{value:.6f}")
        else:
            if not x_values:
                x_values = (5.0, 10.0)
            name_variants = sorted({r.variant_id for r in rows
                                    if r.variant_id.startswith("name:")})
            if len(name_variants) != 4:
                _fail(EXIT_DATA, "score table lacks the four name:* group variants")
            pooled = {
                job_id: [
                    PooledScore(member_id=f"{r.resume_id}@{r.variant_id[5:7]}",
                                group=r.variant_id[5:7], score=r.score)
                    for r in by_job[job_id] if r.variant_id in name_variants
                ]
                for job_id in sorted(by_job)
            }
            for x in x_values:
                results = retrieval.non_uniformity(
                    pooled, x, mode="separated" if mode == "sep" else "pooled",
                    occupation_of={j: j for j in pooled} if mode == "pool" else None,
                    alpha=alpha,
                )
                for res in results:
                    click.echo(f"{res.unit_id}\tnonuniformity\tx={x:g}\t{mode}\t"
                               f"chi2={res.chi2:.4f}\tp={res.p:.6f}\tflag={res.flag}")
    except RetrievalError as exc:
        _fail(EXIT_DATA, str(exc))


@audit.command("summarization")
@click.option("--measures", "measures_path", required=True, type=click.Path(exists=True))
@click.option("--correction", type=click.Choice(["bh", "bonferroni"]), default="bh")
@click.option("--alpha", type=float, default=0.05)
def audit_summarization(measures_path, correction, alpha):
    """Invariance-violation rates from a measures file.

    Groups are paired via the name:* variant ids recorded by the pipeline.
    Each run index pairs separately here; the composite run averages runs
    per resume first (configurable via pair_runs).
    """
    from hirefair.pipeline import COMPARISON_PAIRS

    try:
        measured = textmetrics.read_measures(measures_path)
    except (textmetrics.TextMetricsError, OSError, ValueError, KeyError) as exc:
        _fail(EXIT_DATA, str(exc))
    values: dict[tuple, float] = {}
    cells = set()
    models = set()
    resume_ids = set()
    for record, mv in measured:
        models.add(record.model_name)
        resume_ids.add(record.resume_id)
        cells.add((record.temperature, record.length_setting, record.pov,
                   record.run_index))
        for measure in ("reading_ease", "reading_time", "polarity", "subjectivity"):
            values[(record.model_name, record.variant_id, record.resume_id, measure,
                    record.temperature, record.length_setting, record.pov,
                    record.run_index)] = mv.scalar(measure)
    results = []
    for model in sorted(models):
        for comparison, (left, right) in COMPARISON_PAIRS.items():
            for measure in ("reading_ease", "reading_time", "polarity", "subjectivity"):
                for temperature, length, pov, run_index in sorted(cells):
                    diffs = []
                    for rid in sorted(resume_ids):
                        lkey = (model, f"name:{left}", rid, measure, temperature,
                                length, pov, run_index)
                        rkey = (model, f"name:{right}", rid, measure, temperature,
                                length, pov, run_index)
                        if lkey in values and rkey in values:
                            diffs.append(values[lkey] - values[rkey])
                    if len(diffs) >= 2:
                        label = stats.TestLabel(model=model, measure=measure,
                                                comparison=comparison,
                                                temperature=temperature,
                                                length=length, pov=pov)
                        results.append((label, stats.paired_t_test(diffs)))
    if not results:
        _fail(EXIT_DATA, "no pairable measures found (need name:* group variants)")
    for rate in stats.invariance_violation_rate(results, correction=correction,
                                                alpha=alpha):
        click.echo(f"{rate.model}\t{rate.comparison_type}\t"
                   f"{rate.rejected}/{rate.total}\t{rate.rate:.4f}")


@main.command("report")
@click.option("--ledger", "ledger_paths", multiple=True, required=True,
              type=click.Path(exists=True))
@click.option("--run-id", required=True)
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--svg", is_flag=True, help="Also emit SVG bar charts.")
def report_cmd(ledger_paths, run_id, manifest_path, out_dir, svg):
    """Aggregate metric ledgers into report files."""
    try:
        entries = []
        for path in ledger_paths:
            entries.extend(read_ledger(path))
        manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
        manifest.pop("run_id", None)
        rep = aggregate(entries, run_id, manifest)
        files = emit(rep, out_dir, svg=svg)
    except (ReportError, OSError, json.JSONDecodeError) as exc:
        _fail(EXIT_DATA, str(exc))
    for f in files:
        click.echo(f"wrote {f}")


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", default=None, type=click.Path(),
              help="Override the config's output directory.")
@click.option("--seed", "master_seed", default=None, type=int)
@click.option("--draws", default=None, type=int)
@click.option("--correction", default=None, type=click.Choice(["bh", "bonferroni"]))
@click.option("--alpha", default=None, type=float)
@click.option("--svg", is_flag=True)
def run_cmd(config_path, out_dir, master_seed, draws, correction, alpha, svg):
    """Composite pipeline: validate, perturb, embed, summarize, measure,
    audit, report."""
    try:
        config = load_run_config(
            config_path, out_dir=out_dir, master_seed=master_seed,
            draws=draws, correction=correction, alpha=alpha,
        )
        result = run_audit(config, svg=svg)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    except BackendError as exc:
        _fail(EXIT_BACKEND, str(exc))
    except (CorpusError, DataError, RetrievalError,
            textmetrics.TextMetricsError, perturb.PerturbError,
            stats.StatsError, ReportError) as exc:
        _fail(EXIT_DATA, str(exc))
    click.echo(f"run {result.run_id} complete")
    click.echo(f"report rows: {len(result.report.rows)}")
    for f in result.files:
        click.echo(f"wrote {f}")


if __name__ == "__main__":
    main()
