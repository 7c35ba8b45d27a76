use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use seqclus::clustering::{combine_estimates, estimate_k_with, KEstimate};
use seqclus::dataset::default_window;
use seqclus::distance::VectorMetric;
use seqclus::encoder::encode;
use seqclus::forest::train_forest;
use seqclus::pipeline::MethodOutput;
use seqclus::simulation::{gen_batch, preset, run_experiment, ScenarioSpec, PRESET_NAMES};
use seqclus::validation::ValidationReport;
use seqclus::{
    compute, cut, distance_matrix, evaluate, load_sequences, segment, to_newick, ward_linkage,
    InputFormat, Method, PipelineConfig, SequenceDataset, ValidityIndex,
};

use crate::output::{sha256_hex, write_manifest, Outputs};
use crate::{Cli, CliError, Command, InputArgs, MethodArgs};

struct Loaded {
    dataset: SequenceDataset,
    sha256: String,
}

fn load(args: &InputArgs, need_labels: bool) -> Result<Loaded, CliError> {
    let format: InputFormat = args.format.parse()?;
    if need_labels && format != InputFormat::Csv {
        return Err(CliError::User(
            "evaluate needs a labelled corpus (--format csv)".into(),
        ));
    }
    let bytes = fs::read(&args.input)
        .map_err(|e| CliError::User(format!("cannot read {}: {e}", args.input.display())))?;
    let dataset = load_sequences(bytes.as_slice(), format, args.labels || need_labels)?;
    Ok(Loaded {
        dataset,
        sha256: sha256_hex(&bytes),
    })
}

fn parse_metric(s: &str) -> Result<VectorMetric, CliError> {
    match s {
        "cosine" => Ok(VectorMetric::Cosine),
        "manhattan" => Ok(VectorMetric::Manhattan),
        other => Err(CliError::User(format!("unknown metric `{other}`"))),
    }
}

fn pipeline(args: &MethodArgs, seed: u64) -> Result<(Method, PipelineConfig), CliError> {
    let method: Method = args.method.parse()?;
    if args.trees == 0 {
        return Err(CliError::User("--trees must be at least 1".into()));
    }
    let cfg = PipelineConfig {
        window: args.window,
        trees: args.trees,
        seed,
        metric: parse_metric(&args.metric)?,
    };
    Ok((method, cfg))
}

fn parse_range(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::User(format!("bad k range `{s}`, expected LO:HI"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn parse_weights(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::User(format!("bad weights `{s}`, expected W_ASW,W_CH"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

pub fn run(cli: &Cli, outputs: &mut Outputs) -> Result<(), CliError> {
    let seed = cli.seed;
    match &cli.command {
        Command::Encode {
            input,
            method,
            out,
            dense,
            save_model,
            dump_segments,
        } => {
            let loaded = load(input, false)?;
            let (m, cfg) = pipeline(method, seed)?;
            if !m.has_vectors() {
                return Err(CliError::User(format!(
                    "`{m}` has no vector representation"
                )));
            }
            if (save_model.is_some() || dump_segments.is_some())
                && !matches!(m, Method::NTreeClus(_))
            {
                return Err(CliError::User(
                    "--save-model and --dump-segments need a ntreeclus method".into(),
                ));
            }
            let result = compute(&loaded.dataset, m, &cfg)?;
            let ids = loaded.dataset.ids();
            let counts = result.vectors.as_ref().expect("vector method");
            outputs.write_with(out, |w| {
                match &result.encoded {
                    Some(enc) if *dense => enc.representation.write_dense_tsv(&mut *w)?,
                    Some(enc) => enc.representation.write_sparse_tsv(&mut *w)?,
                    None => {
                        let rep = seqclus::SequenceRepresentation {
                            counts: counts.clone(),
                            seq_ids: ids.clone(),
                            trees: 0,
                            window: result.window.unwrap_or(0),
                            variant: None,
                            seed,
                        };
                        if *dense {
                            rep.write_dense_tsv(&mut *w)?
                        } else {
                            rep.write_sparse_tsv(&mut *w)?
                        }
                    }
                }
                Ok(())
            })?;
            if let (Some(path), Some(enc)) = (save_model, &result.encoded) {
                outputs.write_with(path, |w| {
                    w.write_all(enc.model.to_json()?.as_bytes())?;
                    Ok(())
                })?;
            }
            if let (Some(path), Some(enc)) = (dump_segments, &result.encoded) {
                outputs.write_with(path, |w| {
                    enc.segments.write_tsv(loaded.dataset.alphabet(), &mut *w)?;
                    Ok(())
                })?;
            }
            let details = json!({
                "window": result.window,
                "sequences": loaded.dataset.len(),
                "columns": counts.dim(),
            });
            write_manifest(
                outputs,
                out,
                "encode",
                seed,
                &cli.command,
                Some(&loaded.sha256),
                details,
            )
        }

        Command::Cluster {
            input,
            method,
            k,
            out,
            newick,
            dist_out,
            k_range,
            scores,
        } => {
            let loaded = load(input, false)?;
            let (m, cfg) = pipeline(method, seed)?;
            let range = k_range.as_deref().map(parse_range).transpose()?;
            let result = compute(&loaded.dataset, m, &cfg)?;
            let dg = ward_linkage(&result.distances)?;
            let assign = cut(&dg, *k)?;
            let ids = loaded.dataset.ids();
            outputs.write_with(out, |w| Ok(assign.write_csv(&ids, &mut *w)?))?;
            if let Some(path) = newick {
                let text = to_newick(&dg, &ids)?;
                outputs.write_with(path, |w| Ok(writeln!(w, "{text}")?))?;
            }
            if let Some(path) = dist_out {
                outputs.write_with(path, |w| Ok(result.distances.write_tsv(&mut *w)?))?;
            }
            if let (Some((lo, hi)), Some(path)) = (range, scores) {
                let curves = index_curves(&dg, &result, lo, hi)?;
                outputs.write_with(path, |w| write_curves(w, &curves))?;
            }
            let details = json!({ "window": result.window, "cluster_sizes": assign.sizes() });
            write_manifest(
                outputs,
                out,
                "cluster",
                seed,
                &cli.command,
                Some(&loaded.sha256),
                details,
            )
        }

        Command::EstimateK {
            input,
            method,
            k_range,
            index,
            weights,
            out,
        } => {
            let loaded = load(input, false)?;
            let (m, cfg) = pipeline(method, seed)?;
            let (lo, hi) = parse_range(k_range)?;
            let result = compute(&loaded.dataset, m, &cfg)?;
            let dg = ward_linkage(&result.distances)?;
            let vectors = result.vectors.as_ref();
            let est = if index == "combined" {
                let (wa, wc) = parse_weights(weights)?;
                let a =
                    estimate_k_with(&dg, vectors, &result.distances, lo..=hi, ValidityIndex::Asw)?;
                let c =
                    estimate_k_with(&dg, vectors, &result.distances, lo..=hi, ValidityIndex::Ch)?;
                let combined = combine_estimates(&[(&a, wa), (&c, wc)])?;
                if let Some(path) = out {
                    let curves = vec![a, c, combined.clone()];
                    outputs.write_with(path, |w| write_curves(w, &curves))?;
                }
                combined
            } else {
                let idx: ValidityIndex = index.parse()?;
                let est = estimate_k_with(&dg, vectors, &result.distances, lo..=hi, idx)?;
                if let Some(path) = out {
                    outputs.write_with(path, |w| Ok(est.write_tsv(&mut *w)?))?;
                }
                est
            };
            println!(
                "{}",
                serde_json::to_string(&json!({ "k_hat": est.k_hat, "index": est.index }))?
            );
            if let Some(path) = out {
                write_manifest(
                    outputs,
                    path,
                    "estimate-k",
                    seed,
                    &cli.command,
                    Some(&loaded.sha256),
                    json!(est),
                )?;
            }
            Ok(())
        }

        Command::Evaluate {
            input,
            method,
            k,
            out,
        } => {
            let loaded = load(input, true)?;
            let truth = loaded.dataset.labels().expect("labels requested");
            let k = k.unwrap_or_else(|| truth.iter().max().map_or(1, |m| m + 1));
            let mut results = BTreeMap::new();
            for name in method.method.split(',') {
                let args = MethodArgs {
                    method: name.to_string(),
                    window: method.window,
                    trees: method.trees,
                    metric: method.metric.clone(),
                };
                let (m, cfg) = pipeline(&args, seed)?;
                let result = compute(&loaded.dataset, m, &cfg)?;
                let dg = ward_linkage(&result.distances)?;
                let assign = cut(&dg, k)?;
                let report = evaluate(
                    &result.distances,
                    result.vectors.as_ref(),
                    &assign.labels,
                    Some(truth),
                )?;
                results.insert(
                    m.label(),
                    MethodReport {
                        window: result.window,
                        report,
                    },
                );
            }
            let doc = json!({ "k": k, "sequences": loaded.dataset.len(), "results": results });
            match out {
                Some(path) => {
                    outputs.write_with(path, |w| {
                        serde_json::to_writer_pretty(&mut *w, &doc)?;
                        Ok(writeln!(w)?)
                    })?;
                    write_manifest(
                        outputs,
                        path,
                        "evaluate",
                        seed,
                        &cli.command,
                        Some(&loaded.sha256),
                        Value::Null,
                    )
                }
                None => {
                    println!("{}", serde_json::to_string_pretty(&doc)?);
                    Ok(())
                }
            }
        }

        Command::Simulate {
            preset: name,
            out,
            json,
            list,
        } => {
            if *list {
                for p in PRESET_NAMES {
                    println!("{p}\t{}", preset(p)?.description);
                }
                return Ok(());
            }
            let (Some(name), Some(out)) = (name, out) else {
                return Err(CliError::User("--preset and --out are required".into()));
            };
            let p = preset(name)?;
            let report = run_experiment(&p, seed);
            outputs.write_with(out, |w| Ok(report.write_csv(&mut *w)?))?;
            if let Some(path) = json {
                outputs.write_with(path, |w| {
                    serde_json::to_writer_pretty(&mut *w, &report)?;
                    Ok(writeln!(w)?)
                })?;
            }
            let details = json!({
                "description": p.description,
                "methods": p.methods,
                "cells": p.cells,
                "summary": report.summary.iter().filter(|s| s.cell.is_none()).collect::<Vec<_>>(),
            });
            write_manifest(outputs, out, "simulate", seed, &cli.command, None, details)
        }

        Command::Bench {
            sequences,
            length,
            alphabet,
            repeat,
            method,
        } => {
            let (m, cfg) = pipeline(method, seed)?;
            let pattern = (*length / 4).clamp(1, 10);
            let spec = ScenarioSpec::two_cluster(*sequences, *alphabet, *length, pattern);
            let batch = gen_batch(&spec, seed)?;
            let ds = &batch.dataset;
            let mut runs = Vec::new();
            for _ in 0..(*repeat).max(1) {
                runs.push(bench_once(ds, m, &cfg)?);
            }
            let doc = json!({
                "method": m.label(),
                "sequences": sequences,
                "length": length,
                "alphabet": alphabet,
                "threads": rayon::current_num_threads(),
                "runs": runs,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct MethodReport {
    window: Option<usize>,
    #[serde(flatten)]
    report: ValidationReport,
}

fn index_curves(
    dg: &seqclus::Dendrogram,
    result: &MethodOutput,
    lo: usize,
    hi: usize,
) -> Result<Vec<KEstimate>, CliError> {
    let mut indices = vec![ValidityIndex::Asw];
    if result.vectors.is_some() {
        indices.push(ValidityIndex::Ch);
    }
    indices.push(ValidityIndex::Dunn);
    indices
        .into_iter()
        .map(|i| {
            Ok(estimate_k_with(
                dg,
                result.vectors.as_ref(),
                &result.distances,
                lo..=hi,
                i,
            )?)
        })
        .collect()
}

fn write_curves<W: Write>(w: &mut W, curves: &[KEstimate]) -> Result<(), CliError> {
    let header: Vec<&str> = curves.iter().map(|c| c.index.as_str()).collect();
    writeln!(w, "k\t{}", header.join("\t"))?;
    for (i, s) in curves[0].scores.iter().enumerate() {
        let cols: Vec<String> = curves
            .iter()
            .map(|c| {
                c.scores[i]
                    .score
                    .map_or_else(|| "NA".to_string(), |v| v.to_string())
            })
            .collect();
        writeln!(w, "{}\t{}", s.k, cols.join("\t"))?;
    }
    Ok(())
}

fn bench_once(ds: &SequenceDataset, m: Method, cfg: &PipelineConfig) -> Result<Value, CliError> {
    let mut stages = BTreeMap::new();
    let total = Instant::now();
    let distances = if let Method::NTreeClus(v) = m {
        let n = match cfg.window {
            Some(n) => n,
            None => default_window(ds)?,
        };
        let t = Instant::now();
        let sm = segment(ds, n, v.uses_position())?;
        stages.insert("segment", t.elapsed().as_secs_f64());
        let t = Instant::now();
        let fm = train_forest(&sm, &v.params(cfg.trees, cfg.seed))?;
        stages.insert("train", t.elapsed().as_secs_f64());
        let t = Instant::now();
        let rep = encode(&fm, &sm)?;
        stages.insert("encode", t.elapsed().as_secs_f64());
        let t = Instant::now();
        let dm = distance_matrix(&rep.counts, &ds.ids(), cfg.metric)?;
        stages.insert("distance", t.elapsed().as_secs_f64());
        dm
    } else {
        let t = Instant::now();
        let dm = compute(ds, m, cfg)?.distances;
        stages.insert("distance", t.elapsed().as_secs_f64());
        dm
    };
    let t = Instant::now();
    ward_linkage(&distances)?;
    stages.insert("linkage", t.elapsed().as_secs_f64());
    Ok(json!({ "stages_seconds": stages, "total_seconds": total.elapsed().as_secs_f64() }))
}
