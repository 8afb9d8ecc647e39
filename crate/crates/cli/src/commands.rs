use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;

use del_core::measure::io::{load_dataset, save_dataset};
use del_core::measure::{keep_rows, Dataset, Label};
use del_core::metrics::Metrics;
use del_core::rule_dsl::{load_ruleset, save_ruleset, RuleSet};
use del_core::rule_net::explain as explain_prediction;
use del_core::synth::{
    br_classify, expert_rules, generate, synthetic_rules, synthetic_schema, GeneratorConfig,
};
use del_core::trainer::{
    check_schema, closed_open_protocol, evaluate, train_restarts, DelModel, NamedDataset, Snapshot,
    TrainObserver, TrainOptions, ValidationRecord,
};

use crate::config::{overlay, read_config_file, train_config};
use crate::output::{
    dataset_path, metrics_header, metrics_row, prepare_out_dir, print_json, rules_path, Manifest,
};
use crate::{BrArgs, EvalArgs, ExplainArgs, GenDataArgs, ProtocolArgs, TrainArgs};

fn read_dataset(arg: &Path) -> Result<(PathBuf, Dataset)> {
    let path = dataset_path(arg);
    let ds = load_dataset(&path).with_context(|| format!("loading dataset {}", path.display()))?;
    Ok((path, ds))
}

fn read_rules(explicit: Option<&Path>, data: &Path) -> Result<RuleSet> {
    let path = rules_path(explicit, data);
    load_ruleset(&path).with_context(|| format!("loading rules {}", path.display()))
}

fn label_name(l: Label) -> &'static str {
    match l {
        Label::Positive => "positive",
        Label::Negative => "negative",
    }
}

pub fn gen_data(args: &GenDataArgs, as_json: bool) -> Result<()> {
    let file = args.config.as_deref().map(read_config_file).transpose()?;
    let preset = GeneratorConfig::preset(args.preset.into(), args.seed);
    let mut cfg = overlay(&preset, file.as_ref(), "generator")?;
    if let Some(n) = args.n {
        cfg.n_samples = n;
    }
    let syn = generate(&cfg, &synthetic_schema(), &synthetic_rules())?;

    prepare_out_dir(&args.out, args.force)?;
    save_dataset(&syn.dataset, &args.out.join("data.jsonl"))?;
    save_ruleset(&expert_rules(&cfg), &args.out.join("rules.del"))?;
    let truth = json!({
        "true_theta": cfg.true_theta,
        "noise_rows": syn.noise_rows,
        "flipped": syn.flipped,
        "clean_labels": syn.clean_labels,
    });
    std::fs::write(args.out.join("truth.json"), serde_json::to_string(&truth)? + "\n")?;

    let positives = syn.dataset.count(Label::Positive);
    let summary = json!({
        "samples": syn.dataset.len(),
        "positives": positives,
        "noisy_samples": syn.noise_rows.iter().filter(|r| !r.is_empty()).count(),
        "flipped_labels": syn.flipped.iter().filter(|&&f| f).count(),
        "files": ["data.jsonl", "data.schema.json", "rules.del", "truth.json"],
    });
    Manifest::new("gen-data", &cfg, summary.clone()).write(&args.out)?;
    if as_json {
        print_json(&summary)?;
    } else {
        println!(
            "wrote {} samples ({} positive, {:.1}%) to {}",
            syn.dataset.len(),
            positives,
            100.0 * positives as f64 / syn.dataset.len().max(1) as f64,
            args.out.display()
        );
    }
    Ok(())
}

/// Prints validation rows as training reaches them.
struct Progress {
    json: bool,
    header_done: bool,
}

impl TrainObserver for Progress {
    fn validation(&mut self, _step: usize, r: &ValidationRecord) {
        if self.json {
            if let Ok(line) = serde_json::to_string(r) {
                println!("{line}");
            }
            return;
        }
        if !self.header_done {
            println!(
                "{:>7} {:>10} {:>10} {:>9} {:>9} {:>9} {:>6} {:>6} {:>7}",
                "step", "loss_rule", "loss_dam", "accuracy", "recall", "recall'", "FN", "FP", "FCR"
            );
            self.header_done = true;
        }
        println!(
            "{:>7} {:>10.5} {:>10.5} {:>9.4} {:>9.4} {:>9.4} {:>6} {:>6} {:>7.4}",
            r.step, r.loss_rule, r.loss_assess, r.accuracy, r.recall, r.recall_prime, r.false_neg, r.false_pos,
            r.false_critical_ratio
        );
    }
}

pub fn train(args: &TrainArgs, as_json: bool) -> Result<()> {
    let cfg = train_config(&args.opts)?;
    let (data_path, dataset) = read_dataset(&args.data)?;
    let rules = read_rules(args.rules.as_deref(), &data_path)?;
    rules.validate(&dataset.schema).context("rule file does not fit the dataset")?;
    prepare_out_dir(&args.out, args.force)?;

    let options = TrainOptions {
        out_dir: Some(args.out.clone()),
        trace_search: args.trace_search,
    };
    let mut progress = Progress {
        json: as_json,
        header_done: false,
    };
    let (outcomes, best) = train_restarts(&cfg, &dataset, &rules, args.opts.restarts, &options, &mut progress)?;

    let best_file = best.and_then(|r| {
        let snap = outcomes[r].best_snapshot()?;
        let name = Snapshot::file_name(snap.step);
        let rel = if args.opts.restarts > 1 {
            format!("restart_{r}/{name}")
        } else {
            name
        };
        Some((r, rel, snap))
    });
    let saved: usize = outcomes.iter().map(|o| o.snapshots.len()).sum();
    let details = json!({
        "data": data_path,
        "rules": rules_path(args.rules.as_deref(), &data_path),
        "restarts": args.opts.restarts,
        "snapshots": saved,
        "best_snapshot": best_file.as_ref().map(|b| &b.1),
        "best_metrics": best_file.as_ref().map(|b| &b.2.metrics),
    });
    Manifest::new("train", &cfg, details).write(&args.out)?;

    let Some((restart, rel, snap)) = best_file else {
        bail!(
            "no snapshot was saved: validation runs every {} steps but training stopped after {}",
            cfg.mu_val,
            cfg.sigma2
        );
    };
    if as_json {
        println!("{}", json!({ "best_snapshot": args.out.join(&rel), "restart": restart, "metrics": snap.metrics }));
    } else {
        println!(
            "best: step {} (restart {restart}) recall' {:.4}, accuracy {:.4} -> {}",
            snap.step,
            snap.metrics.recall_prime,
            snap.metrics.accuracy,
            args.out.join(&rel).display()
        );
        println!("learned thresholds: {:?}", snap.rule_net.theta);
    }
    Ok(())
}

fn print_metrics(label: &str, m: &Metrics, as_json: bool) -> Result<()> {
    if !as_json {
        println!("{}", metrics_header());
        println!("{}", metrics_row(label, m));
    }
    print_json(m)
}

pub fn eval(args: &EvalArgs, as_json: bool) -> Result<()> {
    let snap = Snapshot::load(&args.snapshot)?;
    let (_, dataset) = read_dataset(&args.data)?;
    let thr = args.acc_threshold.unwrap_or(snap.acc_threshold);
    let m = evaluate(&snap, &dataset, thr)?;
    print_metrics(&format!("step {}", snap.step), &m, as_json)
}

pub fn br(args: &BrArgs, as_json: bool) -> Result<()> {
    let (data_path, dataset) = read_dataset(&args.data)?;
    let rules = read_rules(args.rules.as_deref(), &data_path)?;
    let m = br_classify(&rules, &dataset, args.acc_threshold)?;
    print_metrics("BR", &m, as_json)
}

fn stem(p: &Path) -> String {
    let p = dataset_path(p);
    let name = if p.file_name().is_some_and(|n| n == "data.jsonl") {
        p.parent().and_then(Path::file_name)
    } else {
        p.file_stem()
    };
    name.map_or_else(|| "dataset".into(), |n| n.to_string_lossy().into_owned())
}

pub fn protocol(args: &ProtocolArgs, as_json: bool) -> Result<()> {
    let cfg = train_config(&args.opts)?;
    let (a_path, a) = read_dataset(&args.a)?;
    let (_, b) = read_dataset(&args.b)?;
    let rules = read_rules(args.rules.as_deref(), &a_path)?;
    let (a_name, b_name) = (stem(&args.a), stem(&args.b));
    if let Some(out) = &args.out {
        prepare_out_dir(out, args.force)?;
    }
    let report = closed_open_protocol(
        NamedDataset {
            name: &a_name,
            data: &a,
            acc_threshold: args.a_acc_threshold,
        },
        NamedDataset {
            name: &b_name,
            data: &b,
            acc_threshold: args.b_acc_threshold,
        },
        &rules,
        &cfg,
        args.opts.restarts,
    )?;
    if let Some(out) = &args.out {
        std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
        Manifest::new("protocol", &cfg, json!({ "a": args.a, "b": args.b, "files": ["report.json"] })).write(out)?;
    }
    if as_json {
        return print_json(&report);
    }
    for table in &report.tables {
        println!("== {}", table.title);
        println!("{}", metrics_header());
        for row in &table.rows {
            println!("{}", metrics_row(&format!("{} train", row.method), &row.train));
            println!("{}", metrics_row(&format!("{} test", row.method), &row.test));
        }
        println!();
    }
    Ok(())
}

pub fn explain(args: &ExplainArgs, as_json: bool) -> Result<()> {
    let snap = Snapshot::load(&args.snapshot)?;
    let (_, dataset) = read_dataset(&args.data)?;
    let Some(sample) = dataset.samples.get(args.sample) else {
        bail!(
            "unknown sample id {}: the dataset has {} samples (ids 0..{})",
            args.sample,
            dataset.len(),
            dataset.len().saturating_sub(1)
        );
    };
    check_schema(&snap, &dataset.schema)?;
    let model = DelModel::from_snapshot(&snap)?;
    let prepared = model.prepare_one(sample, &dataset.schema)?;
    let pred = model.predict(&prepared)?;
    let ex = explain_prediction(&model.net, &pred.f, &pred.touched);
    let dropped: Vec<usize> = pred
        .mask
        .as_deref()
        .map(|m| keep_rows(m).iter().enumerate().filter(|(_, &k)| !k).map(|(i, _)| i).collect())
        .unwrap_or_default();

    if as_json {
        return print_json(&json!({
            "sample": args.sample,
            "actual": sample.y,
            "predicted": pred.label,
            "dropped_rows": dropped,
            "expert_theta": snap.rules.theta,
            "explanation": ex,
        }));
    }
    println!(
        "sample {}: actual {}, predicted {} (network output {:+.4})",
        args.sample,
        label_name(sample.y),
        label_name(pred.label),
        ex.output
    );
    match &pred.mask {
        Some(_) => println!("rows dropped by the assessing model: {} of {} {:?}", dropped.len(), sample.len(), dropped),
        None => println!("rows dropped by the assessing model: none (masks inactive)"),
    }
    println!(
        "{:>4} {:>5} {:>6} {:>10} {:>10} {:>10} {:>8}  status",
        "leaf", "meas", "dir", "value", "threshold", "expert", "score"
    );
    for l in &ex.leaves {
        let dir = match l.direction {
            del_core::rule_dsl::Direction::Below => "below",
            del_core::rule_dsl::Direction::Above => "above",
        };
        println!(
            "{:>4} {:>5} {:>6} {:>10.4} {:>10.4} {:>10.4} {:>+8.4}  {}",
            l.leaf,
            format!("m{}", l.measurement),
            dir,
            l.f,
            l.theta,
            snap.rules.theta[l.measurement],
            l.score,
            if l.violated { "violated" } else { "ok" }
        );
    }
    println!("deciding leaves: {:?}", ex.argmin_leaves);
    println!("critical rows: {:?}", ex.critical_rows);
    if !sample.y_feat.is_empty() {
        println!("labeled critical rows: {:?}", sample.y_feat);
    }
    Ok(())
}
