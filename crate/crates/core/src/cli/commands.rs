use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::report::{report_tables, Table};
use super::{data, reports_path, AnalyzeArgs, CliError, Command, FuzzArgs, GenCorpusArgs, PredictArgs, ReportArgs, TrainArgs, TriageArgs};
use crate::bench::{read_corpus_jsonl, write_bundle};
use crate::distance::{nearest_anchored_line, resolve_targets, DistanceMap, TargetError, TargetSpec};
use crate::fuzz::{read_campaign_dir, run_campaign, write_campaign_dir, CampaignConfig, CampaignDir, CampaignError, Mode};
use crate::predictor::{
    extract_attention_targets, split_functions, tokenize_function, train, AttentionReport, Model, TokenSeq, TrainConfig,
};
use crate::vm::{parse_program, Program};

fn say(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(data("stdout"))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(data(path.display()))
}

fn write_file(path: &Path, text: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, text).map_err(data(path.display()))
}

fn mkdir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(data(path.display()))
}

pub fn load_program(path: &Path) -> Result<Program, CliError> {
    parse_program(&read_text(path)?).map_err(data(path.display()))
}

fn load_targets(path: &Path) -> Result<TargetSpec, CliError> {
    TargetSpec::from_json(&read_text(path)?).map_err(data(path.display()))
}

/// Regular files of `dir`, sorted by name.
pub fn read_seed_dir(dir: &Path) -> Result<Vec<Vec<u8>>, CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(data(dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Data(format!("{}: no seed files", dir.display())));
    }
    paths.iter().map(|p| fs::read(p).map_err(data(p.display()))).collect()
}

pub(super) fn validate(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Fuzz(a) => {
            if a.mode == Mode::Directed && a.targets.is_none() {
                return Err(CliError::Usage("directed mode requires --targets".into()));
            }
            if !(a.timeout >= 0.0 && a.timeout.is_finite()) {
                return Err(CliError::Usage("--timeout must be a finite non-negative number".into()));
            }
            if a.step_limit == 0 {
                return Err(CliError::Usage("--step-limit must be positive".into()));
            }
        }
        Command::Predict(a) if !(0.0..=1.0).contains(&a.threshold) => {
            return Err(CliError::Usage("--threshold must lie in [0, 1]".into()));
        }
        Command::PredictTrain(a) if a.epochs == 0 || a.batch == 0 || !(a.lr > 0.0) => {
            return Err(CliError::Usage("--epochs, --batch and --lr must be positive".into()));
        }
        _ => {}
    }
    Ok(())
}

pub(super) fn analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let program = load_program(&a.program)?;
    let spec = load_targets(&a.targets)?;
    let mut report = String::new();
    let unresolved_lines = |list: &[(String, u32)], report: &mut String| {
        for (file, line) in list {
            let hint = match nearest_anchored_line(&program, file, *line) {
                Some(n) => format!("nearest anchored line {file}:{n}"),
                None => format!("no anchored lines in {file}"),
            };
            let _ = writeln!(report, "unresolved {file}:{line} ({hint})");
        }
    };
    let resolved = match resolve_targets(&program, &spec, a.radius) {
        Ok(r) => r,
        Err(TargetError::NoTargets { unresolved }) => {
            unresolved_lines(&unresolved, &mut report);
            mkdir(&a.out)?;
            write_file(&a.out.join("resolution.txt"), &report)?;
            return Err(CliError::Data(format!("no target resolved to a block\n{}", report.trim_end())));
        }
        Err(e) => return Err(CliError::Data(e.to_string())),
    };
    let _ = writeln!(
        report,
        "resolved {} of {} targets to {} blocks in {} functions",
        spec.entries().len() - resolved.unresolved.len(),
        spec.entries().len(),
        resolved.target_blocks.len(),
        resolved.target_functions.len()
    );
    unresolved_lines(&resolved.unresolved, &mut report);
    let dmap = DistanceMap::compute(&program, &resolved);
    let mut functions = String::from("function,distance\n");
    for (f, d) in program.functions.iter().zip(&dmap.function_distance) {
        let _ = writeln!(functions, "{},{}", f.name, d.map(|d| d.to_string()).unwrap_or_default());
    }
    mkdir(&a.out)?;
    write_file(&a.out.join("block_distances.csv"), dmap.to_csv(&program))?;
    write_file(&a.out.join("function_distances.csv"), functions)?;
    write_file(&a.out.join("resolution.txt"), &report)?;
    say(out, &report)
}

fn corpus_seqs(path: &Path) -> Result<Vec<TokenSeq>, CliError> {
    let text = read_text(path)?;
    let corpus =
        read_corpus_jsonl(&text).map_err(|(line, e)| CliError::Data(format!("{}:{line}: {e}", path.display())))?;
    Ok(corpus.iter().map(|f| f.to_seq()).collect())
}

pub(super) fn predict_train(a: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let seqs = corpus_seqs(&a.corpus)?;
    let cfg = TrainConfig { epochs: a.epochs, batch: a.batch, lr: a.lr, rng_seed: a.rng_seed, ..TrainConfig::default() };
    let crate::predictor::Trained { model, metrics, .. } = train(&seqs, &cfg).map_err(data(a.corpus.display()))?;
    model.save(&a.out).map_err(data("model"))?;
    let json = serde_json::to_string_pretty(&metrics).expect("metrics serialize") + "\n";
    write_file(&super::sibling(&a.out, "metrics.json"), &json)?;
    say(
        out,
        &format!(
            "held-out precision {:.4} recall {:.4} F1 {:.4}\nmodel written to {}\n",
            metrics.precision,
            metrics.recall,
            metrics.f1,
            a.out.display()
        ),
    )
}

/// Attention reports for every function of `text` and the targets they
/// yield. Text without `fn` headers is one function in `file`.
pub fn predict_targets(
    model: &Model,
    text: &str,
    file: &str,
    top_k: usize,
    threshold: f64,
) -> Result<(Vec<AttentionReport>, TargetSpec), CliError> {
    let mut chunks = split_functions(text);
    if chunks.is_empty() {
        chunks.push(text.to_string());
    }
    let mut reports = Vec::new();
    for chunk in &chunks {
        let seq = tokenize_function(chunk, file, 1).map_err(data(file))?;
        reports.push(model.report(&seq, top_k.max(10)).map_err(data(&seq.function_name))?);
    }
    let spec = extract_attention_targets(&reports, top_k, threshold);
    Ok((reports, spec))
}

pub(super) fn predict(a: &PredictArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = Model::load(&a.model).map_err(data("model"))?;
    let text = read_text(&a.program)?;
    let file = a.program.file_name().map_or_else(|| "input".into(), |n| n.to_string_lossy().into_owned());
    let (reports, spec) = predict_targets(&model, &text, &file, a.top_k, a.threshold)?;
    write_file(&a.out, spec.to_json() + "\n")?;
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n";
    write_file(&reports_path(a), json)?;
    let mut text = String::new();
    for r in &reports {
        let _ = writeln!(text, "{:<32} p={:.4}", r.function_name, r.probability);
    }
    for e in spec.entries() {
        let _ = writeln!(text, "target {}:{} score {:.4}", e.file, e.line, e.score);
    }
    say(out, &text)
}

pub fn campaign_config(a: &FuzzArgs, targets: Option<TargetSpec>) -> CampaignConfig {
    CampaignConfig {
        mode: a.mode,
        timeout: a.timeout,
        step_limit: a.step_limit,
        rng_seed: a.rng_seed,
        target_spec: targets,
        radius: a.radius,
        max_execs: a.max_execs,
        exit_on_fault: a.exit_on_fault,
        clock: a.clock.into(),
        deterministic: !a.no_deterministic,
        ..CampaignConfig::default()
    }
}

pub(super) fn fuzz(a: &FuzzArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let program = load_program(&a.program)?;
    let targets = match (&a.targets, a.mode) {
        (Some(_), Mode::CoverageOnly) => {
            eprintln!("warning: --targets is ignored in coverage_only mode");
            None
        }
        (Some(p), Mode::Directed) => Some(load_targets(p)?),
        (None, _) => None,
    };
    let seeds = match &a.seed_dir {
        Some(dir) => read_seed_dir(dir)?,
        None => vec![Vec::new()],
    };
    let cfg = campaign_config(a, targets);
    let result = run_campaign(&program, &cfg, &seeds).map_err(|e| match e {
        CampaignError::MissingTargets => CliError::Usage(e.to_string()),
        e => CliError::Data(e.to_string()),
    })?;
    for sub in ["queue", "crashes", "hangs"] {
        let dir = a.out.join(sub);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(data(dir.display()))?;
        }
    }
    write_campaign_dir(&a.out, &program.name, &cfg, &result).map_err(|e| CliError::Data(e.to_string()))?;
    let st = &result.stats;
    say(
        out,
        &format!(
            "{} {}: {} execs, {} paths, {} unique crashes ({} bugs), {} hangs\n",
            program.name,
            cfg.mode.as_str(),
            st.execs_done,
            st.paths_total,
            st.unique_crashes,
            st.unique_bugs,
            st.unique_hangs
        ),
    )
}

fn read_dir_or_fail(dir: &Path) -> Result<CampaignDir, CliError> {
    read_campaign_dir(dir).map_err(|e| CliError::Data(e.to_string()))
}

fn label(dir: &Path) -> String {
    dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// One row per campaign: unique (kind, site) pairs among its faults.
pub fn triage_table(runs: &[(String, CampaignDir)]) -> Table {
    let rows = runs
        .iter()
        .map(|(name, d)| {
            let program = d.stats.get("program").cloned().unwrap_or_default();
            let bugs: BTreeSet<_> = d.reports.iter().map(|r| r.bug_id()).collect();
            let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
            for (kind, _) in &bugs {
                *kinds.entry(kind.as_str()).or_default() += 1;
            }
            let kinds: Vec<String> = kinds.iter().map(|(k, n)| format!("{k}:{n}")).collect();
            vec![name.clone(), program, bugs.len().to_string(), kinds.join(";")]
        })
        .collect();
    Table {
        name: "bugs".into(),
        header: vec!["campaign".into(), "program".into(), "unique_bugs".into(), "kinds".into()],
        rows,
    }
}

pub(super) fn triage(a: &TriageArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let runs: Vec<(String, CampaignDir)> =
        a.dirs.iter().map(|d| Ok((label(d), read_dir_or_fail(d)?))).collect::<Result<_, CliError>>()?;
    let table = triage_table(&runs);
    if let Some(dir) = &a.out {
        mkdir(dir)?;
        write_file(&dir.join("bugs.csv"), table.csv())?;
        write_file(&dir.join("bugs.txt"), table.text())?;
    }
    say(out, &table.text())
}

pub(super) fn report(a: &ReportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let runs: Vec<(String, CampaignDir)> =
        a.dirs.iter().map(|d| Ok((label(d), read_dir_or_fail(d)?))).collect::<Result<_, CliError>>()?;
    let names: BTreeSet<&String> = runs.iter().map(|(n, _)| n).collect();
    if names.len() != runs.len() {
        return Err(CliError::Usage("campaign directories must have distinct names".into()));
    }
    mkdir(&a.out)?;
    let mut text = String::new();
    for t in report_tables(&runs) {
        write_file(&a.out.join(format!("{}.csv", t.name)), t.csv())?;
        text += &t.text();
        text.push('\n');
    }
    write_file(&a.out.join("report.txt"), &text)?;
    say(out, &text)
}

pub(super) fn gen_corpus(a: &GenCorpusArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let written = write_bundle(&a.out).map_err(data(a.out.display()))?;
    say(out, &format!("wrote {} files to {}\n", written.len(), a.out.display()))
}
