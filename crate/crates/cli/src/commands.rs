use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use vecfuse::{
    evaluate, export_projection_trace, fit as fit_model, load_dataset, objective_dccm,
    relaxed_objective, split, EvalReport, MultiModalDataset, ProjectionModel,
};

use crate::config::RunConfig;
use crate::{CliError, Context};

const MANIFEST: &str = "manifest.txt";

struct Data {
    train: MultiModalDataset,
    test: MultiModalDataset,
    has_split: bool,
}

fn load(cfg: &RunConfig) -> Result<Data, CliError> {
    let full = load_dataset(&cfg.x_path, &cfg.y_path, &cfg.label_column).context("loading data")?;
    log::info!(
        "loaded {} samples, {} classes, m = {}, p = {}",
        full.n_samples(),
        full.n_classes(),
        full.x_dim(),
        full.y_dim()
    );
    match cfg.split_spec() {
        Some(spec) => {
            let (train, test) = split(&full, &spec).context("splitting data")?;
            Ok(Data {
                train,
                test,
                has_split: true,
            })
        }
        None => Ok(Data {
            train: full.clone(),
            test: full,
            has_split: false,
        }),
    }
}

/// Refuses to clobber existing outputs unless `force` is set, then creates
/// the run directory.
fn prepare_outputs(cfg: &RunConfig, names: &[String]) -> Result<(), CliError> {
    if !cfg.force {
        let existing: Vec<&String> = names.iter().filter(|n| cfg.out_dir.join(n).exists()).collect();
        if !existing.is_empty() {
            let list: Vec<&str> = existing.iter().map(|s| s.as_str()).collect();
            return Err(CliError::Usage(format!(
                "{} already contains {}; pass --force to overwrite",
                cfg.out_dir.display(),
                list.join(", ")
            )));
        }
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(|source| CliError::Io {
        path: cfg.out_dir.clone(),
        source,
    })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Records every written file with the command and config hash that produced it.
fn update_manifest(cfg: &RunConfig, command: &str, names: &[String]) -> Result<(), CliError> {
    let path = cfg.out_dir.join(MANIFEST);
    let mut entries: BTreeMap<String, String> = BTreeMap::new();
    if let Ok(text) = std::fs::read_to_string(&path) {
        for line in text.lines() {
            if let Some((file, rest)) = line.split_once('\t') {
                entries.insert(file.to_string(), rest.to_string());
            }
        }
    }
    let hash = cfg.hash();
    for name in names {
        entries.insert(name.clone(), format!("{command}\t{hash}"));
    }
    let text: String = entries.iter().map(|(f, r)| format!("{f}\t{r}\n")).collect();
    write(&path, text)
}

fn model_path(cfg: &RunConfig, model: Option<PathBuf>) -> PathBuf {
    model.unwrap_or_else(|| cfg.out_dir.join("model.bin"))
}

fn fit_log(cfg: &RunConfig, model: &ProjectionModel, train: &MultiModalDataset) -> Result<String, CliError> {
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
    let mut s = String::new();
    let _ = writeln!(s, "config_hash={}", cfg.hash());
    let _ = writeln!(s, "seed={}", cfg.seed);
    let _ = writeln!(s, "method={}", model.method);
    let _ = writeln!(s, "code_length={}", model.code_length());
    let _ = writeln!(s, "n_train={}", train.n_samples());
    let _ = writeln!(s, "n_classes={}", train.n_classes());
    let _ = writeln!(s, "ridge_x={:e}", model.ridge_x);
    let _ = writeln!(s, "ridge_y={:e}", model.ridge_y);
    let _ = writeln!(s, "spectrum={}", join(&model.spectrum));
    let flags: Vec<&str> = model
        .degenerate
        .iter()
        .map(|&d| if d { "1" } else { "0" })
        .collect();
    let _ = writeln!(s, "degenerate={}", flags.join(" "));
    let _ = writeln!(s, "residual_trace={}", join(&model.residual_trace));
    let signed = objective_dccm(model, train).context("objective")?;
    let relaxed = relaxed_objective(model, train).context("objective")?;
    let _ = writeln!(s, "objective_signed={signed:e}");
    let _ = writeln!(s, "objective_relaxed={relaxed:e}");
    s.push_str("# config\n");
    s.push_str(&cfg.canonical());
    Ok(s)
}

pub fn fit(cfg: &RunConfig) -> Result<(), CliError> {
    let names = vec!["model.bin".to_string(), "fit_log.txt".to_string()];
    prepare_outputs(cfg, &names)?;
    let data = load(cfg)?;
    let model = fit_model(cfg.method, &data.train, cfg.code_length, cfg.ridge).context("fitting")?;
    write(&cfg.out_dir.join("model.bin"), model.to_bytes())?;
    write(&cfg.out_dir.join("fit_log.txt"), fit_log(cfg, &model, &data.train)?)?;
    update_manifest(cfg, "fit", &names)?;
    println!(
        "fitted {} with code length {}; leading value {:e}",
        model.method,
        model.code_length(),
        model.spectrum.first().copied().unwrap_or(0.0)
    );
    Ok(())
}

fn report_names(suffix: &str) -> Vec<String> {
    vec![
        format!("report{suffix}.txt"),
        format!("report{suffix}.json"),
        format!("confusion{suffix}.csv"),
    ]
}

fn write_report(cfg: &RunConfig, suffix: &str, report: &EvalReport) -> Result<(), CliError> {
    let names = report_names(suffix);
    let mut kv = format!("config_hash={}\n", cfg.hash());
    kv.push_str(&report.to_key_value());
    write(&cfg.out_dir.join(&names[0]), kv)?;
    write(&cfg.out_dir.join(&names[1]), report.to_json())?;
    write(&cfg.out_dir.join(&names[2]), report.confusion_csv())?;
    Ok(())
}

pub fn eval(
    cfg: &RunConfig,
    model: Option<PathBuf>,
    l_sweep: Option<RangeInclusive<usize>>,
) -> Result<(), CliError> {
    let model = ProjectionModel::load(model_path(cfg, model)).context("reading model")?;
    let lengths: Vec<(usize, String)> = match l_sweep {
        Some(range) => {
            if *range.end() > model.code_length() {
                return Err(CliError::Usage(format!(
                    "L sweep up to {} exceeds the model's code length {}",
                    range.end(),
                    model.code_length()
                )));
            }
            range.map(|l| (l, format!("_L{l}"))).collect()
        }
        None => vec![(model.code_length(), String::new())],
    };
    let names: Vec<String> = lengths.iter().flat_map(|(_, s)| report_names(s)).collect();
    prepare_outputs(cfg, &names)?;
    let data = load(cfg)?;
    if !data.has_split {
        log::warn!("no split configured; evaluating on the training data");
    }
    let opts = cfg.eval_options();
    for (l, suffix) in &lengths {
        let m = model.truncated(*l).context("truncating model")?;
        let report = evaluate(&m, &data.train, &data.test, &opts).context("evaluating")?;
        write_report(cfg, suffix, &report)?;
        println!(
            "L={} accuracy={:.6} fisher_criterion={:e}",
            l, report.accuracy, report.fisher_criterion
        );
    }
    update_manifest(cfg, "eval", &names)
}

pub fn visualize(cfg: &RunConfig, model: Option<PathBuf>) -> Result<(), CliError> {
    let model = ProjectionModel::load(model_path(cfg, model)).context("reading model")?;
    let data = load(cfg)?;
    let mut names = vec!["trace_train.csv".to_string()];
    if data.has_split {
        names.push("trace_test.csv".to_string());
    }
    prepare_outputs(cfg, &names)?;
    export_projection_trace(&model, &data.train, cfg.out_dir.join(&names[0])).context("writing trace")?;
    if data.has_split {
        export_projection_trace(&model, &data.test, cfg.out_dir.join(&names[1]))
            .context("writing trace")?;
    }
    update_manifest(cfg, "visualize", &names)?;
    println!("wrote {}", names.join(", "));
    Ok(())
}

pub fn sweep(cfg: &RunConfig, range: RangeInclusive<usize>) -> Result<(), CliError> {
    let mut names: Vec<String> = range
        .clone()
        .flat_map(|l| {
            let mut n = report_names(&format!("_L{l}"));
            n.push(format!("model_L{l}.bin"));
            n
        })
        .collect();
    names.push("sweep.csv".to_string());
    prepare_outputs(cfg, &names)?;
    let data = load(cfg)?;
    let opts = cfg.eval_options();
    let mut summary = String::from("code_length,accuracy,fisher_criterion,hamming_reconstruction_error\n");
    for l in range {
        let model = fit_model(cfg.method, &data.train, Some(l), cfg.ridge).context("fitting")?;
        let report = evaluate(&model, &data.train, &data.test, &opts).context("evaluating")?;
        write(&cfg.out_dir.join(format!("model_L{l}.bin")), model.to_bytes())?;
        write_report(cfg, &format!("_L{l}"), &report)?;
        let _ = writeln!(
            summary,
            "{l},{},{},{}",
            report.accuracy, report.fisher_criterion, report.hamming_reconstruction_error
        );
        println!("L={l} accuracy={:.6}", report.accuracy);
    }
    write(&cfg.out_dir.join("sweep.csv"), summary)?;
    update_manifest(cfg, "sweep", &names)
}
