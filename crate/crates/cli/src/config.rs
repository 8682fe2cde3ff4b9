//! Run configuration: a flat `key=value` file overlaid by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use vecfuse::{Distance, EvalOptions, FusionRule, Method, Ridge, SplitSpec};

use crate::CliError;

/// Split requested on the command line or in the config file.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitChoice {
    None,
    PerClass(usize),
    Fraction(f64),
    IndexFile(PathBuf),
}

impl std::str::FromStr for SplitChoice {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Usage(format!(
            "split `{s}` not understood (none | per_class:K | fraction:F | index_file:PATH)"
        ));
        if s == "none" {
            return Ok(SplitChoice::None);
        }
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "per_class" => value.parse().map(SplitChoice::PerClass).map_err(|_| bad()),
            "fraction" => value.parse().map(SplitChoice::Fraction).map_err(|_| bad()),
            "index_file" => Ok(SplitChoice::IndexFile(PathBuf::from(value))),
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for SplitChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplitChoice::None => write!(f, "none"),
            SplitChoice::PerClass(k) => write!(f, "per_class:{k}"),
            SplitChoice::Fraction(v) => write!(f, "fraction:{v}"),
            SplitChoice::IndexFile(p) => write!(f, "index_file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub x_path: PathBuf,
    pub y_path: PathBuf,
    pub label_column: String,
    pub method: Method,
    /// `L` for dccm, `Q` for dnccm; `None` picks the solver default.
    pub code_length: Option<usize>,
    pub ridge: Ridge,
    pub split: SplitChoice,
    pub fusion: FusionRule,
    pub k: usize,
    pub hamming: bool,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub force: bool,
}

pub const KEYS: &[&str] = &[
    "x_path",
    "y_path",
    "label_column",
    "method",
    "code_length",
    "ridge",
    "split",
    "fusion",
    "k",
    "hamming",
    "seed",
    "out_dir",
    "force",
];

/// Reads `key=value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", i + 1)))?;
        let key = k.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Usage(format!("config line {}: unknown key `{key}`", i + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Usage(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

impl RunConfig {
    /// Builds a config from merged `key=value` settings (flags already applied
    /// on top of the file). Paths in a config file are taken relative to the
    /// file's directory.
    pub fn from_settings(settings: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let get = |k: &str| settings.get(k).map(String::as_str);
        let require = |k: &str| {
            get(k).ok_or_else(|| CliError::Usage(format!("missing required setting `{k}`")))
        };
        let method: Method = get("method").map_or(Ok(Method::Dccm), |v| {
            v.parse().map_err(|e: vecfuse::Error| CliError::Usage(e.to_string()))
        })?;
        let code_length = match get("code_length") {
            None | Some("auto") => None,
            Some(v) => {
                let l: usize = parse("code_length", v)?;
                if l == 0 {
                    return Err(CliError::Usage("`code_length` must be at least 1".into()));
                }
                Some(l)
            }
        };
        let ridge = get("ridge").map_or(Ok(Ridge::Auto), |v| {
            v.parse().map_err(|e: vecfuse::Error| CliError::Usage(e.to_string()))
        })?;
        let fusion = get("fusion").map_or(Ok(FusionRule::Concat), |v| {
            v.parse().map_err(|e: vecfuse::Error| CliError::Usage(e.to_string()))
        })?;
        let k = get("k").map_or(Ok(1), |v| parse("k", v))?;
        if k == 0 {
            return Err(CliError::Usage("`k` must be at least 1".into()));
        }
        Ok(Self {
            x_path: PathBuf::from(require("x_path")?),
            y_path: PathBuf::from(require("y_path")?),
            label_column: get("label_column").unwrap_or("label").to_string(),
            method,
            code_length,
            ridge,
            split: get("split").map_or(Ok(SplitChoice::None), str::parse)?,
            fusion,
            k,
            hamming: get("hamming").map_or(Ok(false), |v| parse_bool("hamming", v))?,
            seed: get("seed").map_or(Ok(0), |v| parse("seed", v))?,
            out_dir: PathBuf::from(get("out_dir").unwrap_or("run")),
            force: get("force").map_or(Ok(false), |v| parse_bool("force", v))?,
        })
    }

    pub fn split_spec(&self) -> Option<SplitSpec> {
        match &self.split {
            SplitChoice::None => None,
            SplitChoice::PerClass(count) => Some(SplitSpec::PerClassCount {
                count: *count,
                seed: self.seed,
            }),
            SplitChoice::Fraction(fraction) => Some(SplitSpec::Fraction {
                fraction: *fraction,
                seed: self.seed,
            }),
            SplitChoice::IndexFile(p) => Some(SplitSpec::ByIndexFile(p.clone())),
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            fusion: self.fusion,
            k: self.k,
            distance: if self.hamming {
                Distance::Hamming
            } else {
                Distance::Euclidean
            },
        }
    }

    /// Canonical `key=value` rendering of every setting that affects results.
    pub fn canonical(&self) -> String {
        let ridge = match self.ridge {
            Ridge::Auto => "auto".to_string(),
            Ridge::Fixed(v) => v.to_string(),
        };
        let code_length = self
            .code_length
            .map_or("auto".to_string(), |l| l.to_string());
        [
            ("x_path", self.x_path.display().to_string()),
            ("y_path", self.y_path.display().to_string()),
            ("label_column", self.label_column.clone()),
            ("method", self.method.to_string()),
            ("code_length", code_length),
            ("ridge", ridge),
            ("split", self.split.to_string()),
            ("fusion", self.fusion.as_str().to_string()),
            ("k", self.k.to_string()),
            ("hamming", self.hamming.to_string()),
            ("seed", self.seed.to_string()),
        ]
        .iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect()
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

/// Loads a config file, resolving relative data paths against its directory.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    let mut settings = parse_config_text(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for key in ["x_path", "y_path", "out_dir"] {
        if let Some(v) = settings.get_mut(key) {
            let p = Path::new(v.as_str());
            if p.is_relative() {
                *v = base.join(p).display().to_string();
            }
        }
    }
    if let Some(v) = settings.get_mut("split") {
        if let Some(rest) = v.strip_prefix("index_file:") {
            if Path::new(rest).is_relative() {
                *v = format!("index_file:{}", base.join(rest).display());
            }
        }
    }
    Ok(settings)
}
