//! Layered run configuration.
//!
//! Files hold one `section.key = value` assignment per line; `#` starts a
//! comment. Values are numbers, booleans, bare strings, or comma-separated
//! lists. Resolution order is defaults, then the file, then overrides. A key
//! without a section resolves to the unique full key ending in `.key`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::annotate::{AnnotationConfig, AnnotatorKind};
use crate::corpus::{generate_synthetic, load_trec, Collection, SyntheticSpec};
use crate::error::{FwlError, Result};
use crate::pipeline::{TeacherConfig, ToyConfig, TrainingConfig};
use crate::student::{LossConfig, LrSchedule, StudentArch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Directory holding `docs.tsv`, `queries.tsv` and `qrels.txt`; empty
    /// means generate the synthetic corpus.
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotateSection {
    /// `bm25`, `tfidf`, `bto` or `synthetic:<quality>`.
    pub annotator: String,
    pub pool_size: usize,
    pub max_pairs_per_query: usize,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
    pub epochs_step1: usize,
    pub epochs_step3: usize,
    pub eta0: f64,
    pub decay: f64,
    pub beta: f64,
    pub l2_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub folds: usize,
    pub val_fraction: f64,
    /// Strong pairs drawn per training query (0 = all).
    pub strong_pairs_per_query: usize,
    pub pool_depth: usize,
    /// Number of seeds for multi-seed commands (`seed`, `seed + 1`, ...).
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub betas: Vec<f64>,
    /// Annotators compared by `sensitivity`.
    pub annotators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub data: DataSection,
    pub corpus: SyntheticSpec,
    pub annotate: AnnotateSection,
    pub train: TrainSection,
    pub teacher: TeacherConfig,
    pub eval: EvalSection,
    pub sweep: SweepSection,
    pub toy: ToyConfig,
    pub run: RunSection,
}

impl Default for Config {
    fn default() -> Self {
        let arch = StudentArch::default();
        let sched = LrSchedule::default();
        let ann = AnnotationConfig::default();
        Self {
            data: DataSection { dir: String::new() },
            corpus: SyntheticSpec::default(),
            annotate: AnnotateSection {
                annotator: "bm25".into(),
                pool_size: ann.pool_size,
                max_pairs_per_query: ann.max_pairs_per_query,
                tau: ann.tau,
            },
            train: TrainSection {
                embed_dim: arch.embed_dim,
                hidden: arch.hidden,
                epochs_step1: 5,
                epochs_step3: 3,
                eta0: sched.eta0,
                decay: sched.decay,
                beta: sched.beta,
                l2_lambda: LossConfig::default().l2_lambda,
            },
            teacher: TeacherConfig::default(),
            eval: EvalSection { folds: 3, val_fraction: 0.2, strong_pairs_per_query: 5, pool_depth: 200, seeds: 1 },
            sweep: SweepSection {
                betas: vec![0.0, 1.0, 5.0, 20.0, 50.0, 200.0],
                annotators: ["synthetic:0.6", "synthetic:0.7", "synthetic:0.8", "synthetic:0.9"]
                    .map(String::from)
                    .to_vec(),
            },
            toy: ToyConfig::default(),
            run: RunSection { seed: 42 },
        }
    }
}

fn config_err(key: &str, msg: impl Into<String>) -> FwlError {
    FwlError::Config { key: key.to_string(), msg: msg.into() }
}

impl Config {
    pub fn annotator(&self) -> Result<AnnotatorKind> {
        self.annotate.annotator.parse().map_err(|e: FwlError| config_err("annotate.annotator", e.to_string()))
    }

    pub fn annotators(&self) -> Result<Vec<AnnotatorKind>> {
        self.sweep
            .annotators
            .iter()
            .map(|a| a.parse().map_err(|e: FwlError| config_err("sweep.annotators", e.to_string())))
            .collect()
    }

    pub fn annotation(&self) -> AnnotationConfig {
        AnnotationConfig {
            pool_size: self.annotate.pool_size,
            max_pairs_per_query: self.annotate.max_pairs_per_query,
            tau: self.annotate.tau,
        }
    }

    pub fn training(&self, seed: u64) -> TrainingConfig {
        let t = &self.train;
        TrainingConfig {
            arch: StudentArch { embed_dim: t.embed_dim, hidden: t.hidden.clone() },
            epochs_step1: t.epochs_step1,
            epochs_step3: t.epochs_step3,
            schedule: LrSchedule { eta0: t.eta0, decay: t.decay, beta: t.beta },
            loss: LossConfig { l2_lambda: t.l2_lambda },
            teacher: self.teacher,
            seed,
        }
    }

    /// Loads the TREC directory in `data.dir`, or generates the synthetic corpus.
    pub fn collection(&self) -> Result<Collection> {
        if self.data.dir.is_empty() {
            generate_synthetic(&self.corpus)
        } else {
            let dir = Path::new(&self.data.dir);
            load_trec(dir.join("docs.tsv"), dir.join("queries.tsv"), dir.join("qrels.txt"))
        }
    }

    /// Checks every constraint, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, msg: &str| if ok { Ok(()) } else { Err(config_err(key, msg)) };
        let t = &self.train;
        check(t.beta >= 0.0, "train.beta", "must be >= 0")?;
        check(t.eta0 > 0.0, "train.eta0", "must be > 0")?;
        check(t.decay >= 0.0, "train.decay", "must be >= 0")?;
        check(t.l2_lambda >= 0.0, "train.l2_lambda", "must be >= 0")?;
        check(t.epochs_step1 >= 1, "train.epochs_step1", "must be >= 1")?;
        check(t.epochs_step3 >= 1, "train.epochs_step3", "must be >= 1")?;
        check(t.embed_dim >= 1, "train.embed_dim", "must be >= 1")?;
        check(!t.hidden.contains(&0), "train.hidden", "widths must be >= 1")?;
        let th = &self.teacher;
        check(th.signal_var > 0.0, "teacher.signal_var", "must be > 0")?;
        check(th.length_scale >= 0.0, "teacher.length_scale", "must be >= 0 (0 = median heuristic)")?;
        check(th.noise_var >= 0.0, "teacher.noise_var", "must be >= 0")?;
        let a = &self.annotate;
        check(a.tau > 0.0, "annotate.tau", "must be > 0")?;
        check(a.pool_size >= 2, "annotate.pool_size", "must be >= 2")?;
        self.annotator()?;
        self.annotators()?;
        let e = &self.eval;
        check(e.folds >= 2, "eval.folds", "must be >= 2")?;
        check((0.0..1.0).contains(&e.val_fraction), "eval.val_fraction", "must lie in [0, 1)")?;
        check(e.pool_depth >= 1, "eval.pool_depth", "must be >= 1")?;
        check(e.seeds >= 1, "eval.seeds", "must be >= 1")?;
        check(self.sweep.betas.iter().all(|&b| b >= 0.0), "sweep.betas", "must be >= 0")?;
        self.corpus.validate().map_err(|e| config_err("corpus", e.to_string()))?;
        Ok(())
    }

    /// The resolved configuration as JSON.
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// `section.key = value` lines for every leaf, in a stable order.
    pub fn to_flat(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        flatten("", &self.to_json(), &mut out);
        out
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().map(scalar_text).collect();
            out.push((prefix.to_string(), parts.join(",")));
        }
        other => out.push((prefix.to_string(), scalar_text(other))),
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Parsed `key = value` assignments with their source line numbers.
pub fn parse_assignments(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| FwlError::Parse {
            file: "config".into(),
            line: i + 1,
            msg: format!("expected `section.key = value`, found {raw:?}"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Splits `key=value` override text.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| FwlError::InvalidArgument(format!("override `{s}` is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn leaf_keys(v: &Value, prefix: &str, out: &mut Vec<String>) {
    if let Value::Object(m) = v {
        for (k, v) in m {
            let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            if v.is_object() {
                leaf_keys(v, &key, out);
            } else {
                out.push(key);
            }
        }
    }
}

fn resolve_key(key: &str, known: &[String]) -> Result<String> {
    if known.iter().any(|k| k == key) {
        return Ok(key.to_string());
    }
    let suffix = format!(".{key}");
    let hits: Vec<&String> = known.iter().filter(|k| k.ends_with(&suffix)).collect();
    match hits.as_slice() {
        [one] => Ok((*one).clone()),
        [] => Err(config_err(key, "unknown configuration key")),
        many => Err(config_err(
            key,
            format!("ambiguous key; qualify it as one of {}", many.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")),
        )),
    }
}

fn typed_value(key: &str, current: &Value, text: &str) -> Result<Value> {
    let bad = |what: &str| config_err(key, format!("expected {what}, got `{text}`"));
    Ok(match current {
        Value::Bool(_) => Value::Bool(text.parse().map_err(|_| bad("true or false"))?),
        Value::Number(n) if n.is_u64() => Value::from(text.parse::<u64>().map_err(|_| bad("a non-negative integer"))?),
        Value::Number(n) if n.is_i64() => Value::from(text.parse::<i64>().map_err(|_| bad("an integer"))?),
        Value::Number(_) => {
            let v: f64 = text.parse().map_err(|_| bad("a number"))?;
            if !v.is_finite() {
                return Err(bad("a finite number"));
            }
            Value::from(v)
        }
        Value::String(_) => Value::String(text.to_string()),
        Value::Array(items) => {
            let parts: Vec<&str> = if text.is_empty() { Vec::new() } else { text.split(',').map(str::trim).collect() };
            let elem = items.first().cloned().unwrap_or(Value::from(0.0));
            Value::Array(parts.into_iter().map(|p| typed_value(key, &elem, p)).collect::<Result<_>>()?)
        }
        _ => return Err(bad("a scalar value")),
    })
}

fn set_path(root: &mut Value, key: &str, text: &str) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for p in &parts[..parts.len() - 1] {
        node = node.get_mut(*p).ok_or_else(|| config_err(key, "unknown configuration key"))?;
    }
    let leaf = parts[parts.len() - 1];
    let obj: &mut Map<String, Value> = node.as_object_mut().ok_or_else(|| config_err(key, "not a section"))?;
    let current = obj.get(leaf).ok_or_else(|| config_err(key, "unknown configuration key"))?;
    let v = typed_value(key, current, text)?;
    obj.insert(leaf.to_string(), v);
    Ok(())
}

/// Applies assignments on top of `base`, then validates.
pub fn apply(base: &Config, assignments: &[(String, String)]) -> Result<Config> {
    let mut value = base.to_json();
    let mut known = Vec::new();
    leaf_keys(&value, "", &mut known);
    for (k, v) in assignments {
        let full = resolve_key(k, &known)?;
        set_path(&mut value, &full, v)?;
    }
    let cfg: Config = serde_json::from_value(value).map_err(|e| config_err("config", e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Defaults, then the optional file, then `key=value` overrides.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<Config> {
    let mut assignments = match path {
        Some(p) => parse_assignments(&std::fs::read_to_string(p)?)?,
        None => Vec::new(),
    };
    for o in overrides {
        assignments.push(parse_override(o)?);
    }
    apply(&Config::default(), &assignments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_file_gives_defaults() {
        let f = file("# nothing here\n\n");
        assert_eq!(parse_config(Some(f.path()), &[]).unwrap(), Config::default());
    }

    #[test]
    fn overrides_beat_the_file() {
        let f = file("train.beta = 5.0\neval.folds = 4 # comment\n");
        let c = parse_config(Some(f.path()), &["beta=2.0".into()]).unwrap();
        assert_eq!(c.train.beta, 2.0);
        assert_eq!(c.eval.folds, 4);
    }

    #[test]
    fn negative_beta_names_the_key() {
        let e = parse_config(None, &["beta=-1".into()]).unwrap_err();
        assert!(e.to_string().contains("train.beta"), "{e}");
    }

    #[test]
    fn unknown_and_mistyped_keys_name_the_key() {
        let e = parse_config(None, &["train.gamma=1".into()]).unwrap_err();
        assert!(e.to_string().contains("train.gamma"), "{e}");
        let e = parse_config(None, &["eval.folds=three".into()]).unwrap_err();
        assert!(e.to_string().contains("eval.folds"), "{e}");
        let e = parse_config(None, &["seed=1".into()]).unwrap_err();
        assert!(e.to_string().contains("ambiguous"), "{e}");
        let e = parse_config(None, &["annotator=bogus".into()]).unwrap_err();
        assert!(e.to_string().contains("annotate.annotator"), "{e}");
    }

    #[test]
    fn lists_and_tuples() {
        let c = parse_config(None, &["hidden=8,4".into(), "corpus.doc_len=10,20".into(), "sweep.betas=".into()]).unwrap();
        assert_eq!(c.train.hidden, vec![8, 4]);
        assert_eq!(c.corpus.doc_len, (10, 20));
        assert!(c.sweep.betas.is_empty());
    }

    #[test]
    fn flat_form_round_trips() {
        let mut c = Config::default();
        c.train.beta = 3.25;
        c.annotate.annotator = "synthetic:0.7".into();
        let flat = c.to_flat();
        assert!(flat.iter().any(|(k, v)| k == "train.beta" && v == "3.25"));
        assert_eq!(apply(&Config::default(), &flat).unwrap(), c);
    }

    #[test]
    fn malformed_line() {
        assert!(parse_assignments("train.beta 2").is_err());
    }
}
