//! File formats: JSON-lines corpora and features, vocabulary and weight
//! files, checkpoints, ensemble specs, and the per-run manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::policy::{PolicyDims, PolicyParams};
use crate::reward::HybridWeights;
use crate::text_preprocess::{Caption, Language, Vocabulary};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Deserialize)]
struct CandidateLine {
    id: String,
    caption: String,
    language: Option<Language>,
}

#[derive(Deserialize)]
struct RefsLine {
    id: String,
    refs: Vec<String>,
    language: Option<Language>,
}

#[derive(Deserialize)]
struct FeatureLine {
    id: String,
    feature: Vec<f64>,
}

fn read_jsonl<T, F>(path: &Path, mut handle: F) -> Result<()>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(T) -> Result<()>,
{
    let file = File::open(path)?;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: T =
            serde_json::from_str(&line).map_err(|source| Error::JsonLine {
                line: idx + 1,
                source,
            })?;
        handle(value)?;
    }
    Ok(())
}

/// Reads a candidate corpus: one `{"id", "caption"}` object per line. A
/// per-line `"language"` field overrides the default.
pub fn read_candidates(path: &Path, default_language: Language) -> Result<Vec<Caption>> {
    let mut captions = Vec::new();
    read_jsonl(path, |line: CandidateLine| {
        let language = line.language.unwrap_or(default_language);
        captions.push(Caption::new(line.id, &line.caption, language));
        Ok(())
    })?;
    Ok(captions)
}

/// A reference corpus entry: the tokenized reference set plus its language.
#[derive(Debug, Clone)]
pub struct RefEntry {
    pub refs: Vec<Vec<String>>,
    pub language: Language,
}

/// Reads a reference corpus: one `{"id", "refs": [...]}` object per line.
pub fn read_refs(path: &Path, default_language: Language) -> Result<BTreeMap<String, RefEntry>> {
    let mut out = BTreeMap::new();
    read_jsonl(path, |line: RefsLine| {
        let language = line.language.unwrap_or(default_language);
        let refs: Vec<Vec<String>> = line
            .refs
            .iter()
            .map(|raw| Caption::new("", raw, language).tokens)
            .collect();
        out.insert(line.id, RefEntry { refs, language });
        Ok(())
    })?;
    Ok(out)
}

/// Reads input features: one `{"id", "feature": [...]}` object per line.
pub fn read_features(path: &Path) -> Result<Vec<(String, Array1<f64>)>> {
    let mut out = Vec::new();
    read_jsonl(path, |line: FeatureLine| {
        out.push((line.id, Array1::from_vec(line.feature)));
        Ok(())
    })?;
    Ok(out)
}

pub fn load_vocabulary(path: &Path) -> Result<Vocabulary> {
    let value: serde_json::Value = serde_json::from_reader(File::open(path)?)?;
    Vocabulary::from_json(&value)
}

pub fn save_vocabulary(path: &Path, vocab: &Vocabulary) -> Result<()> {
    let mut file = File::create(path)?;
    serde_json::to_writer_pretty(&mut file, &vocab.to_json())?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<HybridWeights> {
    let weights: HybridWeights = serde_json::from_reader(File::open(path)?)?;
    weights.validate()?;
    Ok(weights)
}

/// A trained policy bundled with the vocabulary and language it was trained
/// on. Matrices are stored row-major in one flat vector.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub dims: PolicyDims,
    pub language: Language,
    pub vocab: serde_json::Value,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(params: &PolicyParams, vocab: &Vocabulary, language: Language) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            dims: params.dims(),
            language,
            vocab: vocab.to_json(),
            params: params.flat().to_vec(),
        }
    }

    pub fn into_parts(self) -> Result<(PolicyParams, Vocabulary, Language)> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported checkpoint format version {}",
                self.format_version
            )));
        }
        let vocab = Vocabulary::from_json(&self.vocab)?;
        if vocab.len() != self.dims.vocab {
            return Err(Error::DimensionMismatch(format!(
                "checkpoint vocab has {} tokens, dims say {}",
                vocab.len(),
                self.dims.vocab
            )));
        }
        let params = PolicyParams::from_flat(self.dims, self.params)?;
        Ok((params, vocab, self.language))
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut file = File::create(path)?;
    serde_json::to_writer(&mut file, ckpt)?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Ok(serde_json::from_reader(File::open(path)?)?)
}

/// Ensemble spec file: member checkpoint paths plus weights ("uniform" or an
/// explicit list).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSpecFile {
    pub members: Vec<String>,
    #[serde(default)]
    pub weights: EnsembleSpecWeights,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnsembleSpecWeights {
    #[default]
    #[serde(skip)]
    Missing,
    Named(String),
    Explicit(Vec<f64>),
}

pub fn load_ensemble_spec(path: &Path) -> Result<EnsembleSpecFile> {
    Ok(serde_json::from_reader(File::open(path)?)?)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut file = File::open(path)?;
    std::io::copy(&mut file, &mut hasher)?;
    Ok(format!("{:x}", hasher.finalize()))
}

/// Provenance record written next to every output artifact. Reruns with an
/// identical manifest reproduce the outputs byte for byte.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub toolkit_version: String,
    pub checkpoint_format_version: u32,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub input_digests: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            checkpoint_format_version: CHECKPOINT_FORMAT_VERSION,
            seed,
            config,
            input_digests: BTreeMap::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.input_digests
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Writes `<out>.manifest.json` next to the primary output.
    pub fn write_beside(&self, out: &Path) -> Result<()> {
        let mut path = out.as_os_str().to_owned();
        path.push(".manifest.json");
        let mut file = File::create(Path::new(&path))?;
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_candidates_with_language_override() {
        let f = write_tmp(concat!(
            "{\"id\":\"a\",\"caption\":\"A Man Runs.\"}\n",
            "{\"id\":\"b\",\"caption\":\"一个 人\",\"language\":\"chinese\"}\n",
        ));
        let caps = read_candidates(f.path(), Language::English).unwrap();
        assert_eq!(caps[0].tokens, vec!["a", "man", "runs", "."]);
        assert_eq!(caps[1].tokens, vec!["一个", "人"]);
        assert_eq!(caps[1].language, Language::Chinese);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_tmp("{\"id\":\"a\",\"caption\":\"x\"}\nnot json\n");
        let err = read_candidates(f.path(), Language::English).unwrap_err();
        match err {
            Error::JsonLine { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn checkpoint_round_trips() {
        let dims = PolicyDims {
            vocab: 5,
            hidden: 3,
            feature: 2,
        };
        let vocab_corpus = vec![Caption::new("x", "a", Language::English)];
        let vocab = Vocabulary::build(&vocab_corpus, 1).unwrap();
        let params = PolicyParams::init(dims, 9);
        let ckpt = Checkpoint::new(&params, &vocab, Language::English);
        let f = tempfile::NamedTempFile::new().unwrap();
        save_checkpoint(f.path(), &ckpt).unwrap();
        let (restored, restored_vocab, lang) =
            load_checkpoint(f.path()).unwrap().into_parts().unwrap();
        assert_eq!(restored.flat(), params.flat());
        assert_eq!(restored_vocab, vocab);
        assert_eq!(lang, Language::English);
    }

    #[test]
    fn ensemble_spec_parses_both_weight_forms() {
        let f = write_tmp("{\"members\":[\"a\",\"b\"],\"weights\":\"uniform\"}");
        let spec = load_ensemble_spec(f.path()).unwrap();
        assert!(matches!(spec.weights, EnsembleSpecWeights::Named(ref s) if s == "uniform"));
        let f2 = write_tmp("{\"members\":[\"a\",\"b\"],\"weights\":[0.3,0.7]}");
        let spec2 = load_ensemble_spec(f2.path()).unwrap();
        assert!(matches!(spec2.weights, EnsembleSpecWeights::Explicit(_)));
    }
}
