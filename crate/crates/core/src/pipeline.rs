//! Method dispatch: turn a corpus into a distance matrix (and, where the
//! method has them, representation vectors).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::kmer_profiles;
use crate::counts::CountMatrix;
use crate::dataset::{default_window, SequenceDataset};
use crate::distance::{
    distance_matrix, string_distance_matrix, DistanceMatrix, StringMetric, VectorMetric,
};
use crate::encoder::{encode_corpus, EncodeConfig, EncodedCorpus, Variant};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    NTreeClus(Variant),
    /// k-mer profiles; `None` picks `k` like the default window.
    Kmer(Option<usize>),
    Levenshtein,
    JaroWinkler,
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::NTreeClus(v) => v.label().to_string(),
            Method::Kmer(None) => "kmer".into(),
            Method::Kmer(Some(k)) => format!("kmer-{k}"),
            Method::Levenshtein => "levenshtein".into(),
            Method::JaroWinkler => "jaro-winkler".into(),
        }
    }

    pub fn has_vectors(&self) -> bool {
        matches!(self, Method::NTreeClus(_) | Method::Kmer(_))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if let Some(v) = Variant::ALL.iter().find(|v| v.label() == s) {
            return Ok(Method::NTreeClus(*v));
        }
        match s.as_str() {
            "kmer" => Ok(Method::Kmer(None)),
            "levenshtein" => Ok(Method::Levenshtein),
            "jaro-winkler" => Ok(Method::JaroWinkler),
            other => match other.strip_prefix("kmer-").map(str::parse::<usize>) {
                Some(Ok(k)) if k > 0 => Ok(Method::Kmer(Some(k))),
                _ => Err(Error::InvalidParameter(format!("unknown method `{other}`"))),
            },
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.label()
    }
}

/// Settings shared by every method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Window size for the tree encoders and `k` for `kmer`; `None` uses the
    /// corpus default.
    pub window: Option<usize>,
    pub trees: usize,
    pub seed: u64,
    pub metric: VectorMetric,
}

impl PipelineConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            window: None,
            trees: 10,
            seed,
            metric: VectorMetric::Cosine,
        }
    }
}

pub struct MethodOutput {
    pub distances: DistanceMatrix,
    pub vectors: Option<CountMatrix>,
    pub encoded: Option<EncodedCorpus>,
    /// Window or `k` actually used.
    pub window: Option<usize>,
}

/// Distances between the sequences of `ds` under `method`.
pub fn compute(ds: &SequenceDataset, method: Method, cfg: &PipelineConfig) -> Result<MethodOutput> {
    let ids = ds.ids();
    match method {
        Method::NTreeClus(variant) => {
            let mut enc = EncodeConfig::new(variant, cfg.seed);
            enc.window = cfg.window;
            enc.trees = cfg.trees;
            let encoded = encode_corpus(ds, &enc)?;
            let distances = distance_matrix(&encoded.representation.counts, &ids, cfg.metric)?;
            Ok(MethodOutput {
                distances,
                vectors: Some(encoded.representation.counts.clone()),
                window: Some(encoded.representation.window),
                encoded: Some(encoded),
            })
        }
        Method::Kmer(k) => {
            let k = match k.or(cfg.window) {
                Some(k) => k,
                None => kmer_default(ds),
            };
            let profiles = kmer_profiles(ds, k)?;
            let distances = distance_matrix(&profiles.counts, &ids, cfg.metric)?;
            Ok(MethodOutput {
                distances,
                vectors: Some(profiles.counts),
                encoded: None,
                window: Some(k),
            })
        }
        Method::Levenshtein | Method::JaroWinkler => {
            let metric = if method == Method::Levenshtein {
                StringMetric::Levenshtein
            } else {
                StringMetric::JaroWinkler
            };
            Ok(MethodOutput {
                distances: string_distance_matrix(ds, metric)?,
                vectors: None,
                encoded: None,
                window: None,
            })
        }
    }
}

/// `round(sqrt(mean length))` capped at the shortest sequence.
fn kmer_default(ds: &SequenceDataset) -> usize {
    default_window(ds).unwrap_or(1).clamp(1, ds.min_length())
}
