//! Bimodal feature datasets: planted synthetic tasks and the `BMNF` binary
//! feature-file format.
//!
//! `BMNF` layout, all little-endian:
//!
//! | field    | type            |
//! |----------|-----------------|
//! | magic    | `b"BMNF"`       |
//! | version  | u16 (= 1)       |
//! | N, N_I, N_S, C | u32 each  |
//! | labels   | u8 × N          |
//! | image    | f64 × N·N_I·C   |
//! | speech   | f64 × N·N_S·C   |
//! | crc32    | u32 over every preceding byte |

use std::collections::HashSet;
use std::fmt::Write as _;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"BMNF";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 * 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantedRule {
    /// `label = sign(u) xor sign(v)`, u carried by image, v by speech.
    XorCrossmodal,
    /// `label = sign(u)`; speech carries an unrelated latent.
    UnimodalImage,
    /// `label = sign(v)`; image carries an unrelated latent.
    UnimodalSpeech,
}

impl std::str::FromStr for PlantedRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xor" | "xor-crossmodal" => Ok(Self::XorCrossmodal),
            "image" | "unimodal-image" => Ok(Self::UnimodalImage),
            "speech" | "unimodal-speech" => Ok(Self::UnimodalSpeech),
            other => Err(Error::Config(format!("unknown planted rule {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Synthetic { spec: PlantedTaskSpec, seed: u64 },
    File { path: String, crc32: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedTaskSpec {
    pub rule: PlantedRule,
    pub image_nodes: usize,
    pub speech_nodes: usize,
    pub width: usize,
    pub image_signal_dims: Vec<usize>,
    pub speech_signal_dims: Vec<usize>,
    pub noise_sigma: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

impl Default for PlantedTaskSpec {
    fn default() -> Self {
        Self {
            rule: PlantedRule::XorCrossmodal,
            image_nodes: 2,
            speech_nodes: 2,
            width: 64,
            image_signal_dims: (0..4).collect(),
            speech_signal_dims: (0..4).collect(),
            noise_sigma: 0.1,
            n_train: 4096,
            n_val: 1024,
            n_test: 1024,
        }
    }
}

impl PlantedTaskSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.image_nodes == 0 || self.speech_nodes == 0 || self.width == 0 {
            return bad("node counts and width must be positive".into());
        }
        for d in self.image_signal_dims.iter().chain(&self.speech_signal_dims) {
            if *d >= self.width {
                return bad(format!("signal dim {d} outside width {}", self.width));
            }
        }
        if self.image_signal_dims.is_empty() || self.speech_signal_dims.is_empty() {
            return bad("each modality needs at least one signal dim".into());
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 {
            return bad("every split needs at least one sample".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BimodalDataset {
    /// `[n, N_I, C]`
    pub image: Tensor,
    /// `[n, N_S, C]`
    pub speech: Tensor,
    pub labels: Vec<u8>,
    pub split: Split,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSplits {
    pub train: BimodalDataset,
    pub val: BimodalDataset,
    pub test: BimodalDataset,
}

impl BimodalDataset {
    pub fn new(
        image: Tensor,
        speech: Tensor,
        labels: Vec<u8>,
        split: Split,
        provenance: Provenance,
    ) -> Result<Self> {
        let n = labels.len();
        if image.rank() != 3 || speech.rank() != 3 {
            return shape_err(format!(
                "features must be [n, nodes, C]: {:?}, {:?}",
                image.shape(),
                speech.shape()
            ));
        }
        if image.shape()[0] != n || speech.shape()[0] != n {
            return shape_err(format!(
                "{n} labels vs {} image rows and {} speech rows",
                image.shape()[0],
                speech.shape()[0]
            ));
        }
        if image.shape()[2] != speech.shape()[2] {
            return shape_err("modalities disagree on feature width".to_string());
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Contract(format!("label {l} is not binary")));
        }
        Ok(Self { image, speech, labels, split, provenance })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_nodes(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn speech_nodes(&self) -> usize {
        self.speech.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[2]
    }

    /// Gathers rows into `(image, speech, labels)` batch tensors.
    pub fn batch(&self, rows: &[usize]) -> Result<(Tensor, Tensor, Vec<usize>)> {
        let gather = |t: &Tensor| -> Result<Tensor> {
            let row = t.shape()[1] * t.shape()[2];
            let mut out = Vec::with_capacity(rows.len() * row);
            for &r in rows {
                out.extend_from_slice(&t.data()[r * row..(r + 1) * row]);
            }
            Tensor::new(vec![rows.len(), t.shape()[1], t.shape()[2]], out)
        };
        let labels = rows.iter().map(|&r| usize::from(self.labels[r])).collect();
        Ok((gather(&self.image)?, gather(&self.speech)?, labels))
    }

    pub fn positive_fraction(&self) -> f64 {
        self.labels.iter().map(|&l| f64::from(l)).sum::<f64>() / self.len() as f64
    }

    /// Hash of every sample's bytes, used to verify split disjointness.
    pub fn sample_hashes(&self) -> HashSet<u64> {
        let ri = self.image_nodes() * self.width();
        let rs = self.speech_nodes() * self.width();
        (0..self.len())
            .map(|r| {
                let mut h = DefaultHasher::new();
                for v in &self.image.data()[r * ri..(r + 1) * ri] {
                    v.to_bits().hash(&mut h);
                }
                for v in &self.speech.data()[r * rs..(r + 1) * rs] {
                    v.to_bits().hash(&mut h);
                }
                h.finish()
            })
            .collect()
    }

    /// Copy with labels permuted, destroying any feature/label relation.
    pub fn with_shuffled_labels(&self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels = self.labels.clone();
        labels.shuffle(&mut rng);
        Self { labels, ..self.clone() }
    }

    /// Keeps only `n` leading samples.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyDataset("truncated to zero samples".into()));
        }
        let rows: Vec<usize> = (0..n.min(self.len())).collect();
        let (image, speech, _) = self.batch(&rows)?;
        Self::new(image, speech, self.labels[..rows.len()].to_vec(), self.split, self.provenance.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len();
        let mut out = Vec::with_capacity(HEADER_LEN + n + 8 * (self.image.len() + self.speech.len()) + 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for d in [n, self.image_nodes(), self.speech_nodes(), self.width()] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.labels);
        for v in self.image.data().iter().chain(self.speech.data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], split: Split, path: &str) -> Result<Self> {
        let truncated = |offset: usize, what: &str| Error::Parse {
            offset,
            message: format!("file ends before {what}"),
        };
        if bytes.len() < 4 {
            return Err(truncated(bytes.len(), "the magic"));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Parse { offset: 0, message: "bad magic, expected BMNF".into() });
        }
        if bytes.len() < HEADER_LEN {
            return Err(truncated(bytes.len(), "the end of the header"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Parse { offset: 4, message: format!("unsupported version {version}") });
        }
        let dim = |i: usize| {
            let at = 6 + 4 * i;
            u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize
        };
        let (n, ni, ns, c) = (dim(0), dim(1), dim(2), dim(3));
        if n == 0 {
            return Err(Error::EmptyDataset(format!("{path} holds no samples")));
        }
        if ni == 0 || ns == 0 || c == 0 {
            return Err(Error::Parse { offset: 6, message: format!("zero dimension in header {n}/{ni}/{ns}/{c}") });
        }
        let feat_vals = n * (ni + ns);
        let expected = HEADER_LEN + n + 8 * feat_vals * c + 4;
        if bytes.len() != expected {
            let body = bytes.len().checked_sub(HEADER_LEN + n + 4);
            if let Some(body) = body {
                if body % (8 * feat_vals) == 0 && body > 0 {
                    return shape_err(format!(
                        "header declares C={c} but the feature blocks hold C={}",
                        body / (8 * feat_vals)
                    ));
                }
            }
            if bytes.len() < expected {
                let what = if bytes.len() < HEADER_LEN + n {
                    "the label block"
                } else if bytes.len() < HEADER_LEN + n + 8 * n * ni * c {
                    "the image feature block"
                } else if bytes.len() < expected - 4 {
                    "the speech feature block"
                } else {
                    "the trailing checksum"
                };
                return Err(truncated(bytes.len(), what));
            }
            return Err(Error::Parse {
                offset: expected,
                message: format!("{} unexpected trailing bytes", bytes.len() - expected),
            });
        }
        let stored = u32::from_le_bytes(bytes[expected - 4..].try_into().expect("4 bytes"));
        let computed = crc32fast::hash(&bytes[..expected - 4]);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let labels = bytes[HEADER_LEN..HEADER_LEN + n].to_vec();
        if let Some(pos) = labels.iter().position(|&l| l > 1) {
            return Err(Error::Parse {
                offset: HEADER_LEN + pos,
                message: format!("label {} is not binary", labels[pos]),
            });
        }
        let floats = |start: usize, count: usize| -> Vec<f64> {
            bytes[start..start + 8 * count]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect()
        };
        let img_start = HEADER_LEN + n;
        let image = Tensor::new(vec![n, ni, c], floats(img_start, n * ni * c))?;
        let speech = Tensor::new(vec![n, ns, c], floats(img_start + 8 * n * ni * c, n * ns * c))?;
        Self::new(
            image,
            speech,
            labels,
            split,
            Provenance::File { path: path.to_string(), crc32: stored },
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// CSV with one `index,split,label` row per sample.
    pub fn label_manifest_csv(&self) -> String {
        let mut s = String::from("index,split,label\n");
        for (i, l) in self.labels.iter().enumerate() {
            let _ = writeln!(s, "{i},{},{l}", self.split.name());
        }
        s
    }
}

/// Reads a `BMNF` file. With `expect = Some((N_I, N_S, C))` the header must match.
pub fn load_features(
    path: impl AsRef<Path>,
    split: Split,
    expect: Option<(usize, usize, usize)>,
) -> Result<BimodalDataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let ds = BimodalDataset::from_bytes(&bytes, split, &path.display().to_string())?;
    if let Some((ni, ns, c)) = expect {
        let got = (ds.image_nodes(), ds.speech_nodes(), ds.width());
        if got != (ni, ns, c) {
            return shape_err(format!("file holds N_I/N_S/C = {got:?}, expected {:?}", (ni, ns, c)));
        }
    }
    Ok(ds)
}

const SPLIT_STREAMS: [(Split, u64); 3] = [(Split::Train, 11), (Split::Val, 12), (Split::Test, 13)];

/// Draws the three splits of a planted task.
pub fn generate(spec: &PlantedTaskSpec, seed: u64) -> Result<TaskSplits> {
    spec.validate()?;
    let mut out = Vec::with_capacity(3);
    for (split, stream) in SPLIT_STREAMS {
        let n = match split {
            Split::Train => spec.n_train,
            Split::Val => spec.n_val,
            Split::Test => spec.n_test,
        };
        out.push(generate_split(spec, seed, split, stream, n)?);
    }
    let test = out.pop().expect("three splits");
    let val = out.pop().expect("three splits");
    let train = out.pop().expect("three splits");
    Ok(TaskSplits { train, val, test })
}

fn generate_split(
    spec: &PlantedTaskSpec,
    seed: u64,
    split: Split,
    stream: u64,
    n: usize,
) -> Result<BimodalDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    // exact balance: half the rows of each class, in random order
    let mut labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    labels.shuffle(&mut rng);

    let c = spec.width;
    let mut image = Vec::with_capacity(n * spec.image_nodes * c);
    let mut speech = Vec::with_capacity(n * spec.speech_nodes * c);
    for &label in &labels {
        let mut u: f64 = StandardNormal.sample(&mut rng);
        let mut v: f64 = StandardNormal.sample(&mut rng);
        let positive = label == 1;
        match spec.rule {
            PlantedRule::XorCrossmodal => {
                // choose the sign of v so that (u > 0) xor (v > 0) == label
                v = v.abs() * if (u > 0.0) != positive { 1.0 } else { -1.0 };
                if v == 0.0 {
                    v = if (u > 0.0) != positive { f64::MIN_POSITIVE } else { -f64::MIN_POSITIVE };
                }
            }
            PlantedRule::UnimodalImage => u = u.abs().max(f64::MIN_POSITIVE) * sign(positive),
            PlantedRule::UnimodalSpeech => v = v.abs().max(f64::MIN_POSITIVE) * sign(positive),
        }
        embed(&mut image, &mut rng, u, spec.image_nodes, c, &spec.image_signal_dims, spec.noise_sigma);
        embed(&mut speech, &mut rng, v, spec.speech_nodes, c, &spec.speech_signal_dims, spec.noise_sigma);
    }
    BimodalDataset::new(
        Tensor::new(vec![n, spec.image_nodes, c], image)?,
        Tensor::new(vec![n, spec.speech_nodes, c], speech)?,
        labels,
        split,
        Provenance::Synthetic { spec: spec.clone(), seed },
    )
}

fn sign(positive: bool) -> f64 {
    if positive {
        1.0
    } else {
        -1.0
    }
}

fn embed(
    out: &mut Vec<f64>,
    rng: &mut ChaCha8Rng,
    latent: f64,
    nodes: usize,
    width: usize,
    signal: &[usize],
    sigma: f64,
) {
    for _ in 0..nodes {
        for d in 0..width {
            let noise: f64 = StandardNormal.sample(rng);
            let base = if signal.contains(&d) { latent } else { 0.0 };
            out.push(base + sigma * noise);
        }
    }
}
