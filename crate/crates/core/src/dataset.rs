//! Supervised dataset: windows of uplink SNR vectors paired with the
//! device poses of the following time slots.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{uplink_channel, uplink_snr};
use crate::error::{Error, Result};
use crate::geometry::{wrap_degrees, Pose};
use crate::kv::KvFile;
use crate::mobility::{sample_trajectory, Trajectory};
use crate::scene::Scene;
use crate::util::{derive_seed, fingerprint, join_floats};

const NOISE_STREAM: u64 = 0x6e6f_6973_65;
const SPLIT_STREAM: u64 = 0x7370_6c69_74;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureScale {
    /// SNR in dB, floored.
    Db,
    /// Linear SNR, floored at the linear equivalent of the dB floor.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YawEncoding {
    /// `(sin alpha, cos alpha)`, continuous across the 0/360 wrap.
    Sincos,
    /// Yaw in degrees.
    Raw,
}

impl YawEncoding {
    pub fn label_width(self) -> usize {
        match self {
            YawEncoding::Sincos => 7,
            YawEncoding::Raw => 6,
        }
    }
}

impl std::fmt::Display for FeatureScale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureScale::Db => "db",
            FeatureScale::Linear => "linear",
        })
    }
}

impl std::str::FromStr for FeatureScale {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "db" => Ok(FeatureScale::Db),
            "linear" => Ok(FeatureScale::Linear),
            _ => Err(format!("unknown feature scale `{s}` (db|linear)")),
        }
    }
}

impl std::fmt::Display for YawEncoding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            YawEncoding::Sincos => "sincos",
            YawEncoding::Raw => "raw",
        })
    }
}

impl std::str::FromStr for YawEncoding {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sincos" => Ok(YawEncoding::Sincos),
            "raw" => Ok(YawEncoding::Raw),
            _ => Err(format!("unknown yaw encoding `{s}` (sincos|raw)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Prior slots per window.
    pub n: usize,
    /// Posterior slots per label sequence.
    pub l_max: usize,
    pub q: usize,
    pub snr_floor_db: f64,
    pub train_fraction: f64,
    pub feature_scale: FeatureScale,
    pub yaw_encoding: YawEncoding,
    /// Standard deviation of a log-normal factor applied to each uplink gain
    /// before the SNR is formed. Zero disables it.
    pub feature_noise_std: f64,
    /// User count that splits the uplink band while the dataset is recorded.
    pub reference_users: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n: 8,
            l_max: 4,
            q: 20_000,
            snr_floor_db: -30.0,
            train_fraction: 0.9,
            feature_scale: FeatureScale::Db,
            yaw_encoding: YawEncoding::Sincos,
            feature_noise_std: 0.0,
            reference_users: 1,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.l_max == 0 {
            return Err(Error::invalid("dataset.n and dataset.l_max must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid("dataset.train_fraction must lie in (0, 1)"));
        }
        if !(self.feature_noise_std >= 0.0) {
            return Err(Error::invalid("dataset.feature_noise_std must be non-negative"));
        }
        if self.reference_users == 0 {
            return Err(Error::invalid("dataset.reference_users must be at least 1"));
        }
        if !self.snr_floor_db.is_finite() {
            return Err(Error::invalid("dataset.snr_floor_db must be finite"));
        }
        Ok(())
    }
}

/// One supervised example. Features are `n` rows of `m` SNR values
/// (row-major); labels are `l_max` encoded poses.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub labels: Vec<f64>,
}

/// Per-dimension affine statistics, computed on the training partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub label_offset: Vec<f64>,
    pub label_scale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub m: usize,
    pub n: usize,
    pub l_max: usize,
    pub q: usize,
    pub snr_floor_db: f64,
    pub feature_scale: FeatureScale,
    pub yaw_encoding: YawEncoding,
    pub reference_users: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub config_fingerprint: String,
    pub norm: Normalization,
}

impl DatasetMeta {
    /// Metadata with unit normalization, for models built without a dataset.
    pub fn identity(m: usize, n: usize, l_max: usize, yaw_encoding: YawEncoding) -> Self {
        let width = yaw_encoding.label_width();
        DatasetMeta {
            m,
            n,
            l_max,
            q: 0,
            snr_floor_db: -30.0,
            feature_scale: FeatureScale::Db,
            yaw_encoding,
            reference_users: 1,
            train_fraction: 0.9,
            seed: 0,
            config_fingerprint: "none".into(),
            norm: Normalization {
                feature_mean: vec![0.0; m],
                feature_std: vec![1.0; m],
                label_offset: vec![0.0; width],
                label_scale: vec![1.0; width],
            },
        }
    }

    pub fn label_width(&self) -> usize {
        self.yaw_encoding.label_width()
    }

    pub fn feature_len(&self) -> usize {
        self.n * self.m
    }

    pub fn label_len(&self) -> usize {
        self.l_max * self.label_width()
    }

    pub fn row_len(&self) -> usize {
        self.feature_len() + self.label_len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub samples: Vec<Sample>,
}

/// Fingerprint of the configuration a dataset was generated from.
pub fn config_fingerprint(scene: &Scene, config: &DatasetConfig) -> String {
    #[derive(Serialize)]
    struct Fp<'a> {
        scene: &'a Scene,
        dataset: &'a DatasetConfig,
    }
    let text = toml::to_string(&Fp { scene, dataset: config }).expect("configs serialize");
    fingerprint(&text)
}

/// Converts linear SNR values into floored features.
pub fn snr_features(snr: &[f64], scale: FeatureScale, floor_db: f64) -> Vec<f64> {
    match scale {
        FeatureScale::Db => snr
            .iter()
            .map(|&r| {
                let db = 10.0 * r.log10();
                // log10(0) = -inf falls to the floor
                if db > floor_db {
                    db
                } else {
                    floor_db
                }
            })
            .collect(),
        FeatureScale::Linear => {
            let floor = 10f64.powf(floor_db / 10.0);
            snr.iter().map(|&r| r.max(floor)).collect()
        }
    }
}

pub fn encode_pose(pose: &Pose, encoding: YawEncoding) -> Vec<f64> {
    match encoding {
        YawEncoding::Sincos => {
            let (s, c) = pose.alpha.to_radians().sin_cos();
            vec![pose.x, pose.y, pose.z, s, c, pose.beta, pose.gamma]
        }
        YawEncoding::Raw => vec![pose.x, pose.y, pose.z, pose.alpha, pose.beta, pose.gamma],
    }
}

/// Inverse of [`encode_pose`]. Angles are brought back into their valid
/// ranges; positions are returned as encoded.
pub fn decode_pose(values: &[f64], encoding: YawEncoding) -> Pose {
    let (alpha, rest) = match encoding {
        YawEncoding::Sincos => (wrap_degrees(values[3].atan2(values[4]).to_degrees()), &values[5..]),
        YawEncoding::Raw => (wrap_degrees(values[3]), &values[4..]),
    };
    let beta = wrap_signed(rest[0], 180.0);
    let gamma = rest[1].clamp(-90.0, 90f64.next_down());
    Pose::new(values[0], values[1], values[2], alpha, beta, gamma)
}

/// Wraps into `[-half, half)`.
fn wrap_signed(angle: f64, half: f64) -> f64 {
    let w = (angle + half).rem_euclid(2.0 * half) - half;
    if w >= half {
        -half
    } else {
        w
    }
}

/// Uplink SNR vector (linear) of one pose.
pub fn pose_snr(pose: &Pose, scene: &Scene, users: usize) -> Result<Vec<f64>> {
    let l = &scene.layout;
    Ok(uplink_channel(pose, l, &scene.device)?
        .into_iter()
        .map(|g| uplink_snr(g, l.dc_bias, users, l.noise_psd, l.bandwidth))
        .collect())
}

/// Generates one example together with the trajectory behind it.
pub fn generate_sample_with_trajectory(seed: u64, config: &DatasetConfig, scene: &Scene) -> Result<(Sample, Trajectory)> {
    let traj = sample_trajectory(seed, config.n + config.l_max, &scene.mobility, &scene.layout)?;
    let l = &scene.layout;
    let mut noise_rng = (config.feature_noise_std > 0.0).then(|| ChaCha8Rng::seed_from_u64(derive_seed(seed, NOISE_STREAM)));
    let mut features = Vec::with_capacity(config.n * l.num_aps());
    for pose in &traj[..config.n] {
        let snr: Vec<f64> = uplink_channel(pose, l, &scene.device)?
            .into_iter()
            .map(|g| {
                let g = match noise_rng.as_mut() {
                    Some(rng) => {
                        let z: f64 = StandardNormal.sample(rng);
                        g * (config.feature_noise_std * z).exp()
                    }
                    None => g,
                };
                uplink_snr(g, l.dc_bias, config.reference_users, l.noise_psd, l.bandwidth)
            })
            .collect();
        features.extend(snr_features(&snr, config.feature_scale, config.snr_floor_db));
    }
    let labels = traj[config.n..]
        .iter()
        .flat_map(|p| encode_pose(p, config.yaw_encoding))
        .collect();
    Ok((Sample { features, labels }, traj))
}

pub fn generate_sample(seed: u64, config: &DatasetConfig, scene: &Scene) -> Result<Sample> {
    generate_sample_with_trajectory(seed, config, scene).map(|(s, _)| s)
}

/// Deterministic shuffled split into `(train, test)` index lists.
pub fn split(q: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("split fraction {fraction} outside (0, 1)")));
    }
    let mut idx: Vec<usize> = (0..q).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, SPLIT_STREAM)));
    let n_train = (fraction * q as f64).round() as usize;
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

impl Dataset {
    /// Train/test index lists recorded by the metadata.
    pub fn partition(&self) -> (Vec<usize>, Vec<usize>) {
        split(self.meta.q, self.meta.train_fraction, self.meta.seed).expect("validated fraction")
    }

    /// Regenerates the trajectory behind sample `index`. Fails when the
    /// scene does not match the configuration the dataset came from.
    pub fn trajectory(&self, index: usize, scene: &Scene, config: &DatasetConfig) -> Result<Trajectory> {
        if config_fingerprint(scene, config) != self.meta.config_fingerprint {
            return Err(Error::invalid(
                "scene/dataset configuration does not match the dataset fingerprint",
            ));
        }
        let (_, traj) = generate_sample_with_trajectory(derive_seed(self.meta.seed, index as u64), config, scene)?;
        Ok(traj)
    }
}

fn compute_normalization(samples: &[Sample], train: &[usize], m: usize, width: usize, enc: YawEncoding) -> Normalization {
    let mut sum = vec![0.0; m];
    let mut count = 0usize;
    for &i in train {
        for row in samples[i].features.chunks(m) {
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
            count += 1;
        }
    }
    let feature_mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut sq = vec![0.0; m];
    for &i in train {
        for row in samples[i].features.chunks(m) {
            for ((s, v), mu) in sq.iter_mut().zip(row).zip(&feature_mean) {
                *s += (v - mu) * (v - mu);
            }
        }
    }
    // a constant column (e.g. an AP that is always out of view) keeps unit scale
    let feature_std = sq
        .iter()
        .map(|s| {
            let sd = (s / count as f64).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();

    let mut lo = vec![f64::INFINITY; width];
    let mut hi = vec![f64::NEG_INFINITY; width];
    for &i in train {
        for step in samples[i].labels.chunks(width) {
            for d in 0..width {
                lo[d] = lo[d].min(step[d]);
                hi[d] = hi[d].max(step[d]);
            }
        }
    }
    let raw_dims: &[usize] = match enc {
        YawEncoding::Sincos => &[3, 4],
        YawEncoding::Raw => &[],
    };
    let mut label_offset = vec![0.0; width];
    let mut label_scale = vec![1.0; width];
    for d in 0..width {
        if raw_dims.contains(&d) {
            continue;
        }
        label_offset[d] = lo[d];
        let range = hi[d] - lo[d];
        if range > 0.0 {
            label_scale[d] = range;
        }
    }
    Normalization {
        feature_mean,
        feature_std,
        label_offset,
        label_scale,
    }
}

/// Builds `config.q` samples from per-sample seeds derived from `seed`.
/// Sample order and content do not depend on `parallel`.
pub fn build_dataset(seed: u64, config: &DatasetConfig, scene: &Scene, parallel: bool) -> Result<Dataset> {
    config.validate()?;
    scene.validate()?;
    if config.q < 10 {
        return Err(Error::invalid(format!("dataset needs at least 10 samples, got {}", config.q)));
    }
    let gen = |i: usize| generate_sample(derive_seed(seed, i as u64), config, scene);
    let samples: Vec<Sample> = if parallel {
        (0..config.q).into_par_iter().map(gen).collect::<Result<_>>()?
    } else {
        (0..config.q).map(gen).collect::<Result<_>>()?
    };
    let m = scene.num_aps();
    let (train, _) = split(config.q, config.train_fraction, seed)?;
    let norm = compute_normalization(&samples, &train, m, config.yaw_encoding.label_width(), config.yaw_encoding);
    let meta = DatasetMeta {
        m,
        n: config.n,
        l_max: config.l_max,
        q: config.q,
        snr_floor_db: config.snr_floor_db,
        feature_scale: config.feature_scale,
        yaw_encoding: config.yaw_encoding,
        reference_users: config.reference_users,
        train_fraction: config.train_fraction,
        seed,
        config_fingerprint: config_fingerprint(scene, config),
        norm,
    };
    Ok(Dataset { meta, samples })
}

impl Normalization {
    fn check(&self) -> Result<()> {
        if self
            .feature_std
            .iter()
            .chain(&self.label_scale)
            .any(|s| !(*s > 0.0 && s.is_finite()))
        {
            return Err(Error::invalid("normalization scale must be positive and finite"));
        }
        Ok(())
    }

    /// Standardizes a row-major `n x m` feature block in place.
    pub fn normalize_features(&self, features: &mut [f64]) -> Result<()> {
        self.check()?;
        let m = self.feature_mean.len();
        if features.len() % m != 0 {
            return Err(Error::invalid(format!("feature length {} is not a multiple of {m}", features.len())));
        }
        for row in features.chunks_mut(m) {
            for ((v, mu), sd) in row.iter_mut().zip(&self.feature_mean).zip(&self.feature_std) {
                *v = (*v - mu) / sd;
            }
        }
        Ok(())
    }

    pub fn normalize_labels(&self, labels: &mut [f64]) -> Result<()> {
        self.check()?;
        for step in labels.chunks_mut(self.label_offset.len()) {
            for ((v, o), s) in step.iter_mut().zip(&self.label_offset).zip(&self.label_scale) {
                *v = (*v - o) / s;
            }
        }
        Ok(())
    }

    pub fn denormalize_labels(&self, labels: &mut [f64]) -> Result<()> {
        self.check()?;
        for step in labels.chunks_mut(self.label_offset.len()) {
            for ((v, o), s) in step.iter_mut().zip(&self.label_offset).zip(&self.label_scale) {
                *v = *v * s + o;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

const DATASET_FORMAT: &str = "lifi-po-dataset";

/// On-disk encoding of the record file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordEncoding {
    /// Little-endian IEEE-754 doubles, row-major.
    F64Le,
    Csv,
}

impl RecordEncoding {
    fn tag(self) -> &'static str {
        match self {
            RecordEncoding::F64Le => "f64le",
            RecordEncoding::Csv => "csv",
        }
    }

    fn extension(self) -> &'static str {
        match self {
            RecordEncoding::F64Le => "bin",
            RecordEncoding::Csv => "csv",
        }
    }
}

pub(crate) fn write_normalization(out: &mut String, norm: &Normalization) {
    out.push_str(&format!("feature_mean: {}\n", join_floats(&norm.feature_mean)));
    out.push_str(&format!("feature_std: {}\n", join_floats(&norm.feature_std)));
    out.push_str(&format!("label_offset: {}\n", join_floats(&norm.label_offset)));
    out.push_str(&format!("label_scale: {}\n", join_floats(&norm.label_scale)));
}

pub(crate) fn meta_to_text(meta: &DatasetMeta) -> String {
    let mut s = String::new();
    s.push_str(&format!("m: {}\n", meta.m));
    s.push_str(&format!("n: {}\n", meta.n));
    s.push_str(&format!("l_max: {}\n", meta.l_max));
    s.push_str(&format!("q: {}\n", meta.q));
    s.push_str(&format!("label_width: {}\n", meta.label_width()));
    s.push_str(&format!("snr_floor_db: {:?}\n", meta.snr_floor_db));
    s.push_str(&format!("feature_scale: {}\n", meta.feature_scale));
    s.push_str(&format!("yaw_encoding: {}\n", meta.yaw_encoding));
    s.push_str(&format!("reference_users: {}\n", meta.reference_users));
    s.push_str(&format!("train_fraction: {:?}\n", meta.train_fraction));
    s.push_str(&format!("seed: {}\n", meta.seed));
    s.push_str(&format!("config_fingerprint: {}\n", meta.config_fingerprint));
    write_normalization(&mut s, &meta.norm);
    s
}

pub(crate) fn meta_from_kv(kv: &KvFile) -> Result<DatasetMeta> {
    let meta = DatasetMeta {
        m: kv.get("m")?,
        n: kv.get("n")?,
        l_max: kv.get("l_max")?,
        q: kv.get("q")?,
        snr_floor_db: kv.get("snr_floor_db")?,
        feature_scale: kv.get("feature_scale")?,
        yaw_encoding: kv.get("yaw_encoding")?,
        reference_users: kv.get("reference_users")?,
        train_fraction: kv.get("train_fraction")?,
        seed: kv.get("seed")?,
        config_fingerprint: kv.str("config_fingerprint")?.to_string(),
        norm: Normalization {
            feature_mean: kv.floats("feature_mean")?,
            feature_std: kv.floats("feature_std")?,
            label_offset: kv.floats("label_offset")?,
            label_scale: kv.floats("label_scale")?,
        },
    };
    let bad = |message: String| Error::Format {
        path: kv.path().to_path_buf(),
        message,
    };
    let width: usize = kv.get("label_width")?;
    if width != meta.label_width() {
        return Err(bad(format!(
            "label_width {width} does not match yaw encoding `{}` ({})",
            meta.yaw_encoding,
            meta.label_width()
        )));
    }
    if meta.n == 0 || meta.l_max == 0 || meta.m == 0 {
        return Err(bad("m, n and l_max must be at least 1".into()));
    }
    for (name, len, want) in [
        ("feature_mean", meta.norm.feature_mean.len(), meta.m),
        ("feature_std", meta.norm.feature_std.len(), meta.m),
        ("label_offset", meta.norm.label_offset.len(), width),
        ("label_scale", meta.norm.label_scale.len(), width),
    ] {
        if len != want {
            return Err(bad(format!("`{name}` has {len} entries but m = {}, label_width = {width}", meta.m)));
        }
    }
    if !(meta.train_fraction > 0.0 && meta.train_fraction < 1.0) {
        return Err(bad("train_fraction must lie in (0, 1)".into()));
    }
    Ok(meta)
}

fn with_extension(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Writes `<stem>.meta` and `<stem>.bin` (or `<stem>.csv`). Returns the
/// metadata path.
pub fn save_dataset(dataset: &Dataset, stem: &Path, encoding: RecordEncoding) -> Result<PathBuf> {
    let meta_path = with_extension(stem, "meta");
    let rec_path = with_extension(stem, encoding.extension());
    let rec_name = rec_path.file_name().expect("stem has a file name").to_string_lossy().into_owned();

    let mut text = format!("format: {DATASET_FORMAT}\nversion: 1\nencoding: {}\nrecords: {rec_name}\n", encoding.tag());
    text.push_str(&meta_to_text(&dataset.meta));
    std::fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;

    let file = File::create(&rec_path).map_err(|e| Error::io(&rec_path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(&rec_path, e);
    for s in &dataset.samples {
        match encoding {
            RecordEncoding::F64Le => {
                for v in s.features.iter().chain(&s.labels) {
                    w.write_all(&v.to_le_bytes()).map_err(io)?;
                }
            }
            RecordEncoding::Csv => {
                let row: Vec<f64> = s.features.iter().chain(&s.labels).copied().collect();
                writeln!(w, "{}", join_floats(&row)).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)?;
    Ok(meta_path)
}

/// Loads a dataset from its metadata file (or from `<path>.meta`).
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let meta_path = if path.extension().is_some_and(|e| e == "meta") {
        path.to_path_buf()
    } else {
        with_extension(path, "meta")
    };
    let kv = KvFile::read(&meta_path)?;
    let format = kv.str("format")?;
    if format != DATASET_FORMAT {
        return Err(Error::Format {
            path: meta_path,
            message: format!("not a dataset file (format `{format}`)"),
        });
    }
    let meta = meta_from_kv(&kv)?;
    let rec_path = meta_path.with_file_name(kv.str("records")?);
    let row_len = meta.row_len();
    let rows: Vec<Vec<f64>> = match kv.str("encoding")? {
        "f64le" => {
            let mut bytes = Vec::new();
            File::open(&rec_path)
                .and_then(|mut f| f.read_to_end(&mut bytes))
                .map_err(|e| Error::io(&rec_path, e))?;
            let want = meta.q * row_len * 8;
            if bytes.len() != want {
                return Err(Error::Format {
                    path: rec_path,
                    message: format!(
                        "expected {} records of {row_len} values ({want} bytes), found {} bytes",
                        meta.q,
                        bytes.len()
                    ),
                });
            }
            bytes
                .chunks_exact(row_len * 8)
                .map(|row| {
                    row.chunks_exact(8)
                        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                        .collect()
                })
                .collect()
        }
        "csv" => {
            let file = File::open(&rec_path).map_err(|e| Error::io(&rec_path, e))?;
            let mut rows = Vec::with_capacity(meta.q);
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(&rec_path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let parse_err = |message: String| Error::Parse {
                    path: rec_path.clone(),
                    line: i + 1,
                    message,
                };
                let row = crate::kv::parse_float_list(&line).map_err(parse_err)?;
                if row.len() != row_len {
                    return Err(parse_err(format!(
                        "row has {} values, expected {row_len} (n*m = {}*{} features + {} labels)",
                        row.len(),
                        meta.n,
                        meta.m,
                        meta.label_len()
                    )));
                }
                rows.push(row);
            }
            if rows.len() != meta.q {
                return Err(Error::Format {
                    path: rec_path,
                    message: format!("expected {} records, found {}", meta.q, rows.len()),
                });
            }
            rows
        }
        other => {
            return Err(Error::Format {
                path: meta_path,
                message: format!("unknown record encoding `{other}`"),
            })
        }
    };
    let samples = rows
        .into_iter()
        .map(|mut row| {
            let labels = row.split_off(meta.feature_len());
            Sample { features: row, labels }
        })
        .collect();
    Ok(Dataset { meta, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::MobilityConfig;

    fn small_config(q: usize) -> DatasetConfig {
        DatasetConfig { q, ..Default::default() }
    }

    #[test]
    fn sample_shapes() {
        let scene = Scene::default();
        let s = generate_sample(1, &DatasetConfig::default(), &scene).unwrap();
        assert_eq!(s.features.len(), 8 * 16);
        assert_eq!(s.labels.len(), 4 * 7);
        assert!(s.features.iter().all(|&v| v >= -30.0));
        for step in s.labels.chunks(7) {
            assert!((step[3] * step[3] + step[4] * step[4] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn stationary_user_gives_repeated_rows() {
        let scene = Scene {
            mobility: MobilityConfig::frozen(),
            ..Default::default()
        };
        let config = DatasetConfig::default();
        let (s, traj) = generate_sample_with_trajectory(4, &config, &scene).unwrap();
        let rows: Vec<&[f64]> = s.features.chunks(16).collect();
        assert!(rows.iter().all(|r| *r == rows[0]));
        let last = encode_pose(traj.last().unwrap(), YawEncoding::Sincos);
        for step in s.labels.chunks(7) {
            assert_eq!(step, last.as_slice());
        }
    }

    #[test]
    fn blocked_pose_row_is_floor() {
        let scene = Scene::default();
        let snr = pose_snr(&Pose::new(2.0, 2.0, 1.2, 0.0, -180.0, 0.0), &scene, 1).unwrap();
        assert!(snr.iter().all(|&r| r == 0.0));
        assert!(snr_features(&snr, FeatureScale::Db, -30.0).iter().all(|&v| v == -30.0));
    }

    #[test]
    fn encode_decode_round_trip() {
        for enc in [YawEncoding::Sincos, YawEncoding::Raw] {
            for &(a, b, g) in &[(0.0, -180.0, -90.0), (359.999, 179.9, 89.9), (123.4, 40.0, -3.0)] {
                let p = Pose::new(1.23, 4.56, 1.2, a, b, g);
                let q = decode_pose(&encode_pose(&p, enc), enc);
                assert!(p.distance(&q) < 1e-6);
                assert!(crate::geometry::angle_difference(p.alpha, q.alpha) < 1e-4);
                assert!((p.beta - q.beta).abs() < 1e-4);
                assert!((p.gamma - q.gamma).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn decode_always_in_range() {
        let p = decode_pose(&[1.0, 1.0, 1.0, -0.3, -0.9, 250.0, 120.0], YawEncoding::Sincos);
        assert!(p.angles_in_range());
    }

    #[test]
    fn small_q_is_rejected() {
        assert!(build_dataset(1, &small_config(9), &Scene::default(), false).is_err());
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let (train, test) = split(1000, 0.9, 3).unwrap();
        assert_eq!((train.len(), test.len()), (900, 100));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        assert_eq!(split(1000, 0.9, 3).unwrap(), (train, test));
        assert!(split(10, 1.0, 0).is_err());
    }

    #[test]
    fn standardization_on_train_partition() {
        let ds = build_dataset(5, &small_config(400), &Scene::default(), true).unwrap();
        let (train, test) = ds.partition();
        let m = ds.meta.m;
        let mut cols = vec![Vec::new(); m];
        for &i in &train {
            let mut f = ds.samples[i].features.clone();
            ds.meta.norm.normalize_features(&mut f).unwrap();
            for row in f.chunks(m) {
                for (c, v) in cols.iter_mut().zip(row) {
                    c.push(*v);
                }
            }
        }
        for (j, c) in cols.iter().enumerate() {
            let mean = c.iter().sum::<f64>() / c.len() as f64;
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c.len() as f64;
            assert!(mean.abs() < 1e-6, "column {j} mean {mean}");
            if ds.meta.norm.feature_std[j] != 1.0 {
                assert!((var - 1.0).abs() < 1e-3, "column {j} var {var}");
            }
        }
        // the test partition is excluded from the statistics
        let mut test_mean = 0.0;
        for &i in &test {
            let mut f = ds.samples[i].features.clone();
            ds.meta.norm.normalize_features(&mut f).unwrap();
            test_mean += f[0];
        }
        assert!((test_mean / test.len() as f64).abs() > 1e-9);
    }

    #[test]
    fn feature_shift_is_absorbed_by_standardization() {
        let ds = build_dataset(6, &small_config(50), &Scene::default(), false).unwrap();
        let mut shifted = ds.clone();
        for s in &mut shifted.samples {
            s.features.iter_mut().for_each(|v| *v += 10.0 * 4f64.log10());
        }
        let (train, _) = ds.partition();
        let norm_a = compute_normalization(&ds.samples, &train, 16, 7, YawEncoding::Sincos);
        let norm_b = compute_normalization(&shifted.samples, &train, 16, 7, YawEncoding::Sincos);
        let mut a = ds.samples[0].features.clone();
        let mut b = shifted.samples[0].features.clone();
        norm_a.normalize_features(&mut a).unwrap();
        norm_b.normalize_features(&mut b).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn label_round_trip_and_zero_scale() {
        let ds = build_dataset(7, &small_config(40), &Scene::default(), false).unwrap();
        let orig = ds.samples[3].labels.clone();
        let mut l = orig.clone();
        ds.meta.norm.normalize_labels(&mut l).unwrap();
        // min-max scaled dimensions land in [0, 1] on the train partition
        assert!(l.chunks(7).all(|s| s[0] >= -0.5 && s[0] <= 1.5));
        ds.meta.norm.denormalize_labels(&mut l).unwrap();
        for (a, b) in orig.iter().zip(&l) {
            assert!((a - b).abs() < 1e-9);
        }
        let mut bad = ds.meta.norm.clone();
        bad.feature_std[0] = 0.0;
        assert!(bad.normalize_features(&mut ds.samples[0].features.clone()).is_err());
    }

    #[test]
    fn parallel_matches_serial() {
        let a = build_dataset(8, &small_config(64), &Scene::default(), true).unwrap();
        let b = build_dataset(8, &small_config(64), &Scene::default(), false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn save_load_round_trip_both_encodings() {
        let dir = tempfile::tempdir().unwrap();
        let ds = build_dataset(9, &small_config(30), &Scene::default(), false).unwrap();
        for enc in [RecordEncoding::F64Le, RecordEncoding::Csv] {
            let stem = dir.path().join(format!("ds_{}", enc.tag()));
            let meta = save_dataset(&ds, &stem, enc).unwrap();
            let back = load_dataset(&meta).unwrap();
            assert_eq!(back, ds);
        }
    }

    #[test]
    fn truncated_and_mismatched_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ds = build_dataset(10, &small_config(12), &Scene::default(), false).unwrap();
        let stem = dir.path().join("d");
        let meta = save_dataset(&ds, &stem, RecordEncoding::F64Le).unwrap();
        let bin = dir.path().join("d.bin");
        let bytes = std::fs::read(&bin).unwrap();
        std::fs::write(&bin, &bytes[..bytes.len() - 8]).unwrap();
        let err = load_dataset(&meta).unwrap_err().to_string();
        assert!(err.contains("expected 12 records"), "{err}");

        let text = std::fs::read_to_string(&meta).unwrap().replace("m: 16", "m: 15");
        std::fs::write(&meta, text).unwrap();
        std::fs::write(&bin, &bytes).unwrap();
        let err = load_dataset(&meta).unwrap_err().to_string();
        assert!(err.contains("feature_mean"), "{err}");

        let stem = dir.path().join("c");
        let meta = save_dataset(&ds, &stem, RecordEncoding::Csv).unwrap();
        let csv = dir.path().join("c.csv");
        let text = std::fs::read_to_string(&csv).unwrap();
        let cut: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        std::fs::write(&csv, cut).unwrap();
        let err = load_dataset(&meta).unwrap_err().to_string();
        assert!(err.contains("expected 12 records, found 5"), "{err}");
    }

    #[test]
    fn trajectory_regeneration_matches_features() {
        let scene = Scene::default();
        let config = small_config(20);
        let ds = build_dataset(11, &config, &scene, false).unwrap();
        let traj = ds.trajectory(7, &scene, &config).unwrap();
        let expected = encode_pose(&traj[config.n], config.yaw_encoding);
        assert_eq!(&ds.samples[7].labels[..7], expected.as_slice());
        let other = Scene {
            mobility: MobilityConfig { speed: 2.0, ..Default::default() },
            ..Default::default()
        };
        assert!(ds.trajectory(7, &other, &config).is_err());
    }
}
