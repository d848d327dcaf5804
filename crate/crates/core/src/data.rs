//! Datasets: IDX image files, preprocessing into rotation angles, synthetic
//! quantum datasets, splits, and hashed run artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoding::Payload;
use crate::error::{invalid, QalError, Result};
use crate::models::{aubry_andre_label, aubry_andre_terms, cluster_ising, cluster_ising_label, ground_state};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub payload: Payload,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Classical,
    Hamiltonian,
    QuantumState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub kind: DatasetKind,
    pub k_classes: usize,
    pub samples: Vec<Sample>,
    /// Original class ids in label order (label `i` came from `classes[i]`).
    pub classes: Vec<u32>,
    /// Per-sample generating parameter for physics datasets (`V` or `h`).
    pub params: Vec<f64>,
    /// Indices into the parent dataset when produced by [`split`].
    pub source_indices: Vec<usize>,
    pub split_seed: Option<u64>,
}

impl LabeledDataset {
    pub fn new(kind: DatasetKind, k_classes: usize, samples: Vec<Sample>) -> Result<Self> {
        let ds = Self {
            kind,
            k_classes,
            source_indices: (0..samples.len()).collect(),
            samples,
            classes: (0..k_classes as u32).collect(),
            params: Vec::new(),
            split_seed: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let mut dim = None;
        for (i, s) in self.samples.iter().enumerate() {
            if s.label >= self.k_classes {
                return Err(invalid(format!("sample {i} has label {} >= {}", s.label, self.k_classes)));
            }
            let ok = matches!(
                (self.kind, &s.payload),
                (DatasetKind::Classical, Payload::Classical(_))
                    | (DatasetKind::Hamiltonian, Payload::Hamiltonian(_))
                    | (DatasetKind::QuantumState, Payload::QuantumState(_))
            );
            if !ok {
                return Err(invalid(format!("sample {i} payload does not match dataset kind")));
            }
            if let Payload::Classical(x) = &s.payload {
                match dim {
                    None => dim = Some(x.len()),
                    Some(d) if d != x.len() => return Err(QalError::DimensionMismatch { expected: d, found: x.len() }),
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn label_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k_classes];
        for s in &self.samples {
            c[s.label] += 1;
        }
        c
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Self {
            kind: self.kind,
            k_classes: self.k_classes,
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            classes: self.classes.clone(),
            params: if self.params.is_empty() { Vec::new() } else { idx.iter().map(|&i| self.params[i]).collect() },
            source_indices: idx.iter().map(|&i| self.source_indices[i]).collect(),
            split_seed: self.split_seed,
        }
    }

    /// Uniform random subset of `n` samples, in original order.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<Self> {
        if n > self.len() {
            return Err(invalid(format!("cannot take {n} of {} samples", self.len())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, self.len(), n).into_vec();
        idx.sort_unstable();
        Ok(self.subset(&idx))
    }
}

/// Seeded uniform split into `(train, test)`, both keeping the original order.
pub fn split(ds: &LabeledDataset, test_size: usize, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if test_size > ds.len() {
        return Err(invalid(format!("test size {test_size} exceeds dataset size {}", ds.len())));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test, train) = idx.split_at(test_size);
    let (mut train, mut test) = (train.to_vec(), test.to_vec());
    train.sort_unstable();
    test.sort_unstable();
    let (mut a, mut b) = (ds.subset(&train), ds.subset(&test));
    a.split_seed = Some(seed);
    b.split_seed = Some(seed);
    Ok((a, b))
}

/// Raw 8-bit images with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<Vec<u8>>,
    pub labels: Vec<u8>,
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&bytes[..])
            .read_to_end(&mut out)
            .map_err(|e| QalError::Idx(format!("{}: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

fn be_u32(b: &[u8], at: usize) -> Result<u32> {
    b.get(at..at + 4)
        .map(|s| u32::from_be_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or_else(|| QalError::Idx("truncated header".into()))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<Vec<u8>>)> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(QalError::Idx(format!("bad image magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let body = &bytes[16..];
    let size = rows * cols;
    if body.len() != count * size {
        return Err(QalError::Idx(format!("expected {} pixel bytes, found {}", count * size, body.len())));
    }
    Ok((rows, cols, body.chunks(size.max(1)).take(count).map(|c| c.to_vec()).collect()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(QalError::Idx(format!("bad label magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(QalError::Idx(format!("expected {count} labels, found {}", body.len())));
    }
    Ok(body.to_vec())
}

/// Reads an IDX image/label pair; gzip input is detected by its magic bytes.
pub fn load_idx(images: &Path, labels: &Path) -> Result<RawImages> {
    let (rows, cols, pixels) = parse_idx_images(&read_maybe_gz(images)?)?;
    let labels = parse_idx_labels(&read_maybe_gz(labels)?)?;
    if pixels.len() != labels.len() {
        return Err(QalError::Idx(format!("{} images but {} labels", pixels.len(), labels.len())));
    }
    Ok(RawImages { rows, cols, pixels, labels })
}

pub fn encode_idx_images(raw: &RawImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + raw.pixels.len() * raw.rows * raw.cols);
    for v in [IMAGES_MAGIC, raw.pixels.len() as u32, raw.rows as u32, raw.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for p in &raw.pixels {
        out.extend_from_slice(p);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Writes the pair, gzip-compressed when the path ends in `.gz`.
pub fn write_idx(raw: &RawImages, images: &Path, labels: &Path) -> Result<()> {
    let put = |path: &Path, bytes: Vec<u8>| -> Result<()> {
        if path.extension().is_some_and(|e| e == "gz") {
            let mut enc = flate2::write::GzEncoder::new(fs::File::create(path)?, flate2::Compression::default());
            enc.write_all(&bytes)?;
            enc.finish()?;
            Ok(())
        } else {
            Ok(fs::write(path, bytes)?)
        }
    };
    put(images, encode_idx_images(raw))?;
    put(labels, encode_idx_labels(&raw.labels))
}

/// Range that pixel intensities are mapped onto.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleScale {
    #[default]
    Pi,
    TwoPi,
    Unit,
    /// `[0, f]`
    Factor(f64),
}

impl AngleScale {
    pub fn factor(self) -> f64 {
        match self {
            AngleScale::Pi => std::f64::consts::PI,
            AngleScale::TwoPi => 2.0 * std::f64::consts::PI,
            AngleScale::Unit => 1.0,
            AngleScale::Factor(f) => f,
        }
    }
}

/// Area weights `w[o][i]` mapping `src` source cells onto `dst` output cells.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let (lo, hi) = (o as f64 * scale, (o + 1) as f64 * scale);
            let mut w = Vec::new();
            let mut i = lo.floor() as usize;
            while (i as f64) < hi && i < src {
                let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                if overlap > 0.0 {
                    w.push((i, overlap / scale));
                }
                i += 1;
            }
            w
        })
        .collect()
}

/// Box-average (area) downsampling of a row-major image.
pub fn resize_area(pixels: &[f64], rows: usize, cols: usize, side: usize) -> Vec<f64> {
    if rows == side && cols == side {
        return pixels.to_vec();
    }
    let (wr, wc) = (area_weights(rows, side), area_weights(cols, side));
    let mut out = vec![0.0; side * side];
    for (r, rw) in wr.iter().enumerate() {
        for (c, cw) in wc.iter().enumerate() {
            let mut acc = 0.0;
            for &(i, a) in rw {
                for &(j, b) in cw {
                    acc += a * b * pixels[i * cols + j];
                }
            }
            out[r * side + c] = acc;
        }
    }
    out
}

/// Keeps the listed classes (relabelled `0..`), downsamples to `side x side`
/// and maps pixels to angles `(pixel / 255) * scale`.
pub fn preprocess(raw: &RawImages, side: usize, classes: &[u8], scale: AngleScale) -> Result<LabeledDataset> {
    if classes.len() < 2 {
        return Err(invalid("need at least two classes"));
    }
    for c in classes {
        if !raw.labels.contains(c) {
            return Err(invalid(format!("class {c} does not occur in the data")));
        }
    }
    if side == 0 || side > raw.rows.min(raw.cols) {
        return Err(invalid(format!("target side {side} is not a downsampling of {}x{}", raw.rows, raw.cols)));
    }
    if !(scale.factor().is_finite() && scale.factor() > 0.0) {
        return Err(invalid(format!("angle factor {} must be positive", scale.factor())));
    }
    let f = scale.factor() / 255.0;
    let mut samples = Vec::new();
    for (p, l) in raw.pixels.iter().zip(&raw.labels) {
        let Some(label) = classes.iter().position(|c| c == l) else { continue };
        let px: Vec<f64> = p.iter().map(|&b| b as f64).collect();
        let x = resize_area(&px, raw.rows, raw.cols, side).into_iter().map(|v| v * f).collect();
        samples.push(Sample { payload: Payload::Classical(x), label });
    }
    let mut ds = LabeledDataset::new(DatasetKind::Classical, classes.len(), samples)?;
    ds.classes = classes.iter().map(|&c| c as u32).collect();
    Ok(ds)
}

/// `g = 1`, `V ~ U[0, 4]`, labelled by phase.
pub fn gen_aubry_andre_dataset(n_samples: usize, n_qubits: usize, rng: &mut impl Rng) -> Result<LabeledDataset> {
    let mut samples = Vec::with_capacity(n_samples);
    let mut params = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let v = rng.random_range(0.0..=4.0);
        samples.push(Sample {
            payload: Payload::Hamiltonian(aubry_andre_terms(n_qubits, 1.0, v)?),
            label: aubry_andre_label(1.0, v),
        });
        params.push(v);
    }
    let mut ds = LabeledDataset::new(DatasetKind::Hamiltonian, 2, samples)?;
    ds.params = params;
    Ok(ds)
}

/// `h ~ U[0, 2]`; payload is the ground state of the cluster-Ising ring.
pub fn gen_cluster_ising_dataset(n_samples: usize, n_qubits: usize, rng: &mut impl Rng) -> Result<LabeledDataset> {
    use rayon::prelude::*;
    let hs: Vec<f64> = (0..n_samples).map(|_| rng.random_range(0.0..=2.0)).collect();
    let samples: Vec<Sample> = hs
        .par_iter()
        .map(|&h| {
            let g = ground_state(&cluster_ising(n_qubits, h)?)?;
            Ok(Sample { payload: Payload::QuantumState(g.state.into_amplitudes()), label: cluster_ising_label(h) })
        })
        .collect::<Result<_>>()?;
    let mut ds = LabeledDataset::new(DatasetKind::QuantumState, 2, samples)?;
    ds.params = hs;
    Ok(ds)
}

pub const MANIFEST_NAME: &str = "manifest.json";
pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    /// File name to lowercase hex SHA-256.
    pub files: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `config.json` plus every artifact into `out_dir` and a manifest
/// with their hashes.
pub fn persist(out_dir: &Path, config: &serde_json::Value, artifacts: &[(String, Vec<u8>)]) -> Result<Manifest> {
    fs::create_dir_all(out_dir)?;
    let mut files = BTreeMap::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
        if name == MANIFEST_NAME || name.contains('/') || name.contains('\\') {
            return Err(invalid(format!("invalid artifact name {name:?}")));
        }
        fs::write(out_dir.join(name), bytes)?;
        files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    };
    let mut cfg = serde_json::to_vec_pretty(config)?;
    cfg.push(b'\n');
    put("config.json", &cfg)?;
    for (name, bytes) in artifacts {
        put(name, bytes)?;
    }
    let manifest = Manifest { schema_version: MANIFEST_SCHEMA, files };
    let mut m = serde_json::to_vec_pretty(&manifest)?;
    m.push(b'\n');
    fs::write(out_dir.join(MANIFEST_NAME), m)?;
    Ok(manifest)
}

/// Re-hashes every listed file.
pub fn verify_manifest(out_dir: &Path) -> Result<Manifest> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(out_dir.join(MANIFEST_NAME))?)?;
    for (name, want) in &manifest.files {
        let got = sha256_hex(&fs::read(out_dir.join(name))?);
        if &got != want {
            return Err(QalError::Manifest(format!("{name}: hash {got} does not match {want}")));
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> RawImages {
        RawImages {
            rows: 2,
            cols: 3,
            pixels: vec![vec![0, 1, 2, 3, 4, 255], vec![9, 8, 7, 6, 5, 4]],
            labels: vec![3, 7],
        }
    }

    #[test]
    fn idx_round_trip_plain_and_gz() {
        let dir = tempfile::tempdir().unwrap();
        let raw = fixture();
        for ext in ["", ".gz"] {
            let (i, l) = (dir.path().join(format!("img{ext}")), dir.path().join(format!("lab{ext}")));
            write_idx(&raw, &i, &l).unwrap();
            assert_eq!(load_idx(&i, &l).unwrap(), raw);
        }
    }

    #[test]
    fn idx_errors() {
        let raw = fixture();
        let mut bad = encode_idx_images(&raw);
        bad[3] = 0x01;
        assert!(matches!(parse_idx_images(&bad), Err(QalError::Idx(_))));
        let img = encode_idx_images(&raw);
        assert!(parse_idx_images(&img[..img.len() - 1]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let (i, l) = (dir.path().join("i"), dir.path().join("l"));
        fs::write(&i, encode_idx_images(&raw)).unwrap();
        fs::write(&l, encode_idx_labels(&[1, 2, 3])).unwrap();
        let err = load_idx(&i, &l).unwrap_err();
        assert!(err.to_string().contains("2 images but 3 labels"));
    }

    #[test]
    fn constant_image_maps_to_pi() {
        let raw = RawImages { rows: 28, cols: 28, pixels: vec![vec![255; 784], vec![0; 784]], labels: vec![1, 9] };
        let ds = preprocess(&raw, 10, &[1, 9], AngleScale::Pi).unwrap();
        let Payload::Classical(x) = &ds.samples[0].payload else { panic!() };
        assert_eq!(x.len(), 100);
        assert!(x.iter().all(|v| (v - std::f64::consts::PI).abs() < 1e-12));
        assert_eq!(ds.samples[1].label, 1);
        assert!(preprocess(&raw, 10, &[1, 4], AngleScale::Pi).is_err());
    }

    #[test]
    fn full_side_is_pure_normalization() {
        let px: Vec<u8> = (0..784).map(|i| (i % 256) as u8).collect();
        let raw = RawImages { rows: 28, cols: 28, pixels: vec![px.clone(), px.clone()], labels: vec![0, 1] };
        let ds = preprocess(&raw, 28, &[0, 1], AngleScale::Unit).unwrap();
        let Payload::Classical(x) = &ds.samples[0].payload else { panic!() };
        for (a, b) in x.iter().zip(&px) {
            assert!((a - *b as f64 / 255.0).abs() < 1e-15);
        }
    }

    #[test]
    fn checkerboard_block_means() {
        let px: Vec<f64> = (0..784).map(|i| if (i / 28 + i % 28) % 2 == 0 { 255.0 } else { 0.0 }).collect();
        let out = resize_area(&px, 28, 28, 10);
        // oracle: integrate the source over each 2.8 x 2.8 output cell
        for r in 0..10 {
            for c in 0..10 {
                let (r0, r1, c0, c1) = (r as f64 * 2.8, (r + 1) as f64 * 2.8, c as f64 * 2.8, (c + 1) as f64 * 2.8);
                let mut acc = 0.0;
                for i in 0..28 {
                    for j in 0..28 {
                        let wr = (r1.min(i as f64 + 1.0) - r0.max(i as f64)).max(0.0);
                        let wc = (c1.min(j as f64 + 1.0) - c0.max(j as f64)).max(0.0);
                        acc += wr * wc * px[i * 28 + j];
                    }
                }
                assert!((out[r * 10 + c] - acc / 7.84).abs() < 1e-12);
            }
        }
        let side5 = resize_area(&px, 28, 28, 5);
        assert!(side5.iter().all(|v| (0.0..=255.0).contains(v)));
    }

    #[test]
    fn resize_then_normalize_commutes() {
        let px: Vec<f64> = (0..784).map(|i| ((i * 37) % 256) as f64).collect();
        let a: Vec<f64> = resize_area(&px, 28, 28, 10).iter().map(|v| v / 255.0).collect();
        let scaled: Vec<f64> = px.iter().map(|v| v / 255.0).collect();
        let b = resize_area(&scaled, 28, 28, 10);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn aubry_andre_dataset_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ds = gen_aubry_andre_dataset(10_000, 2, &mut rng).unwrap();
        for (s, v) in ds.samples.iter().zip(&ds.params) {
            assert_eq!(s.label, usize::from(*v > 2.0));
        }
        let frac = ds.label_counts()[1] as f64 / 1e4;
        assert!((frac - 0.5).abs() < 4.0 * (0.25f64 / 1e4).sqrt());
        assert_eq!(aubry_andre_label(1.0, 0.0), 0);
        assert_eq!(aubry_andre_label(1.0, 4.0), 1);
        let again = gen_aubry_andre_dataset(10_000, 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn cluster_ising_dataset_is_reproducible() {
        let a = gen_cluster_ising_dataset(6, 4, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let b = gen_cluster_ising_dataset(6, 4, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(cluster_ising_label(0.0), 0);
        assert_eq!(cluster_ising_label(2.0), 1);
    }

    #[test]
    fn split_properties() {
        let samples = (0..1000).map(|i| Sample { payload: Payload::Classical(vec![i as f64]), label: i % 2 }).collect();
        let ds = LabeledDataset::new(DatasetKind::Classical, 2, samples).unwrap();
        let (tr, te) = split(&ds, 500, 7).unwrap();
        assert_eq!((tr.len(), te.len()), (500, 500));
        assert!(tr.source_indices.iter().all(|i| !te.source_indices.contains(i)));
        assert_eq!(split(&ds, 500, 7).unwrap().0, tr);
        let (all, none) = split(&ds, 0, 7).unwrap();
        assert_eq!((all.len(), none.len()), (1000, 0));
        assert!(split(&ds, 1001, 7).is_err());
    }

    #[test]
    fn invalid_labels_rejected() {
        let s = vec![Sample { payload: Payload::Classical(vec![0.0]), label: 2 }];
        assert!(LabeledDataset::new(DatasetKind::Classical, 2, s).is_err());
        let mixed = vec![
            Sample { payload: Payload::Classical(vec![0.0]), label: 0 },
            Sample { payload: Payload::Classical(vec![0.0, 1.0]), label: 1 },
        ];
        assert!(LabeledDataset::new(DatasetKind::Classical, 2, mixed).is_err());
    }

    #[test]
    fn manifest_round_trip_and_tamper() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = serde_json::json!({"seed": 3});
        let m = persist(dir.path(), &cfg, &[]).unwrap();
        assert_eq!(m.files.len(), 1);
        let arts = vec![("trace.csv".to_string(), b"step,loss\n0,0.5\n".to_vec())];
        let m1 = persist(dir.path(), &cfg, &arts).unwrap();
        let m2 = persist(dir.path(), &cfg, &arts).unwrap();
        assert_eq!(m1, m2);
        verify_manifest(dir.path()).unwrap();
        fs::write(dir.path().join("trace.csv"), b"step,loss\n0,0.4\n").unwrap();
        assert!(matches!(verify_manifest(dir.path()), Err(QalError::Manifest(_))));
    }
}
