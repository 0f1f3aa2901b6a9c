//! Extreme learning machine: a random, fixed sigmoid hidden layer whose output
//! weights are fitted by one multi-right-hand-side least-squares solve.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{arg, dim, io_err, Error, Result};
use crate::io::{decode_binary, encode_binary};
use crate::linalg::qr_solve;
use crate::matrix::{dot, DenseMatrix};
use crate::par;
use crate::problem::LsProblem;
use crate::rng::{standard_normal, uniform, Seed};
use crate::solver::{run_multi_rhs, SolveConfig, SolveReport, StopMode, StoppingRule};
use crate::directions::{DirectionStrategy, QnParams};
use crate::sketch::SketchSpec;

pub const IDX_IMAGE_MAGIC: u32 = 2051;
pub const IDX_LABEL_MAGIC: u32 = 2049;

/// Images as flattened row-major rasters with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    images: Vec<Vec<f64>>,
    labels: Vec<usize>,
    width: usize,
    height: usize,
    n_classes: usize,
}

impl ImageDataset {
    pub fn new(
        images: Vec<Vec<f64>>,
        labels: Vec<usize>,
        width: usize,
        height: usize,
        n_classes: usize,
    ) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(dim(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        let d = width * height;
        if let Some(i) = images.iter().position(|im| im.len() != d) {
            return Err(dim(format!("image {i} has {} values, expected {d}", images[i].len())));
        }
        if let Some(i) = labels.iter().position(|&l| l >= n_classes) {
            return Err(arg(format!(
                "label {} of sample {i} is outside 0..{n_classes}",
                labels[i]
            )));
        }
        Ok(Self {
            images,
            labels,
            width,
            height,
            n_classes,
        })
    }

    pub fn images(&self) -> &[Vec<f64>] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dim(&self) -> usize {
        self.width * self.height
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// First `n` samples and the rest.
    pub fn split(&self, n: usize) -> (ImageDataset, ImageDataset) {
        let n = n.min(self.len());
        let part = |r: std::ops::Range<usize>| ImageDataset {
            images: self.images[r.clone()].to_vec(),
            labels: self.labels[r].to_vec(),
            width: self.width,
            height: self.height,
            n_classes: self.n_classes,
        };
        (part(0..n), part(n..self.len()))
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
}

/// Reads an IDX image file (magic 2051, dims count/rows/cols) and its IDX
/// label file (magic 2049, dim count). Pixels are scaled by 1/255; the class
/// count is one more than the largest label.
pub fn read_idx(images_path: &Path, labels_path: &Path) -> Result<ImageDataset> {
    let img = fs::read(images_path).map_err(io_err(images_path))?;
    let lab = fs::read(labels_path).map_err(io_err(labels_path))?;
    let bad = |path: &Path, msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };

    let magic = be_u32(&img, 0).ok_or_else(|| bad(images_path, "missing header".into()))?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(bad(
            images_path,
            format!("image magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}"),
        ));
    }
    let (count, height, width) = match (be_u32(&img, 4), be_u32(&img, 8), be_u32(&img, 12)) {
        (Some(c), Some(r), Some(w)) => (c as usize, r as usize, w as usize),
        _ => return Err(bad(images_path, "truncated header".into())),
    };
    let d = width * height;
    let need = 16 + count * d;
    if img.len() < need {
        return Err(bad(
            images_path,
            format!("truncated payload: {count} images of {d} bytes need {need} bytes, found {}", img.len()),
        ));
    }

    let magic = be_u32(&lab, 0).ok_or_else(|| bad(labels_path, "missing header".into()))?;
    if magic != IDX_LABEL_MAGIC {
        return Err(bad(
            labels_path,
            format!("label magic {magic:#010x}, expected {IDX_LABEL_MAGIC:#010x}"),
        ));
    }
    let n_labels = be_u32(&lab, 4).ok_or_else(|| bad(labels_path, "truncated header".into()))? as usize;
    if n_labels != count {
        return Err(bad(
            labels_path,
            format!("count mismatch: {count} images but {n_labels} labels"),
        ));
    }
    if lab.len() < 8 + count {
        return Err(bad(
            labels_path,
            format!("truncated payload: {count} labels need {} bytes, found {}", 8 + count, lab.len()),
        ));
    }

    let images = img[16..need]
        .chunks_exact(d.max(1))
        .take(count)
        .map(|px| px.iter().map(|&p| p as f64 / 255.0).collect())
        .collect();
    let labels: Vec<usize> = lab[8..8 + count].iter().map(|&l| l as usize).collect();
    let n_classes = labels.iter().max().map_or(0, |&l| l + 1);
    ImageDataset::new(images, labels, width, height, n_classes)
}

/// Writes a dataset in IDX layout, quantizing pixels to `round(255·v)`.
pub fn write_idx(data: &ImageDataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    if data.labels.iter().any(|&l| l > u8::MAX as usize) {
        return Err(arg("IDX labels must fit in one byte"));
    }
    let mut img = Vec::with_capacity(16 + data.len() * data.dim());
    for v in [IDX_IMAGE_MAGIC, data.len() as u32, data.height as u32, data.width as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    for im in &data.images {
        img.extend(im.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    let mut lab = Vec::with_capacity(8 + data.len());
    lab.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(data.len() as u32).to_be_bytes());
    lab.extend(data.labels.iter().map(|&l| l as u8));
    fs::write(images_path, img).map_err(io_err(images_path))?;
    fs::write(labels_path, lab).map_err(io_err(labels_path))
}

/// Rotates a raster by `angle_deg` (counter-clockwise) about its center using
/// bilinear interpolation; samples falling outside the frame read as 0.
pub fn rotate(img: &[f64], width: usize, height: usize, angle_deg: f64) -> Vec<f64> {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let pixel = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= width as isize || y >= height as isize {
            0.0
        } else {
            img[y as usize * width + x as usize]
        }
    };
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            // Inverse map: the output pixel samples the input rotated back by the angle.
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let sx = c * dx + s * dy + cx;
            let sy = -s * dx + c * dy + cy;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let (x0, y0) = (x0 as isize, y0 as isize);
            let mut v = pixel(x0, y0) * (1.0 - fx) * (1.0 - fy);
            if fx > 0.0 {
                v += pixel(x0 + 1, y0) * fx * (1.0 - fy);
            }
            if fy > 0.0 {
                v += pixel(x0, y0 + 1) * (1.0 - fx) * fy;
                if fx > 0.0 {
                    v += pixel(x0 + 1, y0 + 1) * fx * fy;
                }
            }
            out[y * width + x] = v;
        }
    }
    out
}

/// Beta(2, 2) deviate as the median of three uniforms.
pub fn beta22<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let mut u: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    u.sort_by(f64::total_cmp);
    u[1]
}

/// Rotation angle `20(η − 0.5)` degrees for a given `η`.
pub fn rotation_angle(eta: f64) -> f64 {
    20.0 * (eta - 0.5)
}

/// Random rotation with `η ~ Beta(2, 2)`; returns the image and the angle used.
pub fn augment_rotate<R: Rng + ?Sized>(
    img: &[f64],
    width: usize,
    height: usize,
    rng: &mut R,
) -> (Vec<f64>, f64) {
    let angle = rotation_angle(beta22(rng));
    (rotate(img, width, height, angle), angle)
}

/// Appends `copies` randomly rotated versions of every image.
pub fn augment_dataset(data: &ImageDataset, copies: usize, seed: u64) -> ImageDataset {
    let seed = Seed(seed);
    let (w, h) = (data.width, data.height);
    let extra = par::map_indexed(data.len(), |i| {
        let mut rng = seed.stream(i as u64);
        (0..copies)
            .map(|_| augment_rotate(&data.images[i], w, h, &mut rng).0)
            .collect::<Vec<_>>()
    });
    let mut images = data.images.clone();
    let mut labels = data.labels.clone();
    for (i, rotated) in extra.into_iter().enumerate() {
        for im in rotated {
            images.push(im);
            labels.push(data.labels[i]);
        }
    }
    ImageDataset {
        images,
        labels,
        width: w,
        height: h,
        n_classes: data.n_classes,
    }
}

/// Two or more Gaussian classes in `d` dimensions: class means are random
/// directions scaled to norm `separation / 2`, noise is standard normal, and
/// labels cycle through the classes. Stored as `d × 1` "images".
pub fn synthetic_blobs(
    m: usize,
    d: usize,
    n_classes: usize,
    separation: f64,
    seed: u64,
) -> Result<ImageDataset> {
    if n_classes < 2 || d == 0 {
        return Err(arg("need at least two classes and d >= 1"));
    }
    let seed = Seed(seed);
    let mut rng = seed.stream(0);
    let centers: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| standard_normal(&mut rng)).collect();
            let norm = crate::matrix::norm2(&v);
            v.iter().map(|x| x * separation / (2.0 * norm)).collect()
        })
        .collect();
    let mut rng = seed.stream(1);
    let mut images = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let c = i % n_classes;
        images.push(centers[c].iter().map(|mu| mu + standard_normal(&mut rng)).collect());
        labels.push(c);
    }
    ImageDataset::new(images, labels, d, 1, n_classes)
}

/// Supports of the uniform hidden-parameter distributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HiddenInit {
    pub weight_range: (f64, f64),
    pub bias_range: (f64, f64),
}

impl Default for HiddenInit {
    fn default() -> Self {
        Self {
            weight_range: (-1.0, 1.0),
            bias_range: (0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ElmModel {
    d_weights: DenseMatrix,
    biases: Vec<f64>,
    out_weights: Option<DenseMatrix>,
    report: Option<SolveReport>,
}

pub fn init_hidden(n_hidden: usize, d: usize, seed: u64) -> Result<ElmModel> {
    init_hidden_with(n_hidden, d, HiddenInit::default(), seed)
}

pub fn init_hidden_with(n_hidden: usize, d: usize, init: HiddenInit, seed: u64) -> Result<ElmModel> {
    if n_hidden == 0 || d == 0 {
        return Err(arg("n_hidden and d must be positive"));
    }
    let seed = Seed(seed);
    let (wl, wh) = init.weight_range;
    let (bl, bh) = init.bias_range;
    if !(wl <= wh && bl <= bh) {
        return Err(arg("empty hidden-parameter range"));
    }
    let mut rng = seed.stream(0);
    let d_weights = DenseMatrix::from_fn(n_hidden, d, |_, _| uniform(&mut rng, wl, wh));
    let mut rng = seed.stream(1);
    let biases = (0..n_hidden).map(|_| uniform(&mut rng, bl, bh)).collect();
    Ok(ElmModel {
        d_weights,
        biases,
        out_weights: None,
        report: None,
    })
}

impl ElmModel {
    /// Assembles a model from its parts; `out_weights` must be `n_hidden × C`.
    pub fn from_parts(
        d_weights: DenseMatrix,
        biases: Vec<f64>,
        out_weights: Option<DenseMatrix>,
    ) -> Result<Self> {
        if biases.len() != d_weights.rows() {
            return Err(dim("one bias per hidden node"));
        }
        if let Some(x) = &out_weights {
            if x.rows() != d_weights.rows() {
                return Err(dim("out_weights must have n_hidden rows"));
            }
        }
        Ok(Self {
            d_weights,
            biases,
            out_weights,
            report: None,
        })
    }

    pub fn n_hidden(&self) -> usize {
        self.d_weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.d_weights.cols()
    }

    pub fn d_weights(&self) -> &DenseMatrix {
        &self.d_weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn out_weights(&self) -> Option<&DenseMatrix> {
        self.out_weights.as_ref()
    }

    /// Zero until trained.
    pub fn n_classes(&self) -> usize {
        self.out_weights.as_ref().map_or(0, |x| x.cols())
    }

    /// Solver report of the last SQN training, if any.
    pub fn report(&self) -> Option<&SolveReport> {
        self.report.as_ref()
    }
}

/// `h_j(ξ) = 1 / (1 + exp(−d_jᵀξ + δ_j))`.
pub fn feature_map(model: &ElmModel, xi: &[f64]) -> Result<Vec<f64>> {
    if xi.len() != model.dim() {
        return Err(dim(format!("input has {} values, model expects {}", xi.len(), model.dim())));
    }
    Ok(hidden_row(model, xi))
}

fn hidden_row(model: &ElmModel, xi: &[f64]) -> Vec<f64> {
    (0..model.n_hidden())
        .map(|j| 1.0 / (1.0 + (-dot(model.d_weights.row(j), xi) + model.biases[j]).exp()))
        .collect()
}

/// Hidden-layer output matrix `H` (one row per sample) and the ±1
/// one-vs-rest targets `Y` (`y_ij = 1` iff `c_i = j`).
pub fn build_training(model: &ElmModel, data: &ImageDataset) -> Result<(DenseMatrix, DenseMatrix)> {
    if data.is_empty() {
        return Err(arg("empty dataset"));
    }
    if data.dim() != model.dim() {
        return Err(dim(format!("dataset dim {} vs model dim {}", data.dim(), model.dim())));
    }
    let nh = model.n_hidden();
    let mut h = DenseMatrix::zeros(data.len(), nh);
    par::for_each_chunk_mut(h.data_mut(), nh, |i, row| {
        row.copy_from_slice(&hidden_row(model, &data.images[i]));
    });
    let c = data.n_classes;
    let mut y = DenseMatrix::from_fn(data.len(), c, |_, _| -1.0);
    for (i, &l) in data.labels.iter().enumerate() {
        if l >= c {
            return Err(arg(format!("label {l} of sample {i} is outside 0..{c}")));
        }
        y[(i, l)] = 1.0;
    }
    Ok((h, y))
}

#[derive(Debug, Clone)]
pub enum TrainMethod {
    Sqn(SolveConfig),
    QrBaseline,
}

/// Sparse Rademacher `ℓ = p = 50`, `λ₁ = 1e−5`, `tol = 1e−4`, at most 1000
/// iterations, zero initial guess.
pub fn sqn_default_config(m: usize) -> Result<SolveConfig> {
    let ell = 50.min(m);
    let sketch = SketchSpec::sparse_rademacher(m, ell, ell)?;
    let strategy = DirectionStrategy::QuasiNewton(QnParams::new(1e-5, 0.0, f64::INFINITY)?);
    let mut cfg = SolveConfig::new(sketch, strategy);
    cfg.rule = StoppingRule {
        max_iters: 1000,
        tol: 1e-4,
        window: 10,
        mode: StopMode::Both,
    };
    cfg.trace_every = 0;
    Ok(cfg)
}

/// Fits the output weights. Returns a state error when the dataset has fewer
/// samples than hidden nodes (the LS problem is then underdetermined).
pub fn train(model: &ElmModel, data: &ImageDataset, method: &TrainMethod, seed: u64) -> Result<ElmModel> {
    if data.len() < model.n_hidden() {
        return Err(Error::State(format!(
            "{} samples cannot determine {} output weights per class",
            data.len(),
            model.n_hidden()
        )));
    }
    let (h, y) = build_training(model, data)?;
    let mut out = model.clone();
    match method {
        TrainMethod::QrBaseline => {
            out.out_weights = Some(qr_solve(&h, &y)?);
            out.report = None;
        }
        TrainMethod::Sqn(cfg) => {
            let problem = LsProblem::new(h, y)?;
            let (x, report) = run_multi_rhs(&problem, cfg, &[], seed)?;
            out.out_weights = Some(x);
            out.report = Some(report);
        }
    }
    Ok(out)
}

/// `argmax_j h(ξ)ᵀ x_j`, ties to the smaller index.
pub fn classify(model: &ElmModel, xi: &[f64]) -> Result<usize> {
    let x = model
        .out_weights
        .as_ref()
        .ok_or_else(|| Error::State("model is not trained".into()))?;
    let h = feature_map(model, xi)?;
    let mut best = (0, f64::NEG_INFINITY);
    for j in 0..x.cols() {
        let score: f64 = (0..h.len()).map(|i| h[i] * x[(i, j)]).sum();
        if score > best.1 {
            best = (j, score);
        }
    }
    Ok(best.0)
}

/// `1 − misclassified / total`.
pub fn accuracy(model: &ElmModel, data: &ImageDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(arg("empty dataset"));
    }
    let predicted = par::map_indexed(data.len(), |i| classify(model, &data.images[i]));
    let mut wrong = 0usize;
    for (p, &l) in predicted.into_iter().zip(&data.labels) {
        if p? != l {
            wrong += 1;
        }
    }
    Ok(1.0 - wrong as f64 / data.len() as f64)
}

const MODEL_MAGIC: &[u8; 4] = b"ELM1";
const MODEL_VERSION: u32 = 1;

/// Container: `"ELM1"`, version, n_hidden and d as little-endian `u32`, then
/// d_weights, biases (as `n_hidden × 1`) and out_weights (`0 × 0` when
/// untrained) in the binary matrix format.
pub fn save_model(model: &ElmModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&(model.n_hidden() as u32).to_le_bytes());
    buf.extend_from_slice(&(model.dim() as u32).to_le_bytes());
    buf.extend(encode_binary(&model.d_weights));
    buf.extend(encode_binary(&DenseMatrix::column(&model.biases)));
    let empty = DenseMatrix::zeros(0, 0);
    buf.extend(encode_binary(model.out_weights.as_ref().unwrap_or(&empty)));
    fs::write(path, buf).map_err(io_err(path))
}

pub fn load_model(path: &Path) -> Result<ElmModel> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let bad = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < 16 || &bytes[0..4] != MODEL_MAGIC {
        return Err(bad("not an ELM1 model file".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    if word(4) != MODEL_VERSION as usize {
        return Err(bad(format!("unsupported model version {}", word(4))));
    }
    let (nh, d) = (word(8), word(12));
    let mut at = 16;
    let mut next = || -> Result<DenseMatrix> {
        let (m, used) = decode_binary(path, &bytes[at..])?;
        at += used;
        Ok(m)
    };
    let dw = next()?;
    let biases = next()?;
    let out = next()?;
    if dw.shape() != (nh, d) || biases.shape() != (nh, 1) {
        return Err(bad("header dimensions disagree with stored matrices".into()));
    }
    let out = (out.rows() > 0).then_some(out);
    ElmModel::from_parts(dw, biases.into_vec(), out).map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ImageDataset {
        ImageDataset::new(
            vec![vec![0.0, 1.0, 0.2, 0.4], vec![1.0, 0.0, 0.6, 0.8]],
            vec![0, 1],
            2,
            2,
            2,
        )
        .unwrap()
    }

    #[test]
    fn idx_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        write_idx(&tiny(), &ip, &lp).unwrap();
        let img = fs::read(&ip).unwrap();
        assert_eq!(&img[0..4], &[0, 0, 8, 3]);
        assert_eq!(img.len(), 16 + 8);
        let back = read_idx(&ip, &lp).unwrap();
        assert_eq!(back.labels(), &[0, 1]);
        assert_eq!(back.images()[1][0], 1.0);
        assert_eq!((back.width(), back.height()), (2, 2));
        let (ip2, lp2) = (dir.path().join("img2"), dir.path().join("lab2"));
        write_idx(&back, &ip2, &lp2).unwrap();
        assert_eq!(fs::read(&ip2).unwrap(), img);
        assert_eq!(fs::read(&lp2).unwrap(), fs::read(&lp).unwrap());

        let mut wrong = img.clone();
        wrong[3] = 1;
        fs::write(&ip2, &wrong).unwrap();
        let msg = read_idx(&ip2, &lp).unwrap_err().to_string();
        assert!(msg.contains("magic"), "{msg}");
        fs::write(&ip2, &img[..img.len() - 1]).unwrap();
        assert!(read_idx(&ip2, &lp).unwrap_err().to_string().contains("truncated"));
        let mut lab = fs::read(&lp).unwrap();
        lab[7] = 3;
        lab.push(0);
        fs::write(&lp2, &lab).unwrap();
        assert!(read_idx(&ip, &lp2).unwrap_err().to_string().contains("count mismatch"));
    }

    #[test]
    fn rotation_identity_and_constant() {
        let img: Vec<f64> = (0..49).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        assert_eq!(rotate(&img, 7, 7, 0.0), img);
        assert_eq!(rotation_angle(0.5), 0.0);
        let ones = vec![1.0; 81];
        let r = rotate(&ones, 9, 9, 7.0);
        for y in 2..7 {
            for x in 2..7 {
                assert!((r[y * 9 + x] - 1.0).abs() < 1e-12);
            }
        }
        assert!(r.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
        let mut rng = Seed(5).stream(0);
        for _ in 0..1000 {
            let (_, a) = augment_rotate(&img, 7, 7, &mut rng);
            assert!(a.abs() <= 10.0);
        }
    }

    #[test]
    fn ninety_degrees_permutes_pixels() {
        let img: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let r = rotate(&img, 3, 3, 90.0);
        let mut sorted = r.clone();
        sorted.sort_by(f64::total_cmp);
        for (a, b) in sorted.iter().zip(&img) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((r[4] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn beta_moments() {
        let mut rng = Seed(1).stream(0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| beta22(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005);
        assert!((var - 0.05).abs() < 0.002);
    }

    #[test]
    fn hidden_init_ranges_and_seed() {
        let a = init_hidden(300, 20, 9).unwrap();
        assert_eq!(a.n_hidden(), 300);
        assert!(a.d_weights().data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(a.biases().iter().all(|v| (0.0..=1.0).contains(v)));
        let b = init_hidden(300, 20, 9).unwrap();
        assert_eq!(a.d_weights(), b.d_weights());
        assert_eq!(a.biases(), b.biases());
        assert!(init_hidden(0, 3, 1).is_err());
    }

    #[test]
    fn feature_map_cases() {
        let m = ElmModel::from_parts(
            DenseMatrix::from_rows(&[&[1.0, 2.0], &[-3.0, 0.5]]).unwrap(),
            vec![3.0, 0.25],
            None,
        )
        .unwrap();
        let h = feature_map(&m, &[1.0, 1.0]).unwrap();
        assert_eq!(h[0], 0.5);
        let h = feature_map(&m, &[1e3, 1e3]).unwrap();
        assert_eq!(h[0], 1.0);
        assert!(feature_map(&m, &[1.0]).is_err());
        let xi = [0.3, -0.7];
        let h = feature_map(&m, &xi).unwrap();
        for j in 0..2 {
            for k in 0..2 {
                let e = 1e-6;
                let mut p = xi;
                p[k] += e;
                let mut q = xi;
                q[k] -= e;
                let fd = (feature_map(&m, &p).unwrap()[j] - feature_map(&m, &q).unwrap()[j]) / (2.0 * e);
                let exact = h[j] * (1.0 - h[j]) * m.d_weights()[(j, k)];
                assert!((fd - exact).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn training_matrices() {
        let model = init_hidden(5, 4, 3).unwrap();
        let data = ImageDataset::new(vec![vec![0.0; 4], vec![0.5; 4]], vec![3, 0], 2, 2, 10).unwrap();
        let (h, y) = build_training(&model, &data).unwrap();
        assert_eq!(h.shape(), (2, 5));
        for j in 0..5 {
            assert_eq!(h[(0, j)], 1.0 / (1.0 + model.biases()[j].exp()));
        }
        assert_eq!(h.row(1), feature_map(&model, &data.images()[1]).unwrap().as_slice());
        let mut want = vec![-1.0; 10];
        want[3] = 1.0;
        assert_eq!(y.row(0), want.as_slice());
        assert!(ImageDataset::new(vec![vec![0.0; 4]], vec![10], 2, 2, 10).is_err());
    }

    #[test]
    fn classify_picks_dominant_class_and_ties_low() {
        let dw = DenseMatrix::from_rows(&[&[10.0, 0.0], &[0.0, 10.0]]).unwrap();
        let x = DenseMatrix::identity(2);
        let m = ElmModel::from_parts(dw.clone(), vec![0.0, 0.0], Some(x)).unwrap();
        assert_eq!(classify(&m, &[1.0, -1.0]).unwrap(), 0);
        assert_eq!(classify(&m, &[-1.0, 1.0]).unwrap(), 1);
        assert_eq!(classify(&m, &[0.5, 0.5]).unwrap(), 0);
        let untrained = ElmModel::from_parts(dw, vec![0.0, 0.0], None).unwrap();
        assert!(matches!(classify(&untrained, &[0.0, 0.0]), Err(Error::State(_))));
    }

    #[test]
    fn qr_baseline_normal_equations_and_zero_rhs() {
        let data = synthetic_blobs(400, 6, 2, 8.0, 2).unwrap();
        let model = init_hidden(20, 6, 4).unwrap();
        let trained = train(&model, &data, &TrainMethod::QrBaseline, 0).unwrap();
        let (h, y) = build_training(&model, &data).unwrap();
        let x = trained.out_weights().unwrap();
        let r = h.matmul(x).unwrap().sub(&y).unwrap();
        let g = h.t_matmul(&r).unwrap();
        assert!(g.max_abs() < 1e-8 * (1.0 + y.frobenius_norm()), "{}", g.max_abs());
        assert!(accuracy(&trained, &data).unwrap() >= 0.95);
        let zero = qr_solve(&h, &DenseMatrix::zeros(400, 2)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn too_few_samples_is_state_error() {
        let data = synthetic_blobs(10, 3, 2, 4.0, 1).unwrap();
        let model = init_hidden(20, 3, 1).unwrap();
        assert!(matches!(
            train(&model, &data, &TrainMethod::QrBaseline, 0),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn model_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.elm");
        let data = synthetic_blobs(100, 4, 2, 4.0, 2).unwrap();
        let model = init_hidden(8, 4, 4).unwrap();
        save_model(&model, &p).unwrap();
        let back = load_model(&p).unwrap();
        assert!(back.out_weights().is_none());
        let trained = train(&model, &data, &TrainMethod::QrBaseline, 0).unwrap();
        save_model(&trained, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[0..4], b"ELM1");
        let back = load_model(&p).unwrap();
        assert_eq!(back.out_weights(), trained.out_weights());
        assert_eq!(back.d_weights(), trained.d_weights());
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(load_model(&p).is_err());
    }
}
