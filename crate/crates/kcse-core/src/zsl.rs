//! Zero-shot learning baselines with optional commonsense-embedding fusion.
//!
//! Two variants share the plumbing. DeZSL maps (possibly fused) class
//! embeddings through two relu FC layers into visual space and classifies a
//! query by nearest prototype. The relation network (RN) maps class
//! embeddings through one relu FC layer, concatenates the result with the
//! visual feature, and scores the pair through a relu FC layer topped by a
//! single shared sigmoid unit; stacking the pair scores over the M training
//! classes reproduces the M-way score vector, and the same shared unit
//! scores unseen candidates at inference.
//!
//! Fusion: each of two branches passes through its own relu FC layer and the
//! outputs are concatenated. With three sources the raw HA and DWE vectors
//! concatenate to form the semantic branch and CSE takes the other branch.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::cse::ClassManifest;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::normalize_concept;
use crate::rgcn::xavier_fill;
use crate::rng::stream;
use crate::tensor::{
    fc_forward, Activation, AdamConfig, AdamState, Matrix, ParamStore, Tape, TapeId,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZslVariant {
    DeZsl,
    Rn,
}

impl FromStr for ZslVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "dezsl" => Ok(ZslVariant::DeZsl),
            "rn" => Ok(ZslVariant::Rn),
            other => Err(Error::Config(format!(
                "unknown variant '{other}' (expected dezsl or rn)"
            ))),
        }
    }
}

/// Which per-class embedding sources feed the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EmbeddingSources {
    pub ha: bool,
    pub dwe: bool,
    pub cse: bool,
}

impl EmbeddingSources {
    pub fn parse(s: &str) -> Result<Self> {
        let mut out = EmbeddingSources::default();
        for part in s.split('+') {
            match part.trim().to_lowercase().as_str() {
                "ha" => out.ha = true,
                "dwe" => out.dwe = true,
                "cse" => out.cse = true,
                other => {
                    return Err(Error::Config(format!(
                        "unknown embedding source '{other}' (expected ha, dwe, cse)"
                    )))
                }
            }
        }
        if out.count() == 0 {
            return Err(Error::Config("at least one embedding source required".into()));
        }
        Ok(out)
    }

    pub fn count(&self) -> usize {
        usize::from(self.ha) + usize::from(self.dwe) + usize::from(self.cse)
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.ha {
            parts.push("ha");
        }
        if self.dwe {
            parts.push("dwe");
        }
        if self.cse {
            parts.push("cse");
        }
        parts.join("+")
    }
}

impl std::fmt::Display for EmbeddingSources {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

#[derive(Debug, Clone)]
pub struct ZslConfig {
    pub variant: ZslVariant,
    pub sources: EmbeddingSources,
    /// Width p of the semantic fusion branch.
    pub fusion_width: usize,
    /// FC_a / FC_c output width.
    pub theta_hidden: usize,
    /// FC_d output width (RN only).
    pub rn_hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    /// Stratified fraction of seen-class images held out for early stopping.
    pub val_fraction: f64,
    pub patience: usize,
    pub seed: u64,
}

impl ZslConfig {
    pub fn new(variant: ZslVariant, sources: EmbeddingSources) -> Self {
        ZslConfig {
            variant,
            sources,
            fusion_width: 1024,
            theta_hidden: 1024,
            rn_hidden: 1024,
            lr: 1e-5,
            epochs: 2000,
            batch: 64,
            val_fraction: 0.10,
            patience: 100,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.count() == 0 {
            return Err(Error::Config("no embedding sources configured".into()));
        }
        if self.batch == 0 || self.epochs == 0 {
            return Err(Error::Config("batch and epochs must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.val_fraction) {
            return Err(Error::Config(format!(
                "validation fraction must be in [0, 0.5), got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

/// Per-image visual embeddings with image ids and class labels.
#[derive(Debug, Clone)]
pub struct VisualData {
    pub image_ids: Vec<String>,
    pub labels: Vec<String>,
    pub features: Matrix,
}

impl VisualData {
    pub fn len(&self) -> usize {
        self.image_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

pub fn read_visual(path: &Path) -> Result<VisualData> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let fail = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let (_, header) = lines
        .next()
        .ok_or_else(|| fail(1, "missing 'count dim' header".into()))?;
    let header = header.map_err(|e| Error::io(path, e))?;
    let mut parts = header.split_whitespace();
    let count: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| fail(1, "bad count".into()))?;
    let dim: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| fail(1, "bad dim".into()))?;

    let mut image_ids = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count * dim);
    for _ in 0..count {
        let (idx, line) = lines
            .next()
            .ok_or_else(|| fail(count + 1, format!("expected {count} rows")))?;
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let id = parts
            .next()
            .ok_or_else(|| fail(idx + 1, "missing image id".into()))?;
        let label = parts
            .next()
            .ok_or_else(|| fail(idx + 1, "missing class label".into()))?;
        let values: std::result::Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
        let values = values.map_err(|e| fail(idx + 1, format!("bad float: {e}")))?;
        if values.len() != dim {
            return Err(fail(
                idx + 1,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        image_ids.push(id.to_string());
        labels.push(normalize_concept(label));
        data.extend(values);
    }
    Ok(VisualData {
        image_ids,
        labels,
        features: Matrix::from_vec(count, dim, data),
    })
}

pub fn write_visual(visual: &VisualData, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{} {}", visual.len(), visual.dim()).map_err(|e| Error::io(path, e))?;
    for i in 0..visual.len() {
        let values: Vec<String> = visual
            .features
            .row(i)
            .iter()
            .map(|v| format!("{v}"))
            .collect();
        writeln!(
            w,
            "{} {} {}",
            visual.image_ids[i],
            visual.labels[i],
            values.join(" ")
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Everything one experiment needs: visual embeddings, the class split, and
/// whichever per-class embedding tables are configured.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub visual: VisualData,
    pub manifest: ClassManifest,
    pub ha: Option<EmbeddingTable>,
    pub dwe: Option<EmbeddingTable>,
    pub cse: Option<EmbeddingTable>,
}

impl DatasetBundle {
    /// Check the bundle invariants for the configured sources: labels fall
    /// in the split, and every manifest class has every configured
    /// embedding.
    pub fn validate(&self, sources: EmbeddingSources) -> Result<()> {
        let seen: HashMap<&str, usize> = self
            .manifest
            .seen()
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let unseen: HashMap<&str, usize> = self
            .manifest
            .unseen()
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        for label in &self.visual.labels {
            if !seen.contains_key(label.as_str()) && !unseen.contains_key(label.as_str()) {
                return Err(Error::Config(format!(
                    "image label '{label}' is in neither the seen nor the unseen split"
                )));
            }
        }
        for (flag, table, kind) in [
            (sources.ha, &self.ha, "ha"),
            (sources.dwe, &self.dwe, "dwe"),
            (sources.cse, &self.cse, "cse"),
        ] {
            if !flag {
                continue;
            }
            let table = table.as_ref().ok_or_else(|| {
                Error::Config(format!("source '{kind}' configured but no table loaded"))
            })?;
            let missing: Vec<String> = self
                .manifest
                .all()
                .filter(|c| table.get(c).is_none())
                .cloned()
                .collect();
            if !missing.is_empty() {
                return Err(Error::MissingClasses(missing));
            }
        }
        Ok(())
    }

    /// Indices of images labeled with seen classes / unseen classes.
    pub fn train_test_indices(&self) -> (Vec<usize>, Vec<usize>) {
        let seen: HashMap<&str, usize> = self
            .manifest
            .seen()
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, label) in self.visual.labels.iter().enumerate() {
            if seen.contains_key(label.as_str()) {
                train.push(i);
            } else {
                test.push(i);
            }
        }
        (train, test)
    }

    /// Raw branch inputs for `classes`: (semantic branch, other branch).
    /// One source: (that source, None). Two: (first, second) in HA, DWE,
    /// CSE priority order. Three: (HA concat DWE, CSE).
    pub fn branch_inputs(
        &self,
        sources: EmbeddingSources,
        classes: &[String],
    ) -> Result<(Matrix, Option<Matrix>)> {
        let ha = || self.ha.as_ref().expect("validated").gather(classes);
        let dwe = || self.dwe.as_ref().expect("validated").gather(classes);
        let cse = || self.cse.as_ref().expect("validated").gather(classes);
        match (sources.ha, sources.dwe, sources.cse) {
            (true, false, false) => Ok((ha()?, None)),
            (false, true, false) => Ok((dwe()?, None)),
            (false, false, true) => Ok((cse()?, None)),
            (true, true, false) => Ok((ha()?, Some(dwe()?))),
            (true, false, true) => Ok((ha()?, Some(cse()?))),
            (false, true, true) => Ok((dwe()?, Some(cse()?))),
            (true, true, true) => {
                let a = ha()?;
                let b = dwe()?;
                let mut joined = Matrix::zeros(a.rows(), a.cols() + b.cols());
                for i in 0..a.rows() {
                    joined.row_mut(i)[..a.cols()].copy_from_slice(a.row(i));
                    joined.row_mut(i)[a.cols()..].copy_from_slice(b.row(i));
                }
                Ok((joined, Some(cse()?)))
            }
            (false, false, false) => Err(Error::Config("no embedding sources".into())),
        }
    }
}

/// Resolved layer dimensions of one model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZslDims {
    /// Visual dimension.
    pub m: usize,
    /// Raw width of the semantic branch.
    pub a_dim: usize,
    /// Raw width of the other branch; 0 without fusion.
    pub b_dim: usize,
    /// Fusion output widths; 0 without fusion.
    pub p: usize,
    pub q: usize,
    /// Width of s' entering the theta network.
    pub fused: usize,
}

#[derive(Debug, Clone)]
pub struct ZslModel {
    pub config: ZslConfig,
    pub dims: ZslDims,
    pub seen_classes: Vec<String>,
    pub store: ParamStore,
}

fn resolve_dims(bundle: &DatasetBundle, config: &ZslConfig) -> Result<ZslDims> {
    let probe = vec![bundle.manifest.seen()[0].clone()];
    let (a, b) = bundle.branch_inputs(config.sources, &probe)?;
    let m = bundle.visual.dim();
    let a_dim = a.cols();
    match b {
        None => Ok(ZslDims {
            m,
            a_dim,
            b_dim: 0,
            p: 0,
            q: 0,
            fused: a_dim,
        }),
        Some(b) => {
            let p = config.fusion_width;
            // The paper pins the CSE-branch output to the visual width for
            // DeZSL; RN keeps the configured width.
            let q = match config.variant {
                ZslVariant::DeZsl => m,
                ZslVariant::Rn => config.fusion_width,
            };
            Ok(ZslDims {
                m,
                a_dim,
                b_dim: b.cols(),
                p,
                q,
                fused: p + q,
            })
        }
    }
}

impl ZslModel {
    /// Fresh model with Xavier weights and zero biases.
    pub fn init(bundle: &DatasetBundle, config: ZslConfig) -> Result<Self> {
        config.validate()?;
        bundle.validate(config.sources)?;
        if bundle.manifest.seen().is_empty() {
            return Err(Error::Empty("seen classes"));
        }
        let dims = resolve_dims(bundle, &config)?;
        let mut store = ParamStore::new();
        let mut rng = stream(config.seed, "zsl:init");
        if dims.b_dim > 0 {
            store.insert("fusion.FCe.W", xavier_fill(dims.p, dims.a_dim, &mut rng));
            store.insert("fusion.FCe.b", Matrix::zeros(1, dims.p));
            store.insert("fusion.FCf.W", xavier_fill(dims.q, dims.b_dim, &mut rng));
            store.insert("fusion.FCf.b", Matrix::zeros(1, dims.q));
        }
        match config.variant {
            ZslVariant::DeZsl => {
                store.insert(
                    "theta.FCa.W",
                    xavier_fill(config.theta_hidden, dims.fused, &mut rng),
                );
                store.insert("theta.FCa.b", Matrix::zeros(1, config.theta_hidden));
                store.insert(
                    "theta.FCb.W",
                    xavier_fill(dims.m, config.theta_hidden, &mut rng),
                );
                store.insert("theta.FCb.b", Matrix::zeros(1, dims.m));
            }
            ZslVariant::Rn => {
                store.insert(
                    "theta.FCc.W",
                    xavier_fill(config.theta_hidden, dims.fused, &mut rng),
                );
                store.insert("theta.FCc.b", Matrix::zeros(1, config.theta_hidden));
                store.insert(
                    "rn.FCd.W",
                    xavier_fill(config.rn_hidden, config.theta_hidden + dims.m, &mut rng),
                );
                store.insert("rn.FCd.b", Matrix::zeros(1, config.rn_hidden));
                store.insert("rn.out.W", xavier_fill(1, config.rn_hidden, &mut rng));
                store.insert("rn.out.b", Matrix::zeros(1, 1));
            }
        }
        Ok(ZslModel {
            config,
            dims,
            seen_classes: bundle.manifest.seen().to_vec(),
            store,
        })
    }

    /// Rebuild a model around checkpointed parameters, verifying every
    /// shape against the bundle's dimensions.
    pub fn from_store(bundle: &DatasetBundle, config: ZslConfig, store: ParamStore) -> Result<Self> {
        let fresh = ZslModel::init(bundle, config)?;
        for name in fresh.store.names() {
            let want = fresh.store.get(name).unwrap();
            let got = store.get(name).ok_or_else(|| {
                Error::Config(format!("checkpoint is missing parameter '{name}'"))
            })?;
            if (got.rows(), got.cols()) != (want.rows(), want.cols()) {
                return Err(Error::Dimension(format!(
                    "checkpoint parameter '{name}' is {}x{} but the configured data needs {}x{}",
                    got.rows(),
                    got.cols(),
                    want.rows(),
                    want.cols()
                )));
            }
        }
        Ok(ZslModel {
            store,
            ..fresh
        })
    }

    /// s' for the given raw branch constants, on the tape.
    fn s_prime_on_tape(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        a: Matrix,
        b: Option<Matrix>,
    ) -> TapeId {
        let a_id = tape.constant(a);
        match b {
            None => a_id,
            Some(b) => {
                let b_id = tape.constant(b);
                let ew = tape.param(store, "fusion.FCe.W");
                let eb = tape.param(store, "fusion.FCe.b");
                let fw = tape.param(store, "fusion.FCf.W");
                let fb = tape.param(store, "fusion.FCf.b");
                let ah = tape.linear(a_id, ew, Some(eb));
                let ah = tape.relu(ah);
                let bh = tape.linear(b_id, fw, Some(fb));
                let bh = tape.relu(bh);
                tape.concat_cols(ah, bh)
            }
        }
    }

    /// DeZSL prototypes for s' rows: relu(FC_b(relu(FC_a(s')))).
    fn prototypes_on_tape(&self, store: &ParamStore, tape: &mut Tape, s_prime: TapeId) -> TapeId {
        let wa = tape.param(store, "theta.FCa.W");
        let ba = tape.param(store, "theta.FCa.b");
        let wb = tape.param(store, "theta.FCb.W");
        let bb = tape.param(store, "theta.FCb.b");
        let h = tape.linear(s_prime, wa, Some(ba));
        let h = tape.relu(h);
        let out = tape.linear(h, wb, Some(bb));
        tape.relu(out)
    }

    /// RN semantic module for s' rows: relu(FC_c(s')).
    fn rn_theta_on_tape(&self, store: &ParamStore, tape: &mut Tape, s_prime: TapeId) -> TapeId {
        let wc = tape.param(store, "theta.FCc.W");
        let bc = tape.param(store, "theta.FCc.b");
        let h = tape.linear(s_prime, wc, Some(bc));
        tape.relu(h)
    }

    /// Pair scores for every (image, class) combination: rows are ordered
    /// image-major, (i, j) at row i*C + j. Output is sigmoid in (0,1).
    fn rn_pair_scores_on_tape(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        theta_out: TapeId,
        visual_rows: &Matrix,
    ) -> TapeId {
        let c = tape.value(theta_out).rows();
        let b_count = visual_rows.rows();
        let idx: Vec<usize> = (0..b_count).flat_map(|_| 0..c).collect();
        let tiled = tape.gather_rows(theta_out, idx);
        let mut rep = Matrix::zeros(b_count * c, visual_rows.cols());
        for i in 0..b_count {
            for j in 0..c {
                rep.row_mut(i * c + j).copy_from_slice(visual_rows.row(i));
            }
        }
        let rep = tape.constant(rep);
        let cat = tape.concat_cols(tiled, rep);
        let wd = tape.param(store, "rn.FCd.W");
        let bd = tape.param(store, "rn.FCd.b");
        let gam = tape.linear(cat, wd, Some(bd));
        let gam = tape.relu(gam);
        let wo = tape.param(store, "rn.out.W");
        let bo = tape.param(store, "rn.out.b");
        let logits = tape.linear(gam, wo, Some(bo));
        tape.sigmoid(logits)
    }

    /// Forward-only class embeddings s' for any class list (seen or unseen).
    pub fn class_embeddings(&self, bundle: &DatasetBundle, classes: &[String]) -> Result<Matrix> {
        let (a, b) = bundle.branch_inputs(self.config.sources, classes)?;
        self.check_branch_dims(&a, b.as_ref())?;
        let mut tape = Tape::new();
        let s = self.s_prime_on_tape(&self.store, &mut tape, a, b);
        Ok(tape.value(s).clone())
    }

    fn check_branch_dims(&self, a: &Matrix, b: Option<&Matrix>) -> Result<()> {
        if a.cols() != self.dims.a_dim {
            return Err(Error::Dimension(format!(
                "semantic branch is {}-dimensional but the model was built for {}",
                a.cols(),
                self.dims.a_dim
            )));
        }
        if let Some(b) = b {
            if b.cols() != self.dims.b_dim {
                return Err(Error::Dimension(format!(
                    "second branch is {}-dimensional but the model was built for {}",
                    b.cols(),
                    self.dims.b_dim
                )));
            }
        } else if self.dims.b_dim != 0 {
            return Err(Error::Dimension(
                "model expects two branches but one was provided".into(),
            ));
        }
        Ok(())
    }

    /// DeZSL prototypes for arbitrary s' rows (forward only).
    pub fn dezsl_prototypes(&self, s_prime: &Matrix) -> Matrix {
        let mut tape = Tape::new();
        let s = tape.constant(s_prime.clone());
        let p = self.prototypes_on_tape(&self.store, &mut tape, s);
        tape.value(p).clone()
    }

    /// RN score vector for one image against a stack of class embeddings.
    pub fn rn_score(&self, class_embeddings: &Matrix, fx: &[f64]) -> Vec<f64> {
        let mut tape = Tape::new();
        let s = tape.constant(class_embeddings.clone());
        let theta = self.rn_theta_on_tape(&self.store, &mut tape, s);
        let visual = Matrix::from_rows(&[fx.to_vec()]);
        let scores = self.rn_pair_scores_on_tape(&self.store, &mut tape, theta, &visual);
        tape.value(scores).data().to_vec()
    }
}

/// Two-branch fusion as a standalone op on explicit layers:
/// concat(relu(FCe s), relu(FCf c)).
pub fn fuse(
    fce_w: &Matrix,
    fce_b: &Matrix,
    fcf_w: &Matrix,
    fcf_b: &Matrix,
    s_y: &[f64],
    cse_y: &[f64],
) -> Result<Vec<f64>> {
    let s = Matrix::from_rows(&[s_y.to_vec()]);
    let c = Matrix::from_rows(&[cse_y.to_vec()]);
    let a = fc_forward(fce_w, fce_b, &s, Activation::Relu)?;
    let b = fc_forward(fcf_w, fcf_b, &c, Activation::Relu)?;
    let mut out = a.row(0).to_vec();
    out.extend_from_slice(b.row(0));
    Ok(out)
}

/// DeZSL objective: mean over rows of the squared Euclidean distance
/// between prototype and visual feature.
pub fn dezsl_loss(prototypes: &Matrix, visual: &Matrix) -> Result<f64> {
    if (prototypes.rows(), prototypes.cols()) != (visual.rows(), visual.cols()) {
        return Err(Error::Shape(format!(
            "prototypes {}x{} vs visual {}x{}",
            prototypes.rows(),
            prototypes.cols(),
            visual.rows(),
            visual.cols()
        )));
    }
    if prototypes.rows() == 0 {
        return Err(Error::Empty("batch"));
    }
    let mut total = 0.0;
    for (p, v) in prototypes.data().iter().zip(visual.data()) {
        let d = p - v;
        total += d * d;
    }
    Ok(total / prototypes.rows() as f64)
}

/// RN objective: mean over images of the summed squared gap between pair
/// scores and the one-hot match indicator.
pub fn rn_loss(scores: &Matrix, targets: &Matrix) -> Result<f64> {
    if (scores.rows(), scores.cols()) != (targets.rows(), targets.cols()) {
        return Err(Error::Shape(format!(
            "scores {}x{} vs targets {}x{}",
            scores.rows(),
            scores.cols(),
            targets.rows(),
            targets.cols()
        )));
    }
    if scores.rows() == 0 {
        return Err(Error::Empty("batch"));
    }
    let mut total = 0.0;
    for (s, t) in scores.data().iter().zip(targets.data()) {
        let d = s - t;
        total += d * d;
    }
    Ok(total / scores.rows() as f64)
}

/// Nearest prototype by squared Euclidean distance (same argmin as the
/// Euclidean distance of the paper); ties break to the lowest index.
pub fn dezsl_infer(prototypes: &Matrix, fx: &[f64]) -> Result<usize> {
    if prototypes.rows() == 0 {
        return Err(Error::Empty("candidates"));
    }
    if prototypes.cols() != fx.len() {
        return Err(Error::Dimension(format!(
            "prototypes are {}-dimensional, query is {}-dimensional",
            prototypes.cols(),
            fx.len()
        )));
    }
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for i in 0..prototypes.rows() {
        let mut d = 0.0;
        for (p, x) in prototypes.row(i).iter().zip(fx) {
            let diff = p - x;
            d += diff * diff;
        }
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    Ok(best)
}

/// Highest pair score wins; ties break to the lowest index.
pub fn rn_infer(model: &ZslModel, class_embeddings: &Matrix, fx: &[f64]) -> Result<usize> {
    if class_embeddings.rows() == 0 {
        return Err(Error::Empty("candidates"));
    }
    let scores = model.rn_score(class_embeddings, fx);
    let mut best = 0;
    let mut best_s = f64::NEG_INFINITY;
    for (i, &s) in scores.iter().enumerate() {
        if s > best_s {
            best_s = s;
            best = i;
        }
    }
    Ok(best)
}

/// Fraction of exact matches.
pub fn top1_accuracy<S: AsRef<str>>(predictions: &[S], truths: &[S]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let hits = predictions
        .iter()
        .zip(truths)
        .filter(|(p, t)| p.as_ref() == t.as_ref())
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

#[derive(Debug, Clone, Default)]
pub struct ZslTrainReport {
    pub loss_history: Vec<f64>,
    pub val_history: Vec<f64>,
    pub stopped_epoch: Option<usize>,
}

/// Train a fresh model on the bundle's seen-class images.
pub fn train_zsl(bundle: &DatasetBundle, config: ZslConfig) -> Result<(ZslModel, ZslTrainReport)> {
    let model = ZslModel::init(bundle, config)?;
    train_zsl_from(model, bundle)
}

fn train_zsl_from(mut model: ZslModel, bundle: &DatasetBundle) -> Result<(ZslModel, ZslTrainReport)> {
    let config = model.config.clone();
    let seen_index: HashMap<&str, usize> = model
        .seen_classes
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let (train_all, _) = bundle.train_test_indices();
    if train_all.is_empty() {
        return Err(Error::Empty("training images"));
    }
    let labels: Vec<usize> = train_all
        .iter()
        .map(|&i| seen_index[bundle.visual.labels[i].as_str()])
        .collect();

    // Stratified validation split over seen-class images.
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); model.seen_classes.len()];
    for (pos, &img) in train_all.iter().enumerate() {
        by_class[labels[pos]].push(img);
    }
    let mut val_set: Vec<usize> = Vec::new();
    let mut train_set: Vec<usize> = Vec::new();
    let mut rng_val = stream(config.seed, "zsl:valsplit");
    for class_imgs in &mut by_class {
        let k = (class_imgs.len() as f64 * config.val_fraction).floor() as usize;
        for i in 0..k {
            let j = rng_val.random_range(i..class_imgs.len());
            class_imgs.swap(i, j);
        }
        val_set.extend_from_slice(&class_imgs[..k]);
        train_set.extend_from_slice(&class_imgs[k..]);
    }
    if train_set.is_empty() {
        return Err(Error::Empty("training images after validation split"));
    }

    let label_of = |img: usize| seen_index[bundle.visual.labels[img].as_str()];
    let (a_raw, b_raw) = bundle.branch_inputs(config.sources, &model.seen_classes)?;
    model.check_branch_dims(&a_raw, b_raw.as_ref())?;

    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr));
    let mut rng_batch = stream(config.seed, "zsl:batches");
    let mut report = ZslTrainReport::default();
    let mut order = train_set.clone();
    let mut best_val = f64::INFINITY;
    let mut since_best = 0usize;

    for epoch in 0..config.epochs {
        for i in 0..order.len() {
            let j = rng_batch.random_range(i..order.len());
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut counted = 0usize;
        for chunk in order.chunks(config.batch) {
            let mut tape = Tape::new();
            let loss = step_loss(
                &model,
                &model.store,
                &mut tape,
                bundle,
                a_raw.clone(),
                b_raw.clone(),
                chunk,
                &label_of,
            );
            epoch_loss += tape.scalar_value(loss) * chunk.len() as f64;
            counted += chunk.len();
            tape.backward(loss, &mut model.store);
            adam.step(&mut model.store);
        }
        report.loss_history.push(epoch_loss / counted as f64);

        if !val_set.is_empty() {
            let mut tape = Tape::new();
            let loss = step_loss(
                &model,
                &model.store,
                &mut tape,
                bundle,
                a_raw.clone(),
                b_raw.clone(),
                &val_set,
                &label_of,
            );
            let val = tape.scalar_value(loss);
            report.val_history.push(val);
            if val < best_val - 1e-12 {
                best_val = val;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > config.patience {
                    report.stopped_epoch = Some(epoch);
                    break;
                }
            }
        }
    }
    Ok((model, report))
}

/// The training objective over `images` (indices into the bundle's visual
/// table, all labeled with seen classes), recorded on the tape. Useful for
/// gradient verification; training uses the same path.
pub fn training_loss_on_tape(
    model: &ZslModel,
    store: &ParamStore,
    tape: &mut Tape,
    bundle: &DatasetBundle,
    images: &[usize],
) -> Result<TapeId> {
    if images.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let seen_index: HashMap<&str, usize> = model
        .seen_classes
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    for &img in images {
        if !seen_index.contains_key(bundle.visual.labels[img].as_str()) {
            return Err(Error::Config(format!(
                "image '{}' has unseen label '{}'",
                bundle.visual.image_ids[img], bundle.visual.labels[img]
            )));
        }
    }
    let (a_raw, b_raw) = bundle.branch_inputs(model.config.sources, &model.seen_classes)?;
    model.check_branch_dims(&a_raw, b_raw.as_ref())?;
    let label_of = |img: usize| seen_index[bundle.visual.labels[img].as_str()];
    Ok(step_loss(model, store, tape, bundle, a_raw, b_raw, images, &label_of))
}

/// One objective evaluation over `images`, on the tape for backprop.
fn step_loss(
    model: &ZslModel,
    store: &ParamStore,
    tape: &mut Tape,
    bundle: &DatasetBundle,
    a_raw: Matrix,
    b_raw: Option<Matrix>,
    images: &[usize],
    label_of: &dyn Fn(usize) -> usize,
) -> TapeId {
    let s_prime = model.s_prime_on_tape(store, tape, a_raw, b_raw);
    let mut visual = Matrix::zeros(images.len(), bundle.visual.dim());
    for (r, &img) in images.iter().enumerate() {
        visual.row_mut(r).copy_from_slice(bundle.visual.features.row(img));
    }
    match model.config.variant {
        ZslVariant::DeZsl => {
            let prototypes = model.prototypes_on_tape(store, tape, s_prime);
            let idx: Vec<usize> = images.iter().map(|&img| label_of(img)).collect();
            let picked = tape.gather_rows(prototypes, idx);
            tape.sq_err_sum(picked, visual, images.len() as f64)
        }
        ZslVariant::Rn => {
            let theta = model.rn_theta_on_tape(store, tape, s_prime);
            let c = model.seen_classes.len();
            let scores = model.rn_pair_scores_on_tape(store, tape, theta, &visual);
            let mut targets = Matrix::zeros(images.len() * c, 1);
            for (r, &img) in images.iter().enumerate() {
                targets.set(r * c + label_of(img), 0, 1.0);
            }
            tape.sq_err_sum(scores, targets, images.len() as f64)
        }
    }
}

/// Batch inference over unseen candidates: one predicted candidate index
/// per visual row. Candidate order is the manifest order, which is also the
/// tie-break order.
pub fn predict(
    model: &ZslModel,
    bundle: &DatasetBundle,
    candidates: &[String],
    visual_rows: &Matrix,
) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidates"));
    }
    let s_prime = model.class_embeddings(bundle, candidates)?;
    match model.config.variant {
        ZslVariant::DeZsl => {
            let prototypes = model.dezsl_prototypes(&s_prime);
            if prototypes.cols() != visual_rows.cols() {
                return Err(Error::Dimension(format!(
                    "prototypes are {}-dimensional, visual features are {}-dimensional",
                    prototypes.cols(),
                    visual_rows.cols()
                )));
            }
            let rows: Vec<usize> = (0..visual_rows.rows()).collect();
            Ok(rows
                .par_iter()
                .map(|&i| dezsl_infer(&prototypes, visual_rows.row(i)).unwrap())
                .collect())
        }
        ZslVariant::Rn => {
            let theta_m = {
                let mut tape = Tape::new();
                let s = tape.constant(s_prime);
                let th = model.rn_theta_on_tape(&model.store, &mut tape, s);
                tape.value(th).clone()
            };
            let c = candidates.len();
            let mut out = Vec::with_capacity(visual_rows.rows());
            for chunk_start in (0..visual_rows.rows()).step_by(256) {
                let end = (chunk_start + 256).min(visual_rows.rows());
                let mut vis = Matrix::zeros(end - chunk_start, visual_rows.cols());
                for (r, i) in (chunk_start..end).enumerate() {
                    vis.row_mut(r).copy_from_slice(visual_rows.row(i));
                }
                let mut tape = Tape::new();
                let th = tape.constant(theta_m.clone());
                let scores = model.rn_pair_scores_on_tape(&model.store, &mut tape, th, &vis);
                let sv = tape.value(scores);
                for img in 0..(end - chunk_start) {
                    let mut best = 0;
                    let mut best_s = f64::NEG_INFINITY;
                    for j in 0..c {
                        let s = sv.get(img * c + j, 0);
                        if s > best_s {
                            best_s = s;
                            best = j;
                        }
                    }
                    out.push(best);
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Tiny but fully wired bundle: 3 seen / 2 unseen classes, a handful of
    /// images per class.
    fn mini_bundle(seed: u64) -> DatasetBundle {
        let mut rng = stream(seed, "zsl-test-bundle");
        let manifest = ClassManifest::new(
            vec!["ant".into(), "bee".into(), "cat".into()],
            vec!["dog".into(), "eel".into()],
        )
        .unwrap();
        let mut rand_vec = |d: usize| -> Vec<f64> {
            (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let mut ha = EmbeddingTable::new(4);
        let mut dwe = EmbeddingTable::new(3);
        let mut cse = EmbeddingTable::new(5);
        for name in manifest.all().cloned().collect::<Vec<_>>() {
            ha.push(&name, &rand_vec(4)).unwrap();
            dwe.push(&name, &rand_vec(3)).unwrap();
            cse.push(&name, &rand_vec(5)).unwrap();
        }
        let mut image_ids = Vec::new();
        let mut labels = Vec::new();
        let mut rows = Vec::new();
        for name in manifest.all().cloned().collect::<Vec<_>>() {
            for k in 0..4 {
                image_ids.push(format!("img_{name}_{k}"));
                labels.push(name.clone());
                rows.push(rand_vec(6));
            }
        }
        DatasetBundle {
            visual: VisualData {
                image_ids,
                labels,
                features: Matrix::from_rows(&rows),
            },
            manifest,
            ha: Some(ha),
            dwe: Some(dwe),
            cse: Some(cse),
        }
    }

    fn small_config(variant: ZslVariant, sources: &str, seed: u64) -> ZslConfig {
        let mut c = ZslConfig::new(variant, EmbeddingSources::parse(sources).unwrap());
        c.fusion_width = 4;
        c.theta_hidden = 5;
        c.rn_hidden = 4;
        c.lr = 1e-3;
        c.epochs = 3;
        c.batch = 8;
        c.val_fraction = 0.0;
        c.seed = seed;
        c
    }

    #[test]
    fn sources_parse_and_label() {
        let s = EmbeddingSources::parse("HA+cse").unwrap();
        assert!(s.ha && s.cse && !s.dwe);
        assert_eq!(s.label(), "ha+cse");
        assert!(EmbeddingSources::parse("word2vec").is_err());
    }

    #[test]
    fn fuse_zero_weights_gives_zero_vector() {
        let out = fuse(
            &Matrix::zeros(3, 2),
            &Matrix::zeros(1, 3),
            &Matrix::zeros(4, 5),
            &Matrix::zeros(1, 4),
            &[1.0, -1.0],
            &[0.5, 0.5, 0.5, 0.5, 0.5],
        )
        .unwrap();
        assert_eq!(out, vec![0.0; 7]);
    }

    #[test]
    fn fuse_identity_concatenates_nonnegative_inputs() {
        let out = fuse(
            &Matrix::identity(2),
            &Matrix::zeros(1, 2),
            &Matrix::identity(3),
            &Matrix::zeros(1, 3),
            &[0.25, 0.5],
            &[1.0, 2.0, 3.0],
        )
        .unwrap();
        assert_eq!(out, vec![0.25, 0.5, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn model_fusion_matches_standalone_fuse() {
        let bundle = mini_bundle(1);
        let model = ZslModel::init(&bundle, small_config(ZslVariant::Rn, "ha+cse", 2)).unwrap();
        let classes = vec!["dog".to_string()];
        let s_prime = model.class_embeddings(&bundle, &classes).unwrap();
        let by_op = fuse(
            model.store.expect("fusion.FCe.W"),
            model.store.expect("fusion.FCe.b"),
            model.store.expect("fusion.FCf.W"),
            model.store.expect("fusion.FCf.b"),
            bundle.ha.as_ref().unwrap().get("dog").unwrap(),
            bundle.cse.as_ref().unwrap().get("dog").unwrap(),
        )
        .unwrap();
        assert_eq!(s_prime.row(0), by_op.as_slice());
    }

    #[test]
    fn dezsl_prototypes_match_fc_oracle() {
        let bundle = mini_bundle(3);
        let model = ZslModel::init(&bundle, small_config(ZslVariant::DeZsl, "ha", 4)).unwrap();
        let classes: Vec<String> = bundle.manifest.seen().to_vec();
        let s_prime = model.class_embeddings(&bundle, &classes).unwrap();
        let got = model.dezsl_prototypes(&s_prime);
        let h = fc_forward(
            model.store.expect("theta.FCa.W"),
            model.store.expect("theta.FCa.b"),
            &s_prime,
            Activation::Relu,
        )
        .unwrap();
        let want = fc_forward(
            model.store.expect("theta.FCb.W"),
            model.store.expect("theta.FCb.b"),
            &h,
            Activation::Relu,
        )
        .unwrap();
        assert_eq!(got.data(), want.data());
    }

    #[test]
    fn dezsl_loss_landmarks() {
        let p = Matrix::from_rows(&[vec![1.0, 2.0]]);
        assert_eq!(dezsl_loss(&p, &p).unwrap(), 0.0);
        // one item, f = (1,0), prototype (0,0) -> 1.0
        let f = Matrix::from_rows(&[vec![1.0, 0.0]]);
        let z = Matrix::zeros(1, 2);
        assert_eq!(dezsl_loss(&z, &f).unwrap(), 1.0);
        // doubling every residual quadruples the loss
        let p1 = Matrix::from_rows(&[vec![0.5, 1.5], vec![2.0, -1.0]]);
        let t = Matrix::zeros(2, 2);
        let l1 = dezsl_loss(&p1, &t).unwrap();
        let mut p2 = p1.clone();
        p2.scale_inplace(2.0);
        let l2 = dezsl_loss(&p2, &t).unwrap();
        assert!((l2 - 4.0 * l1).abs() < 1e-12);
        assert!(dezsl_loss(&Matrix::zeros(0, 2), &Matrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn dezsl_infer_picks_geometric_nearest_and_breaks_ties_low() {
        let protos = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(dezsl_infer(&protos, &[0.9, 0.1]).unwrap(), 0);
        // exact tie: both prototypes at distance sqrt(0.5)
        assert_eq!(dezsl_infer(&protos, &[0.5, 0.5]).unwrap(), 0);
        assert!(dezsl_infer(&Matrix::zeros(0, 2), &[0.0, 0.0]).is_err());
    }

    #[test]
    fn dezsl_infer_matches_exhaustive_distance_oracle() {
        let mut rng = stream(5, "nn-oracle");
        let protos = Matrix::from_fn(10, 4, |_, _| rng.random_range(-1.0..1.0));
        for _ in 0..100 {
            let q: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let got = dezsl_infer(&protos, &q).unwrap();
            // independent route: full Euclidean distances, then scan
            let dists: Vec<f64> = (0..10)
                .map(|i| {
                    protos
                        .row(i)
                        .iter()
                        .zip(&q)
                        .map(|(p, x)| (p - x) * (p - x))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            let mut want = 0;
            for i in 1..10 {
                if dists[i] < dists[want] {
                    want = i;
                }
            }
            assert_eq!(got, want);
        }
    }

    #[test]
    fn argmin_is_invariant_to_uniform_positive_scaling() {
        let mut rng = stream(6, "scale");
        let protos = Matrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        for _ in 0..50 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let base = dezsl_infer(&protos, &q).unwrap();
            let lambda = rng.random_range(0.1..7.0);
            let mut scaled = protos.clone();
            scaled.scale_inplace(lambda);
            let qs: Vec<f64> = q.iter().map(|v| v * lambda).collect();
            assert_eq!(dezsl_infer(&scaled, &qs).unwrap(), base);
        }
    }

    #[test]
    fn rn_score_zero_weights_is_all_one_half() {
        let bundle = mini_bundle(7);
        let mut model = ZslModel::init(&bundle, small_config(ZslVariant::Rn, "ha", 8)).unwrap();
        for name in ["theta.FCc.W", "rn.FCd.W", "rn.out.W"] {
            let m = model.store.expect(name);
            let z = Matrix::zeros(m.rows(), m.cols());
            model.store.insert(name, z);
        }
        let classes: Vec<String> = bundle.manifest.seen().to_vec();
        let s_prime = model.class_embeddings(&bundle, &classes).unwrap();
        let scores = model.rn_score(&s_prime, &vec![0.3; 6]);
        assert_eq!(scores.len(), 3);
        for s in scores {
            assert_eq!(s, 0.5);
        }
    }

    #[test]
    fn rn_score_matches_chained_fc_oracle() {
        let bundle = mini_bundle(9);
        let model = ZslModel::init(&bundle, small_config(ZslVariant::Rn, "ha", 10)).unwrap();
        let classes: Vec<String> = bundle.manifest.seen().to_vec();
        let s_prime = model.class_embeddings(&bundle, &classes).unwrap();
        let fx: Vec<f64> = (0..6).map(|i| 0.1 * i as f64 - 0.2).collect();
        let got = model.rn_score(&s_prime, &fx);

        let theta = fc_forward(
            model.store.expect("theta.FCc.W"),
            model.store.expect("theta.FCc.b"),
            &s_prime,
            Activation::Relu,
        )
        .unwrap();
        for (j, &score) in got.iter().enumerate() {
            assert!(score > 0.0 && score < 1.0);
            let mut pair = theta.row(j).to_vec();
            pair.extend_from_slice(&fx);
            let gamma = fc_forward(
                model.store.expect("rn.FCd.W"),
                model.store.expect("rn.FCd.b"),
                &Matrix::from_rows(&[pair]),
                Activation::Relu,
            )
            .unwrap();
            let out = fc_forward(
                model.store.expect("rn.out.W"),
                model.store.expect("rn.out.b"),
                &gamma,
                Activation::Sigmoid,
            )
            .unwrap();
            assert!((score - out.get(0, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn rn_loss_landmarks_and_symmetry() {
        // exact one-hot -> 0
        let t = Matrix::from_rows(&[vec![1.0], vec![0.0]]);
        assert_eq!(rn_loss(&t, &t).unwrap(), 0.0);
        // single image, M = 2, scores (0.5, 0.5), true class 0 -> 0.5
        // (rows are image-major pairs, one image => divisor 1... the matrix
        // form keeps one row per pair, so divide by images by passing them
        // as one row of two columns)
        let scores = Matrix::from_rows(&[vec![0.5, 0.5]]);
        let target = Matrix::from_rows(&[vec![1.0, 0.0]]);
        assert!((rn_loss(&scores, &target).unwrap() - 0.5).abs() < 1e-15);
        // permutation of images leaves the loss unchanged
        let s2 = Matrix::from_rows(&[vec![0.9, 0.2], vec![0.1, 0.7]]);
        let t2 = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let s2p = Matrix::from_rows(&[vec![0.1, 0.7], vec![0.9, 0.2]]);
        let t2p = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(rn_loss(&s2, &t2).unwrap(), rn_loss(&s2p, &t2p).unwrap());
    }

    #[test]
    fn rn_infer_dominant_and_tie_break() {
        let bundle = mini_bundle(11);
        let model = ZslModel::init(&bundle, small_config(ZslVariant::Rn, "ha", 12)).unwrap();
        let classes: Vec<String> = bundle.manifest.unseen().to_vec();
        let s_prime = model.class_embeddings(&bundle, &classes).unwrap();
        let fx = vec![0.4; 6];
        let got = rn_infer(&model, &s_prime, &fx).unwrap();
        // independent argmax over the public score vector
        let scores = model.rn_score(&s_prime, &fx);
        let mut want = 0;
        for i in 1..scores.len() {
            if scores[i] > scores[want] {
                want = i;
            }
        }
        assert_eq!(got, want);
        // identical rows force an exact tie -> earliest candidate
        let mut tied_rows = Vec::new();
        tied_rows.push(s_prime.row(0).to_vec());
        tied_rows.push(s_prime.row(0).to_vec());
        let tied = Matrix::from_rows(&tied_rows);
        assert_eq!(rn_infer(&model, &tied, &fx).unwrap(), 0);
    }

    #[test]
    fn top1_accuracy_counts_exact_matches() {
        let a = ["x", "y", "z", "x"];
        assert_eq!(top1_accuracy(&a, &a).unwrap(), 1.0);
        let b = ["p", "q", "r", "s"];
        assert_eq!(top1_accuracy(&a, &b).unwrap(), 0.0);
        let c = ["x", "y", "z", "w"];
        assert_eq!(top1_accuracy(&a, &c).unwrap(), 0.75);
        assert!(top1_accuracy::<&str>(&[], &[]).is_err());
        assert!(top1_accuracy(&["a"], &["a", "b"]).is_err());
    }

    #[test]
    fn zero_lr_training_leaves_parameters_unchanged() {
        let bundle = mini_bundle(13);
        let mut config = small_config(ZslVariant::DeZsl, "ha+cse", 14);
        config.lr = 0.0;
        let fresh = ZslModel::init(&bundle, config.clone()).unwrap();
        let (trained, _) = train_zsl(&bundle, config).unwrap();
        for name in fresh.store.names() {
            assert_eq!(
                fresh.store.get(name).unwrap().data(),
                trained.store.get(name).unwrap().data(),
                "{name} moved"
            );
        }
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let bundle = mini_bundle(15);
        let config = small_config(ZslVariant::Rn, "ha+dwe", 16);
        let (m1, r1) = train_zsl(&bundle, config.clone()).unwrap();
        let (m2, r2) = train_zsl(&bundle, config).unwrap();
        assert_eq!(r1.loss_history, r2.loss_history);
        for name in m1.store.names() {
            assert_eq!(
                m1.store.get(name).unwrap().data(),
                m2.store.get(name).unwrap().data()
            );
        }
    }

    #[test]
    fn zeroed_cse_branch_makes_prototypes_depend_on_ha_only() {
        let bundle_a = mini_bundle(17);
        // same bundle except for a different CSE table
        let mut bundle_b = bundle_a.clone();
        let mut other_cse = EmbeddingTable::new(5);
        let mut rng = stream(99, "other-cse");
        for name in bundle_a.manifest.all().cloned().collect::<Vec<_>>() {
            let v: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            other_cse.push(&name, &v).unwrap();
        }
        bundle_b.cse = Some(other_cse);

        let mut model = ZslModel::init(&bundle_a, small_config(ZslVariant::DeZsl, "ha+cse", 18))
            .unwrap();
        let q = model.dims.q;
        let b_dim = model.dims.b_dim;
        model.store.insert("fusion.FCf.W", Matrix::zeros(q, b_dim));
        model.store.insert("fusion.FCf.b", Matrix::zeros(1, q));

        let classes: Vec<String> = bundle_a.manifest.unseen().to_vec();
        let sa = model.class_embeddings(&bundle_a, &classes).unwrap();
        let sb = model.class_embeddings(&bundle_b, &classes).unwrap();
        assert_eq!(sa.data(), sb.data());
        let pa = model.dezsl_prototypes(&sa);
        let pb = model.dezsl_prototypes(&sb);
        assert_eq!(pa.data(), pb.data());
    }

    #[test]
    fn predictions_stay_inside_the_candidate_set() {
        let bundle = mini_bundle(19);
        let (model, _) = train_zsl(&bundle, small_config(ZslVariant::DeZsl, "ha", 20)).unwrap();
        let candidates: Vec<String> = bundle.manifest.unseen().to_vec();
        let (_, test_idx) = bundle.train_test_indices();
        let mut vis = Matrix::zeros(test_idx.len(), bundle.visual.dim());
        for (r, &i) in test_idx.iter().enumerate() {
            vis.row_mut(r).copy_from_slice(bundle.visual.features.row(i));
        }
        let preds = predict(&model, &bundle, &candidates, &vis).unwrap();
        assert_eq!(preds.len(), test_idx.len());
        assert!(preds.iter().all(|&p| p < candidates.len()));
    }

    #[test]
    fn from_store_flags_dimension_mismatches_with_both_sizes() {
        let bundle = mini_bundle(21);
        let config = small_config(ZslVariant::DeZsl, "ha", 22);
        let model = ZslModel::init(&bundle, config.clone()).unwrap();
        // table with the wrong attribute width
        let mut bad = bundle.clone();
        let mut ha = EmbeddingTable::new(9);
        for name in bundle.manifest.all().cloned().collect::<Vec<_>>() {
            ha.push(&name, &vec![0.0; 9]).unwrap();
        }
        bad.ha = Some(ha);
        let err = ZslModel::from_store(&bad, config, model.store.clone()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('9') && msg.contains('4'), "message: {msg}");
    }

    #[test]
    fn rn_training_batches_pair_every_image_with_every_seen_class() {
        // structural check through the loss value: with zero weights every
        // pair scores 0.5, so the loss is M*0.25 + (1-0.5)^2 - 0.25 per
        // image = 0.25*(M-1) + 0.25 = exactly 0.25*M per image... spelled
        // out: sum over M pairs of (0.5 - target)^2 = 0.25*M regardless of
        // the one-hot position.
        let bundle = mini_bundle(23);
        let mut model = ZslModel::init(&bundle, small_config(ZslVariant::Rn, "ha", 24)).unwrap();
        for name in ["theta.FCc.W", "rn.FCd.W", "rn.out.W"] {
            let m = model.store.expect(name);
            let z = Matrix::zeros(m.rows(), m.cols());
            model.store.insert(name, z);
        }
        let classes: Vec<String> = model.seen_classes.clone();
        let s_prime = model.class_embeddings(&bundle, &classes).unwrap();
        let mut tape = Tape::new();
        let s = tape.constant(s_prime);
        let theta = model.rn_theta_on_tape(&model.store, &mut tape, s);
        let visual = Matrix::from_rows(&[vec![0.0; 6], vec![1.0; 6]]);
        let scores = model.rn_pair_scores_on_tape(&model.store, &mut tape, theta, &visual);
        let mut targets = Matrix::zeros(2 * 3, 1);
        targets.set(0, 0, 1.0);
        targets.set(3 + 1, 0, 1.0);
        let loss = tape.sq_err_sum(scores, targets, 2.0);
        assert!((tape.scalar_value(loss) - 0.25 * 3.0).abs() < 1e-12);
    }
}
