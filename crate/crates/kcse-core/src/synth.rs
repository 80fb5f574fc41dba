//! Self-contained synthetic benchmarks: a knowledge graph tying classes
//! together through property and context nodes, per-class attribute vectors,
//! pseudo word vectors, and Gaussian visual clusters whose means are a fixed
//! linear image of the true attributes.
//!
//! Scenario shapes:
//! - `separable`: 20 seen / 5 unseen, clean attributes, tight clusters.
//! - `degraded-attributes`: the CSE-benefit setting; observed attributes
//!   carry seeded noise (heavy for unseen classes) while the graph keeps
//!   every unseen class within two hops of related seen classes.
//! - `animals-shape`: 50 classes split 40/10 with 85-dim attributes.
//! - `apy-shape`: 32 classes split 20/12 with 64-dim attributes.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;

use crate::cse::ClassManifest;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::{write_edge_file, GraphBuilder, KnowledgeGraph};
use crate::rng::{normal, stream};
use crate::tensor::Matrix;
use crate::zsl::{write_visual, VisualData};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Separable,
    DegradedAttributes,
    AnimalsShape,
    ApyShape,
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separable" => Ok(Scenario::Separable),
            "degraded-attributes" => Ok(Scenario::DegradedAttributes),
            "animals-shape" => Ok(Scenario::AnimalsShape),
            "apy-shape" => Ok(Scenario::ApyShape),
            other => Err(Error::Config(format!(
                "unknown scenario '{other}' (expected separable, degraded-attributes, \
                 animals-shape, apy-shape)"
            ))),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Scenario::Separable => "separable",
            Scenario::DegradedAttributes => "degraded-attributes",
            Scenario::AnimalsShape => "animals-shape",
            Scenario::ApyShape => "apy-shape",
        };
        write!(f, "{s}")
    }
}

struct ScenarioSpec {
    n_seen: usize,
    n_unseen: usize,
    imgs_seen: usize,
    imgs_unseen: usize,
    attr_dim: usize,
    dwe_dim: usize,
    visual_dim: usize,
    ha_noise_seen: f64,
    ha_noise_unseen: f64,
}

fn spec_of(scenario: Scenario) -> ScenarioSpec {
    match scenario {
        Scenario::Separable => ScenarioSpec {
            n_seen: 20,
            n_unseen: 5,
            imgs_seen: 100,
            imgs_unseen: 50,
            attr_dim: 32,
            dwe_dim: 48,
            visual_dim: 64,
            ha_noise_seen: 0.0,
            ha_noise_unseen: 0.0,
        },
        Scenario::DegradedAttributes => ScenarioSpec {
            n_seen: 20,
            n_unseen: 5,
            imgs_seen: 50,
            imgs_unseen: 40,
            attr_dim: 32,
            dwe_dim: 48,
            visual_dim: 64,
            ha_noise_seen: 0.25,
            ha_noise_unseen: 1.2,
        },
        Scenario::AnimalsShape => ScenarioSpec {
            n_seen: 40,
            n_unseen: 10,
            imgs_seen: 10,
            imgs_unseen: 5,
            attr_dim: 85,
            dwe_dim: 300,
            visual_dim: 256,
            ha_noise_seen: 0.0,
            ha_noise_unseen: 0.0,
        },
        Scenario::ApyShape => ScenarioSpec {
            n_seen: 20,
            n_unseen: 12,
            imgs_seen: 10,
            imgs_unseen: 5,
            attr_dim: 64,
            dwe_dim: 300,
            visual_dim: 256,
            ha_noise_seen: 0.0,
            ha_noise_unseen: 0.0,
        },
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub graph: KnowledgeGraph,
    pub manifest: ClassManifest,
    pub ha: EmbeddingTable,
    pub dwe: EmbeddingTable,
    pub visual: VisualData,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Deterministically generate one scenario.
pub fn generate(scenario: Scenario, seed: u64) -> SynthData {
    let spec = spec_of(scenario);
    let n_classes = spec.n_seen + spec.n_unseen;
    let class_names: Vec<String> = (0..n_classes).map(|i| format!("class_{i:02}")).collect();
    let seen_names = class_names[..spec.n_seen].to_vec();
    let unseen_names = class_names[spec.n_seen..].to_vec();

    // True attributes: positive so that visual means stay relu-representable.
    let mut rng_attr = stream(seed, "synth:attrs");
    let mut attrs_true: Vec<Vec<f64>> = (0..spec.n_seen)
        .map(|_| (0..spec.attr_dim).map(|_| rng_attr.random_range(0.1..1.0)).collect())
        .collect();

    // Unseen classes blend two related seen classes; the graph mirrors the
    // same relatedness, which is exactly what the commonsense branch can
    // exploit when the observed attributes are noisy.
    let mut parents: Vec<(usize, usize)> = Vec::new();
    for u in 0..spec.n_unseen {
        let s1 = rng_attr.random_range(0..spec.n_seen);
        let mut s2 = rng_attr.random_range(0..spec.n_seen);
        while s2 == s1 {
            s2 = rng_attr.random_range(0..spec.n_seen);
        }
        let blended: Vec<f64> = (0..spec.attr_dim)
            .map(|k| {
                0.5 * (attrs_true[s1][k] + attrs_true[s2][k])
                    + rng_attr.random_range(-0.05..0.05)
            })
            .collect();
        attrs_true.push(blended);
        parents.push((s1, s2));
        let _ = u;
    }

    // Fixed linear map into visual space.
    let mut rng_map = stream(seed, "synth:map");
    let scale = 2.0 / spec.attr_dim as f64;
    let vis_map = Matrix::from_fn(spec.visual_dim, spec.attr_dim, |_, _| {
        rng_map.random_range(0.0..1.0) * scale
    });
    let means: Vec<Vec<f64>> = attrs_true
        .iter()
        .map(|a| {
            (0..spec.visual_dim)
                .map(|i| {
                    vis_map
                        .row(i)
                        .iter()
                        .zip(a)
                        .map(|(w, x)| w * x)
                        .sum::<f64>()
                })
                .collect()
        })
        .collect();

    let mut min_dist = f64::INFINITY;
    for i in 0..n_classes {
        for j in (i + 1)..n_classes {
            min_dist = min_dist.min(euclid(&means[i], &means[j]));
        }
    }
    let sigma = 0.05 * min_dist;

    // Images: Gaussian clusters around the class means.
    let mut rng_img = stream(seed, "synth:images");
    let mut image_ids = Vec::new();
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (c, name) in class_names.iter().enumerate() {
        let count = if c < spec.n_seen {
            spec.imgs_seen
        } else {
            spec.imgs_unseen
        };
        for k in 0..count {
            image_ids.push(format!("img_{name}_{k:03}"));
            labels.push(name.clone());
            rows.push(
                means[c]
                    .iter()
                    .map(|&m| m + sigma * normal(&mut rng_img))
                    .collect(),
            );
        }
    }
    let visual = VisualData {
        image_ids,
        labels,
        features: Matrix::from_rows(&rows),
    };

    // Observed attributes: true attributes plus seeded noise.
    let mut rng_noise = stream(seed, "synth:hanoise");
    let mut ha = EmbeddingTable::new(spec.attr_dim);
    for (c, name) in class_names.iter().enumerate() {
        let level = if c < spec.n_seen {
            spec.ha_noise_seen
        } else {
            spec.ha_noise_unseen
        };
        let observed: Vec<f64> = attrs_true[c]
            .iter()
            .map(|&a| a + level * normal(&mut rng_noise))
            .collect();
        ha.push(name, &observed).expect("fresh table");
    }

    // Pseudo word vectors: a different linear image of the true attributes
    // plus small noise.
    let mut rng_dmap = stream(seed, "synth:dwemap");
    let dwe_map = Matrix::from_fn(spec.dwe_dim, spec.attr_dim, |_, _| {
        rng_dmap.random_range(-1.0..1.0) / spec.attr_dim as f64
    });
    let mut rng_dnoise = stream(seed, "synth:dwenoise");
    let mut dwe = EmbeddingTable::new(spec.dwe_dim);
    for (c, name) in class_names.iter().enumerate() {
        let v: Vec<f64> = (0..spec.dwe_dim)
            .map(|i| {
                dwe_map
                    .row(i)
                    .iter()
                    .zip(&attrs_true[c])
                    .map(|(w, x)| w * x)
                    .sum::<f64>()
                    + 0.05 * normal(&mut rng_dnoise)
            })
            .collect();
        dwe.push(name, &v).expect("fresh table");
    }

    // Knowledge graph: property nodes shared by attribute-similar classes,
    // direct relatedness edges, and a little context chaff.
    let mut rng_graph = stream(seed, "synth:graph");
    let mut builder = GraphBuilder::new();
    for name in &class_names {
        builder.add_node(name);
    }
    // top-3 attribute dimensions per class become property links
    for (c, name) in class_names.iter().enumerate() {
        let mut dims: Vec<usize> = (0..spec.attr_dim).collect();
        dims.sort_by(|&a, &b| {
            attrs_true[c][b]
                .partial_cmp(&attrs_true[c][a])
                .unwrap()
                .then(a.cmp(&b))
        });
        for &k in dims.iter().take(3) {
            builder.add_edge("HasProperty", name, &format!("prop_{k:02}"), 1.0);
        }
    }
    // each unseen class relates to the two seen classes it blends
    for (u, &(s1, s2)) in parents.iter().enumerate() {
        let uname = &class_names[spec.n_seen + u];
        builder.add_edge("RelatedTo", uname, &class_names[s1], 1.0);
        builder.add_edge("RelatedTo", uname, &class_names[s2], 1.0);
    }
    // each seen class relates to its nearest seen neighbor in attribute space
    for s in 0..spec.n_seen {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for t in 0..spec.n_seen {
            if t == s {
                continue;
            }
            let d = euclid(&attrs_true[s], &attrs_true[t]);
            if d < best_d {
                best_d = d;
                best = t;
            }
        }
        builder.add_edge("RelatedTo", &class_names[s], &class_names[best], 1.0);
    }
    // context chaff: shared background nodes touching random classes
    let n_ctx = (n_classes / 5).max(2);
    for j in 0..n_ctx {
        let ctx = format!("ctx_{j:02}");
        for _ in 0..3 {
            let c = rng_graph.random_range(0..n_classes);
            builder.add_edge("RelatedTo", &class_names[c], &ctx, 1.0);
        }
    }
    let graph = builder.finish();

    let manifest = ClassManifest::new(seen_names, unseen_names).expect("disjoint by construction");
    SynthData {
        graph,
        manifest,
        ha,
        dwe,
        visual,
    }
}

#[derive(Debug, Clone)]
pub struct SynthFiles {
    pub graph: PathBuf,
    pub attributes: PathBuf,
    pub dwe: PathBuf,
    pub visual: PathBuf,
    pub split: PathBuf,
}

/// Write every artifact of the scenario into `dir` using the external file
/// formats.
pub fn write_all(data: &SynthData, dir: &Path) -> Result<SynthFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = SynthFiles {
        graph: dir.join("graph.tsv"),
        attributes: dir.join("attributes.txt"),
        dwe: dir.join("dwe.txt"),
        visual: dir.join("visual.txt"),
        split: dir.join("split.txt"),
    };
    write_edge_file(&data.graph, &files.graph)?;
    crate::embedding::write_embeddings(&data.ha, &files.attributes)?;
    crate::embedding::write_embeddings(&data.dwe, &files.dwe)?;
    write_visual(&data.visual, &files.visual)?;
    data.manifest.write_split(&files.split)?;
    Ok(files)
}
