//! JSON and CSV formats.
//!
//! Every JSON document carries `schema_version`. Matrices are written as
//! lists of rows; vectors as flat arrays. CSV floats use the shortest
//! decimal form that parses back to the same `f64`.

use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, SmpError};
use crate::expansion::{ExpandedTrajectory, FeedbackGain};
use crate::model::{validate_vertices, SmpVertexSet, TimeVariation, UncertainMeanCov, ValidationReport, WeightMap};
use crate::montecarlo::{ParametricGaussian, TrajectoryEnsemble};
use crate::synthesis::IterationRecord;
use crate::tensor::{Matrix, Vector};

pub const SCHEMA_VERSION: u32 = 1;

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows<E: serde::de::Error>(rows: Vec<Vec<f64>>) -> std::result::Result<Matrix, E> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if rows.iter().any(|x| x.len() != c) {
        return Err(E::custom("ragged matrix rows"));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Serializes a matrix as a list of rows.
pub mod matrix_rows {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Matrix, D::Error> {
        from_rows(Vec::<Vec<f64>>::deserialize(d)?)
    }
}

/// Serializes a list of matrices, each as a list of rows.
pub mod matrix_list {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[Matrix], s: S) -> std::result::Result<S::Ok, S::Error> {
        ms.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Matrix>, D::Error> {
        Vec::<Vec<Vec<f64>>>::deserialize(d)?.into_iter().map(from_rows).collect()
    }
}

/// Serializes a list of vectors as nested arrays.
pub mod vector_list {
    use super::*;
    use crate::tensor::Vector;

    pub fn serialize<S: Serializer>(vs: &[Vector], s: S) -> std::result::Result<S::Ok, S::Error> {
        vs.iter().map(|v| v.as_slice().to_vec()).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vector>, D::Error> {
        Ok(Vec::<Vec<f64>>::deserialize(d)?.into_iter().map(Vector::from_vec).collect())
    }
}

/// Serializes a vector as a flat array.
pub mod vector_flat {
    use super::*;
    use crate::tensor::Vector;

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> std::result::Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vector, D::Error> {
        Ok(Vector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

/// Serializes a square grid of matrices.
mod matrix_grid {
    use super::*;

    pub fn serialize<S: Serializer>(g: &[Vec<Matrix>], s: S) -> std::result::Result<S::Ok, S::Error> {
        g.iter()
            .map(|row| row.iter().map(to_rows).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<Matrix>>, D::Error> {
        Vec::<Vec<Vec<Vec<f64>>>>::deserialize(d)?
            .into_iter()
            .map(|row| row.into_iter().map(from_rows).collect())
            .collect()
    }
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

/// Parses JSON, reporting the failing field path and position.
pub fn from_json_str<T: DeserializeOwned>(text: &str, source_name: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        SmpError::Parse {
            source_name: source_name.to_string(),
            field,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    from_json_str(&text, &path.display().to_string())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// How the vertices of a model are given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSource {
    /// Explicit vertices `M^(k)` with their weight map.
    Vertices {
        weight_map: WeightMap,
        #[serde(with = "matrix_list")]
        vertices: Vec<Matrix>,
    },
    Iid {
        #[serde(with = "matrix_rows")]
        second_moment: Matrix,
    },
    DeterministicPolytope {
        #[serde(with = "vector_list")]
        vertices: Vec<Vector>,
    },
    /// `cross_moments[i][j] = E[v_i v_jᵀ]`.
    RandomPolytope {
        #[serde(with = "matrix_grid")]
        cross_moments: Vec<Vec<Matrix>>,
    },
    UncertainMeanCov {
        #[serde(with = "vector_list")]
        means: Vec<Vector>,
        #[serde(with = "matrix_list")]
        covariances: Vec<Matrix>,
    },
    MeanCovPolytope {
        #[serde(with = "vector_flat")]
        mean: Vector,
        #[serde(with = "matrix_list")]
        covariances: Vec<Matrix>,
    },
}

/// An SMP model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub n: usize,
    pub m: usize,
    #[serde(default)]
    pub time_variation: TimeVariation,
    pub source: ModelSource,
}

/// A validation finding tied to a location in the model document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelIssue {
    pub field: String,
    pub message: String,
}

impl ModelDoc {
    pub fn from_vertex_set(s: &SmpVertexSet) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            n: s.n(),
            m: s.m(),
            time_variation: s.time_variation(),
            source: ModelSource::Vertices {
                weight_map: s.weight_map(),
                vertices: s.vertices().to_vec(),
            },
        }
    }

    pub fn from_uncertain_mean_cov(u: &UncertainMeanCov, tv: TimeVariation) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            n: u.n,
            m: u.m,
            time_variation: tv,
            source: ModelSource::UncertainMeanCov {
                means: u.means.clone(),
                covariances: u.covariances.clone(),
            },
        }
    }

    pub fn to_vertex_set(&self) -> Result<SmpVertexSet> {
        let (n, m) = (self.n, self.m);
        let s = match &self.source {
            ModelSource::Vertices { weight_map, vertices } => {
                SmpVertexSet::new(n, m, vertices.clone(), self.time_variation, *weight_map)?
            }
            ModelSource::Iid { second_moment } => SmpVertexSet::from_iid(n, m, second_moment)?,
            ModelSource::DeterministicPolytope { vertices } => {
                SmpVertexSet::from_deterministic_polytope(n, m, vertices)?
            }
            ModelSource::RandomPolytope { cross_moments } => SmpVertexSet::from_random_polytope(n, m, cross_moments)?,
            ModelSource::UncertainMeanCov { means, covariances } => {
                SmpVertexSet::from_uncertain_mean_cov(&UncertainMeanCov {
                    n,
                    m,
                    means: means.clone(),
                    covariances: covariances.clone(),
                })?
            }
            ModelSource::MeanCovPolytope { mean, covariances } => {
                SmpVertexSet::from_mean_cov_polytope(n, m, mean, covariances)?
            }
        };
        Ok(s.with_time_variation(self.time_variation))
    }

    /// The Gaussian law implied by the model, when it determines one.
    pub fn gaussian(&self) -> Option<ParametricGaussian> {
        let (n, m) = (self.n, self.m);
        match &self.source {
            ModelSource::DeterministicPolytope { vertices } => Some(ParametricGaussian::DeterministicPolytope {
                n,
                m,
                vertices: vertices.clone(),
            }),
            ModelSource::UncertainMeanCov { means, covariances } => {
                Some(ParametricGaussian::UncertainMeanCov(UncertainMeanCov {
                    n,
                    m,
                    means: means.clone(),
                    covariances: covariances.clone(),
                }))
            }
            _ => None,
        }
    }

    /// Checks the raw document (before any symmetrization) and the vertex set it builds.
    pub fn validate(&self) -> (ValidationReport, Vec<ModelIssue>) {
        let mut issues = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            issues.push(ModelIssue {
                field: "schema_version".into(),
                message: format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            });
        }
        let raw: Option<(&str, &[Matrix])> = match &self.source {
            ModelSource::Vertices { vertices, .. } => Some(("vertices", vertices)),
            ModelSource::UncertainMeanCov { covariances, .. } | ModelSource::MeanCovPolytope { covariances, .. } => {
                Some(("covariances", covariances))
            }
            _ => None,
        };
        let mut report = ValidationReport::default();
        if let Some((name, mats)) = raw {
            let r = validate_vertices(self.n, self.m, mats);
            for e in &r.dimension_errors {
                issues.push(ModelIssue {
                    field: format!("source.{name}"),
                    message: e.clone(),
                });
            }
            for v in &r.symmetry_violations {
                issues.push(ModelIssue {
                    field: format!("source.{name}[{}][{}][{}]", v.vertex, v.row, v.col),
                    message: format!("not symmetric (deviation {:e})", v.difference),
                });
            }
            if name == "covariances" {
                for k in r.non_psd_vertices() {
                    issues.push(ModelIssue {
                        field: format!("source.{name}[{k}]"),
                        message: format!(
                            "covariance is not PSD (min eigenvalue {:e})",
                            r.vertex_min_eigenvalues[k]
                        ),
                    });
                }
            } else {
                report = r;
            }
        }
        if issues.is_empty() {
            match self.to_vertex_set() {
                Ok(s) => {
                    let r = s.validate();
                    // Under φ(θ) = vec(θθᵀ) only the diagonal vertices are attainable
                    // second moments; cross vertices may be indefinite.
                    let attainable = |k: usize| match s.weight_map() {
                        WeightMap::Quadratic { d } => k.is_multiple_of(d + 1),
                        _ => true,
                    };
                    for k in r.non_psd_vertices().into_iter().filter(|k| attainable(*k)) {
                        issues.push(ModelIssue {
                            field: format!("vertex {k}"),
                            message: format!("vertex is not PSD (min eigenvalue {:e})", r.vertex_min_eigenvalues[k]),
                        });
                    }
                    report = r;
                }
                Err(e) => issues.push(ModelIssue {
                    field: "source".into(),
                    message: e.to_string(),
                }),
            }
        }
        (report, issues)
    }
}

/// The Gaussian family of `v = vec([A, B])` used for simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSource {
    Iid {
        #[serde(with = "vector_flat")]
        mean: Vector,
        #[serde(with = "matrix_rows")]
        cov: Matrix,
    },
    DeterministicPolytope {
        #[serde(with = "vector_list")]
        vertices: Vec<Vector>,
    },
    RandomPolytope {
        #[serde(with = "vector_list")]
        means: Vec<Vector>,
        #[serde(with = "matrix_list")]
        covariances: Vec<Matrix>,
    },
    UncertainMeanCov {
        #[serde(with = "vector_list")]
        means: Vec<Vector>,
        #[serde(with = "matrix_list")]
        covariances: Vec<Matrix>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionDoc {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub n: usize,
    pub m: usize,
    pub source: DistributionSource,
}

impl DistributionDoc {
    pub fn from_gaussian(d: &ParametricGaussian) -> Self {
        let source = match d.clone() {
            ParametricGaussian::Iid { mean, cov, .. } => DistributionSource::Iid { mean, cov },
            ParametricGaussian::DeterministicPolytope { vertices, .. } => {
                DistributionSource::DeterministicPolytope { vertices }
            }
            ParametricGaussian::RandomPolytope { means, covs, .. } => DistributionSource::RandomPolytope {
                means,
                covariances: covs,
            },
            ParametricGaussian::UncertainMeanCov(u) => DistributionSource::UncertainMeanCov {
                means: u.means,
                covariances: u.covariances,
            },
        };
        Self {
            schema_version: SCHEMA_VERSION,
            n: d.n(),
            m: d.m(),
            source,
        }
    }

    pub fn to_gaussian(&self) -> Result<ParametricGaussian> {
        let (n, m) = (self.n, self.m);
        let size = n * (n + m);
        let check_vec = |what: &str, v: &Vector| {
            if v.len() != size {
                Err(crate::error::dim_err(what, size, v.len()))
            } else {
                Ok(())
            }
        };
        let check_mat = |what: &str, c: &Matrix| {
            if c.shape() != (size, size) {
                Err(crate::error::dim_err(
                    what,
                    format!("{size}x{size}"),
                    format!("{}x{}", c.nrows(), c.ncols()),
                ))
            } else {
                Ok(())
            }
        };
        let d = match self.source.clone() {
            DistributionSource::Iid { mean, cov } => {
                check_vec("source.mean", &mean)?;
                check_mat("source.cov", &cov)?;
                ParametricGaussian::Iid { n, m, mean, cov }
            }
            DistributionSource::DeterministicPolytope { vertices } => {
                for (k, v) in vertices.iter().enumerate() {
                    check_vec(&format!("source.vertices[{k}]"), v)?;
                }
                ParametricGaussian::DeterministicPolytope { n, m, vertices }
            }
            DistributionSource::RandomPolytope { means, covariances } => {
                for (k, v) in means.iter().enumerate() {
                    check_vec(&format!("source.means[{k}]"), v)?;
                }
                for (k, c) in covariances.iter().enumerate() {
                    check_mat(&format!("source.covariances[{k}]"), c)?;
                }
                if means.len() != covariances.len() {
                    return Err(crate::error::dim_err("source.covariances", means.len(), covariances.len()));
                }
                ParametricGaussian::RandomPolytope {
                    n,
                    m,
                    means,
                    covs: covariances,
                }
            }
            DistributionSource::UncertainMeanCov { means, covariances } => {
                let u = UncertainMeanCov {
                    n,
                    m,
                    means,
                    covariances,
                };
                u.check()?;
                ParametricGaussian::UncertainMeanCov(u)
            }
        };
        Ok(d)
    }
}

/// A feedback gain file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainDoc {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(with = "matrix_rows")]
    pub k: Matrix,
}

impl GainDoc {
    pub fn new(gain: &FeedbackGain) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            k: gain.matrix().clone(),
        }
    }

    pub fn to_gain(&self) -> Result<FeedbackGain> {
        FeedbackGain::new(self.k.clone())
    }
}

/// Wraps any output document with the schema version.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Versioned<T> {
    pub fn new(body: T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            body,
        }
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::WriterBuilder::new().has_headers(false).from_path(path)?)
}

/// Shortest decimal that parses back to the same value.
fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Expanded trajectory: `t, xt_0, …, xt_{ñ-1}`.
pub fn write_expanded_csv(path: &Path, traj: &ExpandedTrajectory) -> Result<()> {
    let nt = traj.states.first().map_or(0, |s| s.len());
    let mut w = csv_writer(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..nt).map(|i| format!("xt_{i}")));
    w.write_record(&header)?;
    for (t, s) in traj.states.iter().enumerate() {
        let mut r = vec![t.to_string()];
        r.extend(s.iter().map(|x| fmt_f64(*x)));
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// One row of a Monte Carlo summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub t: usize,
    pub mean_square: f64,
    pub stderr: f64,
    /// `E‖x_t‖²` from the expanded system.
    pub prediction: f64,
}

/// Monte Carlo summary: `t, mean_square, stderr, prediction`.
pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|x| x.map_err(SmpError::from)).collect()
}

/// `ε` trace: `ell, epsilon, lambda1, trace, objective, status, newton_steps`.
pub fn write_eps_trace_csv(path: &Path, trace: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in trace {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_eps_trace_csv(path: &Path) -> Result<Vec<IterationRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|x| x.map_err(SmpError::from)).collect()
}

/// Per-path states: `path, t, x_0, …, x_{n-1}`.
pub fn write_paths_csv(path: &Path, ens: &TrajectoryEnsemble) -> Result<()> {
    let n = ens.n();
    let mut w = csv_writer(path)?;
    let mut header = vec!["path".to_string(), "t".to_string()];
    header.extend((0..n).map(|i| format!("x_{i}")));
    w.write_record(&header)?;
    let mut r = Vec::with_capacity(n + 2);
    for p in 0..ens.path_count() {
        for t in 0..=ens.horizon() {
            r.clear();
            r.push(p.to_string());
            r.push(t.to_string());
            r.extend(ens.state(p, t).iter().map(|x| fmt_f64(*x)));
            w.write_record(&r)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric CSV table with a header row.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|x| {
                x.parse::<f64>()
                    .map_err(|e| SmpError::InvalidInput(format!("bad number `{x}` in {}: {e}", path.display())))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::uncertain_mean_cov_benchmark;

    #[test]
    fn model_round_trip() {
        let doc = ModelDoc::from_uncertain_mean_cov(&uncertain_mean_cov_benchmark(), TimeVariation::Ti);
        let text = serde_json::to_string(&doc).unwrap();
        let back: ModelDoc = from_json_str(&text, "mem").unwrap();
        assert_eq!(doc, back);
        let s = back.to_vertex_set().unwrap();
        assert_eq!(s.vertex_count(), 9);
        let again = ModelDoc::from_vertex_set(&s);
        let s2: ModelDoc = from_json_str(&serde_json::to_string(&again).unwrap(), "mem").unwrap();
        assert_eq!(s2.to_vertex_set().unwrap(), s);
    }

    #[test]
    fn parse_error_names_field() {
        let text = r#"{"n": 1, "m": 1, "source": {"kind": "iid", "second_moment": [[1.0, "x"], [0.0, 1.0]]}}"#;
        match from_json_str::<ModelDoc>(text, "model.json") {
            Err(SmpError::Parse { field, .. }) => assert!(field.starts_with("source"), "{field}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(from_json_str::<ModelDoc>("", "empty"), Err(SmpError::Parse { .. })));
    }

    #[test]
    fn asymmetric_vertex_is_located() {
        let mut v = Matrix::identity(2, 2);
        v[(0, 1)] = 0.5;
        let doc = ModelDoc {
            schema_version: SCHEMA_VERSION,
            n: 1,
            m: 1,
            time_variation: TimeVariation::Ti,
            source: ModelSource::Vertices {
                weight_map: WeightMap::Constant,
                vertices: vec![v],
            },
        };
        let (_, issues) = doc.validate();
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].field, "source.vertices[0][0][1]");
    }

    #[test]
    fn distribution_round_trip() {
        let d = ParametricGaussian::UncertainMeanCov(uncertain_mean_cov_benchmark());
        let doc = DistributionDoc::from_gaussian(&d);
        let back: DistributionDoc = from_json_str(&serde_json::to_string(&doc).unwrap(), "mem").unwrap();
        assert_eq!(back.to_gaussian().unwrap(), d);
    }

    #[test]
    fn summary_csv_round_trips_floats() {
        let dir = std::env::temp_dir().join(format!("smp-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("summary.csv");
        let rows = vec![
            SummaryRow {
                t: 0,
                mean_square: 2.0,
                stderr: 0.0,
                prediction: 2.0,
            },
            SummaryRow {
                t: 1,
                mean_square: 0.1 + 0.2,
                stderr: 1.234567890123e-300,
                prediction: std::f64::consts::PI,
            },
        ];
        write_summary_csv(&p, &rows).unwrap();
        assert_eq!(read_summary_csv(&p).unwrap(), rows);
        std::fs::remove_dir_all(&dir).ok();
    }
}
