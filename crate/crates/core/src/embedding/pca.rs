//! PCA over raw embeddings: fit on the full pool once per space, then
//! project queries and pool vectors into the reduced space.
//!
//! The fit is an eigendecomposition of the sample covariance of the centered
//! data. Components are the top-d eigenvectors sorted by descending
//! eigenvalue; each component's sign is normalized so its largest-magnitude
//! entry is positive, which makes repeated fits on the same data bit-for-bit
//! identical.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmbeddingError, RawEmbedding, ReducedEmbedding, Space};

pub const PCA_SCHEMA: &str = "rprm-pca/1";

/// A fitted PCA projection from dimension D to d.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// d rows of length D; row i is the i-th principal component.
    components: Vec<Vec<f64>>,
    /// Eigenvalues of the sample covariance for the kept components,
    /// non-increasing.
    explained_variance: Vec<f64>,
    space: Space,
    fingerprint: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PcaModelFile {
    schema: String,
    space: Space,
    mean: Vec<f64>,
    components: Vec<Vec<f64>>,
    explained_variance: Vec<f64>,
    /// Snapshot hash of the run that wrote the file; not part of the model
    /// fingerprint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.len()
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    /// Hex sha256 of the serialized model; reduced vectors and indexes carry
    /// it so mixed-model pools are rejected.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Project a raw vector: Wᵀ(v − μ).
    pub fn transform(&self, v: &RawEmbedding) -> Result<ReducedEmbedding, EmbeddingError> {
        if v.dim() != self.input_dim() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.input_dim(),
                got: v.dim(),
            });
        }
        if v.space != self.space {
            return Err(EmbeddingError::SpaceMismatch {
                expected: self.space,
                got: v.space,
            });
        }
        let centered: Vec<f64> = v
            .values
            .iter()
            .zip(&self.mean)
            .map(|(x, m)| x - m)
            .collect();
        let values = self
            .components
            .iter()
            .map(|row| row.iter().zip(&centered).map(|(w, c)| w * c).sum())
            .collect();
        Ok(ReducedEmbedding::new(values, self.space, &self.fingerprint))
    }

    /// Map a reduced vector back to the raw space: μ + W·x. Used for
    /// reconstruction-error checks.
    pub fn reconstruct(&self, reduced: &ReducedEmbedding) -> Result<Vec<f64>, EmbeddingError> {
        if reduced.dim() != self.output_dim() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.output_dim(),
                got: reduced.dim(),
            });
        }
        let mut out = self.mean.clone();
        for (coef, row) in reduced.values.iter().zip(&self.components) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += coef * w;
            }
        }
        Ok(out)
    }

    fn to_file(&self) -> PcaModelFile {
        PcaModelFile {
            schema: PCA_SCHEMA.to_string(),
            space: self.space,
            mean: self.mean.clone(),
            components: self.components.clone(),
            explained_variance: self.explained_variance.clone(),
            config_hash: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("pca model serializes")
    }

    /// Serialize with the config snapshot hash of the producing run. The
    /// hash rides along in the file but never enters the fingerprint.
    pub fn to_json_with_hash(&self, config_hash: &str) -> String {
        let mut file = self.to_file();
        file.config_hash = Some(config_hash.to_string());
        serde_json::to_string(&file).expect("pca model serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        fs::write(path, self.to_json()).map_err(|e| EmbeddingError::BadFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn from_json(json: &str) -> Result<Self, EmbeddingError> {
        let bad = |message: String| EmbeddingError::BadFile {
            path: "<json>".to_string(),
            message,
        };
        let file: PcaModelFile = serde_json::from_str(json).map_err(|e| bad(e.to_string()))?;
        if file.schema != PCA_SCHEMA {
            return Err(bad(format!(
                "wrong schema {:?}, expected {PCA_SCHEMA:?}",
                file.schema
            )));
        }
        let fingerprint = fingerprint_of(&file);
        let model = Self {
            mean: file.mean,
            components: file.components,
            explained_variance: file.explained_variance,
            space: file.space,
            fingerprint,
        };
        // Loaded models must satisfy the same invariants a fit produces.
        let input_dim = model.input_dim();
        if model.components.iter().any(|row| row.len() != input_dim) {
            return Err(bad(
                "component row length differs from mean length".to_string()
            ));
        }
        if model.explained_variance.len() != model.components.len() {
            return Err(bad(
                "explained_variance length differs from component count".to_string(),
            ));
        }
        for pair in model.explained_variance.windows(2) {
            if pair[0] < pair[1] {
                return Err(bad("explained_variance is not non-increasing".to_string()));
            }
        }
        if model.explained_variance.iter().any(|&v| !(v >= 0.0)) {
            return Err(bad("negative or non-finite explained_variance".to_string()));
        }
        let residual = orthonormality_residual(&model);
        if residual >= 1e-6 {
            return Err(bad(format!(
                "components are not orthonormal (residual {residual:.2e})"
            )));
        }
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        let json = fs::read_to_string(path).map_err(|e| EmbeddingError::BadFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&json)
    }
}

fn fingerprint_of(file: &PcaModelFile) -> String {
    let mut canonical = file.clone();
    canonical.config_hash = None;
    let json = serde_json::to_string(&canonical).expect("pca model serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Fit a PCA model with `d` components on raw vectors of equal dimension.
///
/// Requires at least d+1 samples and non-degenerate data. Components are
/// eigenvectors of the sample covariance (denominator n−1), descending by
/// eigenvalue, sign-normalized.
pub fn fit_pca(vectors: &[RawEmbedding], d: usize) -> Result<PcaModel, EmbeddingError> {
    if d == 0 {
        return Err(EmbeddingError::ZeroTargetDim);
    }
    let n = vectors.len();
    let Some(first) = vectors.first() else {
        return Err(EmbeddingError::TooFewSamples {
            needed: d + 1,
            d,
            got: 0,
        });
    };
    let input_dim = first.dim();
    let space = first.space;
    if d > input_dim {
        return Err(EmbeddingError::TargetDimTooLarge { d, input_dim });
    }
    if n < d + 1 {
        return Err(EmbeddingError::TooFewSamples {
            needed: d + 1,
            d,
            got: n,
        });
    }
    for v in vectors {
        if v.dim() != input_dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: input_dim,
                got: v.dim(),
            });
        }
        if v.space != space {
            return Err(EmbeddingError::SpaceMismatch {
                expected: space,
                got: v.space,
            });
        }
        if v.values.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::NonFinite {
                text: "<fit input>".to_string(),
            });
        }
    }

    let nf = n as f64;
    let mut mean = vec![0.0; input_dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(&v.values) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= nf;
    }

    let mut centered = DMatrix::<f64>::zeros(n, input_dim);
    let mut scale_sq: f64 = 0.0;
    for (i, v) in vectors.iter().enumerate() {
        let mut row_norm = 0.0;
        for (j, (x, m)) in v.values.iter().zip(&mean).enumerate() {
            centered[(i, j)] = x - m;
            row_norm += x * x;
        }
        scale_sq = scale_sq.max(row_norm);
    }

    let denom = nf - 1.0;
    let covariance = centered.transpose() * &centered / denom;
    let total_variance = covariance.trace();
    // Identical inputs leave only rounding residue after centering; treat
    // anything at that level, relative to the data scale, as zero variance.
    if total_variance <= 1e-20 * scale_sq.max(f64::MIN_POSITIVE) {
        return Err(EmbeddingError::DegenerateData);
    }

    let eigen = covariance.symmetric_eigen();
    let mut order: Vec<usize> = (0..input_dim).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .total_cmp(&eigen.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let mut components = Vec::with_capacity(d);
    let mut explained_variance = Vec::with_capacity(d);
    for &col in order.iter().take(d) {
        let mut component: Vec<f64> = eigen.eigenvectors.column(col).iter().copied().collect();
        // Sign convention: the largest-magnitude entry (lowest index on
        // ties) is made positive.
        let pivot = component
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.abs().total_cmp(&b.abs()).then(ib.cmp(ia)))
            .map(|(i, _)| i)
            .expect("non-empty component");
        if component[pivot] < 0.0 {
            for x in &mut component {
                *x = -*x;
            }
        }
        components.push(component);
        explained_variance.push(eigen.eigenvalues[col].max(0.0));
    }

    let file = PcaModelFile {
        schema: PCA_SCHEMA.to_string(),
        space,
        mean,
        components,
        explained_variance,
        config_hash: None,
    };
    let fingerprint = fingerprint_of(&file);
    Ok(PcaModel {
        mean: file.mean,
        components: file.components,
        explained_variance: file.explained_variance,
        space,
        fingerprint,
    })
}

/// Max-norm of WᵀW − I, the orthonormality residual. Test helper exposed for
/// the acceptance suite.
pub fn orthonormality_residual(model: &PcaModel) -> f64 {
    let d = model.output_dim();
    let input_dim = model.input_dim();
    let w = DMatrix::from_fn(input_dim, d, |i, j| model.components[j][i]);
    let gram = w.transpose() * w;
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Sample variance (denominator n−1) of the projections of `vectors` on
/// each component. Test helper for the eigenvalue/variance identity.
pub fn projected_variances(model: &PcaModel, vectors: &[RawEmbedding]) -> Vec<f64> {
    let n = vectors.len();
    let d = model.output_dim();
    let mut projections = vec![Vec::with_capacity(n); d];
    for v in vectors {
        let reduced = model.transform(v).expect("fit inputs transform");
        for (axis, value) in reduced.values.iter().enumerate() {
            projections[axis].push(*value);
        }
    }
    projections
        .iter()
        .map(|values| {
            let mean: f64 = values.iter().sum::<f64>() / n as f64;
            values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)
        })
        .collect()
}
