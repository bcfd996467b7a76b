//! Principal component analysis of the three rotation axes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GlanceRegion};
use crate::error::{Error, Result};

pub type Mat3 = [[f64; 3]; 3];

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvector `i` in column `i`,
/// unsorted.
pub fn jacobi_eigen(a: &Mat3) -> ([f64; 3], Mat3) {
    let mut m = *a;
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = (2.0 * (m[0][1].powi(2) + m[0][2].powi(2) + m[1][2].powi(2))).sqrt();
        if off < JACOBI_TOL {
            break;
        }
        let mut rotated = false;
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let apq = m[p][q];
            if apq == 0.0 {
                continue;
            }
            let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            if s == 0.0 {
                continue;
            }
            rotated = true;
            // m <- Jᵀ m J for the plane rotation J(p, q)
            for k in 0..3 {
                let mkp = m[k][p];
                let mkq = m[k][q];
                m[k][p] = c * mkp - s * mkq;
                m[k][q] = s * mkp + c * mkq;
            }
            for k in 0..3 {
                let mpk = m[p][k];
                let mqk = m[q][k];
                m[p][k] = c * mpk - s * mqk;
                m[q][k] = s * mpk + c * mqk;
            }
            m[p][q] = 0.0;
            m[q][p] = 0.0;
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
        if !rotated {
            break;
        }
    }
    ([m[0][0], m[1][1], m[2][2]], v)
}

/// A fitted PCA: component rows are unit loadings over (rot_x, rot_y, rot_z).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub components: Mat3,
    /// Descending, non-negative.
    pub eigenvalues: [f64; 3],
    pub mean: [f64; 3],
}

impl PcaModel {
    pub fn total_variance(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Share of total variance per component; zeros when the data has no variance.
    pub fn explained_variance_ratio(&self) -> [f64; 3] {
        let total = self.total_variance();
        if total > 0.0 {
            self.eigenvalues.map(|e| e / total)
        } else {
            [0.0; 3]
        }
    }

    /// Scores of a single point on the first `k` components.
    pub fn transform(&self, x: [f64; 3], k: usize) -> Vec<f64> {
        let c = [x[0] - self.mean[0], x[1] - self.mean[1], x[2] - self.mean[2]];
        self.components[..k]
            .iter()
            .map(|row| row[0] * c[0] + row[1] * c[1] + row[2] * c[2])
            .collect()
    }

    /// Map scores on the leading components back to rotation space.
    pub fn reconstruct(&self, scores: &[f64]) -> [f64; 3] {
        let mut x = self.mean;
        for (row, s) in self.components.iter().zip(scores) {
            for j in 0..3 {
                x[j] += s * row[j];
            }
        }
        x
    }
}

/// Population covariance of `rows` and their mean.
pub fn covariance(rows: &[[f64; 3]]) -> ([f64; 3], Mat3) {
    let n = rows.len() as f64;
    let mut mean = [0.0; 3];
    for r in rows {
        for k in 0..3 {
            mean[k] += r[k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = [[0.0; 3]; 3];
    for r in rows {
        let d = [r[0] - mean[0], r[1] - mean[1], r[2] - mean[2]];
        for i in 0..3 {
            for j in i..3 {
                cov[i][j] += d[i] * d[j];
            }
        }
    }
    for i in 0..3 {
        for j in i..3 {
            cov[i][j] /= n;
            cov[j][i] = cov[i][j];
        }
    }
    (mean, cov)
}

/// PCA of raw rotation triples.
pub fn fit_pca_rows(rows: &[[f64; 3]]) -> Result<PcaModel> {
    if rows.len() < 4 {
        return Err(Error::Precondition(format!("PCA needs at least 4 samples, got {}", rows.len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("PCA input contains non-finite values".into()));
    }
    let (mean, cov) = covariance(rows);
    let (values, vectors) = jacobi_eigen(&cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut components = [[0.0; 3]; 3];
    let mut eigenvalues = [0.0; 3];
    for (slot, &i) in order.iter().enumerate() {
        let mut row = [vectors[0][i], vectors[1][i], vectors[2][i]];
        let lead = (0..3)
            .max_by(|&a, &b| row[a].abs().total_cmp(&row[b].abs()).then(b.cmp(&a)))
            .unwrap();
        if row[lead] < 0.0 {
            row = row.map(|v| -v);
        }
        components[slot] = row;
        eigenvalues[slot] = values[i].max(0.0);
    }
    Ok(PcaModel { components, eigenvalues, mean })
}

/// PCA of a dataset's rotations.
pub fn fit_pca(ds: &Dataset) -> Result<PcaModel> {
    let rows: Vec<[f64; 3]> = ds.samples().iter().map(|s| s.rotation()).collect();
    fit_pca_rows(&rows)
}

/// One projected sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedRow {
    pub subject_id: Arc<str>,
    pub glance: GlanceRegion,
    pub scores: Vec<f64>,
}

/// Scores of every sample on the first `k` components (1 to 3), in input order.
pub fn project(model: &PcaModel, ds: &Dataset, k: usize) -> Result<Vec<ProjectedRow>> {
    if !(1..=3).contains(&k) {
        return Err(Error::Precondition(format!("projection dimension must be 1, 2 or 3, got {k}")));
    }
    Ok(ds
        .samples()
        .iter()
        .map(|s| ProjectedRow {
            subject_id: s.subject_id.clone(),
            glance: s.glance,
            scores: model.transform(s.rotation(), k),
        })
        .collect())
}

/// Mean and spread of component matrices across Monte-Carlo fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentAverage {
    pub runs: usize,
    pub mean: Mat3,
    pub std: Mat3,
    pub mean_explained_variance_ratio: [f64; 3],
}

/// Element-wise mean and population standard deviation of component matrices.
///
/// Each run's rows are sign-aligned to the first run's rows before averaging.
pub fn averaged_components(runs: &[PcaModel]) -> Result<ComponentAverage> {
    let Some(reference) = runs.first() else {
        return Err(Error::Precondition("no PCA runs to average".into()));
    };
    let aligned: Vec<Mat3> = runs
        .iter()
        .map(|m| {
            let mut c = m.components;
            for (row, ref_row) in c.iter_mut().zip(&reference.components) {
                let dot: f64 = (0..3).map(|j| row[j] * ref_row[j]).sum();
                if dot < 0.0 {
                    *row = row.map(|v| -v);
                }
            }
            c
        })
        .collect();
    let n = runs.len() as f64;
    let mut mean = [[0.0; 3]; 3];
    for c in &aligned {
        for i in 0..3 {
            for j in 0..3 {
                mean[i][j] += c[i][j];
            }
        }
    }
    mean.iter_mut().flatten().for_each(|v| *v /= n);
    let mut std = [[0.0; 3]; 3];
    for c in &aligned {
        for i in 0..3 {
            for j in 0..3 {
                std[i][j] += (c[i][j] - mean[i][j]).powi(2);
            }
        }
    }
    std.iter_mut().flatten().for_each(|v| *v = (*v / n).sqrt());
    let mut ratio = [0.0; 3];
    for m in runs {
        for (r, e) in ratio.iter_mut().zip(m.explained_variance_ratio()) {
            *r += e;
        }
    }
    ratio.iter_mut().for_each(|r| *r /= n);
    Ok(ComponentAverage { runs: runs.len(), mean, std, mean_explained_variance_ratio: ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn check_invariants(rows: &[[f64; 3]], m: &PcaModel) {
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| m.components[i][k] * m.components[j][k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-9, "orthonormality {i}{j}: {dot}");
            }
        }
        assert!(m.eigenvalues[0] >= m.eigenvalues[1] && m.eigenvalues[1] >= m.eigenvalues[2]);
        assert!(m.eigenvalues.iter().all(|e| *e >= 0.0));
        let (_, cov) = covariance(rows);
        let trace = cov[0][0] + cov[1][1] + cov[2][2];
        assert!((m.total_variance() - trace).abs() < 1e-9 * trace.max(1.0));
        // cov · cᵢ = λᵢ cᵢ
        for (row, lambda) in m.components.iter().zip(m.eigenvalues) {
            for r in 0..3 {
                let lhs: f64 = (0..3).map(|k| cov[r][k] * row[k]).sum();
                assert!((lhs - lambda * row[r]).abs() < 1e-8 * trace.max(1.0), "eigen residual");
            }
        }
    }

    #[test]
    fn single_axis_variation() {
        let rows: Vec<[f64; 3]> = (0..20).map(|i| [i as f64 - 3.0, 0.0, 0.0]).collect();
        let m = fit_pca_rows(&rows).unwrap();
        assert_eq!(m.components[0], [1.0, 0.0, 0.0]);
        assert!((m.explained_variance_ratio()[0] - 1.0).abs() < 1e-15);
        check_invariants(&rows, &m);
    }

    #[test]
    fn jacobi_diagonalises_known_matrix() {
        // eigenvalues of [[2,1,0],[1,2,0],[0,0,5]] are 5, 3, 1
        let (vals, _) = jacobi_eigen(&[[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 5.0]]);
        let mut v = vals.to_vec();
        v.sort_by(f64::total_cmp);
        assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] - 3.0).abs() < 1e-12 && (v[2] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_or_non_finite_rows() {
        assert!(fit_pca_rows(&[[0.0; 3]; 3]).is_err());
        let mut rows = vec![[1.0, 2.0, 3.0]; 5];
        rows[2][1] = f64::NAN;
        assert!(fit_pca_rows(&rows).is_err());
        // rank-deficient is fine
        let m = fit_pca_rows(&[[1.0, 1.0, 1.0]; 6]).unwrap();
        assert_eq!(m.eigenvalues, [0.0; 3]);
        assert_eq!(m.explained_variance_ratio(), [0.0; 3]);
    }

    #[test]
    fn projection_of_mean_is_zero_and_full_reconstruction_is_exact() {
        let rows: Vec<[f64; 3]> = (0..50)
            .map(|i| {
                let t = i as f64;
                [t.sin() * 3.0, (t * 0.7).cos() * 2.0 + t * 0.01, (t * 1.3).sin()]
            })
            .collect();
        let m = fit_pca_rows(&rows).unwrap();
        check_invariants(&rows, &m);
        assert!(m.transform(m.mean, 3).iter().all(|v| v.abs() < 1e-12));
        for r in &rows {
            let back = m.reconstruct(&m.transform(*r, 3));
            for k in 0..3 {
                assert!((back[k] - r[k]).abs() < 1e-9);
            }
        }
        // rank-2 reconstruction error² equals n·λ₃
        let err: f64 = rows
            .iter()
            .map(|r| {
                let back = m.reconstruct(&m.transform(*r, 2));
                (0..3).map(|k| (back[k] - r[k]).powi(2)).sum::<f64>()
            })
            .sum();
        let expected = m.eigenvalues[2] * rows.len() as f64;
        assert!((err - expected).abs() <= 1e-6 * expected, "{err} vs {expected}");
    }

    #[test]
    fn averaging_aligns_signs() {
        let base = PcaModel {
            components: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            eigenvalues: [3.0, 2.0, 1.0],
            mean: [0.0; 3],
        };
        let mut flipped = base.clone();
        flipped.components[0] = [-1.0, 0.0, 0.0];
        let avg = averaged_components(&[base.clone(), flipped]).unwrap();
        assert_eq!(avg.mean[0], [1.0, 0.0, 0.0]);
        assert_eq!(avg.std, [[0.0; 3]; 3]);

        let same = vec![base.clone(); 50];
        let avg = averaged_components(&same).unwrap();
        assert_eq!(avg.mean, base.components);
        assert_eq!(avg.std, [[0.0; 3]; 3]);
        assert_eq!(avg.runs, 50);
        assert!(averaged_components(&[]).is_err());
    }

    proptest! {
        #[test]
        fn invariants_hold_on_random_data(
            rows in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0), 4..80),
            mix in (-1.0f64..1.0, -1.0f64..1.0),
        ) {
            let rows: Vec<[f64; 3]> = rows.into_iter().map(|(a, b, c)| [a, b + mix.0 * a, c + mix.1 * b]).collect();
            let m = fit_pca_rows(&rows).unwrap();
            check_invariants(&rows, &m);
            let total: f64 = m.explained_variance_ratio().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            // row order does not change the model beyond rounding
            let mut rev = rows.clone();
            rev.reverse();
            let r = fit_pca_rows(&rev).unwrap();
            for i in 0..3 {
                prop_assert!((r.eigenvalues[i] - m.eigenvalues[i]).abs() < 1e-9 * m.eigenvalues[0].max(1.0));
                if m.eigenvalues[0] - m.eigenvalues[1] > 1e-3 && m.eigenvalues[1] - m.eigenvalues[2] > 1e-3 {
                    for j in 0..3 {
                        prop_assert!((r.components[i][j] - m.components[i][j]).abs() < 1e-6);
                    }
                }
            }
        }
    }
}
