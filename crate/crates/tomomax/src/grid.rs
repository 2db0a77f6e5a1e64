//! Estimator-grid geometry for rebit tables: every dataset `(n_x, n_y)` maps
//! to a vertex, and grid lines connect datasets adjacent in one count. The
//! linear-inversion grid is the uniform reference square; other estimators
//! appear as its distortion, and weight clustering along the lines exposes
//! where an estimator is biased.

use thiserror::Error;

use crate::estimators::TabulatedEstimator;
use crate::experiment::Dataset;
use crate::qstate::Kind;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("estimator grids are only defined for rebit tables")]
    NotRebit,
    #[error("estimator grids need the two-basis default design")]
    NotTwoBases,
    #[error("estimator grids need a uniform shot allocation")]
    UnevenShots,
}

/// The `(M+1) x (M+1)` vertex sheet of a rebit estimator.
#[derive(Debug, Clone)]
pub struct GridGeometry {
    shots: u32,
    vertices: Vec<[f64; 2]>,
}

impl GridGeometry {
    pub fn shots(&self) -> u32 {
        self.shots
    }

    pub fn side(&self) -> usize {
        self.shots as usize + 1
    }

    pub fn vertex(&self, n_x: u32, n_y: u32) -> [f64; 2] {
        self.vertices[n_x as usize * self.side() + n_y as usize]
    }

    /// Polyline of constant `n_y` (a "row" of the grid sheet).
    pub fn row(&self, n_y: u32) -> Vec<[f64; 2]> {
        (0..=self.shots).map(|n_x| self.vertex(n_x, n_y)).collect()
    }

    /// Polyline of constant `n_x`.
    pub fn column(&self, n_x: u32) -> Vec<[f64; 2]> {
        (0..=self.shots).map(|n_y| self.vertex(n_x, n_y)).collect()
    }

    pub fn max_vertex_norm(&self) -> f64 {
        self.vertices
            .iter()
            .map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt())
            .fold(0.0, f64::max)
    }

    /// Smallest distance of any vertex to the unit circle.
    pub fn min_interior_margin(&self) -> f64 {
        1.0 - self.max_vertex_norm()
    }

    /// Relative variance (variance over squared mean) of consecutive vertex
    /// spacings, pooled over the four outermost grid lines. Clustering of
    /// estimates ("ripples") shows up as a large value.
    pub fn boundary_spacing_variance(&self) -> f64 {
        let m = self.shots;
        let mut spacings = Vec::new();
        for line in [
            self.row(0),
            self.row(m),
            self.column(0),
            self.column(m),
        ] {
            for pair in line.windows(2) {
                let dx = pair[1][0] - pair[0][0];
                let dy = pair[1][1] - pair[0][1];
                spacings.push((dx * dx + dy * dy).sqrt());
            }
        }
        let n = spacings.len() as f64;
        let mean: f64 = spacings.iter().sum::<f64>() / n;
        if mean == 0.0 {
            return 0.0;
        }
        let var: f64 = spacings.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        var / (mean * mean)
    }
}

/// Extract the grid sheet of a rebit estimator table.
pub fn estimator_grid(estimator: &TabulatedEstimator) -> Result<GridGeometry, GridError> {
    let design = estimator.design();
    if design.kind() != Kind::Rebit {
        return Err(GridError::NotRebit);
    }
    if design.num_bases() != 2 {
        return Err(GridError::NotTwoBases);
    }
    let shots = design
        .uniform_shots()
        .ok_or(GridError::UnevenShots)?;
    let side = shots as usize + 1;
    let mut vertices = vec![[0.0; 2]; side * side];
    for n_x in 0..=shots {
        for n_y in 0..=shots {
            let idx = design
                .dataset_index(&Dataset::new(vec![n_x, n_y]))
                .expect("dataset in range");
            let r = estimator.entry(idx).bloch();
            vertices[n_x as usize * side + n_y as usize] = [r[0], r[1]];
        }
    }
    Ok(GridGeometry { shots, vertices })
}
