//! Finite models of `T_z = F(H − z)⁻¹F*` in the spectral representation.
//!
//! `H` is diagonal on the nodes `x_i`, and `F = J·diag(w_i·√μ_i)` with `J`
//! either the identity or a seeded isometry with orthonormal rows. The
//! resolvent is applied entrywise, so `T_z` is exact up to rounding.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid_input, invalid_model, Error, Result};
use crate::spectral_model::{SpectralMeasure, WeightFunction};

/// How the weighted spectral space is embedded into the target space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingSpec {
    Identity,
    /// First `dim` rows of a seeded Gaussian matrix, orthonormalized.
    Isometry {
        dim: usize,
        seed: u64,
    },
}

/// Target dimension requested from [`discretize`]. In config text this is
/// either the string `"same"` or a positive integer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingDim {
    Same,
    Dim(usize),
}

impl Serialize for EmbeddingDim {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EmbeddingDim::Same => s.serialize_str("same"),
            EmbeddingDim::Dim(m) => s.serialize_u64(*m as u64),
        }
    }
}

impl<'de> Deserialize<'de> for EmbeddingDim {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Dim(u64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Dim(m) => Ok(EmbeddingDim::Dim(m as usize)),
            Raw::Word(w) if w == "same" => Ok(EmbeddingDim::Same),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "embedding_dim must be \"same\" or an integer, got {w:?}"
            ))),
        }
    }
}

/// Orthonormal rows of a seeded `dim × n` Gaussian matrix (modified
/// Gram–Schmidt, two passes).
fn seeded_isometry(dim: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = (0..dim)
        .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    for _pass in 0..2 {
        for a in 0..dim {
            let (done, rest) = rows.split_at_mut(a);
            let row = &mut rest[0];
            for prev in done.iter() {
                let dot: f64 = row.iter().zip(prev).map(|(x, y)| x * y).sum();
                row.iter_mut().zip(prev).for_each(|(x, y)| *x -= dot * y);
            }
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            row.iter_mut().for_each(|x| *x /= norm);
        }
    }
    DMatrix::from_fn(dim, n, |a, i| rows[a][i])
}

/// A finite spectral model: `H = diag(nodes)`, quadrature masses, weights,
/// atom flags and the embedding `J`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixModel {
    nodes: Vec<f64>,
    masses: Vec<f64>,
    weights: Vec<f64>,
    atom_flags: Vec<bool>,
    embedding: EmbeddingSpec,
    /// `w_i²·μ_i`, the diagonal of `F*F` before embedding.
    strengths: Vec<f64>,
    rows: Option<DMatrix<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    nodes: Vec<f64>,
    masses: Vec<f64>,
    weights: Vec<f64>,
    atom_flags: Vec<bool>,
    embedding: EmbeddingSpec,
}

impl MatrixModel {
    /// Builds a model from explicit arrays.
    ///
    /// Nodes must be nondecreasing; equal coordinates are allowed only between
    /// flagged atom nodes (a degenerate eigenvalue).
    pub fn from_parts(
        nodes: Vec<f64>,
        masses: Vec<f64>,
        weights: Vec<f64>,
        atom_flags: Vec<bool>,
        embedding: EmbeddingSpec,
    ) -> Result<Self> {
        let n = nodes.len();
        if masses.len() != n || weights.len() != n || atom_flags.len() != n {
            return Err(invalid_model(
                "nodes, masses, weights and flags differ in length",
            ));
        }
        if nodes.iter().any(|x| !x.is_finite()) {
            return Err(invalid_model("nodes must be finite"));
        }
        if masses.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(invalid_model("masses must be positive and finite"));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(invalid_model("weights must be nonnegative and finite"));
        }
        for i in 1..n {
            let tie_ok = atom_flags[i] && atom_flags[i - 1];
            if nodes[i] < nodes[i - 1] || (nodes[i] == nodes[i - 1] && !tie_ok) {
                return Err(invalid_model(format!(
                    "nodes must increase (node {} = {} after {})",
                    i,
                    nodes[i],
                    nodes[i - 1]
                )));
            }
        }
        let rows = match embedding {
            EmbeddingSpec::Identity => None,
            EmbeddingSpec::Isometry { dim, seed } => {
                if dim == 0 || dim > n {
                    return Err(invalid_model(format!(
                        "embedding dimension {dim} must lie in 1..={n}"
                    )));
                }
                Some(seeded_isometry(dim, n, seed))
            }
        };
        let strengths = weights
            .iter()
            .zip(&masses)
            .map(|(w, m)| w * w * m)
            .collect();
        Ok(Self {
            nodes,
            masses,
            weights,
            atom_flags,
            embedding,
            strengths,
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atom_flags(&self) -> &[bool] {
        &self.atom_flags
    }

    pub fn embedding(&self) -> EmbeddingSpec {
        self.embedding
    }

    /// Dimension `m` of the target space.
    pub fn target_dim(&self) -> usize {
        self.rows.as_ref().map_or(self.len(), |r| r.nrows())
    }

    /// `J` as an `m × n` matrix (materialized even for the identity).
    pub fn embedding_matrix(&self) -> DMatrix<f64> {
        match &self.rows {
            Some(r) => r.clone(),
            None => DMatrix::identity(self.len(), self.len()),
        }
    }

    /// `F = J·diag(w_i·√μ_i)`.
    pub fn rigging_matrix(&self) -> DMatrix<f64> {
        let scale = DVector::from_iterator(
            self.len(),
            self.weights
                .iter()
                .zip(&self.masses)
                .map(|(w, m)| w * m.sqrt()),
        );
        let mut f = self.embedding_matrix();
        for (mut col, s) in f.column_iter_mut().zip(scale.iter()) {
            col *= *s;
        }
        f
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    fn flagged_at(&self, lambda: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.atom_flags[i] && self.nodes[i] == lambda)
            .collect()
    }

    /// Largest gap between consecutive non-atom nodes adjacent to `λ`
    /// (two gaps on each side). Infinite if fewer than two such nodes exist.
    pub fn local_spacing(&self, lambda: f64) -> f64 {
        let grid: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.atom_flags)
            .filter(|(_, &a)| !a)
            .map(|(x, _)| *x)
            .collect();
        if grid.len() < 2 {
            return f64::INFINITY;
        }
        let pos = grid.partition_point(|&x| x < lambda);
        let lo = pos.saturating_sub(2).max(1);
        let hi = (pos + 2).min(grid.len() - 1);
        (lo..=hi).map(|k| grid[k] - grid[k - 1]).fold(0.0, f64::max)
    }

    /// `⟨T_z 𝟙, 𝟙⟩ = Σ w_i² μ_i / (x_i − z)`: the quadratic form on the
    /// constant function, which discretizes the weighted Cauchy transform.
    /// Requires the identity embedding.
    pub fn transform_form(&self, z: Complex64) -> Result<Complex64> {
        if self.rows.is_some() {
            return Err(invalid_input("transform_form needs the identity embedding"));
        }
        Ok(self
            .nodes
            .iter()
            .zip(&self.strengths)
            .map(|(x, s)| Complex64::new(*s, 0.0) / (x - z))
            .sum())
    }

    /// `‖FF*‖`.
    pub fn gram_norm(&self) -> f64 {
        let d: Vec<Complex64> = self
            .strengths
            .iter()
            .map(|s| Complex64::new(*s, 0.0))
            .collect();
        self.compress(&d, |_| true).norm()
    }

    /// `J·diag(d_i)·Jᵀ` restricted to the nodes selected by `keep`.
    fn compress(&self, d: &[Complex64], keep: impl Fn(usize) -> bool) -> SandwichMatrix {
        match &self.rows {
            None => SandwichMatrix::Diagonal(
                (0..self.len())
                    .map(|i| {
                        if keep(i) {
                            d[i]
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    })
                    .collect(),
            ),
            Some(j) => {
                let m = j.nrows();
                let mut t = DMatrix::<Complex64>::zeros(m, m);
                for (i, col) in j.column_iter().enumerate() {
                    if !keep(i) || d[i] == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    for b in 0..m {
                        let cb = d[i] * col[b];
                        for a in b..m {
                            t[(a, b)] += cb * col[a];
                        }
                    }
                }
                for b in 0..m {
                    for a in (b + 1)..m {
                        t[(b, a)] = t[(a, b)];
                    }
                }
                SandwichMatrix::Dense(t)
            }
        }
    }

    fn resolvent_sample(
        &self,
        z: Complex64,
        keep: impl Fn(usize) -> bool,
    ) -> Result<OperatorSample> {
        let mut on_axis = false;
        if z.im == 0.0 {
            if (0..self.len()).any(|i| keep(i) && self.nodes[i] == z.re) {
                return Err(Error::NonrealRequired { re: z.re });
            }
            on_axis = true;
        }
        let d: Vec<Complex64> = self
            .nodes
            .iter()
            .zip(&self.strengths)
            .map(|(x, s)| Complex64::new(*s, 0.0) / (x - z))
            .collect();
        let t = self.compress(&d, keep);
        let norm = t.norm();
        Ok(OperatorSample {
            z,
            t,
            norm,
            on_axis,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let rec = ModelRecord {
            nodes: self.nodes.clone(),
            masses: self.masses.clone(),
            weights: self.weights.clone(),
            atom_flags: self.atom_flags.clone(),
            embedding: self.embedding,
        };
        serde_json::to_string_pretty(&rec).map_err(|e| invalid_input(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: ModelRecord =
            serde_json::from_str(text).map_err(|e| invalid_input(e.to_string()))?;
        Self::from_parts(
            rec.nodes,
            rec.masses,
            rec.weights,
            rec.atom_flags,
            rec.embedding,
        )
    }
}

/// A sandwiched operator on the target space. Identity embeddings keep the
/// diagonal form so large models never materialize an `n × n` matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum SandwichMatrix {
    Diagonal(Vec<Complex64>),
    Dense(DMatrix<Complex64>),
}

impl SandwichMatrix {
    pub fn dim(&self) -> usize {
        match self {
            SandwichMatrix::Diagonal(d) => d.len(),
            SandwichMatrix::Dense(t) => t.nrows(),
        }
    }

    pub fn entry(&self, a: usize, b: usize) -> Complex64 {
        match self {
            SandwichMatrix::Diagonal(d) if a == b => d[a],
            SandwichMatrix::Diagonal(_) => Complex64::new(0.0, 0.0),
            SandwichMatrix::Dense(t) => t[(a, b)],
        }
    }

    /// Spectral norm.
    pub fn norm(&self) -> f64 {
        match self {
            SandwichMatrix::Diagonal(d) => d.iter().map(|v| v.norm()).fold(0.0, f64::max),
            SandwichMatrix::Dense(t) => operator_norm(t),
        }
    }

    /// `⟨T u, u⟩ = Σ_ab conj(u_a)·T_ab·u_b`.
    pub fn form(&self, u: &[Complex64]) -> Result<Complex64> {
        if u.len() != self.dim() {
            return Err(invalid_input(format!(
                "test vector has length {}, operator dimension is {}",
                u.len(),
                self.dim()
            )));
        }
        Ok(match self {
            SandwichMatrix::Diagonal(d) => d.iter().zip(u).map(|(t, v)| v.conj() * t * v).sum(),
            SandwichMatrix::Dense(t) => {
                let v = DVector::from_column_slice(u);
                v.dotc(&(t * &v))
            }
        })
    }

    pub fn max_abs_entry(&self) -> f64 {
        match self {
            SandwichMatrix::Diagonal(d) => d.iter().map(|v| v.norm()).fold(0.0, f64::max),
            SandwichMatrix::Dense(t) => t.iter().map(|v| v.norm()).fold(0.0, f64::max),
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        match self {
            SandwichMatrix::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            SandwichMatrix::Dense(t) => t.clone(),
        }
    }

    pub fn scale(&self, c: Complex64) -> SandwichMatrix {
        match self {
            SandwichMatrix::Diagonal(d) => {
                SandwichMatrix::Diagonal(d.iter().map(|v| v * c).collect())
            }
            SandwichMatrix::Dense(t) => SandwichMatrix::Dense(t * c),
        }
    }

    fn combine(
        &self,
        other: &SandwichMatrix,
        op: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> SandwichMatrix {
        assert_eq!(self.dim(), other.dim(), "operator dimensions differ");
        match (self, other) {
            (SandwichMatrix::Diagonal(a), SandwichMatrix::Diagonal(b)) => {
                SandwichMatrix::Diagonal(a.iter().zip(b).map(|(x, y)| op(*x, *y)).collect())
            }
            _ => {
                let (a, b) = (self.to_dense(), other.to_dense());
                SandwichMatrix::Dense(a.zip_map(&b, op))
            }
        }
    }

    pub fn add(&self, other: &SandwichMatrix) -> SandwichMatrix {
        self.combine(other, |x, y| x + y)
    }

    pub fn sub(&self, other: &SandwichMatrix) -> SandwichMatrix {
        self.combine(other, |x, y| x - y)
    }

    pub fn conj_transpose(&self) -> SandwichMatrix {
        match self {
            SandwichMatrix::Diagonal(d) => {
                SandwichMatrix::Diagonal(d.iter().map(|v| v.conj()).collect())
            }
            SandwichMatrix::Dense(t) => SandwichMatrix::Dense(t.adjoint()),
        }
    }
}

/// `T_z` at one spectral parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorSample {
    pub z: Complex64,
    pub t: SandwichMatrix,
    pub norm: f64,
    /// Set when `z` is real (and avoids every node); such samples are a
    /// finite-model artefact, not a boundary value.
    pub on_axis: bool,
}

/// Largest singular value.
pub fn operator_norm(t: &DMatrix<Complex64>) -> f64 {
    if t.is_empty() {
        return 0.0;
    }
    t.clone().singular_values().max()
}

/// Samples the measure on midpoint nodes over the hull of its density
/// supports and adds one flagged node per atom.
///
/// `n` counts all nodes before pruning: `n − #atoms` midpoint cells, of which
/// zero-mass cells are dropped. A purely atomic measure needs `n ≥ 2` and one
/// node per atom; otherwise `n ≥ #atoms + 2`. A cell whose midpoint falls exactly on an
/// atom is split in two half-cells so atom coordinates stay unique.
pub fn discretize(
    measure: &SpectralMeasure,
    weight: &WeightFunction,
    n: usize,
    embedding_dim: EmbeddingDim,
    seed: u64,
) -> Result<MatrixModel> {
    weight.validate()?;
    let n_atoms = measure.atoms().len();
    // Two density cells are reserved only when there is a density to sample.
    let required = if measure.ac_parts().is_empty() {
        n_atoms.max(2)
    } else {
        n_atoms + 2
    };
    if n < required {
        return Err(Error::TooFewNodes { required, got: n });
    }

    let mut entries: Vec<(f64, f64, bool)> = Vec::with_capacity(n + 1);
    let cells = n - n_atoms;
    let lo = measure
        .ac_parts()
        .iter()
        .map(|p| p.support.lo)
        .fold(f64::INFINITY, f64::min);
    let hi = measure
        .ac_parts()
        .iter()
        .map(|p| p.support.hi)
        .fold(f64::NEG_INFINITY, f64::max);
    if lo < hi {
        let width = (hi - lo) / cells as f64;
        let mut push_cell = |x: f64, dx: f64| {
            let mass = measure.density(x) * dx;
            if mass > 0.0 {
                entries.push((x, mass, false));
            }
        };
        for k in 0..cells {
            let x = lo + (k as f64 + 0.5) * width;
            if measure.atom_at(x).is_some() {
                push_cell(x - 0.25 * width, 0.5 * width);
                push_cell(x + 0.25 * width, 0.5 * width);
            } else {
                push_cell(x, width);
            }
        }
    }
    entries.extend(measure.atoms().iter().map(|a| (a.location, a.mass, true)));
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));

    let embedding = match embedding_dim {
        EmbeddingDim::Same => EmbeddingSpec::Identity,
        EmbeddingDim::Dim(dim) => {
            if dim > entries.len() {
                return Err(invalid_input(format!(
                    "embedding dimension {dim} exceeds the {} retained nodes",
                    entries.len()
                )));
            }
            EmbeddingSpec::Isometry { dim, seed }
        }
    };

    MatrixModel::from_parts(
        entries.iter().map(|e| e.0).collect(),
        entries.iter().map(|e| e.1).collect(),
        entries.iter().map(|e| weight.value(e.0)).collect(),
        entries.iter().map(|e| e.2).collect(),
        embedding,
    )
}

/// `T_z = F·diag(1/(x_i − z))·F*`.
pub fn sandwiched_resolvent(model: &MatrixModel, z: Complex64) -> Result<OperatorSample> {
    model.resolvent_sample(z, |_| true)
}

/// `(FP_λ)(FP_λ)*` and its norm `‖FP_λ‖²`, where `P_λ` projects onto the
/// flagged nodes stored exactly at `λ`.
pub fn eigen_contribution(model: &MatrixModel, lambda: f64) -> Result<(SandwichMatrix, f64)> {
    let idx = model.flagged_at(lambda);
    if idx.is_empty() {
        return Err(Error::NoAtomAtLambda { lambda });
    }
    let d: Vec<Complex64> = model
        .strengths
        .iter()
        .map(|s| Complex64::new(*s, 0.0))
        .collect();
    let e = model.compress(&d, |i| idx.contains(&i));
    let norm = e.norm();
    Ok((e, norm))
}

/// `F(1 − P_λ)(H − z)⁻¹(1 − P_λ)F*`; equals [`sandwiched_resolvent`] when no
/// flagged node sits at `λ`.
pub fn regularized_resolvent(
    model: &MatrixModel,
    z: Complex64,
    lambda: f64,
) -> Result<OperatorSample> {
    let idx = model.flagged_at(lambda);
    model.resolvent_sample(z, |i| !idx.contains(&i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_model::{Atom, DensityFamily};
    use proptest::prelude::*;

    const I: Complex64 = Complex64::new(0.0, 1.0);

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_atom_model() {
        let m = SpectralMeasure::new(
            vec![],
            vec![Atom {
                location: 0.0,
                mass: 1.0,
            }],
        )
        .unwrap();
        let w = WeightFunction::Hat {
            center: 0.0,
            half_width: 1.0,
        };
        let model = discretize(&m, &w, 2, EmbeddingDim::Same, 0).unwrap();
        assert_eq!(model.len(), 1);
        assert!(model.atom_flags()[0]);
        let s = sandwiched_resolvent(&model, c(0.0, 0.5)).unwrap();
        assert_eq!(s.t.entry(0, 0), c(1.0, 0.0) / c(0.0, -0.5));
        assert!((s.norm - 2.0).abs() < 1e-15);
    }

    #[test]
    fn too_few_nodes() {
        let m = SpectralMeasure::new(
            vec![DensityFamily::constant(1.0, -1.0, 2.0)],
            vec![
                Atom {
                    location: 0.0,
                    mass: 1.0,
                },
                Atom {
                    location: 1.0,
                    mass: 1.0,
                },
            ],
        )
        .unwrap();
        let w = WeightFunction::plateau(-1.0, 2.0);
        assert!(matches!(
            discretize(&m, &w, 3, EmbeddingDim::Same, 0),
            Err(Error::TooFewNodes {
                required: 4,
                got: 3
            })
        ));
        let atoms = SpectralMeasure::new(vec![], m.atoms().to_vec()).unwrap();
        assert!(matches!(
            discretize(&atoms, &w, 1, EmbeddingDim::Same, 0),
            Err(Error::TooFewNodes {
                required: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn uniform_mass_sum() {
        let m =
            SpectralMeasure::absolutely_continuous(vec![DensityFamily::constant(1.0, -1.0, 1.0)])
                .unwrap();
        let model = discretize(
            &m,
            &WeightFunction::plateau(-1.0, 1.0),
            1000,
            EmbeddingDim::Same,
            0,
        )
        .unwrap();
        let total: f64 = model.masses().iter().sum();
        assert!((total - 2.0).abs() <= 1e-4);
        assert_eq!(model.len(), 1000);
    }

    #[test]
    fn smooth_density_mass_converges_quadratically() {
        let m =
            SpectralMeasure::absolutely_continuous(vec![DensityFamily::smooth_bump(1.0, 0.0, 1.0)])
                .unwrap();
        let w = WeightFunction::plateau(-1.0, 1.0);
        let exact = m.total_mass();
        let err = |n| {
            let model = discretize(&m, &w, n, EmbeddingDim::Same, 0).unwrap();
            (model.total_mass() - exact).abs()
        };
        let (e1, e2) = (err(100), err(200));
        assert!(e1 < 1e-3 && e2 < 0.3 * e1 + 1e-14, "{e1} {e2}");
    }

    #[test]
    fn midpoint_on_atom_is_split() {
        let m = SpectralMeasure::new(
            vec![DensityFamily::constant(1.0, -1.0, 1.0)],
            vec![Atom {
                location: 0.0,
                mass: 1.0,
            }],
        )
        .unwrap();
        // 3 cells of width 2/3: the middle midpoint is 0
        let model = discretize(
            &m,
            &WeightFunction::plateau(-1.0, 1.0),
            4,
            EmbeddingDim::Same,
            0,
        )
        .unwrap();
        assert_eq!(model.len(), 5);
        assert!((model.total_mass() - 3.0).abs() < 1e-15);
        assert_eq!(model.atom_flags().iter().filter(|f| **f).count(), 1);
    }

    #[test]
    fn identity_rigging_is_diagonal() {
        let m =
            SpectralMeasure::absolutely_continuous(vec![DensityFamily::constant(1.0, 0.0, 1.0)])
                .unwrap();
        let w = WeightFunction::Hat {
            center: 0.5,
            half_width: 1.0,
        };
        let model = discretize(&m, &w, 6, EmbeddingDim::Same, 0).unwrap();
        let f = model.rigging_matrix();
        for a in 0..6 {
            for b in 0..6 {
                if a != b {
                    assert_eq!(f[(a, b)], 0.0);
                }
            }
        }
    }

    #[test]
    fn two_node_identity() {
        let model = MatrixModel::from_parts(
            vec![-1.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![false, false],
            EmbeddingSpec::Identity,
        )
        .unwrap();
        let s = sandwiched_resolvent(&model, I).unwrap();
        assert_eq!(
            s.t,
            SandwichMatrix::Diagonal(vec![1.0 / c(-1.0, -1.0), 1.0 / c(1.0, -1.0)])
        );
        assert!((s.norm - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_give_zero() {
        let model = MatrixModel::from_parts(
            vec![-1.0, 0.0, 1.0],
            vec![1.0; 3],
            vec![0.0; 3],
            vec![false; 3],
            EmbeddingSpec::Isometry { dim: 2, seed: 3 },
        )
        .unwrap();
        let s = sandwiched_resolvent(&model, c(0.1, 0.2)).unwrap();
        assert_eq!(s.norm, 0.0);
    }

    #[test]
    fn scalar_atom_is_i_over_y() {
        let f = 0.7;
        let model = MatrixModel::from_parts(
            vec![0.3],
            vec![1.0],
            vec![f],
            vec![true],
            EmbeddingSpec::Identity,
        )
        .unwrap();
        let y = 1e-3;
        let s = sandwiched_resolvent(&model, c(0.3, y)).unwrap();
        let expected = c(0.0, f * f / y);
        assert!((s.t.entry(0, 0) - expected).norm() <= 1e-12 * expected.norm());
        assert!((s.norm - f * f / y).abs() <= 1e-12 * s.norm);
    }

    #[test]
    fn unimodular_form_is_the_transform_sum() {
        let model = MatrixModel::from_parts(
            vec![-0.5, 0.1, 0.7],
            vec![0.3, 0.2, 0.9],
            vec![1.0, 0.5, 0.25],
            vec![false; 3],
            EmbeddingSpec::Identity,
        )
        .unwrap();
        let z = c(0.05, 0.01);
        let u: Vec<Complex64> = [0.3f64, 2.0, -1.1]
            .iter()
            .map(|t| Complex64::from_polar(1.0, *t))
            .collect();
        let form = sandwiched_resolvent(&model, z).unwrap().t.form(&u).unwrap();
        let direct = model.transform_form(z).unwrap();
        assert!((form - direct).norm() < 1e-14 * direct.norm());
        assert!(sandwiched_resolvent(&model, z)
            .unwrap()
            .t
            .form(&u[..2])
            .is_err());
    }

    #[test]
    fn operator_norm_examples() {
        let id = DMatrix::<Complex64>::identity(2, 2);
        assert!((operator_norm(&id) - 1.0).abs() < 1e-15);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![c(3.0, 0.0), c(-4.0, 0.0)]));
        assert!((operator_norm(&d) - 4.0).abs() < 1e-14);
        // ‖uv*‖ = ‖u‖‖v‖ with ‖u‖ = 2, ‖v‖ = 3
        let u = DVector::from_vec(vec![c(0.0, 2.0), c(0.0, 0.0)]);
        let v = DVector::from_vec(vec![c(1.8, 0.0), c(0.0, 2.4)]);
        let uv = &u * v.adjoint();
        assert!((operator_norm(&uv) - 6.0).abs() < 1e-13);
    }

    #[test]
    fn eigen_contribution_examples() {
        let model = MatrixModel::from_parts(
            vec![0.0],
            vec![1.0],
            vec![0.5],
            vec![true],
            EmbeddingSpec::Identity,
        )
        .unwrap();
        let (e, norm) = eigen_contribution(&model, 0.0).unwrap();
        assert_eq!(e, SandwichMatrix::Diagonal(vec![c(0.25, 0.0)]));
        assert_eq!(norm, 0.25);

        let dead = MatrixModel::from_parts(
            vec![0.0],
            vec![1.0],
            vec![0.0],
            vec![true],
            EmbeddingSpec::Identity,
        )
        .unwrap();
        assert_eq!(eigen_contribution(&dead, 0.0).unwrap().1, 0.0);

        let (wa, wb) = (0.6, 1.3);
        let double = MatrixModel::from_parts(
            vec![-0.5, 0.2, 0.2, 0.9],
            vec![0.1, 1.0, 1.0, 0.1],
            vec![1.0, wa, wb, 1.0],
            vec![false, true, true, false],
            EmbeddingSpec::Identity,
        )
        .unwrap();
        let (e, norm) = eigen_contribution(&double, 0.2).unwrap();
        assert_eq!(
            e,
            SandwichMatrix::Diagonal(vec![
                c(0.0, 0.0),
                c(wa * wa, 0.0),
                c(wb * wb, 0.0),
                c(0.0, 0.0)
            ])
        );
        assert_eq!(norm, wb * wb);
        assert!(matches!(
            eigen_contribution(&double, 0.9),
            Err(Error::NoAtomAtLambda { .. })
        ));
    }

    #[test]
    fn regularized_examples() {
        let only = MatrixModel::from_parts(
            vec![0.0],
            vec![1.0],
            vec![1.0],
            vec![true],
            EmbeddingSpec::Identity,
        )
        .unwrap();
        assert_eq!(
            regularized_resolvent(&only, c(0.0, 0.1), 0.0).unwrap().norm,
            0.0
        );

        let (f0, f1, y) = (0.8, 1.1, 0.01);
        let two = MatrixModel::from_parts(
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![f0, f1],
            vec![true, true],
            EmbeddingSpec::Identity,
        )
        .unwrap();
        let r = regularized_resolvent(&two, c(0.0, y), 0.0).unwrap();
        assert_eq!(r.t.entry(0, 0), c(0.0, 0.0));
        assert!((r.t.entry(1, 1) - f1 * f1 / c(1.0, -y)).norm() < 1e-15);

        let plain = MatrixModel::from_parts(
            vec![-0.3, 0.4],
            vec![1.0, 2.0],
            vec![1.0, 0.5],
            vec![false, false],
            EmbeddingSpec::Isometry { dim: 1, seed: 9 },
        )
        .unwrap();
        let z = c(0.1, 0.05);
        assert_eq!(
            regularized_resolvent(&plain, z, 0.1).unwrap(),
            sandwiched_resolvent(&plain, z).unwrap()
        );
    }

    #[test]
    fn on_axis_rules() {
        let model = MatrixModel::from_parts(
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![true, false],
            EmbeddingSpec::Identity,
        )
        .unwrap();
        assert!(matches!(
            sandwiched_resolvent(&model, c(1.0, 0.0)),
            Err(Error::NonrealRequired { .. })
        ));
        assert!(sandwiched_resolvent(&model, c(0.5, 0.0)).unwrap().on_axis);
        // the excluded atom no longer blocks the real axis
        assert!(
            regularized_resolvent(&model, c(0.0, 0.0), 0.0)
                .unwrap()
                .on_axis
        );
    }

    #[test]
    fn isometry_rows_are_orthonormal() {
        let j = seeded_isometry(5, 40, 17);
        let g = &j * j.transpose();
        assert!((g - DMatrix::<f64>::identity(5, 5)).amax() < 1e-14);
        assert_eq!(j, seeded_isometry(5, 40, 17));
    }

    #[test]
    fn model_json_round_trip() {
        let m = SpectralMeasure::new(
            vec![DensityFamily::power_bump(1.0, 0.5, 0.0, 0.1, -1.0, 1.0)],
            vec![Atom {
                location: 0.25,
                mass: 0.5,
            }],
        )
        .unwrap();
        let w = WeightFunction::CosineBump {
            center: 0.0,
            half_width: 1.2,
        };
        let model = discretize(&m, &w, 50, EmbeddingDim::Dim(4), 11).unwrap();
        let back = MatrixModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn rejects_bad_parts() {
        let e = MatrixModel::from_parts(
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![false, true],
            EmbeddingSpec::Identity,
        );
        assert!(e.is_err());
        assert!(MatrixModel::from_parts(
            vec![0.0],
            vec![0.0],
            vec![1.0],
            vec![false],
            EmbeddingSpec::Identity
        )
        .is_err());
    }

    fn arb_model() -> impl Strategy<Value = (MatrixModel, f64)> {
        (
            proptest::collection::vec((0.05f64..1.0, 0.01f64..1.0, 0.0f64..2.0), 3..24),
            0.01f64..2.0,
            0usize..4,
            any::<u64>(),
        )
            .prop_map(|(cells, atom_mass, dim, seed)| {
                let mut x = -1.0;
                let mut nodes = Vec::new();
                let mut masses = Vec::new();
                let mut weights = Vec::new();
                let mut flags = Vec::new();
                let mid = cells.len() / 2;
                for (k, (gap, mass, w)) in cells.into_iter().enumerate() {
                    x += gap;
                    nodes.push(x);
                    masses.push(if k == mid { atom_mass } else { mass });
                    weights.push(if k == mid { w + 0.1 } else { w });
                    flags.push(k == mid);
                }
                let lambda = nodes[mid];
                let n = nodes.len();
                let embedding = if dim == 0 {
                    EmbeddingSpec::Identity
                } else {
                    EmbeddingSpec::Isometry {
                        dim: dim.min(n),
                        seed,
                    }
                };
                (
                    MatrixModel::from_parts(nodes, masses, weights, flags, embedding).unwrap(),
                    lambda,
                )
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn decomposition_and_divergence_bound((model, lambda) in arb_model(), ly in -8.0f64..0.0) {
            let y = 10f64.powf(ly);
            let z = c(lambda, y);
            let full = sandwiched_resolvent(&model, z).unwrap();
            let reg = regularized_resolvent(&model, z, lambda).unwrap();
            let (e, fp2) = eigen_contribution(&model, lambda).unwrap();
            let rebuilt = reg.t.add(&e.scale(1.0 / (lambda - z)));
            let gap = full.t.sub(&rebuilt).max_abs_entry();
            prop_assert!(gap <= 1e-12 * full.t.max_abs_entry());
            prop_assert!(full.norm >= fp2 / y * (1.0 - 1e-12));
        }

        #[test]
        fn conjugate_symmetry((model, lambda) in arb_model(), dx in -1.0f64..1.0, ly in -6.0f64..0.0) {
            let z = c(lambda + dx, 10f64.powf(ly));
            let up = sandwiched_resolvent(&model, z).unwrap();
            let down = sandwiched_resolvent(&model, z.conj()).unwrap();
            let gap = down.t.sub(&up.t.conj_transpose()).max_abs_entry();
            prop_assert!(gap <= 1e-14 * up.t.max_abs_entry());
        }

        #[test]
        fn herglotz_quadratic_form((model, _lambda) in arb_model(), x in -1.0f64..3.0, ly in -4.0f64..1.0, seed in any::<u64>()) {
            let z = c(x, 10f64.powf(ly));
            let t = sandwiched_resolvent(&model, z).unwrap().t.to_dense();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = DVector::<Complex64>::from_fn(t.nrows(), |_, _| {
                c(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
            });
            let form = u.dotc(&(&t * &u));
            prop_assert!(form.im >= 0.0);
        }

        #[test]
        fn far_zone_bound((model, lambda) in arb_model(), eps in 0.01f64..0.5, ly in -6.0f64..0.0) {
            let far: Vec<usize> = (0..model.len())
                .filter(|&i| (model.nodes()[i] - lambda).abs() >= eps)
                .collect();
            prop_assume!(far.len() >= 2);
            let sub = MatrixModel::from_parts(
                far.iter().map(|&i| model.nodes()[i]).collect(),
                far.iter().map(|&i| model.masses()[i]).collect(),
                far.iter().map(|&i| model.weights()[i]).collect(),
                far.iter().map(|&i| model.atom_flags()[i]).collect(),
                EmbeddingSpec::Isometry { dim: 2, seed: 5 },
            ).unwrap();
            let t = sandwiched_resolvent(&sub, c(lambda, 10f64.powf(ly))).unwrap();
            prop_assert!(t.norm <= sub.gram_norm() / eps * (1.0 + 1e-12));
        }
    }
}
