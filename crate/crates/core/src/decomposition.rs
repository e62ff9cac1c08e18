//! Restriction/prolongation families realizing an additive decomposition of
//! the solution, `u = Σ R_i* v_i`.
//!
//! Prolongation is always the exact transpose of restriction and is never
//! stored. Local indices inside each component space follow ascending
//! global index.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linops::{self, mm, Matrix, Vector, ORACLE_CAP, PSD_TOL, SOLVER_TOL};

/// A single restriction map `R_i : U -> V_i`.
#[derive(Clone, Debug, PartialEq)]
pub enum Restriction {
    /// Rows of the identity: local index `k` reads global index `indices[k]`.
    Select(Vec<usize>),
    /// Arbitrary dense map with shape `dim(V_i) x n`.
    Dense(Matrix),
}

impl Restriction {
    pub fn local_dim(&self) -> usize {
        match self {
            Restriction::Select(idx) => idx.len(),
            Restriction::Dense(m) => m.nrows(),
        }
    }

    /// `R u`.
    pub fn restrict(&self, u: &Vector) -> Vector {
        match self {
            Restriction::Select(idx) => Vector::from_iterator(idx.len(), idx.iter().map(|&k| u[k])),
            Restriction::Dense(m) => m * u,
        }
    }

    /// `out += R* v`.
    pub fn prolong_add(&self, v: &[f64], out: &mut Vector) {
        match self {
            Restriction::Select(idx) => {
                for (&k, &x) in idx.iter().zip(v) {
                    out[k] += x;
                }
            }
            Restriction::Dense(m) => {
                let v = nalgebra::DVectorView::from_slice(v, v.len());
                out.gemv_tr(1.0, m, &v, 1.0);
            }
        }
    }

    pub fn to_dense(&self, n: usize) -> Matrix {
        match self {
            Restriction::Select(idx) => {
                let mut m = Matrix::zeros(idx.len(), n);
                for (r, &k) in idx.iter().enumerate() {
                    m[(r, k)] = 1.0;
                }
                m
            }
            Restriction::Dense(m) => m.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    DirectSum,
    Overlapping,
    Custom,
}

/// A family of `p` restriction maps on a global space of dimension `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionFamily {
    n: usize,
    restrictions: Vec<Restriction>,
    kind: FamilyKind,
    pou_weights: Option<Vec<Vector>>,
}

/// A block vector `{v_1, ..., v_p}` stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockVector {
    data: Vector,
    offsets: Vec<usize>,
}

impl BlockVector {
    pub fn zeros(dims: &[usize]) -> Self {
        let offsets = offsets_of(dims);
        Self {
            data: Vector::zeros(*offsets.last().unwrap()),
            offsets,
        }
    }

    pub fn from_parts(parts: &[Vector]) -> Self {
        let dims: Vec<usize> = parts.iter().map(|p| p.len()).collect();
        let mut out = Self::zeros(&dims);
        for (i, p) in parts.iter().enumerate() {
            out.part_mut(i).copy_from_slice(p.as_slice());
        }
        out
    }

    /// Splits a flat vector according to `dims`.
    pub fn from_flat(data: Vector, dims: &[usize]) -> Result<Self> {
        let offsets = offsets_of(dims);
        check_dim(*offsets.last().unwrap(), data.len())?;
        Ok(Self { data, offsets })
    }

    pub fn num_parts(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn dims(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn part(&self, i: usize) -> &[f64] {
        &self.data.as_slice()[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn part_mut(&mut self, i: usize) -> &mut [f64] {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        &mut self.data.as_mut_slice()[a..b]
    }

    pub fn part_vector(&self, i: usize) -> Vector {
        Vector::from_column_slice(self.part(i))
    }

    pub fn flat(&self) -> &Vector {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut Vector {
        &mut self.data
    }

    pub fn into_flat(self) -> Vector {
        self.data
    }

    /// Same layout, new data.
    pub fn with_data(&self, data: Vector) -> Result<Self> {
        check_dim(self.data.len(), data.len())?;
        Ok(Self {
            data,
            offsets: self.offsets.clone(),
        })
    }

    pub fn dot(&self, other: &BlockVector) -> Result<f64> {
        check_dim(self.data.len(), other.data.len())?;
        Ok(self.data.dot(&other.data))
    }

    pub fn norm(&self) -> f64 {
        self.data.norm()
    }
}

pub(crate) fn offsets_of(dims: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(dims.len() + 1);
    offsets.push(0);
    let mut acc = 0;
    for d in dims {
        acc += d;
        offsets.push(acc);
    }
    offsets
}

/// Outcome of [`validate_family`], with numerical witnesses.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub complete: bool,
    pub each_gram_pd: bool,
    pub direct_sum: bool,
    /// Smallest eigenvalue of `Σ R_i* R_i`.
    pub min_eig_stacked_gram: f64,
    /// Smallest eigenvalue over all `R_i R_i*`.
    pub min_eig_component_gram: f64,
    /// Largest entrywise deviation of `R_i R_j*` from `δ_ij I`.
    pub max_direct_sum_deviation: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.complete && self.each_gram_pd
    }
}

fn sorted_unique(set: &[usize], n: usize, what: &str) -> Result<Vec<usize>> {
    if set.is_empty() {
        return Err(Error::InvalidPartition(format!("empty {what}")));
    }
    let mut s = set.to_vec();
    s.sort_unstable();
    for w in s.windows(2) {
        if w[0] == w[1] {
            return Err(Error::InvalidPartition(format!(
                "index {} repeated within a {what}",
                w[0]
            )));
        }
    }
    if let Some(&last) = s.last() {
        if last >= n {
            return Err(Error::InvalidPartition(format!(
                "index {last} out of range for n = {n}"
            )));
        }
    }
    Ok(s)
}

/// Direct-sum family: `R_i` selects the identity rows listed in set `i`.
pub fn direct_sum_family(n: usize, partition: &[Vec<usize>]) -> Result<DecompositionFamily> {
    if n == 0 || partition.is_empty() {
        return Err(Error::InvalidPartition("empty partition".into()));
    }
    let mut owner = vec![usize::MAX; n];
    let mut restrictions = Vec::with_capacity(partition.len());
    for (i, set) in partition.iter().enumerate() {
        let s = sorted_unique(set, n, "partition set")?;
        for &k in &s {
            if owner[k] != usize::MAX {
                return Err(Error::InvalidPartition(format!(
                    "index {k} appears in sets {} and {i}",
                    owner[k]
                )));
            }
            owner[k] = i;
        }
        restrictions.push(Restriction::Select(s));
    }
    if let Some(k) = owner.iter().position(|&o| o == usize::MAX) {
        return Err(Error::InvalidPartition(format!("index {k} is not covered")));
    }
    let weights = (0..partition.len())
        .map(|i| Vector::from_iterator(n, owner.iter().map(|&o| if o == i { 1.0 } else { 0.0 })))
        .collect();
    Ok(DecompositionFamily {
        n,
        restrictions,
        kind: FamilyKind::DirectSum,
        pou_weights: Some(weights),
    })
}

/// Overlapping family with plain row-selection restrictions and
/// extension-by-zero prolongations. Default weights are `1 / multiplicity`.
pub fn overlapping_family(
    n: usize,
    subdomains: &[Vec<usize>],
    weights: Option<Vec<Vector>>,
) -> Result<DecompositionFamily> {
    if n == 0 || subdomains.is_empty() {
        return Err(Error::InvalidPartition("empty subdomain list".into()));
    }
    let mut multiplicity = vec![0usize; n];
    let mut restrictions = Vec::with_capacity(subdomains.len());
    for set in subdomains {
        let s = sorted_unique(set, n, "subdomain")?;
        for &k in &s {
            multiplicity[k] += 1;
        }
        restrictions.push(Restriction::Select(s));
    }
    if let Some(k) = multiplicity.iter().position(|&m| m == 0) {
        return Err(Error::InvalidCover(k));
    }
    let weights = match weights {
        Some(w) => {
            check_weights(n, &restrictions, &w)?;
            w
        }
        None => restrictions
            .iter()
            .map(|r| {
                let mut d = Vector::zeros(n);
                if let Restriction::Select(idx) = r {
                    for &k in idx {
                        d[k] = 1.0 / multiplicity[k] as f64;
                    }
                }
                d
            })
            .collect(),
    };
    Ok(DecompositionFamily {
        n,
        restrictions,
        kind: FamilyKind::Overlapping,
        pou_weights: Some(weights),
    })
}

fn check_weights(n: usize, restrictions: &[Restriction], weights: &[Vector]) -> Result<()> {
    if weights.len() != restrictions.len() {
        return Err(Error::InvalidWeights(format!(
            "{} weight vectors for {} components",
            weights.len(),
            restrictions.len()
        )));
    }
    let mut sum = vec![0.0; n];
    for (i, (d, r)) in weights.iter().zip(restrictions).enumerate() {
        if d.len() != n {
            return Err(Error::InvalidWeights(format!(
                "weight vector {i} has length {} (expected {n})",
                d.len()
            )));
        }
        let support: BTreeSet<usize> = match r {
            Restriction::Select(idx) => idx.iter().copied().collect(),
            Restriction::Dense(_) => (0..n).collect(),
        };
        for k in 0..n {
            if d[k] < 0.0 || !d[k].is_finite() {
                return Err(Error::InvalidWeights(format!("d_{i}({k}) = {} is negative", d[k])));
            }
            if d[k] != 0.0 && !support.contains(&k) {
                return Err(Error::InvalidWeights(format!(
                    "d_{i}({k}) is nonzero outside the support of R_{i}"
                )));
            }
            sum[k] += d[k];
        }
    }
    if let Some(k) = sum.iter().position(|s| (s - 1.0).abs() > 1e-12) {
        return Err(Error::InvalidWeights(format!(
            "weights sum to {} at index {k}",
            sum[k]
        )));
    }
    Ok(())
}

/// Family from arbitrary dense restriction matrices. Invariants are checked
/// only by [`validate_family`].
pub fn custom_family(restrictions: Vec<Matrix>) -> Result<DecompositionFamily> {
    let n = restrictions
        .first()
        .map(|r| r.ncols())
        .ok_or_else(|| Error::InvalidPartition("no restrictions".into()))?;
    for r in &restrictions {
        check_dim(n, r.ncols())?;
        if r.nrows() == 0 {
            return Err(Error::InvalidPartition("restriction with no rows".into()));
        }
    }
    Ok(DecompositionFamily {
        n,
        restrictions: restrictions.into_iter().map(Restriction::Dense).collect(),
        kind: FamilyKind::Custom,
        pou_weights: None,
    })
}

/// Checks completeness (9), Gram positivity (22) and direct-sum structure (34).
pub fn validate_family(f: &DecompositionFamily) -> ValidationReport {
    let stacked = f.stacked_gram();
    let min_stacked = min_eig_or_diag(&stacked);
    let scale = stacked.diagonal().iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let min_component = (0..f.p())
        .map(|i| min_eig_or_diag(&f.cross_gram(i, i)))
        .fold(f64::INFINITY, f64::min);
    let mut deviation: f64 = 0.0;
    for i in 0..f.p() {
        for j in 0..f.p() {
            let g = f.cross_gram(i, j);
            for r in 0..g.nrows() {
                for c in 0..g.ncols() {
                    let target = if i == j && r == c { 1.0 } else { 0.0 };
                    deviation = deviation.max((g[(r, c)] - target).abs());
                }
            }
        }
    }
    ValidationReport {
        complete: min_stacked > PSD_TOL * scale,
        each_gram_pd: min_component > PSD_TOL,
        direct_sum: deviation == 0.0,
        min_eig_stacked_gram: min_stacked,
        min_eig_component_gram: min_component,
        max_direct_sum_deviation: deviation,
    }
}

fn min_eig_or_diag(m: &Matrix) -> f64 {
    let n = m.nrows();
    let diagonal = (0..n).all(|j| (0..n).all(|i| i == j || m[(i, j)] == 0.0));
    if diagonal {
        return m.diagonal().iter().copied().fold(f64::INFINITY, f64::min);
    }
    match linops::symmetric_eigenvalues(m, ORACLE_CAP) {
        Ok(v) => v[0],
        Err(_) => f64::NAN,
    }
}

/// Picks one particular solution of `Σ_j R_i R_j* v_j = R_i u`.
pub fn decompose(f: &DecompositionFamily, u: &Vector) -> Result<BlockVector> {
    check_dim(f.n, u.len())?;
    if f.kind == FamilyKind::DirectSum {
        let parts: Vec<Vector> = f.restrictions.iter().map(|r| r.restrict(u)).collect();
        return Ok(BlockVector::from_parts(&parts));
    }
    if let Some(weights) = &f.pou_weights {
        let parts: Vec<Vector> = f
            .restrictions
            .iter()
            .zip(weights)
            .map(|(r, d)| r.restrict(&u.component_mul(d)))
            .collect();
        return Ok(BlockVector::from_parts(&parts));
    }
    if !validate_family(f).complete {
        return Err(Error::DecompositionImpossible);
    }
    // Minimum-norm solution of C v = {R_i u}.
    let c = crate::assembly::assemble_mass(f).to_dense();
    let rhs = f.restrict_all(u);
    let max_iter = 20 * rhs.flat().len() + 100;
    let v = linops::conjugate_gradient(&c, rhs.flat(), SOLVER_TOL, max_iter)?;
    rhs.with_data(v)
}

/// `Σ_i R_i* v_i`.
pub fn reconstruct(f: &DecompositionFamily, v: &BlockVector) -> Result<Vector> {
    check_dim(f.p(), v.num_parts())?;
    for (i, r) in f.restrictions.iter().enumerate() {
        check_dim(r.local_dim(), v.part(i).len())?;
    }
    let mut u = Vector::zeros(f.n);
    for (i, r) in f.restrictions.iter().enumerate() {
        r.prolong_add(v.part(i), &mut u);
    }
    Ok(u)
}

impl DecompositionFamily {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.restrictions.len()
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn restrictions(&self) -> &[Restriction] {
        &self.restrictions
    }

    pub fn pou_weights(&self) -> Option<&[Vector]> {
        self.pou_weights.as_deref()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.restrictions.iter().map(Restriction::local_dim).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.dims().iter().sum()
    }

    /// `{R_i u}`, the block right-hand side of the vector system.
    pub fn restrict_all(&self, u: &Vector) -> BlockVector {
        let parts: Vec<Vector> = self.restrictions.iter().map(|r| r.restrict(u)).collect();
        BlockVector::from_parts(&parts)
    }

    /// `R_i R_j*` as a dense `dim(V_i) x dim(V_j)` matrix.
    pub fn cross_gram(&self, i: usize, j: usize) -> Matrix {
        match (&self.restrictions[i], &self.restrictions[j]) {
            (Restriction::Select(a), Restriction::Select(b)) => {
                let mut g = Matrix::zeros(a.len(), b.len());
                let (mut x, mut y) = (0, 0);
                while x < a.len() && y < b.len() {
                    match a[x].cmp(&b[y]) {
                        std::cmp::Ordering::Less => x += 1,
                        std::cmp::Ordering::Greater => y += 1,
                        std::cmp::Ordering::Equal => {
                            g[(x, y)] = 1.0;
                            x += 1;
                            y += 1;
                        }
                    }
                }
                g
            }
            (ri, rj) => ri.to_dense(self.n) * rj.to_dense(self.n).transpose(),
        }
    }

    /// `Σ_i R_i* R_i` (n x n).
    pub fn stacked_gram(&self) -> Matrix {
        let mut g = Matrix::zeros(self.n, self.n);
        for r in &self.restrictions {
            match r {
                Restriction::Select(idx) => {
                    for &k in idx {
                        g[(k, k)] += 1.0;
                    }
                }
                Restriction::Dense(m) => g += m.transpose() * m,
            }
        }
        g
    }

    /// The stacked restriction `[R_1; ...; R_p]` (total_dim x n).
    pub fn stacked_restriction(&self) -> Matrix {
        let mut out = Matrix::zeros(self.total_dim(), self.n);
        let mut row = 0;
        for r in &self.restrictions {
            let d = r.to_dense(self.n);
            out.rows_mut(row, d.nrows()).copy_from(&d);
            row += d.nrows();
        }
        out
    }

    pub fn to_manifest(&self) -> FamilyManifest {
        let index_sets = match self.kind {
            FamilyKind::Custom => None,
            _ => Some(
                self.restrictions
                    .iter()
                    .map(|r| match r {
                        Restriction::Select(idx) => idx.clone(),
                        Restriction::Dense(_) => Vec::new(),
                    })
                    .collect(),
            ),
        };
        let weights = match self.kind {
            FamilyKind::Overlapping => self
                .pou_weights
                .as_ref()
                .map(|w| w.iter().map(|d| d.as_slice().to_vec()).collect()),
            _ => None,
        };
        FamilyManifest {
            n: self.n,
            p: self.p(),
            kind: self.kind,
            index_sets,
            weights,
            restrictions: None,
        }
    }

    /// Writes a JSON manifest; custom restrictions go to sibling Matrix Market
    /// files named `<stem>_R<i>.mtx`.
    pub fn save_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut manifest = self.to_manifest();
        if self.kind == FamilyKind::Custom {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "family".into());
            let dir = path.parent().unwrap_or_else(|| Path::new("."));
            let mut names = Vec::new();
            for (i, r) in self.restrictions.iter().enumerate() {
                let name = format!("{stem}_R{i}.mtx");
                mm::write_matrix_file(
                    dir.join(&name),
                    &r.to_dense(self.n),
                    mm::Layout::Coordinate,
                    mm::Symmetry::General,
                )?;
                names.push(name);
            }
            manifest.restrictions = Some(names);
        }
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::parse(path.display().to_string(), e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: FamilyManifest = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e))?;
        manifest.build(path.parent().unwrap_or_else(|| Path::new(".")))
    }
}

/// On-disk description of a family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyManifest {
    pub n: usize,
    pub p: usize,
    pub kind: FamilyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_sets: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
    /// Matrix Market paths, relative to the manifest's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restrictions: Option<Vec<String>>,
}

impl FamilyManifest {
    pub fn build(&self, base_dir: &Path) -> Result<DecompositionFamily> {
        let family = match self.kind {
            FamilyKind::DirectSum => {
                let sets = self
                    .index_sets
                    .as_ref()
                    .ok_or_else(|| Error::Config("direct_sum manifest needs index_sets".into()))?;
                direct_sum_family(self.n, sets)?
            }
            FamilyKind::Overlapping => {
                let sets = self
                    .index_sets
                    .as_ref()
                    .ok_or_else(|| Error::Config("overlapping manifest needs index_sets".into()))?;
                let weights = self
                    .weights
                    .as_ref()
                    .map(|w| w.iter().map(|d| Vector::from_column_slice(d)).collect());
                overlapping_family(self.n, sets, weights)?
            }
            FamilyKind::Custom => {
                let files = self
                    .restrictions
                    .as_ref()
                    .ok_or_else(|| Error::Config("custom manifest needs restrictions".into()))?;
                let mats = files
                    .iter()
                    .map(|f| {
                        let p: PathBuf = base_dir.join(f);
                        mm::read_matrix_file(p)
                    })
                    .collect::<Result<Vec<_>>>()?;
                custom_family(mats)?
            }
        };
        if family.n != self.n {
            return Err(Error::Config(format!(
                "manifest declares n = {} but restrictions have {} columns",
                self.n, family.n
            )));
        }
        if family.p() != self.p {
            return Err(Error::Config(format!(
                "manifest declares p = {} but lists {} components",
                self.p,
                family.p()
            )));
        }
        Ok(family)
    }
}

/// `p` contiguous, nearly equal strips of `0..n`.
pub fn strip_sets(n: usize, p: usize) -> Vec<Vec<usize>> {
    let base = n / p;
    let extra = n % p;
    let mut start = 0;
    (0..p)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let set: Vec<usize> = (start..start + len).collect();
            start += len;
            set
        })
        .collect()
}

/// Strips extended by `overlap` indices on each interior side.
pub fn overlapping_strip_sets(n: usize, p: usize, overlap: usize) -> Vec<Vec<usize>> {
    strip_sets(n, p)
        .into_iter()
        .map(|s| {
            let lo = s[0].saturating_sub(overlap);
            let hi = (s[s.len() - 1] + overlap).min(n - 1);
            (lo..=hi).collect()
        })
        .collect()
}

/// Index classes modulo `p` (a multicolor partition).
pub fn interleaved_sets(n: usize, p: usize) -> Vec<Vec<usize>> {
    (0..p).map(|c| (c..n).step_by(p).collect()).collect()
}
