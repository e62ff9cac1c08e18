//! Block operators of the coupled system `C dv/dt + B v = f`:
//! `C = {R_i R_j*}`, `B = {R_i A R_j*}`, their block diagonals and the
//! triangular split `B = B1 + B2`.

use std::path::Path;

use nalgebra::Dyn;
use nalgebra_sparse::ops::serial::spmm_csr_dense;
use nalgebra_sparse::ops::Op;
use nalgebra_sparse::CsrMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::{offsets_of, BlockVector, DecompositionFamily, Restriction};
use crate::error::{check_dim, Error, Result};
use crate::linops::{self, mm, Cholesky, Matrix, SymmetricOperator, Vector, ORACLE_CAP};

/// A `p x p` grid of dense rectangular blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockOperator {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    /// Row-major: block `(i, j)` at `i * p + j`.
    blocks: Vec<Matrix>,
    nonzero: Vec<bool>,
    /// Compressed copies of sparse blocks, used for products.
    sparse: Vec<Option<CsrMatrix<f64>>>,
    symmetric: bool,
}

/// Blocks with at most this fraction of nonzeros are applied in CSR form.
const SPARSE_FILL: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub p: usize,
    pub dims: Vec<usize>,
    pub offsets: Vec<usize>,
    pub symmetric: bool,
}

impl BlockOperator {
    /// Checks block shapes and, when `symmetric` is set, that block `(j, i)`
    /// is exactly the transpose of block `(i, j)`.
    pub fn from_blocks(dims: Vec<usize>, blocks: Vec<Matrix>, symmetric: bool) -> Result<Self> {
        let p = dims.len();
        check_dim(p * p, blocks.len())?;
        for i in 0..p {
            for j in 0..p {
                let b = &blocks[i * p + j];
                check_dim(dims[i], b.nrows())?;
                check_dim(dims[j], b.ncols())?;
            }
        }
        if symmetric {
            let offsets = offsets_of(&dims);
            for i in 0..p {
                for j in i..p {
                    let (bij, bji) = (&blocks[i * p + j], &blocks[j * p + i]);
                    for r in 0..dims[i] {
                        for c in 0..dims[j] {
                            if bij[(r, c)] != bji[(c, r)] {
                                return Err(Error::NotSymmetric {
                                    row: offsets[i] + r,
                                    col: offsets[j] + c,
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(Self::from_blocks_unchecked(dims, blocks, symmetric))
    }

    fn from_blocks_unchecked(dims: Vec<usize>, blocks: Vec<Matrix>, symmetric: bool) -> Self {
        let nnz: Vec<usize> = blocks.iter().map(|b| b.iter().filter(|&&v| v != 0.0).count()).collect();
        let sparse = blocks
            .iter()
            .zip(&nnz)
            .map(|(b, &k)| {
                let size = b.nrows() * b.ncols();
                (k > 0 && size >= 64 && (k as f64) <= SPARSE_FILL * size as f64).then(|| CsrMatrix::from(b))
            })
            .collect();
        Self {
            offsets: offsets_of(&dims),
            dims,
            blocks,
            nonzero: nnz.iter().map(|&k| k > 0).collect(),
            sparse,
            symmetric,
        }
    }

    /// Symmetric operator from the upper block triangle `(i, j), i <= j`;
    /// lower blocks are exact transposes.
    fn from_upper(dims: Vec<usize>, upper: Vec<((usize, usize), Matrix)>) -> Self {
        let p = dims.len();
        let mut blocks: Vec<Matrix> = (0..p * p)
            .map(|k| Matrix::zeros(dims[k / p], dims[k % p]))
            .collect();
        for ((i, j), m) in upper {
            if i != j {
                blocks[j * p + i] = m.transpose();
            }
            blocks[i * p + j] = m;
        }
        Self::from_blocks_unchecked(dims, blocks, true)
    }

    pub fn p(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn total_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn block(&self, i: usize, j: usize) -> &Matrix {
        &self.blocks[i * self.p() + j]
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn block_is_zero(&self, i: usize, j: usize) -> bool {
        !self.nonzero[i * self.p() + j]
    }

    pub fn apply(&self, v: &BlockVector) -> Result<BlockVector> {
        check_dim(self.p(), v.num_parts())?;
        check_dim(self.total_dim(), v.flat().len())?;
        v.with_data(self.apply_flat(v.flat()))
    }

    /// Block matrix-vector product on the flat layout, skipping zero blocks.
    pub fn apply_flat(&self, x: &Vector) -> Vector {
        let mut y = Vector::zeros(self.total_dim());
        self.apply_flat_into(x, 1.0, &mut y);
        y
    }

    /// `y += alpha * self * x`.
    pub fn apply_flat_into(&self, x: &Vector, alpha: f64, y: &mut Vector) {
        let p = self.p();
        for i in 0..p {
            let ri = self.offsets[i];
            for j in 0..p {
                if !self.nonzero[i * p + j] {
                    continue;
                }
                self.block_gemv(i * p + j, alpha, x, self.offsets[j], y, ri);
            }
        }
    }

    /// `y[y_off..] += alpha * block_k * x[x_off..]`.
    fn block_gemv(&self, k: usize, alpha: f64, x: &Vector, x_off: usize, y: &mut Vector, y_off: usize) {
        let block = &self.blocks[k];
        let (rows, cols) = (Dyn(block.nrows()), Dyn(block.ncols()));
        let xj = x.generic_view((x_off, 0), (cols, Dyn(1)));
        let mut yi = y.generic_view_mut((y_off, 0), (rows, Dyn(1)));
        match &self.sparse[k] {
            Some(csr) => spmm_csr_dense(1.0, yi, alpha, Op::NoOp(csr), Op::NoOp(xj)),
            None => yi.gemm(alpha, block, &xj, 1.0),
        }
    }

    /// `y_i += alpha * Σ_{j in cols} X_ij x_j` for one block row.
    pub(crate) fn row_apply_into(
        &self,
        i: usize,
        cols: impl Iterator<Item = usize>,
        x: &Vector,
        alpha: f64,
        yi: &mut Vector,
    ) {
        let p = self.p();
        for j in cols {
            if !self.nonzero[i * p + j] {
                continue;
            }
            self.block_gemv(i * p + j, alpha, x, self.offsets[j], yi, 0);
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.total_dim();
        let p = self.p();
        let mut m = Matrix::zeros(n, n);
        for i in 0..p {
            for j in 0..p {
                m.view_mut((self.offsets[i], self.offsets[j]), (self.dims[i], self.dims[j]))
                    .copy_from(&self.blocks[i * p + j]);
            }
        }
        m
    }

    pub fn to_symmetric_operator(&self) -> Result<SymmetricOperator> {
        SymmetricOperator::new(self.to_dense())
    }

    pub fn transpose(&self) -> BlockOperator {
        let p = self.p();
        let blocks = (0..p * p)
            .map(|k| self.blocks[(k % p) * p + k / p].transpose())
            .collect();
        Self::from_blocks_unchecked(self.dims.clone(), blocks, self.symmetric)
    }

    /// Block identity on the given component dimensions.
    pub fn identity(dims: &[usize]) -> BlockOperator {
        let p = dims.len();
        let blocks = (0..p * p)
            .map(|k| {
                let (i, j) = (k / p, k % p);
                if i == j {
                    Matrix::identity(dims[i], dims[i])
                } else {
                    Matrix::zeros(dims[i], dims[j])
                }
            })
            .collect();
        Self::from_blocks_unchecked(dims.to_vec(), blocks, true)
    }

    pub fn scaled(&self, alpha: f64) -> BlockOperator {
        let blocks = self.blocks.iter().map(|b| b * alpha).collect();
        Self::from_blocks_unchecked(self.dims.clone(), blocks, self.symmetric)
    }

    /// `self + alpha * other`, block by block.
    pub fn add_scaled(&self, alpha: f64, other: &BlockOperator) -> Result<BlockOperator> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch {
                expected: self.total_dim(),
                found: other.total_dim(),
            });
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a + b * alpha)
            .collect();
        Ok(Self::from_blocks_unchecked(
            self.dims.clone(),
            blocks,
            self.symmetric && other.symmetric,
        ))
    }

    pub fn layout(&self) -> BlockLayout {
        BlockLayout {
            p: self.p(),
            dims: self.dims.clone(),
            offsets: self.offsets.clone(),
            symmetric: self.symmetric,
        }
    }

    /// Flattened matrix as Matrix Market plus a JSON sidecar with block boundaries.
    pub fn export(&self, matrix_path: impl AsRef<Path>, layout_path: impl AsRef<Path>) -> Result<()> {
        let sym = if self.symmetric {
            mm::Symmetry::Symmetric
        } else {
            mm::Symmetry::General
        };
        mm::write_matrix_file(matrix_path, &self.to_dense(), mm::Layout::Coordinate, sym)?;
        let layout_path = layout_path.as_ref();
        let text = serde_json::to_string_pretty(&self.layout())
            .map_err(|e| Error::parse(layout_path.display().to_string(), e))?;
        std::fs::write(layout_path, text).map_err(|e| Error::io(layout_path, e))
    }

    pub fn import(matrix_path: impl AsRef<Path>, layout_path: impl AsRef<Path>) -> Result<Self> {
        let m = mm::read_matrix_file(matrix_path)?;
        let layout_path = layout_path.as_ref();
        let text = std::fs::read_to_string(layout_path).map_err(|e| Error::io(layout_path, e))?;
        let layout: BlockLayout = serde_json::from_str(&text)
            .map_err(|e| Error::parse(layout_path.display().to_string(), e))?;
        let offsets = offsets_of(&layout.dims);
        check_dim(*offsets.last().unwrap(), m.nrows())?;
        let p = layout.dims.len();
        let blocks = (0..p * p)
            .map(|k| {
                let (i, j) = (k / p, k % p);
                m.view((offsets[i], offsets[j]), (layout.dims[i], layout.dims[j]))
                    .into_owned()
            })
            .collect();
        Self::from_blocks(layout.dims, blocks, layout.symmetric)
    }
}

fn upper_pairs(p: usize) -> Vec<(usize, usize)> {
    (0..p).flat_map(|i| (i..p).map(move |j| (i, j))).collect()
}

/// `C = {R_i R_j*}`.
pub fn assemble_mass(f: &DecompositionFamily) -> BlockOperator {
    let upper = upper_pairs(f.p())
        .into_par_iter()
        .map(|(i, j)| ((i, j), f.cross_gram(i, j)))
        .collect();
    BlockOperator::from_upper(f.dims(), upper)
}

/// `B = {R_i A R_j*}`.
pub fn assemble_stiffness(f: &DecompositionFamily, a: &SymmetricOperator) -> Result<BlockOperator> {
    check_dim(f.n(), a.dim())?;
    let am = a.matrix();
    let rs = f.restrictions();
    let upper = upper_pairs(f.p())
        .into_par_iter()
        .map(|(i, j)| {
            let block = match (&rs[i], &rs[j]) {
                (Restriction::Select(si), Restriction::Select(sj)) => {
                    Matrix::from_fn(si.len(), sj.len(), |r, c| am[(si[r], sj[c])])
                }
                (ri, rj) => ri.to_dense(f.n()) * am * rj.to_dense(f.n()).transpose(),
            };
            ((i, j), block)
        })
        .collect();
    Ok(BlockOperator::from_upper(f.dims(), upper))
}

/// Keeps the diagonal blocks and zeros the rest.
pub fn diagonal_part(x: &BlockOperator) -> BlockOperator {
    let p = x.p();
    let blocks = (0..p * p)
        .map(|k| {
            let (i, j) = (k / p, k % p);
            if i == j {
                x.blocks[k].clone()
            } else {
                Matrix::zeros(x.dims[i], x.dims[j])
            }
        })
        .collect();
    BlockOperator::from_blocks_unchecked(x.dims.clone(), blocks, x.symmetric)
}

/// `B1` = strictly lower blocks plus half the diagonal, `B2 = B1*`.
pub fn triangular_split(b: &BlockOperator) -> Result<(BlockOperator, BlockOperator)> {
    if !b.symmetric {
        return Err(Error::NotSymmetric { row: 0, col: 0 });
    }
    let p = b.p();
    let lower = (0..p * p)
        .map(|k| {
            let (i, j) = (k / p, k % p);
            match i.cmp(&j) {
                std::cmp::Ordering::Greater => b.blocks[k].clone(),
                std::cmp::Ordering::Equal => &b.blocks[k] * 0.5,
                std::cmp::Ordering::Less => Matrix::zeros(b.dims[i], b.dims[j]),
            }
        })
        .collect();
    let b1 = BlockOperator::from_blocks_unchecked(b.dims.clone(), lower, false);
    let b2 = b1.transpose();
    Ok((b1, b2))
}

/// Largest generalized eigenvalue of `X v = λ X0 v`, computed through the
/// congruence `L⁻¹ X L⁻ᵀ` with `X0 = L Lᵀ`.
/// Logs when the value exceeds the bound `p`.
pub fn check_dominance(x: &BlockOperator, x0: &BlockOperator, p: usize) -> Result<f64> {
    check_dim(x.total_dim(), x0.total_dim())?;
    let n = x.total_dim();
    if n > ORACLE_CAP {
        return Err(Error::OracleCap { dim: n, cap: ORACLE_CAP });
    }
    let chol = nalgebra::Cholesky::new(x0.to_dense()).ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    let mut m = x.to_dense();
    if !l.solve_lower_triangular_mut(&mut m) {
        return Err(Error::NotPositiveDefinite);
    }
    let mut mt = m.transpose();
    if !l.solve_lower_triangular_mut(&mut mt) {
        return Err(Error::NotPositiveDefinite);
    }
    let congruent = SymmetricOperator::symmetrized(&mt)?;
    let value = linops::max_eigenvalue(&congruent)?;
    if value > p as f64 + 1e-9 {
        log::warn!("generalized eigenvalue {value} exceeds the block count {p}");
    }
    Ok(value)
}

/// Per-block Cholesky factors of the diagonal blocks of a block operator.
#[derive(Clone, Debug)]
pub struct BlockDiagonalSolver {
    offsets: Vec<usize>,
    factors: Vec<Cholesky>,
}

impl BlockDiagonalSolver {
    /// Factors each diagonal block of `x`.
    pub fn new(x: &BlockOperator) -> Result<Self> {
        let factors = (0..x.p())
            .into_par_iter()
            .map(|i| Cholesky::factor(x.block(i, i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            offsets: x.offsets.clone(),
            factors,
        })
    }

    pub fn factor(&self, i: usize) -> &Cholesky {
        &self.factors[i]
    }

    /// Solves every block in place, optionally in parallel.
    pub fn solve_in_place(&self, x: &mut Vector, parallel: bool) {
        let slices = split_mut(x.as_mut_slice(), &self.offsets);
        let solve = |(factor, s): (&Cholesky, &mut [f64])| {
            let mut v = Vector::from_column_slice(s);
            factor.solve_in_place(&mut v);
            s.copy_from_slice(v.as_slice());
        };
        if parallel {
            self.factors.par_iter().zip(slices).for_each(solve);
        } else {
            self.factors.iter().zip(slices).for_each(solve);
        }
    }
}

pub(crate) fn split_mut<'a>(data: &'a mut [f64], offsets: &[usize]) -> Vec<&'a mut [f64]> {
    let mut out = Vec::with_capacity(offsets.len() - 1);
    let mut rest = data;
    for w in offsets.windows(2) {
        let (head, tail) = rest.split_at_mut(w[1] - w[0]);
        out.push(head);
        rest = tail;
    }
    out
}
