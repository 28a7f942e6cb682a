//! Dense matrices over F_q, the partitioning schemes used by the share
//! encoders, and the plaintext oracles (product, Gaussian elimination)
//! that ground-truth every protocol test.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Fe, FieldSpec};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixFq {
    field: FieldSpec,
    rows: usize,
    cols: usize,
    data: Vec<Fe>,
}

/// JSON wire form: {"q": ..., "rows": ..., "cols": ..., "data": [row-major]}.
#[derive(Serialize, Deserialize)]
struct MatrixJson {
    q: u64,
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl MatrixFq {
    pub fn new(field: &FieldSpec, rows: usize, cols: usize, entries: Vec<u64>) -> Self {
        assert_eq!(entries.len(), rows * cols);
        let data = entries.into_iter().map(|v| field.elem(v)).collect();
        MatrixFq {
            field: field.clone(),
            rows,
            cols,
            data,
        }
    }

    pub fn zeros(field: &FieldSpec, rows: usize, cols: usize) -> Self {
        MatrixFq {
            field: field.clone(),
            rows,
            cols,
            data: vec![Fe(0); rows * cols],
        }
    }

    pub fn identity(field: &FieldSpec, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.set(i, i, field.one());
        }
        m
    }

    /// i.i.d. uniform entries drawn from the supplied generator.
    pub fn random(field: &FieldSpec, rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| Fe(rng.gen_range(0..field.q())))
            .collect();
        MatrixFq {
            field: field.clone(),
            rows,
            cols,
            data,
        }
    }

    pub fn field(&self) -> &FieldSpec {
        &self.field
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn symbols(&self) -> u64 {
        (self.rows * self.cols) as u64
    }

    pub fn get(&self, r: usize, c: usize) -> Fe {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Fe) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[Fe] {
        &self.data
    }

    fn check_field(&self, other: &Self) -> Result<()> {
        if self.field.q() != other.field.q() {
            return Err(Error::FieldMismatch(self.field.q(), other.field.q()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_field(other)?;
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "add {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| self.field.add(a, b))
            .collect();
        Ok(MatrixFq {
            field: self.field.clone(),
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_field(other)?;
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "sub {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| self.field.sub(a, b))
            .collect();
        Ok(MatrixFq {
            field: self.field.clone(),
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, c: Fe) -> Self {
        let data = self.data.iter().map(|&a| self.field.mul(a, c)).collect();
        MatrixFq {
            field: self.field.clone(),
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(&self.field, self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }
}

/// Exact product over F_q.
pub fn mat_mul(a: &MatrixFq, b: &MatrixFq) -> Result<MatrixFq> {
    if a.field().q() != b.field().q() {
        return Err(Error::FieldMismatch(a.field().q(), b.field().q()));
    }
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch(format!(
            "mul {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let f = a.field();
    let mut out = MatrixFq::zeros(f, a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a.get(i, k);
            if aik.0 == 0 {
                continue;
            }
            for j in 0..b.cols {
                let v = f.add(out.get(i, j), f.mul(aik, b.get(k, j)));
                out.set(i, j, v);
            }
        }
    }
    Ok(out)
}

/// K column blocks of equal width, left-to-right.
pub fn partition_cols(a: &MatrixFq, k: usize) -> Result<Vec<MatrixFq>> {
    if k == 0 || a.cols % k != 0 {
        return Err(Error::IndivisibleDimension { dim: a.cols, by: k });
    }
    let w = a.cols / k;
    let mut out = Vec::with_capacity(k);
    for b in 0..k {
        let mut block = MatrixFq::zeros(a.field(), a.rows, w);
        for r in 0..a.rows {
            for c in 0..w {
                block.set(r, c, a.get(r, b * w + c));
            }
        }
        out.push(block);
    }
    Ok(out)
}

/// K row blocks of equal height, top-to-bottom.
pub fn partition_rows(b: &MatrixFq, k: usize) -> Result<Vec<MatrixFq>> {
    if k == 0 || b.rows % k != 0 {
        return Err(Error::IndivisibleDimension { dim: b.rows, by: k });
    }
    let h = b.rows / k;
    let mut out = Vec::with_capacity(k);
    for blk in 0..k {
        let mut block = MatrixFq::zeros(b.field(), h, b.cols);
        for r in 0..h {
            for c in 0..b.cols {
                block.set(r, c, b.get(blk * h + r, c));
            }
        }
        out.push(block);
    }
    Ok(out)
}

pub fn concat_cols(blocks: &[MatrixFq]) -> Result<MatrixFq> {
    assert!(!blocks.is_empty());
    let rows = blocks[0].rows;
    let total: usize = blocks.iter().map(|b| b.cols).sum();
    let mut out = MatrixFq::zeros(blocks[0].field(), rows, total);
    let mut offset = 0;
    for b in blocks {
        if b.rows != rows {
            return Err(Error::DimensionMismatch("concat_cols row mismatch".into()));
        }
        for r in 0..rows {
            for c in 0..b.cols {
                out.set(r, offset + c, b.get(r, c));
            }
        }
        offset += b.cols;
    }
    Ok(out)
}

pub fn concat_rows(blocks: &[MatrixFq]) -> Result<MatrixFq> {
    assert!(!blocks.is_empty());
    let cols = blocks[0].cols;
    let total: usize = blocks.iter().map(|b| b.rows).sum();
    let mut out = MatrixFq::zeros(blocks[0].field(), total, cols);
    let mut offset = 0;
    for b in blocks {
        if b.cols != cols {
            return Err(Error::DimensionMismatch("concat_rows col mismatch".into()));
        }
        for r in 0..b.rows {
            for c in 0..cols {
                out.set(offset + r, c, b.get(r, c));
            }
        }
        offset += b.rows;
    }
    Ok(out)
}

/// An r x c array of equal-shape tiles.
#[derive(Debug, Clone)]
pub struct BlockGrid {
    pub blocks: Vec<Vec<MatrixFq>>,
}

impl BlockGrid {
    pub fn block(&self, i: usize, j: usize) -> &MatrixFq {
        &self.blocks[i][j]
    }

    pub fn assemble(&self) -> Result<MatrixFq> {
        let rows: Vec<MatrixFq> = self
            .blocks
            .iter()
            .map(|row| concat_cols(row))
            .collect::<Result<_>>()?;
        concat_rows(&rows)
    }
}

pub fn grid_partition(a: &MatrixFq, r: usize, c: usize) -> Result<BlockGrid> {
    let row_blocks = partition_rows(a, r)?;
    let blocks = row_blocks
        .iter()
        .map(|rb| partition_cols(rb, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockGrid { blocks })
}

/// Solves AX = B over F_q by Gaussian elimination on the augmented matrix,
/// pivoting on the first nonzero entry in each column. With B = I this
/// returns the inverse.
pub fn plaintext_solve(a: &MatrixFq, b: &MatrixFq) -> Result<MatrixFq> {
    if a.rows != a.cols {
        return Err(Error::DimensionMismatch("solve needs square A".into()));
    }
    if a.field().q() != b.field().q() {
        return Err(Error::FieldMismatch(a.field().q(), b.field().q()));
    }
    if a.rows != b.rows {
        return Err(Error::DimensionMismatch("solve A/B row mismatch".into()));
    }
    let f = a.field().clone();
    let n = a.rows;
    let w = b.cols;
    // Augmented matrix [A | B].
    let mut aug = MatrixFq::zeros(&f, n, n + w);
    for r in 0..n {
        for c in 0..n {
            aug.set(r, c, a.get(r, c));
        }
        for c in 0..w {
            aug.set(r, n + c, b.get(r, c));
        }
    }
    for col in 0..n {
        let pivot = (col..n).find(|&r| aug.get(r, col).0 != 0);
        let pivot = match pivot {
            Some(p) => p,
            None => return Err(Error::SingularMatrix),
        };
        if pivot != col {
            for c in 0..n + w {
                let tmp = aug.get(col, c);
                aug.set(col, c, aug.get(pivot, c));
                aug.set(pivot, c, tmp);
            }
        }
        let inv = f.inv(aug.get(col, col));
        for c in 0..n + w {
            aug.set(col, c, f.mul(aug.get(col, c), inv));
        }
        for r in 0..n {
            if r == col || aug.get(r, col).0 == 0 {
                continue;
            }
            let factor = aug.get(r, col);
            for c in 0..n + w {
                let v = f.sub(aug.get(r, c), f.mul(factor, aug.get(col, c)));
                aug.set(r, c, v);
            }
        }
    }
    let mut x = MatrixFq::zeros(&f, n, w);
    for r in 0..n {
        for c in 0..w {
            x.set(r, c, aug.get(r, n + c));
        }
    }
    Ok(x)
}

impl MatrixFq {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(MatrixJson {
            q: self.field.q(),
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|e| e.0).collect(),
        })
        .expect("matrix serialization")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let j: MatrixJson = serde_json::from_value(v.clone())
            .map_err(|e| Error::InvalidMatrixFile(e.to_string()))?;
        if j.data.len() != j.rows * j.cols {
            return Err(Error::InvalidMatrixFile(format!(
                "expected {} entries, found {}",
                j.rows * j.cols,
                j.data.len()
            )));
        }
        let field = FieldSpec::new(j.q).map_err(|e| Error::InvalidMatrixFile(e.to_string()))?;
        for &v in &j.data {
            if v >= j.q {
                return Err(Error::InvalidMatrixFile(format!(
                    "entry {} not reduced mod {}",
                    v, j.q
                )));
            }
        }
        Ok(MatrixFq::new(&field, j.rows, j.cols, j.data))
    }
}
