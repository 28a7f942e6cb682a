//! Share generation and reconstruction.
//!
//! A left-share of A places the column partitions A_1..A_K at exponents
//! 0..K-1 and the key matrices at K..K+T-1; a right-share of B places the
//! row partitions at exponents -(l-1) and the keys at -(K+T+l-1), with
//! negative exponents reduced mod N. Shares are the entrywise DFT of the
//! resulting coefficient slots, i.e. evaluations at the N-th roots of unity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Fe, FieldSpec};
use crate::matrix::{concat_cols, concat_rows, grid_partition, partition_cols, partition_rows, MatrixFq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
    RightOwnData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareParams {
    pub n: usize,
    pub k: usize,
    pub t: usize,
    pub side: Side,
}

impl ShareParams {
    pub fn new(n: usize, k: usize, t: usize, side: Side) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::ParamInvariant(format!("N={n}, K={k} must be positive")));
        }
        let bound = match side {
            Side::Left | Side::RightOwnData => k + t,
            Side::Right => k + 2 * t,
        };
        if bound > n {
            return Err(Error::ParamInvariant(format!(
                "{side:?} sharing needs K + {}T <= N, got K={k}, T={t}, N={n}",
                if side == Side::Right { 2 } else { 1 }
            )));
        }
        Ok(ShareParams { n, k, t, side })
    }

    /// Coefficient slot of the l-th data partition, l in [1, K].
    pub fn data_slot(&self, l: usize) -> usize {
        match self.side {
            Side::Left => l - 1,
            Side::Right | Side::RightOwnData => (self.n - (l - 1)) % self.n,
        }
    }

    /// Coefficient slot of the l-th key matrix, l in [1, T].
    pub fn key_slot(&self, l: usize) -> usize {
        match self.side {
            Side::Left => self.k + l - 1,
            Side::Right => self.n - (self.k + self.t + l - 1),
            Side::RightOwnData => self.n - (self.k + l - 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Share {
    pub params: ShareParams,
    pub server_index: usize,
    pub object_tag: String,
    pub payload: MatrixFq,
}

impl Share {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "params": self.params,
            "server_index": self.server_index,
            "object_tag": self.object_tag,
            "payload": self.payload.to_json(),
        })
    }
}

/// The key matrices retained by the dealer (R_1..R_T or S_1..S_T).
#[derive(Debug, Clone)]
pub struct SecretKeyBundle {
    pub keys: Vec<MatrixFq>,
}

/// Entrywise DFT of N coefficient slots, producing one payload per server.
fn evaluate_slots(field: &FieldSpec, slots: &[MatrixFq]) -> Result<Vec<MatrixFq>> {
    let n = slots.len();
    let rows = slots[0].rows();
    let cols = slots[0].cols();
    let mut payloads = vec![MatrixFq::zeros(field, rows, cols); n];
    let mut line = vec![Fe(0); n];
    for r in 0..rows {
        for c in 0..cols {
            for (s, slot) in slots.iter().enumerate() {
                line[s] = slot.get(r, c);
            }
            let evals = field.dft(&line)?;
            for (i, &v) in evals.iter().enumerate() {
                payloads[i].set(r, c, v);
            }
        }
    }
    Ok(payloads)
}

fn build_shares(
    field: &FieldSpec,
    params: ShareParams,
    blocks: &[MatrixFq],
    keys: &[MatrixFq],
    tag: &str,
) -> Result<Vec<Share>> {
    let (rows, cols) = (blocks[0].rows(), blocks[0].cols());
    let mut slots = vec![MatrixFq::zeros(field, rows, cols); params.n];
    for (l, b) in blocks.iter().enumerate() {
        slots[params.data_slot(l + 1)] = b.clone();
    }
    for (l, k) in keys.iter().enumerate() {
        if k.rows() != rows || k.cols() != cols {
            return Err(Error::DimensionMismatch("key block shape".into()));
        }
        slots[params.key_slot(l + 1)] = k.clone();
    }
    let payloads = evaluate_slots(field, &slots)?;
    Ok(payloads
        .into_iter()
        .enumerate()
        .map(|(i, payload)| Share {
            params,
            server_index: i + 1,
            object_tag: tag.to_string(),
            payload,
        })
        .collect())
}

fn random_keys(
    field: &FieldSpec,
    t: usize,
    rows: usize,
    cols: usize,
    rng: &mut impl Rng,
) -> Vec<MatrixFq> {
    (0..t).map(|_| MatrixFq::random(field, rows, cols, rng)).collect()
}

/// Left shares with caller-supplied keys; used by the secrecy auditor to
/// enumerate the key space through the production encoder.
pub fn left_shares_with_keys(
    a: &MatrixFq,
    n: usize,
    k: usize,
    t: usize,
    keys: &[MatrixFq],
    tag: &str,
) -> Result<Vec<Share>> {
    let params = ShareParams::new(n, k, t, Side::Left)?;
    let blocks = partition_cols(a, k)?;
    build_shares(a.field(), params, &blocks, keys, tag)
}

pub fn make_left_shares(
    a: &MatrixFq,
    n: usize,
    k: usize,
    t: usize,
    rng: &mut impl Rng,
    tag: &str,
) -> Result<(Vec<Share>, SecretKeyBundle)> {
    let keys = random_keys(a.field(), t, a.rows(), a.cols() / k.max(1), rng);
    let shares = left_shares_with_keys(a, n, k, t, &keys, tag)?;
    Ok((shares, SecretKeyBundle { keys }))
}

pub fn right_shares_with_keys(
    b: &MatrixFq,
    n: usize,
    k: usize,
    t: usize,
    keys: &[MatrixFq],
    tag: &str,
) -> Result<Vec<Share>> {
    let params = ShareParams::new(n, k, t, Side::Right)?;
    let blocks = partition_rows(b, k)?;
    build_shares(b.field(), params, &blocks, keys, tag)
}

pub fn make_right_shares(
    b: &MatrixFq,
    n: usize,
    k: usize,
    t: usize,
    rng: &mut impl Rng,
    tag: &str,
) -> Result<(Vec<Share>, SecretKeyBundle)> {
    let keys = random_keys(b.field(), t, b.rows() / k.max(1), b.cols(), rng);
    let shares = right_shares_with_keys(b, n, k, t, &keys, tag)?;
    Ok((shares, SecretKeyBundle { keys }))
}

/// Own-data right shares: the key exponents sit directly below the data
/// band, so the product's constant term picks up sum R_l S_l, which the
/// dealer can subtract.
pub fn make_right_shares_own(
    b: &MatrixFq,
    n: usize,
    k: usize,
    t: usize,
    rng: &mut impl Rng,
    tag: &str,
) -> Result<(Vec<Share>, SecretKeyBundle)> {
    let params = ShareParams::new(n, k, t, Side::RightOwnData)?;
    let blocks = partition_rows(b, k)?;
    let keys = random_keys(b.field(), t, b.rows() / k, b.cols(), rng);
    let shares = build_shares(b.field(), params, &blocks, &keys, tag)?;
    Ok((shares, SecretKeyBundle { keys }))
}

/// Sorts a complete set of N shares by server index, verifying tags.
fn complete_set<'a>(shares: &'a [Share]) -> Result<Vec<&'a Share>> {
    assert!(!shares.is_empty());
    let n = shares[0].params.n;
    let tag = &shares[0].object_tag;
    let params = shares[0].params;
    let mut by_index: Vec<Option<&Share>> = vec![None; n];
    for s in shares {
        if s.object_tag != *tag || s.params != params {
            return Err(Error::TagMismatch);
        }
        by_index[s.server_index - 1] = Some(s);
    }
    by_index
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or(Error::MissingShare(i + 1)))
        .collect()
}

/// (1/N) sum of the payloads: the constant coefficient of the underlying
/// polynomial mod (x^N - 1).
pub fn reconstruct_constant(shares: &[Share]) -> Result<MatrixFq> {
    let ordered = complete_set(shares)?;
    average_payloads(&ordered.iter().map(|s| s.payload.clone()).collect::<Vec<_>>())
}

pub fn average_payloads(payloads: &[MatrixFq]) -> Result<MatrixFq> {
    let field = payloads[0].field().clone();
    let mut sum = MatrixFq::zeros(&field, payloads[0].rows(), payloads[0].cols());
    for p in payloads {
        sum = sum.add(p)?;
    }
    let n_inv = field.inv(field.elem(payloads.len() as u64));
    Ok(sum.scale(n_inv))
}

/// Entrywise IDFT: the full coefficient list of the share polynomial.
pub fn reconstruct_all_coeffs(shares: &[Share]) -> Result<Vec<MatrixFq>> {
    let ordered = complete_set(shares)?;
    let payloads: Vec<MatrixFq> = ordered.iter().map(|s| s.payload.clone()).collect();
    coeffs_of_payloads(payloads[0].field().clone(), &payloads)
}

pub fn coeffs_of_payloads(field: FieldSpec, payloads: &[MatrixFq]) -> Result<Vec<MatrixFq>> {
    let n = payloads.len();
    let rows = payloads[0].rows();
    let cols = payloads[0].cols();
    let mut coeffs = vec![MatrixFq::zeros(&field, rows, cols); n];
    let mut line = vec![Fe(0); n];
    for r in 0..rows {
        for c in 0..cols {
            for (i, p) in payloads.iter().enumerate() {
                line[i] = p.get(r, c);
            }
            let vals = field.idft(&line)?;
            for (s, &v) in vals.iter().enumerate() {
                coeffs[s].set(r, c, v);
            }
        }
    }
    Ok(coeffs)
}

/// Recovers the shared matrix itself from a complete set of shares.
pub fn reconstruct_matrix(shares: &[Share]) -> Result<MatrixFq> {
    let params = shares[0].params;
    let coeffs = reconstruct_all_coeffs(shares)?;
    let blocks: Vec<MatrixFq> = (1..=params.k)
        .map(|l| coeffs[params.data_slot(l)].clone())
        .collect();
    match params.side {
        Side::Left => concat_cols(&blocks),
        Side::Right | Side::RightOwnData => concat_rows(&blocks),
    }
}

pub fn share_add(a: &Share, b: &Share) -> Result<Share> {
    if a.params != b.params || a.server_index != b.server_index {
        return Err(Error::TagMismatch);
    }
    Ok(Share {
        params: a.params,
        server_index: a.server_index,
        object_tag: format!("{}+{}", a.object_tag, b.object_tag),
        payload: a.payload.add(&b.payload)?,
    })
}

pub fn share_scale(c: Fe, a: &Share) -> Share {
    Share {
        params: a.params,
        server_index: a.server_index,
        object_tag: a.object_tag.clone(),
        payload: a.payload.scale(c),
    }
}

/// One evaluation of a bivariate straggler encoding; server
/// i = (s-1)*N1 + r for r in [1, N1], s in [1, N2].
#[derive(Debug, Clone)]
pub struct BivariateShare {
    pub server_index: usize,
    pub r: usize,
    pub s: usize,
    pub payload: MatrixFq,
}

fn check_betas(field: &FieldSpec, betas: &[Fe], n2: usize) -> Result<()> {
    if betas.len() != n2 {
        return Err(Error::LengthMismatch {
            expected: n2,
            got: betas.len(),
        });
    }
    for (i, a) in betas.iter().enumerate() {
        if a.0 >= field.q() {
            return Err(Error::InvalidParams("beta not reduced".into()));
        }
        for b in betas.iter().skip(i + 1) {
            if a == b {
                return Err(Error::NonDistinctBetas);
            }
        }
    }
    Ok(())
}

/// Default interpolation points: the N2 smallest nonzero field elements.
pub fn default_betas(field: &FieldSpec, n2: usize) -> Result<Vec<Fe>> {
    if n2 as u64 >= field.q() {
        return Err(Error::InvalidParams(format!(
            "need {} distinct nonzero points in F_{}",
            n2,
            field.q()
        )));
    }
    Ok((1..=n2 as u64).map(Fe).collect())
}

pub fn bivariate_shares_a_with_keys(
    a: &MatrixFq,
    k1: usize,
    k2: usize,
    t: usize,
    n1: usize,
    n2: usize,
    betas: &[Fe],
    keys: &[Vec<MatrixFq>],
) -> Result<Vec<BivariateShare>> {
    let field = a.field().clone();
    field.primitive_nth_root(n1 as u64)?;
    check_betas(&field, betas, n2)?;
    let grid = grid_partition(a, k2, k1)?;
    let alpha = field.primitive_nth_root(n1 as u64)?;
    let mut out = Vec::with_capacity(n1 * n2);
    for s in 1..=n2 {
        let x2 = betas[s - 1];
        for r in 1..=n1 {
            let x1 = field.pow(alpha, (r - 1) as u64);
            let mut payload =
                MatrixFq::zeros(&field, a.rows() / k2, a.cols() / k1);
            for i in 1..=k2 {
                let w2 = field.pow(x2, (i - 1) as u64);
                for j in 1..=k1 {
                    let w = field.mul(w2, field.pow(x1, (j - 1) as u64));
                    payload = payload.add(&grid.block(i - 1, j - 1).scale(w))?;
                }
                for j in 1..=t {
                    let w = field.mul(w2, field.pow(x1, (k1 + j - 1) as u64));
                    payload = payload.add(&keys[i - 1][j - 1].scale(w))?;
                }
            }
            out.push(BivariateShare {
                server_index: (s - 1) * n1 + r,
                r,
                s,
                payload,
            });
        }
    }
    Ok(out)
}

pub fn make_bivariate_shares_a(
    a: &MatrixFq,
    k1: usize,
    k2: usize,
    t: usize,
    n1: usize,
    n2: usize,
    betas: &[Fe],
    rng: &mut impl Rng,
) -> Result<(Vec<BivariateShare>, Vec<Vec<MatrixFq>>)> {
    let (br, bc) = (a.rows() / k2, a.cols() / k1);
    let keys: Vec<Vec<MatrixFq>> = (0..k2)
        .map(|_| (0..t).map(|_| MatrixFq::random(a.field(), br, bc, rng)).collect())
        .collect();
    let shares = bivariate_shares_a_with_keys(a, k1, k2, t, n1, n2, betas, &keys)?;
    Ok((shares, keys))
}

/// B's x2 exponents are (k-1)*K2, where K2 is the row-partition count of
/// the A-side grid, so it must be supplied alongside B's own grid shape.
#[allow(clippy::too_many_arguments)]
pub fn bivariate_shares_b_with_keys(
    b: &MatrixFq,
    k1: usize,
    k2: usize,
    k3: usize,
    t: usize,
    n1: usize,
    n2: usize,
    betas: &[Fe],
    own_data: bool,
    keys: &[Vec<MatrixFq>],
) -> Result<Vec<BivariateShare>> {
    let field = b.field().clone();
    check_betas(&field, betas, n2)?;
    let grid = grid_partition(b, k1, k3)?;
    let alpha = field.primitive_nth_root(n1 as u64)?;
    // x1^-e realized as x1^((N1 - e) mod N1) at the roots of unity.
    let neg = |e: usize| ((n1 - e % n1) % n1) as u64;
    let key_exp = |j: usize| {
        if own_data {
            neg(k1 + j - 1)
        } else {
            neg(k1 + t + j - 1)
        }
    };
    let mut out = Vec::with_capacity(n1 * n2);
    for s in 1..=n2 {
        let x2 = betas[s - 1];
        for r in 1..=n1 {
            let x1 = field.pow(alpha, (r - 1) as u64);
            let mut payload = MatrixFq::zeros(&field, b.rows() / k1, b.cols() / k3);
            for k in 1..=k3 {
                let w2 = field.pow(x2, ((k - 1) * k2) as u64);
                for j in 1..=k1 {
                    let w = field.mul(w2, field.pow(x1, neg(j - 1)));
                    payload = payload.add(&grid.block(j - 1, k - 1).scale(w))?;
                }
                for j in 1..=t {
                    let w = field.mul(w2, field.pow(x1, key_exp(j)));
                    payload = payload.add(&keys[j - 1][k - 1].scale(w))?;
                }
            }
            out.push(BivariateShare {
                server_index: (s - 1) * n1 + r,
                r,
                s,
                payload,
            });
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn make_bivariate_shares_b(
    b: &MatrixFq,
    k1: usize,
    k2: usize,
    k3: usize,
    t: usize,
    n1: usize,
    n2: usize,
    betas: &[Fe],
    own_data: bool,
    rng: &mut impl Rng,
) -> Result<(Vec<BivariateShare>, Vec<Vec<MatrixFq>>)> {
    let (br, bc) = (b.rows() / k1, b.cols() / k3);
    let keys: Vec<Vec<MatrixFq>> = (0..t)
        .map(|_| (0..k3).map(|_| MatrixFq::random(b.field(), br, bc, rng)).collect())
        .collect();
    let shares =
        bivariate_shares_b_with_keys(b, k1, k2, k3, t, n1, n2, betas, own_data, &keys)?;
    Ok((shares, keys))
}
