//! End-to-end secure computations driven over the simulated network:
//! two-matrix multiplication, chain products, straggler-tolerant
//! multiplication, share conversion and transposition, exponentiation,
//! masked inversion, linear solving, and matrix-polynomial evaluation.
//!
//! The common engine is one round of re-share-and-average: every server
//! left-shares its local result and sends one piece to each peer, and
//! averaging the received pieces leaves each server with a fresh left
//! share of the averaged matrix. Multiplication, chain rounds, share
//! conversion, and the downlink-secure delivery step are all instances
//! of this pattern with different coefficient extraction at the end.

use std::collections::BTreeSet;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Fe;
use crate::matrix::{concat_cols, concat_rows, mat_mul, plaintext_solve, MatrixFq};
use crate::sharing::{
    average_payloads, coeffs_of_payloads, default_betas, make_bivariate_shares_a,
    make_bivariate_shares_b, make_left_shares, make_right_shares, make_right_shares_own,
    reconstruct_matrix, share_add, share_scale, Share, ShareParams, Side,
};
use crate::simnet::{NodeId, SimNet, StragglerReport};

pub use crate::simnet::RoundCounter;

const MASK_RETRIES: u32 = 32;

fn require_div(dim: usize, by: usize) -> Result<()> {
    if by == 0 || dim % by != 0 {
        return Err(Error::IndivisibleDimension { dim, by });
    }
    Ok(())
}

fn require_inner(a: &MatrixFq, b: &MatrixFq) -> Result<()> {
    if a.cols() != b.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} times {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

fn source_id(net: &SimNet, idx: usize) -> usize {
    (idx - 1) % net.num_sources() + 1
}

/// Sends one source's share set out to the servers.
fn upload(net: &mut SimNet, source: usize, shares: &[Share]) {
    for s in shares {
        net.send(
            NodeId::Source(source),
            NodeId::Server(s.server_index),
            s.payload.clone(),
        );
    }
}

/// Servers transmit their shares to the user; straggling servers' messages
/// are dropped by the network. Returns the delivered subset.
fn deliver_to_user(net: &mut SimNet, shares: &[Share]) -> Vec<Share> {
    net.next_round();
    shares
        .iter()
        .filter(|s| {
            net.send(
                NodeId::Server(s.server_index),
                NodeId::User,
                s.payload.clone(),
            )
        })
        .cloned()
        .collect()
}

/// One communication round: server i left-shares its payload with
/// (N, k, t) and sends piece j to server j; server j averages what it
/// received (plus its own piece). The averages are fresh left shares of
/// the payload average.
fn reshare_left(
    net: &mut SimNet,
    payloads: &[MatrixFq],
    k: usize,
    t: usize,
    tag: &str,
) -> Result<Vec<Share>> {
    let n = net.num_servers();
    if payloads.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: payloads.len(),
        });
    }
    require_div(payloads[0].cols(), k)?;
    let params = ShareParams::new(n, k, t, Side::Left)?;
    let mut outgoing = Vec::with_capacity(n);
    for i in 1..=n {
        let (shares, _) = make_left_shares(
            &payloads[i - 1],
            n,
            k,
            t,
            net.rng_for(NodeId::Server(i)),
            tag,
        )?;
        outgoing.push(shares);
    }
    net.next_round();
    for i in 1..=n {
        for s in &outgoing[i - 1] {
            if s.server_index != i {
                net.send(
                    NodeId::Server(i),
                    NodeId::Server(s.server_index),
                    s.payload.clone(),
                );
            }
        }
    }
    let mut result = Vec::with_capacity(n);
    for j in 1..=n {
        let pieces: Vec<MatrixFq> = (1..=n)
            .map(|i| outgoing[i - 1][j - 1].payload.clone())
            .collect();
        result.push(Share {
            params,
            server_index: j,
            object_tag: tag.to_string(),
            payload: average_payloads(&pieces)?,
        });
    }
    net.rounds.communication_rounds += 1;
    net.interserver_per_server_per_round
        .push(Ratio::new((n - 1) as u64, k as u64));
    Ok(result)
}

/// Local share products followed by a re-share round: turns left shares
/// of A and right shares of B into left shares of AB.
fn secure_mul(
    net: &mut SimNet,
    left: &[Share],
    right: &[Share],
    k: usize,
    t: usize,
) -> Result<Vec<Share>> {
    net.rounds.computation_rounds += 1;
    net.next_round();
    let products: Vec<MatrixFq> = left
        .iter()
        .zip(right)
        .map(|(l, r)| mat_mul(&l.payload, &r.payload))
        .collect::<Result<_>>()?;
    reshare_left(net, &products, k, t, "C")
}

fn check_mult_params(net: &SimNet, t: usize) -> Result<usize> {
    let n = net.num_servers();
    if n <= 2 * t {
        return Err(Error::InvalidParams(format!("need N > 2T, got N={n}, T={t}")));
    }
    Ok(n - 2 * t)
}

/// Computes the per-server product payloads of the basic scheme without
/// the reconstruction phase.
fn sdmm2_products(net: &mut SimNet, a: &MatrixFq, b: &MatrixFq, t: usize) -> Result<Vec<MatrixFq>> {
    let n = net.num_servers();
    let k = check_mult_params(net, t)?;
    require_inner(a, b)?;
    require_div(a.cols(), k)?;
    net.next_round();
    let s1 = source_id(net, 1);
    let (sa, _) = make_left_shares(a, n, k, t, net.rng_for(NodeId::Source(s1)), "A")?;
    upload(net, s1, &sa);
    net.note_input_symbols(a.symbols());
    let s2 = source_id(net, 2);
    let (sb, _) = make_right_shares(b, n, k, t, net.rng_for(NodeId::Source(s2)), "B")?;
    upload(net, s2, &sb);
    net.note_input_symbols(b.symbols());
    net.rounds.computation_rounds += 1;
    net.next_round();
    sa.iter()
        .zip(&sb)
        .map(|(x, y)| mat_mul(&x.payload, &y.payload))
        .collect()
}

/// Secure two-matrix multiplication with K = N - 2T: upload cost
/// N/(N-2T), no inter-server traffic, user averages the N responses.
pub fn sdmm2(net: &mut SimNet, a: &MatrixFq, b: &MatrixFq, t: usize) -> Result<MatrixFq> {
    let products = sdmm2_products(net, a, b, t)?;
    net.next_round();
    for (i, p) in products.iter().enumerate() {
        net.send(NodeId::Server(i + 1), NodeId::User, p.clone());
    }
    let c = average_payloads(&products)?;
    net.note_output_symbols(c.symbols());
    Ok(c)
}

/// Variant for sources computing on their own data: K = N - T, the
/// right-encoding keys sit directly below the data band, and the user
/// subtracts the known key product sum from the average.
pub fn sdmm2_own_data(net: &mut SimNet, a: &MatrixFq, b: &MatrixFq, t: usize) -> Result<MatrixFq> {
    let n = net.num_servers();
    if n <= t {
        return Err(Error::InvalidParams(format!("need N > T, got N={n}, T={t}")));
    }
    let k = n - t;
    require_inner(a, b)?;
    require_div(a.cols(), k)?;
    net.next_round();
    let s1 = source_id(net, 1);
    let (sa, ka) = make_left_shares(a, n, k, t, net.rng_for(NodeId::Source(s1)), "A")?;
    upload(net, s1, &sa);
    net.note_input_symbols(a.symbols());
    let s2 = source_id(net, 2);
    let (sb, kb) = make_right_shares_own(b, n, k, t, net.rng_for(NodeId::Source(s2)), "B")?;
    upload(net, s2, &sb);
    net.note_input_symbols(b.symbols());
    net.rounds.computation_rounds += 1;
    net.next_round();
    let products: Vec<MatrixFq> = sa
        .iter()
        .zip(&sb)
        .map(|(x, y)| mat_mul(&x.payload, &y.payload))
        .collect::<Result<_>>()?;
    net.next_round();
    for (i, p) in products.iter().enumerate() {
        net.send(NodeId::Server(i + 1), NodeId::User, p.clone());
    }
    // The average carries the extra term sum_l R_l S_l, which the user
    // precomputes offline from the retained key bundles.
    let mut correction = MatrixFq::zeros(net.field(), a.rows(), b.cols());
    for (r, s) in ka.keys.iter().zip(&kb.keys) {
        correction = correction.add(&mat_mul(r, s)?)?;
    }
    let c = average_payloads(&products)?.sub(&correction)?;
    net.note_output_symbols(c.symbols());
    Ok(c)
}

/// Downlink-secure delivery: servers re-share their product payloads
/// with (N, N-T, T) and average, leaving each holding a left share of
/// the result; the user then downloads N/(N-T) times the result size.
pub fn usersecure_round(net: &mut SimNet, products: &[MatrixFq], t: usize) -> Result<Vec<Share>> {
    let n = net.num_servers();
    if n <= t {
        return Err(Error::InvalidParams(format!("need N > T, got N={n}, T={t}")));
    }
    reshare_left(net, products, n - t, t, "C")
}

/// Secure chain product A^(1) A^(2) ... A^(Gamma): one computation round
/// per factor beyond the first, with a re-share round between successive
/// multiplications; the user averages the final shares.
pub fn chain_multiply(net: &mut SimNet, mats: &[MatrixFq], t: usize) -> Result<MatrixFq> {
    let gamma = mats.len();
    if gamma < 2 {
        return Err(Error::InvalidParams("chain needs at least two matrices".into()));
    }
    let n = net.num_servers();
    let k = check_mult_params(net, t)?;
    for w in mats.windows(2) {
        require_inner(&w[0], &w[1])?;
    }
    for m in &mats[..gamma - 1] {
        require_div(m.cols(), k)?;
    }
    net.next_round();
    let s1 = source_id(net, 1);
    let (mut left, _) = make_left_shares(&mats[0], n, k, t, net.rng_for(NodeId::Source(s1)), "A1")?;
    upload(net, s1, &left);
    net.note_input_symbols(mats[0].symbols());
    let mut rights = Vec::with_capacity(gamma - 1);
    for (g, m) in mats.iter().enumerate().skip(1) {
        let s = source_id(net, g + 1);
        let (sh, _) = make_right_shares(m, n, k, t, net.rng_for(NodeId::Source(s)), "Ag")?;
        upload(net, s, &sh);
        net.note_input_symbols(m.symbols());
        rights.push(sh);
    }
    for (g, right) in rights.iter().enumerate() {
        net.rounds.computation_rounds += 1;
        net.next_round();
        let products: Vec<MatrixFq> = left
            .iter()
            .zip(right)
            .map(|(l, r)| mat_mul(&l.payload, &r.payload))
            .collect::<Result<_>>()?;
        if g + 1 < rights.len() {
            left = reshare_left(net, &products, k, t, "C")?;
        } else {
            net.next_round();
            for (i, p) in products.iter().enumerate() {
                net.send(NodeId::Server(i + 1), NodeId::User, p.clone());
            }
            let c = average_payloads(&products)?;
            net.note_output_symbols(c.symbols());
            return Ok(c);
        }
    }
    unreachable!("gamma >= 2")
}

enum Stack {
    Cols,
    Rows,
}

/// The conversion engine: every server re-shares its payload under the
/// target scheme, the pieces are exchanged all-to-all, and each server
/// takes the entrywise inverse DFT across senders, keeps the
/// coefficients at the source scheme's data slots, and stacks them back
/// into a single payload — a valid target-scheme share of the original
/// matrix.
fn reshare_convert(
    net: &mut SimNet,
    payloads: &[MatrixFq],
    src_slots: &[usize],
    stack: Stack,
    k2: usize,
    t2: usize,
    target: Side,
    tag: &str,
) -> Result<Vec<Share>> {
    let n = net.num_servers();
    if payloads.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: payloads.len(),
        });
    }
    let params = ShareParams::new(n, k2, t2, target)?;
    let mut outgoing = Vec::with_capacity(n);
    for i in 1..=n {
        let shares = match target {
            Side::Left => {
                make_left_shares(&payloads[i - 1], n, k2, t2, net.rng_for(NodeId::Server(i)), tag)?.0
            }
            Side::Right => {
                make_right_shares(&payloads[i - 1], n, k2, t2, net.rng_for(NodeId::Server(i)), tag)?.0
            }
            Side::RightOwnData => {
                return Err(Error::InvalidParams(
                    "own-data encoding is a source-side scheme, not a conversion target".into(),
                ))
            }
        };
        outgoing.push(shares);
    }
    net.next_round();
    for i in 1..=n {
        for s in &outgoing[i - 1] {
            if s.server_index != i {
                net.send(
                    NodeId::Server(i),
                    NodeId::Server(s.server_index),
                    s.payload.clone(),
                );
            }
        }
    }
    let field = net.field().clone();
    let mut result = Vec::with_capacity(n);
    for j in 1..=n {
        let received: Vec<MatrixFq> = (1..=n)
            .map(|i| outgoing[i - 1][j - 1].payload.clone())
            .collect();
        let coeffs = coeffs_of_payloads(field.clone(), &received)?;
        let blocks: Vec<MatrixFq> = src_slots.iter().map(|&s| coeffs[s].clone()).collect();
        let payload = match stack {
            Stack::Cols => concat_cols(&blocks)?,
            Stack::Rows => concat_rows(&blocks)?,
        };
        result.push(Share {
            params,
            server_index: j,
            object_tag: tag.to_string(),
            payload,
        });
    }
    net.rounds.communication_rounds += 1;
    net.interserver_per_server_per_round
        .push(Ratio::new((n - 1) as u64, k2 as u64));
    Ok(result)
}

fn ordered_payloads(shares: &[Share]) -> Result<Vec<MatrixFq>> {
    let n = shares[0].params.n;
    let mut out: Vec<Option<MatrixFq>> = vec![None; n];
    for s in shares {
        out[s.server_index - 1] = Some(s.payload.clone());
    }
    out.into_iter()
        .enumerate()
        .map(|(i, p)| p.ok_or(Error::MissingShare(i + 1)))
        .collect()
}

/// Converts (N, K1, T1) shares to (N, K2, T2) shares of the same matrix.
/// Same-orientation conversions are only possible from K1 = 1.
pub fn convert_shares(
    net: &mut SimNet,
    shares: &[Share],
    k2: usize,
    t2: usize,
    target: Side,
) -> Result<Vec<Share>> {
    let p1 = shares[0].params;
    let src_is_left = p1.side == Side::Left;
    let tgt_is_left = match target {
        Side::Left => true,
        Side::Right => false,
        Side::RightOwnData => {
            return Err(Error::InvalidParams(
                "own-data encoding is a source-side scheme, not a conversion target".into(),
            ))
        }
    };
    if src_is_left == tgt_is_left && p1.k != 1 {
        return Err(Error::IllegalConversion(format!(
            "{:?}(K={}) to {:?}: same-orientation conversion needs K1 = 1",
            p1.side, p1.k, target
        )));
    }
    let src_slots: Vec<usize> = (1..=p1.k).map(|l| p1.data_slot(l)).collect();
    let stack = if src_is_left { Stack::Cols } else { Stack::Rows };
    let payloads = ordered_payloads(shares)?;
    reshare_convert(net, &payloads, &src_slots, stack, k2, t2, target, "conv")
}

/// Left shares of A become left shares of A transposed: servers
/// transpose their payloads, re-share under (N, K2, T2), and the
/// recovered row partitions are stacked row-wise.
pub fn transpose_shares(
    net: &mut SimNet,
    shares: &[Share],
    k2: usize,
    t2: usize,
) -> Result<Vec<Share>> {
    let p1 = shares[0].params;
    if p1.side != Side::Left {
        return Err(Error::InvalidParams("transpose operates on left shares".into()));
    }
    let src_slots: Vec<usize> = (1..=p1.k).map(|l| p1.data_slot(l)).collect();
    let payloads: Vec<MatrixFq> = ordered_payloads(shares)?
        .iter()
        .map(|p| p.transpose())
        .collect();
    reshare_convert(net, &payloads, &src_slots, Stack::Rows, k2, t2, Side::Left, "tr")
}

/// A^r by binary expansion: squarings keep a (left, right) share pair of
/// the running power, set bits fold it into a left-share accumulator.
/// Computation rounds come to floor(log2 r) + popcount(r) - 1.
pub fn exponentiate(net: &mut SimNet, a: &MatrixFq, r: u64, t: usize) -> Result<MatrixFq> {
    if r == 0 {
        return Err(Error::InvalidParams("exponent must be at least 1".into()));
    }
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch("exponentiation needs a square matrix".into()));
    }
    let n = net.num_servers();
    let k = check_mult_params(net, t)?;
    require_div(a.cols(), k)?;
    net.next_round();
    let s1 = source_id(net, 1);
    let (mut sq_left, _) = make_left_shares(a, n, k, t, net.rng_for(NodeId::Source(s1)), "P")?;
    upload(net, s1, &sq_left);
    net.note_input_symbols(a.symbols());
    let bits = 64 - r.leading_zeros();
    let mut acc: Option<Vec<Share>> = None;
    for pos in 0..bits {
        let bit = (r >> pos) & 1 == 1;
        let need_right = (bit && acc.is_some()) || pos + 1 < bits;
        let sq_right = if need_right {
            Some(convert_shares(net, &sq_left, k, t, Side::Right)?)
        } else {
            None
        };
        if bit {
            acc = Some(match acc {
                None => sq_left.clone(),
                Some(prev) => secure_mul(net, &prev, sq_right.as_ref().unwrap(), k, t)?,
            });
        }
        if pos + 1 < bits {
            sq_left = secure_mul(net, &sq_left, sq_right.as_ref().unwrap(), k, t)?;
        }
    }
    let shares = acc.expect("r >= 1 has a set bit");
    let delivered = deliver_to_user(net, &shares);
    let result = reconstruct_matrix(&delivered)?;
    net.note_output_symbols(result.symbols());
    Ok(result)
}

/// Core of masked inversion, operating on right shares of A already held
/// by the servers. A decentralized random mask Phi is assembled from
/// per-server contributions, P = Phi*A is computed securely and made
/// public, and each server sets its left share of the inverse to
/// P^{-1} times its left share of Phi.
pub fn masked_inverse_shares(net: &mut SimNet, right_a: &[Share], t: usize) -> Result<Vec<Share>> {
    let n = net.num_servers();
    let k = right_a[0].params.k;
    let d = right_a[0].payload.cols();
    let field = net.field().clone();
    let ident = MatrixFq::identity(&field, d);
    let a_payloads = ordered_payloads(right_a)?;
    for _attempt in 0..MASK_RETRIES {
        // Step 1: each server contributes a uniformly random Phi^(i) and
        // left-shares it; summing the received pieces gives left shares
        // of Phi = sum_i Phi^(i).
        net.next_round();
        let mut contributions = Vec::with_capacity(n);
        let mut outgoing = Vec::with_capacity(n);
        for i in 1..=n {
            let phi_i = {
                let rng = net.rng_for(NodeId::Server(i));
                MatrixFq::random(&field, d, d, rng)
            };
            let (sh, _) = make_left_shares(&phi_i, n, k, t, net.rng_for(NodeId::Server(i)), "phi")?;
            contributions.push(phi_i);
            outgoing.push(sh);
        }
        for i in 1..=n {
            for s in &outgoing[i - 1] {
                if s.server_index != i {
                    net.send(
                        NodeId::Server(i),
                        NodeId::Server(s.server_index),
                        s.payload.clone(),
                    );
                }
            }
        }
        net.rounds.communication_rounds += 1;
        net.interserver_per_server_per_round
            .push(Ratio::new((n - 1) as u64, k as u64));
        let mut phi_shares = Vec::with_capacity(n);
        for j in 1..=n {
            let mut sum = outgoing[0][j - 1].payload.clone();
            for i in 2..=n {
                sum = sum.add(&outgoing[i - 1][j - 1].payload)?;
            }
            phi_shares.push(sum);
        }
        // The simulator knows the mask; a singular draw triggers a retry
        // with fresh randomness before anything depending on it is used.
        let mut phi = contributions[0].clone();
        for c in &contributions[1..] {
            phi = phi.add(c)?;
        }
        if plaintext_solve(&phi, &ident).is_err() {
            continue;
        }
        // Steps 2-3: P = Phi*A from local share products, published by
        // exchanging the products and averaging locally.
        net.rounds.computation_rounds += 1;
        net.next_round();
        let products: Vec<MatrixFq> = phi_shares
            .iter()
            .zip(&a_payloads)
            .map(|(l, r)| mat_mul(l, r))
            .collect::<Result<_>>()?;
        for i in 1..=n {
            for j in 1..=n {
                if i != j {
                    net.send(NodeId::Server(i), NodeId::Server(j), products[i - 1].clone());
                }
            }
        }
        net.rounds.communication_rounds += 1;
        let p = average_payloads(&products)?;
        // Phi is invertible here, so a singular P means A is singular.
        let p_inv = plaintext_solve(&p, &ident)?;
        // Step 5: left-multiplying a left share by a public constant
        // yields a left share of the constant times the matrix.
        let params = ShareParams::new(n, k, t, Side::Left)?;
        return (1..=n)
            .map(|j| {
                Ok(Share {
                    params,
                    server_index: j,
                    object_tag: "Ainv".to_string(),
                    payload: mat_mul(&p_inv, &phi_shares[j - 1])?,
                })
            })
            .collect();
    }
    Err(Error::MaskRetriesExhausted(MASK_RETRIES))
}

/// Uploads right shares of A, runs masked inversion, and decodes the
/// user-delivered left shares of A^{-1}.
pub fn masked_inverse(net: &mut SimNet, a: &MatrixFq, t: usize) -> Result<MatrixFq> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch("inversion needs a square matrix".into()));
    }
    let n = net.num_servers();
    let k = check_mult_params(net, t)?;
    require_div(a.rows(), k)?;
    net.next_round();
    let s1 = source_id(net, 1);
    let (ra, _) = make_right_shares(a, n, k, t, net.rng_for(NodeId::Source(s1)), "A")?;
    upload(net, s1, &ra);
    net.note_input_symbols(a.symbols());
    let inv_shares = masked_inverse_shares(net, &ra, t)?;
    let delivered = deliver_to_user(net, &inv_shares);
    let result = reconstruct_matrix(&delivered)?;
    net.note_output_symbols(result.symbols());
    Ok(result)
}

/// k iterations of X <- 2X - XAX executed through secure multiply and
/// share-linear steps. Over a finite field the residual obeys
/// I - A X_k = (I - A X_0)^(2^k) exactly.
pub fn newton_inverse_rounds(
    net: &mut SimNet,
    a: &MatrixFq,
    x0: &MatrixFq,
    iters: u32,
    t: usize,
) -> Result<MatrixFq> {
    if a.rows() != a.cols() || x0.rows() != a.rows() || x0.cols() != a.cols() {
        return Err(Error::DimensionMismatch("Newton iteration needs conformal squares".into()));
    }
    let n = net.num_servers();
    let k = check_mult_params(net, t)?;
    require_div(a.rows(), k)?;
    net.next_round();
    let s1 = source_id(net, 1);
    let (ra, _) = make_right_shares(a, n, k, t, net.rng_for(NodeId::Source(s1)), "A")?;
    upload(net, s1, &ra);
    net.note_input_symbols(a.symbols());
    let s2 = source_id(net, 2);
    let (mut left_x, _) = make_left_shares(x0, n, k, t, net.rng_for(NodeId::Source(s2)), "X")?;
    upload(net, s2, &left_x);
    net.note_input_symbols(x0.symbols());
    let two = net.field().elem(2);
    for _ in 0..iters {
        let right_x = convert_shares(net, &left_x, k, t, Side::Right)?;
        let xa = secure_mul(net, &left_x, &ra, k, t)?;
        let xax = secure_mul(net, &xa, &right_x, k, t)?;
        left_x = left_x
            .iter()
            .zip(&xax)
            .map(|(x, y)| {
                Ok(Share {
                    params: y.params,
                    server_index: y.server_index,
                    object_tag: "X".to_string(),
                    payload: x.payload.scale(two).sub(&y.payload)?,
                })
            })
            .collect::<Result<_>>()?;
    }
    let delivered = deliver_to_user(net, &left_x);
    let result = reconstruct_matrix(&delivered)?;
    net.note_output_symbols(result.symbols());
    Ok(result)
}

/// X = A^{-1} B via masked inversion followed by one secure
/// multiplication; matches plaintext Gaussian elimination on (A|B).
pub fn solve_linear(net: &mut SimNet, a: &MatrixFq, b: &MatrixFq, t: usize) -> Result<MatrixFq> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch("coefficient matrix must be square".into()));
    }
    require_inner(a, b)?;
    let n = net.num_servers();
    let k = check_mult_params(net, t)?;
    require_div(a.rows(), k)?;
    net.next_round();
    let s1 = source_id(net, 1);
    let (ra, _) = make_right_shares(a, n, k, t, net.rng_for(NodeId::Source(s1)), "A")?;
    upload(net, s1, &ra);
    net.note_input_symbols(a.symbols());
    let s2 = source_id(net, 2);
    let (rb, _) = make_right_shares(b, n, k, t, net.rng_for(NodeId::Source(s2)), "B")?;
    upload(net, s2, &rb);
    net.note_input_symbols(b.symbols());
    let inv_shares = masked_inverse_shares(net, &ra, t)?;
    net.rounds.computation_rounds += 1;
    net.next_round();
    let products: Vec<MatrixFq> = inv_shares
        .iter()
        .zip(&rb)
        .map(|(l, r)| mat_mul(&l.payload, &r.payload))
        .collect::<Result<_>>()?;
    net.next_round();
    for (i, p) in products.iter().enumerate() {
        net.send(NodeId::Server(i + 1), NodeId::User, p.clone());
    }
    let x = average_payloads(&products)?;
    net.note_output_symbols(x.symbols());
    Ok(x)
}

/// Expression trees over matrix inputs, evaluated securely or in
/// plaintext. Chains associate left to right; no reassociation is done.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Expr {
    Input(usize),
    Add(Box<Expr>, Box<Expr>),
    Scale(u64, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Transpose(Box<Expr>),
    Pow(Box<Expr>, u32),
    Inverse(Box<Expr>),
}

/// Plaintext oracle evaluation of an expression tree.
pub fn eval_plain(expr: &Expr, inputs: &[MatrixFq]) -> Result<MatrixFq> {
    match expr {
        Expr::Input(i) => inputs
            .get(*i)
            .cloned()
            .ok_or_else(|| Error::InvalidParams(format!("input index {i} out of range"))),
        Expr::Add(a, b) => eval_plain(a, inputs)?.add(&eval_plain(b, inputs)?),
        Expr::Scale(c, e) => {
            let v = eval_plain(e, inputs)?;
            let c = v.field().elem(*c);
            Ok(v.scale(c))
        }
        Expr::Mul(a, b) => mat_mul(&eval_plain(a, inputs)?, &eval_plain(b, inputs)?),
        Expr::Transpose(e) => Ok(eval_plain(e, inputs)?.transpose()),
        Expr::Pow(e, r) => {
            if *r == 0 {
                return Err(Error::InvalidParams("exponent must be at least 1".into()));
            }
            let v = eval_plain(e, inputs)?;
            let mut acc = v.clone();
            for _ in 1..*r {
                acc = mat_mul(&acc, &v)?;
            }
            Ok(acc)
        }
        Expr::Inverse(e) => {
            let v = eval_plain(e, inputs)?;
            let ident = MatrixFq::identity(v.field(), v.rows());
            plaintext_solve(&v, &ident)
        }
    }
}

fn eval_secure(
    net: &mut SimNet,
    expr: &Expr,
    inputs: &[MatrixFq],
    k: usize,
    t: usize,
) -> Result<Vec<Share>> {
    let n = net.num_servers();
    match expr {
        Expr::Input(i) => {
            let m = inputs
                .get(*i)
                .ok_or_else(|| Error::InvalidParams(format!("input index {i} out of range")))?;
            net.next_round();
            let s = source_id(net, i + 1);
            let (sh, _) = make_left_shares(m, n, k, t, net.rng_for(NodeId::Source(s)), "in")?;
            upload(net, s, &sh);
            net.note_input_symbols(m.symbols());
            Ok(sh)
        }
        Expr::Add(a, b) => {
            let sa = eval_secure(net, a, inputs, k, t)?;
            let sb = eval_secure(net, b, inputs, k, t)?;
            sa.iter().zip(&sb).map(|(x, y)| share_add(x, y)).collect()
        }
        Expr::Scale(c, e) => {
            let sh = eval_secure(net, e, inputs, k, t)?;
            let c = net.field().elem(*c);
            Ok(sh.iter().map(|s| share_scale(c, s)).collect())
        }
        Expr::Mul(a, b) => {
            let sa = eval_secure(net, a, inputs, k, t)?;
            let sb = eval_secure(net, b, inputs, k, t)?;
            let rb = convert_shares(net, &sb, k, t, Side::Right)?;
            secure_mul(net, &sa, &rb, k, t)
        }
        Expr::Transpose(e) => {
            let sh = eval_secure(net, e, inputs, k, t)?;
            transpose_shares(net, &sh, k, t)
        }
        Expr::Pow(e, r) => {
            if *r == 0 {
                return Err(Error::InvalidParams("exponent must be at least 1".into()));
            }
            let sh = eval_secure(net, e, inputs, k, t)?;
            if *r == 1 {
                return Ok(sh);
            }
            let right = convert_shares(net, &sh, k, t, Side::Right)?;
            let mut acc = sh;
            for _ in 1..*r {
                acc = secure_mul(net, &acc, &right, k, t)?;
            }
            Ok(acc)
        }
        Expr::Inverse(e) => {
            let sh = eval_secure(net, e, inputs, k, t)?;
            let right = convert_shares(net, &sh, k, t, Side::Right)?;
            masked_inverse_shares(net, &right, t)
        }
    }
}

/// Compiles and runs an expression tree through the secure protocols;
/// the user decodes the final left shares.
pub fn eval_matrix_polynomial(
    net: &mut SimNet,
    expr: &Expr,
    inputs: &[MatrixFq],
    t: usize,
) -> Result<MatrixFq> {
    let k = check_mult_params(net, t)?;
    let shares = eval_secure(net, expr, inputs, k, t)?;
    let delivered = deliver_to_user(net, &shares);
    let result = reconstruct_matrix(&delivered)?;
    net.note_output_symbols(result.symbols());
    Ok(result)
}

/// Both-cost-optimal multiplication: upload at K = N-T, convert down to
/// K = N-2T for the multiplication (the left input needs two hops since
/// left shares cannot be converted straight to left shares), and come
/// back up to K = N-T for the downlink.
pub fn optimal_cost_pipeline(net: &mut SimNet, a: &MatrixFq, b: &MatrixFq, t: usize) -> Result<MatrixFq> {
    let n = net.num_servers();
    let k_mul = check_mult_params(net, t)?;
    let k_up = n - t;
    require_inner(a, b)?;
    require_div(a.cols(), k_up)?;
    require_div(a.cols(), k_mul)?;
    require_div(b.cols(), k_up)?;
    net.next_round();
    let s1 = source_id(net, 1);
    let (la0, _) = make_left_shares(a, n, k_up, t, net.rng_for(NodeId::Source(s1)), "A")?;
    upload(net, s1, &la0);
    net.note_input_symbols(a.symbols());
    let s2 = source_id(net, 2);
    let (lb0, _) = make_left_shares(b, n, k_up, t, net.rng_for(NodeId::Source(s2)), "B")?;
    upload(net, s2, &lb0);
    net.note_input_symbols(b.symbols());
    let ra1 = convert_shares(net, &la0, 1, t, Side::Right)?;
    let la = convert_shares(net, &ra1, k_mul, t, Side::Left)?;
    let rb = convert_shares(net, &lb0, k_mul, t, Side::Right)?;
    net.rounds.computation_rounds += 1;
    net.next_round();
    let products: Vec<MatrixFq> = la
        .iter()
        .zip(&rb)
        .map(|(l, r)| mat_mul(&l.payload, &r.payload))
        .collect::<Result<_>>()?;
    let c_shares = usersecure_round(net, &products, t)?;
    let delivered = deliver_to_user(net, &c_shares);
    let c = reconstruct_matrix(&delivered)?;
    net.note_output_symbols(c.symbols());
    Ok(c)
}

/// Parameters of the straggler-tolerant bivariate scheme.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StragglerConfig {
    pub k1: usize,
    pub k2: usize,
    pub k3: usize,
    pub t: usize,
    pub n2: usize,
    pub betas: Vec<Fe>,
    pub own_data: bool,
}

impl StragglerConfig {
    pub fn n1(&self) -> usize {
        if self.own_data {
            self.k1 + self.t
        } else {
            self.k1 + 2 * self.t
        }
    }

    /// Any this many servers forming complete groups suffice.
    pub fn group_recovery_threshold(&self) -> usize {
        self.k2 * self.k3 * self.n1()
    }

    fn validate(&self, a: &MatrixFq, b: &MatrixFq) -> Result<()> {
        if self.n2 < self.k2 * self.k3 {
            return Err(Error::InvalidParams(format!(
                "need N2 >= K2*K3, got N2={}, K2*K3={}",
                self.n2,
                self.k2 * self.k3
            )));
        }
        require_inner(a, b)?;
        require_div(a.rows(), self.k2)?;
        require_div(a.cols(), self.k1)?;
        require_div(b.cols(), self.k3)?;
        Ok(())
    }
}

/// Worst-case recovery threshold over arbitrary straggler placement with
/// N servers packed into groups of size K1+2T.
pub fn worst_case_threshold(n: usize, k1: usize, t: usize, k2: usize, k3: usize) -> usize {
    let group = k1 + 2 * t;
    n - (n.div_ceil(group) - k2 * k3)
}

/// Straggler-tolerant multiplication: bivariate encodings put group r of
/// server i = (s-1)N1 + r at (alpha^(r-1), beta_s); averaging a complete
/// group cancels every x1 term, and interpolating f(x2) through K2*K3
/// surviving groups recovers all block products.
pub fn straggler_sdmm(
    net: &mut SimNet,
    a: &MatrixFq,
    b: &MatrixFq,
    cfg: &StragglerConfig,
    failed: &BTreeSet<usize>,
) -> Result<MatrixFq> {
    cfg.validate(a, b)?;
    let n1 = cfg.n1();
    let n2 = cfg.n2;
    if n1 * n2 > net.num_servers() {
        return Err(Error::InvalidParams(format!(
            "need N1*N2 = {} servers, network has {}",
            n1 * n2,
            net.num_servers()
        )));
    }
    net.inject_stragglers(failed);
    let field = net.field().clone();
    net.next_round();
    let s1 = source_id(net, 1);
    let (sa, ka) = {
        let rng = net.rng_for(NodeId::Source(s1));
        make_bivariate_shares_a(a, cfg.k1, cfg.k2, cfg.t, n1, n2, &cfg.betas, rng)?
    };
    for s in &sa {
        net.send(NodeId::Source(s1), NodeId::Server(s.server_index), s.payload.clone());
    }
    net.note_input_symbols(a.symbols());
    let s2 = source_id(net, 2);
    let (sb, kb) = {
        let rng = net.rng_for(NodeId::Source(s2));
        make_bivariate_shares_b(
            b, cfg.k1, cfg.k2, cfg.k3, cfg.t, n1, n2, &cfg.betas, cfg.own_data, rng,
        )?
    };
    for s in &sb {
        net.send(NodeId::Source(s2), NodeId::Server(s.server_index), s.payload.clone());
    }
    net.note_input_symbols(b.symbols());
    // Computation and delivery; the network drops straggler responses.
    net.rounds.computation_rounds += 1;
    net.next_round();
    let mut delivered: Vec<Option<MatrixFq>> = vec![None; n1 * n2];
    for (x, y) in sa.iter().zip(&sb) {
        let prod = mat_mul(&x.payload, &y.payload)?;
        if net.send(NodeId::Server(x.server_index), NodeId::User, prod.clone()) {
            delivered[x.server_index - 1] = Some(prod);
        }
    }
    // Group averaging over complete groups only.
    let mut points: Vec<(Fe, MatrixFq)> = Vec::new();
    for s in 1..=n2 {
        let members: Option<Vec<MatrixFq>> = (1..=n1)
            .map(|r| delivered[(s - 1) * n1 + r - 1].clone())
            .collect();
        if let Some(ms) = members {
            points.push((cfg.betas[s - 1], average_payloads(&ms)?));
        }
    }
    let needed = cfg.k2 * cfg.k3;
    if points.len() < needed {
        return Err(Error::InsufficientGroups {
            needed,
            got: points.len(),
        });
    }
    // Entrywise interpolation of f(x2), degree < K2*K3.
    let (br, bc) = (a.rows() / cfg.k2, b.cols() / cfg.k3);
    let mut blocks = vec![vec![MatrixFq::zeros(&field, br, bc); cfg.k3]; cfg.k2];
    let mut line = Vec::with_capacity(points.len());
    for u in 0..br {
        for v in 0..bc {
            line.clear();
            for (x, m) in &points {
                line.push((*x, m.get(u, v)));
            }
            let coeffs = field.lagrange_interpolate(&line, needed)?;
            for i in 1..=cfg.k2 {
                for kk in 1..=cfg.k3 {
                    blocks[i - 1][kk - 1].set(u, v, coeffs[(kk - 1) * cfg.k2 + i - 1]);
                }
            }
        }
    }
    // Own-data encoding leaves sum_j R_{i,j} S_{j,k} on each block.
    if cfg.own_data {
        for i in 0..cfg.k2 {
            for kk in 0..cfg.k3 {
                for j in 0..cfg.t {
                    let corr = mat_mul(&ka[i][j], &kb[j][kk])?;
                    blocks[i][kk] = blocks[i][kk].sub(&corr)?;
                }
            }
        }
    }
    let rows: Vec<MatrixFq> = blocks
        .iter()
        .map(|row| concat_cols(row))
        .collect::<Result<_>>()?;
    let c = concat_rows(&rows)?;
    net.note_output_symbols(c.symbols());
    net.straggler = Some(StragglerReport {
        failed: failed.iter().copied().collect(),
        complete_groups: points.len(),
        group_threshold: cfg.group_recovery_threshold(),
        worst_case_threshold: worst_case_threshold(
            net.num_servers(),
            cfg.k1,
            cfg.t,
            cfg.k2,
            cfg.k3,
        ),
    });
    Ok(c)
}

/// Serializable protocol selector for CLI runs and replay.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum ProtocolDescriptor {
    Sdmm { t: usize, own_data: bool },
    Chain { t: usize },
    Straggler { config: StragglerConfig, failed: Vec<usize> },
    Invert { t: usize },
    Power { t: usize, r: u64 },
    Solve { t: usize },
    OptimalPipeline { t: usize },
}

/// Dispatches a descriptor against a network and input list.
pub fn run_protocol(
    net: &mut SimNet,
    desc: &ProtocolDescriptor,
    inputs: &[MatrixFq],
) -> Result<MatrixFq> {
    let need = |n: usize| -> Result<()> {
        if inputs.len() < n {
            Err(Error::InvalidParams(format!(
                "protocol needs {n} input matrices, got {}",
                inputs.len()
            )))
        } else {
            Ok(())
        }
    };
    match desc {
        ProtocolDescriptor::Sdmm { t, own_data } => {
            need(2)?;
            if *own_data {
                sdmm2_own_data(net, &inputs[0], &inputs[1], *t)
            } else {
                sdmm2(net, &inputs[0], &inputs[1], *t)
            }
        }
        ProtocolDescriptor::Chain { t } => {
            need(2)?;
            chain_multiply(net, inputs, *t)
        }
        ProtocolDescriptor::Straggler { config, failed } => {
            need(2)?;
            let failed: BTreeSet<usize> = failed.iter().copied().collect();
            straggler_sdmm(net, &inputs[0], &inputs[1], config, &failed)
        }
        ProtocolDescriptor::Invert { t } => {
            need(1)?;
            masked_inverse(net, &inputs[0], *t)
        }
        ProtocolDescriptor::Power { t, r } => {
            need(1)?;
            exponentiate(net, &inputs[0], *r, *t)
        }
        ProtocolDescriptor::Solve { t } => {
            need(2)?;
            solve_linear(net, &inputs[0], &inputs[1], *t)
        }
        ProtocolDescriptor::OptimalPipeline { t } => {
            need(2)?;
            optimal_cost_pipeline(net, &inputs[0], &inputs[1], *t)
        }
    }
}

/// Default betas wrapper so CLI code can build a config in one call.
pub fn straggler_config(
    field: &crate::field::FieldSpec,
    k1: usize,
    k2: usize,
    k3: usize,
    t: usize,
    n2: usize,
    own_data: bool,
) -> Result<StragglerConfig> {
    Ok(StragglerConfig {
        k1,
        k2,
        k3,
        t,
        n2,
        betas: default_betas(field, n2)?,
        own_data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldSpec;
    use crate::simnet::build_network;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn f29() -> FieldSpec {
        FieldSpec::new(29).unwrap()
    }

    fn net7(seed: u64) -> SimNet {
        build_network(2, 7, &f29(), seed)
    }

    fn rand_mat(field: &FieldSpec, r: usize, c: usize, seed: u64) -> MatrixFq {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        MatrixFq::random(field, r, c, &mut rng)
    }

    fn rand_invertible(field: &FieldSpec, d: usize, seed: u64) -> MatrixFq {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let ident = MatrixFq::identity(field, d);
        loop {
            let m = MatrixFq::random(field, d, d, &mut rng);
            if plaintext_solve(&m, &ident).is_ok() {
                return m;
            }
        }
    }

    #[test]
    fn sdmm2_matches_oracle_and_costs() {
        let field = f29();
        let a = rand_mat(&field, 2, 6, 1);
        let b = rand_mat(&field, 6, 2, 2);
        let mut net = net7(11);
        let c = sdmm2(&mut net, &a, &b, 2).unwrap();
        assert_eq!(c, mat_mul(&a, &b).unwrap());
        let report = net.cost_report();
        assert_eq!(report.chi_ul.unwrap(), Ratio::new(7, 3));
        // No server talks to another server in the basic scheme.
        assert_eq!(report.interserver_symbols, 0);
        assert_eq!(report.upload_symbols, 7 * (2 * 6 / 3 + 6 * 2 / 3));
        assert_eq!(report.rounds.computation_rounds, 1);
    }

    #[test]
    fn sdmm2_t_zero_is_plain_coded_multiplication() {
        let field = f29();
        let a = rand_mat(&field, 2, 7, 3);
        let b = rand_mat(&field, 7, 2, 4);
        let mut net = net7(12);
        let c = sdmm2(&mut net, &a, &b, 0).unwrap();
        assert_eq!(c, mat_mul(&a, &b).unwrap());
        assert_eq!(net.cost_report().chi_ul.unwrap(), Ratio::new(1, 1));
    }

    #[test]
    fn sdmm2_rejects_bad_params() {
        let field = f29();
        let a = rand_mat(&field, 2, 6, 5);
        let b = rand_mat(&field, 6, 2, 6);
        let a7 = rand_mat(&field, 2, 7, 5);
        let b7 = rand_mat(&field, 7, 2, 6);
        let mut net = net7(13);
        assert!(matches!(
            sdmm2(&mut net, &a7, &b7, 2),
            Err(Error::IndivisibleDimension { dim: 7, by: 3 })
        ));
        let mut net = net7(13);
        assert!(matches!(
            sdmm2(&mut net, &a, &b, 4),
            Err(Error::InvalidParams(_))
        ));
        let b_bad = rand_mat(&field, 5, 2, 7);
        let mut net = net7(13);
        assert!(matches!(
            sdmm2(&mut net, &a, &b_bad, 2),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn sdmm2_deterministic_per_seed() {
        let field = f29();
        let a = rand_mat(&field, 2, 6, 8);
        let b = rand_mat(&field, 6, 2, 9);
        let run = |seed| {
            let mut net = net7(seed);
            let c = sdmm2(&mut net, &a, &b, 2).unwrap();
            (c, net.log().to_json(), net.cost_report().to_json())
        };
        assert_eq!(run(99), run(99));
        // Different seed, same result, different transcript payloads are
        // possible but the result never changes.
        assert_eq!(run(99).0, run(100).0);
    }

    #[test]
    fn own_data_matches_oracle_and_costs() {
        let field = f29();
        let a = rand_mat(&field, 2, 10, 10);
        let b = rand_mat(&field, 10, 2, 11);
        let mut net = net7(14);
        let c = sdmm2_own_data(&mut net, &a, &b, 2).unwrap();
        assert_eq!(c, mat_mul(&a, &b).unwrap());
        assert_eq!(net.cost_report().chi_ul.unwrap(), Ratio::new(7, 5));
    }

    #[test]
    fn own_data_t_zero_agrees_with_sdmm2() {
        let field = f29();
        let a = rand_mat(&field, 2, 7, 12);
        let b = rand_mat(&field, 7, 2, 13);
        let mut n1 = net7(15);
        let mut n2 = net7(15);
        assert_eq!(
            sdmm2_own_data(&mut n1, &a, &b, 0).unwrap(),
            sdmm2(&mut n2, &a, &b, 0).unwrap()
        );
    }

    #[test]
    fn usersecure_round_costs_and_decodes() {
        let field = f29();
        let a = rand_mat(&field, 2, 6, 16);
        let b = rand_mat(&field, 6, 5, 17);
        let mut net = net7(16);
        let products = sdmm2_products(&mut net, &a, &b, 2).unwrap();
        let c_shares = usersecure_round(&mut net, &products, 2).unwrap();
        assert_eq!(c_shares[0].params, ShareParams::new(7, 5, 2, Side::Left).unwrap());
        let delivered = deliver_to_user(&mut net, &c_shares);
        let c = reconstruct_matrix(&delivered).unwrap();
        assert_eq!(c, mat_mul(&a, &b).unwrap());
        net.note_output_symbols(c.symbols());
        let report = net.cost_report();
        assert_eq!(report.chi_dl.unwrap(), Ratio::new(7, 5));
        assert_eq!(report.rounds.communication_rounds, 1);
    }

    #[test]
    fn chain_matches_oracle() {
        let field = f29();
        let mats: Vec<MatrixFq> = (0..3).map(|i| rand_mat(&field, 3, 3, 20 + i)).collect();
        let mut net = net7(17);
        let c = chain_multiply(&mut net, &mats, 2).unwrap();
        let oracle = mat_mul(&mat_mul(&mats[0], &mats[1]).unwrap(), &mats[2]).unwrap();
        assert_eq!(c, oracle);
        let report = net.cost_report();
        assert_eq!(report.chi_ul.unwrap(), Ratio::new(7, 3));
        assert_eq!(report.rounds.computation_rounds, 2);
        assert_eq!(report.rounds.communication_rounds, 1);
        assert_eq!(
            report.interserver_per_server_per_round,
            vec![Ratio::new(6, 3)]
        );
    }

    #[test]
    fn chain_of_two_agrees_with_sdmm2() {
        let field = f29();
        let a = rand_mat(&field, 2, 6, 23);
        let b = rand_mat(&field, 6, 2, 24);
        let mut n1 = net7(18);
        let mut n2 = net7(18);
        assert_eq!(
            chain_multiply(&mut n1, &[a.clone(), b.clone()], 2).unwrap(),
            sdmm2(&mut n2, &a, &b, 2).unwrap()
        );
    }

    #[test]
    fn convert_left_to_right_reconstructs() {
        let field = f29();
        let a = rand_mat(&field, 3, 6, 25);
        let mut net = net7(19);
        let mut rng = ChaCha12Rng::seed_from_u64(26);
        let (la, _) = make_left_shares(&a, 7, 3, 2, &mut rng, "a").unwrap();
        let ra = convert_shares(&mut net, &la, 3, 2, Side::Right).unwrap();
        assert_eq!(ra[0].params, ShareParams::new(7, 3, 2, Side::Right).unwrap());
        assert_eq!(reconstruct_matrix(&ra).unwrap(), a);
    }

    #[test]
    fn convert_legality() {
        let field = f29();
        let a = rand_mat(&field, 3, 6, 27);
        let mut net = net7(20);
        let mut rng = ChaCha12Rng::seed_from_u64(28);
        let (la, _) = make_left_shares(&a, 7, 3, 2, &mut rng, "a").unwrap();
        assert!(matches!(
            convert_shares(&mut net, &la, 2, 2, Side::Left),
            Err(Error::IllegalConversion(_))
        ));
        // K1 = 1 left shares may convert directly to left shares.
        let (l1, _) = make_left_shares(&a, 7, 1, 2, &mut rng, "a").unwrap();
        let l3 = convert_shares(&mut net, &l1, 3, 2, Side::Left).unwrap();
        assert_eq!(reconstruct_matrix(&l3).unwrap(), a);
    }

    #[test]
    fn converted_shares_feed_multiplication() {
        // Right-converted shares of B act as the right operand of a
        // secure multiplication against left shares of A.
        let field = f29();
        let a = rand_mat(&field, 2, 6, 29);
        let b = rand_mat(&field, 6, 3, 30);
        let mut net = net7(21);
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let (la, _) = make_left_shares(&a, 7, 3, 2, &mut rng, "a").unwrap();
        let (lb, _) = make_left_shares(&b, 7, 3, 2, &mut rng, "b").unwrap();
        let rb = convert_shares(&mut net, &lb, 3, 2, Side::Right).unwrap();
        let prod = secure_mul(&mut net, &la, &rb, 3, 2).unwrap();
        let delivered = deliver_to_user(&mut net, &prod);
        assert_eq!(
            reconstruct_matrix(&delivered).unwrap(),
            mat_mul(&a, &b).unwrap()
        );
    }

    #[test]
    fn transpose_shares_reconstructs() {
        let field = f29();
        let a = rand_mat(&field, 4, 6, 32);
        let mut net = net7(22);
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let (la, _) = make_left_shares(&a, 7, 3, 2, &mut rng, "a").unwrap();
        let lt = transpose_shares(&mut net, &la, 2, 2).unwrap();
        assert_eq!(reconstruct_matrix(&lt).unwrap(), a.transpose());
    }

    #[test]
    fn transpose_symmetric_and_involution() {
        let field = f29();
        let base = rand_mat(&field, 6, 6, 34);
        let sym = base.add(&base.transpose()).unwrap();
        let mut net = net7(23);
        let mut rng = ChaCha12Rng::seed_from_u64(35);
        let (ls, _) = make_left_shares(&sym, 7, 3, 2, &mut rng, "s").unwrap();
        let lt = transpose_shares(&mut net, &ls, 3, 2).unwrap();
        assert_eq!(reconstruct_matrix(&lt).unwrap(), sym);
        // Applying transpose twice returns the original matrix.
        let back = transpose_shares(&mut net, &lt, 3, 2).unwrap();
        assert_eq!(reconstruct_matrix(&back).unwrap(), sym);
        let plain = rand_mat(&field, 6, 6, 36);
        let (lp, _) = make_left_shares(&plain, 7, 3, 2, &mut rng, "p").unwrap();
        let once = transpose_shares(&mut net, &lp, 3, 2).unwrap();
        let twice = transpose_shares(&mut net, &once, 3, 2).unwrap();
        assert_eq!(reconstruct_matrix(&twice).unwrap(), plain);
    }

    #[test]
    fn exponentiate_r1_identity_path() {
        let field = f29();
        let a = rand_mat(&field, 3, 3, 37);
        let mut net = net7(24);
        assert_eq!(exponentiate(&mut net, &a, 1, 2).unwrap(), a);
        assert_eq!(net.rounds.computation_rounds, 0);
        let mut net = net7(24);
        assert!(matches!(
            exponentiate(&mut net, &a, 0, 2),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn exponentiate_matches_oracle() {
        let field = f29();
        let a = rand_mat(&field, 3, 3, 38);
        let mut oracle = a.clone();
        for _ in 1..5 {
            oracle = mat_mul(&oracle, &a).unwrap();
        }
        let mut net = net7(25);
        assert_eq!(exponentiate(&mut net, &a, 5, 2).unwrap(), oracle);
        // 5 = 101b: two squarings plus one accumulator multiply.
        assert_eq!(net.rounds.computation_rounds, 3);
    }

    #[test]
    fn exponentiate_round_formula() {
        let field = f29();
        let a = rand_mat(&field, 3, 3, 39);
        for r in 1..=64u64 {
            let mut net = net7(26);
            let got = exponentiate(&mut net, &a, r, 2).unwrap();
            let mut oracle = a.clone();
            for _ in 1..r {
                oracle = mat_mul(&oracle, &a).unwrap();
            }
            assert_eq!(got, oracle, "value at r={r}");
            let expected = 63 - r.leading_zeros() + r.count_ones() - 1;
            assert_eq!(
                net.rounds.computation_rounds, expected,
                "round count at r={r}"
            );
        }
    }

    #[test]
    fn masked_inverse_matches_oracle() {
        let field = f29();
        let a = rand_invertible(&field, 3, 40);
        let mut net = net7(27);
        let inv = masked_inverse(&mut net, &a, 2).unwrap();
        assert_eq!(
            mat_mul(&inv, &a).unwrap(),
            MatrixFq::identity(&field, 3)
        );
        assert_eq!(net.cost_report().chi_ul.unwrap(), Ratio::new(7, 3));
    }

    #[test]
    fn masked_inverse_identity_and_singular() {
        let field = f29();
        let ident = MatrixFq::identity(&field, 3);
        let mut net = net7(28);
        assert_eq!(masked_inverse(&mut net, &ident, 2).unwrap(), ident);
        let singular = MatrixFq::new(&field, 3, 3, vec![1, 2, 3, 2, 4, 6, 0, 1, 1]);
        let mut net = net7(28);
        assert_eq!(
            masked_inverse(&mut net, &singular, 2).map(|_| ()),
            Err(Error::SingularMatrix)
        );
    }

    #[test]
    fn newton_fixed_point_and_residual() {
        let field = f29();
        let a = rand_invertible(&field, 3, 41);
        let ident = MatrixFq::identity(&field, 3);
        let a_inv = plaintext_solve(&a, &ident).unwrap();
        // X0 = A^{-1} is a fixed point of the iteration.
        let mut net = net7(29);
        assert_eq!(
            newton_inverse_rounds(&mut net, &a, &a_inv, 3, 2).unwrap(),
            a_inv
        );
        // I - A X_1 = (I - A X_0)^2 for arbitrary X0.
        let x0 = rand_mat(&field, 3, 3, 42);
        let mut net = net7(30);
        let x1 = newton_inverse_rounds(&mut net, &a, &x0, 1, 2).unwrap();
        let e0 = ident.sub(&mat_mul(&a, &x0).unwrap()).unwrap();
        let e1 = ident.sub(&mat_mul(&a, &x1).unwrap()).unwrap();
        assert_eq!(e1, mat_mul(&e0, &e0).unwrap());
        // And k = 3 squares the residual three times.
        let mut net = net7(31);
        let x3 = newton_inverse_rounds(&mut net, &a, &x0, 3, 2).unwrap();
        let mut e = e0.clone();
        for _ in 0..3 {
            e = mat_mul(&e, &e).unwrap();
        }
        assert_eq!(ident.sub(&mat_mul(&a, &x3).unwrap()).unwrap(), e);
    }

    #[test]
    fn newton_nilpotent_residual_converges_in_one_step() {
        let field = f29();
        let a = rand_invertible(&field, 3, 43);
        let ident = MatrixFq::identity(&field, 3);
        let a_inv = plaintext_solve(&a, &ident).unwrap();
        // E with E^2 = 0; X0 = A^{-1}(I - E) gives I - A X0 = E.
        let mut e = MatrixFq::zeros(&field, 3, 3);
        e.set(0, 1, Fe(1));
        let x0 = mat_mul(&a_inv, &ident.sub(&e).unwrap()).unwrap();
        let mut net = net7(32);
        assert_eq!(
            newton_inverse_rounds(&mut net, &a, &x0, 1, 2).unwrap(),
            a_inv
        );
    }

    #[test]
    fn solve_linear_matches_plaintext() {
        let field = f29();
        let a = rand_invertible(&field, 3, 44);
        let b = rand_mat(&field, 3, 2, 45);
        let mut net = net7(33);
        assert_eq!(
            solve_linear(&mut net, &a, &b, 2).unwrap(),
            plaintext_solve(&a, &b).unwrap()
        );
        // B = I reduces to inversion.
        let ident = MatrixFq::identity(&field, 3);
        let mut net = net7(34);
        assert_eq!(
            solve_linear(&mut net, &a, &ident, 2).unwrap(),
            plaintext_solve(&a, &ident).unwrap()
        );
        let singular = MatrixFq::new(&field, 3, 3, vec![1, 2, 3, 2, 4, 6, 0, 1, 1]);
        let mut net = net7(35);
        assert_eq!(
            solve_linear(&mut net, &singular, &b, 2).map(|_| ()),
            Err(Error::SingularMatrix)
        );
    }

    #[test]
    fn polynomial_identity_and_example() {
        let field = f29();
        let a1 = rand_invertible(&field, 3, 46);
        let a2 = rand_mat(&field, 3, 3, 47);
        let a3 = rand_invertible(&field, 3, 48);
        let inputs = [a1.clone(), a2, a3];
        let id_expr = Expr::Input(0);
        let mut net = net7(36);
        assert_eq!(
            eval_matrix_polynomial(&mut net, &id_expr, &inputs, 2).unwrap(),
            a1
        );
        // A1^2 A2 + 2 A3^{-1}
        let expr = Expr::Add(
            Box::new(Expr::Mul(
                Box::new(Expr::Pow(Box::new(Expr::Input(0)), 2)),
                Box::new(Expr::Input(1)),
            )),
            Box::new(Expr::Scale(2, Box::new(Expr::Inverse(Box::new(Expr::Input(2)))))),
        );
        let mut net = net7(37);
        assert_eq!(
            eval_matrix_polynomial(&mut net, &expr, &inputs, 2).unwrap(),
            eval_plain(&expr, &inputs).unwrap()
        );
    }

    #[test]
    fn polynomial_regression_estimate() {
        // (X^T X)^{-1} X^T Y with X tall: the least-squares normal
        // equations evaluated entirely through the secure protocols.
        let field = f29();
        let mut rng = ChaCha12Rng::seed_from_u64(49);
        let (x, y) = loop {
            let x = MatrixFq::random(&field, 6, 3, &mut rng);
            let y = MatrixFq::random(&field, 6, 3, &mut rng);
            let xtx = mat_mul(&x.transpose(), &x).unwrap();
            if plaintext_solve(&xtx, &MatrixFq::identity(&field, 3)).is_ok() {
                break (x, y);
            }
        };
        let expr = Expr::Mul(
            Box::new(Expr::Mul(
                Box::new(Expr::Inverse(Box::new(Expr::Mul(
                    Box::new(Expr::Transpose(Box::new(Expr::Input(0)))),
                    Box::new(Expr::Input(0)),
                )))),
                Box::new(Expr::Transpose(Box::new(Expr::Input(0)))),
            )),
            Box::new(Expr::Input(1)),
        );
        let inputs = [x, y];
        let mut net = net7(38);
        assert_eq!(
            eval_matrix_polynomial(&mut net, &expr, &inputs, 2).unwrap(),
            eval_plain(&expr, &inputs).unwrap()
        );
    }

    #[test]
    fn optimal_pipeline_costs_and_result() {
        let field = f29();
        let a = rand_mat(&field, 3, 15, 50);
        let b = rand_mat(&field, 15, 5, 51);
        let mut net = net7(39);
        let c = optimal_cost_pipeline(&mut net, &a, &b, 2).unwrap();
        assert_eq!(c, mat_mul(&a, &b).unwrap());
        let report = net.cost_report();
        assert_eq!(report.chi_ul.unwrap(), Ratio::new(7, 5));
        assert_eq!(report.chi_dl.unwrap(), Ratio::new(7, 5));
    }

    #[test]
    fn optimal_pipeline_t_zero_costs_one() {
        let field = f29();
        let a = rand_mat(&field, 2, 7, 52);
        let b = rand_mat(&field, 7, 7, 53);
        let mut net = net7(40);
        let c = optimal_cost_pipeline(&mut net, &a, &b, 0).unwrap();
        assert_eq!(c, mat_mul(&a, &b).unwrap());
        let report = net.cost_report();
        assert_eq!(report.chi_ul.unwrap(), Ratio::new(1, 1));
        assert_eq!(report.chi_dl.unwrap(), Ratio::new(1, 1));
    }

    fn straggler_cfg(field: &FieldSpec) -> StragglerConfig {
        straggler_config(field, 2, 2, 2, 1, 5, false).unwrap()
    }

    #[test]
    fn straggler_survives_a_full_group() {
        let field = f29();
        let a = rand_mat(&field, 4, 4, 54);
        let b = rand_mat(&field, 4, 4, 55);
        let cfg = straggler_cfg(&field);
        assert_eq!(cfg.n1(), 4);
        assert_eq!(cfg.group_recovery_threshold(), 16);
        let mut net = build_network(2, 20, &field, 41);
        let failed: BTreeSet<usize> = [1, 2, 3, 4].into();
        let c = straggler_sdmm(&mut net, &a, &b, &cfg, &failed).unwrap();
        assert_eq!(c, mat_mul(&a, &b).unwrap());
        let report = net.cost_report();
        let s = report.straggler.as_ref().unwrap();
        assert_eq!(s.complete_groups, 4);
        assert_eq!(s.group_threshold, 16);
        assert_eq!(s.worst_case_threshold, 19);
    }

    #[test]
    fn straggler_fails_without_enough_groups() {
        let field = f29();
        let a = rand_mat(&field, 4, 4, 56);
        let b = rand_mat(&field, 4, 4, 57);
        let cfg = straggler_cfg(&field);
        // One failure inside each of two groups leaves only 3 complete.
        let mut net = build_network(2, 20, &field, 42);
        let failed: BTreeSet<usize> = [1, 5].into();
        assert_eq!(
            straggler_sdmm(&mut net, &a, &b, &cfg, &failed).map(|_| ()),
            Err(Error::InsufficientGroups { needed: 4, got: 3 })
        );
    }

    #[test]
    fn straggler_degenerates_to_sdmm2() {
        let field = f29();
        let a = rand_mat(&field, 2, 6, 58);
        let b = rand_mat(&field, 6, 2, 59);
        let cfg = StragglerConfig {
            k1: 3,
            k2: 1,
            k3: 1,
            t: 2,
            n2: 1,
            betas: vec![Fe(1)],
            own_data: false,
        };
        let mut net = net7(43);
        let c = straggler_sdmm(&mut net, &a, &b, &cfg, &BTreeSet::new()).unwrap();
        assert_eq!(c, mat_mul(&a, &b).unwrap());
    }

    #[test]
    fn straggler_own_data_variant() {
        let field = f29();
        let a = rand_mat(&field, 4, 4, 60);
        let b = rand_mat(&field, 4, 4, 61);
        // Own-data groups are smaller: N1 = K1 + T = 4, which divides q-1.
        let cfg = straggler_config(&field, 2, 2, 2, 2, 5, true).unwrap();
        assert_eq!(cfg.n1(), 4);
        let mut net = build_network(2, 20, &field, 44);
        let c = straggler_sdmm(&mut net, &a, &b, &cfg, &BTreeSet::new()).unwrap();
        assert_eq!(c, mat_mul(&a, &b).unwrap());
    }

    #[test]
    fn run_protocol_dispatch_round_trip() {
        let field = f29();
        let a = rand_mat(&field, 2, 6, 62);
        let b = rand_mat(&field, 6, 2, 63);
        let desc = ProtocolDescriptor::Sdmm { t: 2, own_data: false };
        let json = serde_json::to_string(&desc).unwrap();
        let back: ProtocolDescriptor = serde_json::from_str(&json).unwrap();
        let mut net = net7(45);
        let c = run_protocol(&mut net, &back, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(c, mat_mul(&a, &b).unwrap());
    }
}
