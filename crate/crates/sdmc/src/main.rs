//! Command-line front end: runs the secure protocols on generated or
//! file-backed matrices, prints exact cost reports, and exposes the
//! audit and cost-comparison tables.
//!
//! Exit codes: 0 success, 2 usage/parameter error, 3 protocol error,
//! 4 straggler-unrecoverable, 5 singular matrix.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use sdmc::audit::{
    cost_formulas, secrecy_exhaustive, secrecy_statistical,
    secrecy_user_exhaustive, user_raw_leakage_bits,
};
use sdmc::error::Error;
use sdmc::field::FieldSpec;
use sdmc::matrix::{mat_mul, MatrixFq};
use sdmc::protocols::{
    chain_multiply, eval_matrix_polynomial, exponentiate, masked_inverse, optimal_cost_pipeline,
    sdmm2, sdmm2_own_data, solve_linear, straggler_config, straggler_sdmm, Expr,
};
use sdmc::simnet::{build_network, SimNet};

#[derive(Parser)]
#[command(
    name = "sdmc",
    about = "Secure distributed matrix computation over prime fields",
    long_about = "Runs secure multiparty matrix protocols on a deterministic \
simulated network and reports exact communication costs. When --q is omitted \
the field is chosen automatically: the smallest prime q >= 2^31 with N | (q-1), \
so N-th roots of unity exist."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Number of servers
    #[arg(long, default_value_t = 7)]
    n: usize,
    /// Collusion tolerance
    #[arg(long, default_value_t = 2)]
    t: usize,
    /// Field modulus (prime, with the required root of unity); chosen
    /// automatically when omitted
    #[arg(long)]
    q: Option<u64>,
    /// RNG seed; fixed seeds give byte-identical outputs
    #[arg(long, env = "SDMC_SEED", default_value_t = 0)]
    seed: u64,
    /// Generate random input matrices with the given shapes, e.g. 2x6,6x2
    #[arg(long, value_delimiter = ',')]
    gen: Vec<String>,
    /// Input matrix JSON files (loaded before any --gen matrices)
    #[arg(long = "in", value_name = "FILE")]
    inputs: Vec<PathBuf>,
    /// Directory for result.json and cost_report.json artifacts
    #[arg(long)]
    out: Option<PathBuf>,
    /// Zero-pad the inner dimension up to the next multiple of K
    #[arg(long)]
    pad: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Secure two-matrix multiplication (upload cost N/(N-2T))
    Sdmm {
        #[command(flatten)]
        common: Common,
        /// Sources own their data: K = N-T with user-side key subtraction
        #[arg(long)]
        own_data: bool,
        /// Add the downlink-secure round and decode at K = N-T
        #[arg(long)]
        optimal: bool,
    },
    /// Secure chain product of three or more matrices
    Chain {
        #[command(flatten)]
        common: Common,
    },
    /// Straggler-tolerant multiplication with grouped bivariate encoding
    Straggler {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2)]
        k1: usize,
        #[arg(long, default_value_t = 2)]
        k2: usize,
        #[arg(long, default_value_t = 2)]
        k3: usize,
        /// Number of server groups
        #[arg(long, default_value_t = 5)]
        n2: usize,
        #[arg(long)]
        own_data: bool,
        /// Server ids that fail to respond, e.g. --fail 1,5,9
        #[arg(long, value_delimiter = ',')]
        fail: Vec<usize>,
        /// Fail every server in one group
        #[arg(long)]
        fail_group: Option<usize>,
    },
    /// Secure matrix inversion via a public random mask
    Invert {
        #[command(flatten)]
        common: Common,
    },
    /// Secure matrix power A^r
    Power {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        r: u64,
    },
    /// Secure linear solve A X = B
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a matrix expression securely, e.g. --expr "A0^2*A1+2*A2^-1"
    Polyeval {
        #[command(flatten)]
        common: Common,
        /// Grammar: matrices A0, A1, ...; + * ( ); ^r power; ^-1 inverse;
        /// ' transpose; integer literals as scalar coefficients
        #[arg(long)]
        expr: String,
    },
    /// Run the secrecy audit suite and print a verdict table
    Audit,
    /// Print the upload/download cost comparison table
    Costs {
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Largest collusion tolerance listed
        #[arg(long, default_value_t = 9)]
        t_max: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParams(_)
        | Error::InvalidMatrixFile(_)
        | Error::ParamInvariant(_)
        | Error::IndivisibleDimension { .. }
        | Error::DimensionMismatch(_)
        | Error::FieldMismatch(_, _)
        | Error::NotPrime(_)
        | Error::OrderNotDividing { .. }
        | Error::NonDistinctBetas
        | Error::IllegalConversion(_) => 2,
        Error::InsufficientGroups { .. } => 4,
        Error::SingularMatrix | Error::MaskRetriesExhausted(_) => 5,
        _ => 3,
    }
}

/// Smallest prime at least 2^31 admitting N-th roots of unity.
fn auto_field(n: usize) -> Result<FieldSpec, Error> {
    FieldSpec::find_field(n as u64, 1 << 31)
}

fn parse_shape(s: &str) -> Result<(usize, usize), Error> {
    let parts: Vec<&str> = s.split(['x', 'X']).collect();
    let err = || Error::InvalidParams(format!("bad shape {s:?}, expected RxC"));
    if parts.len() != 2 {
        return Err(err());
    }
    let r = parts[0].trim().parse().map_err(|_| err())?;
    let c = parts[1].trim().parse().map_err(|_| err())?;
    Ok((r, c))
}

fn load_matrix(path: &Path) -> Result<MatrixFq, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidMatrixFile(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidMatrixFile(format!("{}: {e}", path.display())))?;
    MatrixFq::from_json(&value)
}

/// Resolves the field and assembles the input list: files first, then
/// generated matrices drawn from a dedicated RNG stream.
fn gather_inputs(common: &Common, root_order: usize) -> Result<(FieldSpec, Vec<MatrixFq>), Error> {
    let mut mats: Vec<MatrixFq> = common
        .inputs
        .iter()
        .map(|p| load_matrix(p))
        .collect::<Result<_, _>>()?;
    let field = match (common.q, mats.first()) {
        (Some(q), _) => FieldSpec::new(q)?,
        (None, Some(m)) => m.field().clone(),
        (None, None) => auto_field(root_order)?,
    };
    for m in &mats {
        if m.field().q() != field.q() {
            return Err(Error::FieldMismatch(field.q(), m.field().q()));
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(common.seed);
    rng.set_stream(0xF00D);
    for shape in &common.gen {
        let (r, c) = parse_shape(shape)?;
        mats.push(MatrixFq::random(&field, r, c, &mut rng));
    }
    if mats.is_empty() {
        return Err(Error::InvalidParams(
            "no inputs: pass --in files or --gen shapes".into(),
        ));
    }
    Ok((field, mats))
}

/// Pads the shared inner dimension of a product pair up to a multiple
/// of k by appending zero columns/rows; the product is unchanged.
fn pad_inner(a: &MatrixFq, b: &MatrixFq, k: usize) -> Result<(MatrixFq, MatrixFq), Error> {
    let inner = a.cols();
    if inner != b.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} times {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let target = inner.div_ceil(k) * k;
    if target == inner {
        return Ok((a.clone(), b.clone()));
    }
    let field = a.field();
    let mut pa = MatrixFq::zeros(field, a.rows(), target);
    for r in 0..a.rows() {
        for c in 0..a.cols() {
            pa.set(r, c, a.get(r, c));
        }
    }
    let mut pb = MatrixFq::zeros(field, target, b.cols());
    for r in 0..b.rows() {
        for c in 0..b.cols() {
            pb.set(r, c, b.get(r, c));
        }
    }
    Ok((pa, pb))
}

fn ratio_str(r: Option<Ratio<u64>>) -> String {
    match r {
        Some(r) => format!("{r} (= {:.4})", *r.numer() as f64 / *r.denom() as f64),
        None => "-".into(),
    }
}

fn emit(net: &SimNet, result: &MatrixFq, out: &Option<PathBuf>) -> Result<(), Error> {
    let report = net.cost_report();
    println!("result: {}x{} over F_{}", result.rows(), result.cols(), result.field().q());
    println!(
        "symbols: upload {}, download {}, inter-server {}",
        report.upload_symbols, report.download_symbols, report.interserver_symbols
    );
    println!("chi_ul: {}", ratio_str(report.chi_ul));
    println!("chi_dl: {}", ratio_str(report.chi_dl));
    println!(
        "rounds: {} computation, {} communication",
        report.rounds.computation_rounds, report.rounds.communication_rounds
    );
    if let Some(s) = &report.straggler {
        println!(
            "stragglers: {:?} failed, {} complete groups, group threshold {}, worst-case threshold {}",
            s.failed, s.complete_groups, s.group_threshold, s.worst_case_threshold
        );
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::InvalidParams(format!("cannot create {}: {e}", dir.display())))?;
        let write = |name: &str, value: serde_json::Value| -> Result<(), Error> {
            let path = dir.join(name);
            std::fs::write(&path, serde_json::to_string_pretty(&value).unwrap())
                .map_err(|e| Error::InvalidParams(format!("cannot write {}: {e}", path.display())))
        };
        write("result.json", result.to_json())?;
        write("cost_report.json", report.to_json())?;
        println!("artifacts written to {}", dir.display());
    }
    Ok(())
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Sdmm { common, own_data, optimal } => {
            let (field, mats) = gather_inputs(&common, common.n)?;
            let [a, b] = two(&mats)?;
            let k = if own_data || optimal { common.n - common.t } else { common.n.saturating_sub(2 * common.t) };
            let (a, b) = if common.pad { pad_inner(a, b, k.max(1))? } else { (a.clone(), b.clone()) };
            let mut net = build_network(2, common.n, &field, common.seed);
            let c = if optimal {
                optimal_cost_pipeline(&mut net, &a, &b, common.t)?
            } else if own_data {
                sdmm2_own_data(&mut net, &a, &b, common.t)?
            } else {
                sdmm2(&mut net, &a, &b, common.t)?
            };
            debug_assert_eq!(c, mat_mul(&a, &b)?);
            emit(&net, &c, &common.out)
        }
        Command::Chain { common } => {
            let (field, mats) = gather_inputs(&common, common.n)?;
            let mut net = build_network(mats.len(), common.n, &field, common.seed);
            let c = chain_multiply(&mut net, &mats, common.t)?;
            emit(&net, &c, &common.out)
        }
        Command::Straggler {
            common,
            k1,
            k2,
            k3,
            n2,
            own_data,
            fail,
            fail_group,
        } => {
            let n1 = if own_data { k1 + common.t } else { k1 + 2 * common.t };
            let (field, mats) = gather_inputs(&common, n1)?;
            let [a, b] = two(&mats)?;
            let cfg = straggler_config(&field, k1, k2, k3, common.t, n2, own_data)?;
            let mut failed: BTreeSet<usize> = fail.into_iter().collect();
            if let Some(g) = fail_group {
                if g == 0 || g > n2 {
                    return Err(Error::InvalidParams(format!("group {g} out of range 1..={n2}")));
                }
                failed.extend((g - 1) * n1 + 1..=g * n1);
            }
            let servers = common.n.max(n1 * n2);
            let mut net = build_network(2, servers, &field, common.seed);
            let c = straggler_sdmm(&mut net, a, b, &cfg, &failed)?;
            emit(&net, &c, &common.out)
        }
        Command::Invert { common } => {
            let (field, mats) = gather_inputs(&common, common.n)?;
            let mut net = build_network(1, common.n, &field, common.seed);
            let c = masked_inverse(&mut net, &mats[0], common.t)?;
            emit(&net, &c, &common.out)
        }
        Command::Power { common, r } => {
            let (field, mats) = gather_inputs(&common, common.n)?;
            let mut net = build_network(1, common.n, &field, common.seed);
            let c = exponentiate(&mut net, &mats[0], r, common.t)?;
            emit(&net, &c, &common.out)
        }
        Command::Solve { common } => {
            let (field, mats) = gather_inputs(&common, common.n)?;
            let [a, b] = two(&mats)?;
            let mut net = build_network(2, common.n, &field, common.seed);
            let c = solve_linear(&mut net, a, b, common.t)?;
            emit(&net, &c, &common.out)
        }
        Command::Polyeval { common, expr } => {
            let (field, mats) = gather_inputs(&common, common.n)?;
            let tree = parse_expr(&expr)?;
            let mut net = build_network(mats.len(), common.n, &field, common.seed);
            let c = eval_matrix_polynomial(&mut net, &tree, &mats, common.t)?;
            emit(&net, &c, &common.out)
        }
        Command::Audit => cmd_audit(),
        Command::Costs { n, t_max } => cmd_costs(n, t_max),
    }
}

fn two(mats: &[MatrixFq]) -> Result<[&MatrixFq; 2], Error> {
    if mats.len() != 2 {
        return Err(Error::InvalidParams(format!(
            "this protocol needs exactly 2 input matrices, got {}",
            mats.len()
        )));
    }
    Ok([&mats[0], &mats[1]])
}

fn cmd_audit() -> Result<(), Error> {
    let mut all_ok = true;
    let mut row = |name: &str, ok: bool, evidence: String| {
        all_ok &= ok;
        println!("{} {name}: {evidence}", if ok { "PASS" } else { "FAIL" });
    };
    for (n, k, t, q) in [(3, 1, 1, 7u64), (5, 1, 2, 11), (4, 2, 1, 5)] {
        let v = secrecy_exhaustive(n, k, t, q, t)?;
        row(
            &format!("exhaustive secrecy N={n} K={k} T={t} q={q}"),
            v.pass,
            v.evidence,
        );
    }
    let v = secrecy_exhaustive(5, 1, 2, 11, 3)?;
    row(
        "negative control: T+1 colluders must see the input",
        !v.pass,
        if v.pass {
            "collusion beyond T went undetected".into()
        } else {
            "leak detected as expected".into()
        },
    );
    let v = secrecy_statistical(7, 3, 2, 29, 2, 100_000, 7)?;
    row("statistical secrecy N=7 K=3 T=2 q=29", v.pass, v.evidence);
    let v = secrecy_user_exhaustive(5, 1, 11)?;
    row("user secrecy with re-share round N=5 T=1 q=11", v.pass, v.evidence);
    let mi = user_raw_leakage_bits(5, 1, 11)?;
    row(
        "raw response leakage, degenerate 1x1 case",
        mi.abs() < 1e-9,
        format!("measured {mi:.6} bits (formula predicts 0 at 1x1)"),
    );
    if all_ok {
        Ok(())
    } else {
        Err(Error::InvalidParams("audit verdicts include failures".into()))
    }
}

fn cmd_costs(n: usize, t_max: usize) -> Result<(), Error> {
    println!("upload/download cost comparison, N = {n} servers");
    println!(
        "{:>3}  {:>18}  {:>18}  {:>18}  {:>18}",
        "T", "proposed chi_UL", "one-round chi_DL", "MatDot chi_UL", "row-by-col chi_UL"
    );
    for t in 0..=t_max {
        if n <= 2 * t {
            break;
        }
        let k = n - 2 * t;
        let f = cost_formulas(n, t, k, k, k, k)?;
        println!(
            "{t:>3}  {:>18}  {:>18}  {:>18}  {:>18}",
            ratio_str(Some(f.chi_ul_proposed)),
            ratio_str(Some(f.chi_dl_one_round)),
            ratio_str(Some(f.chi_ul_matdot)),
            ratio_str(Some(f.chi_ul_nodehi)),
        );
    }
    Ok(())
}

// --- minimal expression parser -------------------------------------------

struct ExprParser<'a> {
    src: &'a [u8],
    pos: usize,
}

enum Val {
    Scalar(u64),
    Mat(Expr),
}

fn parse_expr(text: &str) -> Result<Expr, Error> {
    let mut p = ExprParser {
        src: text.as_bytes(),
        pos: 0,
    };
    let v = p.sum()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("trailing input"));
    }
    match v {
        Val::Mat(e) => Ok(e),
        Val::Scalar(_) => Err(Error::InvalidParams(
            "expression evaluates to a scalar, not a matrix".into(),
        )),
    }
}

impl<'a> ExprParser<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::InvalidParams(format!("expression parse error at byte {}: {msg}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.src.get(self.pos).is_some_and(|c| c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn number(&mut self) -> Result<u64, Error> {
        self.skip_ws();
        let start = self.pos;
        while self.src.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a number"));
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| self.err("number out of range"))
    }

    fn sum(&mut self) -> Result<Val, Error> {
        let mut acc = self.product()?;
        while self.peek() == Some(b'+') {
            self.pos += 1;
            let rhs = self.product()?;
            acc = match (acc, rhs) {
                (Val::Mat(a), Val::Mat(b)) => Val::Mat(Expr::Add(Box::new(a), Box::new(b))),
                _ => return Err(self.err("+ needs matrix operands")),
            };
        }
        Ok(acc)
    }

    fn product(&mut self) -> Result<Val, Error> {
        let mut acc = self.factor()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            let rhs = self.factor()?;
            acc = match (acc, rhs) {
                (Val::Scalar(c), Val::Scalar(d)) => Val::Scalar(c.wrapping_mul(d)),
                (Val::Scalar(c), Val::Mat(e)) | (Val::Mat(e), Val::Scalar(c)) => {
                    Val::Mat(Expr::Scale(c, Box::new(e)))
                }
                (Val::Mat(a), Val::Mat(b)) => Val::Mat(Expr::Mul(Box::new(a), Box::new(b))),
            };
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Val, Error> {
        let mut v = self.atom()?;
        loop {
            match self.peek() {
                Some(b'\'') => {
                    self.pos += 1;
                    v = match v {
                        Val::Mat(e) => Val::Mat(Expr::Transpose(Box::new(e))),
                        Val::Scalar(_) => return Err(self.err("cannot transpose a scalar")),
                    };
                }
                Some(b'^') => {
                    self.pos += 1;
                    let negative = self.peek() == Some(b'-');
                    if negative {
                        self.pos += 1;
                    }
                    let r = self.number()?;
                    v = match (v, negative, r) {
                        (Val::Mat(e), true, 1) => Val::Mat(Expr::Inverse(Box::new(e))),
                        (Val::Mat(_), true, _) => {
                            return Err(self.err("only ^-1 is supported for inversion"))
                        }
                        (Val::Mat(e), false, r) => {
                            let r = u32::try_from(r).map_err(|_| self.err("power too large"))?;
                            Val::Mat(Expr::Pow(Box::new(e), r))
                        }
                        (Val::Scalar(_), _, _) => {
                            return Err(self.err("powers apply to matrices only"))
                        }
                    };
                }
                _ => return Ok(v),
            }
        }
    }

    fn atom(&mut self) -> Result<Val, Error> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let v = self.sum()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected )"));
                }
                self.pos += 1;
                Ok(v)
            }
            Some(b'A') | Some(b'a') => {
                self.pos += 1;
                let i = self.number()? as usize;
                Ok(Val::Mat(Expr::Input(i)))
            }
            Some(c) if c.is_ascii_digit() => Ok(Val::Scalar(self.number()?)),
            _ => Err(self.err("expected A<i>, a number, or (")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_parse() {
        assert_eq!(parse_shape("2x6").unwrap(), (2, 6));
        assert_eq!(parse_shape("10X3").unwrap(), (10, 3));
        assert!(parse_shape("2x").is_err());
        assert!(parse_shape("nope").is_err());
    }

    #[test]
    fn expressions_parse() {
        let inputs: Vec<MatrixFq> = {
            let field = FieldSpec::new(29).unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(1);
            (0..3).map(|_| MatrixFq::random(&field, 3, 3, &mut rng)).collect()
        };
        let e = parse_expr("A0^2*A1+2*A2^-1").unwrap();
        // Shape of the tree: Add(Mul(Pow(A0,2), A1), Scale(2, Inverse(A2))).
        match &e {
            Expr::Add(l, r) => {
                assert!(matches!(**l, Expr::Mul(_, _)));
                assert!(matches!(**r, Expr::Scale(2, _)));
            }
            other => panic!("unexpected tree {other:?}"),
        }
        let _ = sdmc::protocols::eval_plain(&e, &inputs);
        let reg = parse_expr("(A0'*A0)^-1*A0'*A1").unwrap();
        assert!(matches!(reg, Expr::Mul(_, _)));
        assert!(parse_expr("A0+").is_err());
        assert!(parse_expr("2+2").is_err());
        assert!(parse_expr("A0^-2").is_err());
    }

    #[test]
    fn padding_preserves_product() {
        let field = FieldSpec::new(29).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let a = MatrixFq::random(&field, 2, 5, &mut rng);
        let b = MatrixFq::random(&field, 5, 2, &mut rng);
        let (pa, pb) = pad_inner(&a, &b, 3).unwrap();
        assert_eq!(pa.cols(), 6);
        assert_eq!(pb.rows(), 6);
        assert_eq!(mat_mul(&pa, &pb).unwrap(), mat_mul(&a, &b).unwrap());
    }
}
