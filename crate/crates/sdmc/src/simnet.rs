//! Deterministic simulated network: source nodes, servers, and one user,
//! with per-link symbol accounting and straggler injection.
//!
//! A symbol is one field element; link counters are exact element counts,
//! so the normalized upload/download costs come out as exact rationals.
//! Scheduling is synchronous: protocols drive rounds in a fixed node
//! order, and every transmitted payload is appended to the log in that
//! order, which makes transcripts bitwise reproducible for a fixed seed.

use std::collections::{BTreeSet, HashMap};

use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::field::FieldSpec;
use crate::matrix::MatrixFq;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum NodeId {
    Source(usize),
    Server(usize),
    User,
}

impl NodeId {
    /// Stable stream id for the node's private RNG stream.
    fn stream_id(&self) -> u64 {
        match self {
            NodeId::Source(g) => 1_000_000 + *g as u64,
            NodeId::Server(i) => 2_000_000 + *i as u64,
            NodeId::User => 3_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Message {
    pub from: NodeId,
    pub to: NodeId,
    pub round: u32,
    pub payload: MatrixFq,
}

impl Message {
    pub fn symbols(&self) -> u64 {
        self.payload.symbols()
    }
}

#[derive(Debug, Clone, Default)]
pub struct MessageLog {
    pub entries: Vec<Message>,
}

impl MessageLog {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.entries
                .iter()
                .map(|m| {
                    serde_json::json!({
                        "from": m.from,
                        "to": m.to,
                        "round": m.round,
                        "symbols": m.symbols(),
                    })
                })
                .collect(),
        )
    }
}

/// Everything the colluding set received: their incoming shares and the
/// messages sent to them by non-colluding servers. Nothing they sent.
#[derive(Debug, Clone)]
pub struct AdversaryView {
    pub colluders: BTreeSet<usize>,
    pub received: Vec<Message>,
}

pub fn extract_adversary_view(log: &MessageLog, colluders: &BTreeSet<usize>) -> AdversaryView {
    let received = log
        .entries
        .iter()
        .filter(|m| {
            let to_colluder = matches!(m.to, NodeId::Server(i) if colluders.contains(&i));
            let from_colluder = matches!(m.from, NodeId::Server(i) if colluders.contains(&i));
            to_colluder && !from_colluder
        })
        .cloned()
        .collect();
    AdversaryView {
        colluders: colluders.clone(),
        received,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RoundCounter {
    pub computation_rounds: u32,
    pub communication_rounds: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StragglerReport {
    pub failed: Vec<usize>,
    pub complete_groups: usize,
    pub group_threshold: usize,
    pub worst_case_threshold: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub upload_symbols: u64,
    pub download_symbols: u64,
    pub interserver_symbols: u64,
    pub input_symbols: u64,
    pub output_symbols: u64,
    /// upload_symbols / input_symbols, exact.
    pub chi_ul: Option<Ratio<u64>>,
    /// download_symbols / output_symbols, exact.
    pub chi_dl: Option<Ratio<u64>>,
    pub rounds: RoundCounter,
    /// Per communication round: symbols one server sent to its peers,
    /// normalized by the size of the matrix being re-shared.
    pub interserver_per_server_per_round: Vec<Ratio<u64>>,
    pub straggler: Option<StragglerReport>,
}

impl CostReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("cost report serialization")
    }
}

pub struct SimNet {
    field: FieldSpec,
    num_sources: usize,
    num_servers: usize,
    seed: u64,
    round: u32,
    log: MessageLog,
    failed: BTreeSet<usize>,
    rngs: HashMap<u64, ChaCha12Rng>,
    input_symbols: u64,
    output_symbols: u64,
    pub rounds: RoundCounter,
    pub interserver_per_server_per_round: Vec<Ratio<u64>>,
    pub straggler: Option<StragglerReport>,
}

pub fn build_network(num_sources: usize, num_servers: usize, field: &FieldSpec, seed: u64) -> SimNet {
    assert!(num_servers >= 2, "need at least two servers");
    SimNet {
        field: field.clone(),
        num_sources,
        num_servers,
        seed,
        round: 0,
        log: MessageLog::default(),
        failed: BTreeSet::new(),
        rngs: HashMap::new(),
        input_symbols: 0,
        output_symbols: 0,
        rounds: RoundCounter::default(),
        interserver_per_server_per_round: Vec::new(),
        straggler: None,
    }
}

impl SimNet {
    pub fn field(&self) -> &FieldSpec {
        &self.field
    }

    pub fn num_servers(&self) -> usize {
        self.num_servers
    }

    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    pub fn log(&self) -> &MessageLog {
        &self.log
    }

    pub fn failed(&self) -> &BTreeSet<usize> {
        &self.failed
    }

    /// Per-node RNG stream, derived from the network seed and the node id,
    /// persistent across calls so retries consume fresh output.
    pub fn rng_for(&mut self, node: NodeId) -> &mut ChaCha12Rng {
        let seed = self.seed;
        self.rngs.entry(node.stream_id()).or_insert_with(|| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(node.stream_id());
            rng
        })
    }

    pub fn next_round(&mut self) -> u32 {
        self.round += 1;
        self.round
    }

    /// Marked servers never deliver reconstruction-phase messages (their
    /// sends to the user are dropped and not counted).
    pub fn inject_stragglers(&mut self, failed: &BTreeSet<usize>) {
        assert!(failed.iter().all(|&i| i >= 1 && i <= self.num_servers));
        self.failed = failed.clone();
    }

    /// Logs one payload transmission. Returns false when the message was
    /// dropped because the sender is a straggling server talking to the
    /// user.
    pub fn send(&mut self, from: NodeId, to: NodeId, payload: MatrixFq) -> bool {
        if let NodeId::Server(i) = from {
            if to == NodeId::User && self.failed.contains(&i) {
                return false;
            }
        }
        self.log.entries.push(Message {
            from,
            to,
            round: self.round,
            payload,
        });
        true
    }

    pub fn note_input_symbols(&mut self, symbols: u64) {
        self.input_symbols += symbols;
    }

    pub fn note_output_symbols(&mut self, symbols: u64) {
        self.output_symbols = symbols;
    }

    pub fn cost_report(&self) -> CostReport {
        let mut upload = 0u64;
        let mut download = 0u64;
        let mut interserver = 0u64;
        for m in &self.log.entries {
            match (m.from, m.to) {
                (NodeId::Source(_), NodeId::Server(_)) => upload += m.symbols(),
                (NodeId::Server(_), NodeId::User) => download += m.symbols(),
                (NodeId::Server(_), NodeId::Server(_)) => interserver += m.symbols(),
                _ => {}
            }
        }
        let ratio = |num: u64, den: u64| {
            if den == 0 {
                None
            } else {
                Some(Ratio::new(num, den))
            }
        };
        CostReport {
            upload_symbols: upload,
            download_symbols: download,
            interserver_symbols: interserver,
            input_symbols: self.input_symbols,
            output_symbols: self.output_symbols,
            chi_ul: ratio(upload, self.input_symbols),
            chi_dl: ratio(download, self.output_symbols),
            rounds: self.rounds,
            interserver_per_server_per_round: self.interserver_per_server_per_round.clone(),
            straggler: self.straggler.clone(),
        }
    }
}
