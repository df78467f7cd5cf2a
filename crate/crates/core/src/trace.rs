//! Run traces: every observable protocol step in order, plus per-txn
//! timing records and per-shard apply chains.
//!
//! The event log is the ground truth the verifiers replay: safety checks
//! read the apply chains, ordering checks read activation events, and the
//! determinism check hashes the rendered lines.

use crate::conflict::TxnId;
use crate::cover::ClusterId;
use crate::graph::ShardId;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    Timer,
    ColorBudget,
}

impl fmt::Display for TriggerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TriggerKind::Timer => f.write_str("timer"),
            TriggerKind::ColorBudget => f.write_str("color-budget"),
        }
    }
}

/// One observable step. `t` is the simulation tick the step happened on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Arrive {
        t: u64,
        txn: TxnId,
        home: ShardId,
        ts: u64,
        n_dests: usize,
    },
    Route {
        t: u64,
        txn: TxnId,
        cluster: ClusterId,
        q: u32,
        r: u32,
    },
    Color {
        t: u64,
        cluster: ClusterId,
        txn: TxnId,
        color: u64,
        attempt: u32,
    },
    CancelColor {
        t: u64,
        cluster: ClusterId,
        txn: TxnId,
        color: u64,
    },
    DestEnqueue {
        t: u64,
        dest: ShardId,
        txn: TxnId,
        attempt: u32,
    },
    DestActivate {
        t: u64,
        dest: ShardId,
        txn: TxnId,
        attempt: u32,
    },
    Vote {
        t: u64,
        dest: ShardId,
        txn: TxnId,
        attempt: u32,
        seq: u32,
        commit: bool,
    },
    IgnoreSent {
        t: u64,
        dest: ShardId,
        txn: TxnId,
        in_favor_of: TxnId,
    },
    IgnoreAck {
        t: u64,
        cluster: ClusterId,
        txn: TxnId,
        dest: ShardId,
    },
    Decide {
        t: u64,
        cluster: ClusterId,
        txn: TxnId,
        commit: bool,
        attempt: u32,
    },
    Confirm {
        t: u64,
        dest: ShardId,
        txn: TxnId,
        commit: bool,
        attempt: u32,
    },
    Apply {
        t: u64,
        dest: ShardId,
        txn: TxnId,
    },
    Outcome {
        t: u64,
        txn: TxnId,
        commit: bool,
    },
    Trigger {
        t: u64,
        cluster: ClusterId,
        kind: TriggerKind,
        remaining_after: usize,
    },
    StateRequest {
        t: u64,
        cluster: ClusterId,
        dest: ShardId,
    },
    StateResponse {
        t: u64,
        dest: ShardId,
        cluster: ClusterId,
        applied_seq: u64,
    },
    StateReady {
        t: u64,
        cluster: ClusterId,
        n_pending: usize,
    },
    Precommit {
        t: u64,
        cluster: ClusterId,
        txn: TxnId,
        color: u64,
    },
    BatchSend {
        t: u64,
        cluster: ClusterId,
        dest: ShardId,
        seq: u64,
        n_txns: usize,
    },
    BatchApply {
        t: u64,
        dest: ShardId,
        cluster: ClusterId,
        seq: u64,
        n_txns: usize,
    },
    BatchAck {
        t: u64,
        dest: ShardId,
        cluster: ClusterId,
        seq: u64,
    },
    TokenRequest {
        t: u64,
        cluster: ClusterId,
        token: ClusterId,
    },
    TokenGrant {
        t: u64,
        from: ClusterId,
        to: ClusterId,
        token: ClusterId,
    },
    TokenReturn {
        t: u64,
        from: ClusterId,
        token: ClusterId,
    },
    FaultDrop {
        t: u64,
        detail: String,
    },
}

impl TraceEvent {
    pub fn time(&self) -> u64 {
        match self {
            TraceEvent::Arrive { t, .. }
            | TraceEvent::Route { t, .. }
            | TraceEvent::Color { t, .. }
            | TraceEvent::CancelColor { t, .. }
            | TraceEvent::DestEnqueue { t, .. }
            | TraceEvent::DestActivate { t, .. }
            | TraceEvent::Vote { t, .. }
            | TraceEvent::IgnoreSent { t, .. }
            | TraceEvent::IgnoreAck { t, .. }
            | TraceEvent::Decide { t, .. }
            | TraceEvent::Confirm { t, .. }
            | TraceEvent::Apply { t, .. }
            | TraceEvent::Outcome { t, .. }
            | TraceEvent::Trigger { t, .. }
            | TraceEvent::StateRequest { t, .. }
            | TraceEvent::StateResponse { t, .. }
            | TraceEvent::StateReady { t, .. }
            | TraceEvent::Precommit { t, .. }
            | TraceEvent::BatchSend { t, .. }
            | TraceEvent::BatchApply { t, .. }
            | TraceEvent::BatchAck { t, .. }
            | TraceEvent::TokenRequest { t, .. }
            | TraceEvent::TokenGrant { t, .. }
            | TraceEvent::TokenReturn { t, .. }
            | TraceEvent::FaultDrop { t, .. } => *t,
        }
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceEvent::Arrive { t, txn, home, ts, n_dests } => {
                write!(f, "t={t} arrive txn={txn} home={home} ts={ts} dests={n_dests}")
            }
            TraceEvent::Route { t, txn, cluster, q, r } => {
                write!(f, "t={t} route txn={txn} cluster={cluster} height=({q},{r})")
            }
            TraceEvent::Color { t, cluster, txn, color, attempt } => {
                write!(f, "t={t} color cluster={cluster} txn={txn} color={color} attempt={attempt}")
            }
            TraceEvent::CancelColor { t, cluster, txn, color } => {
                write!(f, "t={t} cancel-color cluster={cluster} txn={txn} color={color}")
            }
            TraceEvent::DestEnqueue { t, dest, txn, attempt } => {
                write!(f, "t={t} enqueue dest={dest} txn={txn} attempt={attempt}")
            }
            TraceEvent::DestActivate { t, dest, txn, attempt } => {
                write!(f, "t={t} activate dest={dest} txn={txn} attempt={attempt}")
            }
            TraceEvent::Vote { t, dest, txn, attempt, seq, commit } => {
                write!(f, "t={t} vote dest={dest} txn={txn} attempt={attempt} seq={seq} commit={commit}")
            }
            TraceEvent::IgnoreSent { t, dest, txn, in_favor_of } => {
                write!(f, "t={t} ignore dest={dest} txn={txn} for={in_favor_of}")
            }
            TraceEvent::IgnoreAck { t, cluster, txn, dest } => {
                write!(f, "t={t} ignore-ack cluster={cluster} txn={txn} dest={dest}")
            }
            TraceEvent::Decide { t, cluster, txn, commit, attempt } => {
                write!(f, "t={t} decide cluster={cluster} txn={txn} commit={commit} attempt={attempt}")
            }
            TraceEvent::Confirm { t, dest, txn, commit, attempt } => {
                write!(f, "t={t} confirm dest={dest} txn={txn} commit={commit} attempt={attempt}")
            }
            TraceEvent::Apply { t, dest, txn } => {
                write!(f, "t={t} apply dest={dest} txn={txn}")
            }
            TraceEvent::Outcome { t, txn, commit } => {
                write!(f, "t={t} outcome txn={txn} commit={commit}")
            }
            TraceEvent::Trigger { t, cluster, kind, remaining_after } => {
                write!(f, "t={t} trigger cluster={cluster} kind={kind} remaining={remaining_after}")
            }
            TraceEvent::StateRequest { t, cluster, dest } => {
                write!(f, "t={t} state-request cluster={cluster} dest={dest}")
            }
            TraceEvent::StateResponse { t, dest, cluster, applied_seq } => {
                write!(f, "t={t} state-response dest={dest} cluster={cluster} applied={applied_seq}")
            }
            TraceEvent::StateReady { t, cluster, n_pending } => {
                write!(f, "t={t} state-ready cluster={cluster} pending={n_pending}")
            }
            TraceEvent::Precommit { t, cluster, txn, color } => {
                write!(f, "t={t} precommit cluster={cluster} txn={txn} color={color}")
            }
            TraceEvent::BatchSend { t, cluster, dest, seq, n_txns } => {
                write!(f, "t={t} batch-send cluster={cluster} dest={dest} seq={seq} txns={n_txns}")
            }
            TraceEvent::BatchApply { t, dest, cluster, seq, n_txns } => {
                write!(f, "t={t} batch-apply dest={dest} cluster={cluster} seq={seq} txns={n_txns}")
            }
            TraceEvent::BatchAck { t, dest, cluster, seq } => {
                write!(f, "t={t} batch-ack dest={dest} cluster={cluster} seq={seq}")
            }
            TraceEvent::TokenRequest { t, cluster, token } => {
                write!(f, "t={t} token-request cluster={cluster} token={token}")
            }
            TraceEvent::TokenGrant { t, from, to, token } => {
                write!(f, "t={t} token-grant from={from} to={to} token={token}")
            }
            TraceEvent::TokenReturn { t, from, token } => {
                write!(f, "t={t} token-return from={from} token={token}")
            }
            TraceEvent::FaultDrop { t, detail } => {
                write!(f, "t={t} fault-drop {detail}")
            }
        }
    }
}

/// Per-transaction timing summary, one row of the txns CSV.
#[derive(Debug, Clone, Serialize)]
pub struct TxnRecord {
    pub txn: TxnId,
    pub home: ShardId,
    pub ts: u64,
    pub n_dests: usize,
    /// Farthest home-to-destination distance.
    pub max_dist: u64,
    /// First tick a leader colored the transaction.
    pub schedule_time: Option<u64>,
    /// Commits: last tick any destination applied it. Aborts: decision tick.
    pub finalize_time: Option<u64>,
    pub committed: Option<bool>,
    pub attempts: u32,
}

/// One applied write bundle at a destination; batched schedulers tag the
/// batch it arrived in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ApplyRecord {
    pub txn: TxnId,
    pub t: u64,
    pub batch: Option<(ClusterId, u64)>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunTrace {
    pub events: Vec<TraceEvent>,
    pub txns: BTreeMap<TxnId, TxnRecord>,
    /// Apply order per destination shard, the safety chains.
    pub chains: BTreeMap<ShardId, Vec<ApplyRecord>>,
}

impl RunTrace {
    pub fn new() -> RunTrace {
        RunTrace::default()
    }

    pub fn push(&mut self, e: TraceEvent) {
        self.events.push(e);
    }

    pub fn record_arrival(&mut self, txn: TxnId, home: ShardId, ts: u64, n_dests: usize, max_dist: u64) {
        self.txns.insert(
            txn,
            TxnRecord {
                txn,
                home,
                ts,
                n_dests,
                max_dist,
                schedule_time: None,
                finalize_time: None,
                committed: None,
                attempts: 0,
            },
        );
    }

    pub fn record(&mut self, txn: TxnId) -> &mut TxnRecord {
        self.txns.get_mut(&txn).expect("txn never arrived")
    }

    pub fn record_apply(&mut self, dest: ShardId, txn: TxnId, t: u64, batch: Option<(ClusterId, u64)>) {
        self.chains.entry(dest).or_default().push(ApplyRecord { txn, t, batch });
        let rec = self.record(txn);
        rec.finalize_time = Some(rec.finalize_time.map_or(t, |f| f.max(t)));
    }

    /// SHA-256 over the rendered event lines; the determinism fingerprint.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for e in &self.events {
            hasher.update(e.to_string().as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }

    pub fn commits(&self) -> usize {
        self.txns.values().filter(|r| r.committed == Some(true)).count()
    }

    pub fn aborts(&self) -> usize {
        self.txns.values().filter(|r| r.committed == Some(false)).count()
    }

    pub fn unresolved(&self) -> Vec<TxnId> {
        self.txns
            .values()
            .filter(|r| r.committed.is_none())
            .map(|r| r.txn)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_lines_are_stable() {
        let e = TraceEvent::Color {
            t: 12,
            cluster: ClusterId(0),
            txn: TxnId(3),
            color: 2,
            attempt: 1,
        };
        assert_eq!(e.to_string(), "t=12 color cluster=C0 txn=T3 color=2 attempt=1");
        let v = TraceEvent::Vote {
            t: 4,
            dest: ShardId(2),
            txn: TxnId(9),
            attempt: 0,
            seq: 1,
            commit: true,
        };
        assert_eq!(v.to_string(), "t=4 vote dest=S2 txn=T9 attempt=0 seq=1 commit=true");
    }

    #[test]
    fn hash_tracks_event_content() {
        let mut a = RunTrace::new();
        let mut b = RunTrace::new();
        let e = TraceEvent::Apply {
            t: 1,
            dest: ShardId(0),
            txn: TxnId(1),
        };
        a.push(e.clone());
        b.push(e);
        assert_eq!(a.hash(), b.hash());
        b.push(TraceEvent::Apply {
            t: 2,
            dest: ShardId(0),
            txn: TxnId(2),
        });
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn finalize_takes_latest_apply() {
        let mut tr = RunTrace::new();
        tr.record_arrival(TxnId(1), ShardId(0), 0, 2, 1);
        tr.record_apply(ShardId(1), TxnId(1), 5, None);
        tr.record_apply(ShardId(2), TxnId(1), 9, None);
        assert_eq!(tr.txns[&TxnId(1)].finalize_time, Some(9));
        assert_eq!(tr.chains[&ShardId(1)].len(), 1);
    }
}
