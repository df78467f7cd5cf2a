//! The four transaction schedulers and the run driver.
//!
//! All four share one machinery split: vote-based schedulers confirm each
//! transaction with its destination shards before anything is applied,
//! state-shipping schedulers pull shard state to the leader, decide
//! locally, and push write batches back out. Single-leader variants run
//! the same code over one synthetic cluster spanning every shard;
//! multi-leader variants run one leader per cluster of the sparse cover
//! hierarchy.

pub mod control;
pub mod stateful;
pub mod stateless;

use crate::conflict::{AccountId, Granularity, SubTransaction, Transaction, TxnId};
use crate::cover::{ClusterId, CoverHierarchy, CoverParams, Height};
use crate::error::{Error, Result};
use crate::graph::{ShardGraph, ShardId};
use crate::sim::{DelayModel, EngineCore, FaultPlan, FaultState};
use crate::trace::{RunTrace, TraceEvent};
use crate::workload::{retry_of, HomeGenerator, WorkloadSpec};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    #[serde(alias = "a1")]
    StatelessSingle,
    #[serde(alias = "a2")]
    StatelessMulti,
    #[serde(alias = "a3")]
    StatefulSingle,
    #[serde(alias = "a4")]
    StatefulMulti,
}

impl Algo {
    pub fn all() -> [Algo; 4] {
        [
            Algo::StatelessSingle,
            Algo::StatelessMulti,
            Algo::StatefulSingle,
            Algo::StatefulMulti,
        ]
    }

    pub fn is_multi(self) -> bool {
        matches!(self, Algo::StatelessMulti | Algo::StatefulMulti)
    }

    pub fn is_stateful(self) -> bool {
        matches!(self, Algo::StatefulSingle | Algo::StatefulMulti)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algo::StatelessSingle => "stateless-single",
            Algo::StatelessMulti => "stateless-multi",
            Algo::StatefulSingle => "stateful-single",
            Algo::StatefulMulti => "stateful-multi",
        }
    }

    /// Destination queues order subtransactions by this key. Single-leader
    /// runs compare `(color, ts, id)`; multi-leader runs put arrival time
    /// and cluster height first so cross-cluster priorities agree.
    pub fn priority_key(self, color: u64, ts: u64, height: Height, id: TxnId) -> PriorityKey {
        if self.is_multi() {
            PriorityKey([ts, height.q as u64, height.r as u64, color, id.0])
        } else {
            PriorityKey([color, ts, 0, 0, id.0])
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Totally ordered scheduling priority; lexicographic, lower runs first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PriorityKey(pub [u64; 5]);

/// Everything one simulation run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSetup {
    pub algo: Algo,
    #[serde(default)]
    pub granularity: Granularity,
    /// Leader shard for the single-leader schedulers.
    #[serde(default)]
    pub leader: ShardId,
    pub workload: WorkloadSpec,
    pub delay: DelayModel,
    pub seed: u64,
    pub max_ticks: u64,
    #[serde(default)]
    pub fault: FaultPlan,
    #[serde(default)]
    pub cover: CoverParams,
}

/// One write bundle inside a state-shipping batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchEntry {
    pub txn: TxnId,
    pub writes: Vec<(AccountId, i64)>,
}

/// Every message and local step the simulation delivers.
#[derive(Debug, Clone)]
pub enum Msg {
    Generate {
        home: ShardId,
    },
    NewTxn {
        cluster: ClusterId,
        txn: Transaction,
    },
    SubTxn {
        cluster: ClusterId,
        sub: SubTransaction,
        color: u64,
        attempt: u32,
    },
    Vote {
        cluster: ClusterId,
        txn: TxnId,
        dest: ShardId,
        attempt: u32,
        seq: u32,
        commit: bool,
    },
    Ignore {
        cluster: ClusterId,
        txn: TxnId,
        dest: ShardId,
        attempt: u32,
        seq: u32,
        in_favor_of: TxnId,
    },
    IgnoredReply {
        dest: ShardId,
        txn: TxnId,
        attempt: u32,
    },
    Confirm {
        dest: ShardId,
        txn: TxnId,
        attempt: u32,
        commit: bool,
    },
    Outcome {
        home: ShardId,
        txn: TxnId,
        commit: bool,
    },
    TimerFire {
        cluster: ClusterId,
    },
    RoundKick {
        cluster: ClusterId,
    },
    StateRequest {
        cluster: ClusterId,
        member: ShardId,
    },
    StateResponse {
        cluster: ClusterId,
        member: ShardId,
        applied_seq: u64,
        balances: Vec<(AccountId, i64)>,
    },
    Batch {
        cluster: ClusterId,
        dest: ShardId,
        seq: u64,
        entries: Vec<BatchEntry>,
    },
    ApplyBatch {
        dest: ShardId,
        cluster: ClusterId,
    },
    BatchAck {
        cluster: ClusterId,
        dest: ShardId,
        seq: u64,
    },
    TokenRequest {
        at: ClusterId,
        token: ClusterId,
        requester: ClusterId,
        hops: u32,
    },
    TokenGrant {
        to: ClusterId,
        token: ClusterId,
    },
    TokenReturn {
        to: ClusterId,
        token: ClusterId,
    },
}

/// Read-only context shared by every handler.
pub(crate) struct Env<'a> {
    pub g: &'a ShardGraph,
    pub hier: &'a CoverHierarchy,
    pub setup: &'a RunSetup,
}

impl<'a> Env<'a> {
    pub fn leader_shard(&self, c: ClusterId) -> ShardId {
        self.hier.cluster(c).leader
    }

    pub fn height(&self, c: ClusterId) -> Height {
        self.hier.cluster(c).height
    }

    pub fn key(&self, cluster: ClusterId, color: u64, ts: u64, id: TxnId) -> PriorityKey {
        self.setup.algo.priority_key(color, ts, self.height(cluster), id)
    }

    /// Color budget per scheduling round: at least one, scaled by the
    /// delay stretch and the cluster's diameter.
    pub fn lambda(&self, c: ClusterId) -> u64 {
        (self.setup.delay.delta() * self.hier.cluster(c).diameter).max(1)
    }
}

/// Home shard bookkeeping: its generator and whether a transaction is out.
pub(crate) struct HomeState {
    pub gen: HomeGenerator,
}

#[derive(Debug, Clone)]
pub(crate) struct Queued {
    pub sub: SubTransaction,
    pub cluster: ClusterId,
    pub attempt: u32,
    pub votes_sent: u32,
    pub key: PriorityKey,
}

#[derive(Debug)]
pub(crate) struct Busy {
    pub q: Queued,
    pub ignore_sent: bool,
}

/// Per-shard destination state, used by both machine families.
pub(crate) struct DestState {
    pub balances: BTreeMap<AccountId, i64>,
    // vote-based machinery
    pub queue: BTreeMap<PriorityKey, Queued>,
    pub by_txn: BTreeMap<TxnId, PriorityKey>,
    pub busy: Option<Busy>,
    // state-shipping machinery
    pub applied_seq: BTreeMap<ClusterId, u64>,
    pub buffered: BTreeMap<(ClusterId, u64), Vec<BatchEntry>>,
    pub apply_scheduled: BTreeSet<ClusterId>,
}

impl DestState {
    fn new() -> DestState {
        DestState {
            balances: BTreeMap::new(),
            queue: BTreeMap::new(),
            by_txn: BTreeMap::new(),
            busy: None,
            applied_seq: BTreeMap::new(),
            buffered: BTreeMap::new(),
            apply_scheduled: BTreeSet::new(),
        }
    }

    pub fn balance(&self, initial: i64, a: AccountId) -> i64 {
        self.balances.get(&a).copied().unwrap_or(initial)
    }

    pub fn credit(&mut self, initial: i64, a: AccountId, delta: i64) {
        *self.balances.entry(a).or_insert(initial) += delta;
    }
}

pub(crate) struct SimState {
    pub homes: Vec<HomeState>,
    pub dests: Vec<DestState>,
    pub stateless: BTreeMap<ClusterId, stateless::StatelessLeader>,
    pub stateful: BTreeMap<ClusterId, stateful::StatefulLeader>,
    pub bodies: BTreeMap<TxnId, Transaction>,
    pub next_txn_id: u64,
}

impl SimState {
    fn new(env: &Env) -> SimState {
        let mut st = SimState {
            homes: env
                .g
                .shards()
                .map(|s| HomeState {
                    gen: HomeGenerator::new(env.setup.seed, s, &env.setup.workload),
                })
                .collect(),
            dests: env.g.shards().map(|_| DestState::new()).collect(),
            stateless: BTreeMap::new(),
            stateful: BTreeMap::new(),
            bodies: BTreeMap::new(),
            next_txn_id: 0,
        };
        if env.setup.algo.is_stateful() {
            // Base clusters start holding their own scheduling token.
            let bases: Vec<ClusterId> = env.hier.base_clusters().map(|c| c.id).collect();
            for b in bases {
                st.stateful
                    .insert(b, stateful::StatefulLeader::new(env, b));
            }
        }
        st
    }

    pub fn stateless_leader(
        &mut self,
        env: &Env,
        c: ClusterId,
    ) -> &mut stateless::StatelessLeader {
        self.stateless
            .entry(c)
            .or_insert_with(|| stateless::StatelessLeader::new(env, c))
    }

    pub fn stateful_leader(&mut self, env: &Env, c: ClusterId) -> &mut stateful::StatefulLeader {
        self.stateful
            .entry(c)
            .or_insert_with(|| stateful::StatefulLeader::new(env, c))
    }
}

pub type Engine = EngineCore<Msg>;

/// Sends `msg` across the graph from `from` to `to`.
pub(crate) fn post(env: &Env, eng: &mut Engine, from: ShardId, to: ShardId, msg: Msg) {
    let w = env.g.distance(from, to);
    eng.send(w, msg);
}

/// Result of one simulation run.
#[derive(Debug)]
pub struct RunOutput {
    pub trace: RunTrace,
    pub bodies: BTreeMap<TxnId, Transaction>,
    pub ticks: u64,
    /// True when the tick horizon cut the run short.
    pub truncated: bool,
}

pub fn run_sim(g: &ShardGraph, setup: &RunSetup) -> Result<RunOutput> {
    setup.workload.check()?;
    if setup.leader.0 >= g.n_shards() {
        return Err(Error::Config(format!(
            "leader {} outside the shard range",
            setup.leader
        )));
    }
    let hier = if setup.algo.is_multi() {
        CoverHierarchy::build(g, setup.cover)?
    } else {
        CoverHierarchy::single_cluster(g, setup.leader)
    };
    let env = Env {
        g,
        hier: &hier,
        setup,
    };
    let mut eng: Engine = EngineCore::new(setup.seed, setup.delay);
    let mut st = SimState::new(&env);
    let mut tr = RunTrace::new();
    let mut faults = FaultState::new(setup.fault);

    for s in g.shards() {
        eng.schedule_at(0, Msg::Generate { home: s });
    }

    let mut truncated = false;
    while let Some((t, msg)) = eng.pop() {
        if t > setup.max_ticks {
            truncated = true;
            break;
        }
        dispatch(&env, &mut eng, &mut st, &mut tr, &mut faults, msg)?;
    }

    Ok(RunOutput {
        trace: tr,
        bodies: st.bodies,
        ticks: eng.now(),
        truncated,
    })
}

fn dispatch(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    faults: &mut FaultState,
    msg: Msg,
) -> Result<()> {
    match msg {
        Msg::Generate { home } => {
            generate_next(env, eng, st, tr, home);
            Ok(())
        }
        Msg::Outcome { home, txn, commit } => {
            tr.push(TraceEvent::Outcome {
                t: eng.now(),
                txn,
                commit,
            });
            on_outcome(env, eng, st, tr, home, txn, commit);
            Ok(())
        }
        Msg::NewTxn { cluster, txn } => {
            if env.setup.algo.is_stateful() {
                stateful::on_new_txn(env, eng, st, tr, cluster, txn)
            } else {
                stateless::on_new_txn(env, eng, st, tr, cluster, txn)
            }
        }
        Msg::SubTxn {
            cluster,
            sub,
            color,
            attempt,
        } => stateless::on_sub(env, eng, st, tr, cluster, sub, color, attempt),
        Msg::Vote {
            cluster,
            txn,
            dest,
            attempt,
            seq,
            commit,
        } => stateless::on_vote(env, eng, st, tr, faults, cluster, txn, dest, attempt, seq, commit),
        Msg::Ignore {
            cluster,
            txn,
            dest,
            attempt,
            seq,
            in_favor_of: _,
        } => stateless::on_ignore(env, eng, st, tr, cluster, txn, dest, attempt, seq),
        Msg::IgnoredReply { dest, txn, attempt } => {
            stateless::on_ignored_reply(env, eng, st, tr, dest, txn, attempt)
        }
        Msg::Confirm {
            dest,
            txn,
            attempt,
            commit,
        } => stateless::on_confirm(env, eng, st, tr, dest, txn, attempt, commit),
        Msg::TimerFire { cluster } => stateful::on_timer(env, eng, st, tr, cluster),
        Msg::RoundKick { cluster } => stateful::on_kick(env, eng, st, tr, cluster),
        Msg::StateRequest { cluster, member } => {
            stateful::on_state_request(env, eng, st, tr, cluster, member)
        }
        Msg::StateResponse {
            cluster,
            member,
            applied_seq,
            balances,
        } => stateful::on_state_response(env, eng, st, tr, cluster, member, applied_seq, balances),
        Msg::Batch {
            cluster,
            dest,
            seq,
            entries,
        } => stateful::on_batch(env, eng, st, tr, cluster, dest, seq, entries),
        Msg::ApplyBatch { dest, cluster } => {
            stateful::on_apply_batch(env, eng, st, tr, dest, cluster)
        }
        Msg::BatchAck { cluster, dest, seq } => {
            stateful::on_batch_ack(env, eng, st, tr, cluster, dest, seq)
        }
        Msg::TokenRequest {
            at,
            token,
            requester,
            hops,
        } => stateful::on_token_request(env, eng, st, tr, at, token, requester, hops),
        Msg::TokenGrant { to, token } => stateful::on_token_grant(env, eng, st, tr, to, token),
        Msg::TokenReturn { to, token } => stateful::on_token_return(env, eng, st, tr, to, token),
    }
}

/// Issues the home's next fresh transaction, if its budget allows.
pub(crate) fn generate_next(env: &Env, eng: &mut Engine, st: &mut SimState, tr: &mut RunTrace, home: ShardId) {
    let id = TxnId(st.next_txn_id);
    let now = eng.now();
    let txn = match st.homes[home.0].gen.next_txn(env.g, now, id) {
        Some(t) => t,
        None => return,
    };
    st.next_txn_id += 1;
    issue(env, eng, st, tr, txn);
}

fn on_outcome(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    home: ShardId,
    txn: TxnId,
    commit: bool,
) {
    let retry = !commit && env.setup.workload.retry_aborted;
    if retry && st.homes[home.0].gen.consume_for_retry() {
        let id = TxnId(st.next_txn_id);
        st.next_txn_id += 1;
        let clone = retry_of(&st.bodies[&txn], id, eng.now());
        issue(env, eng, st, tr, clone);
    } else {
        generate_next(env, eng, st, tr, home);
    }
}

/// Records a new transaction and hands it to its scheduling cluster. The
/// home stays quiet until this transaction's outcome comes back.
fn issue(env: &Env, eng: &mut Engine, st: &mut SimState, tr: &mut RunTrace, txn: Transaction) {
    let now = eng.now();
    let home = txn.home;
    let dests = txn.dests();
    let max_dist = dests.iter().map(|&d| env.g.distance(home, d)).max().unwrap_or(0);
    tr.push(TraceEvent::Arrive {
        t: now,
        txn: txn.id,
        home,
        ts: txn.ts,
        n_dests: dests.len(),
    });
    tr.record_arrival(txn.id, home, txn.ts, dests.len(), max_dist);

    let cluster = if env.setup.algo.is_multi() {
        let c = env.hier.home_cluster(env.g, home, &dests);
        tr.push(TraceEvent::Route {
            t: now,
            txn: txn.id,
            cluster: c.id,
            q: c.height.q,
            r: c.height.r,
        });
        c.id
    } else {
        ClusterId(0)
    };
    st.bodies.insert(txn.id, txn.clone());
    let leader = env.leader_shard(cluster);
    post(env, eng, home, leader, Msg::NewTxn { cluster, txn });
}
