//! State-shipping scheduling: the leader pulls member shard state, decides
//! a bounded batch of colors locally, and pushes per-shard write batches
//! back out.
//!
//! A scheduling round is trigger, gather, ready. The trigger folds queued
//! arrivals into the conflict graph and asks every cluster member for its
//! balances; once all responses are in, the leader evaluates up to λ
//! colors against the assembled state, sends outcomes immediately, and
//! ships the committed writes as sequenced batches. Destinations apply
//! batches in sequence order one consensus tick after arrival and ack
//! each one.
//!
//! Two staleness guards keep pipelined rounds consistent:
//!
//! - Responses carry the highest applied batch sequence, and the leader
//!   overlays its own sent-but-unapplied batches on top of each snapshot,
//!   so a round may start before the previous round's writes landed.
//! - Multi-leader runs serialize overlapping clusters through region
//!   tokens, and a leader keeps its tokens until every batch of the round
//!   is acked, so no other leader can gather state that silently misses
//!   those writes.

use super::control::{TokenAction, TokenCtl};
use super::{post, BatchEntry, Engine, Env, Msg, SimState};
use crate::conflict::{AccountId, ConflictGraph, Transaction, TxnId};
use crate::cover::ClusterId;
use crate::error::{Error, Result};
use crate::graph::ShardId;
use crate::sim::TimerId;
use crate::trace::{RunTrace, TraceEvent, TriggerKind};
use std::collections::{BTreeMap, BTreeSet};

/// A token request bouncing longer than this is a protocol bug, not a race.
const TOKEN_HOP_CAP: u32 = 1024;

pub(crate) struct StatefulLeader {
    pub cluster: ClusterId,
    pub shard: ShardId,
    pub members: Vec<ShardId>,
    /// Base clusters this cluster overlaps; their tokens gate every round.
    pub base_regions: Vec<ClusterId>,
    /// Color budget per round.
    pub lambda: u64,
    pub graph: ConflictGraph,
    /// Arrivals waiting for the next fold.
    pub pending: Vec<Transaction>,
    pub floor: u64,
    pub last_trigger: Option<u64>,
    pub timer: Option<TimerId>,
    pub gathering: bool,
    pub resp_pending: BTreeSet<ShardId>,
    pub responses: BTreeMap<ShardId, (u64, BTreeMap<AccountId, i64>)>,
    pub batch_seq: BTreeMap<ShardId, u64>,
    /// Sent batches a member may not have applied yet: `(seq, deltas)`.
    pub sent_log: BTreeMap<ShardId, Vec<(u64, Vec<(AccountId, i64)>)>>,
    pub awaiting_acks: BTreeSet<(ShardId, u64)>,
    /// A same-tick re-trigger is queued; tokens stay put meanwhile.
    pub retrigger: bool,
    pub tokens: TokenCtl,
}

impl StatefulLeader {
    pub fn new(env: &Env, cluster: ClusterId) -> StatefulLeader {
        let cl = env.hier.cluster(cluster);
        let own = if cl.height.q == 0 && cl.height.r == 0 {
            Some(cluster)
        } else {
            None
        };
        StatefulLeader {
            cluster,
            shard: cl.leader,
            members: cl.members.iter().copied().collect(),
            base_regions: env.hier.base_regions(cluster),
            lambda: env.lambda(cluster),
            graph: ConflictGraph::new(env.setup.granularity),
            pending: Vec::new(),
            floor: 0,
            last_trigger: None,
            timer: None,
            gathering: false,
            resp_pending: BTreeSet::new(),
            responses: BTreeMap::new(),
            batch_seq: BTreeMap::new(),
            sent_log: BTreeMap::new(),
            awaiting_acks: BTreeSet::new(),
            retrigger: false,
            tokens: TokenCtl::new(own),
        }
    }

    pub fn has_work(&self) -> bool {
        !self.pending.is_empty() || !self.graph.is_empty()
    }

    /// A round is in flight somewhere between trigger and final ack.
    fn busy(&self) -> bool {
        self.gathering || self.retrigger || !self.awaiting_acks.is_empty()
    }

    /// Drains queued arrivals into the conflict graph, coloring each at or
    /// above the monotone floor.
    fn fold(&mut self, tr: &mut RunTrace, now: u64) {
        let drained: Vec<Transaction> = self.pending.drain(..).collect();
        for txn in drained {
            let id = txn.id;
            self.graph.extend(txn);
            let color = self.graph.greedy_color(id, self.floor);
            tr.push(TraceEvent::Color {
                t: now,
                cluster: self.cluster,
                txn: id,
                color,
                attempt: 0,
            });
            tr.record(id).schedule_time.get_or_insert(now);
        }
    }
}

pub(crate) fn on_new_txn(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    cluster: ClusterId,
    txn: Transaction,
) -> Result<()> {
    st.stateful_leader(env, cluster).pending.push(txn);
    consider_trigger(env, eng, st, tr, cluster)
}

/// Starts a round if one is due: there is work, no round is underway, the
/// trigger cadence allows it, and (multi-leader) all region tokens are
/// held. Otherwise arms the cadence timer or requests the missing tokens.
fn consider_trigger(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    cluster: ClusterId,
) -> Result<()> {
    let now = eng.now();
    let leader = st.stateful_leader(env, cluster);
    if leader.gathering || leader.retrigger || !leader.has_work() {
        return Ok(());
    }
    if let Some(lt) = leader.last_trigger {
        let due_at = lt + 4 * leader.lambda;
        if now < due_at {
            if leader.timer.is_none() {
                leader.timer = Some(eng.arm_timer(due_at - now, Msg::TimerFire { cluster }));
            }
            return Ok(());
        }
    }
    if !leader.tokens.holds_all(&leader.base_regions) {
        let missing = leader.tokens.take_missing(&leader.base_regions);
        let shard = leader.shard;
        for token in missing {
            tr.push(TraceEvent::TokenRequest {
                t: now,
                cluster,
                token,
            });
            post(
                env,
                eng,
                shard,
                env.leader_shard(token),
                Msg::TokenRequest {
                    at: token,
                    token,
                    requester: cluster,
                    hops: 0,
                },
            );
        }
        return Ok(());
    }
    trigger(env, eng, st, tr, cluster, TriggerKind::Timer)
}

fn trigger(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    cluster: ClusterId,
    kind: TriggerKind,
) -> Result<()> {
    let now = eng.now();
    let leader = st.stateful.get_mut(&cluster).unwrap();
    debug_assert!(leader.tokens.holds_all(&leader.base_regions));
    if let Some(tid) = leader.timer.take() {
        eng.cancel_timer(tid);
    }
    leader.last_trigger = Some(now);
    leader.fold(tr, now);
    tr.push(TraceEvent::Trigger {
        t: now,
        cluster,
        kind,
        remaining_after: leader.graph.len(),
    });
    leader.gathering = true;
    leader.resp_pending = leader.members.iter().copied().collect();
    leader.responses.clear();
    let shard = leader.shard;
    let members = leader.members.clone();
    for m in members {
        tr.push(TraceEvent::StateRequest {
            t: now,
            cluster,
            dest: m,
        });
        post(env, eng, shard, m, Msg::StateRequest { cluster, member: m });
    }
    Ok(())
}

pub(crate) fn on_timer(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    cluster: ClusterId,
) -> Result<()> {
    st.stateful_leader(env, cluster).timer = None;
    consider_trigger(env, eng, st, tr, cluster)
}

pub(crate) fn on_kick(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    cluster: ClusterId,
) -> Result<()> {
    st.stateful_leader(env, cluster).retrigger = false;
    trigger(env, eng, st, tr, cluster, TriggerKind::ColorBudget)
}

pub(crate) fn on_state_request(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    cluster: ClusterId,
    member: ShardId,
) -> Result<()> {
    let now = eng.now();
    let d = &st.dests[member.0];
    let applied_seq = d.applied_seq.get(&cluster).copied().unwrap_or(0);
    let balances: Vec<(AccountId, i64)> = d.balances.iter().map(|(&a, &v)| (a, v)).collect();
    tr.push(TraceEvent::StateResponse {
        t: now,
        dest: member,
        cluster,
        applied_seq,
    });
    post(
        env,
        eng,
        member,
        env.leader_shard(cluster),
        Msg::StateResponse {
            cluster,
            member,
            applied_seq,
            balances,
        },
    );
    Ok(())
}

pub(crate) fn on_state_response(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    cluster: ClusterId,
    member: ShardId,
    applied_seq: u64,
    balances: Vec<(AccountId, i64)>,
) -> Result<()> {
    let leader = st.stateful_leader(env, cluster);
    if !leader.gathering || !leader.resp_pending.remove(&member) {
        return Err(Error::Protocol {
            time: eng.now(),
            shard: member,
            detail: format!("unsolicited state response for {cluster}"),
        });
    }
    leader
        .responses
        .insert(member, (applied_seq, balances.into_iter().collect()));
    if leader.resp_pending.is_empty() {
        ready(env, eng, st, tr, cluster)?;
    }
    Ok(())
}

/// All member state is in: fold late arrivals, evaluate up to λ colors
/// against the snapshots plus our unapplied batches, send outcomes now and
/// the committed writes as one batch per destination.
fn ready(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    cluster: ClusterId,
) -> Result<()> {
    let now = eng.now();
    let initial = env.setup.workload.initial_balance;
    let leader = st.stateful.get_mut(&cluster).unwrap();
    leader.gathering = false;
    leader.fold(tr, now);
    tr.push(TraceEvent::StateReady {
        t: now,
        cluster,
        n_pending: leader.graph.len(),
    });

    // Working balances: each snapshot, overlaid with every batch we sent
    // that the member had not applied when it answered. The response's
    // applied sequence also retires log entries it proves landed.
    let mut working: BTreeMap<ShardId, BTreeMap<AccountId, i64>> = BTreeMap::new();
    for (&m, (applied, bal)) in &leader.responses {
        let mut w = bal.clone();
        if let Some(log) = leader.sent_log.get_mut(&m) {
            log.retain(|(seq, _)| seq > applied);
            for (_, deltas) in log.iter() {
                for &(a, dv) in deltas {
                    *w.entry(a).or_insert(initial) += dv;
                }
            }
        }
        working.insert(m, w);
    }

    let mut batches: BTreeMap<ShardId, Vec<BatchEntry>> = BTreeMap::new();
    let mut outcomes: Vec<(ShardId, TxnId, bool)> = Vec::new();
    let mut colors_done = 0;
    for (color, ids) in leader.graph.colored_by_phase() {
        if colors_done == leader.lambda {
            break;
        }
        for id in ids {
            let body = leader.graph.remove(id);
            let mut ok = true;
            'check: for (dest, ops) in &body.ops {
                let w = working.get(dest).expect("destination outside cluster");
                for a in &ops.accesses {
                    if let Some(m) = a.min_balance {
                        if w.get(&a.account).copied().unwrap_or(initial) < m {
                            ok = false;
                            break 'check;
                        }
                    }
                }
            }
            if ok {
                for (dest, ops) in &body.ops {
                    let w = working.get_mut(dest).unwrap();
                    let mut writes = Vec::new();
                    for a in &ops.accesses {
                        if a.write {
                            *w.entry(a.account).or_insert(initial) += a.delta;
                            writes.push((a.account, a.delta));
                        }
                    }
                    if !writes.is_empty() {
                        batches
                            .entry(*dest)
                            .or_default()
                            .push(BatchEntry { txn: id, writes });
                    }
                }
                tr.push(TraceEvent::Precommit {
                    t: now,
                    cluster,
                    txn: id,
                    color,
                });
            }
            tr.push(TraceEvent::Decide {
                t: now,
                cluster,
                txn: id,
                commit: ok,
                attempt: 0,
            });
            let rec = tr.record(id);
            rec.committed = Some(ok);
            rec.attempts = 1;
            // Decision tick is the floor; later applies push it up.
            rec.finalize_time = Some(now);
            outcomes.push((body.home, id, ok));
        }
        leader.floor = leader.floor.max(color + 1);
        colors_done += 1;
    }

    let shard = leader.shard;
    for (dest, entries) in batches {
        let seq = leader.batch_seq.entry(dest).or_insert(0);
        *seq += 1;
        let seq = *seq;
        let deltas: Vec<(AccountId, i64)> = entries
            .iter()
            .flat_map(|e| e.writes.iter().copied())
            .collect();
        leader.sent_log.entry(dest).or_default().push((seq, deltas));
        leader.awaiting_acks.insert((dest, seq));
        tr.push(TraceEvent::BatchSend {
            t: now,
            cluster,
            dest,
            seq,
            n_txns: entries.len(),
        });
        post(
            env,
            eng,
            shard,
            dest,
            Msg::Batch {
                cluster,
                dest,
                seq,
                entries,
            },
        );
    }
    for (home, id, ok) in outcomes {
        post(
            env,
            eng,
            shard,
            home,
            Msg::Outcome {
                home,
                txn: id,
                commit: ok,
            },
        );
    }
    leader.responses.clear();

    if leader.has_work() {
        leader.retrigger = true;
        eng.local(Msg::RoundKick { cluster });
        Ok(())
    } else {
        maybe_token_release(env, eng, st, tr, cluster)
    }
}

pub(crate) fn on_batch(
    _env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    _tr: &mut RunTrace,
    cluster: ClusterId,
    dest: ShardId,
    seq: u64,
    entries: Vec<BatchEntry>,
) -> Result<()> {
    let d = &mut st.dests[dest.0];
    d.buffered.insert((cluster, seq), entries);
    schedule_next_apply(eng, d, dest, cluster);
    Ok(())
}

/// Queues the consensus-tick apply for the next in-sequence batch, if it
/// is buffered and not already queued.
fn schedule_next_apply(
    eng: &mut Engine,
    d: &mut super::DestState,
    dest: ShardId,
    cluster: ClusterId,
) {
    if d.apply_scheduled.contains(&cluster) {
        return;
    }
    let next = d.applied_seq.get(&cluster).copied().unwrap_or(0) + 1;
    if d.buffered.contains_key(&(cluster, next)) {
        d.apply_scheduled.insert(cluster);
        let at = eng.now() + 1;
        eng.schedule_at(at, Msg::ApplyBatch { dest, cluster });
    }
}

pub(crate) fn on_apply_batch(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    dest: ShardId,
    cluster: ClusterId,
) -> Result<()> {
    let now = eng.now();
    let initial = env.setup.workload.initial_balance;
    let d = &mut st.dests[dest.0];
    d.apply_scheduled.remove(&cluster);
    let seq = d.applied_seq.get(&cluster).copied().unwrap_or(0) + 1;
    let Some(entries) = d.buffered.remove(&(cluster, seq)) else {
        return Err(Error::Protocol {
            time: now,
            shard: dest,
            detail: format!("apply scheduled without batch {seq} from {cluster}"),
        });
    };
    for e in &entries {
        for &(a, dv) in &e.writes {
            d.credit(initial, a, dv);
        }
        tr.record_apply(dest, e.txn, now, Some((cluster, seq)));
    }
    tr.push(TraceEvent::BatchApply {
        t: now,
        dest,
        cluster,
        seq,
        n_txns: entries.len(),
    });
    d.applied_seq.insert(cluster, seq);
    tr.push(TraceEvent::BatchAck {
        t: now,
        dest,
        cluster,
        seq,
    });
    post(
        env,
        eng,
        dest,
        env.leader_shard(cluster),
        Msg::BatchAck { cluster, dest, seq },
    );
    schedule_next_apply(eng, &mut st.dests[dest.0], dest, cluster);
    Ok(())
}

pub(crate) fn on_batch_ack(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    cluster: ClusterId,
    dest: ShardId,
    seq: u64,
) -> Result<()> {
    let leader = st.stateful_leader(env, cluster);
    if !leader.awaiting_acks.remove(&(dest, seq)) {
        return Err(Error::Protocol {
            time: eng.now(),
            shard: dest,
            detail: format!("unexpected ack for batch {seq} of {cluster}"),
        });
    }
    maybe_token_release(env, eng, st, tr, cluster)
}

/// Once the round is fully settled (nothing gathering, no re-trigger
/// queued, every batch acked), serve deferred token requests and return
/// whatever this cluster no longer needs.
fn maybe_token_release(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    cluster: ClusterId,
) -> Result<()> {
    let leader = st.stateful.get_mut(&cluster).unwrap();
    if leader.busy() {
        return Ok(());
    }
    let wants = leader.has_work();
    let shard = leader.shard;
    let actions = leader.tokens.settle(env.hier, cluster, wants);
    perform(env, eng, tr, shard, cluster, actions)?;
    if wants {
        // Deferred grants may have taken tokens we still need; re-request
        // on the normal trigger path.
        consider_trigger(env, eng, st, tr, cluster)?;
    }
    Ok(())
}

fn perform(
    env: &Env,
    eng: &mut Engine,
    tr: &mut RunTrace,
    shard: ShardId,
    me: ClusterId,
    actions: Vec<TokenAction>,
) -> Result<()> {
    let now = eng.now();
    for action in actions {
        match action {
            TokenAction::Grant { token, to } => {
                tr.push(TraceEvent::TokenGrant {
                    t: now,
                    from: me,
                    to,
                    token,
                });
                post(env, eng, shard, env.leader_shard(to), Msg::TokenGrant { to, token });
            }
            TokenAction::Forward {
                token,
                requester,
                to,
                hops,
            } => {
                post(
                    env,
                    eng,
                    shard,
                    env.leader_shard(to),
                    Msg::TokenRequest {
                        at: to,
                        token,
                        requester,
                        hops,
                    },
                );
            }
            TokenAction::Return { token, to } => {
                tr.push(TraceEvent::TokenReturn {
                    t: now,
                    from: me,
                    token,
                });
                post(env, eng, shard, env.leader_shard(to), Msg::TokenReturn { to, token });
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn on_token_request(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    at: ClusterId,
    token: ClusterId,
    requester: ClusterId,
    hops: u32,
) -> Result<()> {
    let leader = st.stateful_leader(env, at);
    if hops > TOKEN_HOP_CAP {
        return Err(Error::Protocol {
            time: eng.now(),
            shard: leader.shard,
            detail: format!("request for {token} by {requester} exceeded the hop cap"),
        });
    }
    let busy = leader.busy();
    let wants = leader.has_work();
    let shard = leader.shard;
    let actions = leader
        .tokens
        .on_request(env.hier, at, token, requester, hops, busy, wants);
    perform(env, eng, tr, shard, at, actions)
}

pub(crate) fn on_token_grant(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    to: ClusterId,
    token: ClusterId,
) -> Result<()> {
    st.stateful_leader(env, to).tokens.on_grant(token);
    consider_trigger(env, eng, st, tr, to)
}

pub(crate) fn on_token_return(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    to: ClusterId,
    token: ClusterId,
) -> Result<()> {
    on_token_grant(env, eng, st, tr, to, token)
}
