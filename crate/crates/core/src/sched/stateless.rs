//! Vote-based scheduling: leaders color transactions and fan
//! subtransactions out to destination shards, destinations serve one
//! subtransaction at a time in priority order and vote on its conditions,
//! and the leader commits only on unanimous yes votes.
//!
//! Three mechanisms keep this safe and live under reordered delivery:
//!
//! - Attempt numbers. A leader that cancels and re-colors a transaction
//!   bumps its attempt; any vote or ignore stamped with an older attempt
//!   gets a releasing abort-confirm so the destination never stays locked
//!   on a dead attempt.
//! - Vote sequence numbers. A destination's repeated votes for one attempt
//!   are numbered; once the leader acknowledges an ignore it only accepts
//!   votes newer than the ignored one, so a superseded yes can never be
//!   double counted after balances moved.
//! - The ignore handshake. A destination busy with a lower-priority
//!   subtransaction asks that transaction's leader to disregard its vote,
//!   waits for the acknowledgment, then requeues the loser and serves the
//!   higher-priority arrival. This breaks the circular waits that
//!   otherwise deadlock destinations that popped conflicting work in
//!   opposite orders.

use super::{post, Busy, Engine, Env, Msg, Queued, SimState};
use crate::conflict::{ConflictGraph, SubTransaction, Transaction, TxnId};
use crate::cover::ClusterId;
use crate::error::{Error, Result};
use crate::graph::ShardId;
use crate::sim::FaultState;
use crate::trace::{RunTrace, TraceEvent};
use std::collections::BTreeMap;

#[derive(Debug)]
pub(crate) struct Live {
    pub attempt: u32,
    pub color: u64,
    pub ts: u64,
    pub n_dests: usize,
    pub votes: BTreeMap<ShardId, bool>,
    pub min_seq: BTreeMap<ShardId, u32>,
}

pub(crate) struct StatelessLeader {
    pub shard: ShardId,
    pub graph: ConflictGraph,
    pub floor: u64,
    pub live: BTreeMap<TxnId, Live>,
    /// Finalized transactions with their last attempt, for stale replies.
    pub decided: BTreeMap<TxnId, (u32, bool)>,
}

impl StatelessLeader {
    pub fn new(env: &Env, cluster: ClusterId) -> StatelessLeader {
        StatelessLeader {
            shard: env.leader_shard(cluster),
            graph: ConflictGraph::new(env.setup.granularity),
            floor: 0,
            live: BTreeMap::new(),
            decided: BTreeMap::new(),
        }
    }

    /// Colors never fall below the floor or below any color still pending,
    /// so a freed low color cannot be re-taken to starve waiting work.
    fn effective_floor(&self) -> u64 {
        self.floor.max(self.graph.color_floor())
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
    let now = eng.now();
    let id = txn.id;
    let ts = txn.ts;
    let lead = st.stateless_leader(env, cluster);
    lead.graph.extend(txn);

    // A younger colored transaction nobody voted for yet steps aside so
    // the older arrival can take the lower color.
    let mut cancelled: Vec<(u64, TxnId)> = lead
        .live
        .iter()
        .filter(|(_, l)| l.votes.is_empty() && l.ts > ts)
        .map(|(tid, l)| (l.ts, *tid))
        .collect();
    cancelled.sort();
    for &(_, cid) in &cancelled {
        let l = lead.live.get_mut(&cid).unwrap();
        tr.push(TraceEvent::CancelColor {
            t: now,
            cluster,
            txn: cid,
            color: l.color,
        });
        lead.graph.cancel_color(cid);
        l.attempt += 1;
        l.min_seq.clear();
    }

    let color = lead.graph.greedy_color(id, lead.effective_floor());
    let body = lead.graph.txn(id).unwrap().clone();
    lead.live.insert(
        id,
        Live {
            attempt: 0,
            color,
            ts,
            n_dests: body.dests().len(),
            votes: BTreeMap::new(),
            min_seq: BTreeMap::new(),
        },
    );
    tr.push(TraceEvent::Color {
        t: now,
        cluster,
        txn: id,
        color,
        attempt: 0,
    });
    tr.record(id).schedule_time.get_or_insert(now);
    send_subs(env, eng, st, cluster, &body, color, 0);

    for (_, cid) in cancelled {
        let lead = st.stateless_leader(env, cluster);
        let color = lead.graph.greedy_color(cid, lead.effective_floor());
        let l = lead.live.get_mut(&cid).unwrap();
        l.color = color;
        let attempt = l.attempt;
        let body = lead.graph.txn(cid).unwrap().clone();
        tr.push(TraceEvent::Color {
            t: now,
            cluster,
            txn: cid,
            color,
            attempt,
        });
        send_subs(env, eng, st, cluster, &body, color, attempt);
    }
    Ok(())
}

fn send_subs(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    cluster: ClusterId,
    body: &Transaction,
    color: u64,
    attempt: u32,
) {
    let from = st.stateless[&cluster].shard;
    for dest in body.dests() {
        post(
            env,
            eng,
            from,
            dest,
            Msg::SubTxn {
                cluster,
                sub: body.subtxn(dest),
                color,
                attempt,
            },
        );
    }
}

/// Checks a subtransaction's conditions against current balances.
fn validate(env: &Env, st: &SimState, sub: &SubTransaction) -> bool {
    let d = &st.dests[sub.dest.0];
    let initial = env.setup.workload.initial_balance;
    sub.ops
        .accesses
        .iter()
        .all(|a| a.min_balance.is_none_or(|m| d.balance(initial, a.account) >= m))
}

pub(crate) fn on_sub(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    cluster: ClusterId,
    sub: SubTransaction,
    color: u64,
    attempt: u32,
) -> Result<()> {
    let now = eng.now();
    let dest = sub.dest;
    let id = sub.txn;
    let key = env.key(cluster, color, sub.ts, id);
    {
        let d = &mut st.dests[dest.0];
        // A re-sent attempt supersedes any queued older one.
        if let Some(&old_key) = d.by_txn.get(&id) {
            if d.queue[&old_key].attempt >= attempt {
                return Ok(());
            }
            d.queue.remove(&old_key);
            d.by_txn.remove(&id);
        }
        d.queue.insert(
            key,
            Queued {
                sub,
                cluster,
                attempt,
                votes_sent: 0,
                key,
            },
        );
        d.by_txn.insert(id, key);
    }
    tr.push(TraceEvent::DestEnqueue {
        t: now,
        dest,
        txn: id,
        attempt,
    });

    let ignore = {
        let d = &mut st.dests[dest.0];
        match &mut d.busy {
            Some(b) if !b.ignore_sent && key < b.q.key && b.q.sub.txn != id => {
                b.ignore_sent = true;
                Some((b.q.cluster, b.q.sub.txn, b.q.attempt, b.q.votes_sent))
            }
            Some(_) => None,
            None => {
                pump(env, eng, st, tr, dest);
                None
            }
        }
    };
    if let Some((bc, btxn, battempt, bseq)) = ignore {
        tr.push(TraceEvent::IgnoreSent {
            t: now,
            dest,
            txn: btxn,
            in_favor_of: id,
        });
        post(
            env,
            eng,
            dest,
            env.leader_shard(bc),
            Msg::Ignore {
                cluster: bc,
                txn: btxn,
                dest,
                attempt: battempt,
                seq: bseq,
                in_favor_of: id,
            },
        );
    }
    Ok(())
}

/// Serves the highest-priority queued subtransaction when idle: validate,
/// vote, and hold the shard busy until the leader's confirm.
fn pump(env: &Env, eng: &mut Engine, st: &mut SimState, tr: &mut RunTrace, dest: ShardId) {
    let now = eng.now();
    if st.dests[dest.0].busy.is_some() {
        return;
    }
    let Some((&key, _)) = st.dests[dest.0].queue.first_key_value() else {
        return;
    };
    let mut q = st.dests[dest.0].queue.remove(&key).unwrap();
    st.dests[dest.0].by_txn.remove(&q.sub.txn);
    q.votes_sent += 1;
    tr.push(TraceEvent::DestActivate {
        t: now,
        dest,
        txn: q.sub.txn,
        attempt: q.attempt,
    });
    let ok = validate(env, st, &q.sub);
    tr.push(TraceEvent::Vote {
        t: now,
        dest,
        txn: q.sub.txn,
        attempt: q.attempt,
        seq: q.votes_sent,
        commit: ok,
    });
    let vote = Msg::Vote {
        cluster: q.cluster,
        txn: q.sub.txn,
        dest,
        attempt: q.attempt,
        seq: q.votes_sent,
        commit: ok,
    };
    let leader = env.leader_shard(q.cluster);
    st.dests[dest.0].busy = Some(Busy {
        q,
        ignore_sent: false,
    });
    post(env, eng, dest, leader, vote);
}

/// Abort-confirm for a stale attempt; unblocks a destination stuck on a
/// superseded or already-finalized attempt.
fn release(env: &Env, eng: &mut Engine, st: &SimState, cluster: ClusterId, dest: ShardId, txn: TxnId, attempt: u32) {
    post(
        env,
        eng,
        st.stateless[&cluster].shard,
        dest,
        Msg::Confirm {
            dest,
            txn,
            attempt,
            commit: false,
        },
    );
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn on_vote(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    faults: &mut FaultState,
    cluster: ClusterId,
    txn: TxnId,
    dest: ShardId,
    attempt: u32,
    seq: u32,
    commit: bool,
) -> Result<()> {
    let lead = st.stateless_leader(env, cluster);
    if let Some(&(dec_attempt, _)) = lead.decided.get(&txn) {
        if attempt < dec_attempt {
            release(env, eng, st, cluster, dest, txn, attempt);
        }
        return Ok(());
    }
    let Some(live) = lead.live.get_mut(&txn) else {
        return Err(Error::Protocol {
            time: eng.now(),
            shard: dest,
            detail: format!("vote for unknown transaction {txn}"),
        });
    };
    if attempt < live.attempt {
        release(env, eng, st, cluster, dest, txn, attempt);
        return Ok(());
    }
    if attempt > live.attempt {
        return Err(Error::Protocol {
            time: eng.now(),
            shard: dest,
            detail: format!("vote for future attempt {attempt} of {txn}"),
        });
    }
    if seq < live.min_seq.get(&dest).copied().unwrap_or(1) {
        return Ok(());
    }
    live.votes.insert(dest, commit);
    let n_dests = live.n_dests;
    let all_in = live.votes.len() == n_dests;
    let any_no = live.votes.values().any(|v| !v);
    if any_no {
        decide(env, eng, st, tr, faults, cluster, txn, false);
    } else if all_in {
        decide(env, eng, st, tr, faults, cluster, txn, true);
    }
    Ok(())
}

fn decide(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    faults: &mut FaultState,
    cluster: ClusterId,
    txn: TxnId,
    commit: bool,
) {
    let now = eng.now();
    let lead = st.stateless.get_mut(&cluster).unwrap();
    let live = lead.live.remove(&txn).unwrap();
    let body = lead.graph.remove(txn);
    lead.decided.insert(txn, (live.attempt, commit));
    lead.floor = lead.floor.max(live.color + 1);
    let from = lead.shard;

    tr.push(TraceEvent::Decide {
        t: now,
        cluster,
        txn,
        commit,
        attempt: live.attempt,
    });
    let rec = tr.record(txn);
    rec.committed = Some(commit);
    rec.attempts = live.attempt + 1;
    if !commit {
        rec.finalize_time = Some(now);
    }

    for dest in body.dests() {
        if faults.drop_confirm() {
            tr.push(TraceEvent::FaultDrop {
                t: now,
                detail: format!("confirm txn={txn} dest={dest}"),
            });
            continue;
        }
        post(
            env,
            eng,
            from,
            dest,
            Msg::Confirm {
                dest,
                txn,
                attempt: live.attempt,
                commit,
            },
        );
    }
    post(
        env,
        eng,
        from,
        body.home,
        Msg::Outcome {
            home: body.home,
            txn,
            commit,
        },
    );
}

pub(crate) fn on_ignore(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    cluster: ClusterId,
    txn: TxnId,
    dest: ShardId,
    attempt: u32,
    seq: u32,
) -> Result<()> {
    let now = eng.now();
    let lead = st.stateless_leader(env, cluster);
    if let Some(&(dec_attempt, _)) = lead.decided.get(&txn) {
        // Decided commit wins the race; the confirm already in flight will
        // free the destination. Stale attempts still need the release.
        if attempt < dec_attempt {
            release(env, eng, st, cluster, dest, txn, attempt);
        }
        return Ok(());
    }
    let Some(live) = lead.live.get_mut(&txn) else {
        return Ok(());
    };
    if attempt < live.attempt {
        release(env, eng, st, cluster, dest, txn, attempt);
        return Ok(());
    }
    if seq < live.min_seq.get(&dest).copied().unwrap_or(1) {
        return Ok(());
    }
    live.votes.remove(&dest);
    live.min_seq.insert(dest, seq + 1);
    tr.push(TraceEvent::IgnoreAck {
        t: now,
        cluster,
        txn,
        dest,
    });
    let from = lead.shard;
    post(
        env,
        eng,
        from,
        dest,
        Msg::IgnoredReply { dest, txn, attempt },
    );
    Ok(())
}

pub(crate) fn on_ignored_reply(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    dest: ShardId,
    txn: TxnId,
    attempt: u32,
) -> Result<()> {
    let d = &mut st.dests[dest.0];
    let matches = d
        .busy
        .as_ref()
        .is_some_and(|b| b.q.sub.txn == txn && b.q.attempt == attempt);
    if matches {
        let b = d.busy.take().unwrap();
        d.by_txn.insert(b.q.sub.txn, b.q.key);
        d.queue.insert(b.q.key, b.q);
        pump(env, eng, st, tr, dest);
    }
    Ok(())
}

pub(crate) fn on_confirm(
    env: &Env,
    eng: &mut Engine,
    st: &mut SimState,
    tr: &mut RunTrace,
    dest: ShardId,
    txn: TxnId,
    attempt: u32,
    commit: bool,
) -> Result<()> {
    let now = eng.now();
    tr.push(TraceEvent::Confirm {
        t: now,
        dest,
        txn,
        commit,
        attempt,
    });
    let d = &mut st.dests[dest.0];
    let busy_match = d
        .busy
        .as_ref()
        .is_some_and(|b| b.q.sub.txn == txn && b.q.attempt == attempt);
    if busy_match {
        let b = d.busy.take().unwrap();
        if commit {
            let initial = env.setup.workload.initial_balance;
            let mut wrote = false;
            for a in &b.q.sub.ops.accesses {
                if a.write {
                    d.credit(initial, a.account, a.delta);
                    wrote = true;
                }
            }
            if wrote {
                tr.push(TraceEvent::Apply { t: now, dest, txn });
                tr.record_apply(dest, txn, now, None);
            } else {
                let rec = tr.record(txn);
                rec.finalize_time = Some(rec.finalize_time.map_or(now, |f| f.max(now)));
            }
        }
        pump(env, eng, st, tr, dest);
        return Ok(());
    }
    if let Some(&key) = d.by_txn.get(&txn) {
        if d.queue[&key].attempt == attempt {
            if commit {
                return Err(Error::Protocol {
                    time: now,
                    shard: dest,
                    detail: format!("commit confirm for queued, unvoted {txn}"),
                });
            }
            d.queue.remove(&key);
            d.by_txn.remove(&txn);
        }
        return Ok(());
    }
    if commit {
        return Err(Error::Protocol {
            time: now,
            shard: dest,
            detail: format!("commit confirm for absent {txn}"),
        });
    }
    Ok(())
}
