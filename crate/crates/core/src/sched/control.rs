//! Region tokens: the mutual-exclusion layer for multi-leader
//! state-shipping.
//!
//! Every base cluster (height `(0,0)`) owns one token. A cluster may run a
//! scheduling round only while holding the tokens of all base clusters it
//! overlaps; since any two overlapping clusters share a shard, they share
//! that shard's base cluster too, so their rounds are serialized by its
//! token.
//!
//! Tokens move by grant chains: the granter remembers who it gave a token
//! to, and requests chase those forwarding pointers from the base owner
//! until they reach the current holder. A busy holder defers requests to
//! its round end; an idle holder that still wants the token yields only to
//! higher-priority clusters. Priority is total: greater height first, then
//! smaller cluster id.

use crate::cover::{ClusterId, CoverHierarchy};
use std::collections::{BTreeMap, BTreeSet};

/// True when `a` outranks `b` for token acquisition.
pub fn outranks(hier: &CoverHierarchy, a: ClusterId, b: ClusterId) -> bool {
    let ha = hier.cluster(a).height;
    let hb = hier.cluster(b).height;
    ha > hb || (ha == hb && a < b)
}

/// What the token layer wants the protocol driver to do.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenAction {
    /// Hand `token` to `to` (works for returns too; the receiver is then
    /// the holder).
    Grant { token: ClusterId, to: ClusterId },
    /// Pass a request along the forwarding chain.
    Forward {
        token: ClusterId,
        requester: ClusterId,
        to: ClusterId,
        hops: u32,
    },
    /// Give an unwanted token back to its base owner.
    Return { token: ClusterId, to: ClusterId },
}

#[derive(Debug, Default)]
pub struct TokenCtl {
    pub held: BTreeSet<ClusterId>,
    /// Last known direction each token left in.
    ptr: BTreeMap<ClusterId, ClusterId>,
    /// Requests parked until this cluster finishes its round.
    deferred: BTreeMap<ClusterId, BTreeSet<ClusterId>>,
    /// Tokens already asked for and not yet granted.
    outstanding: BTreeSet<ClusterId>,
}

impl TokenCtl {
    pub fn new(own: Option<ClusterId>) -> TokenCtl {
        let mut held = BTreeSet::new();
        if let Some(t) = own {
            held.insert(t);
        }
        TokenCtl {
            held,
            ptr: BTreeMap::new(),
            deferred: BTreeMap::new(),
            outstanding: BTreeSet::new(),
        }
    }

    pub fn holds_all(&self, base: &[ClusterId]) -> bool {
        base.iter().all(|t| self.held.contains(t))
    }

    /// Tokens still to request; marks them outstanding.
    pub fn take_missing(&mut self, base: &[ClusterId]) -> Vec<ClusterId> {
        let missing: Vec<ClusterId> = base
            .iter()
            .copied()
            .filter(|t| !self.held.contains(t) && !self.outstanding.contains(t))
            .collect();
        self.outstanding.extend(missing.iter().copied());
        missing
    }

    fn grant(&mut self, token: ClusterId, to: ClusterId) -> TokenAction {
        self.held.remove(&token);
        self.ptr.insert(token, to);
        TokenAction::Grant { token, to }
    }

    /// Handles a request arriving at cluster `me`. `busy` means a round,
    /// state gather, or unacked batch is in flight; `wants` means `me`
    /// still has scheduling work of its own.
    pub fn on_request(
        &mut self,
        hier: &CoverHierarchy,
        me: ClusterId,
        token: ClusterId,
        requester: ClusterId,
        hops: u32,
        busy: bool,
        wants: bool,
    ) -> Vec<TokenAction> {
        if !self.held.contains(&token) {
            // Not here: chase the pointer, or send back to the base owner.
            let to = self.ptr.get(&token).copied().unwrap_or(token);
            debug_assert_ne!(to, me, "forwarding a token request to ourselves");
            return vec![TokenAction::Forward {
                token,
                requester,
                to,
                hops: hops + 1,
            }];
        }
        if busy || (wants && outranks(hier, me, requester)) {
            self.deferred.entry(token).or_default().insert(requester);
            return Vec::new();
        }
        vec![self.grant(token, requester)]
    }

    pub fn on_grant(&mut self, token: ClusterId) {
        self.held.insert(token);
        self.outstanding.remove(&token);
        self.ptr.remove(&token);
    }

    /// Round-end settlement: serve deferred requests (best requester gets
    /// the token, the rest chase it), then return every token this idle
    /// cluster has no claim on to its base owner.
    pub fn settle(&mut self, hier: &CoverHierarchy, me: ClusterId, wants: bool) -> Vec<TokenAction> {
        let mut actions = Vec::new();
        let tokens: Vec<ClusterId> = self.deferred.keys().copied().collect();
        for token in tokens {
            if !self.held.contains(&token) {
                // Lost it since deferring; requests chase the pointer.
                let to = self.ptr.get(&token).copied().unwrap_or(token);
                for requester in self.deferred.remove(&token).unwrap() {
                    if requester != to {
                        actions.push(TokenAction::Forward {
                            token,
                            requester,
                            to,
                            hops: 0,
                        });
                    }
                }
                continue;
            }
            let requesters = self.deferred.remove(&token).unwrap();
            let best = requesters
                .iter()
                .copied()
                .reduce(|a, b| if outranks(hier, b, a) { b } else { a })
                .unwrap();
            actions.push(self.grant(token, best));
            for requester in requesters {
                if requester != best {
                    actions.push(TokenAction::Forward {
                        token,
                        requester,
                        to: best,
                        hops: 0,
                    });
                }
            }
        }
        if !wants {
            let returns: Vec<ClusterId> =
                self.held.iter().copied().filter(|&t| t != me).collect();
            for token in returns {
                self.held.remove(&token);
                self.ptr.insert(token, token);
                actions.push(TokenAction::Return { token, to: token });
            }
        }
        actions
    }
}
