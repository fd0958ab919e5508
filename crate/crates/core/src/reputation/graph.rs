//! The vouch graph built from settled trades.
//!
//! Each reviewed trade adds directed capacity buyer to seller equal to
//! the amount paid times the rating in thousandths. Paying real money
//! for good service is the only way to mint capacity, which is what
//! the flow backend leans on.

use std::collections::BTreeMap;

use crate::keys::NodeId;
use crate::money::Money;
use crate::trade::feedback::{Rating, TradeRecord};

use super::flow::Dinic;

#[derive(Default, Clone)]
pub struct InteractionGraph {
    nodes: Vec<NodeId>,
    index: BTreeMap<NodeId, usize>,
    cap: BTreeMap<(usize, usize), u128>,
}

impl InteractionGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: &[TradeRecord]) -> Self {
        let mut g = Self::new();
        for r in records {
            g.add_trade(r);
        }
        g
    }

    /// Index for `id`, creating it on first sight.
    pub fn add_node(&mut self, id: NodeId) -> usize {
        if let Some(&i) = self.index.get(&id) {
            return i;
        }
        let i = self.nodes.len();
        self.nodes.push(id);
        self.index.insert(id, i);
        i
    }

    pub fn add_trade(&mut self, record: &TradeRecord) {
        self.add_vouch(record.buyer, record.seller, record.amount, record.rating);
    }

    /// Capacity buyer to seller grows by amount times rating. A trade
    /// with oneself vouches for nothing and is dropped.
    pub fn add_vouch(&mut self, buyer: NodeId, seller: NodeId, amount: Money, rating: Rating) {
        if buyer == seller {
            return;
        }
        let b = self.add_node(buyer);
        let s = self.add_node(seller);
        let weight = u128::from(amount.amount()) * u128::from(rating.milli());
        *self.cap.entry((b, s)).or_insert(0) += weight;
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, i: usize) -> Option<&NodeId> {
        self.nodes.get(i)
    }

    pub fn index_of(&self, id: &NodeId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn capacity(&self, from: usize, to: usize) -> u128 {
        self.cap.get(&(from, to)).copied().unwrap_or(0)
    }

    /// Total capacity leaving `from`: everything this node ever paid
    /// for, weighted by its ratings.
    pub fn out_capacity(&self, from: usize) -> u128 {
        self.cap
            .range((from, 0)..=(from, usize::MAX))
            .map(|(_, c)| *c)
            .sum()
    }

    /// Edges as (from, to, capacity).
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, u128)> + '_ {
        self.cap.iter().map(|(&(u, v), &c)| (u, v, c))
    }

    /// Exact max flow between two vertices of this graph.
    pub fn max_flow_between(&self, s: usize, t: usize) -> u128 {
        if s == t || s >= self.node_count() || t >= self.node_count() {
            return 0;
        }
        let mut dinic = Dinic::new(self.node_count());
        for (u, v, c) in self.edges() {
            dinic.add_edge(u, v, c);
        }
        dinic.max_flow(s, t)
    }
}
