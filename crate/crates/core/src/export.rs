//! Node-link export of the usage graph for external visualizers.

use std::cmp::Reverse;
use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::graph::{Graph, ItemIdx, UserIdx};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    User,
    Item,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportNode {
    /// `user:<id>` or `item:<id>`; unique even when a user and an item share an id.
    pub id: String,
    pub kind: NodeKind,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportLink {
    pub source: String,
    pub target: String,
    pub count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeLinkDocument {
    pub nodes: Vec<ExportNode>,
    pub links: Vec<ExportLink>,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Node {
    User(UserIdx),
    Item(ItemIdx),
}

fn node_id(kind: NodeKind, label: &str) -> String {
    match kind {
        NodeKind::User => format!("user:{label}"),
        NodeKind::Item => format!("item:{label}"),
    }
}

/// Export the whole graph, or with `limit_nodes` a breadth-first slice that
/// starts from the highest-degree node (restarting from the next
/// highest-degree unvisited node when a component runs out).
pub fn node_link(graph: &Graph, limit_nodes: Option<usize>) -> NodeLinkDocument {
    let describe = |node: Node| -> (NodeKind, &str, usize) {
        match node {
            Node::User(u) => (NodeKind::User, graph.user_name(u), graph.user_degree(u)),
            Node::Item(i) => (NodeKind::Item, graph.item_name(i), graph.item_degree(i)),
        }
    };
    let by_prominence = |a: &Node, b: &Node| {
        let (ka, la, da) = describe(*a);
        let (kb, lb, db) = describe(*b);
        (Reverse(da), ka, la).cmp(&(Reverse(db), kb, lb))
    };

    let mut all: Vec<Node> = (0..graph.user_count() as u32)
        .map(|u| Node::User(UserIdx(u)))
        .chain((0..graph.item_count() as u32).map(|i| Node::Item(ItemIdx(i))))
        .collect();

    let selected: Vec<Node> = match limit_nodes {
        None => {
            all.sort_by(|a, b| {
                let (ka, la, _) = describe(*a);
                let (kb, lb, _) = describe(*b);
                (ka, la).cmp(&(kb, lb))
            });
            all
        }
        Some(limit) => {
            all.sort_by(by_prominence);
            let mut picked = Vec::with_capacity(limit.min(all.len()));
            let mut seen = HashSet::new();
            'outer: for &start in &all {
                if picked.len() >= limit {
                    break;
                }
                if !seen.insert(start) {
                    continue;
                }
                let mut queue = VecDeque::from([start]);
                while let Some(node) = queue.pop_front() {
                    picked.push(node);
                    if picked.len() >= limit {
                        break 'outer;
                    }
                    let mut next: Vec<Node> = match node {
                        Node::User(u) => graph
                            .user_edges(u)
                            .iter()
                            .map(|&e| Node::Item(graph.edge_record(e).item))
                            .collect(),
                        Node::Item(i) => graph
                            .item_edges(i)
                            .iter()
                            .map(|&e| Node::User(graph.edge_record(e).user))
                            .collect(),
                    };
                    next.sort_by(by_prominence);
                    for n in next {
                        if seen.insert(n) {
                            queue.push_back(n);
                        }
                    }
                }
            }
            picked
        }
    };

    let included: HashSet<Node> = selected.iter().copied().collect();
    let nodes = selected
        .iter()
        .map(|&n| {
            let (kind, label, _) = describe(n);
            ExportNode {
                id: node_id(kind, label),
                kind,
                label: label.to_owned(),
            }
        })
        .collect();

    let mut links: Vec<ExportLink> = Vec::new();
    for &node in &selected {
        if let Node::User(u) = node {
            for &e in graph.user_edges(u) {
                let record = graph.edge_record(e);
                if included.contains(&Node::Item(record.item)) {
                    links.push(ExportLink {
                        source: node_id(NodeKind::User, graph.user_name(u)),
                        target: node_id(NodeKind::Item, graph.item_name(record.item)),
                        count: record.total,
                    });
                }
            }
        }
    }
    links.sort_by(|a, b| (&a.source, &a.target).cmp(&(&b.source, &b.target)));
    NodeLinkDocument { nodes, links }
}
