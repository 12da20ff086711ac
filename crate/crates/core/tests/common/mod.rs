#![allow(dead_code)]

use std::path::PathBuf;

use pullstream::events::{parse_trace, Event, History, Trace};
use pullstream::order::{Operand, OrderExpr, QuantKind, RelOp, Relation};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn ev(s: &str) -> Event {
    s.parse().unwrap_or_else(|e| panic!("{s}: {e}"))
}

pub fn hist(events: &[&str]) -> History {
    History::from_events(events.iter().map(|s| ev(s))).unwrap()
}

pub fn fixture(name: &str) -> Trace {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name);
    let text = std::fs::read_to_string(&path).unwrap();
    parse_trace(&text).unwrap()
}

/// `k` distinct concrete events, in a fixed order.
pub fn labels(k: usize) -> Vec<Event> {
    (1..=k).map(|i| ev(&format!("A: ask[x_{i}]"))).collect()
}

/// Random partial order over events drawn from `pool`, at most `nodes`
/// nodes, with occasional `empty` leaves.
pub fn random_order<R: Rng>(rng: &mut R, nodes: usize, pool: &[Event]) -> OrderExpr {
    if nodes < 3 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.15) {
            OrderExpr::Empty
        } else {
            OrderExpr::Event(pool.choose(rng).unwrap().clone())
        };
    }
    let left = rng.gen_range(1..nodes - 1);
    let a = random_order(rng, left, pool);
    let b = random_order(rng, nodes - 1 - left, pool);
    match rng.gen_range(0..3) {
        0 => OrderExpr::seq(a, b),
        1 => OrderExpr::and(a, b),
        _ => OrderExpr::or(a, b),
    }
}

fn random_index<R: Rng>(rng: &mut R) -> &'static str {
    ["1", "3", "i", "j", "{i-1}", "{j+1}"].choose(rng).unwrap()
}

/// A random event covering every syntactic form the language accepts.
pub fn random_event<R: Rng>(rng: &mut R) -> Event {
    let port = ["A", "TI", "UO_2", "C"].choose(rng).unwrap();
    let p = ["", "'", "''"].choose(rng).unwrap();
    let i = random_index(rng);
    let text = match rng.gen_range(0..10) {
        0 => format!("{port}: ask[x{p}_{i}]"),
        1 => format!("{port}: abort[x{p}_{i}]"),
        2 => format!("{port}: error[err, x{p}_{i}]"),
        3 => format!("{port}: error[err_2, x{p}_{i}]"),
        4 => format!("{port}: ping[x{p}_{i}]"),
        5 => format!("{port}: x{p}_{i} := v{p}_{i}"),
        6 => format!("{port}: x{p}_{i} := done"),
        7 => format!("{port}: x{p}_{i} := err"),
        8 => format!("{port}: x{p}_{i} := pong"),
        _ => format!("{port}: cb_{i}(x{p}_{i})"),
    };
    ev(&text)
}

fn random_operand<R: Rng>(rng: &mut R) -> Operand {
    if rng.gen_bool(0.3) {
        Operand::Num(rng.gen_range(0..4))
    } else {
        Operand::Var {
            name: ["i", "j", "n", "r"].choose(rng).unwrap().to_string(),
            offset: rng.gen_range(-1..=2),
        }
    }
}

fn random_relation<R: Rng>(rng: &mut R) -> Relation {
    let ops = [RelOp::Eq, RelOp::Ne, RelOp::Lt, RelOp::Le, RelOp::Gt, RelOp::Ge];
    let mut rel = Relation {
        first: random_operand(rng),
        rest: vec![(*ops.choose(rng).unwrap(), random_operand(rng))],
    };
    if rng.gen_bool(0.2) {
        rel.rest.push((*ops.choose(rng).unwrap(), random_operand(rng)));
    }
    rel
}

/// Random antecedent with relations, negation and quantifiers.
pub fn random_antecedent<R: Rng>(rng: &mut R, nodes: usize) -> OrderExpr {
    if nodes < 2 || rng.gen_bool(0.2) {
        return match rng.gen_range(0..10) {
            0 => OrderExpr::Empty,
            1 => OrderExpr::Bool(rng.gen()),
            2 | 3 => OrderExpr::Rel(random_relation(rng)),
            _ => OrderExpr::Event(random_event(rng)),
        };
    }
    match rng.gen_range(0..5) {
        0 => OrderExpr::not(random_antecedent(rng, nodes - 1)),
        1 => {
            let vars = if rng.gen_bool(0.5) { vec!["i".into()] } else { vec!["i".into(), "j".into()] };
            OrderExpr::Quant {
                kind: if rng.gen_bool(0.5) { QuantKind::Exists } else { QuantKind::Forall },
                vars,
                body: Box::new(random_antecedent(rng, nodes - 1)),
            }
        }
        k => {
            if nodes < 3 {
                return random_antecedent(rng, 1);
            }
            let left = rng.gen_range(1..nodes - 1);
            let a = random_antecedent(rng, left);
            let b = random_antecedent(rng, nodes - 1 - left);
            match k {
                2 => OrderExpr::seq(a, b),
                3 => OrderExpr::and(a, b),
                _ => OrderExpr::or(a, b),
            }
        }
    }
}

/// Every binary tree over the given leaves, in order, with each inner node
/// one of `->`, `&`, `|`.
pub fn all_trees(leaves: &[OrderExpr]) -> Vec<OrderExpr> {
    if leaves.len() == 1 {
        return vec![leaves[0].clone()];
    }
    let mut out = Vec::new();
    for split in 1..leaves.len() {
        let lefts = all_trees(&leaves[..split]);
        let rights = all_trees(&leaves[split..]);
        for a in &lefts {
            for b in &rights {
                out.push(OrderExpr::seq(a.clone(), b.clone()));
                out.push(OrderExpr::and(a.clone(), b.clone()));
                out.push(OrderExpr::or(a.clone(), b.clone()));
            }
        }
    }
    out
}

/// Every ordered selection of distinct items from `items` (all lengths).
pub fn arrangements<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<(Vec<T>, Vec<usize>)> = vec![(Vec::new(), (0..items.len()).collect())];
    while let Some((prefix, rest)) = frontier.pop() {
        for (k, &idx) in rest.iter().enumerate() {
            let mut p = prefix.clone();
            p.push(items[idx].clone());
            let mut r = rest.clone();
            r.remove(k);
            out.push(p.clone());
            frontier.push((p, r));
        }
    }
    out
}
