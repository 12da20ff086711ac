//! Partial orders and antecedents over events, their normalization rewrite
//! system, and enumeration of the histories a normalized order describes.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::events::Event;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QuantKind {
    Exists,
    Forall,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl RelOp {
    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            RelOp::Eq => lhs == rhs,
            RelOp::Ne => lhs != rhs,
            RelOp::Lt => lhs < rhs,
            RelOp::Le => lhs <= rhs,
            RelOp::Gt => lhs > rhs,
            RelOp::Ge => lhs >= rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Eq => "=",
            RelOp::Ne => "!=",
            RelOp::Lt => "<",
            RelOp::Le => "=<",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
        }
    }
}

/// A relation operand: a number, or a variable plus a constant offset.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operand {
    Num(u64),
    Var { name: String, offset: i64 },
}

impl Operand {
    pub fn var(name: &str) -> Operand {
        Operand::Var {
            name: name.to_string(),
            offset: 0,
        }
    }
}

/// A chain such as `r < i =< n`; holds when every adjacent pair holds.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Relation {
    pub first: Operand,
    pub rest: Vec<(RelOp, Operand)>,
}

impl Relation {
    pub fn binary(lhs: Operand, op: RelOp, rhs: Operand) -> Relation {
        Relation {
            first: lhs,
            rest: vec![(op, rhs)],
        }
    }

    pub fn operands(&self) -> impl Iterator<Item = &Operand> {
        std::iter::once(&self.first).chain(self.rest.iter().map(|(_, o)| o))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OrderExpr {
    Event(Event),
    /// `a -> b`: everything in `a` happens before everything in `b`.
    Seq(Box<OrderExpr>, Box<OrderExpr>),
    /// `a & b`: both, in any interleaving.
    And(Box<OrderExpr>, Box<OrderExpr>),
    /// `a | b`: exactly one of the two.
    Or(Box<OrderExpr>, Box<OrderExpr>),
    Not(Box<OrderExpr>),
    Quant {
        kind: QuantKind,
        vars: Vec<String>,
        body: Box<OrderExpr>,
    },
    Rel(Relation),
    Bool(bool),
    /// Reference to a boolean rule-set parameter such as `err` or `w`.
    Flag(String),
    Empty,
}

impl From<Event> for OrderExpr {
    fn from(e: Event) -> Self {
        if e.is_empty() {
            OrderExpr::Empty
        } else {
            OrderExpr::Event(e)
        }
    }
}

impl OrderExpr {
    pub fn seq(a: OrderExpr, b: OrderExpr) -> OrderExpr {
        OrderExpr::Seq(Box::new(a), Box::new(b))
    }

    pub fn and(a: OrderExpr, b: OrderExpr) -> OrderExpr {
        OrderExpr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: OrderExpr, b: OrderExpr) -> OrderExpr {
        OrderExpr::Or(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: OrderExpr) -> OrderExpr {
        OrderExpr::Not(Box::new(a))
    }

    fn fold_right(
        items: impl IntoIterator<Item = OrderExpr>,
        join: fn(OrderExpr, OrderExpr) -> OrderExpr,
    ) -> Option<OrderExpr> {
        let items: Vec<_> = items.into_iter().collect();
        items.into_iter().rev().reduce(|acc, item| join(item, acc))
    }

    /// Right-associated sequence; `Empty` for no items.
    pub fn seq_all(items: impl IntoIterator<Item = OrderExpr>) -> OrderExpr {
        OrderExpr::fold_right(items, OrderExpr::seq).unwrap_or(OrderExpr::Empty)
    }

    pub fn and_all(items: impl IntoIterator<Item = OrderExpr>) -> OrderExpr {
        OrderExpr::fold_right(items, OrderExpr::and).unwrap_or(OrderExpr::Empty)
    }

    pub fn or_all(items: impl IntoIterator<Item = OrderExpr>) -> OrderExpr {
        OrderExpr::fold_right(items, OrderExpr::or).unwrap_or(OrderExpr::Empty)
    }

    /// Number of AST nodes.
    pub fn size(&self) -> usize {
        match self {
            OrderExpr::Seq(a, b) | OrderExpr::And(a, b) | OrderExpr::Or(a, b) => {
                1 + a.size() + b.size()
            }
            OrderExpr::Not(a) => 1 + a.size(),
            OrderExpr::Quant { body, .. } => 1 + body.size(),
            _ => 1,
        }
    }

    /// Events in left-to-right order (with repetitions).
    pub fn events(&self) -> Vec<&Event> {
        let mut out = Vec::new();
        self.visit_events(&mut |e| out.push(e));
        out
    }

    pub fn visit_events<'a>(&'a self, f: &mut impl FnMut(&'a Event)) {
        match self {
            OrderExpr::Event(e) => f(e),
            OrderExpr::Seq(a, b) | OrderExpr::And(a, b) | OrderExpr::Or(a, b) => {
                a.visit_events(f);
                b.visit_events(f);
            }
            OrderExpr::Not(a) => a.visit_events(f),
            OrderExpr::Quant { body, .. } => body.visit_events(f),
            _ => {}
        }
    }

    /// Rebuilds the expression with every event passed through `f`.
    pub fn map_events(&self, f: &impl Fn(&Event) -> Event) -> OrderExpr {
        let bin = |a: &OrderExpr, b: &OrderExpr| (Box::new(a.map_events(f)), Box::new(b.map_events(f)));
        match self {
            OrderExpr::Event(e) => OrderExpr::Event(f(e)),
            OrderExpr::Seq(a, b) => {
                let (a, b) = bin(a, b);
                OrderExpr::Seq(a, b)
            }
            OrderExpr::And(a, b) => {
                let (a, b) = bin(a, b);
                OrderExpr::And(a, b)
            }
            OrderExpr::Or(a, b) => {
                let (a, b) = bin(a, b);
                OrderExpr::Or(a, b)
            }
            OrderExpr::Not(a) => OrderExpr::Not(Box::new(a.map_events(f))),
            OrderExpr::Quant { kind, vars, body } => OrderExpr::Quant {
                kind: *kind,
                vars: vars.clone(),
                body: Box::new(body.map_events(f)),
            },
            other => other.clone(),
        }
    }

    fn has_unsupported(&self) -> bool {
        match self {
            OrderExpr::Not(_) | OrderExpr::Quant { .. } => true,
            OrderExpr::Seq(a, b) | OrderExpr::And(a, b) | OrderExpr::Or(a, b) => {
                a.has_unsupported() || b.has_unsupported()
            }
            _ => false,
        }
    }

    /// True when no rewrite rule applies anywhere in the expression.
    pub fn is_rewrite_normal(&self) -> bool {
        if RewriteRule::ALL.iter().any(|r| r.apply(self).is_some()) {
            return false;
        }
        match self {
            OrderExpr::Seq(a, b) | OrderExpr::And(a, b) | OrderExpr::Or(a, b) => {
                a.is_rewrite_normal() && b.is_rewrite_normal()
            }
            OrderExpr::Not(a) => a.is_rewrite_normal(),
            OrderExpr::Quant { body, .. } => body.is_rewrite_normal(),
            _ => true,
        }
    }

    /// True when the expression is made only of event sequences joined by
    /// `&` and `|`, with `empty` allowed only as the whole expression.
    pub fn is_normal_form(&self) -> bool {
        fn chain(x: &OrderExpr) -> bool {
            match x {
                OrderExpr::Seq(a, b) => chain(a) && chain(b),
                OrderExpr::Event(_)
                | OrderExpr::Rel(_)
                | OrderExpr::Bool(_)
                | OrderExpr::Flag(_)
                | OrderExpr::Not(_)
                | OrderExpr::Quant { .. } => true,
                _ => false,
            }
        }
        fn inner(x: &OrderExpr) -> bool {
            match x {
                OrderExpr::And(a, b) | OrderExpr::Or(a, b) => inner(a) && inner(b),
                OrderExpr::Empty => false,
                other => chain(other),
            }
        }
        matches!(self, OrderExpr::Empty) || inner(self)
    }
}

/// The normalization rewrite rules. `Seq` plays the role of `before` in the
/// term-rewriting presentation of the system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RewriteRule {
    /// `x -> (y & z)  ~>  (x -> y) & (x -> z)`
    SeqAndRight,
    /// `(x & y) -> z  ~>  (x -> z) & (y -> z)`
    SeqAndLeft,
    /// `x -> (y | z)  ~>  (x -> y) | (x -> z)`
    SeqOrRight,
    /// `(x | y) -> z  ~>  (x -> z) | (y -> z)`
    SeqOrLeft,
    /// `x -> empty  ~>  x`
    SeqEmptyRight,
    /// `empty -> x  ~>  x`
    SeqEmptyLeft,
    /// `(x -> empty) -> y  ~>  x -> y`
    SeqInnerEmptyLeft,
    /// `x -> (empty -> y)  ~>  x -> y`
    SeqInnerEmptyRight,
    /// `x & empty  ~>  x`
    AndEmptyRight,
    /// `empty & x  ~>  x`
    AndEmptyLeft,
    /// `x | empty  ~>  x`
    OrEmptyRight,
    /// `empty | x  ~>  x`
    OrEmptyLeft,
}

impl RewriteRule {
    /// In priority order: when several rules match the same node, the first wins.
    pub const ALL: [RewriteRule; 12] = [
        RewriteRule::SeqAndRight,
        RewriteRule::SeqAndLeft,
        RewriteRule::SeqOrRight,
        RewriteRule::SeqOrLeft,
        RewriteRule::SeqEmptyRight,
        RewriteRule::SeqEmptyLeft,
        RewriteRule::SeqInnerEmptyLeft,
        RewriteRule::SeqInnerEmptyRight,
        RewriteRule::AndEmptyRight,
        RewriteRule::AndEmptyLeft,
        RewriteRule::OrEmptyRight,
        RewriteRule::OrEmptyLeft,
    ];

    /// Applies the rule at the root of `x`, if it matches there.
    pub fn apply(self, x: &OrderExpr) -> Option<OrderExpr> {
        use OrderExpr::*;
        let c = |b: &OrderExpr| b.clone();
        match (self, x) {
            (RewriteRule::SeqAndRight, Seq(a, b)) => match &**b {
                And(y, z) => Some(OrderExpr::and(
                    OrderExpr::seq(c(a), c(y)),
                    OrderExpr::seq(c(a), c(z)),
                )),
                _ => None,
            },
            (RewriteRule::SeqAndLeft, Seq(a, b)) => match &**a {
                And(x, y) => Some(OrderExpr::and(
                    OrderExpr::seq(c(x), c(b)),
                    OrderExpr::seq(c(y), c(b)),
                )),
                _ => None,
            },
            (RewriteRule::SeqOrRight, Seq(a, b)) => match &**b {
                Or(y, z) => Some(OrderExpr::or(
                    OrderExpr::seq(c(a), c(y)),
                    OrderExpr::seq(c(a), c(z)),
                )),
                _ => None,
            },
            (RewriteRule::SeqOrLeft, Seq(a, b)) => match &**a {
                Or(x, y) => Some(OrderExpr::or(
                    OrderExpr::seq(c(x), c(b)),
                    OrderExpr::seq(c(y), c(b)),
                )),
                _ => None,
            },
            (RewriteRule::SeqEmptyRight, Seq(a, b)) if **b == Empty => Some(c(a)),
            (RewriteRule::SeqEmptyLeft, Seq(a, b)) if **a == Empty => Some(c(b)),
            (RewriteRule::SeqInnerEmptyLeft, Seq(a, b)) => match &**a {
                Seq(x, e) if **e == Empty => Some(OrderExpr::seq(c(x), c(b))),
                _ => None,
            },
            (RewriteRule::SeqInnerEmptyRight, Seq(a, b)) => match &**b {
                Seq(e, y) if **e == Empty => Some(OrderExpr::seq(c(a), c(y))),
                _ => None,
            },
            (RewriteRule::AndEmptyRight, And(a, b)) if **b == Empty => Some(c(a)),
            (RewriteRule::AndEmptyLeft, And(a, b)) if **a == Empty => Some(c(b)),
            (RewriteRule::OrEmptyRight, Or(a, b)) if **b == Empty => Some(c(a)),
            (RewriteRule::OrEmptyLeft, Or(a, b)) if **a == Empty => Some(c(b)),
            _ => None,
        }
    }

    fn first_match(x: &OrderExpr) -> Option<(OrderExpr, RewriteRule)> {
        RewriteRule::ALL
            .iter()
            .find_map(|r| r.apply(x).map(|out| (out, *r)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum OrderError {
    #[error("normalization does not support negation or quantifiers")]
    Unsupported,
    #[error("normalization did not reach a fixed point within {0} steps")]
    StepLimit(usize),
    #[error("linearization needs concrete events, found `{0}`")]
    NotConcrete(String),
    #[error("linearization needs a normalized order without relations or flags, found `{0}`")]
    NotLinearizable(String),
    #[error("event `{0}` appears more than once in one branch")]
    DuplicateEvent(Event),
    #[error("history of {len} events exceeds the bound of {bound}")]
    BoundExceeded { len: usize, bound: usize },
    #[error("more than {0} linearizations")]
    TooMany(usize),
}

pub const DEFAULT_STEP_LIMIT: usize = 10_000;

/// Result of a normalization run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Normalization {
    pub expr: OrderExpr,
    /// Rules applied, in order.
    pub steps: Vec<RewriteRule>,
}

/// Applies one rewrite at the leftmost-innermost redex. Negations and
/// quantifiers are treated as opaque atoms.
pub fn rewrite_step(x: &OrderExpr) -> Option<(OrderExpr, RewriteRule)> {
    use OrderExpr::*;
    let rebuild = |a: &OrderExpr, b: &OrderExpr, which_left: bool, new: OrderExpr| -> OrderExpr {
        let (l, r) = if which_left {
            (new, b.clone())
        } else {
            (a.clone(), new)
        };
        match x {
            Seq(..) => OrderExpr::seq(l, r),
            And(..) => OrderExpr::and(l, r),
            Or(..) => OrderExpr::or(l, r),
            _ => unreachable!(),
        }
    };
    match x {
        Seq(a, b) | And(a, b) | Or(a, b) => {
            if let Some((new, rule)) = rewrite_step(a) {
                return Some((rebuild(a, b, true, new), rule));
            }
            if let Some((new, rule)) = rewrite_step(b) {
                return Some((rebuild(a, b, false, new), rule));
            }
            RewriteRule::first_match(x)
        }
        _ => None,
    }
}

/// Rewrites to a fixed point, recording every rule application.
pub fn normalize_traced(x: &OrderExpr, step_limit: usize) -> Result<Normalization, OrderError> {
    if x.has_unsupported() {
        return Err(OrderError::Unsupported);
    }
    run_rewrites(x.clone(), step_limit)
}

fn run_rewrites(mut x: OrderExpr, step_limit: usize) -> Result<Normalization, OrderError> {
    let mut steps = Vec::new();
    while let Some((next, rule)) = rewrite_step(&x) {
        if steps.len() == step_limit {
            return Err(OrderError::StepLimit(step_limit));
        }
        steps.push(rule);
        x = next;
    }
    Ok(Normalization { expr: x, steps })
}

/// Normalizes a partial order or quantifier-free antecedent.
pub fn normalize(x: &OrderExpr) -> Result<OrderExpr, OrderError> {
    normalize_traced(x, DEFAULT_STEP_LIMIT).map(|n| n.expr)
}

/// Normalizes an arbitrary antecedent: bodies of negations and quantifiers
/// are normalized in place and the nodes themselves act as atoms.
pub fn normalize_antecedent(x: &OrderExpr) -> Result<OrderExpr, OrderError> {
    fn inner(x: &OrderExpr) -> Result<OrderExpr, OrderError> {
        Ok(match x {
            OrderExpr::Not(a) => OrderExpr::not(normalize_antecedent(a)?),
            OrderExpr::Quant { kind, vars, body } => OrderExpr::Quant {
                kind: *kind,
                vars: vars.clone(),
                body: Box::new(normalize_antecedent(body)?),
            },
            OrderExpr::Seq(a, b) => OrderExpr::seq(inner(a)?, inner(b)?),
            OrderExpr::And(a, b) => OrderExpr::and(inner(a)?, inner(b)?),
            OrderExpr::Or(a, b) => OrderExpr::or(inner(a)?, inner(b)?),
            other => other.clone(),
        })
    }
    run_rewrites(inner(x)?, DEFAULT_STEP_LIMIT).map(|n| n.expr)
}

pub const DEFAULT_LINEARIZATION_CAP: usize = 1_000_000;

/// Enumerates every history compatible with a normalized, concrete order:
/// each `|` branch separately, each `&` as all interleavings that respect
/// both sides (events shared between the sides occur once), each `->` in
/// order. The result is sorted and free of duplicates.
pub fn linearize(x: &OrderExpr, bound: usize) -> Result<Vec<Vec<Event>>, OrderError> {
    linearize_capped(x, bound, DEFAULT_LINEARIZATION_CAP)
}

pub fn linearize_capped(
    x: &OrderExpr,
    bound: usize,
    cap: usize,
) -> Result<Vec<Vec<Event>>, OrderError> {
    let mut lin = Linearizer {
        ids: HashMap::new(),
        events: Vec::new(),
        cap,
    };
    let seqs = lin.run(x)?;
    // merging `&` sides can pick different `|` branches on each side; keep
    // only the histories where exactly one branch of every choice holds
    let mut out: Vec<Vec<Event>> = seqs
        .into_iter()
        .map(|s| s.into_iter().map(|id| lin.events[id as usize].clone()).collect::<Vec<_>>())
        .filter(|h| {
            let pos: HashMap<&Event, usize> = h.iter().enumerate().map(|(k, e)| (e, k)).collect();
            satisfied(x, &pos)
        })
        .collect();
    if let Some(long) = out.iter().find(|s| s.len() > bound) {
        return Err(OrderError::BoundExceeded {
            len: long.len(),
            bound,
        });
    }
    out.sort();
    Ok(out)
}

fn satisfied(x: &OrderExpr, pos: &HashMap<&Event, usize>) -> bool {
    fn chain<'a>(x: &'a OrderExpr, out: &mut Vec<&'a Event>) {
        match x {
            OrderExpr::Seq(a, b) => {
                chain(a, out);
                chain(b, out);
            }
            OrderExpr::Event(e) => out.push(e),
            _ => {}
        }
    }
    fn branches<'a>(x: &'a OrderExpr, out: &mut Vec<&'a OrderExpr>) {
        match x {
            OrderExpr::Or(a, b) => {
                branches(a, out);
                branches(b, out);
            }
            other => out.push(other),
        }
    }
    match x {
        OrderExpr::Empty => true,
        OrderExpr::Event(_) | OrderExpr::Seq(..) => {
            let mut events = Vec::new();
            chain(x, &mut events);
            let mut last = None;
            events.iter().all(|e| match pos.get(e) {
                Some(&p) if last.map_or(true, |l| l < p) => {
                    last = Some(p);
                    true
                }
                _ => false,
            })
        }
        OrderExpr::And(a, b) => satisfied(a, pos) && satisfied(b, pos),
        OrderExpr::Or(..) => {
            let mut bs = Vec::new();
            branches(x, &mut bs);
            bs.iter().filter(|b| satisfied(b, pos)).count() == 1
        }
        _ => false,
    }
}

struct Linearizer {
    ids: HashMap<Event, u32>,
    events: Vec<Event>,
    cap: usize,
}

impl Linearizer {
    fn id(&mut self, e: &Event) -> u32 {
        if let Some(id) = self.ids.get(e) {
            return *id;
        }
        let id = self.events.len() as u32;
        self.ids.insert(e.clone(), id);
        self.events.push(e.clone());
        id
    }

    fn check_cap(&self, n: usize) -> Result<(), OrderError> {
        if n > self.cap {
            Err(OrderError::TooMany(self.cap))
        } else {
            Ok(())
        }
    }

    fn run(&mut self, x: &OrderExpr) -> Result<BTreeSet<Vec<u32>>, OrderError> {
        match x {
            OrderExpr::Empty => Ok(BTreeSet::from([Vec::new()])),
            OrderExpr::Event(_) | OrderExpr::Seq(..) => {
                let mut chain = Vec::new();
                self.chain(x, &mut chain)?;
                let mut seen = BTreeSet::new();
                if chain.iter().all(|id| seen.insert(*id)) {
                    Ok(BTreeSet::from([chain]))
                } else {
                    // a -> ... -> a can never be satisfied by a history
                    Ok(BTreeSet::new())
                }
            }
            OrderExpr::Or(a, b) => {
                let mut out = self.run(a)?;
                out.extend(self.run(b)?);
                self.check_cap(out.len())?;
                Ok(out)
            }
            OrderExpr::And(a, b) => {
                let left = self.run(a)?;
                let right = self.run(b)?;
                let mut out = BTreeSet::new();
                for l in &left {
                    for r in &right {
                        merge_orders(l, r, &mut out, self.cap)?;
                    }
                }
                Ok(out)
            }
            other => Err(OrderError::NotLinearizable(crate::lang::render_order(other))),
        }
    }

    fn chain(&mut self, x: &OrderExpr, out: &mut Vec<u32>) -> Result<(), OrderError> {
        match x {
            OrderExpr::Event(e) => {
                if !e.is_concrete() {
                    return Err(OrderError::NotConcrete(e.to_string()));
                }
                let id = self.id(e);
                out.push(id);
                Ok(())
            }
            OrderExpr::Seq(a, b) => {
                self.chain(a, out)?;
                self.chain(b, out)
            }
            other => Err(OrderError::NotLinearizable(crate::lang::render_order(other))),
        }
    }
}

/// All linear extensions of the union of two total orders, identifying
/// shared elements.
fn merge_orders(
    l: &[u32],
    r: &[u32],
    out: &mut BTreeSet<Vec<u32>>,
    cap: usize,
) -> Result<(), OrderError> {
    let mut nodes: Vec<u32> = l.to_vec();
    for x in r {
        if !nodes.contains(x) {
            nodes.push(*x);
        }
    }
    let n = nodes.len();
    let index = |id: u32| nodes.iter().position(|x| *x == id).unwrap();
    let mut succ = vec![Vec::new(); n];
    let mut indeg = vec![0usize; n];
    for chain in [l, r] {
        for w in chain.windows(2) {
            let (a, b) = (index(w[0]), index(w[1]));
            if !succ[a].contains(&b) {
                succ[a].push(b);
                indeg[b] += 1;
            }
        }
    }
    let mut current = Vec::with_capacity(n);
    let mut used = vec![false; n];
    topo_all(&nodes, &succ, &mut indeg, &mut used, &mut current, out, cap)
}

fn topo_all(
    nodes: &[u32],
    succ: &[Vec<usize>],
    indeg: &mut [usize],
    used: &mut [bool],
    current: &mut Vec<u32>,
    out: &mut BTreeSet<Vec<u32>>,
    cap: usize,
) -> Result<(), OrderError> {
    if current.len() == nodes.len() {
        out.insert(current.clone());
        if out.len() > cap {
            return Err(OrderError::TooMany(cap));
        }
        return Ok(());
    }
    for v in 0..nodes.len() {
        if used[v] || indeg[v] != 0 {
            continue;
        }
        used[v] = true;
        current.push(nodes[v]);
        for &s in &succ[v] {
            indeg[s] -= 1;
        }
        topo_all(nodes, succ, indeg, used, current, out, cap)?;
        for &s in &succ[v] {
            indeg[s] += 1;
        }
        current.pop();
        used[v] = false;
    }
    Ok(())
}

impl fmt::Display for OrderExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::lang::render_order(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_order;

    fn p(s: &str) -> OrderExpr {
        parse_order(s).unwrap()
    }

    fn ev(s: &str) -> Event {
        s.parse().unwrap()
    }

    #[test]
    fn distributes_and_or() {
        assert_eq!(
            normalize(&p("a_1 -> (b_1 & c_1)")).unwrap(),
            p("(a_1 -> b_1) & (a_1 -> c_1)")
        );
        assert_eq!(
            normalize(&p("(b_1 & c_1) -> a_1")).unwrap(),
            p("(b_1 -> a_1) & (c_1 -> a_1)")
        );
        assert_eq!(
            normalize(&p("a_1 -> (b_1 | c_1)")).unwrap(),
            p("a_1 -> b_1 | a_1 -> c_1")
        );
        assert_eq!(
            normalize(&p("(a_1 | b_1) -> c_1")).unwrap(),
            p("a_1 -> c_1 | b_1 -> c_1")
        );
    }

    #[test]
    fn removes_empty() {
        assert_eq!(normalize(&p("a_1 -> empty")).unwrap(), p("a_1"));
        assert_eq!(normalize(&p("empty -> a_1")).unwrap(), p("a_1"));
        assert_eq!(normalize(&p("a_1 -> empty -> b_1")).unwrap(), p("a_1 -> b_1"));
        assert_eq!(normalize(&p("empty & a_1 | empty")).unwrap(), p("a_1"));
        assert_eq!(normalize(&p("empty -> empty")).unwrap(), OrderExpr::Empty);
    }

    #[test]
    fn rejects_negation() {
        assert_eq!(normalize(&p("!a_1")), Err(OrderError::Unsupported));
        assert_eq!(
            normalize(&p("exists i. a_i -> b_1")),
            Err(OrderError::Unsupported)
        );
    }

    #[test]
    fn step_limit_is_reported() {
        let x = p("(a_1 | b_1) -> (c_1 | d_1) -> (e_1 | f_1)");
        assert_eq!(normalize_traced(&x, 2), Err(OrderError::StepLimit(2)));
        let full = normalize_traced(&x, DEFAULT_STEP_LIMIT).unwrap();
        assert!(full.expr.is_normal_form());
        assert!(full.expr.is_rewrite_normal());
    }

    #[test]
    fn linearize_basic() {
        assert_eq!(
            linearize(&p("a_1 -> b_1"), 10).unwrap(),
            vec![vec![ev("a_1"), ev("b_1")]]
        );
        let both = linearize(&p("a_1 & b_1"), 10).unwrap();
        assert_eq!(both.len(), 2);
        assert!(both.contains(&vec![ev("b_1"), ev("a_1")]));
        assert_eq!(linearize(&OrderExpr::Empty, 0).unwrap(), vec![Vec::<Event>::new()]);
    }

    #[test]
    fn linearize_shares_distributed_prefix() {
        let x = normalize(&p("a_1 -> (b_1 & c_1)")).unwrap();
        let out = linearize(&x, 10).unwrap();
        assert_eq!(
            out,
            vec![
                vec![ev("a_1"), ev("b_1"), ev("c_1")],
                vec![ev("a_1"), ev("c_1"), ev("b_1")],
            ]
        );
    }

    #[test]
    fn linearize_errors() {
        assert!(matches!(
            linearize(&p("a_i"), 10),
            Err(OrderError::NotConcrete(_))
        ));
        assert!(matches!(
            linearize(&p("a_1 -> b_1 -> c_1"), 2),
            Err(OrderError::BoundExceeded { len: 3, bound: 2 })
        ));
        let wide = p("a_1 & b_1 & c_1 & d_1");
        assert_eq!(linearize_capped(&wide, 10, 5), Err(OrderError::TooMany(5)));
        assert!(linearize(&p("a_1 -> a_1"), 10).unwrap().is_empty());
    }
}
