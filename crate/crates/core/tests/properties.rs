mod common;

use common::{ev, labels, random_event, random_order};
use proptest::prelude::*;
use pullstream::entail::{entails, Binding, Engine, Scheduler};
use pullstream::events::{parse_trace, render_trace, Event, History};
use pullstream::order::{linearize, normalize, normalize_traced, OrderExpr};
use pullstream::protocol::{check, CheckOptions, InterfaceSpec, SequenceParams};
use pullstream::reference::{Pipeline, SinkParams, SourceParams, TransformerParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn binomial(n: u64, k: u64) -> u64 {
    (1..=k).fold(1, |acc, j| acc * (n + 1 - j) / j)
}

fn or_free(x: &OrderExpr) -> bool {
    match x {
        OrderExpr::Or(..) => false,
        OrderExpr::Seq(a, b) | OrderExpr::And(a, b) => or_free(a) && or_free(b),
        _ => true,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn event_text_round_trip(seed in any::<u64>()) {
        let e = random_event(&mut rng(seed));
        let again: Event = e.to_string().parse().unwrap();
        prop_assert_eq!(again, e);
    }

    #[test]
    fn depth_orders_history(perm in Just((1..=6u32).collect::<Vec<_>>()).prop_shuffle()) {
        let h = History::from_events(perm.iter().map(|i| ev(&format!("A: ask[x_{i}]")))).unwrap();
        for a in h.iter() {
            for b in h.iter() {
                let before = h.before(a, b).unwrap();
                prop_assert_eq!(before, h.depth(a).unwrap() > h.depth(b).unwrap());
                prop_assert_eq!(before, h.position(a) < h.position(b));
                if a != b {
                    prop_assert_ne!(before, h.before(b, a).unwrap());
                }
            }
        }
    }

    #[test]
    fn trace_round_trip(seed in any::<u64>(), len in 0usize..8) {
        let mut r = rng(seed);
        let mut h = History::new();
        for _ in 0..len {
            let _ = h.push(random_event(&mut r));
        }
        let back = parse_trace(&render_trace(&h)).unwrap();
        prop_assert_eq!(back.history, h);
    }

    #[test]
    fn normalize_is_idempotent(seed in any::<u64>(), nodes in 1usize..16) {
        let x = random_order(&mut rng(seed), nodes, &labels(4));
        let n = normalize_traced(&x, 10_000).unwrap();
        prop_assert!(n.expr.is_normal_form());
        prop_assert!(n.expr.is_rewrite_normal());
        prop_assert_eq!(normalize(&n.expr).unwrap(), n.expr);
    }

    #[test]
    fn interleaving_count(p in 0usize..5, q in 0usize..5) {
        let events = labels(p + q);
        let left = OrderExpr::seq_all(events[..p].iter().cloned().map(OrderExpr::Event));
        let right = OrderExpr::seq_all(events[p..].iter().cloned().map(OrderExpr::Event));
        let lins = linearize(&normalize(&OrderExpr::and(left, right)).unwrap(), p + q).unwrap();
        prop_assert_eq!(lins.len() as u64, binomial((p + q) as u64, p as u64));
    }

    #[test]
    fn or_free_entailment_is_monotone(seed in any::<u64>(), nodes in 1usize..10) {
        let pool = labels(4);
        let x = random_order(&mut rng(seed), nodes, &pool);
        prop_assume!(or_free(&x));
        let extra = ev("B: ask[x_9]");
        for l in linearize(&normalize(&x).unwrap(), 8).unwrap() {
            let h = History::from_events(l).unwrap();
            prop_assert!(entails(&h, &x, &Binding::new()).unwrap());
            let longer = h.appended(extra.clone()).unwrap();
            prop_assert!(entails(&longer, &x, &Binding::new()).unwrap());
        }
    }

    #[test]
    fn generated_prefixes_never_violate(n in 0u32..4, r in 0u32..5, w in any::<bool>()) {
        let io = InterfaceSpec::io();
        let params = if r > n { SequenceParams::normal(n) } else { SequenceParams::early(n, r, w).unwrap() };
        for l in params.linearizations(&io).unwrap() {
            for k in 0..=l.len() {
                let h = History::from_events(l[..k].iter().cloned()).unwrap();
                let report = check(&h, &io, CheckOptions::default()).unwrap();
                prop_assert!(report.passed(), "{}: {:?}", h, report.violations);
            }
        }
    }

    #[test]
    fn seeded_runs_are_among_explored(
        n in 0u32..3, r in 0u32..4, rt in 0u32..3, w in any::<bool>(), seed in any::<u64>()
    ) {
        let p = Pipeline::new(SourceParams { n, err: false }, SinkParams { r, err: false, w })
            .transformer(TransformerParams { r: rt, err: false });
        let all = Engine::new(p.engine_config(Scheduler::Exhaustive)).unwrap().explore().unwrap();
        let engine = Engine::new(p.engine_config(Scheduler::Deterministic { seed })).unwrap();
        let run = engine.run_seeded(seed).unwrap();
        prop_assert!(engine.replay(&run).unwrap());
        prop_assert!(all.iter().any(|a| a.history == run.history));
        let again = engine.run_seeded(seed).unwrap();
        prop_assert_eq!(again.history, run.history);
    }
}
