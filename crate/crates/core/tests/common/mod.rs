#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use guided_mha::domains::{Domain, GridCell, GridMap, Problem, StateId};
use guided_mha::{EventBody, SessionEvent};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(PartialEq)]
struct Item(f64, StateId);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Uniform-cost search from `source` over the whole reachable space.
pub fn distances(domain: &dyn Domain, source: StateId) -> HashMap<StateId, f64> {
    let mut dist = HashMap::from([(source, 0.0)]);
    let mut heap = BinaryHeap::from([Item(0.0, source)]);
    let mut succ = Vec::new();
    while let Some(Item(d, s)) = heap.pop() {
        if d > dist[&s] {
            continue;
        }
        succ.clear();
        domain.successors(s, &mut succ);
        for &(t, c) in &succ {
            let nd = d + c;
            if dist.get(&t).is_none_or(|&old| nd < old) {
                dist.insert(t, nd);
                heap.push(Item(nd, t));
            }
        }
    }
    dist
}

/// Optimal cost from the problem's start to its goal, if reachable.
pub fn dijkstra(problem: &Problem) -> Option<f64> {
    distances(problem.domain.as_ref(), problem.start)
        .into_iter()
        .filter(|(s, _)| (problem.goal)(*s))
        .map(|(_, d)| d)
        .min_by(f64::total_cmp)
}

/// Random map with free corners; start top-left, goal bottom-right.
pub fn random_grid(seed: u64, width: u32, height: u32, density: f64) -> GridMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = GridCell::new(0, 0);
    let goal = GridCell::new(width - 1, height - 1);
    let mut map = GridMap::empty(width, height, start, goal).unwrap();
    for y in 0..height {
        for x in 0..width {
            let c = GridCell::new(x, y);
            if c != start && c != goal && rng.gen_bool(density) {
                map.set_blocked(c, true);
            }
        }
    }
    map
}

/// First `count` solvable random maps, with their optimal costs.
pub fn solvable_grids(count: usize, width: u32, height: u32, density: f64) -> Vec<(Arc<GridMap>, f64)> {
    let mut out = Vec::new();
    let mut seed = 0;
    while out.len() < count {
        let map = Arc::new(random_grid(seed, width, height, density));
        seed += 1;
        if let Some(cost) = dijkstra(&map.problem()) {
            out.push((map, cost));
        }
    }
    out
}

/// Non-expansion events rendered compactly, for comparing against golden
/// sequences.
pub fn lifecycle(events: &[SessionEvent]) -> Vec<String> {
    events
        .iter()
        .filter_map(|e| {
            Some(match &e.body {
                EventBody::Expansion { .. } | EventBody::SessionCreated { .. } => return None,
                EventBody::StagnationEntered { queue, .. } => format!("stagnation_entered q{queue}"),
                EventBody::StagnationExited { queue, .. } => format!("stagnation_exited q{queue}"),
                EventBody::GuidanceRequested { queue, .. } => format!("guidance_requested q{queue}"),
                EventBody::GuidanceRejected { .. } => "guidance_rejected".into(),
                EventBody::GuidanceAdded { queue, .. } => format!("guidance_added q{queue}"),
                EventBody::QueueSuspended { queue, .. } => format!("queue_suspended q{queue}"),
                EventBody::QueueResumed { queue, .. } => format!("queue_resumed q{queue}"),
                EventBody::QueueDiscarded { queue, reason, .. } => {
                    format!("queue_discarded q{queue} {}", serde_json::to_value(reason).unwrap().as_str().unwrap())
                }
                EventBody::Solution { .. } => "solution".into(),
                EventBody::Terminated { outcome, .. } => {
                    format!("terminated {}", serde_json::to_value(outcome).unwrap().as_str().unwrap())
                }
            })
        })
        .collect()
}

/// Checks that every guidance request follows a baseline stagnation entry
/// or an unhelpful discard, and that no suspended queue was available.
pub fn request_economy(events: &[SessionEvent]) -> Result<(), String> {
    let mut suspended = 0i64;
    let mut trigger = false;
    for e in events {
        match &e.body {
            EventBody::StagnationEntered { queue: 1, .. } => trigger = true,
            EventBody::QueueDiscarded {
                reason: guided_mha::DiscardReason::NotUseful,
                ..
            } => trigger = true,
            EventBody::QueueSuspended { .. } => suspended += 1,
            EventBody::QueueResumed { .. } => {
                suspended -= 1;
                trigger = false;
            }
            EventBody::GuidanceRequested { .. } => {
                if suspended > 0 {
                    return Err(format!("seq {}: request while a queue was suspended", e.seq));
                }
                if !trigger {
                    return Err(format!("seq {}: request without a stagnation trigger", e.seq));
                }
                trigger = false;
            }
            EventBody::Terminated { .. } => trigger = true,
            _ => {}
        }
    }
    Ok(())
}
