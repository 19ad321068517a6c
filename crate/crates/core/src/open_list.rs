//! Addressable min-priority open list with lazy deletion.

use std::cmp::Ordering;
use std::collections::hash_map::Entry as MapEntry;
use std::collections::{BinaryHeap, HashMap};

use crate::domains::StateId;

/// Priority of an open state: `f = g + w1 * h`.
///
/// Smaller `f` first; ties go to the larger `g`, then to the smaller id.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Priority {
    pub f: f64,
    pub g: f64,
}

#[derive(Clone, Copy, Debug)]
struct HeapEntry {
    f: f64,
    g: f64,
    id: StateId,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    // max-heap: the "greatest" entry is the one to expand first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| self.g.total_cmp(&other.g))
            .then_with(|| other.id.cmp(&self.id))
    }
}

#[derive(Clone, Debug, Default)]
pub struct OpenList {
    heap: BinaryHeap<HeapEntry>,
    members: HashMap<StateId, Priority>,
}

impl OpenList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, id: StateId) -> bool {
        self.members.contains_key(&id)
    }

    pub fn priority(&self, id: StateId) -> Option<Priority> {
        self.members.get(&id).copied()
    }

    /// Inserts `id` or replaces its priority.
    pub fn push(&mut self, id: StateId, priority: Priority) {
        match self.members.entry(id) {
            MapEntry::Occupied(mut e) => {
                if *e.get() == priority {
                    return;
                }
                e.insert(priority);
            }
            MapEntry::Vacant(e) => {
                e.insert(priority);
            }
        }
        self.heap.push(HeapEntry {
            f: priority.f,
            g: priority.g,
            id,
        });
        if self.heap.len() > 4 * self.members.len() + 1024 {
            self.compact();
        }
    }

    pub fn remove(&mut self, id: StateId) -> bool {
        self.members.remove(&id).is_some()
    }

    pub fn clear(&mut self) {
        self.heap.clear();
        self.members.clear();
    }

    fn is_live(&self, e: &HeapEntry) -> bool {
        self.members
            .get(&e.id)
            .is_some_and(|p| p.f == e.f && p.g == e.g)
    }

    fn discard_stale(&mut self) {
        while let Some(top) = self.heap.peek() {
            if self.is_live(top) {
                break;
            }
            self.heap.pop();
        }
    }

    /// Best state and its priority, without removing it.
    pub fn peek(&mut self) -> Option<(StateId, Priority)> {
        self.discard_stale();
        self.heap
            .peek()
            .map(|e| (e.id, Priority { f: e.f, g: e.g }))
    }

    pub fn min_key(&mut self) -> Option<f64> {
        self.peek().map(|(_, p)| p.f)
    }

    pub fn pop(&mut self) -> Option<(StateId, Priority)> {
        self.discard_stale();
        let e = self.heap.pop()?;
        self.members.remove(&e.id);
        Some((e.id, Priority { f: e.f, g: e.g }))
    }

    /// Members in no particular order.
    pub fn ids(&self) -> impl Iterator<Item = StateId> + '_ {
        self.members.keys().copied()
    }

    fn compact(&mut self) {
        let live: Vec<HeapEntry> = self
            .members
            .iter()
            .map(|(id, p)| HeapEntry {
                f: p.f,
                g: p.g,
                id: *id,
            })
            .collect();
        self.heap = BinaryHeap::from(live);
    }
}
