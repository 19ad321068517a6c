//! Columnar plot data from an event log: one row per expansion with the
//! expanding queue, the global expansion index, the metric and whether that
//! queue was in stagnation at the time.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use clap::ValueEnum;
use guided_mha::{EventBody, QueueId, SessionEvent};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    /// Expansion delay of each expanded state.
    Delay,
    /// Lowest heuristic value the queue has expanded so far.
    Hmin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub queue: QueueId,
    pub expansion: u64,
    pub value: f64,
    pub stagnating: bool,
}

pub fn rows(events: &[SessionEvent], metric: Metric, only: Option<QueueId>) -> Vec<Row> {
    let mut stagnating = BTreeSet::new();
    let mut best: BTreeMap<QueueId, f64> = BTreeMap::new();
    let mut out = Vec::new();
    for e in events {
        match &e.body {
            EventBody::StagnationEntered { queue, .. } => {
                stagnating.insert(*queue);
            }
            EventBody::StagnationExited { queue, .. } | EventBody::QueueDiscarded { queue, .. } => {
                stagnating.remove(queue);
            }
            EventBody::Expansion {
                expansion,
                queue,
                h,
                delta_e,
                ..
            } => {
                let value = match metric {
                    Metric::Delay => *delta_e as f64,
                    Metric::Hmin => {
                        let m = best.entry(*queue).or_insert(f64::INFINITY);
                        *m = m.min(*h);
                        *m
                    }
                };
                if only.is_none_or(|q| q == *queue) {
                    out.push(Row {
                        queue: *queue,
                        expansion: *expansion,
                        value,
                        stagnating: stagnating.contains(queue),
                    });
                }
            }
            _ => {}
        }
    }
    out
}

/// Tab-separated with a header line; nothing at all when there are no rows.
pub fn write_tsv(rows: &[Row], metric: Metric, out: &mut dyn Write) -> std::io::Result<()> {
    if rows.is_empty() {
        return Ok(());
    }
    let name = match metric {
        Metric::Delay => "delay",
        Metric::Hmin => "hmin",
    };
    writeln!(out, "queue\texpansion\t{name}\tstagnating")?;
    for r in rows {
        writeln!(out, "{}\t{}\t{}\t{}", r.queue, r.expansion, r.value, u8::from(r.stagnating))?;
    }
    Ok(())
}
