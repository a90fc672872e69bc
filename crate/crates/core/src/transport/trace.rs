use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{LinkClass, Phase};
use crate::error::Result;

/// One posted message. `ts` is the global post order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageEvent {
    pub ts: u64,
    pub src: usize,
    pub dst: usize,
    pub tag: u64,
    pub phase: Phase,
    pub round: u32,
    pub bytes: usize,
    pub link: LinkClass,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub processes: usize,
    pub ranks_per_node: usize,
    pub events: Vec<MessageEvent>,
    /// Peak simultaneously posted-but-unretired requests, per rank.
    pub peak_outstanding: Vec<usize>,
}

impl Trace {
    /// JSON-lines export, one message per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<MessageEvent>> {
        let mut events = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            events.push(serde_json::from_str(&line)?);
        }
        Ok(events)
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// Messages of `phase` posted by each rank.
    pub fn sends_by_rank(&self, phase: Phase) -> Vec<usize> {
        let mut counts = vec![0; self.processes];
        for e in self.events.iter().filter(|e| e.phase == phase) {
            counts[e.src] += 1;
        }
        counts
    }

    /// Payload bytes of `phase` posted by each rank.
    pub fn bytes_by_rank(&self, phase: Phase) -> Vec<usize> {
        let mut bytes = vec![0; self.processes];
        for e in self.events.iter().filter(|e| e.phase == phase) {
            bytes[e.src] += e.bytes;
        }
        bytes
    }

    pub fn metrics(&self) -> Metrics {
        Metrics::from_trace(self)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LinkCounts {
    pub self_link: usize,
    pub intra_node: usize,
    pub inter_node: usize,
}

impl LinkCounts {
    fn slot(&mut self, link: LinkClass) -> &mut usize {
        match link {
            LinkClass::SelfLink => &mut self.self_link,
            LinkClass::IntraNode => &mut self.intra_node,
            LinkClass::InterNode => &mut self.inter_node,
        }
    }

    pub fn get(&self, link: LinkClass) -> usize {
        match link {
            LinkClass::SelfLink => self.self_link,
            LinkClass::IntraNode => self.intra_node,
            LinkClass::InterNode => self.inter_node,
        }
    }

    pub fn total(&self) -> usize {
        self.self_link + self.intra_node + self.inter_node
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PhaseCounts {
    pub metadata: LinkCounts,
    pub data: LinkCounts,
}

impl PhaseCounts {
    fn slot(&mut self, phase: Phase, link: LinkClass) -> &mut usize {
        match phase {
            Phase::Metadata => self.metadata.slot(link),
            Phase::Data => self.data.slot(link),
        }
    }

    pub fn by_link(&self, link: LinkClass) -> usize {
        self.metadata.get(link) + self.data.get(link)
    }

    pub fn total(&self) -> usize {
        self.metadata.total() + self.data.total()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Metrics {
    /// Distinct round ids carrying at least one data message.
    pub rounds: usize,
    pub messages: PhaseCounts,
    pub bytes: PhaseCounts,
    pub max_outstanding: usize,
}

impl Metrics {
    pub fn from_trace(trace: &Trace) -> Self {
        let mut m = Metrics::default();
        let mut data_rounds = BTreeSet::new();
        for e in &trace.events {
            *m.messages.slot(e.phase, e.link) += 1;
            *m.bytes.slot(e.phase, e.link) += e.bytes;
            if e.phase == Phase::Data {
                data_rounds.insert(e.round);
            }
        }
        m.rounds = data_rounds.len();
        m.max_outstanding = trace.peak_outstanding.iter().copied().max().unwrap_or(0);
        m
    }
}

/// Free-function form of [`Metrics::from_trace`].
pub fn metrics_from_trace(trace: &Trace) -> Metrics {
    Metrics::from_trace(trace)
}
