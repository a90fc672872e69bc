use std::future::Future;
use std::pin::Pin;
use std::sync::{Arc, Mutex, MutexGuard};
use std::task::{Context, Poll, Waker};

use futures::future::poll_fn;
use futures::task::noop_waker;
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use super::trace::{MessageEvent, Trace};
use super::{Communicator, LinkClass, Request, Tag};
use crate::error::{Error, Result, StuckKind, StuckRequest};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SchedulerMode {
    /// Single thread; ranks are polled in a fixed seeded order and switch
    /// only at blocking points. Traces are reproducible.
    #[default]
    Deterministic,
    /// One OS thread per rank. Outputs match the deterministic mode;
    /// trace order does not.
    Threaded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub processes: usize,
    pub ranks_per_node: usize,
    pub seed: u64,
    pub mode: SchedulerMode,
}

impl SimConfig {
    pub fn new(processes: usize, ranks_per_node: usize) -> Self {
        Self {
            processes,
            ranks_per_node,
            seed: 0,
            mode: SchedulerMode::Deterministic,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn mode(mut self, mode: SchedulerMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.processes == 0 {
            return Err(Error::param("process count must be at least 1"));
        }
        if self.ranks_per_node == 0 || !self.processes.is_multiple_of(self.ranks_per_node) {
            return Err(Error::param(format!(
                "ranks per node {} does not divide process count {}",
                self.ranks_per_node, self.processes
            )));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct SimOutput<T> {
    pub outputs: Vec<T>,
    pub trace: Trace,
}

#[derive(Debug)]
struct Slot {
    owner: usize,
    peer: usize,
    tag: Tag,
    kind: StuckKind,
    complete: bool,
    retired: bool,
    payload: Option<Vec<u8>>,
}

/// An unmatched request, queued in post order on its `(src, dst)` pair.
#[derive(Debug, Clone, Copy)]
struct Pending {
    tag: u64,
    id: usize,
    kind: StuckKind,
}

#[derive(Debug, Clone)]
enum Wait {
    Requests(Vec<usize>),
    Reduce(usize),
}

#[derive(Debug, Default)]
struct Reduce {
    arrived: usize,
    acc: u64,
    results: Vec<u64>,
}

#[derive(Debug)]
struct Fabric {
    size: usize,
    ranks_per_node: usize,
    threaded: bool,
    slots: Vec<Slot>,
    /// Unmatched requests per `src·P + dst`, oldest first.
    pending: Vec<Vec<Pending>>,
    events: Vec<MessageEvent>,
    outstanding: Vec<usize>,
    peak_outstanding: Vec<usize>,
    finalized: Vec<bool>,
    reduce: Reduce,
    /// Bumped on every state change; a full pass without a change is quiescence.
    epoch: u64,
    wakers: Vec<Option<Waker>>,
    waiting: Vec<Option<Wait>>,
    blocked: usize,
    active: usize,
    deadlock: Option<Vec<StuckRequest>>,
}

impl Fabric {
    fn new(config: &SimConfig) -> Self {
        let p = config.processes;
        Self {
            size: p,
            ranks_per_node: config.ranks_per_node,
            threaded: config.mode == SchedulerMode::Threaded,
            slots: Vec::new(),
            pending: (0..p * p).map(|_| Vec::new()).collect(),
            events: Vec::new(),
            outstanding: vec![0; p],
            peak_outstanding: vec![0; p],
            finalized: vec![false; p],
            reduce: Reduce::default(),
            epoch: 0,
            wakers: vec![None; p],
            waiting: vec![None; p],
            blocked: 0,
            active: p,
            deadlock: None,
        }
    }

    fn check_rank(&self, rank: usize) -> Result<()> {
        if rank >= self.size {
            return Err(Error::InvalidRank {
                rank,
                size: self.size,
            });
        }
        Ok(())
    }

    fn open_slot(&mut self, owner: usize, peer: usize, tag: Tag, kind: StuckKind) -> Result<usize> {
        if self.finalized[owner] {
            return Err(Error::Finalized(owner));
        }
        self.check_rank(peer)?;
        let id = self.slots.len();
        self.slots.push(Slot {
            owner,
            peer,
            tag,
            kind,
            complete: false,
            retired: false,
            payload: None,
        });
        self.outstanding[owner] += 1;
        self.peak_outstanding[owner] = self.peak_outstanding[owner].max(self.outstanding[owner]);
        self.epoch += 1;
        Ok(id)
    }

    fn post_send(&mut self, src: usize, dst: usize, tag: Tag, payload: Vec<u8>) -> Result<Request> {
        let id = self.open_slot(src, dst, tag, StuckKind::Send)?;
        self.events.push(MessageEvent {
            ts: self.events.len() as u64,
            src,
            dst,
            tag: tag.value(),
            phase: tag.phase,
            round: tag.round,
            bytes: payload.len(),
            link: LinkClass::classify(src, dst, self.ranks_per_node),
        });
        self.slots[id].payload = Some(payload);
        if let Some(recv) = self.match_or_queue(src, dst, tag.value(), id, StuckKind::Send) {
            self.complete_pair(id, recv);
        }
        Ok(Request(id))
    }

    fn post_recv(&mut self, dst: usize, src: usize, tag: Tag) -> Result<Request> {
        let id = self.open_slot(dst, src, tag, StuckKind::Recv)?;
        if let Some(send) = self.match_or_queue(src, dst, tag.value(), id, StuckKind::Recv) {
            self.complete_pair(send, id);
        }
        Ok(Request(id))
    }

    /// Removes and returns the oldest opposite-kind request with `tag` on
    /// the pair, or queues `id` if there is none.
    fn match_or_queue(
        &mut self,
        src: usize,
        dst: usize,
        tag: u64,
        id: usize,
        kind: StuckKind,
    ) -> Option<usize> {
        let queue = &mut self.pending[src * self.size + dst];
        match queue.iter().position(|p| p.tag == tag && p.kind != kind) {
            Some(at) => Some(queue.remove(at).id),
            None => {
                queue.push(Pending { tag, id, kind });
                None
            }
        }
    }

    fn complete_pair(&mut self, send: usize, recv: usize) {
        let payload = self.slots[send].payload.take();
        self.slots[recv].payload = payload;
        self.slots[send].complete = true;
        self.slots[recv].complete = true;
        self.epoch += 1;
        if self.threaded {
            let owners = [self.slots[send].owner, self.slots[recv].owner];
            for owner in owners {
                self.release_if_satisfied(owner);
            }
        }
    }

    fn satisfied(&self, wait: &Wait) -> bool {
        match wait {
            Wait::Requests(ids) => ids.iter().all(|&id| self.slots[id].complete),
            Wait::Reduce(generation) => self.reduce.results.len() > *generation,
        }
    }

    /// Threaded mode: unblocks `rank` as soon as its wait condition holds,
    /// so quiescence accounting never counts a runnable rank as blocked.
    fn release_if_satisfied(&mut self, rank: usize) {
        let ready = match &self.waiting[rank] {
            Some(wait) => self.satisfied(wait),
            None => false,
        };
        if ready {
            self.waiting[rank] = None;
            self.blocked -= 1;
            if let Some(w) = self.wakers[rank].take() {
                w.wake();
            }
        }
    }

    fn block(&mut self, rank: usize, wait: Wait, waker: &Waker) {
        self.wakers[rank] = Some(waker.clone());
        if self.waiting[rank].is_none() {
            self.blocked += 1;
        }
        self.waiting[rank] = Some(wait);
        self.detect_threaded_deadlock();
    }

    fn unblock(&mut self, rank: usize) {
        if self.waiting[rank].take().is_some() {
            self.blocked -= 1;
        }
    }

    fn detect_threaded_deadlock(&mut self) {
        if self.active > 0 && self.blocked == self.active && self.deadlock.is_none() {
            self.deadlock = Some(self.stuck_requests());
            for w in self.wakers.iter_mut().filter_map(Option::take) {
                w.wake();
            }
        }
    }

    fn stuck_requests(&self) -> Vec<StuckRequest> {
        self.slots
            .iter()
            .filter(|s| !s.complete)
            .map(|s| {
                let (src, dst) = match s.kind {
                    StuckKind::Send => (s.owner, s.peer),
                    StuckKind::Recv => (s.peer, s.owner),
                };
                StuckRequest {
                    kind: s.kind,
                    src,
                    dst,
                    tag: s.tag.value(),
                }
            })
            .collect()
    }

    fn poll_wait(&mut self, rank: usize, ids: &[usize], waker: &Waker) -> Poll<Result<()>> {
        if let Some(stuck) = &self.deadlock {
            return Poll::Ready(Err(Error::Deadlock(stuck.clone())));
        }
        for &id in ids {
            if self.slots.get(id).map(|s| s.owner) != Some(rank) {
                return Poll::Ready(Err(Error::ForeignRequest { rank, request: id }));
            }
        }
        if ids.iter().all(|&id| self.slots[id].complete) {
            for &id in ids {
                let slot = &mut self.slots[id];
                if !slot.retired {
                    slot.retired = true;
                    self.outstanding[rank] -= 1;
                    self.epoch += 1;
                }
            }
            self.unblock(rank);
            return Poll::Ready(Ok(()));
        }
        if self.threaded {
            self.block(rank, Wait::Requests(ids.to_vec()), waker);
        }
        Poll::Pending
    }

    fn join_reduce(&mut self, value: u64) -> usize {
        let generation = self.reduce.results.len();
        self.reduce.arrived += 1;
        self.reduce.acc = self.reduce.acc.max(value);
        self.epoch += 1;
        if self.reduce.arrived == self.size {
            let acc = std::mem::take(&mut self.reduce.acc);
            self.reduce.results.push(acc);
            self.reduce.arrived = 0;
            if self.threaded {
                for rank in 0..self.size {
                    self.release_if_satisfied(rank);
                }
            }
        }
        generation
    }

    fn poll_reduce(&mut self, rank: usize, generation: usize, waker: &Waker) -> Poll<Result<u64>> {
        if let Some(stuck) = &self.deadlock {
            return Poll::Ready(Err(Error::Deadlock(stuck.clone())));
        }
        if let Some(&v) = self.reduce.results.get(generation) {
            self.unblock(rank);
            return Poll::Ready(Ok(v));
        }
        if self.threaded {
            self.block(rank, Wait::Reduce(generation), waker);
        }
        Poll::Pending
    }

    fn finish_rank(&mut self, rank: usize) {
        self.finalized[rank] = true;
        self.active -= 1;
        self.epoch += 1;
        if self.threaded {
            self.detect_threaded_deadlock();
        }
    }

    fn into_trace(self) -> Trace {
        Trace {
            processes: self.size,
            ranks_per_node: self.ranks_per_node,
            events: self.events,
            peak_outstanding: self.peak_outstanding,
        }
    }
}

/// Endpoint of one simulated rank.
#[derive(Debug)]
pub struct SimComm {
    rank: usize,
    size: usize,
    ranks_per_node: usize,
    fabric: Arc<Mutex<Fabric>>,
}

impl SimComm {
    fn fabric(&self) -> MutexGuard<'_, Fabric> {
        self.fabric.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Marks this endpoint finished; later posts fail.
    pub fn finalize(&self) {
        self.fabric().finalized[self.rank] = true;
    }
}

impl Communicator for SimComm {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.size
    }

    fn ranks_per_node(&self) -> usize {
        self.ranks_per_node
    }

    fn post_send(&self, dst: usize, tag: Tag, payload: Vec<u8>) -> Result<Request> {
        self.fabric().post_send(self.rank, dst, tag, payload)
    }

    fn post_recv(&self, src: usize, tag: Tag) -> Result<Request> {
        self.fabric().post_recv(self.rank, src, tag)
    }

    fn wait_all(&self, requests: &[Request]) -> impl Future<Output = Result<()>> + Send {
        let ids: Vec<usize> = requests.iter().map(|r| r.0).collect();
        poll_fn(move |cx| self.fabric().poll_wait(self.rank, &ids, cx.waker()))
    }

    fn take_payload(&self, request: Request) -> Result<Vec<u8>> {
        let mut fabric = self.fabric();
        let slot = fabric
            .slots
            .get_mut(request.0)
            .filter(|s| s.owner == self.rank && s.kind == StuckKind::Recv)
            .ok_or(Error::ForeignRequest {
                rank: self.rank,
                request: request.0,
            })?;
        if !slot.complete {
            return Err(Error::Protocol(format!(
                "payload of request {} taken before completion",
                request.0
            )));
        }
        slot.payload.take().ok_or_else(|| {
            Error::Protocol(format!("payload of request {} already taken", request.0))
        })
    }

    fn allreduce_max(&self, value: u64) -> impl Future<Output = Result<u64>> + Send {
        let mut generation = None;
        poll_fn(move |cx| {
            let mut fabric = self.fabric();
            let g = *generation.get_or_insert_with(|| fabric.join_reduce(value));
            fabric.poll_reduce(self.rank, g, cx.waker())
        })
    }
}

/// Runs `program` on every rank under the deterministic scheduler.
pub fn run_processes<T, F, Fut>(
    processes: usize,
    ranks_per_node: usize,
    seed: u64,
    program: F,
) -> Result<SimOutput<T>>
where
    F: Fn(SimComm) -> Fut,
    Fut: Future<Output = Result<T>>,
{
    let config = SimConfig::new(processes, ranks_per_node).seed(seed);
    run_deterministic(&config, program)
}

/// Runs `program` on every rank under `config.mode`.
pub fn run_processes_with<T, F, Fut>(config: &SimConfig, program: F) -> Result<SimOutput<T>>
where
    T: Send,
    F: Fn(SimComm) -> Fut + Sync,
    Fut: Future<Output = Result<T>> + Send,
{
    match config.mode {
        SchedulerMode::Deterministic => run_deterministic(config, program),
        SchedulerMode::Threaded => run_threaded(config, program),
    }
}

fn endpoints(config: &SimConfig) -> (Arc<Mutex<Fabric>>, Vec<SimComm>) {
    let fabric = Arc::new(Mutex::new(Fabric::new(config)));
    let comms = (0..config.processes)
        .map(|rank| SimComm {
            rank,
            size: config.processes,
            ranks_per_node: config.ranks_per_node,
            fabric: Arc::clone(&fabric),
        })
        .collect();
    (fabric, comms)
}

fn into_trace(fabric: Arc<Mutex<Fabric>>) -> Trace {
    Arc::try_unwrap(fabric)
        .expect("all endpoints dropped")
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_trace()
}

/// Seeded permutation of the rank polling order.
fn poll_order(processes: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..processes).collect();
    if seed != 0 {
        let mut rng = SplitMix64::seed_from_u64(seed);
        for i in (1..processes).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            order.swap(i, j);
        }
    }
    order
}

fn run_deterministic<T, F, Fut>(config: &SimConfig, program: F) -> Result<SimOutput<T>>
where
    F: Fn(SimComm) -> Fut,
    Fut: Future<Output = Result<T>>,
{
    config.validate()?;
    let (fabric, comms) = endpoints(config);
    let mut tasks: Vec<Option<Pin<Box<Fut>>>> = comms
        .into_iter()
        .map(|c| Some(Box::pin(program(c))))
        .collect();
    let mut outputs: Vec<Option<T>> = (0..config.processes).map(|_| None).collect();
    let order = poll_order(config.processes, config.seed);
    let waker = noop_waker();
    let mut cx = Context::from_waker(&waker);
    let mut remaining = config.processes;

    while remaining > 0 {
        let before = fabric.lock().unwrap_or_else(|e| e.into_inner()).epoch;
        let mut finished = false;
        for &rank in &order {
            let Some(task) = tasks[rank].as_mut() else {
                continue;
            };
            if let Poll::Ready(result) = task.as_mut().poll(&mut cx) {
                tasks[rank] = None;
                let value = result.map_err(|e| Error::RankFailed {
                    rank,
                    source: Box::new(e),
                })?;
                outputs[rank] = Some(value);
                fabric
                    .lock()
                    .unwrap_or_else(|e| e.into_inner())
                    .finish_rank(rank);
                remaining -= 1;
                finished = true;
            }
        }
        let fab = fabric.lock().unwrap_or_else(|e| e.into_inner());
        if remaining > 0 && !finished && fab.epoch == before {
            return Err(Error::Deadlock(fab.stuck_requests()));
        }
    }
    drop(tasks);
    Ok(SimOutput {
        outputs: outputs
            .into_iter()
            .map(|o| o.expect("rank finished"))
            .collect(),
        trace: into_trace(fabric),
    })
}

fn run_threaded<T, F, Fut>(config: &SimConfig, program: F) -> Result<SimOutput<T>>
where
    T: Send,
    F: Fn(SimComm) -> Fut + Sync,
    Fut: Future<Output = Result<T>> + Send,
{
    config.validate()?;
    let (fabric, comms) = endpoints(config);
    let program = &program;
    let results: Vec<Result<T>> = std::thread::scope(|scope| {
        let handles: Vec<_> = comms
            .into_iter()
            .map(|comm| {
                let fabric = Arc::clone(&fabric);
                scope.spawn(move || {
                    let rank = comm.rank;
                    let result = futures::executor::block_on(program(comm));
                    fabric
                        .lock()
                        .unwrap_or_else(|e| e.into_inner())
                        .finish_rank(rank);
                    result
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("rank thread panicked"))
            .collect()
    });
    let mut outputs = Vec::with_capacity(results.len());
    // Prefer reporting a rank's own failure over the deadlock it caused.
    let mut deadlock = None;
    for (rank, result) in results.into_iter().enumerate() {
        match result {
            Ok(v) => outputs.push(v),
            Err(e @ Error::Deadlock(_)) => {
                deadlock.get_or_insert(e);
            }
            Err(e) => {
                return Err(Error::RankFailed {
                    rank,
                    source: Box::new(e),
                })
            }
        }
    }
    if let Some(e) = deadlock {
        return Err(e);
    }
    Ok(SimOutput {
        outputs,
        trace: into_trace(fabric),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{Phase, Trace};

    #[test]
    fn single_rank_empty_program_has_empty_trace() {
        let out = run_processes(1, 1, 0, |_comm| async { Ok(()) }).unwrap();
        assert!(out.trace.events.is_empty());
        assert_eq!(out.trace.metrics(), Trace::default().metrics());
    }

    #[test]
    fn ping_pong() {
        let out = run_processes(2, 2, 0, |comm| async move {
            let peer = 1 - comm.rank();
            let r = comm.post_recv(peer, Tag::data(0))?;
            let s = comm.post_send(peer, Tag::data(0), vec![comm.rank() as u8])?;
            comm.wait_all(&[r, s]).await?;
            comm.take_payload(r)
        })
        .unwrap();
        assert_eq!(out.outputs, vec![vec![1], vec![0]]);
        let m = out.trace.metrics();
        assert_eq!(m.messages.data.total(), 2);
        assert_eq!(m.bytes.data.total(), 2);
    }

    #[test]
    fn link_classes_follow_node_layout() {
        let out = run_processes(4, 2, 0, |comm| async move {
            if comm.rank() == 0 {
                let reqs = (1..4)
                    .map(|d| comm.post_send(d, Tag::data(0), vec![0]))
                    .collect::<Result<Vec<_>>>()?;
                comm.wait_all(&reqs).await?;
            } else {
                let r = comm.post_recv(0, Tag::data(0))?;
                comm.wait_all(&[r]).await?;
            }
            Ok(())
        })
        .unwrap();
        let links: Vec<_> = out.trace.events.iter().map(|e| e.link).collect();
        assert_eq!(
            links,
            vec![
                LinkClass::IntraNode,
                LinkClass::InterNode,
                LinkClass::InterNode
            ]
        );
    }

    #[test]
    fn fifo_per_channel() {
        let out = run_processes(2, 2, 0, |comm| async move {
            if comm.rank() == 0 {
                let reqs = (0..5u8)
                    .map(|i| comm.post_send(1, Tag::data(0), vec![i]))
                    .collect::<Result<Vec<_>>>()?;
                comm.wait_all(&reqs).await?;
                Ok(vec![])
            } else {
                let reqs = (0..5)
                    .map(|_| comm.post_recv(0, Tag::data(0)))
                    .collect::<Result<Vec<_>>>()?;
                comm.wait_all(&reqs).await?;
                reqs.into_iter()
                    .map(|r| comm.take_payload(r).map(|p| p[0]))
                    .collect()
            }
        })
        .unwrap();
        assert_eq!(out.outputs[1], vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn deadlock_lists_stuck_requests() {
        let err = run_processes(2, 2, 0, |comm| async move {
            // both ranks receive first with blocking semantics
            let r = comm.post_recv(1 - comm.rank(), Tag::data(7))?;
            comm.wait_all(&[r]).await?;
            Ok(())
        })
        .unwrap_err();
        match err {
            Error::Deadlock(stuck) => {
                assert_eq!(stuck.len(), 2);
                assert!(stuck
                    .iter()
                    .all(|s| s.kind == StuckKind::Recv && s.tag == Tag::data(7).value()));
                assert!(stuck.iter().any(|s| s.src == 1 && s.dst == 0));
            }
            other => panic!("expected deadlock, got {other:?}"),
        }
    }

    #[test]
    fn threaded_deadlock_detected() {
        let config = SimConfig::new(3, 3).mode(SchedulerMode::Threaded);
        let err = run_processes_with(&config, |comm| async move {
            let r = comm.post_recv((comm.rank() + 1) % 3, Tag::data(0))?;
            comm.wait_all(&[r]).await?;
            Ok(())
        })
        .unwrap_err();
        assert!(
            matches!(err, Error::Deadlock(ref s) if s.len() == 3),
            "{err:?}"
        );
    }

    #[test]
    fn invalid_peer_and_finalize_errors() {
        let err = run_processes(2, 2, 0, |comm| async move {
            comm.post_send(5, Tag::data(0), vec![])?;
            Ok(())
        })
        .unwrap_err();
        assert!(
            matches!(err, Error::RankFailed { source, .. } if matches!(*source, Error::InvalidRank { rank: 5, .. }))
        );

        let err = run_processes(1, 1, 0, |comm| async move {
            comm.finalize();
            comm.post_send(0, Tag::data(0), vec![])?;
            Ok(())
        })
        .unwrap_err();
        assert!(
            matches!(err, Error::RankFailed { source, .. } if matches!(*source, Error::Finalized(0)))
        );
    }

    #[test]
    fn rank_failure_is_attributed() {
        let err = run_processes(3, 3, 0, |comm| async move {
            if comm.rank() == 2 {
                return Err(Error::Protocol("boom".into()));
            }
            Ok(())
        })
        .unwrap_err();
        assert!(matches!(err, Error::RankFailed { rank: 2, .. }));
    }

    #[test]
    fn ranks_per_node_must_divide() {
        assert!(run_processes(6, 4, 0, |_c| async { Ok(()) }).is_err());
    }

    #[test]
    fn allreduce_max_repeats() {
        let out = run_processes(4, 4, 3, |comm| async move {
            let a = comm.allreduce_max(comm.rank() as u64 * 10).await?;
            let b = comm.allreduce_max(100 - comm.rank() as u64).await?;
            Ok((a, b))
        })
        .unwrap();
        assert!(out.outputs.iter().all(|&v| v == (30, 100)));
        assert!(out.trace.events.is_empty());

        let config = SimConfig::new(4, 2).mode(SchedulerMode::Threaded);
        let out = run_processes_with(&config, |comm| async move {
            comm.allreduce_max(comm.rank() as u64).await
        })
        .unwrap();
        assert_eq!(out.outputs, vec![3; 4]);
    }

    #[test]
    fn outstanding_counts_sends_and_recvs() {
        let out = run_processes(3, 3, 0, |comm| async move {
            let me = comm.rank();
            let mut reqs = Vec::new();
            for peer in (0..3).filter(|&p| p != me) {
                reqs.push(comm.post_recv(peer, Tag::data(0))?);
                reqs.push(comm.post_send(peer, Tag::data(0), vec![1, 2])?);
            }
            comm.wait_all(&reqs).await?;
            Ok(())
        })
        .unwrap();
        assert_eq!(out.trace.peak_outstanding, vec![4, 4, 4]);
        assert_eq!(out.trace.sends_by_rank(Phase::Data), vec![2, 2, 2]);
    }

    #[test]
    fn same_seed_same_trace_and_seed_independent_outputs() {
        let program = |comm: SimComm| async move {
            let n = comm.size();
            let me = comm.rank();
            let mut reqs = Vec::new();
            for i in 1..n {
                reqs.push(comm.post_recv((me + i) % n, Tag::data(0))?);
                reqs.push(comm.post_send((me + n - i) % n, Tag::data(0), vec![me as u8; i])?);
            }
            comm.wait_all(&reqs).await?;
            reqs.iter()
                .step_by(2)
                .map(|&r| comm.take_payload(r))
                .collect::<Result<Vec<_>>>()
        };
        let a = run_processes(6, 3, 11, program).unwrap();
        let b = run_processes(6, 3, 11, program).unwrap();
        let c = run_processes(6, 3, 12, program).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.outputs, b.outputs);
        assert_eq!(a.outputs, c.outputs);
    }
}
