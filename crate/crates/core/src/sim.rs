//! Seeded discrete-event simulation of message-passing executions.
//!
//! Three topologies are supported:
//!
//! * `complete`: every process may message every other. At each step a
//!   process is drawn uniformly and executes an internal event with
//!   probability `pr_i`, a send or a receive with probability
//!   `(1 - pr_i) / 2` each. A receive drawn with nothing pending is an idle
//!   step that executes no event. Pending messages for a destination form
//!   an unordered pool and a receive consumes a uniformly drawn one
//!   (channels are not FIFO).
//! * `star`: `n` clients exchange request/reply rounds with one server
//!   that owns a single Bloom clock and vector clock. The server's receive
//!   and reply are executed back to back.
//! * `broadcast`: every process sends one message delivered to all others,
//!   then receives the `n - 1` messages addressed to it.
//!
//! Every executed event receives the next global sequence number (GSN).
//! Since the scheduler is a single loop, GSN order is a linearization of
//! happened-before.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::clock::{BloomClock, EventIndex, HashFamily, ProcessId, VectorClock};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Complete,
    Star,
    Broadcast,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::Complete => "complete",
            Topology::Star => "star",
            Topology::Broadcast => "broadcast",
        })
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete" => Ok(Topology::Complete),
            "star" => Ok(Topology::Star),
            "broadcast" => Ok(Topology::Broadcast),
            other => Err(Error::config(format!("unknown topology '{other}'"))),
        }
    }
}

/// Parameters of one simulated execution.
///
/// For `star`, `n` is the number of clients; the server is the extra
/// process `n`, so clocks have width `n + 1` in the vector case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub topology: Topology,
    pub n: usize,
    pub m: usize,
    pub k: u32,
    pub pr_i: f64,
    pub seed: u64,
    /// Stop after this many events. Defaults to `n^2` for complete and
    /// broadcast, and to the full request/reply schedule for star.
    #[serde(default)]
    pub gsn_limit: Option<u64>,
    /// Star only: request/reply rounds per client. Defaults to `n`.
    #[serde(default)]
    pub messages_per_client: Option<u64>,
}

impl ExperimentConfig {
    pub fn new(topology: Topology, n: usize, m: usize, k: u32, pr_i: f64, seed: u64) -> Self {
        ExperimentConfig {
            topology,
            n,
            m,
            k,
            pr_i,
            seed,
            gsn_limit: None,
            messages_per_client: None,
        }
    }

    pub fn complete(n: usize, m: usize, k: u32, pr_i: f64, seed: u64) -> Self {
        Self::new(Topology::Complete, n, m, k, pr_i, seed)
    }

    pub fn star(n: usize, m: usize, k: u32, seed: u64) -> Self {
        Self::new(Topology::Star, n, m, k, 0.0, seed)
    }

    pub fn broadcast(n: usize, m: usize, k: u32, seed: u64) -> Self {
        Self::new(Topology::Broadcast, n, m, k, 0.0, seed)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ExperimentConfig { seed, ..self.clone() }
    }

    /// Copy with parameters the topology ignores pinned: star and
    /// broadcast runs have no internal events, so `pr_i` becomes 0.
    pub fn normalized(&self) -> Self {
        match self.topology {
            Topology::Complete => self.clone(),
            Topology::Star | Topology::Broadcast => ExperimentConfig {
                pr_i: 0.0,
                ..self.clone()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 && self.topology != Topology::Star {
            return Err(Error::config(format!("need at least 2 processes, got n = {}", self.n)));
        }
        if self.n < 1 {
            return Err(Error::config("star topology needs at least one client"));
        }
        if self.m == 0 {
            return Err(Error::config("clock width m must be at least 1"));
        }
        if self.k == 0 {
            return Err(Error::config("hash count k must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.pr_i) {
            return Err(Error::config(format!("pr_i must lie in [0, 1], got {}", self.pr_i)));
        }
        if self.gsn_limit == Some(0) {
            return Err(Error::config("gsn limit must be positive"));
        }
        if self.messages_per_client == Some(0) {
            return Err(Error::config("messages per client must be positive"));
        }
        Ok(())
    }

    /// Number of vector clock entries.
    pub fn process_count(&self) -> usize {
        match self.topology {
            Topology::Star => self.n + 1,
            _ => self.n,
        }
    }

    pub fn rounds_per_client(&self) -> u64 {
        self.messages_per_client.unwrap_or(self.n as u64)
    }

    /// Events in a run with no explicit limit.
    pub fn natural_length(&self) -> u64 {
        let n = self.n as u64;
        match self.topology {
            Topology::Complete | Topology::Broadcast => n * n,
            Topology::Star => 4 * n * self.rounds_per_client(),
        }
    }

    pub fn effective_gsn_limit(&self) -> u64 {
        match (self.topology, self.gsn_limit) {
            (Topology::Complete, Some(limit)) => limit,
            (_, Some(limit)) => limit.min(self.natural_length()),
            (_, None) => self.natural_length(),
        }
    }

    /// Hash functions for this run, keyed from the run seed.
    pub fn hash_family(&self) -> Result<HashFamily> {
        HashFamily::new(self.k, self.m, hash_seed(self.seed))
    }
}

fn hash_seed(seed: u64) -> u64 {
    seed.rotate_left(29) ^ 0x6a09_e667_f3bc_c908
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Internal,
    Send,
    Receive,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Internal => "internal",
            EventKind::Send => "send",
            EventKind::Receive => "receive",
        })
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "internal" => Ok(EventKind::Internal),
            "send" => Ok(EventKind::Send),
            "receive" => Ok(EventKind::Receive),
            other => Err(Error::config(format!("unknown event kind '{other}'"))),
        }
    }
}

/// One executed event with the post-tick timestamps of its process.
///
/// `sender`/`receiver` describe the message for send and receive events
/// (a broadcast send has no single receiver). `send_gsn` on a receive names
/// the send event whose message it consumed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub gsn: u64,
    pub pid: ProcessId,
    pub kind: EventKind,
    pub event_index: EventIndex,
    pub sender: Option<ProcessId>,
    pub receiver: Option<ProcessId>,
    pub send_gsn: Option<u64>,
    pub vector_ts: VectorClock,
    pub bloom_ts: BloomClock,
}

/// A message in flight, carrying both clocks as of its send event. The
/// vector payload exists only to build the oracle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessageItem {
    pub origin: ProcessId,
    pub destination: Option<ProcessId>,
    pub send_gsn: u64,
    pub bloom_payload: BloomClock,
    pub vector_payload: VectorClock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionLog {
    pub config: ExperimentConfig,
    pub events: Vec<EventRecord>,
}

impl ExecutionLog {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Event with the given GSN (GSNs are contiguous from 1).
    pub fn event(&self, gsn: u64) -> Option<&EventRecord> {
        let idx = usize::try_from(gsn.checked_sub(1)?).ok()?;
        self.events.get(idx)
    }

    pub fn last_gsn(&self) -> u64 {
        self.events.last().map_or(0, |e| e.gsn)
    }
}

struct Process {
    id: ProcessId,
    next: EventIndex,
    bloom: BloomClock,
    vector: VectorClock,
}

impl Process {
    fn new(id: usize, width: usize, m: usize) -> Self {
        Process {
            id: ProcessId(id as u32),
            next: EventIndex::FIRST,
            bloom: BloomClock::new(m),
            vector: VectorClock::new(width),
        }
    }
}

/// Applies the clock protocol and appends events to the log.
struct Executor {
    family: HashFamily,
    procs: Vec<Process>,
    events: Vec<EventRecord>,
}

impl Executor {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        let width = config.process_count();
        Ok(Executor {
            family: config.hash_family()?,
            procs: (0..width).map(|i| Process::new(i, width, config.m)).collect(),
            events: Vec::with_capacity(config.effective_gsn_limit() as usize),
        })
    }

    fn next_gsn(&self) -> u64 {
        self.events.len() as u64 + 1
    }

    fn execute(
        &mut self,
        pid: usize,
        kind: EventKind,
        incoming: Option<&MessageItem>,
        receiver: Option<ProcessId>,
    ) -> Result<&EventRecord> {
        let gsn = self.next_gsn();
        let proc = &mut self.procs[pid];
        if let Some(msg) = incoming {
            proc.bloom.merge(&msg.bloom_payload)?;
            proc.vector.merge(&msg.vector_payload)?;
        }
        let x = proc.next;
        proc.bloom.tick(proc.id, x, &self.family)?;
        proc.vector.tick(proc.id)?;
        proc.next = x.next();
        let (sender, receiver, send_gsn) = match (kind, incoming) {
            (EventKind::Receive, Some(msg)) => (Some(msg.origin), Some(proc.id), Some(msg.send_gsn)),
            (EventKind::Send, _) => (Some(proc.id), receiver, None),
            _ => (None, None, None),
        };
        self.events.push(EventRecord {
            gsn,
            pid: proc.id,
            kind,
            event_index: x,
            sender,
            receiver,
            send_gsn,
            vector_ts: proc.vector.clone(),
            bloom_ts: proc.bloom.clone(),
        });
        Ok(self.events.last().expect("just pushed"))
    }

    fn internal(&mut self, pid: usize) -> Result<()> {
        self.execute(pid, EventKind::Internal, None, None).map(|_| ())
    }

    fn send(&mut self, pid: usize, destination: Option<usize>) -> Result<MessageItem> {
        let destination = destination.map(|d| ProcessId(d as u32));
        let ev = self.execute(pid, EventKind::Send, None, destination)?;
        Ok(MessageItem {
            origin: ev.pid,
            destination,
            send_gsn: ev.gsn,
            bloom_payload: ev.bloom_ts.clone(),
            vector_payload: ev.vector_ts.clone(),
        })
    }

    fn receive(&mut self, pid: usize, msg: &MessageItem) -> Result<()> {
        self.execute(pid, EventKind::Receive, Some(msg), None).map(|_| ())
    }

    fn finish(self, config: ExperimentConfig) -> ExecutionLog {
        ExecutionLog {
            config,
            events: self.events,
        }
    }
}

/// Runs the configured topology.
pub fn simulate(config: &ExperimentConfig) -> Result<ExecutionLog> {
    match config.topology {
        Topology::Complete => run_complete(config),
        Topology::Star => run_star(config),
        Topology::Broadcast => run_broadcast(config),
    }
}

fn expect_topology(config: &ExperimentConfig, want: Topology) -> Result<()> {
    config.validate()?;
    if config.topology != want {
        return Err(Error::config(format!(
            "expected topology {want}, config has {}",
            config.topology
        )));
    }
    Ok(())
}

pub fn run_complete(config: &ExperimentConfig) -> Result<ExecutionLog> {
    expect_topology(config, Topology::Complete)?;
    let n = config.n;
    let limit = config.effective_gsn_limit();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut exec = Executor::new(config)?;
    let mut pending: Vec<Vec<MessageItem>> = vec![Vec::new(); n];
    let send_cut = config.pr_i + (1.0 - config.pr_i) / 2.0;

    while (exec.events.len() as u64) < limit {
        let p = rng.random_range(0..n);
        let u: f64 = rng.random();
        if u < config.pr_i {
            exec.internal(p)?;
        } else if u >= send_cut {
            // Nothing to process: the step is idle and consumes no GSN.
            if !pending[p].is_empty() {
                let slot = rng.random_range(0..pending[p].len());
                let msg = pending[p].swap_remove(slot);
                exec.receive(p, &msg)?;
            }
        } else {
            let mut dest = rng.random_range(0..n - 1);
            if dest >= p {
                dest += 1;
            }
            let msg = exec.send(p, Some(dest))?;
            pending[dest].push(msg);
        }
    }
    Ok(exec.finish(config.clone()))
}

enum Phase {
    Idle,
    AwaitingServer(MessageItem),
    AwaitingReply(MessageItem),
}

pub fn run_star(config: &ExperimentConfig) -> Result<ExecutionLog> {
    expect_topology(config, Topology::Star)?;
    let clients = config.n;
    let server = clients;
    let limit = config.effective_gsn_limit();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut exec = Executor::new(config)?;
    let mut phase: Vec<Phase> = (0..clients).map(|_| Phase::Idle).collect();
    let mut rounds_left = vec![config.rounds_per_client(); clients];
    let mut active: Vec<usize> = (0..clients).collect();

    while !active.is_empty() {
        let used = exec.events.len() as u64;
        if used >= limit {
            break;
        }
        let slot = rng.random_range(0..active.len());
        let c = active[slot];
        match std::mem::replace(&mut phase[c], Phase::Idle) {
            Phase::Idle => {
                let req = exec.send(c, Some(server))?;
                phase[c] = Phase::AwaitingServer(req);
            }
            Phase::AwaitingServer(req) => {
                if used + 2 > limit {
                    break;
                }
                exec.receive(server, &req)?;
                let reply = exec.send(server, Some(c))?;
                phase[c] = Phase::AwaitingReply(reply);
            }
            Phase::AwaitingReply(reply) => {
                exec.receive(c, &reply)?;
                rounds_left[c] -= 1;
                if rounds_left[c] == 0 {
                    active.swap_remove(slot);
                }
            }
        }
    }
    Ok(exec.finish(config.normalized()))
}

pub fn run_broadcast(config: &ExperimentConfig) -> Result<ExecutionLog> {
    expect_topology(config, Topology::Broadcast)?;
    let n = config.n;
    let limit = config.effective_gsn_limit();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut exec = Executor::new(config)?;
    let mut sent = vec![false; n];
    let mut inbox: Vec<Vec<MessageItem>> = vec![Vec::new(); n];
    let mut ready: Vec<usize> = Vec::with_capacity(n);

    while (exec.events.len() as u64) < limit {
        ready.clear();
        ready.extend((0..n).filter(|&p| !sent[p] || !inbox[p].is_empty()));
        if ready.is_empty() {
            break;
        }
        let p = ready[rng.random_range(0..ready.len())];
        if !sent[p] {
            let msg = exec.send(p, None)?;
            sent[p] = true;
            for (q, queue) in inbox.iter_mut().enumerate() {
                if q != p {
                    queue.push(msg.clone());
                }
            }
        } else {
            let slot = rng.random_range(0..inbox[p].len());
            let msg = inbox[p].swap_remove(slot);
            exec.receive(p, &msg)?;
        }
    }
    Ok(exec.finish(config.normalized()))
}

/// Re-executes the clock protocol along the log's process order and
/// message linkage, checking every recorded timestamp and the message
/// bookkeeping (each point-to-point message is received once, by its
/// addressee, after it was sent).
pub fn verify_replay(log: &ExecutionLog) -> Result<()> {
    let config = &log.config;
    let family = config.hash_family()?;
    let width = config.process_count();
    let mut procs: Vec<Process> = (0..width).map(|i| Process::new(i, width, config.m)).collect();
    let mut sends: HashMap<u64, (Option<ProcessId>, BloomClock, VectorClock)> = HashMap::new();
    let mismatch = |gsn: u64, what: &str| Error::domain(format!("replay mismatch at gsn {gsn}: {what}"));

    for (i, ev) in log.events.iter().enumerate() {
        if ev.gsn != i as u64 + 1 {
            return Err(mismatch(ev.gsn, "gsn is not contiguous"));
        }
        let proc = procs
            .get_mut(ev.pid.index())
            .ok_or_else(|| mismatch(ev.gsn, "process id out of range"))?;
        if ev.event_index != proc.next {
            return Err(mismatch(ev.gsn, "event index out of sequence"));
        }
        if ev.kind == EventKind::Receive {
            let link = ev.send_gsn.ok_or_else(|| mismatch(ev.gsn, "receive without send link"))?;
            let (dest, bloom, vector) = match sends.get(&link) {
                Some((None, b, v)) => (None, b.clone(), v.clone()),
                Some(_) => sends.remove(&link).expect("present"),
                None => return Err(mismatch(ev.gsn, "receive of unknown or consumed message")),
            };
            if dest.is_some_and(|d| d != ev.pid) {
                return Err(mismatch(ev.gsn, "message received by wrong process"));
            }
            proc.bloom.merge(&bloom)?;
            proc.vector.merge(&vector)?;
        }
        proc.bloom.tick(proc.id, proc.next, &family)?;
        proc.vector.tick(proc.id)?;
        proc.next = proc.next.next();
        if proc.bloom != ev.bloom_ts {
            return Err(mismatch(ev.gsn, "bloom timestamp"));
        }
        if proc.vector != ev.vector_ts {
            return Err(mismatch(ev.gsn, "vector timestamp"));
        }
        if ev.kind == EventKind::Send {
            sends.insert(ev.gsn, (ev.receiver, proc.bloom.clone(), proc.vector.clone()));
        }
    }
    Ok(())
}
