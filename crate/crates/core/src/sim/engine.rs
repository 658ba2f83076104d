//! The event engine behind `simulate`.
//!
//! Channel model: a node senses the transmissions of every node within two
//! hops (anything whose signal could collide at one of its neighbors), but
//! only delta seconds after they start. A node begins service only on a
//! sensed-idle channel, so two mutually-sensing nodes can still overlap if
//! their starts fall within delta of each other: the 2-delta vulnerable
//! window. Reception at j fails iff j itself or another neighbor of j
//! transmits during any part of the airtime; transmissions from beyond j's
//! neighborhood never collide (capture effect). ACKs are reliable, occupy
//! zero airtime, and resolve at transmission end.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet, VecDeque};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scenario::ValidatedConfig;
use crate::topology::NodeId;

use super::{LinkStats, LinkUsage, SimOptions, SimResult, SimTotals};

/// Deferred-access jitter window, seconds. A node that found the channel
/// busy re-tries a uniformly-chosen slot of width delta inside this window
/// after the channel clears; without the jitter, every queue blocked on the
/// same transmission would restart at the same instant and collide
/// deterministically, which the analytic 2-delta window does not model.
/// Slotting by delta means two deferred nodes picking different slots are
/// at least one sensing lag apart, so the later one defers again instead of
/// colliding; only same-slot ties fall inside the vulnerable window. No
/// jitter when delta is zero: sensing is instantaneous then and the event
/// order already serializes equal-time starts.
const CONTENTION_JITTER_WINDOW_S: f64 = 12e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PacketMeta {
    id: u64,
    flow: usize,
    attempts: u32,
}

type CodedPair = [PacketMeta; 2];

#[derive(Debug, Clone, Copy)]
enum Payload {
    Native(PacketMeta),
    Coded(CodedPair),
}

#[derive(Debug, Clone, Copy)]
struct Leg {
    receiver: NodeId,
    packet: PacketMeta,
    corrupted: bool,
}

#[derive(Debug, Clone)]
struct CurrentTx {
    end: f64,
    payload: Payload,
    legs: Vec<Leg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Waiting,
    Dithering,
    Transmitting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AttemptKind {
    Fresh,
    AfterWait,
    AfterDither,
}

#[derive(Debug, Clone, Copy)]
enum EventKind {
    /// Transmission ends; ACK outcomes resolve in the same instant.
    TxEnd,
    Arrival {
        flow: usize,
    },
    TryStart {
        kind: AttemptKind,
    },
}

impl EventKind {
    /// Tie-break priority at equal timestamps:
    /// transmission-end (with its ACK) < arrival < service-start.
    fn priority(&self) -> u8 {
        match self {
            EventKind::TxEnd => 0,
            EventKind::Arrival { .. } => 2,
            EventKind::TryStart { .. } => 3,
        }
    }
}

#[derive(Debug)]
struct Event {
    time: f64,
    prio: u8,
    node: NodeId,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap and we pop earliest first.
        other
            .time
            .total_cmp(&self.time)
            .then(other.prio.cmp(&self.prio))
            .then(other.node.cmp(&self.node))
            .then(other.seq.cmp(&self.seq))
    }
}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Insertion-ordered bounded set of packet ids a node has held per flow.
struct History {
    set: HashSet<u64>,
    order: VecDeque<u64>,
    cap: usize,
}

impl History {
    fn new(cap: usize) -> Self {
        History {
            set: HashSet::new(),
            order: VecDeque::new(),
            cap,
        }
    }

    fn insert(&mut self, id: u64) {
        if self.set.insert(id) {
            self.order.push_back(id);
            if self.order.len() > self.cap {
                if let Some(old) = self.order.pop_front() {
                    self.set.remove(&old);
                }
            }
        }
    }

    fn contains(&self, id: u64) -> bool {
        self.set.contains(&id)
    }
}

struct SimNode {
    q_native: VecDeque<PacketMeta>,
    q_coded: VecDeque<CodedPair>,
    phase: Phase,
    current: Option<CurrentTx>,
    /// Most recent transmission window [start, end]; lagged by delta for
    /// the sensing of peers.
    last_window: Option<(f64, f64)>,
    history: [History; 2],
    queue_area: f64,
    queue_since: f64,
}

impl SimNode {
    fn new(history_cap: usize) -> Self {
        SimNode {
            q_native: VecDeque::new(),
            q_coded: VecDeque::new(),
            phase: Phase::Idle,
            current: None,
            last_window: None,
            history: [History::new(history_cap), History::new(history_cap)],
            queue_area: 0.0,
            queue_since: 0.0,
        }
    }

    fn queue_len(&self) -> usize {
        self.q_native.len() + self.q_coded.len()
    }

    fn transmitting_at(&self, t: f64) -> bool {
        self.phase == Phase::Transmitting && self.current.as_ref().is_some_and(|c| c.end > t)
    }
}

pub(super) struct Engine<'w> {
    k: usize,
    flows: u8,
    coding: bool,
    p_mix: f64,
    beta: u32,
    delta: f64,
    mu: f64,
    gamma: [f64; 2],
    jitter_window: f64,
    opts: SimOptions,
    cfg: ValidatedConfig,

    rng: ChaCha8Rng,
    now: f64,
    heap: BinaryHeap<Event>,
    seq: u64,
    next_packet_id: u64,
    nodes: Vec<SimNode>,

    generated: [u64; 2],
    delivered: [u64; 2],
    delivered_measured: [u64; 2],
    dropped: [u64; 2],
    undecodable: [u64; 2],
    link_stats: BTreeMap<(NodeId, NodeId), LinkStats>,
    trace: Option<&'w mut dyn Write>,
}

impl<'w> Engine<'w> {
    pub(super) fn new(
        cfg: &ValidatedConfig,
        opts: &SimOptions,
        trace: Option<&'w mut dyn Write>,
    ) -> Result<Self> {
        opts.check()?;
        let k = cfg.topo.node_count();
        let scenario = cfg.scenario;
        Ok(Engine {
            k,
            flows: scenario.flows,
            coding: scenario.coding,
            p_mix: scenario.p_mix,
            beta: scenario.effective_beta(),
            delta: cfg.params.delta,
            mu: cfg.params.mu,
            gamma: [cfg.params.gamma_1, cfg.params.gamma_k],
            jitter_window: CONTENTION_JITTER_WINDOW_S,
            opts: *opts,
            cfg: cfg.clone(),
            rng: ChaCha8Rng::seed_from_u64(opts.seed),
            now: 0.0,
            heap: BinaryHeap::new(),
            seq: 0,
            next_packet_id: 0,
            nodes: (0..k).map(|_| SimNode::new(opts.history_cap)).collect(),
            generated: [0; 2],
            delivered: [0; 2],
            delivered_measured: [0; 2],
            dropped: [0; 2],
            undecodable: [0; 2],
            link_stats: BTreeMap::new(),
            trace,
        })
    }

    fn node(&self, id: NodeId) -> &SimNode {
        &self.nodes[id - 1]
    }

    fn node_mut(&mut self, id: NodeId) -> &mut SimNode {
        &mut self.nodes[id - 1]
    }

    fn exp_sample(&mut self, mean: f64) -> f64 {
        let u: f64 = self.rng.random();
        -(1.0 - u).ln() * mean
    }

    fn schedule(&mut self, time: f64, node: NodeId, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Event {
            time,
            prio: kind.priority(),
            node,
            seq: self.seq,
            kind,
        });
    }

    fn emit(&mut self, event: &str, node: NodeId, packet: &PacketMeta, kind: &str, outcome: &str) {
        if let Some(w) = self.trace.as_deref_mut() {
            let _ = writeln!(
                w,
                "{:.9} {event} {node} {} {} {kind} {} {outcome}",
                self.now,
                packet.id,
                packet.flow + 1,
                packet.attempts,
            );
        }
    }

    fn source_of(&self, flow: usize) -> NodeId {
        if flow == 0 {
            1
        } else {
            self.k
        }
    }

    fn destination_of(&self, flow: usize) -> NodeId {
        if flow == 0 {
            self.k
        } else {
            1
        }
    }

    fn next_hop(&self, node: NodeId, flow: usize) -> NodeId {
        if flow == 0 {
            node + 1
        } else {
            node - 1
        }
    }

    /// Whether a transmission by `x` collides with a reception at
    /// `receiver` sent by `sender`: x is the receiver itself or one of its
    /// neighbors, other than the sender.
    fn is_interferer(&self, x: NodeId, receiver: NodeId, sender: NodeId) -> bool {
        x != sender && (x == receiver || x.abs_diff(receiver) == 1)
    }

    fn sensed_busy(&self, node: NodeId, t: f64) -> bool {
        self.cfg
            .topo
            .sensing_peers(node)
            .into_iter()
            .any(|y| match self.node(y).last_window {
                Some((s, e)) => s + self.delta <= t && t < e + self.delta,
                None => false,
            })
    }

    /// Earliest time after `t` at which a currently-sensed transmission
    /// clears. Only meaningful when `sensed_busy(node, t)`.
    fn next_sense_transition(&self, node: NodeId, t: f64) -> f64 {
        self.cfg
            .topo
            .sensing_peers(node)
            .into_iter()
            .filter_map(|y| match self.node(y).last_window {
                Some((s, e)) if s + self.delta <= t && t < e + self.delta => Some(e + self.delta),
                _ => None,
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn update_queue_area(&mut self, id: NodeId, t: f64) {
        let warmup = self.opts.warmup_s;
        let node = self.node_mut(id);
        let from = node.queue_since.max(warmup);
        let to = t.max(warmup);
        if to > from {
            node.queue_area += node.queue_len() as f64 * (to - from);
        }
        node.queue_since = t;
    }

    fn check_queue_cap(&self, id: NodeId) -> Result<()> {
        let len = self.node(id).queue_len();
        if len > self.opts.queue_cap {
            return Err(Error::SimUnstable {
                node: id,
                queued: len,
            });
        }
        Ok(())
    }

    /// Routes a native packet into the node's queues: the encoder pairs it
    /// with the oldest opposite-flow packet waiting in the native queue
    /// with probability p_mix; otherwise it queues natively. Retransmitted
    /// packets that stay native go to the head of the queue.
    fn enqueue_native(&mut self, id: NodeId, pkt: PacketMeta, retx_reentry: bool) -> Result<()> {
        self.update_queue_area(id, self.now);
        let interior = id > 1 && id < self.k;
        let mut coded = false;
        if self.coding && interior {
            let partner_pos = self
                .node(id)
                .q_native
                .iter()
                .position(|p| p.flow != pkt.flow);
            if let Some(pos) = partner_pos {
                if self.p_mix > 0.0 && self.rng.random::<f64>() < self.p_mix {
                    let partner = self.node_mut(id).q_native.remove(pos).expect("present");
                    let pair = if pkt.flow == 0 {
                        [pkt, partner]
                    } else {
                        [partner, pkt]
                    };
                    self.node_mut(id).q_coded.push_back(pair);
                    coded = true;
                }
            }
        }
        if !coded {
            if retx_reentry {
                self.node_mut(id).q_native.push_front(pkt);
            } else {
                self.node_mut(id).q_native.push_back(pkt);
            }
        }
        self.check_queue_cap(id)?;
        if self.node(id).phase == Phase::Idle {
            self.attempt_service(id, AttemptKind::Fresh)?;
        }
        Ok(())
    }

    fn attempt_service(&mut self, id: NodeId, kind: AttemptKind) -> Result<()> {
        // Fresh attempts are no-ops unless the node is idle; a node that is
        // already transmitting, waiting, or dithering has its continuation
        // scheduled.
        if kind == AttemptKind::Fresh && self.node(id).phase != Phase::Idle {
            return Ok(());
        }
        let t = self.now;
        if self.node(id).queue_len() == 0 {
            self.node_mut(id).phase = Phase::Idle;
            return Ok(());
        }
        if self.sensed_busy(id, t) {
            let at = self.next_sense_transition(id, t);
            self.node_mut(id).phase = Phase::Waiting;
            self.schedule(
                at,
                id,
                EventKind::TryStart {
                    kind: AttemptKind::AfterWait,
                },
            );
            return Ok(());
        }
        if kind == AttemptKind::AfterWait && self.delta > 0.0 {
            let slots = (self.jitter_window / self.delta).round().max(1.0) as u64;
            let slot = self.rng.random_range(0..slots);
            if slot > 0 {
                let jitter = slot as f64 * self.delta;
                self.node_mut(id).phase = Phase::Dithering;
                self.schedule(
                    t + jitter,
                    id,
                    EventKind::TryStart {
                        kind: AttemptKind::AfterDither,
                    },
                );
                return Ok(());
            }
        }
        self.start_transmission(id)
    }

    fn start_transmission(&mut self, id: NodeId) -> Result<()> {
        let t = self.now;
        self.update_queue_area(id, t);

        // Coded queue has non-preemptive priority over the native queue.
        let payload = if let Some(pair) = self.node_mut(id).q_coded.pop_front() {
            Payload::Coded(pair)
        } else if let Some(pkt) = self.node_mut(id).q_native.pop_front() {
            Payload::Native(pkt)
        } else {
            self.node_mut(id).phase = Phase::Idle;
            return Ok(());
        };

        let duration = self.exp_sample(1.0 / self.mu);
        let end = t + duration;

        let payload = match payload {
            Payload::Native(mut p) => {
                p.attempts += 1;
                Payload::Native(p)
            }
            Payload::Coded(mut pair) => {
                pair[0].attempts += 1;
                pair[1].attempts += 1;
                Payload::Coded(pair)
            }
        };
        let legs: Vec<Leg> = match &payload {
            Payload::Native(p) => vec![Leg {
                receiver: self.next_hop(id, p.flow),
                packet: *p,
                corrupted: false,
            }],
            Payload::Coded(pair) => pair
                .iter()
                .map(|p| Leg {
                    receiver: self.next_hop(id, p.flow),
                    packet: *p,
                    corrupted: false,
                })
                .collect(),
        };
        let mut tx = CurrentTx { end, payload, legs };

        // Ongoing transmissions corrupt the new legs and the new
        // transmission corrupts ongoing receptions in range.
        for other in 1..=self.k {
            if other == id || !self.node(other).transmitting_at(t) {
                continue;
            }
            for leg in &mut tx.legs {
                if self.is_interferer(other, leg.receiver, id) {
                    leg.corrupted = true;
                }
            }
        }
        for other in 1..=self.k {
            if other == id {
                continue;
            }
            if !self.node(other).transmitting_at(t) {
                continue;
            }
            let mut flags = Vec::new();
            if let Some(cur) = &self.node(other).current {
                for (idx, leg) in cur.legs.iter().enumerate() {
                    if self.is_interferer(id, leg.receiver, other) {
                        flags.push(idx);
                    }
                }
            }
            if let Some(cur) = self.node_mut(other).current.as_mut() {
                for idx in flags {
                    cur.legs[idx].corrupted = true;
                }
            }
        }

        let kind_str = match tx.payload {
            Payload::Native(_) => "native",
            Payload::Coded(_) => "coded",
        };
        for leg in tx.legs.clone() {
            self.emit("service_start", id, &leg.packet, kind_str, "-");
        }

        self.node_mut(id).phase = Phase::Transmitting;
        self.node_mut(id).last_window = Some((t, end));
        self.node_mut(id).current = Some(tx);
        self.schedule(end, id, EventKind::TxEnd);
        Ok(())
    }

    fn handle_tx_end(&mut self, id: NodeId) -> Result<()> {
        let tx = self.node_mut(id).current.take().expect("tx end without tx");
        self.node_mut(id).phase = Phase::Idle;
        let kind_str = match tx.payload {
            Payload::Native(_) => "native",
            Payload::Coded(_) => "coded",
        };
        let coded = matches!(tx.payload, Payload::Coded(_));

        for leg in &tx.legs {
            let stats = self.link_stats.entry((id, leg.receiver)).or_default();
            stats.attempts += 1;
            if leg.corrupted {
                stats.collisions += 1;
            } else {
                stats.successes += 1;
            }
        }

        // The ACK outcome of every leg is known reliably at this instant.
        for leg in &tx.legs {
            let pkt = leg.packet;
            if leg.corrupted {
                self.emit("tx_end", id, &pkt, kind_str, "collision");
                if pkt.attempts >= self.beta {
                    self.dropped[pkt.flow] += 1;
                    self.emit("drop", id, &pkt, kind_str, "beta_exhausted");
                } else {
                    self.enqueue_native(id, pkt, true)?;
                }
            } else {
                self.emit("tx_end", id, &pkt, kind_str, "ok");
                self.receive(leg.receiver, pkt, coded, &tx)?;
            }
        }

        self.attempt_service(id, AttemptKind::Fresh)?;
        Ok(())
    }

    fn receive(&mut self, at: NodeId, pkt: PacketMeta, coded: bool, tx: &CurrentTx) -> Result<()> {
        if coded {
            let partner = match &tx.payload {
                Payload::Coded(pair) => pair[1 - pkt.flow],
                Payload::Native(_) => unreachable!("coded leg on native payload"),
            };
            if !self.node(at).history[partner.flow].contains(partner.id) {
                self.undecodable[pkt.flow] += 1;
                self.emit("discard", at, &pkt, "coded", "missing_partner");
                return Ok(());
            }
        }
        self.node_mut(at).history[pkt.flow].insert(pkt.id);
        if at == self.destination_of(pkt.flow) {
            self.delivered[pkt.flow] += 1;
            if self.now > self.opts.warmup_s {
                self.delivered_measured[pkt.flow] += 1;
            }
            self.emit("deliver", at, &pkt, "native", "ok");
            return Ok(());
        }
        let fresh = PacketMeta { attempts: 0, ..pkt };
        self.enqueue_native(at, fresh, false)
    }

    fn handle_arrival(&mut self, id: NodeId, flow: usize) -> Result<()> {
        let next = self.now + self.exp_sample(1.0 / self.gamma[flow]);
        self.schedule(next, id, EventKind::Arrival { flow });

        self.next_packet_id += 1;
        let pkt = PacketMeta {
            id: self.next_packet_id,
            flow,
            attempts: 0,
        };
        self.generated[flow] += 1;
        self.node_mut(id).history[flow].insert(pkt.id);
        self.emit("arrival", id, &pkt, "native", "-");
        self.enqueue_native(id, pkt, false)
    }

    pub(super) fn run(mut self) -> Result<SimResult> {
        let horizon = self.opts.horizon_s;
        let first = self.exp_sample(1.0 / self.gamma[0]);
        self.schedule(first, self.source_of(0), EventKind::Arrival { flow: 0 });
        if self.flows == 2 {
            let first = self.exp_sample(1.0 / self.gamma[1]);
            self.schedule(first, self.source_of(1), EventKind::Arrival { flow: 1 });
        }

        while let Some(ev) = self.heap.pop() {
            if ev.time > horizon {
                break;
            }
            self.now = ev.time;
            match ev.kind {
                EventKind::TxEnd => self.handle_tx_end(ev.node)?,
                EventKind::Arrival { flow } => self.handle_arrival(ev.node, flow)?,
                EventKind::TryStart { kind } => {
                    // A queue can only drain through service, so the queues
                    // are still non-empty here; re-check the channel.
                    match kind {
                        AttemptKind::Fresh => unreachable!("fresh attempts are not scheduled"),
                        k => self.attempt_service(ev.node, k)?,
                    }
                }
            }
        }
        self.now = horizon;
        for id in 1..=self.k {
            self.update_queue_area(id, horizon);
        }

        let mut in_queue = [0u64; 2];
        let mut in_flight = [0u64; 2];
        for node in &self.nodes {
            for p in &node.q_native {
                in_queue[p.flow] += 1;
            }
            for pair in &node.q_coded {
                in_queue[pair[0].flow] += 1;
                in_queue[pair[1].flow] += 1;
            }
            if let Some(tx) = &node.current {
                match &tx.payload {
                    Payload::Native(p) => in_flight[p.flow] += 1,
                    Payload::Coded(pair) => {
                        in_flight[pair[0].flow] += 1;
                        in_flight[pair[1].flow] += 1;
                    }
                }
            }
        }

        let window = horizon - self.opts.warmup_s;
        let theta_hat = (self.delivered_measured[0] + self.delivered_measured[1]) as f64 / window;
        let mean_queue: Vec<f64> = self.nodes.iter().map(|n| n.queue_area / window).collect();

        let link_stats = self
            .link_stats
            .into_iter()
            .map(|((from, to), s)| LinkUsage {
                from,
                to,
                attempts: s.attempts,
                successes: s.successes,
                collisions: s.collisions,
            })
            .collect();

        Ok(SimResult {
            theta_hat,
            ci_half_width: 0.0,
            replications: 1,
            theta_reps: vec![theta_hat],
            link_stats,
            mean_queue,
            totals: SimTotals {
                generated: self.generated,
                delivered: self.delivered,
                dropped: self.dropped,
                undecodable: self.undecodable,
                in_queue,
                in_flight,
            },
        })
    }
}
