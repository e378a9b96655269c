//! WAKE/DDM coordinate assignment as a per-node message-passing state machine.
//!
//! Delivery is organized in synchronous rounds: every message emitted in
//! round `t` reaches all neighbors of its sender before any node emits in
//! round `t + 1`. There is no loss and no contention. Under this schedule a
//! node first hears a DDM along a shortest path, so the forwarding rule
//! (forward only on strict improvement of the counter) reproduces BFS hop
//! counts exactly and every node forwards each flood once.
//!
//! The run starts with a WAKE flood from the initiator. The first landmark
//! originates its DDM when it is woken; landmark `j + 1` originates its DDM
//! when the DDM of landmark `j` first reaches it.

use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::error::{JumpsError, Result};
use crate::topology::{Hops, NodeId, Topology};

/// Identifies one network-wide flood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum FloodId {
    Wake,
    /// DDM of the landmark with this 0-based index.
    Ddm(usize),
}

impl FloodId {
    fn slot(self) -> usize {
        match self {
            FloodId::Wake => 0,
            FloodId::Ddm(j) => j + 1,
        }
    }

    fn from_slot(slot: usize) -> Self {
        if slot == 0 {
            FloodId::Wake
        } else {
            FloodId::Ddm(slot - 1)
        }
    }
}

impl fmt::Display for FloodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FloodId::Wake => f.write_str("WAKE"),
            FloodId::Ddm(j) => write!(f, "DDM_{}", j + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payload {
    Wake,
    /// Distance discovery message. `counter` is 0 when emitted by the
    /// landmark itself and grows by one per forwarding hop.
    Ddm { landmark_index: usize, counter: Hops },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Message {
    pub payload: Payload,
    pub sender: NodeId,
}

impl Message {
    pub fn flood(&self) -> FloodId {
        match self.payload {
            Payload::Wake => FloodId::Wake,
            Payload::Ddm { landmark_index, .. } => FloodId::Ddm(landmark_index),
        }
    }
}

/// What a node does after processing one received message.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Reaction {
    pub forward: Option<Message>,
    /// Set when this reception wakes a landmark: the landmark index whose
    /// DDM must now be originated.
    pub triggered: Option<usize>,
}

/// Local protocol state of one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeState {
    pub node_id: NodeId,
    pub woken: bool,
    /// Landmark index when this node is a landmark.
    pub landmark_index: Option<usize>,
    best: Vec<Option<Hops>>,
}

impl NodeState {
    pub fn new(node_id: NodeId, landmark_index: Option<usize>, landmark_count: usize) -> Self {
        NodeState {
            node_id,
            woken: false,
            landmark_index,
            best: vec![None; landmark_count],
        }
    }

    /// Lowest hop count learned so far towards each landmark.
    pub fn coords(&self) -> &[Option<Hops>] {
        &self.best
    }

    /// Wakes this node as the initiator and returns the WAKE it emits.
    pub fn initiate(&mut self) -> (Message, Option<usize>) {
        self.woken = true;
        let msg = Message {
            payload: Payload::Wake,
            sender: self.node_id,
        };
        (msg, self.wake_trigger())
    }

    /// Starts this landmark's own DDM flood with a zero counter.
    pub fn originate(&mut self) -> Message {
        let j = self.landmark_index.expect("only landmarks originate DDMs");
        self.best[j] = Some(0);
        Message {
            payload: Payload::Ddm {
                landmark_index: j,
                counter: 0,
            },
            sender: self.node_id,
        }
    }

    pub fn receive(&mut self, msg: &Message) -> Reaction {
        match msg.payload {
            Payload::Wake => {
                if self.woken {
                    return Reaction::default();
                }
                self.woken = true;
                Reaction {
                    forward: Some(Message {
                        payload: Payload::Wake,
                        sender: self.node_id,
                    }),
                    triggered: self.wake_trigger(),
                }
            }
            Payload::Ddm { landmark_index, counter } => {
                let candidate = counter + 1;
                let first = self.best[landmark_index].is_none();
                if self.best[landmark_index].is_some_and(|b| b <= candidate) {
                    return Reaction::default();
                }
                self.best[landmark_index] = Some(candidate);
                let triggered = match self.landmark_index {
                    Some(own) if first && own == landmark_index + 1 => Some(own),
                    _ => None,
                };
                Reaction {
                    forward: Some(Message {
                        payload: Payload::Ddm {
                            landmark_index,
                            counter: candidate,
                        },
                        sender: self.node_id,
                    }),
                    triggered,
                }
            }
        }
    }

    fn wake_trigger(&self) -> Option<usize> {
        (self.landmark_index == Some(0)).then_some(0)
    }
}

/// Per-node hop counts to every landmark, row-major by node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordinateMatrix {
    landmark_count: usize,
    hops: Vec<Hops>,
}

impl CoordinateMatrix {
    pub fn from_rows(landmark_count: usize, rows: Vec<Vec<Hops>>) -> Self {
        assert!(rows.iter().all(|r| r.len() == landmark_count), "ragged coordinate rows");
        CoordinateMatrix {
            landmark_count,
            hops: rows.into_iter().flatten().collect(),
        }
    }

    /// Builds the matrix from one hop vector per landmark (column-major input).
    pub fn from_columns(columns: &[Vec<Hops>]) -> Self {
        let landmark_count = columns.len();
        let nodes = columns.first().map_or(0, Vec::len);
        let mut hops = Vec::with_capacity(nodes * landmark_count);
        for i in 0..nodes {
            hops.extend(columns.iter().map(|c| c[i]));
        }
        CoordinateMatrix { landmark_count, hops }
    }

    pub fn node_count(&self) -> usize {
        self.hops.len().checked_div(self.landmark_count).unwrap_or(0)
    }

    pub fn landmark_count(&self) -> usize {
        self.landmark_count
    }

    pub fn row(&self, node: NodeId) -> &[Hops] {
        &self.hops[node * self.landmark_count..(node + 1) * self.landmark_count]
    }

    pub fn get(&self, node: NodeId, landmark: usize) -> Hops {
        self.hops[node * self.landmark_count + landmark]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Hops]> {
        self.hops.chunks(self.landmark_count.max(1))
    }

    /// Keeps only the first `count` landmark columns.
    pub fn truncated(&self, count: usize) -> CoordinateMatrix {
        assert!(count <= self.landmark_count);
        let hops = self.rows().flat_map(|r| r[..count].iter().copied()).collect();
        CoordinateMatrix {
            landmark_count: count,
            hops,
        }
    }

    /// CSV with one row per node: `node_id,x,y,d_1..d_N`.
    pub fn write_csv<W: Write>(&self, topology: &Topology, mut out: W) -> std::io::Result<()> {
        write!(out, "node_id,x,y")?;
        for j in 1..=self.landmark_count {
            write!(out, ",d_{j}")?;
        }
        writeln!(out)?;
        for (i, row) in self.rows().enumerate() {
            let p = topology.position(i);
            write!(out, "{i},{},{}", p.x, p.y)?;
            for h in row {
                write!(out, ",{h}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FloodTraffic {
    pub flood: FloodId,
    pub emissions: u64,
    pub receptions: u64,
}

/// Emission and reception counters, one entry per flood.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrafficStats {
    pub floods: Vec<FloodTraffic>,
}

impl TrafficStats {
    fn new(slots: usize) -> Self {
        TrafficStats {
            floods: (0..slots)
                .map(|s| FloodTraffic {
                    flood: FloodId::from_slot(s),
                    emissions: 0,
                    receptions: 0,
                })
                .collect(),
        }
    }

    pub fn flood(&self, id: FloodId) -> Option<&FloodTraffic> {
        self.floods.iter().find(|f| f.flood == id)
    }

    pub fn total_emissions(&self) -> u64 {
        self.floods.iter().map(|f| f.emissions).sum()
    }

    pub fn total_receptions(&self) -> u64 {
        self.floods.iter().map(|f| f.receptions).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoundEvent {
    pub round: u32,
    pub flood: FloodId,
    pub emitters: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LandmarkTrigger {
    pub landmark_index: usize,
    pub round: u32,
    /// Flood whose reception woke the landmark; `None` for an initiator
    /// that is itself the first landmark.
    pub by: Option<FloodId>,
}

/// Round-by-round record of a protocol run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FloodTrace {
    pub events: Vec<RoundEvent>,
    /// `reached[slot][node]`: round in which the node first held the flood
    /// (slot 0 is WAKE, slot `j + 1` is the DDM of landmark `j`).
    pub reached: Vec<Vec<Option<u32>>>,
    pub triggers: Vec<LandmarkTrigger>,
    pub traffic: TrafficStats,
}

impl FloodTrace {
    pub fn reached_round(&self, flood: FloodId, node: NodeId) -> Option<u32> {
        self.reached.get(flood.slot()).and_then(|r| r[node])
    }

    /// Last round in which `flood` emitted anything.
    pub fn last_round(&self, flood: FloodId) -> Option<u32> {
        self.events.iter().filter(|e| e.flood == flood).map(|e| e.round).max()
    }

    pub fn first_round(&self, flood: FloodId) -> Option<u32> {
        self.events.iter().filter(|e| e.flood == flood).map(|e| e.round).min()
    }

    /// Event log: `round,flood_id,emitter_ids` with space-separated ids.
    pub fn write_event_log<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "round,flood_id,emitter_ids")?;
        for e in &self.events {
            let ids: Vec<String> = e.emitters.iter().map(ToString::to_string).collect();
            writeln!(out, "{},{},{}", e.round, e.flood, ids.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    /// Only the WAKE flood runs; landmark wake-ups are recorded, not acted on.
    WakeOnly,
    /// One DDM flood runs; the next landmark's wake-up is recorded only.
    SingleDdm,
    /// WAKE then the chained DDM floods.
    Full,
}

type ReachedRounds = Vec<Vec<Option<u32>>>;

struct Engine<'a> {
    topology: &'a Topology,
    nodes: Vec<NodeState>,
    mode: Mode,
    traffic: TrafficStats,
    triggers: Vec<LandmarkTrigger>,
    trace: Option<(Vec<RoundEvent>, ReachedRounds)>,
}

impl<'a> Engine<'a> {
    fn new(topology: &'a Topology, mode: Mode, record: bool) -> Self {
        let n_landmarks = topology.landmark_count();
        let mut landmark_of = vec![None; topology.node_count()];
        for (j, &id) in topology.landmark_ids().iter().enumerate() {
            landmark_of[id] = Some(j);
        }
        let nodes = landmark_of
            .into_iter()
            .enumerate()
            .map(|(id, lm)| NodeState::new(id, lm, n_landmarks))
            .collect();
        let slots = n_landmarks + 1;
        Engine {
            topology,
            nodes,
            mode,
            traffic: TrafficStats::new(slots),
            triggers: Vec::new(),
            trace: record.then(|| (Vec::new(), vec![vec![None; topology.node_count()]; slots])),
        }
    }

    fn mark_reached(&mut self, flood: FloodId, node: NodeId, round: u32) {
        if let Some((_, reached)) = &mut self.trace {
            let cell = &mut reached[flood.slot()][node];
            if cell.is_none() {
                *cell = Some(round);
            }
        }
    }

    fn on_trigger(&mut self, landmark_index: usize, round: u32, by: Option<FloodId>, next: &mut Vec<Message>) {
        self.triggers.push(LandmarkTrigger {
            landmark_index,
            round,
            by,
        });
        if self.mode == Mode::Full {
            let origin = self.topology.landmark_ids()[landmark_index];
            next.push(self.nodes[origin].originate());
        }
    }

    /// Runs synchronous rounds from the given round-0 emissions until quiet.
    fn run(&mut self, outbox: Vec<Message>) {
        self.run_deferred(outbox, Vec::new());
    }

    /// As [`Engine::run`], with `deferred` joining the round-1 emissions.
    fn run_deferred(&mut self, mut outbox: Vec<Message>, mut deferred: Vec<Message>) {
        let mut round = 0u32;
        while !outbox.is_empty() {
            let mut next = Vec::new();
            for msg in &outbox {
                let flood = msg.flood();
                self.mark_reached(flood, msg.sender, round);
                let slot = &mut self.traffic.floods[flood.slot()];
                slot.emissions += 1;
                slot.receptions += self.topology.degree(msg.sender) as u64;
            }
            if let Some((events, _)) = &mut self.trace {
                let mut by_flood: Vec<(FloodId, Vec<NodeId>)> = Vec::new();
                for msg in &outbox {
                    let flood = msg.flood();
                    match by_flood.iter_mut().find(|(f, _)| *f == flood) {
                        Some((_, ids)) => ids.push(msg.sender),
                        None => by_flood.push((flood, vec![msg.sender])),
                    }
                }
                by_flood.sort_by_key(|(f, _)| *f);
                events.extend(by_flood.into_iter().map(|(flood, emitters)| RoundEvent {
                    round,
                    flood,
                    emitters,
                }));
            }
            for msg in &outbox {
                for &v in self.topology.neighbors(msg.sender) {
                    let reaction = self.nodes[v].receive(msg);
                    if let Some(fwd) = reaction.forward {
                        self.mark_reached(fwd.flood(), v, round);
                        if self.mode != Mode::WakeOnly || fwd.payload == Payload::Wake {
                            next.push(fwd);
                        }
                    }
                    if let Some(j) = reaction.triggered {
                        self.on_trigger(j, round, Some(msg.flood()), &mut next);
                    }
                }
            }
            next.append(&mut deferred);
            outbox = next;
            round += 1;
        }
    }

    fn hops_for(&self, landmark_index: usize) -> Result<Vec<Hops>> {
        let source = self.topology.landmark_ids()[landmark_index];
        self.nodes
            .iter()
            .map(|n| {
                n.coords()[landmark_index].ok_or(JumpsError::Unreachable {
                    source_node: source,
                    node: n.node_id,
                })
            })
            .collect()
    }

    fn finish_trace(self) -> FloodTrace {
        let (events, reached) = self.trace.unwrap_or_default();
        FloodTrace {
            events,
            reached,
            triggers: self.triggers,
            traffic: self.traffic,
        }
    }
}

fn check_node(topology: &Topology, node: NodeId) -> Result<()> {
    if node >= topology.node_count() {
        return Err(JumpsError::Validation(format!(
            "node {node} out of range for {} nodes",
            topology.node_count()
        )));
    }
    Ok(())
}

/// Floods WAKE from `initiator`. Every node forwards it exactly once.
pub fn run_wake(topology: &Topology, initiator: NodeId) -> Result<FloodTrace> {
    check_node(topology, initiator)?;
    let mut engine = Engine::new(topology, Mode::WakeOnly, true);
    let (msg, trig) = engine.nodes[initiator].initiate();
    let mut outbox = vec![msg];
    if let Some(j) = trig {
        engine.on_trigger(j, 0, None, &mut outbox);
    }
    engine.run(outbox);
    Ok(engine.finish_trace())
}

/// Floods the DDM of landmark `landmark_index` alone and returns every
/// node's hop count to it.
pub fn run_ddm_flood(topology: &Topology, landmark_index: usize) -> Result<(Vec<Hops>, FloodTrace)> {
    if landmark_index >= topology.landmark_count() {
        return Err(JumpsError::Validation(format!(
            "landmark index {landmark_index} out of range for {} landmarks",
            topology.landmark_count()
        )));
    }
    let mut engine = Engine::new(topology, Mode::SingleDdm, true);
    let origin = topology.landmark_ids()[landmark_index];
    let msg = engine.nodes[origin].originate();
    engine.run(vec![msg]);
    let hops = engine.hops_for(landmark_index)?;
    Ok((hops, engine.finish_trace()))
}

fn full_run(topology: &Topology, initiator: NodeId, record: bool) -> Result<(CoordinateMatrix, FloodTrace)> {
    check_node(topology, initiator)?;
    let mut engine = Engine::new(topology, Mode::Full, record);
    let (msg, trig) = engine.nodes[initiator].initiate();
    let mut deferred = Vec::new();
    if let Some(j) = trig {
        // the initiator is the first landmark: it originates in round 1,
        // like a landmark woken by a round-0 reception
        engine.on_trigger(j, 0, None, &mut deferred);
    }
    engine.run_deferred(vec![msg], deferred);
    let columns = (0..topology.landmark_count())
        .map(|j| engine.hops_for(j))
        .collect::<Result<Vec<_>>>()?;
    Ok((CoordinateMatrix::from_columns(&columns), engine.finish_trace()))
}

/// WAKE flood followed by the chained DDM floods of all landmarks.
pub fn run_full_protocol(topology: &Topology, initiator: NodeId) -> Result<(CoordinateMatrix, TrafficStats)> {
    let (coords, trace) = full_run(topology, initiator, false)?;
    Ok((coords, trace.traffic))
}

/// Like [`run_full_protocol`] but also returns the round-by-round trace.
pub fn run_full_protocol_traced(topology: &Topology, initiator: NodeId) -> Result<(CoordinateMatrix, FloodTrace)> {
    full_run(topology, initiator, true)
}
