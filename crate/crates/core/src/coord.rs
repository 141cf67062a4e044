//! Multi-robot coordination: agents, a lossy message bus, the astronaut
//! emergency pipeline, greedy task allocation, and coverage accounting,
//! all driven by one discrete-event queue on the mission clock.
//!
//! The emergency chain is astronaut -> leader (sensor event), a processing
//! delay on the leader, then leader -> responder (alert), so the nominal
//! response time is `proc_delay + 2 * latency`.

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::terrain::{CellLabel, TerrainGrid};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentRole {
    Leader,
    Secondary,
    Astronaut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: String,
    pub role: AgentRole,
    pub position: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsgKind {
    SensorEvent,
    Alert,
    TaskAssign,
    TaskAck,
    TaskDone,
}

/// A message in flight. `deliver_time` is set by the bus on dispatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub sender: String,
    pub recipient: String,
    pub kind: MsgKind,
    pub payload: BTreeMap<String, f64>,
    pub send_time: f64,
    pub deliver_time: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BusConfig {
    /// One-way delivery latency, seconds.
    pub latency: f64,
    /// Uniform jitter half-width around the latency, seconds.
    pub jitter: f64,
    /// Probability a message is lost outright.
    pub drop_rate: f64,
}

impl Default for BusConfig {
    fn default() -> Self {
        BusConfig {
            latency: 0.5,
            jitter: 0.0,
            drop_rate: 0.0,
        }
    }
}

impl BusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.latency >= 0.0) {
            return Err(Error::validation(
                "bus.latency",
                format!("must be >= 0 (got {})", self.latency),
            ));
        }
        if !(self.jitter >= 0.0 && self.jitter <= self.latency) {
            return Err(Error::validation(
                "bus.jitter",
                format!(
                    "must be in [0, latency] so delays stay nonnegative (got {})",
                    self.jitter
                ),
            ));
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(Error::validation(
                "bus.drop_rate",
                format!("must be in [0, 1) (got {})", self.drop_rate),
            ));
        }
        Ok(())
    }
}

/// Delivery bookkeeping: jittered latency with per-(sender, recipient) FIFO.
pub struct Bus {
    pub cfg: BusConfig,
    last_delivery: BTreeMap<(String, String), f64>,
}

pub enum Dispatch {
    Delivered(f64),
    Dropped,
}

impl Bus {
    pub fn new(cfg: BusConfig) -> Bus {
        Bus {
            cfg,
            last_delivery: BTreeMap::new(),
        }
    }

    /// Sample the fate of a message sent `now`. Delivery times for one
    /// sender-recipient pair never reorder, even under jitter.
    pub fn dispatch(&mut self, sender: &str, recipient: &str, now: f64, rng: &mut ChaCha8Rng) -> Dispatch {
        if self.cfg.drop_rate > 0.0 && rng.gen_bool(self.cfg.drop_rate) {
            return Dispatch::Dropped;
        }
        let jitter = if self.cfg.jitter > 0.0 {
            rng.gen_range(-self.cfg.jitter..self.cfg.jitter)
        } else {
            0.0
        };
        let mut at = now + (self.cfg.latency + jitter).max(0.0);
        let key = (sender.to_string(), recipient.to_string());
        if let Some(&last) = self.last_delivery.get(&key) {
            at = at.max(last);
        }
        self.last_delivery.insert(key, at);
        Dispatch::Delivered(at)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub position: Vec2,
    /// On-site execution time, seconds.
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoordConfig {
    /// Leader processing delay between sensor event and alert, seconds.
    pub proc_delay: f64,
    /// Assignment acknowledgement deadline at the leader, seconds.
    pub ack_timeout: f64,
    /// Agent travel speed between task sites, m/s.
    pub travel_speed: f64,
    /// Instrument coverage radius around a pose, metres.
    pub sensor_radius: f64,
}

impl Default for CoordConfig {
    fn default() -> Self {
        CoordConfig {
            proc_delay: 0.2,
            ack_timeout: 2.0,
            travel_speed: 0.25,
            sensor_radius: 2.0,
        }
    }
}

impl CoordConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("coord.proc_delay", self.proc_delay),
            ("coord.ack_timeout", self.ack_timeout),
            ("coord.travel_speed", self.travel_speed),
            ("coord.sensor_radius", self.sensor_radius),
        ] {
            if !(v > 0.0) {
                return Err(Error::validation(name, format!("must be > 0 (got {v})")));
            }
        }
        Ok(())
    }
}

/// One greedy schedule entry. Times are the latency-free schedule; the
/// executed trace shifts by message delivery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub task: usize,
    pub agent: String,
    pub from: Vec2,
    pub to: Vec2,
    pub start: f64,
    pub travel: f64,
    pub duration: f64,
}

impl Assignment {
    pub fn completion(&self) -> f64 {
        self.start + self.travel + self.duration
    }
}

pub fn makespan(assignments: &[Assignment]) -> f64 {
    assignments.iter().map(|a| a.completion()).fold(0.0, f64::max)
}

/// Repeated nearest-available-agent assignment: the earliest-free rover takes
/// the task closest to where it will be standing. Astronauts are not tasked.
pub fn assign_tasks(agents: &[Agent], tasks: &[Task], travel_speed: f64) -> Vec<Assignment> {
    let mut workers: Vec<(String, Vec2, f64)> = agents
        .iter()
        .filter(|a| a.role != AgentRole::Astronaut)
        .map(|a| (a.id.clone(), a.position, 0.0))
        .collect();
    if workers.is_empty() || tasks.is_empty() || !(travel_speed > 0.0) {
        return Vec::new();
    }
    let mut remaining: BTreeSet<usize> = (0..tasks.len()).collect();
    let mut out = Vec::new();
    while !remaining.is_empty() {
        let w = (0..workers.len())
            .min_by(|&a, &b| {
                workers[a]
                    .2
                    .total_cmp(&workers[b].2)
                    .then_with(|| workers[a].0.cmp(&workers[b].0))
            })
            .unwrap();
        let &t = remaining
            .iter()
            .min_by(|&&a, &&b| {
                workers[w]
                    .1
                    .dist(tasks[a].position)
                    .total_cmp(&workers[w].1.dist(tasks[b].position))
                    .then(a.cmp(&b))
            })
            .unwrap();
        remaining.remove(&t);
        let travel = workers[w].1.dist(tasks[t].position) / travel_speed;
        out.push(Assignment {
            task: t,
            agent: workers[w].0.clone(),
            from: workers[w].1,
            to: tasks[t].position,
            start: workers[w].2,
            travel,
            duration: tasks[t].duration,
        });
        workers[w].1 = tasks[t].position;
        workers[w].2 += travel + tasks[t].duration;
    }
    out
}

/// Trace of everything the coordination layer did, in mission time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoordEvent {
    MsgSent {
        time: f64,
        sender: String,
        recipient: String,
        msg: MsgKind,
    },
    MsgDropped {
        time: f64,
        sender: String,
        recipient: String,
        msg: MsgKind,
    },
    MsgDelivered {
        time: f64,
        sender: String,
        recipient: String,
        msg: MsgKind,
        latency: f64,
    },
    Fall {
        time: f64,
        agent: String,
    },
    Alert {
        time: f64,
        agent: String,
        response: f64,
    },
    AlertMissed {
        time: f64,
        agent: String,
    },
    TaskAssigned {
        time: f64,
        task: usize,
        agent: String,
    },
    TaskAck {
        time: f64,
        task: usize,
        ok: bool,
    },
    TaskDone {
        time: f64,
        task: usize,
        agent: String,
    },
    AgentPose {
        time: f64,
        agent: String,
        position: Vec2,
    },
}

impl CoordEvent {
    pub fn time(&self) -> f64 {
        match self {
            CoordEvent::MsgSent { time, .. }
            | CoordEvent::MsgDropped { time, .. }
            | CoordEvent::MsgDelivered { time, .. }
            | CoordEvent::Fall { time, .. }
            | CoordEvent::Alert { time, .. }
            | CoordEvent::AlertMissed { time, .. }
            | CoordEvent::TaskAssigned { time, .. }
            | CoordEvent::TaskAck { time, .. }
            | CoordEvent::TaskDone { time, .. }
            | CoordEvent::AgentPose { time, .. } => *time,
        }
    }
}

enum Action {
    Fall {
        agent: String,
    },
    Deliver {
        msg: Message,
    },
    RelayAlert {
        astronaut: String,
        fall_time: f64,
    },
    StartTask {
        assignment: usize,
    },
    AckDeadline {
        task: usize,
    },
    FinishTask {
        assignment: usize,
    },
}

struct QueueItem {
    time: f64,
    seq: u64,
    action: Action,
}

impl PartialEq for QueueItem {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for QueueItem {}
impl Ord for QueueItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap: earliest time first, then insertion order.
        other
            .time
            .total_cmp(&self.time)
            .then(other.seq.cmp(&self.seq))
    }
}
impl PartialOrd for QueueItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Outcome of one scheduled fall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmergencyOutcome {
    pub agent: String,
    pub fall_time: f64,
    /// Alert delivery time at the responder; None if a leg was dropped.
    pub alert_time: Option<f64>,
}

impl EmergencyOutcome {
    pub fn response(&self) -> Option<f64> {
        self.alert_time.map(|t| t - self.fall_time)
    }
}

pub struct CoordRun {
    pub events: Vec<CoordEvent>,
    pub assignments: Vec<Assignment>,
    pub emergencies: Vec<EmergencyOutcome>,
}

/// Run falls and task traffic through the shared event queue.
/// `falls` are (astronaut id, time) pairs.
pub fn run_coordination(
    agents: &[Agent],
    tasks: &[Task],
    falls: &[(String, f64)],
    bus_cfg: &BusConfig,
    cfg: &CoordConfig,
    rng: &mut ChaCha8Rng,
) -> Result<CoordRun> {
    bus_cfg.validate()?;
    cfg.validate()?;
    let ids: BTreeSet<&str> = agents.iter().map(|a| a.id.as_str()).collect();
    if ids.len() != agents.len() {
        return Err(Error::validation("agents", "ids must be unique".to_string()));
    }
    let leader = agents.iter().find(|a| a.role == AgentRole::Leader);
    let responder = agents.iter().find(|a| a.role == AgentRole::Secondary);
    for (agent, _) in falls {
        let found = agents.iter().find(|a| &a.id == agent);
        match found {
            None => return Err(Error::UnknownRecipient(agent.clone())),
            Some(a) if a.role != AgentRole::Astronaut => {
                return Err(Error::validation(
                    "fall_schedule",
                    format!("{agent} is not an astronaut"),
                ))
            }
            _ => {}
        }
    }
    if !falls.is_empty() && (leader.is_none() || responder.is_none()) {
        return Err(Error::validation(
            "agents",
            "emergency pipeline needs a leader and a secondary responder".to_string(),
        ));
    }
    if !tasks.is_empty() && leader.is_none() {
        return Err(Error::validation(
            "agents",
            "task allocation needs a leader".to_string(),
        ));
    }
    let leader_id = leader.map(|a| a.id.clone()).unwrap_or_default();
    let responder_id = responder.map(|a| a.id.clone()).unwrap_or_default();

    let assignments = assign_tasks(agents, tasks, cfg.travel_speed);

    let mut queue: BinaryHeap<QueueItem> = BinaryHeap::new();
    let mut seq = 0u64;
    let push = |q: &mut BinaryHeap<QueueItem>, seq: &mut u64, time: f64, action: Action| {
        q.push(QueueItem {
            time,
            seq: *seq,
            action,
        });
        *seq += 1;
    };
    for (agent, time) in falls {
        push(&mut queue, &mut seq, *time, Action::Fall {
            agent: agent.clone(),
        });
    }
    for (i, a) in assignments.iter().enumerate() {
        push(&mut queue, &mut seq, a.start, Action::StartTask { assignment: i });
    }

    let mut bus = Bus::new(*bus_cfg);
    let mut events: Vec<CoordEvent> = Vec::new();
    let mut emergencies: Vec<EmergencyOutcome> = falls
        .iter()
        .map(|(agent, time)| EmergencyOutcome {
            agent: agent.clone(),
            fall_time: *time,
            alert_time: None,
        })
        .collect();
    let mut acked: BTreeSet<usize> = BTreeSet::new();
    let mut ack_closed: BTreeSet<usize> = BTreeSet::new();

    let send = |bus: &mut Bus,
                    rng: &mut ChaCha8Rng,
                    events: &mut Vec<CoordEvent>,
                    queue: &mut BinaryHeap<QueueItem>,
                    seq: &mut u64,
                    mut msg: Message| {
        events.push(CoordEvent::MsgSent {
            time: msg.send_time,
            sender: msg.sender.clone(),
            recipient: msg.recipient.clone(),
            msg: msg.kind,
        });
        match bus.dispatch(&msg.sender, &msg.recipient, msg.send_time, rng) {
            Dispatch::Dropped => {
                events.push(CoordEvent::MsgDropped {
                    time: msg.send_time,
                    sender: msg.sender.clone(),
                    recipient: msg.recipient.clone(),
                    msg: msg.kind,
                });
            }
            Dispatch::Delivered(at) => {
                msg.deliver_time = Some(at);
                push(queue, seq, at, Action::Deliver { msg });
            }
        }
    };

    while let Some(QueueItem { time, action, .. }) = queue.pop() {
        match action {
            Action::Fall { agent } => {
                events.push(CoordEvent::Fall {
                    time,
                    agent: agent.clone(),
                });
                let msg = Message {
                    sender: agent.clone(),
                    recipient: leader_id.clone(),
                    kind: MsgKind::SensorEvent,
                    payload: BTreeMap::from([("fall_time".to_string(), time)]),
                    send_time: time,
                    deliver_time: None,
                };
                send(&mut bus, rng, &mut events, &mut queue, &mut seq, msg);
            }
            Action::Deliver { msg } => {
                let latency = time - msg.send_time;
                events.push(CoordEvent::MsgDelivered {
                    time,
                    sender: msg.sender.clone(),
                    recipient: msg.recipient.clone(),
                    msg: msg.kind,
                    latency,
                });
                match msg.kind {
                    MsgKind::SensorEvent => {
                        push(&mut queue, &mut seq, time + cfg.proc_delay, Action::RelayAlert {
                            astronaut: msg.sender.clone(),
                            fall_time: msg.payload["fall_time"],
                        });
                    }
                    MsgKind::Alert => {
                        let fall_time = msg.payload["fall_time"];
                        let astronaut = msg
                            .payload
                            .get("astronaut_idx")
                            .map(|i| emergencies[*i as usize].agent.clone())
                            .unwrap_or_default();
                        events.push(CoordEvent::Alert {
                            time,
                            agent: astronaut,
                            response: time - fall_time,
                        });
                        let idx = msg.payload["astronaut_idx"] as usize;
                        emergencies[idx].alert_time = Some(time);
                    }
                    MsgKind::TaskAssign => {
                        let i = msg.payload["assignment"] as usize;
                        let a = &assignments[i];
                        // Execution follows the schedule shifted to delivery.
                        let arrive = time + a.travel;
                        push(&mut queue, &mut seq, arrive + a.duration, Action::FinishTask {
                            assignment: i,
                        });
                        // Pose trail at 1 Hz: travel leg, then on-site hold.
                        let mut t = time;
                        while t < arrive + a.duration {
                            let p = if t < arrive && a.travel > 0.0 {
                                let frac = (t - time) / a.travel;
                                a.from + (a.to - a.from).scale(frac)
                            } else {
                                a.to
                            };
                            events.push(CoordEvent::AgentPose {
                                time: t,
                                agent: a.agent.clone(),
                                position: p,
                            });
                            t += 1.0;
                        }
                        let ack = Message {
                            sender: msg.recipient.clone(),
                            recipient: msg.sender.clone(),
                            kind: MsgKind::TaskAck,
                            payload: msg.payload.clone(),
                            send_time: time,
                            deliver_time: None,
                        };
                        send(&mut bus, rng, &mut events, &mut queue, &mut seq, ack);
                    }
                    MsgKind::TaskAck => {
                        let i = msg.payload["assignment"] as usize;
                        let task = assignments[i].task;
                        if !ack_closed.contains(&i) {
                            ack_closed.insert(i);
                            let ok = time - msg.payload["assign_send"] <= cfg.ack_timeout;
                            acked.insert(i);
                            events.push(CoordEvent::TaskAck { time, task, ok });
                        }
                    }
                    MsgKind::TaskDone => {}
                }
            }
            Action::RelayAlert {
                astronaut,
                fall_time,
            } => {
                let idx = emergencies
                    .iter()
                    .position(|e| e.agent == astronaut && e.fall_time == fall_time)
                    .expect("relay for a known fall");
                let msg = Message {
                    sender: leader_id.clone(),
                    recipient: responder_id.clone(),
                    kind: MsgKind::Alert,
                    payload: BTreeMap::from([
                        ("fall_time".to_string(), fall_time),
                        ("astronaut_idx".to_string(), idx as f64),
                    ]),
                    send_time: time,
                    deliver_time: None,
                };
                send(&mut bus, rng, &mut events, &mut queue, &mut seq, msg);
            }
            Action::StartTask { assignment } => {
                let a = &assignments[assignment];
                events.push(CoordEvent::TaskAssigned {
                    time,
                    task: a.task,
                    agent: a.agent.clone(),
                });
                let msg = Message {
                    sender: leader_id.clone(),
                    recipient: a.agent.clone(),
                    kind: MsgKind::TaskAssign,
                    payload: BTreeMap::from([
                        ("assignment".to_string(), assignment as f64),
                        ("assign_send".to_string(), time),
                    ]),
                    send_time: time,
                    deliver_time: None,
                };
                send(&mut bus, rng, &mut events, &mut queue, &mut seq, msg);
                push(&mut queue, &mut seq, time + cfg.ack_timeout, Action::AckDeadline {
                    task: assignment,
                });
            }
            Action::AckDeadline { task } => {
                if !ack_closed.contains(&task) {
                    ack_closed.insert(task);
                    events.push(CoordEvent::TaskAck {
                        time,
                        task: assignments[task].task,
                        ok: false,
                    });
                }
            }
            Action::FinishTask { assignment } => {
                let a = &assignments[assignment];
                events.push(CoordEvent::TaskDone {
                    time,
                    task: a.task,
                    agent: a.agent.clone(),
                });
                let msg = Message {
                    sender: a.agent.clone(),
                    recipient: leader_id.clone(),
                    kind: MsgKind::TaskDone,
                    payload: BTreeMap::from([("task".to_string(), a.task as f64)]),
                    send_time: time,
                    deliver_time: None,
                };
                send(&mut bus, rng, &mut events, &mut queue, &mut seq, msg);
            }
        }
    }

    for e in &emergencies {
        if e.alert_time.is_none() {
            events.push(CoordEvent::AlertMissed {
                time: e.fall_time,
                agent: e.agent.clone(),
            });
        }
    }
    events.sort_by(|a, b| a.time().total_cmp(&b.time()));
    Ok(CoordRun {
        events,
        assignments,
        emergencies,
    })
}

/// Run only the fall pipeline and report per-fall outcomes.
pub fn detect_emergency(
    agents: &[Agent],
    falls: &[(String, f64)],
    bus_cfg: &BusConfig,
    cfg: &CoordConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EmergencyOutcome>> {
    Ok(run_coordination(agents, &[], falls, bus_cfg, cfg, rng)?.emergencies)
}

/// Fraction of non-hazard cells lying within `sensor_radius` of any pose.
pub fn coverage_metric(pose_logs: &[Vec<Vec2>], grid: &TerrainGrid, sensor_radius: f64) -> f64 {
    let mut covered = 0usize;
    let mut total = 0usize;
    for iy in 0..grid.size {
        for ix in 0..grid.size {
            let label = grid.labels[grid.idx(ix, iy)];
            if label == CellLabel::Boulder || label == CellLabel::Crater {
                continue;
            }
            total += 1;
            let c = grid.cell_center(ix, iy);
            if pose_logs
                .iter()
                .any(|log| log.iter().any(|p| p.dist(c) <= sensor_radius))
            {
                covered += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        covered as f64 / total as f64
    }
}

/// Serpentine sweep over grid rows `row_lo..row_hi`, sampled at 1 Hz for
/// `duration` seconds at `speed`.
pub fn lawnmower_poses(
    grid: &TerrainGrid,
    row_spacing: f64,
    row_lo: f64,
    row_hi: f64,
    speed: f64,
    duration: f64,
) -> Vec<Vec2> {
    let extent = grid.extent();
    let margin = grid.cell_size;
    let mut waypoints = Vec::new();
    let mut y = row_lo + row_spacing / 2.0;
    let mut left_to_right = true;
    while y < row_hi {
        let (a, b) = (Vec2::new(margin, y), Vec2::new(extent - margin, y));
        if left_to_right {
            waypoints.push(a);
            waypoints.push(b);
        } else {
            waypoints.push(b);
            waypoints.push(a);
        }
        left_to_right = !left_to_right;
        y += row_spacing;
    }
    let mut poses = Vec::new();
    if waypoints.len() < 2 {
        return poses;
    }
    let mut t = 0.0;
    while t <= duration {
        let mut s = speed * t;
        let mut p = waypoints[0];
        for w in waypoints.windows(2) {
            let len = w[0].dist(w[1]);
            if s <= len {
                p = w[0] + (w[1] - w[0]).scale(if len > 0.0 { s / len } else { 0.0 });
                break;
            }
            s -= len;
            p = w[1];
        }
        poses.push(p);
        t += 1.0;
    }
    poses
}

/// Coverage of one agent sweeping the whole grid versus two agents splitting
/// it, both for the same wall-clock `duration`.
pub fn paired_sweep_coverage(
    grid: &TerrainGrid,
    sensor_radius: f64,
    speed: f64,
    duration: f64,
) -> (f64, f64) {
    let extent = grid.extent();
    let spacing = 2.0 * sensor_radius;
    let single = lawnmower_poses(grid, spacing, 0.0, extent, speed, duration);
    let top = lawnmower_poses(grid, spacing, 0.0, extent / 2.0, speed, duration);
    let bottom = lawnmower_poses(grid, spacing, extent / 2.0, extent, speed, duration);
    (
        coverage_metric(&[single], grid, sensor_radius),
        coverage_metric(&[top, bottom], grid, sensor_radius),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskEventKind {
    Assigned,
    Done,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskEvent {
    pub time: f64,
    pub task: usize,
    pub kind: TaskEventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskRecord {
    pub task: usize,
    pub assigned: f64,
    /// None when the task never completed inside the log.
    pub done: Option<f64>,
}

impl TaskRecord {
    pub fn duration(&self) -> Option<f64> {
        self.done.map(|d| d - self.assigned)
    }
}

/// Pair assignment and completion events per task. A completion without a
/// prior assignment is a log integrity error.
pub fn measure_task_completion(events: &[TaskEvent]) -> Result<Vec<TaskRecord>> {
    let mut records: BTreeMap<usize, TaskRecord> = BTreeMap::new();
    for e in events {
        match e.kind {
            TaskEventKind::Assigned => {
                records.entry(e.task).or_insert(TaskRecord {
                    task: e.task,
                    assigned: e.time,
                    done: None,
                });
            }
            TaskEventKind::Done => match records.get_mut(&e.task) {
                None => {
                    return Err(Error::LogIntegrity(format!(
                        "task {} completed at {:.2}s without an assignment",
                        e.task, e.time
                    )))
                }
                Some(r) => r.done = Some(e.time),
            },
        }
    }
    Ok(records.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{generate_terrain, TerrainParams};
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn crew() -> Vec<Agent> {
        vec![
            Agent {
                id: "leader".into(),
                role: AgentRole::Leader,
                position: Vec2::new(0.0, 0.0),
            },
            Agent {
                id: "scout".into(),
                role: AgentRole::Secondary,
                position: Vec2::new(5.0, 0.0),
            },
            Agent {
                id: "eva1".into(),
                role: AgentRole::Astronaut,
                position: Vec2::new(2.0, 2.0),
            },
        ]
    }

    #[test]
    fn response_time_is_proc_plus_two_latencies() {
        let falls: Vec<(String, f64)> = (0..50).map(|k| ("eva1".into(), 5.0 * k as f64)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = detect_emergency(
            &crew(),
            &falls,
            &BusConfig::default(),
            &CoordConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.len(), 50);
        for o in &out {
            assert_relative_eq!(o.response().unwrap(), 1.2, epsilon = 1e-12);
        }
    }

    #[test]
    fn jitter_preserves_per_pair_fifo() {
        let bus_cfg = BusConfig {
            latency: 0.5,
            jitter: 0.4,
            drop_rate: 0.0,
        };
        let mut bus = Bus::new(bus_cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut last = f64::NEG_INFINITY;
        for k in 0..200 {
            let now = k as f64 * 0.01;
            match bus.dispatch("a", "b", now, &mut rng) {
                Dispatch::Delivered(at) => {
                    assert!(at >= last, "reordered: {at} after {last}");
                    assert!(at >= now);
                    last = at;
                }
                Dispatch::Dropped => panic!("no drops configured"),
            }
        }
    }

    #[test]
    fn drops_become_missed_alerts() {
        let falls: Vec<(String, f64)> = (0..40).map(|k| ("eva1".into(), 3.0 * k as f64)).collect();
        let bus_cfg = BusConfig {
            drop_rate: 0.4,
            ..BusConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let out = detect_emergency(&crew(), &falls, &bus_cfg, &CoordConfig::default(), &mut rng)
            .unwrap();
        let missed = out.iter().filter(|o| o.alert_time.is_none()).count();
        let alerted = out.iter().filter(|o| o.alert_time.is_some()).count();
        assert_eq!(missed + alerted, 40);
        assert!(missed > 0, "with 40% drops some alerts must vanish");
    }

    #[test]
    fn falls_need_an_astronaut_and_a_crew() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = detect_emergency(
            &crew(),
            &[("ghost".into(), 1.0)],
            &BusConfig::default(),
            &CoordConfig::default(),
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnknownRecipient(_)));

        let no_responder: Vec<Agent> = crew()
            .into_iter()
            .filter(|a| a.role != AgentRole::Secondary)
            .collect();
        let err = detect_emergency(
            &no_responder,
            &[("eva1".into(), 1.0)],
            &BusConfig::default(),
            &CoordConfig::default(),
            &mut rng,
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("responder"), "{err}");
    }

    #[test]
    fn symmetric_pair_splits_tasks_optimally() {
        let agents = vec![
            Agent {
                id: "r1".into(),
                role: AgentRole::Leader,
                position: Vec2::new(0.0, 0.0),
            },
            Agent {
                id: "r2".into(),
                role: AgentRole::Secondary,
                position: Vec2::new(10.0, 0.0),
            },
        ];
        let tasks = vec![
            Task {
                position: Vec2::new(1.0, 0.0),
                duration: 5.0,
            },
            Task {
                position: Vec2::new(9.0, 0.0),
                duration: 5.0,
            },
        ];
        let plan = assign_tasks(&agents, &tasks, 0.5);
        assert_eq!(plan.len(), 2);
        let by_task: BTreeMap<usize, &str> =
            plan.iter().map(|a| (a.task, a.agent.as_str())).collect();
        assert_eq!(by_task[&0], "r1");
        assert_eq!(by_task[&1], "r2");
        assert_relative_eq!(makespan(&plan), 1.0 / 0.5 + 5.0);
    }

    /// Exhaustive optimum: every task-to-agent map and every per-agent visit
    /// order.
    fn brute_force_makespan(agents: &[Agent], tasks: &[Task], speed: f64) -> f64 {
        fn orders(n: usize) -> Vec<Vec<usize>> {
            if n == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for rest in orders(n - 1) {
                for k in 0..=rest.len() {
                    let mut o = rest.clone();
                    o.insert(k, n - 1);
                    out.push(o);
                }
            }
            out
        }
        let workers: Vec<&Agent> = agents
            .iter()
            .filter(|a| a.role != AgentRole::Astronaut)
            .collect();
        let mut best = f64::INFINITY;
        let combos = workers.len().pow(tasks.len() as u32);
        for combo in 0..combos {
            let mut owner = vec![0usize; tasks.len()];
            let mut c = combo;
            for o in owner.iter_mut() {
                *o = c % workers.len();
                c /= workers.len();
            }
            let mut worst = 0.0f64;
            for (w, agent) in workers.iter().enumerate() {
                let mine: Vec<usize> =
                    (0..tasks.len()).filter(|&t| owner[t] == w).collect();
                let mut local_best = f64::INFINITY;
                for order in orders(mine.len()) {
                    let mut pos = agent.position;
                    let mut t = 0.0;
                    for &k in &order {
                        let task = &tasks[mine[k]];
                        t += pos.dist(task.position) / speed + task.duration;
                        pos = task.position;
                    }
                    local_best = local_best.min(t);
                }
                worst = worst.max(local_best);
            }
            best = best.min(worst);
        }
        best
    }

    #[test]
    fn greedy_stays_within_twice_the_optimum() {
        use rand::Rng;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n_agents = rng.gen_range(2..=3usize);
            let n_tasks = rng.gen_range(2..=6usize);
            let agents: Vec<Agent> = (0..n_agents)
                .map(|i| Agent {
                    id: format!("r{i}"),
                    role: if i == 0 {
                        AgentRole::Leader
                    } else {
                        AgentRole::Secondary
                    },
                    position: Vec2::new(rng.gen_range(0.0..30.0), rng.gen_range(0.0..30.0)),
                })
                .collect();
            let tasks: Vec<Task> = (0..n_tasks)
                .map(|_| Task {
                    position: Vec2::new(rng.gen_range(0.0..30.0), rng.gen_range(0.0..30.0)),
                    duration: rng.gen_range(1.0..30.0),
                })
                .collect();
            let greedy = makespan(&assign_tasks(&agents, &tasks, 0.5));
            let best = brute_force_makespan(&agents, &tasks, 0.5);
            assert!(
                greedy <= 2.0 * best + 1e-9,
                "seed {seed}: greedy {greedy:.2} vs optimal {best:.2}"
            );
        }
    }

    #[test]
    fn acks_time_out_when_the_round_trip_exceeds_the_deadline() {
        let agents = crew();
        let tasks = vec![
            Task {
                position: Vec2::new(3.0, 1.0),
                duration: 4.0,
            },
            Task {
                position: Vec2::new(7.0, 2.0),
                duration: 4.0,
            },
        ];
        let run_with = |latency: f64| {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let run = run_coordination(
                &agents,
                &tasks,
                &[],
                &BusConfig {
                    latency,
                    ..BusConfig::default()
                },
                &CoordConfig::default(),
                &mut rng,
            )
            .unwrap();
            let oks: Vec<bool> = run
                .events
                .iter()
                .filter_map(|e| match e {
                    CoordEvent::TaskAck { ok, .. } => Some(*ok),
                    _ => None,
                })
                .collect();
            assert_eq!(oks.len(), tasks.len());
            oks.iter().filter(|ok| **ok).count()
        };
        assert_eq!(run_with(0.5), 2);
        assert_eq!(run_with(1.5), 0);
    }

    #[test]
    fn task_records_pair_up_and_catch_orphans() {
        let ok = [
            TaskEvent {
                time: 1.0,
                task: 0,
                kind: TaskEventKind::Assigned,
            },
            TaskEvent {
                time: 2.0,
                task: 1,
                kind: TaskEventKind::Assigned,
            },
            TaskEvent {
                time: 9.0,
                task: 0,
                kind: TaskEventKind::Done,
            },
        ];
        let recs = measure_task_completion(&ok).unwrap();
        assert_eq!(recs.len(), 2);
        assert_relative_eq!(recs[0].duration().unwrap(), 8.0);
        assert!(recs[1].done.is_none());

        let bad = [TaskEvent {
            time: 3.0,
            task: 7,
            kind: TaskEventKind::Done,
        }];
        assert!(matches!(
            measure_task_completion(&bad),
            Err(Error::LogIntegrity(_))
        ));
    }

    #[test]
    fn trace_is_deterministic_and_time_sorted() {
        let agents = crew();
        let tasks = vec![Task {
            position: Vec2::new(3.0, 1.0),
            duration: 4.0,
        }];
        let falls = vec![("eva1".to_string(), 2.0)];
        let bus_cfg = BusConfig {
            latency: 0.5,
            jitter: 0.2,
            drop_rate: 0.1,
        };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            run_coordination(
                &agents,
                &tasks,
                &falls,
                &bus_cfg,
                &CoordConfig::default(),
                &mut rng,
            )
            .unwrap()
            .events
        };
        let a = run();
        assert_eq!(a, run());
        for w in a.windows(2) {
            assert!(w[0].time() <= w[1].time());
        }
    }

    #[test]
    fn two_sweepers_cover_more_than_one_in_the_same_time() {
        let grid = generate_terrain(&TerrainParams {
            size_cells: 32,
            seed: 4,
            ..TerrainParams::default()
        })
        .unwrap();
        let (single, pair) = paired_sweep_coverage(&grid, 2.0, 0.5, 60.0);
        assert!(pair > single, "pair {pair} vs single {single}");
        assert!(pair / single.max(1e-9) > 1.0);
    }
}
