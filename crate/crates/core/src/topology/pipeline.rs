use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::channel_sim::CsiFrame;
use crate::foundation::{SensingConfig, WindowOutcome, WindowedSensor};
use crate::subject_id::{
    classify, ClassifierModel, ConfidenceState, DEFAULT_ALERT_THRESHOLD, DEFAULT_CONFIDENCE_WINDOW,
};

use super::{
    proximity_score_with, upload_features, Classification, Deployment, DetectionEvent, DetectionLog, NodeId,
    TopologyError, UploadMessage, WindowReport, WindowSummary, DEFAULT_PROXIMITY_THRESHOLD,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffloadPolicy {
    /// Nothing leaves the home; no classification.
    EdgeOnly,
    /// Upload a window's ACF queue only when it tested as motion.
    #[default]
    CloudWhenMotion,
    /// Upload every analysed window.
    AlwaysCloud,
}

impl OffloadPolicy {
    fn uploads(self, motion: bool) -> bool {
        match self {
            OffloadPolicy::EdgeOnly => false,
            OffloadPolicy::CloudWhenMotion => motion,
            OffloadPolicy::AlwaysCloud => true,
        }
    }
}

impl std::str::FromStr for OffloadPolicy {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "edge_only" => Ok(OffloadPolicy::EdgeOnly),
            "cloud_when_motion" => Ok(OffloadPolicy::CloudWhenMotion),
            "always_cloud" => Ok(OffloadPolicy::AlwaysCloud),
            other => Err(TopologyError::Malformed(format!("unknown policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub sensing: SensingConfig,
    pub sample_rate_hz: f64,
    pub policy: OffloadPolicy,
    pub confidence_window: usize,
    pub alert_threshold: u8,
    pub proximity_threshold: f64,
    /// Ship per-subcarrier rows along with the combined curves.
    pub include_rows: bool,
    /// One-way delay of every non-local message.
    pub link_latency_s: f64,
    /// Remove the master at this trace time and promote the smallest origin.
    pub failover_at_s: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sensing: SensingConfig::default(),
            sample_rate_hz: 500.0,
            policy: OffloadPolicy::default(),
            confidence_window: DEFAULT_CONFIDENCE_WINDOW,
            alert_threshold: DEFAULT_ALERT_THRESHOLD,
            proximity_threshold: DEFAULT_PROXIMITY_THRESHOLD,
            include_rows: false,
            link_latency_s: 0.005,
            failover_at_s: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Traffic {
    /// Raw frames sent from bots to their processor.
    pub raw_frames: u64,
    pub raw_bytes: u64,
    /// Raw frames whose processor was the master.
    pub raw_frames_at_master: u64,
    /// Window reports sent from an origin to the master (ACF payload included).
    pub reports: u64,
    pub report_bytes: u64,
    pub upload_messages: u64,
    pub upload_bytes: u64,
    /// Frames, reports and uploads re-sent after a failover.
    pub replayed_messages: u64,
    pub replay_bytes: u64,
    pub rejected_windows: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Failover {
    pub at_s: f64,
    pub old_master: NodeId,
    pub new_master: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub log: DetectionLog,
    /// Every distinct upload, in the order the cloud first received it.
    pub uploads: Vec<UploadMessage>,
    pub traffic: Traffic,
    pub failover: Option<Failover>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Addr {
    Node(NodeId),
    Cloud,
}

#[derive(Debug, Clone)]
enum Msg {
    /// A bot's next frame is due.
    Emit { bot: NodeId },
    Frame { bot: NodeId, index: usize },
    StreamEnd { bot: NodeId },
    Report(Box<WindowReport>),
    ReportsEnd { bot: NodeId },
    Upload { from: NodeId, msg: Box<UploadMessage> },
    CloudResult { device: NodeId, window: u64, classification: Option<Classification> },
    Ack { bot: NodeId, window: u64 },
    Failover,
}

struct Envelope {
    at: f64,
    seq: u64,
    to: Addr,
    msg: Msg,
}

impl PartialEq for Envelope {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Envelope {}

impl PartialOrd for Envelope {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Envelope {
    // reversed: BinaryHeap pops the earliest
    fn cmp(&self, other: &Self) -> Ordering {
        other.at.total_cmp(&self.at).then(other.seq.cmp(&self.seq))
    }
}

struct Bus {
    queue: BinaryHeap<Envelope>,
    seq: u64,
    now: f64,
}

impl Bus {
    fn send(&mut self, delay: f64, to: Addr, msg: Msg) {
        self.seq += 1;
        self.queue.push(Envelope { at: self.now + delay, seq: self.seq, to, msg });
    }

    fn at(&mut self, at: f64, to: Addr, msg: Msg) {
        self.seq += 1;
        self.queue.push(Envelope { at, seq: self.seq, to, msg });
    }
}

struct Bot {
    frames: Vec<CsiFrame>,
    next: usize,
    /// First frame not yet covered by an acknowledged window.
    keep_from: usize,
    processor: NodeId,
    ended: bool,
}

/// Edge sensing for the bots a node processes.
#[derive(Default)]
struct Processor {
    sensors: BTreeMap<NodeId, WindowedSensor>,
    unacked: BTreeMap<NodeId, VecDeque<WindowReport>>,
    ended: BTreeSet<NodeId>,
}

#[derive(Default, Clone, Copy)]
struct Horizon {
    reported: Option<u64>,
    ended: bool,
}

struct Pending {
    window: u64,
    device: NodeId,
    event: Option<DetectionEvent>,
    awaiting_cloud: bool,
}

/// Fusion state of the current master; lost on failover.
struct Master {
    id: NodeId,
    buffer: BTreeMap<(u64, NodeId), WindowReport>,
    horizon: BTreeMap<NodeId, Horizon>,
    next_flush: u64,
    outbox: VecDeque<Pending>,
}

/// Persistent side: the event store and the cloud classifier.
struct Store {
    log: DetectionLog,
    committed: BTreeSet<(u64, NodeId)>,
}

struct Cloud<'m> {
    model: Option<&'m ClassifierModel>,
    zones: BTreeMap<u16, ConfidenceState>,
    seen: BTreeMap<(NodeId, u64), Option<Classification>>,
    uploads: Vec<UploadMessage>,
}

struct Sim<'a> {
    cfg: &'a PipelineConfig,
    deployment: Deployment,
    bus: Bus,
    bots: BTreeMap<NodeId, Bot>,
    processors: BTreeMap<NodeId, Processor>,
    master: Master,
    dead: BTreeSet<NodeId>,
    store: Store,
    cloud: Cloud<'a>,
    traffic: Traffic,
    failover: Option<Failover>,
}

/// Runs the deployment over the given per-bot traces on a virtual clock.
///
/// Each bot streams its frames to its processor (its origin, or the master
/// in direct mode). Processors cut tumbling windows, analyse them and send
/// one report per window to the master. The master releases window `k` once
/// every bot has reported a window at or past `k` (or ended), in bot-id
/// order; motion windows go to the cloud for classification when the
/// policy allows, and every analysed window becomes one event.
pub fn run_pipeline(
    deployment: &Deployment,
    traces: &BTreeMap<NodeId, Vec<CsiFrame>>,
    model: Option<&ClassifierModel>,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput, TopologyError> {
    deployment.validate()?;
    cfg.sensing.validate()?;
    if cfg.policy != OffloadPolicy::EdgeOnly && model.is_none() {
        return Err(TopologyError::MissingModel);
    }
    let bot_ids = deployment.bots();
    if let Some(&stray) = traces.keys().find(|id| !bot_ids.contains(id)) {
        return Err(TopologyError::UnknownTrace(stray));
    }
    let master_id = deployment.master()?;
    let mut zones = BTreeMap::new();
    let mut bots = BTreeMap::new();
    let mut bus = Bus { queue: BinaryHeap::new(), seq: 0, now: 0.0 };
    if let Some(at) = cfg.failover_at_s {
        if deployment.failover_target().is_none() {
            return Err(TopologyError::Malformed("failover needs at least one origin".into()));
        }
        bus.at(at, Addr::Node(master_id), Msg::Failover);
    }
    let mut processors = BTreeMap::new();
    for &b in &bot_ids {
        let frames = traces.get(&b).cloned().unwrap_or_default();
        let processor = deployment.processor_of(b)?;
        processors.entry(processor).or_insert_with(Processor::default);
        zones.entry(deployment.zone_of(b)).or_insert_with(|| ConfidenceState::new(cfg.confidence_window, cfg.alert_threshold));
        let first = frames.first().map_or(0.0, |f| f.timestamp_s);
        bus.at(first, Addr::Node(b), Msg::Emit { bot: b });
        bots.insert(b, Bot { frames, next: 0, keep_from: 0, processor, ended: false });
    }
    let mut sim = Sim {
        cfg,
        deployment: deployment.clone(),
        bus,
        bots,
        processors,
        master: Master::new(master_id, &bot_ids),
        dead: BTreeSet::new(),
        store: Store { log: DetectionLog::new(), committed: BTreeSet::new() },
        cloud: Cloud { model, zones, seen: BTreeMap::new(), uploads: Vec::new() },
        traffic: Traffic::default(),
        failover: None,
    };
    while let Some(env) = sim.bus.queue.pop() {
        sim.bus.now = env.at;
        sim.deliver(env.to, env.msg)?;
    }
    if let Some(p) = sim.master.outbox.front() {
        return Err(TopologyError::Malformed(format!("window {} of device {} never resolved", p.window, p.device)));
    }
    Ok(PipelineOutput { log: sim.store.log, uploads: sim.cloud.uploads, traffic: sim.traffic, failover: sim.failover })
}

impl Master {
    fn new(id: NodeId, bots: &[NodeId]) -> Self {
        Self {
            id,
            buffer: BTreeMap::new(),
            horizon: bots.iter().map(|&b| (b, Horizon::default())).collect(),
            next_flush: 0,
            outbox: VecDeque::new(),
        }
    }

    /// Highest window every bot has moved past.
    fn ready_through(&self) -> Option<u64> {
        let mut limit: Option<u64> = None;
        let mut all_ended = true;
        for h in self.horizon.values() {
            if h.ended {
                continue;
            }
            all_ended = false;
            let r = h.reported?;
            limit = Some(limit.map_or(r, |l| l.min(r)));
        }
        if all_ended {
            self.buffer.keys().next_back().map(|&(k, _)| k)
        } else {
            limit
        }
    }
}

impl Sim<'_> {
    fn latency(&self, from: NodeId, to: NodeId) -> f64 {
        if from == to {
            0.0
        } else {
            self.cfg.link_latency_s
        }
    }

    fn deliver(&mut self, to: Addr, msg: Msg) -> Result<(), TopologyError> {
        let node = match to {
            Addr::Cloud => return self.on_cloud(msg),
            Addr::Node(n) => n,
        };
        if self.dead.contains(&node) {
            return Ok(());
        }
        match msg {
            Msg::Emit { bot } => self.on_emit(bot),
            Msg::Frame { bot, index } => self.on_frame(node, bot, index),
            Msg::StreamEnd { bot } => self.on_stream_end(node, bot),
            Msg::Report(report) if node == self.master.id => self.on_report(*report),
            Msg::ReportsEnd { bot } if node == self.master.id => {
                self.master.horizon.entry(bot).or_default().ended = true;
                self.flush()
            }
            Msg::CloudResult { device, window, classification } if node == self.master.id => {
                if let Some(p) = self.master.outbox.iter_mut().find(|p| p.window == window && p.device == device) {
                    if let Some(e) = p.event.as_mut() {
                        e.classification = classification;
                    }
                    p.awaiting_cloud = false;
                }
                self.drain_outbox()
            }
            Msg::Ack { bot, window } => {
                self.on_ack(node, bot, window);
                Ok(())
            }
            Msg::Failover => self.on_failover(node),
            _ => Ok(()),
        }
    }

    fn on_emit(&mut self, bot: NodeId) -> Result<(), TopologyError> {
        let b = self.bots.get_mut(&bot).expect("bot registered");
        let to = b.processor;
        let delay = if to == bot { 0.0 } else { self.cfg.link_latency_s };
        if b.next < b.frames.len() {
            let index = b.next;
            b.next += 1;
            let bytes = b.frames[index].binary_len() as u64;
            let next_at = b.frames.get(b.next).map(|f| f.timestamp_s);
            self.traffic.raw_frames += 1;
            self.traffic.raw_bytes += bytes;
            if to == self.master.id {
                self.traffic.raw_frames_at_master += 1;
            }
            self.bus.send(delay, Addr::Node(to), Msg::Frame { bot, index });
            match next_at {
                Some(t) => self.bus.at(t.max(self.bus.now), Addr::Node(bot), Msg::Emit { bot }),
                None => self.bus.send(0.0, Addr::Node(bot), Msg::Emit { bot }),
            }
        } else if !b.ended {
            b.ended = true;
            self.bus.send(delay, Addr::Node(to), Msg::StreamEnd { bot });
        }
        Ok(())
    }

    fn on_frame(&mut self, node: NodeId, bot: NodeId, index: usize) -> Result<(), TopologyError> {
        let cfg = self.cfg;
        let proc = self.processors.entry(node).or_default();
        if proc.ended.contains(&bot) {
            return Ok(());
        }
        let sensor = match proc.sensors.entry(bot) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(WindowedSensor::new(cfg.sensing, cfg.sample_rate_hz)?)
            }
        };
        let frame = &self.bots[&bot].frames[index];
        let mut proximity = 0.0;
        let outcome = sensor.push_with(frame, |w| {
            proximity = proximity_score_with(w, bot, cfg.proximity_threshold).proximity_score;
        });
        if let Some(outcome) = outcome {
            self.emit_report(node, bot, outcome, proximity);
        }
        Ok(())
    }

    fn on_stream_end(&mut self, node: NodeId, bot: NodeId) -> Result<(), TopologyError> {
        let cfg = self.cfg;
        let proc = self.processors.entry(node).or_default();
        if !proc.ended.insert(bot) {
            return Ok(());
        }
        let mut proximity = 0.0;
        let outcome = proc.sensors.get_mut(&bot).and_then(|s| {
            s.finish_with(|w| proximity = proximity_score_with(w, bot, cfg.proximity_threshold).proximity_score)
        });
        if let Some(outcome) = outcome {
            self.emit_report(node, bot, outcome, proximity);
        }
        let master = self.master.id;
        self.bus.send(self.latency(node, master), Addr::Node(master), Msg::ReportsEnd { bot });
        Ok(())
    }

    fn emit_report(&mut self, node: NodeId, bot: NodeId, outcome: WindowOutcome, proximity: f64) {
        let report = match outcome {
            WindowOutcome::Analyzed { index, analysis } => {
                let motion = analysis.decision.is_motion();
                let upload = self
                    .cfg
                    .policy
                    .uploads(motion)
                    .then(|| UploadMessage::from_analysis(bot, index, &analysis, self.cfg.include_rows));
                WindowReport {
                    device_id: bot,
                    window_index: index,
                    summary: WindowSummary::Analyzed {
                        start_s: analysis.start_s,
                        end_s: analysis.end_s,
                        decision: analysis.decision,
                        speed_mps: analysis.median_speed(),
                        proximity,
                    },
                    upload,
                }
            }
            WindowOutcome::Rejected { index, frames, expected } => WindowReport {
                device_id: bot,
                window_index: index,
                summary: WindowSummary::Rejected { frames: frames as u32, expected: expected as u32 },
                upload: None,
            },
        };
        let master = self.master.id;
        if node != master {
            self.traffic.reports += 1;
            self.traffic.report_bytes += report.encoded_len() as u64;
        }
        self.processors.entry(node).or_default().unacked.entry(bot).or_default().push_back(report.clone());
        self.bus.send(self.latency(node, master), Addr::Node(master), Msg::Report(Box::new(report)));
    }

    fn on_report(&mut self, report: WindowReport) -> Result<(), TopologyError> {
        let key = (report.window_index, report.device_id);
        let h = self.master.horizon.entry(report.device_id).or_default();
        h.reported = Some(h.reported.map_or(key.0, |r| r.max(key.0)));
        if self.store.committed.contains(&key) {
            self.send_ack(report.device_id, key.0);
        } else {
            self.master.buffer.insert(key, report);
        }
        self.flush()
    }

    fn flush(&mut self) -> Result<(), TopologyError> {
        let Some(limit) = self.master.ready_through() else { return Ok(()) };
        while self.master.next_flush <= limit {
            let k = self.master.next_flush;
            self.master.next_flush += 1;
            let keys: Vec<(u64, NodeId)> = self.master.buffer.range((k, 0)..=(k, NodeId::MAX)).map(|(&key, _)| key).collect();
            for key in keys {
                let report = self.master.buffer.remove(&key).expect("listed");
                self.stage(report);
            }
        }
        self.drain_outbox()
    }

    /// Queues one window for the store, sending its upload to the cloud.
    fn stage(&mut self, report: WindowReport) {
        let (window, device) = (report.window_index, report.device_id);
        let event = match report.summary {
            WindowSummary::Rejected { .. } => {
                self.traffic.rejected_windows += 1;
                None
            }
            WindowSummary::Analyzed { decision, speed_mps, proximity, .. } => Some(DetectionEvent {
                time_s: (window + 1) as f64 * self.cfg.sensing.window_len_s,
                window_index: window,
                device_id: device,
                zone: self.deployment.zone_of(device),
                verdict: decision.verdict,
                motion_statistic: decision.motion_statistic,
                threshold: decision.threshold,
                speed_mps,
                proximity,
                near: proximity > self.cfg.proximity_threshold,
                classification: None,
            }),
        };
        let awaiting_cloud = match report.upload {
            Some(msg) => {
                let bytes = msg.payload_bytes() as u64;
                if self.cloud.seen.contains_key(&(device, window)) {
                    self.traffic.replayed_messages += 1;
                    self.traffic.replay_bytes += bytes;
                } else {
                    self.traffic.upload_messages += 1;
                    self.traffic.upload_bytes += bytes;
                }
                let from = self.master.id;
                self.bus.send(self.cfg.link_latency_s, Addr::Cloud, Msg::Upload { from, msg: Box::new(msg) });
                true
            }
            None => false,
        };
        self.master.outbox.push_back(Pending { window, device, event, awaiting_cloud });
    }

    fn drain_outbox(&mut self) -> Result<(), TopologyError> {
        while self.master.outbox.front().is_some_and(|p| !p.awaiting_cloud) {
            let p = self.master.outbox.pop_front().expect("front checked");
            if self.store.committed.insert((p.window, p.device)) {
                if let Some(e) = p.event {
                    self.store.log.append(e)?;
                }
            }
            self.send_ack(p.device, p.window);
        }
        Ok(())
    }

    fn send_ack(&mut self, bot: NodeId, window: u64) {
        let master = self.master.id;
        let processor = self.bots[&bot].processor;
        self.bus.send(self.latency(master, processor), Addr::Node(processor), Msg::Ack { bot, window });
    }

    fn on_ack(&mut self, node: NodeId, bot: NodeId, window: u64) {
        if node == bot {
            let window_len = self.cfg.sensing.window_len_s;
            let b = self.bots.get_mut(&bot).expect("bot registered");
            let upto = b.frames[b.keep_from..b.next]
                .partition_point(|f| (f.timestamp_s / window_len + 1e-9).floor() as u64 <= window);
            b.keep_from += upto;
            return;
        }
        if let Some(proc) = self.processors.get_mut(&node) {
            if let Some(q) = proc.unacked.get_mut(&bot) {
                q.retain(|r| r.window_index > window);
            }
        }
        self.bus.send(self.latency(node, bot), Addr::Node(bot), Msg::Ack { bot, window });
    }

    fn on_cloud(&mut self, msg: Msg) -> Result<(), TopologyError> {
        let Msg::Upload { from, msg } = msg else { return Ok(()) };
        let key = (msg.device_id, msg.window_index as u64);
        let classification = match self.cloud.seen.get(&key) {
            Some(c) => *c,
            None => {
                let c = if msg.motion_flag {
                    let model = self.cloud.model.ok_or(TopologyError::MissingModel)?;
                    let fv = upload_features(&msg, self.cfg.sensing.wavelength_m, &self.cfg.sensing.threshold);
                    let (label, margin) = classify(model, &fv)?;
                    let zone = self.deployment.zone_of(msg.device_id);
                    let state = self.cloud.zones.get_mut(&zone).expect("zone registered");
                    let confidence = state.update(&[(msg.device_id, label, margin)]);
                    Some(Classification { label, margin, confidence, alert: state.alert() })
                } else {
                    None
                };
                self.cloud.seen.insert(key, c);
                self.cloud.uploads.push(*msg);
                c
            }
        };
        self.bus.send(
            self.cfg.link_latency_s,
            Addr::Node(from),
            Msg::CloudResult { device: key.0, window: key.1, classification },
        );
        Ok(())
    }

    /// The master disappears with everything it held in memory. The smallest
    /// origin takes over, and every sender re-sends what the store has not
    /// yet acknowledged.
    fn on_failover(&mut self, old: NodeId) -> Result<(), TopologyError> {
        let new = self.deployment.failover_target().expect("checked before the run");
        self.deployment = self.deployment.promote(new)?;
        self.dead.insert(old);
        self.processors.remove(&old);
        let bot_ids: Vec<NodeId> = self.bots.keys().copied().collect();
        self.master = Master::new(new, &bot_ids);
        self.failover = Some(Failover { at_s: self.bus.now, old_master: old, new_master: new });

        for &b in &bot_ids {
            let processor = self.deployment.processor_of(b)?;
            let bot = self.bots.get_mut(&b).expect("bot registered");
            if bot.processor == processor {
                continue;
            }
            bot.processor = processor;
            let delay = if processor == b { 0.0 } else { self.cfg.link_latency_s };
            for index in bot.keep_from..bot.next {
                self.traffic.replayed_messages += 1;
                self.traffic.replay_bytes += bot.frames[index].binary_len() as u64;
                self.bus.send(delay, Addr::Node(processor), Msg::Frame { bot: b, index });
            }
            if bot.ended {
                self.bus.send(delay, Addr::Node(processor), Msg::StreamEnd { bot: b });
            }
        }
        let nodes: Vec<NodeId> = self.processors.keys().copied().collect();
        for node in nodes {
            let delay = self.latency(node, new);
            let proc = &self.processors[&node];
            let mut resend = Vec::new();
            for (bot, q) in &proc.unacked {
                resend.extend(q.iter().cloned().map(|r| (*bot, Some(r))));
            }
            resend.extend(proc.ended.iter().map(|&bot| (bot, None)));
            for (bot, report) in resend {
                match report {
                    Some(r) => {
                        if node != new {
                            self.traffic.replayed_messages += 1;
                            self.traffic.replay_bytes += r.encoded_len() as u64;
                        }
                        self.bus.send(delay, Addr::Node(new), Msg::Report(Box::new(r)));
                    }
                    None => self.bus.send(delay, Addr::Node(new), Msg::ReportsEnd { bot }),
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_sim::{generate_schedule, ChannelConfig, ImpairmentConfig, Segment, SubjectProfile};
    use crate::subject_id::{train, FeatureVector, Label, TrainParams};
    use crate::topology::{Link, Mode, NodeRole, Role};

    fn cfg() -> PipelineConfig {
        PipelineConfig { sample_rate_hz: 100.0, ..PipelineConfig::default() }
    }

    /// Separates on mean speed, enough to exercise the cloud path.
    fn toy_model() -> ClassifierModel {
        let mut data = Vec::new();
        for i in 0..20 {
            let x = i as f64 * 0.1;
            let fv = FeatureVector { speed_mean: x, ms_mean: 0.5, ..FeatureVector::zero() };
            data.push((fv, if x > 0.5 { Label::Human } else { Label::NonHuman }));
        }
        train(&data, &TrainParams::default()).unwrap()
    }

    fn trace(seed: u64, device: u16, walking: bool, secs: f64) -> Vec<CsiFrame> {
        let ch = ChannelConfig::new(seed).with_device(device).with_subcarriers(16);
        let half = secs / 2.0;
        let subject = if walking { SubjectProfile::human() } else { SubjectProfile::none() };
        let segments = [Segment::still(half), Segment::single(half, subject)];
        generate_schedule(&ch, &segments, &ImpairmentConfig::none()).unwrap()
    }

    fn tiered(mode: Mode) -> Deployment {
        Deployment {
            nodes: vec![
                NodeRole { id: 1, role: Role::MasterOrigin },
                NodeRole { id: 2, role: Role::Origin },
                NodeRole { id: 3, role: Role::Origin },
                NodeRole { id: 10, role: Role::Bot },
                NodeRole { id: 11, role: Role::Bot },
                NodeRole { id: 12, role: Role::Bot },
            ],
            links: vec![
                Link { child: 2, parent: 1, zone: None },
                Link { child: 3, parent: 1, zone: None },
                Link { child: 10, parent: 2, zone: None },
                Link { child: 11, parent: 3, zone: None },
                Link { child: 12, parent: 1, zone: None },
            ],
            mode,
        }
    }

    fn traces() -> BTreeMap<NodeId, Vec<CsiFrame>> {
        BTreeMap::from([(10, trace(1, 10, true, 36.0)), (11, trace(2, 11, false, 36.0)), (12, trace(3, 12, true, 36.0))])
    }

    #[test]
    fn one_event_per_window_and_motion_only_uploads() {
        let model = toy_model();
        let out = run_pipeline(&tiered(Mode::OriginAggregated), &traces(), Some(&model), &cfg()).unwrap();
        assert_eq!(out.log.len(), 18);
        let mut uploaded = BTreeSet::new();
        for u in &out.uploads {
            assert!(u.motion_flag);
            uploaded.insert((u.device_id, u.window_index as u64));
        }
        for e in out.log.events() {
            assert_eq!(uploaded.contains(&(e.device_id, e.window_index)), e.verdict.is_motion());
            assert_eq!(e.classification.is_some(), e.verdict.is_motion());
        }
        assert!(out.log.events().iter().any(|e| e.verdict.is_motion()));
        // bot 12 hangs off the master itself
        assert_eq!(out.traffic.raw_frames_at_master, 3600);
        assert_eq!(out.traffic.reports, 12);
    }

    #[test]
    fn modes_give_identical_logs() {
        let model = toy_model();
        let a = run_pipeline(&tiered(Mode::OriginAggregated), &traces(), Some(&model), &cfg()).unwrap();
        let d = run_pipeline(&tiered(Mode::DirectToMaster), &traces(), Some(&model), &cfg()).unwrap();
        assert_eq!(a.log.to_ndjson(), d.log.to_ndjson());
        assert_eq!(d.traffic.raw_frames_at_master, d.traffic.raw_frames);
        assert_eq!(d.traffic.reports, 0);
    }

    #[test]
    fn edge_only_keeps_verdicts_and_uploads_nothing() {
        let model = toy_model();
        let cloud = run_pipeline(&tiered(Mode::OriginAggregated), &traces(), Some(&model), &cfg()).unwrap();
        let edge_cfg = PipelineConfig { policy: OffloadPolicy::EdgeOnly, ..cfg() };
        let edge = run_pipeline(&tiered(Mode::OriginAggregated), &traces(), None, &edge_cfg).unwrap();
        assert_eq!(edge.traffic.upload_bytes, 0);
        assert!(edge.uploads.is_empty());
        assert_eq!(edge.log.len(), cloud.log.len());
        for (e, c) in edge.log.events().iter().zip(cloud.log.events()) {
            assert!(e.classification.is_none());
            assert_eq!((e.device_id, e.window_index, e.verdict), (c.device_id, c.window_index, c.verdict));
        }
    }

    #[test]
    fn failover_reproduces_the_log() {
        let model = toy_model();
        for mode in [Mode::OriginAggregated, Mode::DirectToMaster] {
            let base = run_pipeline(&tiered(mode), &traces(), Some(&model), &cfg()).unwrap();
            for at in [8.0, 18.0, 18.004, 30.5] {
                let c = PipelineConfig { failover_at_s: Some(at), ..cfg() };
                let out = run_pipeline(&tiered(mode), &traces(), Some(&model), &c).unwrap();
                assert_eq!(out.failover.unwrap().new_master, 2);
                assert_eq!(out.log.to_ndjson(), base.log.to_ndjson(), "{mode:?} at {at}");
                assert!(out.traffic.replay_bytes > 0);
            }
        }
    }

    #[test]
    fn cloud_policy_without_model_is_rejected() {
        let r = run_pipeline(&tiered(Mode::OriginAggregated), &traces(), None, &cfg());
        assert_eq!(r.unwrap_err(), TopologyError::MissingModel);
    }

    #[test]
    fn malformed_topology_is_rejected() {
        let mut d = tiered(Mode::OriginAggregated);
        d.nodes[1].role = Role::MasterOrigin;
        let c = PipelineConfig { policy: OffloadPolicy::EdgeOnly, ..cfg() };
        assert!(matches!(run_pipeline(&d, &traces(), None, &c), Err(TopologyError::DuplicateMaster(_))));
        let stray = BTreeMap::from([(2, trace(1, 2, false, 12.0))]);
        assert_eq!(run_pipeline(&tiered(Mode::OriginAggregated), &stray, None, &c).unwrap_err(), TopologyError::UnknownTrace(2));
    }

    #[test]
    fn star_without_origin_cannot_fail_over() {
        let c = PipelineConfig { policy: OffloadPolicy::EdgeOnly, failover_at_s: Some(3.0), ..cfg() };
        let d = Deployment::star(2, Mode::DirectToMaster);
        let t = BTreeMap::from([(1, trace(1, 1, false, 12.0))]);
        assert!(run_pipeline(&d, &t, None, &c).is_err());
    }
}
