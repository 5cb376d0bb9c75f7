use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::{apply_policy, ChannelTally, NodeState, SimConfig, SimReport, SimSeries, TxEvent, RNG_NAME};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Arrival(usize),
    Boundary { channel: usize, generation: u64 },
    Sample,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // reversed so the max-heap pops the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy)]
enum Phase {
    /// A run of `len` idle slots from `start`, of which `credited` are tallied.
    /// `len == u64::MAX` when nobody is contending.
    Idle { start: f64, len: u64, credited: u64 },
    Busy,
}

struct Channel {
    sigma: f64,
    t_s: f64,
    t_c: f64,
    phase: Phase,
    generation: u64,
    pending: Vec<usize>,
    transmitters: Vec<usize>,
    tally: ChannelTally,
}

struct Node {
    state: NodeState,
    /// Counting down in its channel's slots.
    contending: bool,
    busy_since: f64,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    rng: ChaCha8Rng,
    heap: BinaryHeap<Event>,
    seq: u64,
    nodes: Vec<Node>,
    channels: Vec<Channel>,
    rep: SimReport,
}

fn bump(counter: &mut u64, by: u64) -> Result<()> {
    *counter = counter.checked_add(by).ok_or(Error::Overflow("simulation counter"))?;
    Ok(())
}

impl Sim<'_> {
    fn push(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Event { time, seq: self.seq, kind });
    }

    fn draw_timer(&mut self, stage: u32) -> u64 {
        let window = (self.cfg.params.w as u64) << stage;
        self.rng.random_range(0..window)
    }

    /// Tallies `count` idle slots of channel `k` for everyone on it.
    fn credit_idle(&mut self, k: usize, count: u64) -> Result<()> {
        if count == 0 {
            return Ok(());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.state.channel == k {
                bump(&mut self.rep.slots_total[i][k], count)?;
                if n.contending {
                    bump(&mut self.rep.slots_busy[i][k], count)?;
                }
            }
        }
        let ch = &mut self.channels[k];
        bump(&mut ch.tally.idle_slots, count)?;
        ch.tally.elapsed += count as f64 * ch.sigma;
        Ok(())
    }

    /// Idle slots of channel `k` that began strictly before `now`.
    fn idle_slots_before(&self, k: usize, now: f64) -> Option<(u64, u64)> {
        match self.channels[k].phase {
            Phase::Idle { start, len, credited } => {
                let begun = ((now - start) / self.channels[k].sigma).ceil().max(0.0);
                let begun = if begun >= len as f64 { len } else { begun as u64 };
                Some((begun, credited))
            }
            Phase::Busy => None,
        }
    }

    fn flush(&mut self, k: usize, now: f64) -> Result<()> {
        if let Some((begun, credited)) = self.idle_slots_before(k, now) {
            self.credit_idle(k, begun - credited)?;
            if let Phase::Idle { credited, .. } = &mut self.channels[k].phase {
                *credited = begun;
            }
        }
        Ok(())
    }

    /// Node `i`, holding a packet with a drawn timer, starts contending on
    /// `k` at the channel's next slot boundary.
    fn join(&mut self, i: usize, k: usize, now: f64) -> Result<()> {
        self.flush(k, now)?;
        self.nodes[i].state.channel = k;
        self.nodes[i].contending = false;
        self.channels[k].pending.push(i);
        if let Phase::Idle { start, len, credited } = self.channels[k].phase {
            if credited < len {
                let sigma = self.channels[k].sigma;
                self.channels[k].phase = Phase::Idle { start, len: credited, credited };
                self.channels[k].generation += 1;
                let generation = self.channels[k].generation;
                self.push(start + credited as f64 * sigma, EventKind::Boundary { channel: k, generation });
            }
        }
        Ok(())
    }

    /// Node `i` moves to `k` with an empty queue.
    fn relocate(&mut self, i: usize, k: usize, now: f64) -> Result<()> {
        self.flush(k, now)?;
        self.nodes[i].state.channel = k;
        self.nodes[i].contending = false;
        Ok(())
    }

    fn contenders(&self, k: usize) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].contending && self.nodes[i].state.channel == k).collect()
    }

    fn start_slot(&mut self, k: usize, now: f64) -> Result<()> {
        let contenders = self.contenders(k);
        if contenders.is_empty() {
            self.channels[k].phase = Phase::Idle { start: now, len: u64::MAX, credited: 0 };
            return Ok(());
        }
        let tx: Vec<usize> = contenders.iter().copied().filter(|&i| self.nodes[i].state.timer == 0).collect();
        self.channels[k].generation += 1;
        let generation = self.channels[k].generation;
        if tx.is_empty() {
            let run = contenders.iter().map(|&i| self.nodes[i].state.timer).min().unwrap_or(1);
            self.channels[k].phase = Phase::Idle { start: now, len: run, credited: 0 };
            let end = now + run as f64 * self.channels[k].sigma;
            self.push(end, EventKind::Boundary { channel: k, generation });
            return Ok(());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.state.channel == k {
                bump(&mut self.rep.slots_total[i][k], 1)?;
                if n.contending {
                    bump(&mut self.rep.slots_busy[i][k], 1)?;
                }
            }
        }
        for &i in &tx {
            bump(&mut self.rep.attempts[i][k], 1)?;
        }
        let ch = &mut self.channels[k];
        let duration = if tx.len() == 1 {
            bump(&mut ch.tally.success_slots, 1)?;
            ch.t_s
        } else {
            bump(&mut ch.tally.collision_slots, 1)?;
            ch.t_c
        };
        ch.tally.elapsed += duration;
        ch.phase = Phase::Busy;
        ch.transmitters = tx;
        self.push(now + duration, EventKind::Boundary { channel: k, generation });
        Ok(())
    }

    fn end_busy_slot(&mut self, k: usize, now: f64) -> Result<()> {
        let tx = std::mem::take(&mut self.channels[k].transmitters);
        for i in self.contenders(k) {
            if !tx.contains(&i) {
                self.nodes[i].state.timer -= 1;
            }
        }
        let event = if tx.len() == 1 { TxEvent::Success } else { TxEvent::Collision };
        let channels = self.channels.len();
        let m = self.cfg.params.m;
        for &i in &tx {
            if event == TxEvent::Success {
                bump(&mut self.rep.successes[i][k], 1)?;
                self.nodes[i].state.queue -= 1;
            } else {
                bump(&mut self.rep.collisions[i][k], 1)?;
            }
            let policy = &self.cfg.nodes[i].policy;
            let decision = apply_policy(&self.nodes[i].state, event, policy, channels, m, &mut self.rng);
            let node = &mut self.nodes[i];
            node.state.stage = decision.stage;
            if node.state.queue == 0 {
                node.state.in_service = false;
                node.contending = false;
                self.rep.busy_time[i] += now - node.busy_since;
                if decision.channel != k {
                    self.relocate(i, decision.channel, now)?;
                }
                continue;
            }
            let timer = self.draw_timer(decision.stage);
            self.nodes[i].state.timer = timer;
            if decision.channel != k {
                self.join(i, decision.channel, now)?;
            }
        }
        Ok(())
    }

    fn boundary(&mut self, k: usize, generation: u64, now: f64) -> Result<()> {
        if generation != self.channels[k].generation {
            return Ok(());
        }
        match self.channels[k].phase {
            Phase::Idle { len, credited, .. } => {
                self.credit_idle(k, len - credited)?;
                for i in self.contenders(k) {
                    self.nodes[i].state.timer -= len;
                }
            }
            Phase::Busy => self.end_busy_slot(k, now)?,
        }
        for i in std::mem::take(&mut self.channels[k].pending) {
            if self.nodes[i].state.channel == k && self.nodes[i].state.queue > 0 {
                self.nodes[i].contending = true;
            }
        }
        self.start_slot(k, now)
    }

    fn arrival(&mut self, i: usize, now: f64, exp: &Exp<f64>) -> Result<()> {
        bump(&mut self.rep.arrivals[i], 1)?;
        let node = &mut self.nodes[i];
        node.state.queue += 1;
        if node.state.queue == 1 {
            node.busy_since = now;
            node.state.in_service = true;
            node.state.stage = 0;
            let k = node.state.channel;
            let timer = self.draw_timer(0);
            self.nodes[i].state.timer = timer;
            self.join(i, k, now)?;
        }
        let gap = exp.sample(&mut self.rng);
        self.push(now + gap, EventKind::Arrival(i));
        Ok(())
    }

    fn sample(&mut self, now: f64) {
        let mut counts = vec![0u32; self.channels.len()];
        for n in &self.nodes {
            counts[n.state.channel] += 1;
        }
        for (k, &c) in counts.iter().enumerate() {
            self.rep.population_histogram[k][c as usize] += 1;
        }
        self.rep.samples += 1;
        if let Some(series) = self.rep.series.as_mut() {
            series.times.push(now);
            series.population.push(counts);
            series.cumulative_successes.push(self.rep.successes.iter().map(|row| row.iter().sum()).collect());
        }
    }
}

pub(super) fn run(cfg: &SimConfig) -> Result<SimReport> {
    let n = cfg.nodes.len();
    let k = cfg.channels.len();
    let zeros = vec![vec![0u64; k]; n];
    let rep = SimReport {
        seed: cfg.seed,
        rng: RNG_NAME.to_string(),
        t_f: cfg.t_f,
        throughput: vec![0.0; n],
        backlog: vec![0; n],
        in_service: vec![false; n],
        arrivals: vec![0; n],
        successes: zeros.clone(),
        collisions: zeros.clone(),
        attempts: zeros.clone(),
        slots_total: zeros.clone(),
        slots_busy: zeros,
        busy_time: vec![0.0; n],
        channel_tally: Vec::new(),
        population_histogram: vec![vec![0; n + 1]; k],
        samples: 0,
        empirical_tau: Vec::new(),
        series: cfg.record_series.then(|| SimSeries { times: Vec::new(), population: Vec::new(), cumulative_successes: Vec::new() }),
    };
    let channels = cfg
        .channels
        .iter()
        .map(|c| Channel {
            sigma: cfg.params.sigma,
            t_s: c.t_s,
            t_c: c.t_c,
            phase: Phase::Idle { start: 0.0, len: u64::MAX, credited: 0 },
            generation: 0,
            pending: Vec::new(),
            transmitters: Vec::new(),
            tally: ChannelTally { idle_slots: 0, success_slots: 0, collision_slots: 0, elapsed: 0.0 },
        })
        .collect();
    let nodes = cfg
        .nodes
        .iter()
        .map(|c| Node {
            state: NodeState { queue: 0, channel: c.initial_channel, stage: 0, timer: 0, in_service: false },
            contending: false,
            busy_since: 0.0,
        })
        .collect();
    let mut sim = Sim {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        heap: BinaryHeap::new(),
        seq: 0,
        nodes,
        channels,
        rep,
    };

    let pb = cfg.params.payload_bits;
    let exps: Vec<Option<Exp<f64>>> =
        cfg.nodes.iter().map(|c| if c.lambda > 0.0 { Exp::new(c.lambda / pb).ok() } else { None }).collect();
    for (i, e) in exps.iter().enumerate() {
        if let Some(e) = e {
            let t = e.sample(&mut sim.rng);
            sim.push(t, EventKind::Arrival(i));
        }
    }
    sim.push(cfg.sample_interval, EventKind::Sample);

    while let Some(ev) = sim.heap.pop() {
        if ev.time > cfg.t_f {
            break;
        }
        match ev.kind {
            EventKind::Arrival(i) => {
                let exp = exps[i].as_ref().expect("arrivals are only scheduled for loaded nodes");
                sim.arrival(i, ev.time, exp)?;
            }
            EventKind::Boundary { channel, generation } => sim.boundary(channel, generation, ev.time)?,
            EventKind::Sample => {
                sim.sample(ev.time);
                let next = cfg.sample_interval * (sim.rep.samples + 1) as f64;
                sim.push(next, EventKind::Sample);
            }
        }
    }

    for c in 0..k {
        sim.flush(c, cfg.t_f)?;
    }
    let mut rep = sim.rep;
    for (i, node) in sim.nodes.iter().enumerate() {
        if node.state.queue > 0 {
            rep.busy_time[i] += cfg.t_f - node.busy_since;
        }
        rep.in_service[i] = node.state.queue > 0;
        rep.backlog[i] = node.state.queue.saturating_sub(1);
        let delivered: u64 = rep.successes[i].iter().sum();
        rep.throughput[i] = delivered as f64 * pb / cfg.t_f;
    }
    rep.empirical_tau = rep
        .attempts
        .iter()
        .zip(&rep.slots_total)
        .map(|(a, s)| a.iter().zip(s).map(|(&a, &s)| if s == 0 { 0.0 } else { a as f64 / s as f64 }).collect())
        .collect();
    rep.channel_tally = sim.channels.into_iter().map(|c| c.tally).collect();
    Ok(rep)
}
