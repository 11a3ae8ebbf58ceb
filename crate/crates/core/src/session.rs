//! Interactive session service: a human expert takes over queried episodes
//! over a websocket.
//!
//! Every frame is one JSON line `{seq, session, kind, payload}`. The server
//! streams `state` snapshots at a fixed cadence, a `loss_sample` after each
//! inference, `query` when the gate fires, `control` on every change of
//! owner and `episode_event` when an episode ends. The client answers with
//! `expert_action` frames whose payload is `{"target": [x, y]}`; each one
//! becomes a single capped displacement toward the target. Rejected or
//! malformed frames get a `control` reply carrying an `error` field.
//!
//! Two workers cooperate: the DAgger worker owns the task and the dataset,
//! and the channel worker owns the socket. Client input reaches the DAgger
//! worker through one ordered command queue.

use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tungstenite::{Message, WebSocket};

use crate::dagger::{
    run_dagger, Controller, DaggerRun, EpisodeRecord, ExpertSource, ExpertStep, RolloutObserver, TrajectoryStep,
};
use crate::env::{ExpertMode, NavState, Point, Task};
use crate::gate::GateDecision;
use crate::io::commands::{build_learner, prepare_out, write_run};
use crate::io::RunConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    State,
    Query,
    ExpertAction,
    EpisodeEvent,
    LossSample,
    Control,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMessage {
    pub seq: u64,
    pub session: String,
    pub kind: MessageKind,
    pub payload: Value,
}

impl SessionMessage {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionPayload {
    target: Point,
}

/// Decodes a client frame into a pointer target.
pub fn parse_expert_action(line: &str) -> Result<Point> {
    let msg: SessionMessage =
        serde_json::from_str(line.trim()).map_err(|e| Error::Session(format!("malformed message: {e}")))?;
    if msg.kind != MessageKind::ExpertAction {
        return Err(Error::Session(format!(
            "clients may only send expert_action, got {}",
            serde_json::to_value(msg.kind)?.as_str().unwrap_or("?")
        )));
    }
    let p: ActionPayload = serde_json::from_value(msg.payload)
        .map_err(|e| Error::Session(format!("bad expert_action payload: {e}")))?;
    if !p.target.iter().all(|v| v.is_finite()) {
        return Err(Error::Session("target must be finite".into()));
    }
    Ok(p.target)
}

#[derive(Debug, Clone, Copy)]
pub struct ServeOptions {
    /// Pause after each robot step so a viewer can follow the rollout.
    pub robot_step_delay: Duration,
    /// Cadence of `state` broadcasts.
    pub state_interval: Duration,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            robot_step_delay: Duration::from_millis(30),
            state_interval: Duration::from_millis(50),
        }
    }
}

/// Commands from the channel worker to the DAgger worker.
#[derive(Debug)]
enum Command {
    Target(Point),
    Disconnected,
}

enum Event {
    Message(MessageKind, Value),
    Finished(Value),
}

#[derive(Debug, Clone, Serialize)]
struct Snapshot {
    episode: u64,
    step: usize,
    position: Point,
    control: Controller,
    goals: Vec<Point>,
    tau: Option<f64>,
}

struct SessionObserver {
    events: Sender<Event>,
    snapshot: Arc<Mutex<Snapshot>>,
    delay: Duration,
}

impl SessionObserver {
    fn send(&self, kind: MessageKind, payload: Value) {
        // The channel worker outlives the run, so a send cannot fail.
        let _ = self.events.send(Event::Message(kind, payload));
    }
}

impl RolloutObserver for SessionObserver {
    fn episode_started(&mut self, episode: u64, state: &NavState) {
        let mut s = self.snapshot.lock().expect("snapshot lock");
        s.episode = episode;
        s.step = 0;
        s.position = state.position;
        s.control = Controller::Robot;
    }

    fn inference(&mut self, episode: u64, step: usize, d: &GateDecision, tau: f64) {
        self.snapshot.lock().expect("snapshot lock").tau = Some(tau);
        let payload = json!({
            "episode": episode, "step": step, "loss": d.loss, "tau": tau, "violation": d.violation,
        });
        self.send(MessageKind::LossSample, payload.clone());
        if d.is_query() {
            self.send(MessageKind::Query, payload);
        }
    }

    fn stepped(&mut self, step: &TrajectoryStep) {
        {
            let mut s = self.snapshot.lock().expect("snapshot lock");
            s.step = step.step + 1;
            s.position = [step.position[0] + step.action[0], step.position[1] + step.action[1]];
        }
        if step.controller == Controller::Robot && !self.delay.is_zero() {
            thread::sleep(self.delay);
        }
    }

    fn control_changed(&mut self, episode: u64, step: usize, controller: Controller, timeout: bool) {
        self.snapshot.lock().expect("snapshot lock").control = controller;
        self.send(
            MessageKind::Control,
            json!({ "owner": controller, "episode": episode, "step": step, "timeout": timeout }),
        );
    }

    fn episode_finished(&mut self, r: &EpisodeRecord) {
        self.send(
            MessageKind::EpisodeEvent,
            json!({
                "episode": r.episode, "outcome": r.outcome, "query_step": r.query_step,
                "timeout": r.timeout, "new_pairs": r.new_pairs, "steps": r.trajectory.len(),
            }),
        );
    }
}

/// Expert source fed by the command queue. Blocks until the client acts,
/// so a run without a client waits at the first query.
struct HumanExpert {
    commands: Receiver<Command>,
}

impl ExpertSource for HumanExpert {
    fn act(&mut self, task: &dyn Task, _mode: ExpertMode, state: &NavState) -> Result<ExpertStep> {
        if state.steps == 0 {
            // Input from before this takeover is stale.
            while self.commands.try_recv().is_ok() {}
        }
        match self.commands.recv() {
            Ok(Command::Target(p)) => Ok(ExpertStep::Act(task.displacement_toward(state, p))),
            Ok(Command::Disconnected) => Ok(ExpertStep::Abort("client disconnected".into())),
            Err(_) => Err(Error::Session("command queue closed".into())),
        }
    }
}

struct Channel {
    socket: WebSocket<TcpStream>,
    session: String,
    seq: u64,
}

impl Channel {
    fn send(&mut self, kind: MessageKind, payload: Value) -> bool {
        self.seq += 1;
        let msg = SessionMessage {
            seq: self.seq,
            session: self.session.clone(),
            kind,
            payload,
        };
        self.socket.send(Message::text(msg.to_line())).is_ok()
    }
}

fn open_channel(stream: TcpStream, session: String) -> Option<Channel> {
    stream.set_nonblocking(false).ok()?;
    let socket = match tungstenite::accept(stream) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("websocket handshake failed: {e}");
            return None;
        }
    };
    socket
        .get_ref()
        .set_read_timeout(Some(Duration::from_millis(5)))
        .ok()?;
    log::info!("session {session} connected");
    Some(Channel { socket, session, seq: 0 })
}

/// Runs the interactive loop on `listener` with a human expert and returns
/// the finished run. Outputs are written as for a scripted run.
pub fn serve_on(listener: TcpListener, config: &RunConfig, options: ServeOptions) -> Result<DaggerRun> {
    let out = prepare_out(config)?;
    let ckpt_dir = out.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir)?;
    let task = config.env.build()?;
    let snapshot = Arc::new(Mutex::new(Snapshot {
        episode: 0,
        step: 0,
        position: task.reset_at(0.0).position,
        control: Controller::Robot,
        goals: task.goals(),
        tau: None,
    }));
    let (cmd_tx, cmd_rx) = mpsc::channel();
    let (ev_tx, ev_rx) = mpsc::channel();
    listener.set_nonblocking(true)?;

    thread::scope(|scope| {
        let worker = {
            let snapshot = Arc::clone(&snapshot);
            let task = task.as_ref();
            let ckpt_dir = ckpt_dir.as_path();
            scope.spawn(move || -> Result<DaggerRun> {
                let mut observer = SessionObserver {
                    events: ev_tx.clone(),
                    snapshot,
                    delay: options.robot_step_delay,
                };
                let mut expert = HumanExpert { commands: cmd_rx };
                let run = build_learner(config).and_then(|mut learner| {
                    run_dagger(
                        task,
                        learner.as_mut(),
                        &config.dagger_config(),
                        &mut expert,
                        &mut observer,
                        Some(ckpt_dir),
                    )
                });
                let summary = match &run {
                    Ok(r) => json!({ "finished": true, "demos": r.dataset.len(), "rollouts": r.log.episodes.len() }),
                    Err(e) => json!({ "finished": true, "error": e.to_string() }),
                };
                let _ = ev_tx.send(Event::Finished(summary));
                run
            })
        };
        channel_worker(&listener, &snapshot, &cmd_tx, &ev_rx, options, config.seed);
        let run = worker.join().expect("DAgger worker panicked")?;
        write_run(&out, &run)?;
        Ok(run)
    })
}

fn channel_worker(
    listener: &TcpListener,
    snapshot: &Mutex<Snapshot>,
    commands: &Sender<Command>,
    events: &Receiver<Event>,
    options: ServeOptions,
    seed: u64,
) {
    let mut channel: Option<Channel> = None;
    let mut sessions = 0u64;
    let mut last_state = Instant::now() - options.state_interval;
    loop {
        // One session at a time: further connections wait in the backlog.
        if channel.is_none() {
            if let Ok((stream, peer)) = listener.accept() {
                sessions += 1;
                log::info!("client {peer}");
                channel = open_channel(stream, format!("{seed:x}-{sessions}"));
                if let Some(ch) = channel.as_mut() {
                    let s = snapshot.lock().expect("snapshot lock").clone();
                    ch.send(MessageKind::Control, json!({ "owner": s.control, "episode": s.episode }));
                }
            }
        }

        let mut drop_client = false;
        if let Some(ch) = channel.as_mut() {
            loop {
                match ch.socket.read() {
                    Ok(Message::Text(text)) => {
                        let control = snapshot.lock().expect("snapshot lock").control;
                        let reply = match parse_expert_action(text.as_str()) {
                            Ok(_) if control != Controller::Expert => {
                                Some("expert_action rejected: robot has control".to_string())
                            }
                            Ok(target) => {
                                let _ = commands.send(Command::Target(target));
                                None
                            }
                            Err(e) => Some(e.to_string()),
                        };
                        if let Some(error) = reply {
                            ch.send(MessageKind::Control, json!({ "owner": control, "error": error }));
                        }
                    }
                    Ok(Message::Close(_)) => {
                        drop_client = true;
                        break;
                    }
                    Ok(_) => {}
                    Err(tungstenite::Error::Io(e))
                        if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) =>
                    {
                        break
                    }
                    Err(_) => {
                        drop_client = true;
                        break;
                    }
                }
            }
        }

        let mut finished = None;
        loop {
            match events.recv_timeout(Duration::from_millis(if channel.is_some() { 0 } else { 5 })) {
                Ok(Event::Message(kind, payload)) => {
                    if let Some(ch) = channel.as_mut() {
                        drop_client |= !ch.send(kind, payload);
                    }
                }
                Ok(Event::Finished(summary)) => {
                    finished = Some(summary);
                    break;
                }
                Err(RecvTimeoutError::Timeout) => break,
                Err(RecvTimeoutError::Disconnected) => {
                    finished = Some(json!({ "finished": true }));
                    break;
                }
            }
        }

        if let Some(ch) = channel.as_mut() {
            if last_state.elapsed() >= options.state_interval {
                let s = serde_json::to_value(&*snapshot.lock().expect("snapshot lock")).expect("snapshot serializes");
                drop_client |= !ch.send(MessageKind::State, s);
                last_state = Instant::now();
            }
            drop_client |= ch.socket.flush().is_err();
        }

        if let Some(summary) = finished {
            if let Some(mut ch) = channel.take() {
                ch.send(MessageKind::Control, summary);
                let _ = ch.socket.close(None);
                let _ = ch.socket.flush();
            }
            return;
        }
        if drop_client {
            if let Some(ch) = channel.take() {
                log::warn!("session {} disconnected", ch.session);
            }
            let _ = commands.send(Command::Disconnected);
        }
    }
}

/// Serves one interactive run on `127.0.0.1:port` with default options.
pub fn serve(config: &RunConfig, port: u16) -> Result<()> {
    let listener = TcpListener::bind(("127.0.0.1", port))?;
    println!("serving on ws://127.0.0.1:{port}");
    let run = serve_on(listener, config, ServeOptions::default())?;
    println!(
        "{} rollouts, {} demonstrations -> {}",
        run.log.episodes.len(),
        run.dataset.len(),
        config.out_dir.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(kind: &str, payload: Value) -> String {
        json!({ "seq": 1, "session": "t", "kind": kind, "payload": payload }).to_string()
    }

    #[test]
    fn parses_pointer_targets() {
        let p = parse_expert_action(&frame("expert_action", json!({ "target": [0.5, -1.0] }))).unwrap();
        assert_eq!(p, [0.5, -1.0]);
    }

    #[test]
    fn rejects_malformed_frames() {
        assert!(parse_expert_action("{not json").is_err());
        assert!(parse_expert_action(&frame("state", json!({}))).is_err());
        assert!(parse_expert_action(&frame("expert_action", json!({ "target": [1.0] }))).is_err());
        assert!(parse_expert_action(&frame("expert_action", json!({ "aim": [1.0, 2.0] }))).is_err());
        assert!(parse_expert_action(&frame("telepathy", json!({}))).is_err());
    }

    #[test]
    fn kinds_use_snake_case() {
        let msg = SessionMessage {
            seq: 3,
            session: "s".into(),
            kind: MessageKind::LossSample,
            payload: json!({}),
        };
        assert_eq!(msg.to_line(), r#"{"seq":3,"session":"s","kind":"loss_sample","payload":{}}"#);
    }

    #[test]
    fn stale_input_is_dropped_at_takeover() {
        let (tx, rx) = mpsc::channel();
        let task = crate::env::CircleNav::default();
        let mut expert = HumanExpert { commands: rx };
        tx.send(Command::Disconnected).unwrap();
        tx.send(Command::Target([9.0, 9.0])).unwrap();
        let state = task.reset_at(0.0);
        let goal = task.goals()[0];
        let handle = thread::spawn(move || {
            thread::sleep(Duration::from_millis(50));
            tx.send(Command::Target(goal)).unwrap();
            tx
        });
        let ExpertStep::Act(a) = expert.act(&task, ExpertMode::Clockwise, &state).unwrap() else {
            panic!("expected an action");
        };
        assert_eq!(a, task.displacement_toward(&state, goal));
        let tx = handle.join().unwrap();
        tx.send(Command::Disconnected).unwrap();
        let mid = NavState { steps: 3, ..state };
        assert!(matches!(
            expert.act(&task, ExpertMode::Clockwise, &mid).unwrap(),
            ExpertStep::Abort(_)
        ));
    }
}
