//! Stands in for the browser UI: starts a session server on an ephemeral
//! port and answers every takeover by steering toward the goal.
//!
//! The same client works against `dagger-lab serve --port 8765`.

use std::net::TcpListener;
use std::thread;

use serde_json::json;
use tungstenite::Message;

use dagger_lab::dagger::Method;
use dagger_lab::env::NavConfig;
use dagger_lab::io::{EnvConfig, RunConfig};
use dagger_lab::session::{serve_on, MessageKind, ServeOptions, SessionMessage};

fn main() -> anyhow::Result<()> {
    let out = std::env::temp_dir().join("dagger-lab-serve-client");
    let mut config = RunConfig::new(EnvConfig::default(), Method::Diff);
    config.policy.hidden = vec![16, 16];
    config.dagger.initial_demos = 2;
    config.dagger.final_demos = 4;
    config.dagger.interventions_per_update = 1;
    config.dagger.epochs = 5;
    config.dagger.loss_batch = 16;
    config.dagger.alpha = 0.9;
    config.dagger.patience = 1;
    config.dagger.max_rollouts = 20;
    config.out_dir = out.clone();

    let listener = TcpListener::bind("127.0.0.1:0")?;
    let port = listener.local_addr()?.port();
    let options = ServeOptions {
        robot_step_delay: std::time::Duration::from_millis(2),
        ..ServeOptions::default()
    };
    let server = thread::spawn(move || serve_on(listener, &config, options));

    let goal = NavConfig::default().goal_point();
    let (mut ws, _) = tungstenite::connect(format!("ws://127.0.0.1:{port}"))?;
    let mut last_step = None;
    loop {
        let text = match ws.read() {
            Ok(Message::Text(t)) => t,
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => continue,
        };
        let m: SessionMessage = serde_json::from_str(text.as_str())?;
        match m.kind {
            MessageKind::Query => println!("robot asks for help: {}", m.payload),
            MessageKind::EpisodeEvent => println!("episode: {}", m.payload),
            MessageKind::State if m.payload["control"] == "expert" => {
                // One command per robot step the server has taken.
                let step = m.payload["step"].as_u64();
                if step != last_step {
                    last_step = step;
                    let frame = json!({
                        "seq": 0,
                        "session": m.session,
                        "kind": "expert_action",
                        "payload": { "target": goal },
                    });
                    ws.send(Message::text(frame.to_string()))?;
                }
            }
            _ => {}
        }
    }
    let run = server.join().expect("server thread")?;
    println!(
        "{} interventions, {} demonstrations written to {}",
        run.log.interventions(),
        run.dataset.len(),
        out.display()
    );
    Ok(())
}
