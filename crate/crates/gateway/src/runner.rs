//! The range runs on a dedicated thread; everything else talks to it through
//! messages so the kernel never needs locking.

use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use sgcr_core::gateway::{CommandError, CommandRecord, ScadaPoint, StreamBatch};
use sgcr_core::power::network_json;
use sgcr_core::scenario::{KernelError, Range};
use sgcr_core::store::Value;
use thiserror::Error;
use tokio::sync::{broadcast, oneshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pacing {
    /// Step once per interval until the run ends.
    Interval(Duration),
    /// Step only when asked through [`RangeHandle::step`].
    Manual,
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct RunStatus {
    pub tick: u64,
    pub steps_done: usize,
    pub n_steps: usize,
    pub finished: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("range runner has stopped")]
    Stopped,
    #[error(transparent)]
    Command(#[from] CommandError),
    #[error("run has finished")]
    Finished,
    #[error("range has no SCADA gateway")]
    NoGateway,
}

enum Msg {
    Status(oneshot::Sender<RunStatus>),
    Points(oneshot::Sender<Option<Vec<ScadaPoint>>>),
    Command {
        point: String,
        value: Value,
        operator_id: String,
        reply: oneshot::Sender<Result<u64, RunnerError>>,
    },
    CommandRecord(u64, oneshot::Sender<Option<CommandRecord>>),
    PowerJson(oneshot::Sender<String>),
    CyberJson(oneshot::Sender<String>),
    Step(usize, oneshot::Sender<RunStatus>),
    Shutdown,
}

/// Cloneable access to a range running on its own thread.
#[derive(Clone)]
pub struct RangeHandle {
    tx: mpsc::Sender<Msg>,
    batches: broadcast::Sender<StreamBatch>,
}

struct Runner {
    range: Range,
    batches: broadcast::Sender<StreamBatch>,
    error: Option<String>,
}

impl Runner {
    fn status(&self) -> RunStatus {
        RunStatus {
            tick: self.range.snapshot().tick,
            steps_done: self.range.steps_done(),
            n_steps: self.range.n_steps(),
            finished: self.range.finished() || self.error.is_some(),
            error: self.error.clone(),
        }
    }

    fn can_step(&self) -> bool {
        !self.range.finished() && self.error.is_none()
    }

    fn step(&mut self) {
        match self.range.step() {
            Ok(_) => {
                if let Some(b) = self.range.last_batch() {
                    // No receivers is fine.
                    let _ = self.batches.send(b.clone());
                }
            }
            Err(KernelError::Finished(_)) => {}
            Err(e) => {
                log::error!("range stopped: {e}");
                self.error = Some(e.to_string());
            }
        }
    }

    /// Returns false on shutdown.
    fn handle(&mut self, msg: Msg) -> bool {
        match msg {
            Msg::Status(r) => {
                let _ = r.send(self.status());
            }
            Msg::Points(r) => {
                let snap = self.range.snapshot();
                let _ = r.send(self.range.gateway().map(|g| g.list_points(&snap)));
            }
            Msg::Command {
                point,
                value,
                operator_id,
                reply,
            } => {
                let res = if self.range.gateway().is_none() {
                    Err(RunnerError::NoGateway)
                } else if !self.can_step() {
                    Err(RunnerError::Finished)
                } else {
                    self.range.issue_command(&point, value, &operator_id).map_err(RunnerError::from)
                };
                let _ = reply.send(res);
            }
            Msg::CommandRecord(id, r) => {
                let _ = r.send(self.range.command(id).cloned());
            }
            Msg::PowerJson(r) => {
                let _ = r.send(network_json(self.range.power(), self.range.last_solution()));
            }
            Msg::CyberJson(r) => {
                let _ = r.send(self.range.net().topology().to_json());
            }
            Msg::Step(n, r) => {
                for _ in 0..n {
                    if !self.can_step() {
                        break;
                    }
                    self.step();
                }
                let _ = r.send(self.status());
            }
            Msg::Shutdown => return false,
        }
        true
    }

    fn run(mut self, rx: mpsc::Receiver<Msg>, pacing: Pacing) {
        let mut next = Instant::now();
        loop {
            let msg = match pacing {
                Pacing::Interval(every) if self.can_step() => {
                    let now = Instant::now();
                    if now >= next {
                        self.step();
                        next += every;
                        if next < now {
                            next = now + every;
                        }
                        continue;
                    }
                    match rx.recv_timeout(next - now) {
                        Ok(m) => m,
                        Err(mpsc::RecvTimeoutError::Timeout) => continue,
                        Err(mpsc::RecvTimeoutError::Disconnected) => return,
                    }
                }
                _ => match rx.recv() {
                    Ok(m) => m,
                    Err(_) => return,
                },
            };
            if !self.handle(msg) {
                return;
            }
        }
    }
}

impl RangeHandle {
    /// Move `range` onto a new thread and start stepping it.
    pub fn spawn(range: Range, pacing: Pacing) -> RangeHandle {
        let (tx, rx) = mpsc::channel();
        let (batches, _) = broadcast::channel(256);
        let runner = Runner {
            range,
            batches: batches.clone(),
            error: None,
        };
        thread::Builder::new()
            .name("range-runner".into())
            .spawn(move || runner.run(rx, pacing))
            .expect("spawn range runner thread");
        RangeHandle { tx, batches }
    }

    async fn ask<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Msg) -> Result<T, RunnerError> {
        let (reply, rx) = oneshot::channel();
        self.tx.send(make(reply)).map_err(|_| RunnerError::Stopped)?;
        rx.await.map_err(|_| RunnerError::Stopped)
    }

    pub async fn status(&self) -> Result<RunStatus, RunnerError> {
        self.ask(Msg::Status).await
    }

    /// Current SCADA points, or `None` when the range has no gateway.
    pub async fn points(&self) -> Result<Option<Vec<ScadaPoint>>, RunnerError> {
        self.ask(Msg::Points).await
    }

    pub async fn command(&self, point: &str, value: Value, operator_id: &str) -> Result<u64, RunnerError> {
        self.ask(|reply| Msg::Command {
            point: point.to_string(),
            value,
            operator_id: operator_id.to_string(),
            reply,
        })
        .await?
    }

    pub async fn command_record(&self, id: u64) -> Result<Option<CommandRecord>, RunnerError> {
        self.ask(|r| Msg::CommandRecord(id, r)).await
    }

    /// Power topology with the latest solution attached.
    pub async fn power_json(&self) -> Result<String, RunnerError> {
        self.ask(Msg::PowerJson).await
    }

    pub async fn cyber_json(&self) -> Result<String, RunnerError> {
        self.ask(Msg::CyberJson).await
    }

    /// Advance up to `n` steps. Useful with [`Pacing::Manual`].
    pub async fn step(&self, n: usize) -> Result<RunStatus, RunnerError> {
        self.ask(|r| Msg::Step(n, r)).await
    }

    pub fn subscribe(&self) -> broadcast::Receiver<StreamBatch> {
        self.batches.subscribe()
    }

    pub fn shutdown(&self) {
        let _ = self.tx.send(Msg::Shutdown);
    }
}
