//! Operator endpoint: newline-delimited JSON over TCP. The schema is described in
//! `docs/operator-protocol.md`.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::game::{Color, MoveRecord};
use crate::geometry::Point2;

/// A correction requested by the operator, applied at the next frame boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "args", rename_all = "kebab-case")]
pub enum OperatorCommand {
    DeleteLastMove,
    SwapMoves { a: usize, b: usize },
    ConfirmLate { number: usize },
    ForceReinit,
    Pause,
    Resume,
}

impl OperatorCommand {
    pub fn kind(&self) -> &'static str {
        match self {
            OperatorCommand::DeleteLastMove => "delete-last-move",
            OperatorCommand::SwapMoves { .. } => "swap-moves",
            OperatorCommand::ConfirmLate { .. } => "confirm-late",
            OperatorCommand::ForceReinit => "force-reinit",
            OperatorCommand::Pause => "pause",
            OperatorCommand::Resume => "resume",
        }
    }
}

/// A command with the client's optional correlation id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueuedCommand {
    pub id: Option<u64>,
    pub command: OperatorCommand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridStatus {
    /// No grid yet, or re-initialising.
    Searching,
    Locked,
    /// Tracking failed or the image contradicts the board.
    Lost,
}

/// Change to the move list carried by a `move` event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum MoveChange {
    Append { record: MoveRecord },
    /// Overwrite the records with these numbers.
    Update { records: Vec<MoveRecord> },
    /// Remove the last record, which had this number.
    Delete { number: usize },
}

/// Server-to-client messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ServerEvent {
    Snapshot {
        frame: u64,
        size: usize,
        board: Vec<String>,
        to_move: Color,
        moves: Vec<MoveRecord>,
        grid: Option<[Point2<f64>; 4]>,
        status: GridStatus,
        paused: bool,
    },
    Move {
        frame: u64,
        change: MoveChange,
        board: Vec<String>,
        to_move: Color,
    },
    Warning {
        frame: u64,
        message: String,
    },
    Grid {
        frame: u64,
        corners: Option<[Point2<f64>; 4]>,
        status: GridStatus,
    },
    Ack {
        id: Option<u64>,
        kind: String,
        frame: u64,
    },
    Error {
        id: Option<u64>,
        message: String,
    },
}

impl ServerEvent {
    pub fn line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("events serialize");
        s.push('\n');
        s
    }
}

#[derive(Debug, Deserialize)]
struct Envelope {
    #[serde(rename = "type")]
    ty: String,
    #[serde(default)]
    id: Option<u64>,
    #[serde(flatten)]
    rest: serde_json::Map<String, serde_json::Value>,
}

/// Parses one client line. The error carries the id when one could be read.
pub fn parse_command(line: &str) -> Result<QueuedCommand, (Option<u64>, String)> {
    let env: Envelope = serde_json::from_str(line).map_err(|e| (None, format!("malformed message: {e}")))?;
    if env.ty != "command" {
        return Err((env.id, format!("unknown message type {:?}", env.ty)));
    }
    let command: OperatorCommand = serde_json::from_value(serde_json::Value::Object(env.rest))
        .map_err(|e| (env.id, format!("bad command: {e}")))?;
    Ok(QueuedCommand { id: env.id, command })
}

/// Fan-out of events to connected clients, with the current snapshot for newcomers.
/// Snapshot replacement and event delivery happen under one lock, so a client sees
/// every event after its snapshot exactly once.
#[derive(Default)]
pub struct Hub {
    inner: Mutex<HubInner>,
}

#[derive(Default)]
struct HubInner {
    snapshot: Option<ServerEvent>,
    clients: Vec<Sender<String>>,
}

impl Hub {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sends `event` to every client and records `snapshot` as the state it leads to.
    pub fn publish(&self, snapshot: ServerEvent, event: Option<ServerEvent>) {
        let mut inner = self.inner.lock().expect("hub lock");
        inner.snapshot = Some(snapshot);
        if let Some(e) = event {
            let line = e.line();
            inner.clients.retain(|c| c.send(line.clone()).is_ok());
        }
    }

    /// Sends to every client without changing the snapshot.
    pub fn broadcast(&self, event: &ServerEvent) {
        let line = event.line();
        let mut inner = self.inner.lock().expect("hub lock");
        inner.clients.retain(|c| c.send(line.clone()).is_ok());
    }

    fn attach(&self, client: Sender<String>) {
        let mut inner = self.inner.lock().expect("hub lock");
        if let Some(s) = &inner.snapshot {
            if client.send(s.line()).is_err() {
                return;
            }
        }
        inner.clients.push(client);
    }

    pub fn clients(&self) -> usize {
        self.inner.lock().expect("hub lock").clients.len()
    }
}

/// A running operator endpoint.
pub struct OperatorServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    pub hub: Arc<Hub>,
}

impl OperatorServer {
    /// Binds `addr` and accepts clients in the background. Commands read from clients
    /// go to `commands`.
    pub fn start(addr: &str, commands: Sender<QueuedCommand>) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let hub = Arc::new(Hub::new());
        let (s, h) = (stop.clone(), hub.clone());
        let accept = std::thread::Builder::new()
            .name("operator-accept".into())
            .spawn(move || accept_loop(listener, s, h, commands))?;
        log::info!("operator endpoint on {addr}");
        Ok(Self {
            addr,
            stop,
            accept: Some(accept),
            hub,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for OperatorServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(listener: TcpListener, stop: Arc<AtomicBool>, hub: Arc<Hub>, commands: Sender<QueuedCommand>) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::info!("operator client {peer} connected");
                if let Err(e) = serve_client(stream, &hub, commands.clone(), stop.clone()) {
                    log::warn!("operator client {peer}: {e}");
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(20)),
            Err(e) => {
                log::warn!("operator accept failed: {e}");
                std::thread::sleep(Duration::from_millis(100));
            }
        }
    }
}

fn serve_client(stream: TcpStream, hub: &Hub, commands: Sender<QueuedCommand>, stop: Arc<AtomicBool>) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_millis(200)))?;
    let (tx, rx): (Sender<String>, Receiver<String>) = channel();
    let mut writer = stream.try_clone()?;
    let w_stop = stop.clone();
    std::thread::Builder::new().name("operator-writer".into()).spawn(move || {
        while !w_stop.load(Ordering::SeqCst) {
            match rx.recv_timeout(Duration::from_millis(200)) {
                Ok(line) => {
                    if writer.write_all(line.as_bytes()).and_then(|_| writer.flush()).is_err() {
                        return;
                    }
                }
                Err(std::sync::mpsc::RecvTimeoutError::Timeout) => {}
                Err(_) => return,
            }
        }
    })?;
    let errors = tx.clone();
    hub.attach(tx);
    std::thread::Builder::new().name("operator-reader".into()).spawn(move || {
        let mut reader = BufReader::new(stream);
        let mut line = String::new();
        while !stop.load(Ordering::SeqCst) {
            match reader.read_line(&mut line) {
                Ok(0) => return,
                Ok(_) => {
                    let text = line.trim();
                    if !text.is_empty() {
                        match parse_command(text) {
                            Ok(c) => {
                                if commands.send(c).is_err() {
                                    return;
                                }
                            }
                            Err((id, message)) => {
                                let _ = errors.send(ServerEvent::Error { id, message }.line());
                            }
                        }
                    }
                    line.clear();
                }
                Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
                Err(_) => return,
            }
        }
    })?;
    Ok(())
}
