//! Newline-delimited JSON telemetry over TCP.
//!
//! Every connected client gets each frame as one line, from its connect point
//! on. Clients may send `{"cmd": "start" | "stop" | "set_speed" | "report",
//! "value": <number>}`; malformed lines are answered with
//! `{"error":"bad_command"}` and the connection stays open. Each client has its
//! own bounded queue that drops the oldest line when full, so a slow reader
//! never stalls the frame loop.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

use crate::report::{generate_report, summarize_frames};
use crate::session::{FeedbackFrame, PaceControl, StreamHooks};

pub const CLIENT_QUEUE_CAPACITY: usize = 1024;

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("cannot bind telemetry socket: {0}")]
    BindFailure(std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Command {
    Start,
    Stop,
    SetSpeed(f64),
    Report,
}

impl Command {
    pub fn parse(line: &str) -> Option<Self> {
        let v: Value = serde_json::from_str(line).ok()?;
        match v.get("cmd")?.as_str()? {
            "start" => Some(Command::Start),
            "stop" => Some(Command::Stop),
            "report" => Some(Command::Report),
            "set_speed" => {
                let speed = v.get("value")?.as_f64()?;
                (speed > 0.0 && speed.is_finite()).then_some(Command::SetSpeed(speed))
            }
            _ => None,
        }
    }

    fn ack(&self) -> Value {
        match self {
            Command::Start => json!({"ack": "start"}),
            Command::Stop => json!({"ack": "stop"}),
            Command::SetSpeed(v) => json!({"ack": "set_speed", "value": v}),
            Command::Report => json!({"ack": "report"}),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientCommand {
    pub client: u64,
    pub command: Command,
}

struct ClientQueue {
    id: u64,
    lines: Mutex<VecDeque<String>>,
    ready: Condvar,
    closed: AtomicBool,
    dropped: AtomicU64,
}

impl ClientQueue {
    fn push(&self, line: String) {
        let mut q = self.lines.lock().unwrap_or_else(|e| e.into_inner());
        if q.len() == CLIENT_QUEUE_CAPACITY {
            q.pop_front();
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
        q.push_back(line);
        self.ready.notify_one();
    }

    fn close(&self) {
        self.closed.store(true, Ordering::SeqCst);
        self.ready.notify_all();
    }
}

#[derive(Default)]
struct Shared {
    clients: Mutex<Vec<Arc<ClientQueue>>>,
    next_id: AtomicU64,
    shutdown: AtomicBool,
}

impl Shared {
    fn clients(&self) -> std::sync::MutexGuard<'_, Vec<Arc<ClientQueue>>> {
        self.clients.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub struct TelemetryServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    commands: Receiver<ClientCommand>,
    acceptor: Option<thread::JoinHandle<()>>,
}

impl TelemetryServer {
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self, TelemetryError> {
        let listener = TcpListener::bind(addr).map_err(TelemetryError::BindFailure)?;
        let addr = listener.local_addr().map_err(TelemetryError::BindFailure)?;
        listener.set_nonblocking(true).map_err(TelemetryError::BindFailure)?;
        let shared = Arc::new(Shared::default());
        let (tx, rx) = mpsc::channel();
        let acceptor = {
            let shared = Arc::clone(&shared);
            thread::spawn(move || accept_loop(listener, shared, tx))
        };
        Ok(Self {
            addr,
            shared,
            commands: rx,
            acceptor: Some(acceptor),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn client_count(&self) -> usize {
        self.shared.clients().len()
    }

    /// Lines dropped so far for slow clients, summed over connected clients.
    pub fn dropped_lines(&self) -> u64 {
        self.shared.clients().iter().map(|c| c.dropped.load(Ordering::Relaxed)).sum()
    }

    pub fn publish(&self, frame: &FeedbackFrame) {
        match serde_json::to_string(frame) {
            Ok(line) => self.broadcast(line),
            Err(e) => log::error!("frame {} not serializable: {e}", frame.seq),
        }
    }

    pub fn broadcast(&self, line: String) {
        for c in self.shared.clients().iter() {
            c.push(line.clone());
        }
    }

    pub fn send_to(&self, client: u64, line: String) {
        if let Some(c) = self.shared.clients().iter().find(|c| c.id == client) {
            c.push(line);
        }
    }

    pub fn try_command(&self) -> Option<ClientCommand> {
        self.commands.try_recv().ok()
    }

    pub fn recv_command(&self, timeout: Duration) -> Option<ClientCommand> {
        self.commands.recv_timeout(timeout).ok()
    }

    /// A sender usable from other threads, e.g. for replies computed off the frame loop.
    pub fn handle(&self) -> TelemetryHandle {
        TelemetryHandle {
            shared: Arc::clone(&self.shared),
        }
    }
}

impl Drop for TelemetryServer {
    fn drop(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        for c in self.shared.clients().iter() {
            c.close();
        }
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

#[derive(Clone)]
pub struct TelemetryHandle {
    shared: Arc<Shared>,
}

impl TelemetryHandle {
    pub fn send_to(&self, client: u64, line: String) {
        if let Some(c) = self.shared.clients().iter().find(|c| c.id == client) {
            c.push(line);
        }
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>, commands: Sender<ClientCommand>) {
    while !shared.shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                if let Err(e) = attach(stream, &shared, commands.clone()) {
                    log::warn!("telemetry client {peer} failed to attach: {e}");
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                log::warn!("telemetry accept failed: {e}");
                thread::sleep(Duration::from_millis(5));
            }
        }
    }
}

fn attach(stream: TcpStream, shared: &Arc<Shared>, commands: Sender<ClientCommand>) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let reader = stream.try_clone()?;
    let queue = Arc::new(ClientQueue {
        id: shared.next_id.fetch_add(1, Ordering::SeqCst),
        lines: Mutex::new(VecDeque::new()),
        ready: Condvar::new(),
        closed: AtomicBool::new(false),
        dropped: AtomicU64::new(0),
    });
    shared.clients().push(Arc::clone(&queue));

    {
        let queue = Arc::clone(&queue);
        let shared = Arc::clone(shared);
        thread::spawn(move || {
            write_loop(stream, &queue);
            queue.close();
            shared.clients().retain(|c| c.id != queue.id);
        });
    }
    thread::spawn(move || {
        read_loop(reader, &queue, &commands);
        queue.close();
    });
    Ok(())
}

fn write_loop(mut stream: TcpStream, queue: &ClientQueue) {
    loop {
        let line = {
            let mut q = queue.lines.lock().unwrap_or_else(|e| e.into_inner());
            loop {
                if let Some(line) = q.pop_front() {
                    break Some(line);
                }
                if queue.closed.load(Ordering::SeqCst) {
                    break None;
                }
                q = queue
                    .ready
                    .wait_timeout(q, Duration::from_millis(50))
                    .unwrap_or_else(|e| e.into_inner())
                    .0;
            }
        };
        let Some(mut line) = line else { return };
        line.push('\n');
        if stream.write_all(line.as_bytes()).is_err() {
            return;
        }
    }
}

fn read_loop(stream: TcpStream, queue: &ClientQueue, commands: &Sender<ClientCommand>) {
    for line in BufReader::new(stream).lines() {
        let Ok(line) = line else { return };
        if line.trim().is_empty() {
            continue;
        }
        match Command::parse(&line) {
            Some(command) => {
                queue.push(command.ack().to_string());
                let _ = commands.send(ClientCommand {
                    client: queue.id,
                    command,
                });
            }
            None => queue.push(json!({"error": "bad_command"}).to_string()),
        }
        if queue.closed.load(Ordering::SeqCst) {
            return;
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReportSettings {
    pub endpoint: Option<String>,
    pub timeout: Duration,
}

/// Connects a running stream to a telemetry server: publishes frames and
/// applies client commands. Report requests are served from a snapshot on a
/// separate thread.
pub struct TelemetryHooks<'a> {
    server: &'a TelemetryServer,
    report: ReportSettings,
    /// Shared per frame so a report snapshot costs one pointer copy per frame.
    frames: Vec<Arc<FeedbackFrame>>,
    hold_until_start: bool,
}

impl<'a> TelemetryHooks<'a> {
    pub fn new(server: &'a TelemetryServer, report: ReportSettings) -> Self {
        Self {
            server,
            report,
            frames: Vec::new(),
            hold_until_start: false,
        }
    }

    /// Keep the stream paused until a client sends `start`.
    pub fn wait_for_start(mut self, on: bool) -> Self {
        self.hold_until_start = on;
        self
    }

    fn spawn_report(&self, client: u64) {
        let snapshot = self.frames.clone();
        let handle = self.server.handle();
        let settings = self.report.clone();
        thread::spawn(move || {
            let frames: Vec<FeedbackFrame> = snapshot.iter().map(|f| FeedbackFrame::clone(f)).collect();
            let line = match summarize_frames(&frames) {
                Ok(summary) => {
                    let report = generate_report(&summary, settings.endpoint.as_deref(), settings.timeout);
                    json!({ "report": report }).to_string()
                }
                Err(_) => json!({"error": "empty_session"}).to_string(),
            };
            handle.send_to(client, line);
        });
    }
}

impl StreamHooks for TelemetryHooks<'_> {
    fn on_frame(&mut self, frame: &FeedbackFrame) {
        self.server.publish(frame);
        self.frames.push(Arc::new(frame.clone()));
    }

    fn poll(&mut self, control: &mut PaceControl) {
        if std::mem::take(&mut self.hold_until_start) {
            control.paused = true;
        }
        while let Some(cc) = self.server.try_command() {
            match cc.command {
                Command::Start => control.paused = false,
                Command::Stop => control.paused = true,
                Command::SetSpeed(v) => control.speed = v,
                Command::Report => self.spawn_report(cc.client),
            }
        }
    }
}
