//! WebSocket bridge to the viewer. Connections run on their own threads and
//! talk to the frame loop only through an inbound command channel and
//! per-client outbound queues that drop the oldest frames when full.

use std::collections::VecDeque;
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use tungstenite::{Message, WebSocket};

use crate::error::Result;
use crate::metrics::FrameMetrics;
use crate::protocol::{self, Outbound};
use crate::session::{Command, Session};

#[derive(Debug, Clone)]
pub struct ServeOptions {
    /// Frames per second sent to clients.
    pub frame_rate: f64,
    /// Sleep so that simulated time follows wall time.
    pub realtime: bool,
    /// Steps to run; unbounded when absent.
    pub max_steps: Option<u64>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            frame_rate: 60.0,
            realtime: true,
            max_steps: None,
        }
    }
}

type ClientId = u64;

struct Client {
    id: ClientId,
    queue: Mutex<VecDeque<String>>,
    open: AtomicBool,
    capacity: usize,
}

impl Client {
    fn push(&self, text: String) {
        let mut q = self.queue.lock().unwrap_or_else(|e| e.into_inner());
        while q.len() >= self.capacity.max(1) {
            q.pop_front();
        }
        q.push_back(text);
    }

    fn drain(&self) -> Vec<String> {
        self.queue
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .drain(..)
            .collect()
    }
}

pub struct StreamServer {
    addr: SocketAddr,
    clients: Arc<Mutex<Vec<Arc<Client>>>>,
    inbound: Receiver<(ClientId, Command)>,
    scene: Arc<Mutex<String>>,
    stop: Arc<AtomicBool>,
}

impl StreamServer {
    /// Binds `port` (0 picks a free one) and starts accepting connections.
    /// Each new client first receives `scene`; at most `queue_len` outbound
    /// messages are buffered per client.
    pub fn bind(port: u16, scene: &protocol::Scene, queue_len: usize) -> Result<Self> {
        let listener = TcpListener::bind(("127.0.0.1", port))?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let clients: Arc<Mutex<Vec<Arc<Client>>>> = Arc::default();
        let scene = Arc::new(Mutex::new(protocol::encode(&Outbound::Scene(
            scene.clone(),
        ))?));
        let stop = Arc::new(AtomicBool::new(false));
        let (tx, rx) = channel();
        {
            let clients = clients.clone();
            let scene = scene.clone();
            let stop = stop.clone();
            let next_id = AtomicU64::new(0);
            thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    match listener.accept() {
                        Ok((stream, _)) => {
                            let client = Arc::new(Client {
                                id: next_id.fetch_add(1, Ordering::Relaxed),
                                queue: Mutex::new(VecDeque::new()),
                                open: AtomicBool::new(true),
                                capacity: queue_len,
                            });
                            let first = scene.lock().unwrap_or_else(|e| e.into_inner()).clone();
                            client.push(first);
                            clients
                                .lock()
                                .unwrap_or_else(|e| e.into_inner())
                                .push(client.clone());
                            let tx = tx.clone();
                            let stop = stop.clone();
                            thread::spawn(move || connection(stream, client, tx, stop));
                        }
                        Err(e) if e.kind() == ErrorKind::WouldBlock => {
                            thread::sleep(Duration::from_millis(5))
                        }
                        Err(_) => thread::sleep(Duration::from_millis(5)),
                    }
                }
            });
        }
        Ok(Self {
            addr,
            clients,
            inbound: rx,
            scene,
            stop,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn client_count(&self) -> usize {
        let mut clients = self.clients.lock().unwrap_or_else(|e| e.into_inner());
        clients.retain(|c| c.open.load(Ordering::Relaxed));
        clients.len()
    }

    pub fn set_scene(&self, scene: &protocol::Scene) -> Result<()> {
        *self.scene.lock().unwrap_or_else(|e| e.into_inner()) =
            protocol::encode(&Outbound::Scene(scene.clone()))?;
        Ok(())
    }

    pub fn broadcast(&self, message: &Outbound) -> Result<()> {
        let text = protocol::encode(message)?;
        let mut clients = self.clients.lock().unwrap_or_else(|e| e.into_inner());
        clients.retain(|c| c.open.load(Ordering::Relaxed));
        for c in clients.iter() {
            c.push(text.clone());
        }
        Ok(())
    }

    fn reply(&self, client: ClientId, message: &Outbound) -> Result<()> {
        let text = protocol::encode(message)?;
        let clients = self.clients.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(c) = clients.iter().find(|c| c.id == client) {
            c.push(text);
        }
        Ok(())
    }

    /// Moves received commands into the session one at a time, answering
    /// rejected ones with an error message to their sender.
    pub fn apply_inbound(&self, session: &mut Session) -> Result<()> {
        while let Ok((client, command)) = self.inbound.try_recv() {
            session.submit(command);
            for (_, e) in session.apply_pending() {
                self.reply(
                    client,
                    &Outbound::Error {
                        message: e.to_string(),
                    },
                )?;
            }
        }
        Ok(())
    }

    /// Steps the session, streaming decimated frames, until `max_steps` is
    /// reached. Returns the metrics of every step taken.
    pub fn run(&self, session: &mut Session, options: &ServeOptions) -> Result<Vec<FrameMetrics>> {
        let dt = session.scenario().dt;
        let every = ((1.0 / dt) / options.frame_rate).round().max(1.0) as u64;
        let frame_period = Duration::from_secs_f64(1.0 / options.frame_rate);
        let mut out = Vec::new();
        let mut clock = Instant::now();
        let mut clock_steps = session.steps();
        while options.max_steps.is_none_or(|m| session.steps() < m) {
            self.apply_inbound(session)?;
            match session.advance()? {
                Some(f) => {
                    out.push(f.metrics);
                    if session.steps().is_multiple_of(every) {
                        self.broadcast(&Outbound::Frame(protocol::frame(session)?))?;
                    }
                    if options.realtime {
                        let due = clock
                            + Duration::from_secs_f64((session.steps() - clock_steps) as f64 * dt);
                        if let Some(wait) = due.checked_duration_since(Instant::now()) {
                            thread::sleep(wait);
                        }
                    }
                }
                None => {
                    self.broadcast(&Outbound::Frame(protocol::frame(session)?))?;
                    thread::sleep(frame_period);
                    clock = Instant::now();
                    clock_steps = session.steps();
                }
            }
        }
        Ok(out)
    }
}

impl Drop for StreamServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
    }
}

fn connection(
    stream: TcpStream,
    client: Arc<Client>,
    tx: Sender<(ClientId, Command)>,
    stop: Arc<AtomicBool>,
) {
    let _ = stream.set_nonblocking(false);
    let mut ws = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(_) => {
            client.open.store(false, Ordering::Relaxed);
            return;
        }
    };
    let _ = ws
        .get_mut()
        .set_read_timeout(Some(Duration::from_millis(5)));
    let result = serve_client(&mut ws, &client, &tx, &stop);
    client.open.store(false, Ordering::Relaxed);
    if result.is_ok() {
        let _ = ws.close(None);
        let _ = ws.flush();
    }
}

fn serve_client(
    ws: &mut WebSocket<TcpStream>,
    client: &Client,
    tx: &Sender<(ClientId, Command)>,
    stop: &AtomicBool,
) -> std::result::Result<(), tungstenite::Error> {
    while !stop.load(Ordering::Relaxed) {
        for text in client.drain() {
            ws.send(Message::text(text))?;
        }
        match ws.read() {
            Ok(Message::Text(text)) => match protocol::decode_command(text.as_str()) {
                Ok(cmd) => {
                    if tx.send((client.id, cmd)).is_err() {
                        return Ok(());
                    }
                }
                Err(e) => client.push(
                    protocol::encode(&Outbound::Error {
                        message: e.to_string(),
                    })
                    .unwrap_or_default(),
                ),
            },
            Ok(Message::Close(_)) => return Ok(()),
            Ok(Message::Binary(_)) => client.push(
                protocol::encode(&Outbound::Error {
                    message: "binary messages are not supported".into(),
                })
                .unwrap_or_default(),
            ),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(())
}
