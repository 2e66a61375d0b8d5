//! TCP front end. Connection threads decode messages and hand them to a
//! single engine thread, which answers them one at a time and advances the
//! running task in between.

use std::collections::HashSet;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::Value;

use crate::service::Service;
use crate::wire::{self, RpcErrorBody, RpcResponse};

const IDLE_WAIT: Duration = Duration::from_millis(20);
const ACCEPT_POLL: Duration = Duration::from_millis(10);

struct Job {
    body: Vec<u8>,
    reply: Sender<Vec<u8>>,
}

pub struct Server {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    streams: Arc<Mutex<Vec<TcpStream>>>,
    accept: Option<JoinHandle<()>>,
    engine: Option<JoinHandle<Service>>,
}

impl Server {
    /// Serves `service` on an already bound listener.
    pub fn spawn(service: Service, listener: TcpListener) -> io::Result<Self> {
        let addr = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let stop = Arc::new(AtomicBool::new(false));
        let streams = Arc::new(Mutex::new(Vec::new()));
        let (tx, rx) = mpsc::channel();
        let slice = service.config().service.slice_ns;
        let engine = {
            let stop = Arc::clone(&stop);
            thread::Builder::new()
                .name("engine".into())
                .spawn(move || engine_loop(service, rx, stop, slice))?
        };
        let accept = {
            let stop = Arc::clone(&stop);
            let streams = Arc::clone(&streams);
            thread::Builder::new()
                .name("accept".into())
                .spawn(move || accept_loop(listener, tx, stop, streams))?
        };
        log::info!("listening on {addr}");
        Ok(Self {
            addr,
            stop,
            streams,
            accept: Some(accept),
            engine: Some(engine),
        })
    }

    pub fn bind(service: Service, addr: &str) -> io::Result<Self> {
        Self::spawn(service, TcpListener::bind(addr)?)
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the engine thread exits (it only does on shutdown).
    pub fn wait(mut self) -> Service {
        let engine = self.engine.take().expect("engine thread");
        engine.join().expect("engine thread panicked")
    }

    /// Stops accepting, drops every connection and hands the service back.
    pub fn shutdown(mut self) -> Service {
        self.stop.store(true, Ordering::SeqCst);
        for s in self.streams.lock().expect("stream list").drain(..) {
            let _ = s.shutdown(std::net::Shutdown::Both);
        }
        if let Some(a) = self.accept.take() {
            let _ = a.join();
        }
        self.engine
            .take()
            .expect("engine thread")
            .join()
            .expect("engine thread panicked")
    }
}

fn engine_loop(
    mut service: Service,
    rx: Receiver<Job>,
    stop: Arc<AtomicBool>,
    slice_ns: u64,
) -> Service {
    while !stop.load(Ordering::SeqCst) {
        let job = if service.is_running() {
            match rx.try_recv() {
                Ok(j) => Some(j),
                Err(TryRecvError::Empty) => None,
                Err(TryRecvError::Disconnected) => break,
            }
        } else {
            match rx.recv_timeout(IDLE_WAIT) {
                Ok(j) => Some(j),
                Err(RecvTimeoutError::Timeout) => None,
                Err(RecvTimeoutError::Disconnected) => break,
            }
        };
        match job {
            Some(j) => {
                let out = service.handle_bytes(&j.body);
                let _ = j.reply.send(out);
            }
            None if service.is_running() => service.idle(slice_ns),
            None => {}
        }
    }
    service
}

fn accept_loop(
    listener: TcpListener,
    tx: Sender<Job>,
    stop: Arc<AtomicBool>,
    streams: Arc<Mutex<Vec<TcpStream>>>,
) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::info!("client {peer} connected");
                if stream.set_nonblocking(false).is_err() {
                    continue;
                }
                if let Ok(c) = stream.try_clone() {
                    let mut list = streams.lock().expect("stream list");
                    list.retain(|s| s.peer_addr().is_ok());
                    list.push(c);
                }
                let tx = tx.clone();
                let _ = thread::Builder::new()
                    .name(format!("conn-{peer}"))
                    .spawn(move || {
                        let closer = stream.try_clone();
                        if let Err(e) = connection(stream, tx) {
                            log::debug!("client {peer}: {e}");
                        }
                        // The server keeps a clone for shutdown, so close explicitly.
                        if let Ok(c) = closer {
                            let _ = c.shutdown(std::net::Shutdown::Both);
                        }
                        log::info!("client {peer} disconnected");
                    });
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
            Err(e) => log::warn!("accept failed: {e}"),
        }
    }
}

fn connection(mut stream: TcpStream, tx: Sender<Job>) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut seen = HashSet::new();
    while let Some(body) = wire::read_message(&mut stream)? {
        let id = serde_json::from_slice::<Value>(&body)
            .ok()
            .and_then(|v| v.get("id")?.as_u64());
        let out = match id {
            Some(id) if !seen.insert(id) => {
                let e = RpcErrorBody {
                    code: "DUPLICATE_ID".into(),
                    message: format!("request id {id} already used"),
                    data: None,
                };
                serde_json::to_vec(&RpcResponse::failure(id, e))
                    .expect("responses always serialize")
            }
            _ => {
                let (reply, rx) = mpsc::channel();
                if tx.send(Job { body, reply }).is_err() {
                    return Ok(());
                }
                match rx.recv() {
                    Ok(out) => out,
                    Err(_) => return Ok(()),
                }
            }
        };
        wire::write_message(&mut stream, &out)?;
    }
    Ok(())
}
