//! Reward service: a long-lived process that scores priority orders for an
//! external trainer.
//!
//! The protocol is line-delimited JSON in both directions, one request and
//! one reply per line:
//!
//! | request | reply |
//! |---|---|
//! | `{"type":"load","tasksets":[...]}` | `{"ok":N}` |
//! | `{"type":"eval","id":i,"order":[...]}` | a [`RewardReply`] |
//! | `{"type":"eval_batch","items":[{"id":i,"order":[...]},...]}` | array of [`RewardReply`] |
//! | `{"type":"heuristic","id":i,"name":"DM"}` | `{"order":[...]}` |
//! | `{"type":"gen","cfg":{...},"count":k}` | `{"ids":[...]}` |
//! | `{"type":"shutdown"}` | none; the server exits |
//!
//! Taskset ids are assigned consecutively from 0 in the order tasksets are
//! loaded or generated, and are shared by every connection. A request that
//! cannot be served gets `{"error":"..."}` and the connection stays open.

use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::thread;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{PartialState, Scratch};
use crate::assign::{self, Algorithm};
use crate::gen::{self, GenConfig};
use crate::task::{PriorityOrder, TaskSet};
use crate::{Error, Result};

/// Score of one priority order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardReply {
    pub id: usize,
    /// 1 where the task placed at that decode step meets its deadline.
    pub per_task: Vec<u8>,
    /// `sum(per_task) / N`.
    pub reward: f64,
    pub schedulable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: usize,
    pub order: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    Load { tasksets: Vec<TaskSet> },
    Eval { id: usize, order: Vec<usize> },
    EvalBatch { items: Vec<EvalItem> },
    Heuristic { id: usize, name: String },
    Gen { cfg: GenConfig, count: usize },
    Shutdown,
}

/// Dense reward of `order` on `ts`, folding the order one priority level at
/// a time.
pub fn reward(ts: &TaskSet, id: usize, order: &[usize]) -> Result<RewardReply> {
    let order = PriorityOrder::new(order.to_vec(), ts.len())?;
    let mut state = PartialState::new();
    let mut scratch = Scratch::default();
    for &task in order.iter() {
        state.push(ts, task, &mut scratch)?;
    }
    let per_task: Vec<u8> = state.step_ok().iter().map(|&ok| ok as u8).collect();
    let passed = state.passed();
    let n = ts.len();
    Ok(RewardReply {
        id,
        per_task,
        reward: if n == 0 {
            1.0
        } else {
            passed as f64 / n as f64
        },
        schedulable: passed == n,
    })
}

/// Tasksets shared by all sessions of one server.
#[derive(Clone, Default)]
pub struct Store {
    sets: Arc<RwLock<Vec<Arc<TaskSet>>>>,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.sets.read().expect("store lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends tasksets and returns their ids.
    pub fn insert(&self, sets: Vec<TaskSet>) -> Vec<usize> {
        let mut guard = self.sets.write().expect("store lock poisoned");
        let first = guard.len();
        guard.extend(sets.into_iter().map(Arc::new));
        (first..guard.len()).collect()
    }

    pub fn get(&self, id: usize) -> Result<Arc<TaskSet>> {
        self.sets
            .read()
            .expect("store lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| Error::Request(format!("unknown taskset id {id}")))
    }
}

/// What to send back for one request line.
#[derive(Debug, PartialEq)]
pub enum Outcome {
    Reply(Value),
    Shutdown,
}

fn error_reply(msg: impl ToString) -> Value {
    json!({ "error": msg.to_string() })
}

/// One client connection. Sessions are cheap; all state lives in the
/// [`Store`].
#[derive(Clone)]
pub struct Session {
    store: Store,
}

impl Session {
    pub fn new(store: Store) -> Self {
        Self { store }
    }

    pub fn handle_line(&self, line: &str) -> Outcome {
        let request: Request = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => return Outcome::Reply(error_reply(format!("malformed request: {e}"))),
        };
        match request {
            Request::Shutdown => Outcome::Shutdown,
            other => Outcome::Reply(self.handle(other).unwrap_or_else(error_reply)),
        }
    }

    pub fn handle(&self, request: Request) -> Result<Value> {
        match request {
            Request::Load { tasksets } => {
                for (i, ts) in tasksets.iter().enumerate() {
                    ts.ensure_valid()
                        .map_err(|e| Error::Request(format!("taskset {i}: {e}")))?;
                }
                let n = tasksets.len();
                self.store.insert(tasksets);
                Ok(json!({ "ok": n }))
            }
            Request::Eval { id, order } => {
                let ts = self.store.get(id)?;
                Ok(serde_json::to_value(reward(&ts, id, &order)?)?)
            }
            Request::EvalBatch { items } => {
                let replies = items
                    .par_iter()
                    .enumerate()
                    .map(|(i, item)| {
                        let ts = self.store.get(item.id)?;
                        reward(&ts, item.id, &item.order)
                            .map_err(|e| Error::Request(format!("item {i}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(serde_json::to_value(replies)?)
            }
            Request::Heuristic { id, name } => {
                let ts = self.store.get(id)?;
                let alg: Algorithm = name.parse()?;
                let order = match assign::heuristic_order(&ts, alg) {
                    Some(order) => Some(order),
                    None => assign::opa(&ts).order,
                };
                Ok(json!({ "order": order }))
            }
            Request::Gen { cfg, count } => {
                let sets = gen::gen_many(&cfg, count)?;
                Ok(json!({ "ids": self.store.insert(sets) }))
            }
            Request::Shutdown => Err(Error::Request("shutdown has no reply".into())),
        }
    }

    /// Serves one request stream until EOF or a shutdown request. Returns
    /// `true` when the stream asked for shutdown.
    pub fn serve_stream(&self, reader: impl BufRead, mut writer: impl Write) -> io::Result<bool> {
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match self.handle_line(&line) {
                Outcome::Shutdown => return Ok(true),
                Outcome::Reply(v) => {
                    serde_json::to_writer(&mut writer, &v)?;
                    writer.write_all(b"\n")?;
                    writer.flush()?;
                }
            }
        }
        Ok(false)
    }
}

/// Serves requests from stdin, replying on stdout.
pub fn serve_stdio(store: Store) -> io::Result<()> {
    let stdin = io::stdin();
    let stdout = io::stdout();
    Session::new(store).serve_stream(stdin.lock(), BufWriter::new(stdout.lock()))?;
    Ok(())
}

/// A TCP reward server; each connection runs its own session on its own
/// thread.
pub struct TcpServer {
    listener: TcpListener,
    store: Store,
}

impl TcpServer {
    pub fn bind(addr: impl std::net::ToSocketAddrs, store: Store) -> io::Result<Self> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            store,
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections until some client sends a shutdown request.
    pub fn run(self) -> io::Result<()> {
        let stop = Arc::new(AtomicBool::new(false));
        let addr = self.listener.local_addr()?;
        for stream in self.listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match stream {
                Ok(s) => s,
                Err(_) => continue,
            };
            let session = Session::new(self.store.clone());
            let stop = Arc::clone(&stop);
            thread::spawn(move || {
                let reader = match stream.try_clone() {
                    Ok(s) => BufReader::new(s),
                    Err(_) => return,
                };
                if let Ok(true) = session.serve_stream(reader, BufWriter::new(stream)) {
                    stop.store(true, Ordering::SeqCst);
                    // wake the accept loop
                    let _ = TcpStream::connect(addr);
                }
            });
        }
        Ok(())
    }
}
