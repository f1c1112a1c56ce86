//! Line-delimited JSON over TCP.

use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;

use super::protocol::{handle_line, Request, Response};
use super::AnchorStore;

pub struct StoreServer {
    store: Arc<AnchorStore>,
    snapshot_path: Option<PathBuf>,
    save_lock: Mutex<()>,
}

impl StoreServer {
    pub fn new(store: Arc<AnchorStore>, snapshot_path: Option<PathBuf>) -> Arc<Self> {
        Arc::new(Self {
            store,
            snapshot_path,
            save_lock: Mutex::new(()),
        })
    }

    pub fn store(&self) -> &AnchorStore {
        &self.store
    }

    /// Accepts connections forever, one thread per client.
    pub fn serve(self: &Arc<Self>, listener: TcpListener) -> io::Result<()> {
        for stream in listener.incoming() {
            let stream = stream?;
            let server = Arc::clone(self);
            thread::spawn(move || {
                if let Err(e) = server.serve_connection(stream) {
                    eprintln!("store connection closed: {e}");
                }
            });
        }
        Ok(())
    }

    fn serve_connection(&self, stream: TcpStream) -> io::Result<()> {
        let reader = BufReader::new(stream.try_clone()?);
        let mut writer = BufWriter::new(stream);
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (applied, response) = handle_line(&self.store, &line);
            if applied.as_ref().is_some_and(Request::is_mutation) {
                self.persist()?;
            }
            writer.write_all(response.as_bytes())?;
            writer.write_all(b"\n")?;
            writer.flush()?;
        }
        Ok(())
    }

    fn persist(&self) -> io::Result<()> {
        let Some(path) = &self.snapshot_path else {
            return Ok(());
        };
        // Snapshot is taken under the lock so the last rename holds the newest state.
        let _guard = self.save_lock.lock().unwrap();
        self.store.save(path).map_err(io::Error::other)
    }
}

/// Blocking client for [`StoreServer`].
pub struct StoreClient {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl StoreClient {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
        })
    }

    pub fn call(&mut self, request: &Request) -> io::Result<Response> {
        serde_json::to_writer(&mut self.writer, request)?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                "server closed the connection",
            ));
        }
        serde_json::from_str(&line).map_err(io::Error::other)
    }
}
