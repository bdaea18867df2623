use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::thread;

use super::{handle_line, LocateParams};
use crate::geodb::FeatureDatabase;

/// Thread-per-connection line server over one immutable database.
pub struct Server {
    listener: TcpListener,
    db: Arc<FeatureDatabase>,
    defaults: LocateParams,
}

impl Server {
    pub fn bind<A: ToSocketAddrs>(
        addr: A,
        db: Arc<FeatureDatabase>,
        defaults: LocateParams,
    ) -> io::Result<Self> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            db,
            defaults,
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections until the listener fails.
    pub fn run(self) -> io::Result<()> {
        for stream in self.listener.incoming() {
            let stream = match stream {
                Ok(s) => s,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => {
                    log_line(&format!("accept failed: {e}"));
                    continue;
                }
            };
            let db = Arc::clone(&self.db);
            let defaults = self.defaults;
            thread::Builder::new()
                .name("omniloc-conn".into())
                .spawn(move || {
                    let peer = stream.peer_addr().ok();
                    if let Err(e) = serve_connection(stream, &db, &defaults) {
                        log_line(&format!("connection {peer:?}: {e}"));
                    }
                })?;
        }
        Ok(())
    }

    /// Runs the accept loop on a background thread.
    pub fn spawn(self) -> thread::JoinHandle<io::Result<()>> {
        thread::spawn(move || self.run())
    }
}

fn log_line(msg: &str) {
    eprintln!("omniloc serve: {msg}");
}

fn serve_connection(stream: TcpStream, db: &FeatureDatabase, defaults: &LocateParams) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            return Ok(());
        }
        let line = String::from_utf8_lossy(&buf);
        let line = line.trim_end_matches(['\n', '\r']);
        let mut response = handle_line(db, line, defaults);
        response.push('\n');
        writer.write_all(response.as_bytes())?;
        writer.flush()?;
    }
}
