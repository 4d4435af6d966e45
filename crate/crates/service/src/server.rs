//! JSON-lines transport: one request per line, one response line back, one
//! thread per connection.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;

use crate::protocol::{ErrorCode, ErrorReply, Reply, Request, Response, PROTOCOL_VERSION};
use crate::Service;

/// Longest accepted request line.
const MAX_LINE: usize = 1 << 20;

/// Accepts connections until the listener fails.
pub fn serve(listener: TcpListener, service: Arc<Service>) -> std::io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let svc = Arc::clone(&service);
        thread::spawn(move || {
            let peer = stream.peer_addr().ok();
            if let Err(e) = connection(stream, &svc) {
                log::debug!("connection {peer:?} closed: {e}");
            }
        });
    }
    Ok(())
}

/// Binds `addr` and serves on a background thread. Returns the bound address.
pub fn spawn(addr: &str, service: Arc<Service>) -> std::io::Result<SocketAddr> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    thread::spawn(move || {
        if let Err(e) = serve(listener, service) {
            log::error!("listener stopped: {e}");
        }
    });
    Ok(local)
}

fn connection(stream: TcpStream, service: &Service) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let mut line = String::new();
    loop {
        line.clear();
        let n = Read::by_ref(&mut reader).take(MAX_LINE as u64 + 1).read_line(&mut line)?;
        if n == 0 {
            return Ok(());
        }
        let response = if n > MAX_LINE {
            error(ErrorCode::BadRequest, "request line too long".into())
        } else if line.trim().is_empty() {
            continue;
        } else {
            match serde_json::from_str::<Request>(line.trim_end()) {
                Ok(req) => service.handle(req),
                Err(e) => error(ErrorCode::BadRequest, format!("malformed request: {e}")),
            }
        };
        serde_json::to_writer(&mut writer, &response)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        if n > MAX_LINE {
            return Ok(());
        }
    }
}

fn error(code: ErrorCode, message: String) -> Response {
    Response {
        v: PROTOCOL_VERSION,
        body: Reply::Error(ErrorReply { code, message }),
    }
}
