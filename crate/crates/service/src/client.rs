//! Blocking client for scripted sessions and tests.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpStream, ToSocketAddrs};

use base64::Engine;

use crate::protocol::*;
use crate::ServiceError;

pub struct Client {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> std::io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Client {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
        })
    }

    /// Sends one request; error replies come back as `Rejected`.
    pub fn call(&mut self, op: Op) -> Result<Reply, ServiceError> {
        let req = Request { v: PROTOCOL_VERSION, op };
        serde_json::to_writer(&mut self.writer, &req)?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "server closed the connection").into());
        }
        let resp: Response = serde_json::from_str(line.trim_end())?;
        match resp.body {
            Reply::Error(e) => Err(ServiceError::Rejected {
                code: e.code,
                message: e.message,
            }),
            other => Ok(other),
        }
    }

    pub fn create(&mut self, observer_id: &str) -> Result<SessionInfo, ServiceError> {
        match self.call(Op::Create {
            observer_id: observer_id.into(),
        })? {
            Reply::Session(s) => Ok(s),
            other => Err(unexpected(other)),
        }
    }

    pub fn status(&mut self, session_id: &str) -> Result<SessionInfo, ServiceError> {
        match self.call(Op::Status {
            session_id: session_id.into(),
        })? {
            Reply::Session(s) => Ok(s),
            other => Err(unexpected(other)),
        }
    }

    pub fn next_trial(&mut self, session_id: &str) -> Result<TrialDescriptor, ServiceError> {
        match self.call(Op::NextTrial {
            session_id: session_id.into(),
        })? {
            Reply::Trial(t) => Ok(t),
            other => Err(unexpected(other)),
        }
    }

    pub fn submit(&mut self, session_id: &str, trial_id: &str, label: &str, client: Option<ClientReport>) -> Result<FeedbackDirective, ServiceError> {
        match self.call(Op::Submit {
            session_id: session_id.into(),
            trial_id: trial_id.into(),
            response_label: label.into(),
            client,
        })? {
            Reply::Feedback(f) => Ok(f),
            other => Err(unexpected(other)),
        }
    }

    pub fn export(&mut self, session_id: &str, partial: bool) -> Result<ExportReply, ServiceError> {
        match self.call(Op::Export {
            session_id: session_id.into(),
            partial,
        })? {
            Reply::Export(e) => Ok(e),
            other => Err(unexpected(other)),
        }
    }

    /// Decoded PNG bytes of an asset.
    pub fn asset(&mut self, session_id: &str, handle: &str) -> Result<Vec<u8>, ServiceError> {
        match self.call(Op::Asset {
            session_id: session_id.into(),
            handle: handle.into(),
        })? {
            Reply::Asset(a) => base64::engine::general_purpose::STANDARD
                .decode(a.data_base64)
                .map_err(|e| ServiceError::rejected(ErrorCode::Internal, format!("bad asset encoding: {e}"))),
            other => Err(unexpected(other)),
        }
    }
}

fn unexpected(reply: Reply) -> ServiceError {
    ServiceError::rejected(ErrorCode::Internal, format!("unexpected reply {reply:?}"))
}
