use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};

use serde_json::{json, Value};

/// The `error` member of a failed response.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{code}: {message}")]
pub struct WireError {
    pub code: String,
    pub message: String,
    pub detail: Value,
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Io(#[from] io::Error),
    #[error("server closed the stream")]
    Closed,
    #[error("protocol fault: {0}")]
    Protocol(String),
    #[error(transparent)]
    Server(#[from] WireError),
}

/// Blocking request/response client over any line stream.
pub struct Client {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    next: u64,
}

impl Client {
    pub fn new(reader: impl BufRead + Send + 'static, writer: impl Write + Send + 'static) -> Self {
        Self {
            reader: Box::new(reader),
            writer: Box::new(writer),
            next: 1,
        }
    }

    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr)?;
        // One small frame per request; waiting to coalesce only adds latency.
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(Self::new(reader, stream))
    }

    /// Sends one frame verbatim and returns the parsed response frame.
    pub fn raw(&mut self, frame: &str) -> Result<Value, ClientError> {
        self.writer.write_all(frame.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(ClientError::Closed);
        }
        serde_json::from_str(&line)
            .map_err(|e| ClientError::Protocol(format!("unparseable response: {e}")))
    }

    pub fn call(&mut self, method: &str, params: Value) -> Result<Value, ClientError> {
        let id = self.next.to_string();
        self.next += 1;
        let resp = self.raw(&json!({"id": id, "method": method, "params": params}).to_string())?;
        if resp.get("id").and_then(Value::as_str) != Some(id.as_str()) {
            return Err(ClientError::Protocol(format!(
                "response id mismatch, wanted {id}: {resp}"
            )));
        }
        match resp.get("ok").and_then(Value::as_bool) {
            Some(true) => Ok(resp.get("result").cloned().unwrap_or(Value::Null)),
            Some(false) => {
                let e = resp.get("error").cloned().unwrap_or(Value::Null);
                Err(WireError {
                    code: e
                        .get("code")
                        .and_then(Value::as_str)
                        .unwrap_or("")
                        .to_string(),
                    message: e
                        .get("message")
                        .and_then(Value::as_str)
                        .unwrap_or("")
                        .to_string(),
                    detail: e.get("detail").cloned().unwrap_or(Value::Null),
                }
                .into())
            }
            None => Err(ClientError::Protocol(format!("response lacks ok: {resp}"))),
        }
    }
}
