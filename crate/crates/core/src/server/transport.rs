use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;

use super::{lock, Server};

/// Serves frames from `reader` until EOF. Blank lines are skipped; every
/// other line gets exactly one response line.
pub fn serve_stream<R: BufRead, W: Write>(
    server: &Server,
    reader: R,
    mut writer: W,
) -> io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut out = server.handle_line(&line);
        out.push('\n');
        writer.write_all(out.as_bytes())?;
        writer.flush()?;
    }
    Ok(())
}

fn serve_connection(server: &Server, stream: TcpStream) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let reader = BufReader::new(stream.try_clone()?);
    serve_stream(server, reader, BufWriter::new(stream))
}

/// Accepts connections forever, handing each to one of `workers` threads.
/// A connection occupies its worker until the peer closes it.
pub fn serve_tcp(server: Arc<Server>, listener: TcpListener, workers: usize) -> io::Result<()> {
    let (tx, rx) = mpsc::channel::<TcpStream>();
    let rx = Arc::new(Mutex::new(rx));
    for i in 0..workers.max(1) {
        let (server, rx) = (Arc::clone(&server), Arc::clone(&rx));
        thread::Builder::new()
            .name(format!("supportsim-worker-{i}"))
            .spawn(move || loop {
                let next = lock(&rx).recv();
                let Ok(stream) = next else { return };
                // A broken connection only ends that connection.
                let _ = serve_connection(&server, stream);
            })?;
    }
    for stream in listener.incoming() {
        match stream {
            Ok(s) => {
                if tx.send(s).is_err() {
                    break;
                }
            }
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(())
}
