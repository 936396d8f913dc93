//! Single-session TCP NDJSON service.

use std::future::Future;
use std::io;
use std::sync::Arc;

use gestr_core::CnnModel;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::task::JoinHandle;

use crate::session::{error_line, Session, SessionConfig};

pub const BUSY_MESSAGE: &str = "busy: another session is active";

/// Accept connections until `shutdown` resolves. While a session is open,
/// further connections get a busy error line and are closed.
pub async fn serve(
    listener: TcpListener,
    model: Arc<CnnModel>,
    config: SessionConfig,
    shutdown: impl Future<Output = ()>,
) -> io::Result<()> {
    tokio::pin!(shutdown);
    let mut active: Option<JoinHandle<()>> = None;
    loop {
        tokio::select! {
            _ = &mut shutdown => break,
            accepted = listener.accept() => {
                let (mut socket, peer) = match accepted {
                    Ok(a) => a,
                    Err(e) => {
                        eprintln!("accept failed: {e}");
                        continue;
                    }
                };
                if active.as_ref().is_some_and(|h| !h.is_finished()) {
                    eprintln!("{peer}: refused, session busy");
                    let line = error_line(BUSY_MESSAGE) + "\n";
                    let _ = socket.write_all(line.as_bytes()).await;
                    let _ = socket.shutdown().await;
                    continue;
                }
                eprintln!("{peer}: session opened");
                let model = Arc::clone(&model);
                let config = config.clone();
                active = Some(tokio::spawn(async move {
                    match run_session(socket, &model, &config).await {
                        Ok(()) => eprintln!("{peer}: session closed"),
                        Err(e) => eprintln!("{peer}: session ended: {e}"),
                    }
                }));
            }
        }
    }
    if let Some(handle) = active {
        handle.abort();
        let _ = handle.await;
    }
    Ok(())
}

async fn run_session(socket: TcpStream, model: &CnnModel, config: &SessionConfig) -> io::Result<()> {
    let (reader, mut writer) = socket.into_split();
    let mut session = Session::new(model, config).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    writer.write_all((session.state_line() + "\n").as_bytes()).await?;
    let mut lines = BufReader::new(reader).lines();
    while let Some(line) = lines.next_line().await? {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let replies = match session.handle_line(line) {
            Ok(replies) => replies,
            Err(e) => vec![error_line(&e.to_string())],
        };
        for reply in replies {
            writer.write_all((reply + "\n").as_bytes()).await?;
        }
    }
    writer.shutdown().await
}
