use std::io::{self, BufReader};
use std::net::TcpListener;
use std::sync::Arc;

use narrative_core::bridge::conformance::run_conformance;
use narrative_core::bridge::MockServer;

use crate::engine::BridgeArgs;
use crate::error::CliError;
use crate::MockBridgeArgs;

pub fn check(a: BridgeArgs) -> Result<(), CliError> {
    let checks = run_conformance(&a.transport()?)?;
    let mut failed = 0;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        return Err(CliError::Bridge(format!("{failed} of {} conformance checks failed", checks.len())));
    }
    Ok(())
}

pub fn mock(a: MockBridgeArgs) -> Result<(), CliError> {
    let server = MockServer::default();
    let res = match a.port {
        None => server.serve(BufReader::new(io::stdin().lock()), io::stdout().lock()),
        Some(port) => {
            let listener = TcpListener::bind(("127.0.0.1", port)).map_err(|e| CliError::Bridge(e.to_string()))?;
            eprintln!("listening on {}", listener.local_addr().map_err(|e| CliError::Bridge(e.to_string()))?);
            Arc::new(server).serve_tcp(listener)
        }
    };
    res.map_err(|e| CliError::Bridge(e.to_string()))
}
