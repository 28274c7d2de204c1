//! Machine-readable run reports.

use serde::Serialize;
use sha2::{Digest, Sha256};

use polytraverse::network::ReluNetwork;
use polytraverse::traversal::{TraversalConfig, TraversalStats};

pub const SCHEMA: &str = "report_v1";

#[derive(Debug, Clone, Serialize)]
pub struct NetworkInfo {
    pub path: String,
    /// SHA-256 of the network file contents.
    pub fingerprint: String,
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_widths: Vec<usize>,
}

impl NetworkInfo {
    pub fn new(path: &str, bytes: &[u8], net: &ReluNetwork) -> Self {
        NetworkInfo {
            path: path.to_string(),
            fingerprint: fingerprint(bytes),
            input_dim: net.input_dim(),
            output_dim: net.output_dim(),
            hidden_widths: net.widths(),
        }
    }
}

pub fn fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Field order is fixed by declaration order.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema: &'static str,
    pub artifact_version: &'static str,
    pub command: Vec<String>,
    pub network: NetworkInfo,
    pub config: TraversalConfig,
    pub result: serde_json::Value,
    pub stats: TraversalStats,
    pub exit_code: i32,
}

impl RunReport {
    pub fn new(
        command: Vec<String>,
        network: NetworkInfo,
        config: TraversalConfig,
        result: serde_json::Value,
        stats: TraversalStats,
        exit_code: i32,
    ) -> Self {
        RunReport {
            schema: SCHEMA,
            artifact_version: env!("CARGO_PKG_VERSION"),
            command,
            network,
            config,
            result,
            stats,
            exit_code,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_is_sha256() {
        assert_eq!(
            fingerprint(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
